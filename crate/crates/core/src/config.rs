//! Declarative `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "SGEXTREMES_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    GffExtremes,
    SgExtremes,
    CouplingXcheck,
    DecompositionAudit,
    PolchinskiResidual,
    LevelSetGrowth,
    NearMaximaGeometry,
    Correspondence,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        Self::GffExtremes,
        Self::SgExtremes,
        Self::CouplingXcheck,
        Self::DecompositionAudit,
        Self::PolchinskiResidual,
        Self::LevelSetGrowth,
        Self::NearMaximaGeometry,
        Self::Correspondence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::GffExtremes => "gff-extremes",
            Self::SgExtremes => "sg-extremes",
            Self::CouplingXcheck => "coupling-xcheck",
            Self::DecompositionAudit => "decomposition-audit",
            Self::PolchinskiResidual => "polchinski-residual",
            Self::LevelSetGrowth => "level-set-growth",
            Self::NearMaximaGeometry => "near-maxima-geometry",
            Self::Correspondence => "correspondence",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment kind {s:?}")))
    }
}

/// Extraction radius in lattice units: `r eps` is the ball radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RadiusPolicy {
    /// `r = log^2(1/eps)`, i.e. radius `eps log^2(1/eps)`.
    Default,
    Explicit(f64),
}

impl RadiusPolicy {
    pub fn lattice_units(self, epsilon: f64) -> f64 {
        match self {
            Self::Default => (1.0 / epsilon).ln().powi(2),
            Self::Explicit(r) => r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub n: usize,
    pub mass_sq: f64,
    pub z: f64,
    pub beta: f64,
    /// Scale parameter: auxiliary-field scale, or the time of the residual.
    pub s: f64,
    pub r: RadiusPolicy,
    pub samples: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Level-set depth.
    pub lambda: f64,
    pub lambda_grid: Vec<f64>,
    pub kappa: f64,
    /// Exceedance threshold and strip bounds, in centered heights.
    pub h0: f64,
    pub h1: f64,
    /// Relative time step and smoothing draws of the backward flow.
    pub flow_dt: f64,
    pub mc_samples: usize,
    pub chains: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub step_size: f64,
}

const KEYS: [&str; 21] = [
    "kind", "n", "mass_sq", "z", "beta", "s", "r", "samples", "seed", "output_dir", "lambda",
    "lambda_grid", "kappa", "h0", "h1", "flow_dt", "mc_samples", "chains", "burn_in", "thin",
    "step_size",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse {key} = {value:?}")))
}

impl ExperimentConfig {
    /// Parses `key = value` lines (`#` starts a comment), applies overrides in
    /// order, then the output-directory environment override, and validates.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let k = k.trim();
            if map.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {k}", i + 1)));
            }
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
            map.insert("output_dir".into(), dir);
        }
        Self::from_map(&map)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, overrides)
    }

    fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key {k:?}")));
        }
        let get = |k: &str| map.get(k).map(String::as_str);
        let kind: ExperimentKind = get("kind")
            .ok_or_else(|| Error::Config("missing key kind".into()))?
            .parse()?;
        let seed = get("seed").ok_or_else(|| Error::Config("missing key seed".into()))?;
        let f = |k: &str, d: f64| get(k).map_or(Ok(d), |v| parse(k, v));
        let u = |k: &str, d: usize| get(k).map_or(Ok(d), |v| parse(k, v));
        let r = match get("r") {
            None | Some("default") => RadiusPolicy::Default,
            Some(v) => RadiusPolicy::Explicit(parse("r", v)?),
        };
        let lambda_grid = match get("lambda_grid") {
            None => vec![1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0],
            Some(v) => v
                .split(',')
                .map(|x| parse("lambda_grid", x.trim()))
                .collect::<Result<_>>()?,
        };
        let cfg = Self {
            kind,
            n: u("n", 64)?,
            mass_sq: f("mass_sq", 1.0)?,
            z: f("z", 0.0)?,
            beta: f("beta", PI)?,
            s: f("s", 0.1)?,
            r,
            samples: u("samples", 10)?,
            seed: parse("seed", seed)?,
            output_dir: PathBuf::from(get("output_dir").unwrap_or("out")),
            lambda: f("lambda", 3.0)?,
            lambda_grid,
            kappa: f("kappa", 0.5)?,
            h0: f("h0", -1.0)?,
            h1: f("h1", -0.8)?,
            flow_dt: f("flow_dt", 0.02)?,
            mc_samples: u("mc_samples", 32)?,
            chains: u("chains", 4)?,
            burn_in: u("burn_in", 1000)?,
            thin: u("thin", 10)?,
            step_size: f("step_size", 0.5)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.n.is_power_of_two() && (2..=1024).contains(&self.n)) {
            return bad(format!("n = {} must be a power of two in [2, 1024]", self.n));
        }
        if !(self.beta > 0.0 && self.beta < 6.0 * PI) {
            return bad("beta out of range (0, 6π)".into());
        }
        if !(self.mass_sq > 0.0 && self.mass_sq.is_finite()) {
            return bad("mass_sq must be positive".into());
        }
        if !self.z.is_finite() {
            return bad("z must be finite".into());
        }
        if !(self.s > 0.0) {
            return bad("s must be positive".into());
        }
        if let RadiusPolicy::Explicit(r) = self.r {
            if !(r >= 1.0) {
                return bad(format!("r = {r} must be at least 1 lattice unit"));
            }
        }
        if self.samples == 0 || self.chains == 0 || self.thin == 0 || self.mc_samples < 2 {
            return bad("samples, chains, thin must be positive and mc_samples >= 2".into());
        }
        if !(self.flow_dt > 0.0 && self.flow_dt < 1.0) {
            return bad("flow_dt must lie in (0, 1)".into());
        }
        if !(self.h1 > self.h0) {
            return bad("need h0 < h1".into());
        }
        if !(self.kappa > 0.0 && self.step_size > 0.0) {
            return bad("kappa and step_size must be positive".into());
        }
        Ok(())
    }

    /// The complete configuration as `key = value` pairs, echoed into the
    /// manifest.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let r = match self.r {
            RadiusPolicy::Default => "default".to_string(),
            RadiusPolicy::Explicit(r) => r.to_string(),
        };
        let grid: Vec<String> = self.lambda_grid.iter().map(f64::to_string).collect();
        [
            ("kind", self.kind.to_string()),
            ("n", self.n.to_string()),
            ("mass_sq", self.mass_sq.to_string()),
            ("z", self.z.to_string()),
            ("beta", self.beta.to_string()),
            ("s", self.s.to_string()),
            ("r", r),
            ("samples", self.samples.to_string()),
            ("seed", self.seed.to_string()),
            ("output_dir", self.output_dir.display().to_string()),
            ("lambda", self.lambda.to_string()),
            ("lambda_grid", grid.join(",")),
            ("kappa", self.kappa.to_string()),
            ("h0", self.h0.to_string()),
            ("h1", self.h1.to_string()),
            ("flow_dt", self.flow_dt.to_string()),
            ("mc_samples", self.mc_samples.to_string()),
            ("chains", self.chains.to_string()),
            ("burn_in", self.burn_in.to_string()),
            ("thin", self.thin.to_string()),
            ("step_size", self.step_size.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// Inverse of [`Self::echo`].
    pub fn from_echo(echo: &BTreeMap<String, String>) -> Result<Self> {
        Self::from_map(echo)
    }
}
