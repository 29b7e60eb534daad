//! The experiments behind the CLI. Each one is a pure function of its
//! configuration that returns a JSON report and the bytes of every output
//! file; writing and checksumming happen in [`crate::runner`].

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::extremes::{
    centering, extremal_process_centered, intermediate_pair_count, level_set, ExtremalProcessSample,
};
use crate::io::{encode_field, encode_points};
use crate::lattice::TorusLattice;
use crate::polchinski::{
    auxiliary_field, backward_flows, mean_remainder_decay, polchinski_residual, quadrature_residual,
    FlowConfig, PotentialEstimator,
};
use crate::rng::StreamKey;
use crate::sinegordon::{
    integrated_autocorrelation_time, mala_chains, observable_suite, MalaConfig, Observables, SGParams,
};
use crate::spectral::{decomposition_identity_check, gff_multiplier, sample_field, Field};
use crate::stats::{
    exceedance_rate_fit, gumbel_tail_fit, inclusion_test, level_set_growth, mean_and_se,
    pooled_correspondence, strip_ratio_test,
};

/// Everything an experiment produces before it touches the file system.
#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub report: Value,
    /// Relative path to contents; written in key order.
    pub files: BTreeMap<String, Vec<u8>>,
    /// Number of draws taken from each labeled stream family.
    pub streams: BTreeMap<String, u64>,
}

/// GFF sample `index` of a run: stream `root(seed) / "gff-sample" / index`.
pub fn gff_field(lattice: TorusLattice, mass_sq: f64, seed: u64, index: usize) -> Result<Field> {
    let mult = gff_multiplier(lattice, mass_sq, 0.0)?;
    sample_field(&mult, StreamKey::root(seed).child("gff-sample", index as u64))
}

pub fn gff_fields(lattice: TorusLattice, mass_sq: f64, seed: u64, count: usize) -> Result<Vec<Field>> {
    let mult = gff_multiplier(lattice, mass_sq, 0.0)?;
    let root = StreamKey::root(seed);
    (0..count)
        .into_par_iter()
        .map(|i| sample_field(&mult, root.child("gff-sample", i as u64)))
        .collect()
}

fn to_json<T: Serialize>(r: Result<T>) -> Value {
    match r {
        Ok(v) => serde_json::to_value(v).expect("reports serialize"),
        Err(e) => json!({ "error": e.kind(), "message": e.to_string() }),
    }
}

/// Mean of a stationary series pooled over chains, with a standard error
/// inflated by the integrated autocorrelation time.
pub fn chain_mean_and_se(chains: &[Vec<f64>]) -> (f64, f64) {
    let all: Vec<f64> = chains.iter().flatten().copied().collect();
    let (mean, naive) = mean_and_se(&all);
    let tau = chains
        .iter()
        .map(|c| integrated_autocorrelation_time(c))
        .sum::<f64>()
        / chains.len() as f64;
    (mean, naive * (2.0 * tau).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableRow {
    pub name: &'static str,
    pub flow_mean: f64,
    pub flow_se: f64,
    pub mala_mean: f64,
    pub mala_se: f64,
    /// `(flow - mala) / sqrt(se_flow^2 + se_mala^2)`.
    pub z_score: f64,
}

/// Observable means of the flow end points against MALA chains.
pub fn compare_observables(flow: &[Observables], chains: &[Vec<Observables>]) -> Vec<ObservableRow> {
    (0..4)
        .map(|i| {
            let f: Vec<f64> = flow.iter().map(|o| o.as_array()[i]).collect();
            let (fm, fs) = mean_and_se(&f);
            let c: Vec<Vec<f64>> = chains
                .iter()
                .map(|ch| ch.iter().map(|o| o.as_array()[i]).collect())
                .collect();
            let (mm, ms) = chain_mean_and_se(&c);
            ObservableRow {
                name: Observables::NAMES[i],
                flow_mean: fm,
                flow_se: fs,
                mala_mean: mm,
                mala_se: ms,
                z_score: (fm - mm) / (fs * fs + ms * ms).sqrt(),
            }
        })
        .collect()
}

fn sg_params(cfg: &ExperimentConfig) -> Result<SGParams> {
    SGParams::new(TorusLattice::new(cfg.n)?, cfg.z, cfg.beta, cfg.mass_sq)
}

fn mala_config(cfg: &ExperimentConfig, total: usize) -> MalaConfig {
    let per_chain = total.div_ceil(cfg.chains);
    MalaConfig::new(cfg.step_size, per_chain, cfg.burn_in, cfg.thin, cfg.seed)
}

pub fn execute(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    match cfg.kind {
        ExperimentKind::GffExtremes => gff_extremes(cfg),
        ExperimentKind::SgExtremes => sg_extremes(cfg),
        ExperimentKind::CouplingXcheck => coupling_xcheck(cfg),
        ExperimentKind::DecompositionAudit => decomposition_audit(cfg),
        ExperimentKind::PolchinskiResidual => residual_experiment(cfg),
        ExperimentKind::LevelSetGrowth => growth_experiment(cfg),
        ExperimentKind::NearMaximaGeometry => geometry_experiment(cfg),
        ExperimentKind::Correspondence => correspondence_experiment(cfg),
    }
}

fn extremes_output(cfg: &ExperimentConfig, fields: &[Field], kind_report: Value) -> Result<ExperimentOutput> {
    let l = TorusLattice::new(cfg.n)?;
    let eps = l.epsilon();
    let m_eps = centering(eps)?;
    let r = cfg.r.lattice_units(eps);
    let samples: Vec<ExtremalProcessSample> = fields
        .par_iter()
        .map(|f| extremal_process_centered(f, r * eps, m_eps))
        .collect();
    let mut out = ExperimentOutput::default();
    for (i, s) in samples.iter().enumerate() {
        out.files
            .insert(format!("points/sample_{i:05}.jsonl"), encode_points(s)?.into_bytes());
    }
    if let Some(f) = fields.first() {
        out.files.insert("fields/sample_00000.fld".into(), encode_field(f));
    }
    let maxima: Vec<f64> = fields.iter().map(|f| f.max() - m_eps).collect();
    let mut csv = String::from("sample,max_centered,points\n");
    for (i, (m, s)) in maxima.iter().zip(&samples).enumerate() {
        csv.push_str(&format!("{i},{m},{}\n", s.points.len()));
    }
    out.files.insert("maxima.csv".into(), csv.into_bytes());
    let heights: Vec<f64> = samples
        .iter()
        .flat_map(|s| s.heights())
        .filter(|&h| h >= cfg.h0)
        .collect();
    out.report = json!({
        "kind": cfg.kind.name(),
        "epsilon": eps,
        "m_eps": m_eps,
        "radius_lattice_units": r,
        "samples": fields.len(),
        "points": samples.iter().map(|s| s.points.len()).sum::<usize>(),
        "exceedance_fit": to_json(exceedance_rate_fit(&heights, cfg.h0)),
        "gumbel_tail_fit": to_json(gumbel_tail_fit(&maxima)),
        "strip_ratio": to_json(strip_ratio_test(&samples, cfg.h0, cfg.h1, cfg.seed)),
        "sampler": kind_report,
    });
    Ok(out)
}

fn gff_extremes(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let fields = gff_fields(TorusLattice::new(cfg.n)?, cfg.mass_sq, cfg.seed, cfg.samples)?;
    let mut out = extremes_output(cfg, &fields, json!({ "name": "spectral" }))?;
    out.streams.insert("gff-sample".into(), cfg.samples as u64);
    Ok(out)
}

fn sg_extremes(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let params = sg_params(cfg)?;
    let mc = mala_config(cfg, cfg.samples);
    let chains = mala_chains(&params, &mc, cfg.chains)?;
    let diagnostics: Vec<_> = chains.iter().map(|c| c.diagnostics.clone()).collect();
    let fields: Vec<Field> = chains.into_iter().flat_map(|c| c.samples).take(cfg.samples).collect();
    let mut out = extremes_output(cfg, &fields, json!({ "name": "mala", "chains": diagnostics }))?;
    let steps = (mc.burn_in + mc.n_samples * mc.thin) as u64 * cfg.chains as u64;
    out.streams.insert("mala-proposal".into(), steps);
    out.streams.insert("mala-accept".into(), steps);
    Ok(out)
}

/// Times at which remainders are recorded on cross-check paths.
pub const REMAINDER_MARKS: [f64; 4] = [0.05, 0.1, 0.2, 0.4];

fn coupling_xcheck(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let params = sg_params(cfg)?;
    let mut flow = FlowConfig::for_params(&params, cfg.flow_dt, cfg.mc_samples);
    flow.s_marks = REMAINDER_MARKS.iter().copied().filter(|&s| s < flow.t_max).collect();
    let paths = backward_flows(&params, &flow, cfg.seed, cfg.samples)?;
    let flow_obs: Vec<Observables> = paths.iter().map(|p| observable_suite(&p.end().sg, params.beta)).collect();
    let mc = mala_config(cfg, cfg.samples * 10);
    let chains = mala_chains(&params, &mc, cfg.chains)?;
    let chain_obs: Vec<Vec<Observables>> = chains
        .iter()
        .map(|c| c.samples.iter().map(|s| observable_suite(s, params.beta)).collect())
        .collect();
    let rows = compare_observables(&flow_obs, &chain_obs);
    let delta: Vec<f64> = paths.iter().map(|p| p.end().delta.sup_norm()).collect();
    let (dm, ds) = mean_and_se(&delta);
    let mut csv = String::from("name,flow_mean,flow_se,mala_mean,mala_se,z_score\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.name, r.flow_mean, r.flow_se, r.mala_mean, r.mala_se, r.z_score
        ));
    }
    let mut out = ExperimentOutput::default();
    out.files.insert("observables.csv".into(), csv.into_bytes());
    out.report = json!({
        "kind": cfg.kind.name(),
        "flow": { "t_max": flow.t_max, "dt": flow.dt, "mc_samples": flow.mc_samples, "paths": paths.len() },
        "observables": rows,
        "difference_field_sup": { "mean": dm, "std_error": ds },
        "remainder_decay": to_json(mean_remainder_decay(&paths)),
        "mala": chains.iter().map(|c| c.diagnostics.clone()).collect::<Vec<_>>(),
    });
    out.streams.insert("flow-path".into(), cfg.samples as u64);
    let steps = (mc.burn_in + mc.n_samples * mc.thin) as u64 * cfg.chains as u64;
    out.streams.insert("mala-proposal".into(), steps);
    out.streams.insert("mala-accept".into(), steps);
    Ok(out)
}

fn decomposition_audit(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let l = TorusLattice::new(cfg.n)?;
    let discrepancy = decomposition_identity_check(l, cfg.mass_sq, cfg.s)?;
    let spectral_variance = gff_multiplier(l, cfg.mass_sq, 0.0)?.variance();
    let fields = gff_fields(l, cfg.mass_sq, cfg.seed, cfg.samples)?;
    let at_origin: Vec<f64> = fields.iter().map(|f| f.get(0)).collect();
    let empirical = at_origin.iter().map(|v| v * v).sum::<f64>() / at_origin.len() as f64;
    let mut out = ExperimentOutput::default();
    out.report = json!({
        "kind": cfg.kind.name(),
        "s": cfg.s,
        "max_mode_discrepancy": discrepancy,
        "spectral_variance": spectral_variance,
        "log_normalized_variance": spectral_variance - (cfg.n as f64).ln() / (2.0 * std::f64::consts::PI),
        "empirical_variance_at_origin": empirical,
        "samples": cfg.samples,
    });
    out.streams.insert("gff-sample".into(), cfg.samples as u64);
    Ok(out)
}

fn residual_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let params = sg_params(cfg)?;
    let t = cfg.s;
    let dt = 0.05 * t;
    let est = PotentialEstimator::new(params, t, cfg.mc_samples)?;
    let fields = gff_fields(params.lattice, cfg.mass_sq, cfg.seed, cfg.samples)?;
    let root = StreamKey::root(cfg.seed);
    let rows: Vec<Value> = fields
        .iter()
        .enumerate()
        .map(|(i, phi)| {
            let seed = root.child("residual", i as u64).fingerprint();
            let mut row = json!({ "configuration": i, "monte_carlo": to_json(polchinski_residual(&est, phi, dt, seed, None)) });
            if cfg.n == 2 {
                row["quadrature"] = to_json(quadrature_residual(&params, t, phi, dt, 40));
            }
            row
        })
        .collect();
    let mut out = ExperimentOutput::default();
    out.report = json!({ "kind": cfg.kind.name(), "t": t, "dt": dt, "residuals": rows });
    out.streams.insert("gff-sample".into(), cfg.samples as u64);
    out.streams.insert("residual".into(), cfg.samples as u64);
    Ok(out)
}

fn growth_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let l = TorusLattice::new(cfg.n)?;
    let m_eps = centering(l.epsilon())?;
    let fields = gff_fields(l, cfg.mass_sq, cfg.seed, cfg.samples)?;
    let growth = level_set_growth(&fields, &cfg.lambda_grid, m_eps)?;
    let mut csv = String::from("lambda,mean_log_size,std_error,nonempty\n");
    for r in &growth.rows {
        csv.push_str(&format!("{},{},{},{}\n", r.lambda, r.mean_log_size, r.std_error, r.nonempty));
    }
    let mut out = ExperimentOutput::default();
    out.files.insert("growth.csv".into(), csv.into_bytes());
    out.report = json!({ "kind": cfg.kind.name(), "m_eps": m_eps, "growth": growth });
    out.streams.insert("gff-sample".into(), cfg.samples as u64);
    Ok(out)
}

fn geometry_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let l = TorusLattice::new(cfg.n)?;
    let eps = l.epsilon();
    let m_eps = centering(eps)?;
    let r = cfg.r.lattice_units(eps);
    let fields = gff_fields(l, cfg.mass_sq, cfg.seed, cfg.samples)?;
    let counts: Vec<u64> = fields
        .par_iter()
        .map(|f| intermediate_pair_count(&level_set(f, cfg.lambda, m_eps), r, eps))
        .collect::<Result<_>>()?;
    let positive = counts.iter().filter(|&&c| c > 0).count();
    let p = positive as f64 / counts.len() as f64;
    let mut csv = String::from("sample,intermediate_pairs\n");
    for (i, c) in counts.iter().enumerate() {
        csv.push_str(&format!("{i},{c}\n"));
    }
    let mut out = ExperimentOutput::default();
    out.files.insert("pairs.csv".into(), csv.into_bytes());
    out.report = json!({
        "kind": cfg.kind.name(),
        "lambda": cfg.lambda,
        "r": r,
        "fraction_with_pairs": p,
        "std_error": (p * (1.0 - p) / counts.len() as f64).sqrt(),
    });
    out.streams.insert("gff-sample".into(), cfg.samples as u64);
    Ok(out)
}

/// `(Psi_s, X_s^GFF)` pairs; pair `i` uses the seed `root(seed) / "aux-sample" / i`.
pub fn auxiliary_pairs(params: &SGParams, s: f64, flow: &FlowConfig, seed: u64, count: usize) -> Result<Vec<(Field, Field)>> {
    let root = StreamKey::root(seed);
    (0..count)
        .into_par_iter()
        .map(|i| {
            let a = auxiliary_field(params, s, flow, root.child("aux-sample", i as u64).fingerprint())?;
            Ok((a.psi, a.x_gff))
        })
        .collect()
}

fn correspondence_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let params = sg_params(cfg)?;
    let eps = params.lattice.epsilon();
    let m_eps = centering(eps)?;
    let r = cfg.r.lattice_units(eps);
    let flow = FlowConfig::for_params(&params, cfg.flow_dt, cfg.mc_samples);
    let pairs = auxiliary_pairs(&params, cfg.s, &flow, cfg.seed, cfg.samples)?;
    let corr = pooled_correspondence(&pairs, r, cfg.lambda, cfg.kappa, m_eps)?;
    let inc = inclusion_test(&pairs, cfg.lambda, m_eps)?;
    if corr.psi_to_gff.sample_size == 0 {
        return Err(Error::InsufficientData("no maxima entered the correspondence test".into()));
    }
    let mut out = ExperimentOutput::default();
    out.report = json!({
        "kind": cfg.kind.name(),
        "s": cfg.s,
        "r": r,
        "lambda": cfg.lambda,
        "kappa": cfg.kappa,
        "correspondence": corr,
        "inclusion": inc,
    });
    out.streams.insert("aux-sample".into(), cfg.samples as u64);
    Ok(out)
}
