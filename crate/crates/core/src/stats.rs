//! Estimators and tests that turn limit statements about extremal processes
//! into finite-sample checks.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::extremes::{
    argmax_map, level_set, local_maxima, ExtremalPoint, ExtremalProcessSample, ALPHA,
};
use crate::rng::StreamKey;
use crate::spectral::Field;

/// Result of an estimator or test, serializable as JSON or one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub estimate: f64,
    pub std_error: f64,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub sample_size: usize,
    /// Named auxiliary numbers (theoretical values, companion tests).
    #[serde(default)]
    pub extras: BTreeMap<String, f64>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl FitReport {
    pub fn new(estimate: f64, std_error: f64, sample_size: usize) -> Self {
        Self {
            estimate,
            std_error,
            statistic: None,
            p_value: None,
            sample_size,
            extras: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn with_extra(mut self, key: &str, value: f64) -> Self {
        self.extras.insert(key.to_string(), value);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub const CSV_HEADER: &'static str = "name,estimate,std_error,statistic,p_value,sample_size";

    pub fn csv_row(&self, name: &str) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{name},{},{},{},{},{}",
            self.estimate,
            self.std_error,
            opt(self.statistic),
            opt(self.p_value),
            self.sample_size
        )
    }
}

/// Mean and standard error of the mean.
pub fn mean_and_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic p-value for a KS distance `d` at effective size `n`, with
/// Stephens' small-sample correction.
fn ks_p_value(d: f64, n: f64) -> f64 {
    let s = n.sqrt();
    kolmogorov_survival((s + 0.12 + 0.11 / s) * d)
}

/// One-sample Kolmogorov-Smirnov distance and p-value against `cdf`.
pub fn ks_one_sample(data: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut x = data.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    (d, ks_p_value(d, n))
}

/// Two-sample Kolmogorov-Smirnov distance and p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    (d, ks_p_value(d, na * nb / (na + nb)))
}

/// Test functions `f : [0,1)^2 x R -> [0, inf)` that vanish for `h < h0`.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    /// `amplitude * 1{x in box} * bump(h)` with a smooth bump supported on
    /// `(h0, h1)`.
    BoxBump {
        lo: [f64; 2],
        hi: [f64; 2],
        h0: f64,
        h1: f64,
        amplitude: f64,
    },
    /// `-log(1 - g(x)) 1{h > h0}` with `g = weight * 1{x in box}`,
    /// `0 <= weight < 1`; its Laplace functional generates the law of the
    /// random intensity.
    Step {
        lo: [f64; 2],
        hi: [f64; 2],
        weight: f64,
        h0: f64,
    },
    /// `f(x, h + phi(x))`.
    Translated { inner: Box<TestFunction>, shift: Field },
}

fn in_box(x: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> bool {
    (0..2).all(|i| x[i] >= lo[i] && x[i] < hi[i])
}

impl TestFunction {
    pub fn box_bump(lo: [f64; 2], hi: [f64; 2], h0: f64, h1: f64, amplitude: f64) -> Result<Self> {
        if !(h1 > h0 && amplitude >= 0.0) {
            return Err(invalid("box_bump needs h1 > h0 and amplitude >= 0"));
        }
        Ok(Self::BoxBump { lo, hi, h0, h1, amplitude })
    }

    pub fn step(lo: [f64; 2], hi: [f64; 2], weight: f64, h0: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&weight) {
            return Err(invalid("step weight must lie in [0, 1)"));
        }
        Ok(Self::Step { lo, hi, weight, h0 })
    }

    pub fn eval(&self, x: [f64; 2], h: f64) -> f64 {
        match self {
            Self::BoxBump { lo, hi, h0, h1, amplitude } => {
                if !in_box(x, *lo, *hi) || h <= *h0 || h >= *h1 {
                    return 0.0;
                }
                let u = (2.0 * h - h0 - h1) / (h1 - h0);
                amplitude * (1.0 - 1.0 / (1.0 - u * u)).exp()
            }
            Self::Step { lo, hi, weight, h0 } => {
                if h > *h0 && in_box(x, *lo, *hi) {
                    -(1.0 - weight).ln()
                } else {
                    0.0
                }
            }
            Self::Translated { inner, shift } => {
                let l = shift.lattice();
                let n = l.n() as f64;
                let i = ((x[0] * n).round() as usize) % l.n();
                let j = ((x[1] * n).round() as usize) % l.n();
                inner.eval(x, h + shift.get(l.index(i, j)))
            }
        }
    }

    /// Height below which the function vanishes. For a translated function
    /// this is the inner threshold lowered by the largest shift.
    pub fn support_threshold(&self) -> f64 {
        match self {
            Self::BoxBump { h0, .. } | Self::Step { h0, .. } => *h0,
            Self::Translated { inner, shift } => inner.support_threshold() - shift.max(),
        }
    }

    /// Checks non-negativity everywhere and vanishing below the threshold
    /// on a probe grid.
    pub fn check_on_grid(&self, heights: &[f64], points_per_side: usize) -> bool {
        let t = self.support_threshold();
        let m = points_per_side.max(1);
        (0..m * m).all(|k| {
            let x = [(k / m) as f64 / m as f64, (k % m) as f64 / m as f64];
            heights.iter().all(|&h| {
                let v = self.eval(x, h);
                v >= 0.0 && v.is_finite() && (h >= t || v == 0.0)
            })
        })
    }
}

/// `f o tau_phi`.
pub fn translate_test_function(f: &TestFunction, phi: &Field) -> TestFunction {
    TestFunction::Translated {
        inner: Box::new(f.clone()),
        shift: phi.clone(),
    }
}

/// `<eta, f> = sum over points of f(x, h)`.
pub fn pairing(sample: &ExtremalProcessSample, f: &TestFunction) -> f64 {
    sample.points.iter().map(|p| f.eval(p.x, p.h)).sum()
}

/// Empirical mean of `exp(-<eta, f>)` with its standard error.
pub fn laplace_functional(samples: &[ExtremalProcessSample], f: &TestFunction) -> Result<FitReport> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("laplace_functional needs a sample".into()));
    }
    let values: Vec<f64> = samples.iter().map(|s| (-pairing(s, f)).exp()).collect();
    let (mean, se) = mean_and_se(&values);
    Ok(FitReport::new(mean, se, samples.len()))
}

/// Exponential rate of the exceedances `h - h0`: MLE `1 / mean(h - h0)`
/// with standard error `alpha / sqrt(N)`, and KS tests against the fitted
/// and the theoretical exponential law.
pub fn exceedance_rate_fit(heights: &[f64], h0: f64) -> Result<FitReport> {
    if heights.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "{} exceedances, at least 10 needed",
            heights.len()
        )));
    }
    if let Some(h) = heights.iter().find(|&&h| h < h0) {
        return Err(invalid(format!("height {h} below threshold {h0}")));
    }
    let excess: Vec<f64> = heights.iter().map(|h| h - h0).collect();
    let n = excess.len() as f64;
    let mean = excess.iter().sum::<f64>() / n;
    if !(mean > 0.0) {
        return Err(Error::Numerical("all exceedances are zero".into()));
    }
    let alpha = 1.0 / mean;
    let (d, p) = ks_one_sample(&excess, |x| 1.0 - (-alpha * x).exp());
    let (dt, pt) = ks_one_sample(&excess, |x| 1.0 - (-ALPHA * x).exp());
    let mut report = FitReport::new(alpha, alpha / n.sqrt(), excess.len())
        .with_extra("ks_theoretical_statistic", dt)
        .with_extra("ks_theoretical_p_value", pt)
        .with_extra("alpha_theoretical", ALPHA);
    report.statistic = Some(d);
    report.p_value = Some(p);
    report
        .notes
        .push("KS p-value against the fitted rate ignores estimation (Lilliefors); conservative".into());
    Ok(report)
}

/// Lower and upper empirical-CDF levels of the tail regression window.
pub const GUMBEL_WINDOW: (f64, f64) = (0.8, 0.99);

/// Slope of `log(-log F(x))` against `x` over the upper quantile window,
/// with `F(x_(i)) = i / (N + 1)`. A Gumbel law with rate `alpha` has slope
/// `-alpha` whatever its location.
pub fn gumbel_tail_fit(max_values: &[f64]) -> Result<FitReport> {
    if max_values.len() < 100 {
        return Err(Error::InsufficientData(format!(
            "{} maxima, at least 100 needed",
            max_values.len()
        )));
    }
    let mut x = max_values.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let (lo, hi) = GUMBEL_WINDOW;
    let pts: Vec<(f64, f64)> = x
        .iter()
        .enumerate()
        .filter_map(|(i, &v)| {
            let f = (i + 1) as f64 / (n + 1.0);
            (f >= lo && f <= hi).then(|| (v, (-f.ln()).ln()))
        })
        .collect();
    let distinct = {
        let mut xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        xs.dedup();
        xs.len()
    };
    if distinct < 3 {
        return Err(Error::InsufficientData(
            "ties collapse the tail regression window".into(),
        ));
    }
    let (slope, se) = least_squares(&pts);
    Ok(FitReport::new(slope, se, max_values.len()).with_extra("window_points", pts.len() as f64))
}

/// Ordinary least-squares slope and its standard error.
pub fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    if pts.len() < 3 {
        return (slope, 0.0);
    }
    let rss: f64 = pts
        .iter()
        .map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2))
        .sum();
    (slope, (rss / (n - 2.0) / sxx).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub lambda: f64,
    /// Mean of `log |Gamma(lambda)|` over fields with a non-empty level set.
    pub mean_log_size: f64,
    pub std_error: f64,
    pub nonempty: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetGrowth {
    /// Least-squares slope of `mean log |Gamma|` in `lambda`.
    pub report: FitReport,
    pub rows: Vec<GrowthRow>,
    pub dropped: Vec<f64>,
}

/// Growth of `log |Gamma(lambda)|` along an increasing `lambda` grid.
pub fn level_set_growth(fields: &[Field], lambda_grid: &[f64], m_eps: f64) -> Result<LevelSetGrowth> {
    let sizes: Vec<Vec<usize>> = fields
        .par_iter()
        .map(|f| lambda_grid.iter().map(|&l| level_set(f, l, m_eps).len()).collect())
        .collect();
    level_set_growth_from_sizes(&sizes, lambda_grid)
}

/// [`level_set_growth`] from precomputed sizes: `sizes[i][j]` is
/// `|Gamma(lambda_grid[j])|` for field `i`.
pub fn level_set_growth_from_sizes(sizes: &[Vec<usize>], lambda_grid: &[f64]) -> Result<LevelSetGrowth> {
    if sizes.len() < 20 {
        return Err(Error::InsufficientData(format!(
            "{} fields, at least 20 needed",
            sizes.len()
        )));
    }
    if lambda_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("lambda grid must be increasing"));
    }
    if sizes.iter().any(|s| s.len() != lambda_grid.len()) {
        return Err(invalid("one size per grid point is required"));
    }
    let mut rows = Vec::new();
    let mut dropped = Vec::new();
    for (j, &lambda) in lambda_grid.iter().enumerate() {
        let logs: Vec<f64> = sizes
            .iter()
            .map(|s| s[j])
            .filter(|&k| k > 0)
            .map(|k| (k as f64).ln())
            .collect();
        if logs.is_empty() {
            dropped.push(lambda);
            continue;
        }
        let (mean, se) = mean_and_se(&logs);
        rows.push(GrowthRow {
            lambda,
            mean_log_size: mean,
            std_error: se,
            nonempty: logs.len(),
        });
    }
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "fewer than two non-empty levels; dropped {dropped:?}"
        )));
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.lambda, r.mean_log_size)).collect();
    let (slope, se) = least_squares(&pts);
    let mut report = FitReport::new(slope, se, sizes.len());
    for d in &dropped {
        report.notes.push(format!("lambda = {d} dropped: every level set empty"));
    }
    Ok(LevelSetGrowth {
        report,
        rows,
        dropped,
    })
}

/// `mu(A) = eps^2 sum_{x in A} ((2/sqrt(2 pi)) log(1/eps) - phi(x)) exp(-2 log(1/eps) + sqrt(8 pi) phi(x))`.
pub fn chaos_measure(field: &Field, region: &[usize]) -> f64 {
    let eps = field.lattice().epsilon();
    let l = (1.0 / eps).ln();
    let c = 2.0 / (2.0 * PI).sqrt() * l;
    eps * eps
        * region
            .iter()
            .map(|&x| {
                let v = field.get(x);
                (c - v) * (-2.0 * l + ALPHA * v).exp()
            })
            .sum::<f64>()
}

/// Counts behind one direction of the correspondence between the maxima of
/// two fields.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrespondenceCounts {
    pub matched: usize,
    pub total: usize,
}

impl CorrespondenceCounts {
    pub fn merge(self, other: Self) -> Self {
        Self {
            matched: self.matched + other.matched,
            total: self.total + other.total,
        }
    }

    pub fn report(&self) -> FitReport {
        if self.total == 0 {
            let mut r = FitReport::new(f64::NAN, 0.0, 0);
            r.notes.push("no local maxima in the level-set intersection".into());
            return r;
        }
        let p = self.matched as f64 / self.total as f64;
        FitReport::new(p, (p * (1.0 - p) / self.total as f64).sqrt(), self.total)
    }
}

/// For `x` in `Theta_{r eps}(a) cap Gamma^a(lambda) cap Gamma^b(lambda)`,
/// checks that `Pi(x) = argmax_{ball(x, 2 r eps)} b` is an `r eps`-local
/// maximum of `b` within `r eps / 2` of `x`, and that
/// `0 <= a(x) - a(Pi(x)) <= kappa`.
pub fn correspondence_counts(
    a: &Field,
    b: &Field,
    r: f64,
    lambda: f64,
    kappa: f64,
    m_eps: f64,
) -> Result<CorrespondenceCounts> {
    if a.lattice() != b.lattice() {
        return Err(Error::LatticeMismatch {
            expected: a.lattice().n(),
            found: b.lattice().n(),
        });
    }
    if !(r >= 1.0 && kappa > 0.0) {
        return Err(invalid("correspondence needs r >= 1 and kappa > 0"));
    }
    let l = a.lattice();
    let radius = r * l.epsilon();
    let threshold = m_eps - lambda;
    let maxima_b = local_maxima(b, radius);
    let mut counts = CorrespondenceCounts::default();
    for x in local_maxima(a, radius) {
        if a.get(x) < threshold || b.get(x) < threshold {
            continue;
        }
        counts.total += 1;
        let p = argmax_map(b, x, 2.0 * radius);
        let gap = a.get(x) - a.get(p);
        if maxima_b.binary_search(&p).is_ok()
            && l.site_distance(p, x) <= radius / 2.0
            && (0.0..=kappa).contains(&gap)
        {
            counts.matched += 1;
        }
    }
    Ok(counts)
}

/// Both directions of the maxima correspondence between `Psi_s` and
/// `X_s^GFF`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceReport {
    /// Maxima of `Psi_s` mapped into maxima of `X_s^GFF`.
    pub psi_to_gff: FitReport,
    /// Maxima of `X_s^GFF` mapped into maxima of `Psi_s`.
    pub gff_to_psi: FitReport,
}

pub fn correspondence_fraction(
    psi: &Field,
    x_gff: &Field,
    r: f64,
    lambda: f64,
    kappa: f64,
    m_eps: f64,
) -> Result<CorrespondenceReport> {
    pooled_correspondence(&[(psi.clone(), x_gff.clone())], r, lambda, kappa, m_eps)
}

/// Correspondence counts pooled over independent `(Psi_s, X_s^GFF)` pairs.
pub fn pooled_correspondence(
    pairs: &[(Field, Field)],
    r: f64,
    lambda: f64,
    kappa: f64,
    m_eps: f64,
) -> Result<CorrespondenceReport> {
    let counts: Vec<(CorrespondenceCounts, CorrespondenceCounts)> = pairs
        .par_iter()
        .map(|(psi, gff)| {
            Ok((
                correspondence_counts(psi, gff, r, lambda, kappa, m_eps)?,
                correspondence_counts(gff, psi, r, lambda, kappa, m_eps)?,
            ))
        })
        .collect::<Result<_>>()?;
    let (fwd, bwd) = counts
        .into_iter()
        .fold(Default::default(), |(f, b): (CorrespondenceCounts, CorrespondenceCounts), (x, y)| {
            (f.merge(x), b.merge(y))
        });
    Ok(CorrespondenceReport {
        psi_to_gff: fwd.report(),
        gff_to_psi: bwd.report(),
    })
}

/// Number of bootstrap replicates used by [`strip_ratio_test`].
pub const BOOTSTRAP_REPLICATES: usize = 1000;

/// Ratio of mean counts `N[h0, h1) / N[h1, inf)` with a bootstrap standard
/// error over samples. Under an intensity `Z(dx) e^{-alpha h} dh` the
/// population value is `e^{alpha (h1 - h0)} - 1` for any law of `Z`.
pub fn strip_ratio_test(
    samples: &[ExtremalProcessSample],
    h0: f64,
    h1: f64,
    seed: u64,
) -> Result<FitReport> {
    if !(h1 > h0) {
        return Err(invalid("strip ratio needs h0 < h1"));
    }
    let counts: Vec<(usize, usize)> = samples
        .iter()
        .map(|s| (s.count_in(h0, h1), s.count_in(h1, f64::INFINITY)))
        .collect();
    let ratio = |idx: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let (lo, hi) = idx.fold((0usize, 0usize), |(a, b), i| (a + counts[i].0, b + counts[i].1));
        (hi > 0).then(|| lo as f64 / hi as f64)
    };
    let estimate = ratio(&mut (0..counts.len()))
        .ok_or_else(|| Error::InsufficientData("no points in the upper strip".into()))?;
    let root = StreamKey::root(seed);
    let n = counts.len();
    let boot: Vec<Option<f64>> = (0..BOOTSTRAP_REPLICATES)
        .into_par_iter()
        .map(|b| {
            let mut rng = root.child("bootstrap", b as u64).rng();
            ratio(&mut (0..n).map(|_| rng.gen_range(0..n)))
        })
        .collect();
    let valid: Vec<f64> = boot.iter().flatten().copied().collect();
    let mean = valid.iter().sum::<f64>() / valid.len() as f64;
    let sd = (valid.iter().map(|r| (r - mean).powi(2)).sum::<f64>()
        / (valid.len().max(2) - 1) as f64)
        .sqrt();
    let mut report = FitReport::new(estimate, sd, n)
        .with_extra("theoretical", (ALPHA * (h1 - h0)).exp() - 1.0)
        .with_extra("lower_count", counts.iter().map(|c| c.0).sum::<usize>() as f64)
        .with_extra("upper_count", counts.iter().map(|c| c.1).sum::<usize>() as f64);
    let skipped = BOOTSTRAP_REPLICATES - valid.len();
    if skipped > 0 {
        report
            .notes
            .push(format!("{skipped} bootstrap replicates had an empty upper strip"));
    }
    Ok(report)
}

/// Probabilities of `Gamma^GFF(lambda) subset Gamma^Psi(2 lambda)` and
/// `Gamma^Psi(lambda) subset Gamma^GFF(2 lambda)` over paired samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    pub lambda: f64,
    pub gff_in_psi: FitReport,
    pub psi_in_gff: FitReport,
}

pub fn inclusion_test(pairs: &[(Field, Field)], lambda: f64, m_eps: f64) -> Result<InclusionReport> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData("inclusion test needs samples".into()));
    }
    let hits: Vec<(bool, bool)> = pairs
        .par_iter()
        .map(|(psi, gff)| {
            let g1 = level_set(gff, lambda, m_eps);
            let g2 = level_set(gff, 2.0 * lambda, m_eps);
            let p1 = level_set(psi, lambda, m_eps);
            let p2 = level_set(psi, 2.0 * lambda, m_eps);
            (g1.is_subset_of(&p2), p1.is_subset_of(&g2))
        })
        .collect();
    let prob = |k: usize| {
        let n = hits.len();
        let p = k as f64 / n as f64;
        FitReport::new(p, (p * (1.0 - p) / n as f64).sqrt(), n)
    };
    Ok(InclusionReport {
        lambda,
        gff_in_psi: prob(hits.iter().filter(|h| h.0).count()),
        psi_in_gff: prob(hits.iter().filter(|h| h.1).count()),
    })
}

/// A Poisson process on `[0,1)^2 x [h_min, inf)` with intensity
/// `total dx e^{-alpha (h - h_min)} alpha dh`: `Poisson(total)` points,
/// uniform locations, heights `h_min + Exp(alpha)`.
pub fn synthetic_ppp(total: f64, alpha: f64, h_min: f64, key: StreamKey) -> Result<ExtremalProcessSample> {
    if !(total >= 0.0 && alpha > 0.0) {
        return Err(invalid("synthetic_ppp needs total >= 0 and alpha > 0"));
    }
    let mut rng = key.rng();
    let count = if total > 0.0 {
        Poisson::new(total)
            .map_err(|e| invalid(e.to_string()))?
            .sample(&mut rng) as usize
    } else {
        0
    };
    let exp = Exp::new(alpha).map_err(|e| invalid(e.to_string()))?;
    let points = (0..count)
        .map(|_| ExtremalPoint {
            x: [rng.gen(), rng.gen()],
            h: h_min + exp.sample(&mut rng),
        })
        .collect();
    Ok(ExtremalProcessSample {
        points,
        r: 0.0,
        epsilon: 0.0,
        m_eps: 0.0,
    })
}

/// A Cox process: the total intensity is drawn from `z_law`, then a
/// [`synthetic_ppp`] is drawn given it.
pub fn synthetic_cox(
    z_law: impl Fn(&mut rand_chacha::ChaCha8Rng) -> f64,
    alpha: f64,
    h_min: f64,
    key: StreamKey,
) -> Result<ExtremalProcessSample> {
    let total = z_law(&mut key.child("cox-intensity", 0).rng());
    synthetic_ppp(total, alpha, h_min, key.child("cox-points", 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::TorusLattice;
    use rand_distr::StandardNormal;

    fn lat(n: usize) -> TorusLattice {
        TorusLattice::new(n).unwrap()
    }

    #[test]
    fn kolmogorov_values() {
        // Reference values of the Kolmogorov survival function.
        assert!((kolmogorov_survival(1.0) - 0.26999967).abs() < 1e-6);
        assert!((kolmogorov_survival(1.36) - 0.04946).abs() < 1e-4);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
    }

    #[test]
    fn ks_on_uniform_data() {
        let mut rng = StreamKey::root(1).rng();
        let x: Vec<f64> = (0..2000).map(|_| rng.gen()).collect();
        let (d, p) = ks_one_sample(&x, |v| v.clamp(0.0, 1.0));
        assert!(d < 0.05 && p > 0.01, "{d} {p}");
        let (_, p) = ks_one_sample(&x, |v| v.clamp(0.0, 1.0).powi(2));
        assert!(p < 1e-6);
        let y: Vec<f64> = (0..2000).map(|_| rng.gen()).collect();
        let (_, p) = ks_two_sample(&x, &y);
        assert!(p > 0.01);
        let z: Vec<f64> = y.iter().map(|v| v + 0.2).collect();
        assert!(ks_two_sample(&x, &z).1 < 1e-6);
    }

    #[test]
    fn exceedance_examples() {
        let mut h = vec![0.1, 0.3, 0.2];
        assert!(exceedance_rate_fit(&h, 0.0).is_err());
        h = [0.1, 0.3, 0.2].repeat(4);
        let r = exceedance_rate_fit(&h, 0.0).unwrap();
        assert!((r.estimate - 5.0).abs() < 1e-12);
        let shifted: Vec<f64> = h.iter().map(|v| v + 3.0).collect();
        assert!((exceedance_rate_fit(&shifted, 3.0).unwrap().estimate - 5.0).abs() < 1e-9);
        let scaled: Vec<f64> = h.iter().map(|v| v * 2.0).collect();
        assert!((exceedance_rate_fit(&scaled, 0.0).unwrap().estimate - 2.5).abs() < 1e-12);
        assert!(exceedance_rate_fit(&h, 0.15).is_err());
    }

    #[test]
    fn exceedance_rate_recovers_alpha() {
        let exp = Exp::new(ALPHA).unwrap();
        let mut rng = StreamKey::root(2).rng();
        let h: Vec<f64> = (0..10_000).map(|_| exp.sample(&mut rng)).collect();
        let r = exceedance_rate_fit(&h, 0.0).unwrap();
        assert!((r.estimate - ALPHA).abs() < 3.0 * ALPHA / 100.0);
        assert!(r.p_value.unwrap() > 0.01);
        assert!(r.extras["ks_theoretical_p_value"] > 0.01);
    }

    fn gumbel(n: usize, rate: f64, seed: u64) -> Vec<f64> {
        let mut rng = StreamKey::root(seed).rng();
        (0..n)
            .map(|_| -(-(rng.gen::<f64>()).ln()).ln() / rate)
            .collect()
    }

    #[test]
    fn gumbel_slope_calibration() {
        let r = gumbel_tail_fit(&gumbel(100_000, 1.0, 3)).unwrap();
        assert!((r.estimate + 1.0).abs() < 0.05, "{}", r.estimate);
        let x = gumbel(100_000, ALPHA, 4);
        let r = gumbel_tail_fit(&x).unwrap();
        assert!((r.estimate + ALPHA).abs() < 0.25);
        let moved: Vec<f64> = x.iter().map(|v| v + 7.0).collect();
        assert!((gumbel_tail_fit(&moved).unwrap().estimate - r.estimate).abs() < 1e-6);
        assert!(gumbel_tail_fit(&vec![1.0; 200]).is_err());
        assert!(gumbel_tail_fit(&x[..50]).is_err());
    }

    #[test]
    fn level_set_growth_cases() {
        let l = lat(8);
        let flat: Vec<Field> = (0..20).map(|_| Field::zeros(l)).collect();
        // Only lambda = 3 reaches the constant value 0 from m = 2.5.
        let err = level_set_growth(&flat, &[1.0, 2.0, 3.0], 2.5).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
        let g = level_set_growth(&flat, &[1.0, 3.0, 4.0], 2.5).unwrap();
        assert_eq!(g.dropped, vec![1.0]);
        assert_eq!(g.report.estimate, 0.0);

        let mut rng = StreamKey::root(5).rng();
        let iid: Vec<Field> = (0..20)
            .map(|_| Field::new(lat(32), (0..1024).map(|_| rng.sample(StandardNormal)).collect()).unwrap())
            .collect();
        let g = level_set_growth(&iid, &[0.5, 1.0, 1.5, 2.0], 3.0).unwrap();
        assert!(g.report.estimate > 0.0);
        assert!(level_set_growth(&iid[..5], &[1.0, 2.0], 3.0).is_err());
        assert!(level_set_growth(&iid, &[2.0, 1.0], 3.0).is_err());
    }

    #[test]
    fn chaos_examples() {
        let l = lat(4);
        let all: Vec<usize> = (0..16).collect();
        let want = (2.0 / (2.0 * PI).sqrt()) * 4f64.ln() / 16.0;
        assert!((chaos_measure(&Field::zeros(l), &all) - want).abs() < 1e-15);
        assert!((want - 0.069132).abs() < 1e-6);
        assert_eq!(chaos_measure(&Field::zeros(l), &[]), 0.0);
        let f = Field::from_fn(l, |x| (x as f64 * 0.7).sin());
        let (a, b) = all.split_at(5);
        let sum = chaos_measure(&f, a) + chaos_measure(&f, b);
        assert!((chaos_measure(&f, &all) - sum).abs() < 1e-14);
    }

    #[test]
    fn test_function_contracts() {
        let f = TestFunction::box_bump([0.0, 0.0], [0.5, 1.0], 0.0, 1.0, 2.0).unwrap();
        assert!(f.check_on_grid(&[-1.0, -0.1, 0.0, 0.3, 0.5, 0.99, 2.0], 8));
        assert_eq!(f.eval([0.2, 0.2], 0.5), 2.0 * (-0.0f64).exp());
        let s = TestFunction::step([0.0, 0.0], [1.0, 1.0], 0.5, 0.2).unwrap();
        assert_eq!(s.eval([0.1, 0.1], 0.3), 2f64.ln());
        assert_eq!(s.eval([0.1, 0.1], 0.2), 0.0);
        assert!(TestFunction::step([0.0, 0.0], [1.0, 1.0], 1.0, 0.0).is_err());

        let l = lat(8);
        let zero = translate_test_function(&f, &Field::zeros(l));
        let c = translate_test_function(&f, &Field::constant(l, 0.25));
        let phi = Field::from_fn(l, |x| 0.1 * (x as f64).cos());
        let psi = Field::from_fn(l, |x| 0.05 * (x as f64).sin());
        let twice = translate_test_function(&translate_test_function(&f, &phi), &psi);
        let once = translate_test_function(&f, &phi.add(&psi).unwrap());
        for k in 0..64 {
            let x = l.point(k);
            for h in [-0.2, 0.1, 0.4, 0.8] {
                assert_eq!(zero.eval(x, h), f.eval(x, h));
                assert_eq!(c.eval(x, h), f.eval(x, h + 0.25));
                assert!((twice.eval(x, h) - once.eval(x, h)).abs() < 1e-12);
            }
        }
        assert!(c.check_on_grid(&[-1.0, -0.3, 0.0, 0.5], 8));
    }

    #[test]
    fn laplace_functional_examples() {
        let f = TestFunction::box_bump([0.0, 0.0], [1.0, 1.0], 0.0, 1.0, 1.0).unwrap();
        let empty = ExtremalProcessSample { points: vec![], r: 0.0, epsilon: 0.0, m_eps: 0.0 };
        let r = laplace_functional(&[empty.clone(), empty], &f).unwrap();
        assert_eq!((r.estimate, r.std_error), (1.0, 0.0));
        assert!(laplace_functional(&[], &f).is_err());

        // PPP with intensity c dx e^{-alpha h} dh on h >= 0, i.e. total c / alpha.
        let (c, alpha) = (3.0, 2.0);
        let samples: Vec<_> = (0..4000)
            .map(|i| synthetic_ppp(c / alpha, alpha, 0.0, StreamKey::root(6).child("ppp", i)).unwrap())
            .collect();
        let r = laplace_functional(&samples, &f).unwrap();
        // exp(-int (1 - e^{-f}) c e^{-alpha h} dh dx) by the midpoint rule.
        let m = 20_000;
        let integral: f64 = (0..m)
            .map(|i| {
                let h = (i as f64 + 0.5) / m as f64;
                (1.0 - (-f.eval([0.5, 0.5], h)).exp()) * c * (-alpha * h).exp() / m as f64
            })
            .sum();
        let target = (-integral).exp();
        assert!((r.estimate - target).abs() < 3.0 * r.std_error, "{} vs {target}", r.estimate);
        assert!(r.estimate > 0.0 && r.estimate <= 1.0);
    }

    #[test]
    fn strip_ratio_cancels_random_intensity() {
        let lognormal = |rng: &mut rand_chacha::ChaCha8Rng| {
            let g: f64 = rng.sample(StandardNormal);
            40.0 * (0.5 * g).exp()
        };
        let doubled = |rng: &mut rand_chacha::ChaCha8Rng| {
            let g: f64 = rng.sample(StandardNormal);
            80.0 * (0.5 * g).exp()
        };
        let make = |law: &dyn Fn(&mut rand_chacha::ChaCha8Rng) -> f64, tag: &str| -> Vec<ExtremalProcessSample> {
            (0..400)
                .map(|i| synthetic_cox(law, ALPHA, 0.0, StreamKey::root(7).child(tag, i)).unwrap())
                .collect()
        };
        let a = strip_ratio_test(&make(&lognormal, "a"), 0.0, 0.2, 1).unwrap();
        let target = (ALPHA * 0.2).exp() - 1.0;
        assert!((target - 1.7255).abs() < 1e-4);
        assert!((a.estimate - target).abs() < 3.0 * a.std_error, "{a:?}");
        let b = strip_ratio_test(&make(&doubled, "b"), 0.0, 0.2, 1).unwrap();
        assert!(b.extras["upper_count"] > 1.5 * a.extras["upper_count"]);
        assert!((a.estimate - b.estimate).abs() < 3.0 * (a.std_error.powi(2) + b.std_error.powi(2)).sqrt());
        let tiny = strip_ratio_test(&make(&lognormal, "a"), 0.0, 1e-9, 1).unwrap();
        assert!(tiny.estimate < 1e-3);
        assert!(strip_ratio_test(&[], 0.0, 0.2, 1).is_err());
    }

    #[test]
    fn correspondence_and_inclusion_trivial_cases() {
        // Well separated bumps, so no near maximum has a higher competitor
        // between r eps and 2 r eps.
        let l = lat(32);
        let x = Field::from_fn(l, |k| {
            (0..16)
                .map(|b| {
                    let c = l.index(8 * (b / 4) + 3, 8 * (b % 4) + 3);
                    let d = l.site_distance(k, c) * 32.0;
                    (2.0 + 0.1 * b as f64) * (-d * d / 2.0).exp()
                })
                .sum()
        });
        let m = 2.0;
        let same = correspondence_fraction(&x, &x, 2.0, 2.0, 0.5, m).unwrap();
        assert!(same.psi_to_gff.sample_size > 0);
        assert_eq!(same.psi_to_gff.estimate, 1.0);
        assert_eq!(same.gff_to_psi.estimate, 1.0);
        let up = x.add_constant(0.3);
        let shifted = correspondence_fraction(&up, &x, 2.0, 2.0, 1e-12, m).unwrap();
        assert_eq!(shifted.psi_to_gff.estimate, 1.0);
        assert_eq!(shifted.gff_to_psi.estimate, 1.0);
        let none = correspondence_fraction(&x, &x, 2.0, -10.0, 0.5, m).unwrap();
        assert_eq!(none.psi_to_gff.sample_size, 0);

        let mut rng = StreamKey::root(8).rng();
        let x = Field::new(l, (0..1024).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).unwrap();
        let inc = inclusion_test(&[(x.clone(), x.clone())], 1.0, m).unwrap();
        assert_eq!((inc.gff_in_psi.estimate, inc.psi_in_gff.estimate), (1.0, 1.0));
        let bump = Field::from_fn(l, |k| 0.9 * (k as f64).sin());
        let inc = inclusion_test(&[(x.add(&bump).unwrap(), x.clone())], 1.0, m).unwrap();
        assert_eq!(inc.gff_in_psi.estimate, 1.0);
    }

    #[test]
    fn report_serialization() {
        let r = FitReport::new(1.5, 0.25, 10).with_extra("k", 2.0);
        let back: FitReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.csv_row("x"), "x,1.5,0.25,,,10");
        assert_eq!(FitReport::CSV_HEADER.split(',').count(), r.csv_row("x").split(',').count());
    }
}
