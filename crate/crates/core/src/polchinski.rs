//! The renormalized potential `v_t`, the Polchinski equation it solves, and
//! the backward coupling flow between the sine-Gordon field and the GFF.
//!
//! Conventions. Derivatives are taken with respect to the plain coordinates
//! `phi(x)`. The Gaussian smoothing field `zeta` at scale `t` has plain
//! covariance `C_t(x, y) = sum_k c_t(k) exp(i k.(x - y))`, and likewise
//! `Cdot_t` with multiplier `exp(-t mu)`. In these terms
//!
//! `v_t(phi) = -log E[exp(-v_0(phi + zeta_t))]`,
//! `d/dt v_t = 1/2 sum_xy Cdot_t(x,y) (d_x d_y v_t - d_x v_t d_y v_t)`,
//!
//! and the coupled fields satisfy
//! `Phi_t^SG = Phi_t^GFF - int_t^inf Cdot_u grad v_u(Phi_u^SG) du`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fft;
use crate::quadrature::TinyGaussian;
use crate::rng::StreamKey;
use crate::sinegordon::SGParams;
use crate::spectral::{
    gff_multiplier, gs_multiplier, heat_increment_multiplier, heat_kernel_multiplier,
    heat_kernel_rate_multiplier, massive_gff_multiplier, sample_field, sample_noise_keyed,
    synthesize, Field, SpectralMultiplier, SpectralNoise,
};

/// `v_0(phi) = eps^2 sum_x 2 z eps^(-beta/4pi) cos(sqrt(beta) phi(x))`.
pub fn v0(params: &SGParams, phi: &Field) -> Result<f64> {
    check_lattice(params, phi)?;
    let sb = params.sqrt_beta();
    let eps2 = params.lattice.epsilon().powi(2);
    Ok(eps2 * params.vertex() * phi.values().iter().map(|p| (sb * p).cos()).sum::<f64>())
}

/// Plain gradient of [`v0`].
pub fn grad_v0(params: &SGParams, phi: &Field) -> Result<Field> {
    check_lattice(params, phi)?;
    let sb = params.sqrt_beta();
    let c = -params.lattice.epsilon().powi(2) * params.vertex() * sb;
    Field::new(
        params.lattice,
        phi.values().iter().map(|p| c * (sb * p).sin()).collect(),
    )
}

fn check_lattice(params: &SGParams, phi: &Field) -> Result<()> {
    if phi.lattice() != params.lattice {
        return Err(Error::LatticeMismatch {
            expected: params.lattice.n(),
            found: phi.lattice().n(),
        });
    }
    Ok(())
}

/// A scalar Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradEstimate {
    pub field: Field,
    pub std_error: Vec<f64>,
}

/// Per-draw quantities of `v_0` at `phi + zeta`.
struct Draw {
    log_weight: f64,
    grad: Vec<f64>,
    /// Diagonal of the Hessian of `v_0`.
    hess: Vec<f64>,
}

fn evaluate_draw(params: &SGParams, phi: &[f64], zeta: &[f64], want_hess: bool) -> Draw {
    let sb = params.sqrt_beta();
    let a = params.lattice.epsilon().powi(2) * params.vertex();
    let mut v = 0.0;
    let mut grad = Vec::with_capacity(phi.len());
    let mut hess = Vec::with_capacity(if want_hess { phi.len() } else { 0 });
    for (p, z) in phi.iter().zip(zeta) {
        let (s, c) = (sb * (p + z)).sin_cos();
        v += c;
        grad.push(-a * sb * s);
        if want_hess {
            hess.push(-a * params.beta * c);
        }
    }
    Draw {
        log_weight: -a * v,
        grad,
        hess,
    }
}

/// Normalized weights `w_j / sum w` and `log mean w`, computed stably.
fn normalize(log_weights: &[f64]) -> Result<(Vec<f64>, f64)> {
    let top = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::Numerical(
            "all importance weights underflow; increase mc_samples".into(),
        ));
    }
    let raw: Vec<f64> = log_weights.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    let log_mean = top + (total / raw.len() as f64).ln();
    Ok((raw.into_iter().map(|w| w / total).collect(), log_mean))
}

/// Monte Carlo estimator of `v_t` and its derivatives by Gaussian
/// convolution.
#[derive(Debug, Clone)]
pub struct PotentialEstimator {
    pub params: SGParams,
    pub t: f64,
    pub mc_samples: usize,
    smoothing: SpectralMultiplier,
}

impl PotentialEstimator {
    pub fn new(params: SGParams, t: f64, mc_samples: usize) -> Result<Self> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(invalid(format!("t must be finite and non-negative, got {t}")));
        }
        if mc_samples == 0 {
            return Err(invalid("mc_samples must be at least 1"));
        }
        let smoothing = heat_kernel_multiplier(params.lattice, params.mass_sq, t)?;
        Ok(Self {
            params,
            t,
            mc_samples,
            smoothing,
        })
    }

    /// `L_t = min(sqrt t, 1/m)`, the length scale of `Phi_t^GFF` fluctuations.
    pub fn characteristic_scale(&self) -> f64 {
        self.t.sqrt().min(1.0 / self.params.mass_sq.sqrt())
    }

    /// The noise behind draw `j` is `root(seed) / "vt-draw" / j`. Using the
    /// same seed at different `t` or `phi` gives common random numbers.
    pub fn noises(&self, seed: u64) -> Vec<SpectralNoise> {
        let root = StreamKey::root(seed);
        (0..self.mc_samples)
            .into_par_iter()
            .map(|j| sample_noise_keyed(self.params.lattice, root.child("vt-draw", j as u64)))
            .collect()
    }

    /// Smoothing fields `zeta_j` with covariance `c_t`.
    pub fn draws(&self, seed: u64) -> Result<Vec<Field>> {
        self.draws_from(&self.noises(seed))
    }

    pub fn draws_from(&self, noises: &[SpectralNoise]) -> Result<Vec<Field>> {
        noises
            .par_iter()
            .map(|x| synthesize(x, &self.smoothing))
            .collect()
    }

    fn evaluate(&self, phi: &Field, draws: &[Field], want_hess: bool) -> Result<Vec<Draw>> {
        check_lattice(&self.params, phi)?;
        Ok(draws
            .par_iter()
            .map(|z| evaluate_draw(&self.params, phi.values(), z.values(), want_hess))
            .collect())
    }

    /// `v_t(phi)` from explicit smoothing draws, with the delta-method
    /// standard error of the log of the sample mean.
    pub fn vt_from_draws(&self, phi: &Field, draws: &[Field]) -> Result<Estimate> {
        if self.params.z == 0.0 {
            check_lattice(&self.params, phi)?;
            return Ok(Estimate { value: 0.0, std_error: 0.0 });
        }
        let evals = self.evaluate(phi, draws, false)?;
        let logs: Vec<f64> = evals.iter().map(|d| d.log_weight).collect();
        let (w, log_mean) = normalize(&logs)?;
        let m = w.len() as f64;
        // sd(W) / (sqrt(M) mean(W)) with W_j = M w_j.
        let var: f64 = w.iter().map(|wj| (m * wj - 1.0).powi(2)).sum::<f64>() / m;
        Ok(Estimate {
            value: -log_mean,
            std_error: (var / m).sqrt(),
        })
    }

    /// Self-normalized estimate of the plain gradient of `v_t`.
    pub fn grad_from_draws(&self, phi: &Field, draws: &[Field]) -> Result<GradEstimate> {
        let sites = self.params.lattice.site_count();
        if self.params.z == 0.0 {
            check_lattice(&self.params, phi)?;
            return Ok(GradEstimate {
                field: Field::zeros(self.params.lattice),
                std_error: vec![0.0; sites],
            });
        }
        let evals = self.evaluate(phi, draws, false)?;
        let logs: Vec<f64> = evals.iter().map(|d| d.log_weight).collect();
        let (w, _) = normalize(&logs)?;
        let mut mean = vec![0.0; sites];
        for (wj, d) in w.iter().zip(&evals) {
            for (m, g) in mean.iter_mut().zip(&d.grad) {
                *m += wj * g;
            }
        }
        let mut var = vec![0.0; sites];
        for (wj, d) in w.iter().zip(&evals) {
            for ((v, g), m) in var.iter_mut().zip(&d.grad).zip(&mean) {
                *v += (wj * (g - m)).powi(2);
            }
        }
        Ok(GradEstimate {
            field: Field::new(self.params.lattice, mean)?,
            std_error: var.into_iter().map(f64::sqrt).collect(),
        })
    }
}

/// `v_t(phi)` with `mc_samples` smoothing draws from `seed`.
pub fn estimate_vt(est: &PotentialEstimator, phi: &Field, seed: u64) -> Result<Estimate> {
    if est.params.z == 0.0 {
        return est.vt_from_draws(phi, &[]);
    }
    est.vt_from_draws(phi, &est.draws(seed)?)
}

/// Gradient of `v_t` on the same draws [`estimate_vt`] would use.
pub fn estimate_grad_vt(est: &PotentialEstimator, phi: &Field, seed: u64) -> Result<GradEstimate> {
    if est.params.z == 0.0 {
        return est.grad_from_draws(phi, &[]);
    }
    est.grad_from_draws(phi, &est.draws(seed)?)
}

/// Outcome of a residual check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualStatus {
    /// `|residual| <= 3 error_bar`.
    Consistent,
    Inconsistent,
    /// The error bar exceeded the configured ceiling.
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub residual: f64,
    pub error_bar: f64,
    pub status: ResidualStatus,
}

impl Residual {
    fn classify(residual: f64, error_bar: f64, ceiling: Option<f64>) -> Self {
        let status = match ceiling {
            Some(c) if error_bar > c => ResidualStatus::Inconclusive,
            _ if residual.abs() <= 3.0 * error_bar => ResidualStatus::Consistent,
            _ => ResidualStatus::Inconsistent,
        };
        Self {
            residual,
            error_bar,
            status,
        }
    }
}

/// Number of batches behind the residual's error bar.
const RESIDUAL_BATCHES: usize = 20;

/// `Cdot_t g` for a plain gradient `g`.
fn apply_rate(rate: &SpectralMultiplier, g: &[f64]) -> Vec<f64> {
    let l = rate.lattice();
    let inv_eps2 = 1.0 / l.epsilon().powi(2);
    fft::apply_multiplier(g, rate.values(), l.n())
        .into_iter()
        .map(|v| v * inv_eps2)
        .collect()
}

/// `g^T Cdot g - Cdot(0,0) tr(h)`: the per-draw value of
/// `sum_xy Cdot(x,y) d_x d_y exp(-v_0) / exp(-v_0)`.
fn second_order_term(rate: &SpectralMultiplier, draw: &Draw) -> f64 {
    let cg = apply_rate(rate, &draw.grad);
    let quad: f64 = draw.grad.iter().zip(&cg).map(|(a, b)| a * b).sum();
    quad - rate.variance() * draw.hess.iter().sum::<f64>()
}

/// Estimates `d/dt v_t - 1/2 Lap_Cdot v_t + 1/2 (grad v_t)^2_Cdot` at `phi`.
///
/// The time derivative is a central difference of `v_{t -+ dt}` on common
/// random numbers; the two spatial terms combine into the self-normalized
/// mean of [`second_order_term`]. The error bar comes from splitting the
/// draws into batches.
pub fn polchinski_residual(
    est: &PotentialEstimator,
    phi: &Field,
    dt: f64,
    seed: u64,
    ceiling: Option<f64>,
) -> Result<Residual> {
    if !(dt > 0.0 && est.t > dt) {
        return Err(invalid(format!("need t > dt > 0, got t = {}, dt = {dt}", est.t)));
    }
    check_lattice(&est.params, phi)?;
    if est.params.z == 0.0 {
        return Ok(Residual::classify(0.0, 0.0, ceiling));
    }
    if est.mc_samples < 2 * RESIDUAL_BATCHES {
        return Err(invalid(format!(
            "residual needs at least {} samples",
            2 * RESIDUAL_BATCHES
        )));
    }
    let params = est.params;
    let noises = est.noises(seed);
    let below = PotentialEstimator::new(params, est.t - dt, est.mc_samples)?;
    let above = PotentialEstimator::new(params, est.t + dt, est.mc_samples)?;
    let rate = heat_kernel_rate_multiplier(params.lattice, params.mass_sq, est.t)?;

    let logs = |e: &PotentialEstimator| -> Result<Vec<f64>> {
        Ok(e.evaluate(phi, &e.draws_from(&noises)?, false)?
            .into_iter()
            .map(|d| d.log_weight)
            .collect())
    };
    let log_below = logs(&below)?;
    let log_above = logs(&above)?;
    let centre = est.evaluate(phi, &est.draws_from(&noises)?, true)?;
    let second: Vec<f64> = centre.par_iter().map(|d| second_order_term(&rate, d)).collect();
    let log_centre: Vec<f64> = centre.iter().map(|d| d.log_weight).collect();

    let residual_of = |range: std::ops::Range<usize>| -> Result<f64> {
        let (_, lb) = normalize(&log_below[range.clone()])?;
        let (_, la) = normalize(&log_above[range.clone()])?;
        let (w, _) = normalize(&log_centre[range.clone()])?;
        let dvdt = (lb - la) / (2.0 * dt);
        let spatial: f64 = w.iter().zip(&second[range]).map(|(w, s)| w * s).sum();
        Ok(dvdt + 0.5 * spatial)
    };

    let m = est.mc_samples;
    let residual = residual_of(0..m)?;
    let per = m / RESIDUAL_BATCHES;
    let batches: Vec<f64> = (0..RESIDUAL_BATCHES)
        .map(|b| residual_of(b * per..(b + 1) * per))
        .collect::<Result<_>>()?;
    let mean = batches.iter().sum::<f64>() / batches.len() as f64;
    let var = batches.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (batches.len() - 1) as f64;
    let error_bar = (var / batches.len() as f64).sqrt();
    Ok(Residual::classify(residual, error_bar, ceiling))
}

/// `v_t(phi)` on the 2x2 torus by tensor Gauss-Hermite quadrature.
pub fn quadrature_vt(params: &SGParams, t: f64, phi: &Field, order: usize) -> Result<f64> {
    check_lattice(params, phi)?;
    let smoothing = heat_kernel_multiplier(params.lattice, params.mass_sq, t)?;
    let g = TinyGaussian::new(&smoothing, order)?;
    let p = phi.values();
    let [z] = g.expect(|zeta| [evaluate_draw(params, p, zeta, false).log_weight.exp()]);
    Ok(-z.ln())
}

/// The Polchinski residual on the 2x2 torus with every expectation done by
/// quadrature. Only the `dt` truncation of the time derivative remains.
pub fn quadrature_residual(
    params: &SGParams,
    t: f64,
    phi: &Field,
    dt: f64,
    order: usize,
) -> Result<f64> {
    if !(dt > 0.0 && t > dt) {
        return Err(invalid("need t > dt > 0"));
    }
    let dvdt = (quadrature_vt(params, t + dt, phi, order)?
        - quadrature_vt(params, t - dt, phi, order)?)
        / (2.0 * dt);
    let smoothing = heat_kernel_multiplier(params.lattice, params.mass_sq, t)?;
    let rate = heat_kernel_rate_multiplier(params.lattice, params.mass_sq, t)?;
    let g = TinyGaussian::new(&smoothing, order)?;
    let p = phi.values();
    let [z, zs] = g.expect(|zeta| {
        let d = evaluate_draw(params, p, zeta, true);
        let w = d.log_weight.exp();
        [w, w * second_order_term(&rate, &d)]
    });
    Ok(dvdt + 0.5 * zs / z)
}

/// Settings of the backward coupling flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    /// Initial (largest) time `T`.
    pub t_max: f64,
    /// Relative step: consecutive grid times satisfy `t' = t (1 - dt)`.
    pub dt: f64,
    /// Times at which fields and remainders are recorded.
    pub s_marks: Vec<f64>,
    /// Smoothing draws per evaluation of `grad v_t`.
    pub mc_samples: usize,
    /// Abort when a per-site standard error of `grad v_t` exceeds this.
    pub grad_se_ceiling: Option<f64>,
    /// The flow runs down to this time (0 for the full field).
    pub stop_at: f64,
}

impl FlowConfig {
    pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-6;

    /// A flow whose start time makes the neglected drift tail smaller than
    /// [`Self::DEFAULT_TAIL_TOLERANCE`] (see [`drift_tail_bound`]).
    pub fn for_params(params: &SGParams, dt: f64, mc_samples: usize) -> Self {
        Self {
            t_max: start_time(params, Self::DEFAULT_TAIL_TOLERANCE),
            dt,
            s_marks: Vec::new(),
            mc_samples,
            grad_se_ceiling: None,
            stop_at: 0.0,
        }
    }
}

/// Sup-norm bound on the drift `int_T^inf Cdot_t grad v_t dt` dropped by
/// starting the flow at `T`: the heat kernel has row sums
/// `exp(-t m^2) / eps^2` and `|d_x v_t| <= eps^2 |vertex| sqrt(beta)`.
pub fn drift_tail_bound(params: &SGParams, t_max: f64) -> f64 {
    params.vertex().abs() * params.sqrt_beta() * (-t_max * params.mass_sq).exp() / params.mass_sq
}

/// Smallest start time (at least 1) with [`drift_tail_bound`] below `tol`.
pub fn start_time(params: &SGParams, tol: f64) -> f64 {
    let scale = params.vertex().abs() * params.sqrt_beta() / (params.mass_sq * tol);
    if scale <= 1.0 {
        return 1.0;
    }
    (scale.ln() / params.mass_sq).max(1.0)
}

/// Decreasing time grid from `t_max` to `stop_at`, geometric with ratio
/// `1 - dt` down to a floor well below the lattice scale, then one final
/// step. Every mark in `(stop_at, t_max)` is inserted.
pub fn time_grid(config: &FlowConfig, epsilon: f64) -> Result<Vec<f64>> {
    let FlowConfig { t_max, dt, stop_at, .. } = *config;
    if !(dt > 0.0 && dt < 1.0) {
        return Err(invalid(format!("relative step dt must lie in (0, 1), got {dt}")));
    }
    if !(t_max.is_finite() && t_max > stop_at && stop_at >= 0.0) {
        return Err(invalid(format!("need t_max > stop_at >= 0, got {t_max}, {stop_at}")));
    }
    if let Some(s) = config.s_marks.iter().find(|&&s| !(s >= stop_at && s <= t_max)) {
        return Err(invalid(format!("mark {s} outside [{stop_at}, {t_max}]")));
    }
    let floor = (1e-3 * epsilon * epsilon).max(stop_at);
    let mut grid = vec![t_max];
    let mut t = t_max;
    while t * (1.0 - dt) > floor {
        t *= 1.0 - dt;
        grid.push(t);
    }
    grid.push(stop_at);
    grid.extend(config.s_marks.iter().copied());
    grid.sort_by(|a, b| b.total_cmp(a));
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1e-300));
    Ok(grid)
}

/// Fields recorded at one time of a coupled path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathMark {
    pub t: f64,
    pub sg: Field,
    pub gff: Field,
    /// `Phi_t^SG - Phi_t^GFF`.
    pub delta: Field,
    /// `int_t^T Cdot_u grad v_u du` accumulated so far.
    drift: Field,
    /// Running sum of the sup-norms of the drift increments.
    drift_bound: f64,
}

/// One realization of the coupling `(Phi_t^SG, Phi_t^GFF)`.
#[derive(Debug, Clone)]
pub struct CoupledPath {
    pub params: SGParams,
    pub times: Vec<f64>,
    /// `max_x |Phi_t^Delta(x)|` at every grid time.
    pub delta_sup: Vec<f64>,
    /// Recorded times: the start, every mark, and the end, in decreasing `t`.
    pub marks: Vec<PathMark>,
    /// Largest per-site standard error of `grad v_t` met along the path.
    pub max_grad_se: f64,
}

impl CoupledPath {
    pub fn mark(&self, t: f64) -> Option<&PathMark> {
        self.marks
            .iter()
            .find(|m| (m.t - t).abs() <= 1e-12 * t.abs().max(1e-300))
    }

    pub fn end(&self) -> &PathMark {
        self.marks.last().expect("path has marks")
    }

    fn require(&self, t: f64) -> Result<&PathMark> {
        self.mark(t)
            .ok_or_else(|| invalid(format!("time {t} was not recorded on this path")))
    }

    /// `R_s = int_0^s Cdot_t grad v_t dt`; requires a full path.
    pub fn remainder(&self, s: f64) -> Result<Field> {
        let end = self.end();
        if end.t != 0.0 {
            return Err(invalid("remainder needs a path that reaches t = 0"));
        }
        end.drift.sub(&self.require(s)?.drift)
    }

    /// `int_0^s ||Cdot_t grad v_t||_inf dt` along the grid, an upper bound
    /// for `max |R_s|`.
    pub fn remainder_bound(&self, s: f64) -> Result<f64> {
        let end = self.end();
        if end.t != 0.0 {
            return Err(invalid("remainder needs a path that reaches t = 0"));
        }
        Ok(end.drift_bound - self.require(s)?.drift_bound)
    }

    /// `Phi_0^GFF - Phi_s^GFF + Phi_s^SG`.
    pub fn tilde_sg(&self, s: f64) -> Result<Field> {
        let at = self.require(s)?;
        self.end().gff.sub(&at.gff)?.add(&at.sg)
    }
}

/// Integrates the coupled flow downward from `T`.
///
/// `Phi_T^SG = Phi_T^GFF` is a GFF sample at scale `T` from
/// `root(seed) / "flow-initial"`. Over `[t', t]` the drift is frozen at
/// `grad v_t(Phi_t^SG)` and integrated exactly against `Cdot`, i.e. the
/// drift step is `(c_t - c_t') grad v_t`; the GFF increment, with covariance
/// `c_t - c_t'`, is synthesized from `root(seed) / "flow-increment" / k` and
/// added to both fields.
pub fn backward_flow(params: &SGParams, config: &FlowConfig, seed: u64) -> Result<CoupledPath> {
    if config.mc_samples == 0 {
        return Err(invalid("mc_samples must be at least 1"));
    }
    let l = params.lattice;
    let times = time_grid(config, l.epsilon())?;
    let root = StreamKey::root(seed);
    let initial = gff_multiplier(l, params.mass_sq, times[0])?;
    let mut gff = sample_field(&initial, root.child("flow-initial", 0))?;
    let mut sg = gff.clone();
    let mut drift = Field::zeros(l);
    let mut drift_bound = 0.0;
    let mut max_grad_se = 0.0f64;
    let mut delta_sup = vec![0.0];
    let record = |t: f64, sg: &Field, gff: &Field, drift: &Field, bound: f64| -> Result<PathMark> {
        Ok(PathMark {
            t,
            sg: sg.clone(),
            gff: gff.clone(),
            delta: sg.sub(gff)?,
            drift: drift.clone(),
            drift_bound: bound,
        })
    };
    let mut marks = vec![record(times[0], &sg, &gff, &drift, 0.0)?];
    let is_mark = |t: f64| {
        config
            .s_marks
            .iter()
            .any(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1e-300))
    };

    for k in 0..times.len() - 1 {
        let (t, next) = (times[k], times[k + 1]);
        let step = heat_increment_multiplier(l, params.mass_sq, next, t)?;
        if params.z != 0.0 {
            let est = PotentialEstimator::new(*params, t, config.mc_samples)?;
            let key = root.child("flow-vt", k as u64).fingerprint();
            let grad = estimate_grad_vt(&est, &sg, key)?;
            let worst = grad.std_error.iter().copied().fold(0.0, f64::max);
            max_grad_se = max_grad_se.max(worst);
            if let Some(c) = config.grad_se_ceiling {
                if worst > c {
                    return Err(Error::Numerical(format!(
                        "grad v_t standard error {worst:.3e} exceeds ceiling {c:.3e} at t = {t:.4e}"
                    )));
                }
            }
            let increment = apply_rate(&step, grad.field.values());
            let inc = Field::new(l, increment)?;
            drift_bound += inc.sup_norm();
            drift = drift.add(&inc)?;
            sg = sg.sub(&inc)?;
        }
        let dw = sample_field(&step, root.child("flow-increment", k as u64))?;
        gff = gff.add(&dw)?;
        sg = sg.add(&dw)?;
        let sup = sg.sub(&gff)?.sup_norm();
        if !sup.is_finite() {
            return Err(Error::Numerical(format!("non-finite field at t = {next}")));
        }
        delta_sup.push(sup);
        if k + 2 == times.len() || is_mark(next) {
            let mark = record(next, &sg, &gff, &drift, drift_bound)?;
            // Phi^Delta = -(accumulated drift), up to rounding.
            debug_assert!(mark
                .delta
                .values()
                .iter()
                .zip(drift.values())
                .all(|(d, r)| (d + r).abs() <= 1e-9 * (1.0 + r.abs() + sg.sup_norm())));
            marks.push(mark);
        }
    }
    Ok(CoupledPath {
        params: *params,
        times,
        delta_sup,
        marks,
        max_grad_se,
    })
}

/// Independent paths with seeds derived from `(seed, path index)`.
pub fn backward_flows(
    params: &SGParams,
    config: &FlowConfig,
    seed: u64,
    n_paths: usize,
) -> Result<Vec<CoupledPath>> {
    let root = StreamKey::root(seed);
    (0..n_paths)
        .into_par_iter()
        .map(|p| backward_flow(params, config, root.child("flow-path", p as u64).fingerprint()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemainderRow {
    pub s: f64,
    pub max_abs: f64,
    /// `int_0^s ||Cdot_t grad v_t||_inf dt`.
    pub triangle_bound: f64,
}

/// `(s, max_x |R_s(x)|)` for every mark of a full path, by increasing `s`.
pub fn remainder_decay_report(path: &CoupledPath) -> Result<Vec<RemainderRow>> {
    let mut marks: Vec<f64> = path
        .marks
        .iter()
        .map(|m| m.t)
        .filter(|&t| t > 0.0 && t < path.times[0])
        .collect();
    marks.sort_by(f64::total_cmp);
    marks
        .into_iter()
        .map(|s| {
            Ok(RemainderRow {
                s,
                max_abs: path.remainder(s)?.sup_norm(),
                triangle_bound: path.remainder_bound(s)?,
            })
        })
        .collect()
}

/// Mean over paths of `max |R_s|` per mark, by increasing `s`.
pub fn mean_remainder_decay(paths: &[CoupledPath]) -> Result<Vec<(f64, f64)>> {
    let reports: Vec<Vec<RemainderRow>> =
        paths.iter().map(remainder_decay_report).collect::<Result<_>>()?;
    let first = reports
        .first()
        .ok_or_else(|| Error::InsufficientData("no paths".into()))?;
    Ok((0..first.len())
        .map(|i| {
            let mean = reports.iter().map(|r| r[i].max_abs).sum::<f64>() / reports.len() as f64;
            (first[i].s, mean)
        })
        .collect())
}

/// `Psi_s = X_s^GFF + X_s^h + Phi_s^SG` with its components.
#[derive(Debug, Clone)]
pub struct AuxiliaryField {
    pub s: f64,
    pub psi: Field,
    /// GFF with mass `m^2 + 1/s`.
    pub x_gff: Field,
    /// Smooth Gaussian field with covariance `g_s(-Lap + m^2)`.
    pub x_h: Field,
    pub phi_s_sg: Field,
}

impl AuxiliaryField {
    /// `X_s^c = X_s^h + Phi_s^SG`.
    pub fn continuous_part(&self) -> Result<Field> {
        self.x_h.add(&self.phi_s_sg)
    }
}

/// Builds `Psi_s`. `X_s^GFF` and `X_s^h` are drawn from the streams
/// `root(seed) / "aux-gff"` and `root(seed) / "aux-h"`; `Phi_s^SG` comes
/// from a flow stopped at `s` with seed `root(seed) / "aux-flow"`.
pub fn auxiliary_field(
    params: &SGParams,
    s: f64,
    flow: &FlowConfig,
    seed: u64,
) -> Result<AuxiliaryField> {
    if !(s > 0.0) {
        return Err(invalid(format!("s must be positive, got {s}")));
    }
    let l = params.lattice;
    let root = StreamKey::root(seed);
    let x_gff = sample_field(&massive_gff_multiplier(l, params.mass_sq, s)?, root.child("aux-gff", 0))?;
    let x_h = sample_field(&gs_multiplier(l, params.mass_sq, s)?, root.child("aux-h", 0))?;
    let config = FlowConfig {
        stop_at: s,
        s_marks: Vec::new(),
        t_max: flow.t_max.max(s * 2.0),
        ..flow.clone()
    };
    let path = backward_flow(params, &config, root.child("aux-flow", 0).fingerprint())?;
    let phi_s_sg = path.end().sg.clone();
    Ok(AuxiliaryField {
        s,
        psi: x_gff.add(&x_h)?.add(&phi_s_sg)?,
        x_gff,
        x_h,
        phi_s_sg,
    })
}

/// Largest `|X(x) - X(y)| / |x - y|^alpha` over all pairs of sites.
pub fn holder_quotient(field: &Field, alpha: f64) -> f64 {
    let l = field.lattice();
    let n = l.n();
    let v = field.values();
    let mut best = 0.0f64;
    // By translation invariance of the torus metric it suffices to scan
    // offsets once per site.
    for a in 0..n {
        for b in 0..n {
            if a == 0 && b == 0 {
                continue;
            }
            let d = l.offset_distance(a, b).powf(alpha);
            for x in 0..l.site_count() {
                let y = l.shift(x, a, b);
                best = best.max((v[x] - v[y]).abs() / d);
            }
        }
    }
    best
}

/// Spectral variance of `Psi_s(0)` at `z = 0`:
/// `sum_k [1/(mu + 1/s) + g_s(mu) + exp(-s mu)/mu]`.
pub fn auxiliary_variance_z0(params: &SGParams, s: f64) -> Result<f64> {
    let l = params.lattice;
    Ok(massive_gff_multiplier(l, params.mass_sq, s)?.variance()
        + gs_multiplier(l, params.mass_sq, s)?.variance()
        + gff_multiplier(l, params.mass_sq, s)?.variance())
}
