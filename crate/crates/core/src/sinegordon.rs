//! The lattice sine-Gordon measure and a spectrally preconditioned MALA
//! sampler for it.
//!
//! Energy:
//! `H(phi) = eps^2 sum_x [ phi (-Lap phi) / 2 + m^2 phi^2 / 2 + 2 z eps^(-beta/4pi) cos(sqrt(beta) phi) ]`.
//!
//! Gradients in this module are taken with respect to the plain coordinates
//! `phi(x)`, so they carry the explicit site weight `eps^2`. The MALA
//! preconditioner `P = eps^-2 (-Lap + m^2)^-1` absorbs that weight, which
//! makes `P^(1/2) xi` exactly a GFF sample and the proposal scale independent
//! of `eps`.

use std::f64::consts::PI;

use log::warn;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fft;
use crate::lattice::TorusLattice;
use crate::rng::StreamKey;
use crate::spectral::{gff_multiplier, sample_noise_keyed, synthesize, Field, SpectralMultiplier};

/// Optimal MALA acceptance rate targeted during burn-in.
pub const TARGET_ACCEPTANCE: f64 = 0.574;

/// Physics configuration of the sine-Gordon measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SGParams {
    pub z: f64,
    pub beta: f64,
    pub mass_sq: f64,
    pub lattice: TorusLattice,
    vertex: f64,
}

impl SGParams {
    pub fn new(lattice: TorusLattice, z: f64, beta: f64, mass_sq: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 6.0 * PI) {
            return Err(invalid(format!("beta out of range (0, 6π): {beta}")));
        }
        if !(mass_sq > 0.0 && mass_sq.is_finite()) {
            return Err(invalid(format!("mass_sq must be positive, got {mass_sq}")));
        }
        if !z.is_finite() {
            return Err(invalid("z must be finite"));
        }
        let vertex = 2.0 * z * lattice.epsilon().powf(-beta / (4.0 * PI));
        if !vertex.is_finite() {
            return Err(Error::Numerical("vertex coefficient overflows".into()));
        }
        Ok(Self {
            z,
            beta,
            mass_sq,
            lattice,
            vertex,
        })
    }

    /// Unit-mass parameters, the standard setting.
    pub fn unit_mass(lattice: TorusLattice, z: f64, beta: f64) -> Result<Self> {
        Self::new(lattice, z, beta, 1.0)
    }

    /// `2 z eps^(-beta / 4 pi)`.
    #[inline]
    pub fn vertex(&self) -> f64 {
        self.vertex
    }

    #[inline]
    pub fn sqrt_beta(&self) -> f64 {
        self.beta.sqrt()
    }

    /// True when the cosine term is large compared with the mass, the regime
    /// in which MALA chains get stiff.
    pub fn is_stiff(&self) -> bool {
        self.vertex.abs() > 50.0 * self.mass_sq
    }

    pub fn gaussian_covariance(&self) -> Result<SpectralMultiplier> {
        gff_multiplier(self.lattice, self.mass_sq, 0.0)
    }
}

/// `(-Lap phi)(x)` with the nearest-neighbour stencil.
pub fn neg_laplacian(field: &Field) -> Vec<f64> {
    let l = field.lattice();
    let n = l.n();
    let inv = 1.0 / (l.epsilon() * l.epsilon());
    let v = field.values();
    let mut out = vec![0.0; v.len()];
    for i in 0..n {
        let up = (i + n - 1) % n;
        let down = (i + 1) % n;
        for j in 0..n {
            let left = (j + n - 1) % n;
            let right = (j + 1) % n;
            let c = v[i * n + j];
            let nb = v[up * n + j] + v[down * n + j] + v[i * n + left] + v[i * n + right];
            out[i * n + j] = inv * (4.0 * c - nb);
        }
    }
    out
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

/// Sine-Gordon energy `H(phi)`; the target density is proportional to
/// `exp(-H)`.
pub fn energy(params: &SGParams, phi: &Field) -> Result<f64> {
    check_lattice(params, phi)?;
    let eps2 = params.lattice.epsilon().powi(2);
    let lap = neg_laplacian(phi);
    let sb = params.sqrt_beta();
    let sum: f64 = phi
        .values()
        .iter()
        .zip(&lap)
        .map(|(&p, &l)| 0.5 * p * l + 0.5 * params.mass_sq * p * p + params.vertex * (sb * p).cos())
        .sum();
    Ok(eps2 * sum)
}

/// `dH / dphi(x) = eps^2 [ (-Lap phi)(x) + m^2 phi(x) - 2 z sqrt(beta) eps^(-beta/4pi) sin(sqrt(beta) phi(x)) ]`.
pub fn grad_energy(params: &SGParams, phi: &Field) -> Result<Field> {
    check_lattice(params, phi)?;
    let eps2 = params.lattice.epsilon().powi(2);
    let lap = neg_laplacian(phi);
    let sb = params.sqrt_beta();
    let values = phi
        .values()
        .iter()
        .zip(&lap)
        .map(|(&p, &l)| eps2 * (l + params.mass_sq * p - params.vertex * sb * (sb * p).sin()))
        .collect();
    Field::new(params.lattice, values)
}

/// Scalars used to compare samplers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub mean: f64,
    /// Spatial mean of `phi^2`, an estimate of the pointwise variance.
    pub mean_sq: f64,
    pub mean_cos: f64,
    pub max: f64,
}

impl Observables {
    pub const NAMES: [&'static str; 4] = ["mean", "mean_sq", "mean_cos", "max"];

    pub fn as_array(&self) -> [f64; 4] {
        [self.mean, self.mean_sq, self.mean_cos, self.max]
    }
}

pub fn observable_suite(phi: &Field, beta: f64) -> Observables {
    let v = phi.values();
    let inv = 1.0 / v.len() as f64;
    let sb = beta.sqrt();
    Observables {
        mean: v.iter().sum::<f64>() * inv,
        mean_sq: v.iter().map(|x| x * x).sum::<f64>() * inv,
        mean_cos: v.iter().map(|x| (sb * x).cos()).sum::<f64>() * inv,
        max: phi.max(),
    }
}

/// `E[phi(0)^2]` and `E[cos(sqrt(beta) phi(0))]` under the sine-Gordon
/// measure on the 2x2 torus, by Gauss-Hermite quadrature of the GFF
/// reweighted by `exp(-eps^2 sum_x vertex cos(sqrt(beta) phi(x)))`.
pub fn quadrature_moments(params: &SGParams, order: usize) -> Result<[f64; 2]> {
    let g = crate::quadrature::TinyGaussian::new(&params.gaussian_covariance()?, order)?;
    let eps2 = params.lattice.epsilon().powi(2);
    let sb = params.sqrt_beta();
    let [z, sq, c] = g.expect(|phi| {
        let v0: f64 = phi.iter().map(|p| params.vertex * (sb * p).cos()).sum();
        let w = (-eps2 * v0).exp();
        [w, w * phi[0] * phi[0], w * (sb * phi[0]).cos()]
    });
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::Numerical("quadrature normalization vanished".into()));
    }
    Ok([sq / z, c / z])
}

/// MALA proposal machinery for a fixed parameter set.
#[derive(Debug, Clone)]
pub struct Mala {
    params: SGParams,
    /// `1 / (-Lap(k) + m^2)` per mode.
    inv_mu: Vec<f64>,
    gff: SpectralMultiplier,
}

/// State carried between MALA steps: the point, its energy, gradient and
/// preconditioned gradient.
#[derive(Debug, Clone)]
pub struct MalaState {
    pub phi: Field,
    pub energy: f64,
    grad: Vec<f64>,
    pgrad: Vec<f64>,
}

impl MalaState {
    /// Plain gradient of the energy at `phi`.
    pub fn grad(&self) -> &[f64] {
        &self.grad
    }
}

impl Mala {
    pub fn new(params: SGParams) -> Result<Self> {
        let gff = params.gaussian_covariance()?;
        Ok(Self {
            params,
            inv_mu: gff.values().to_vec(),
            gff,
        })
    }

    pub fn params(&self) -> &SGParams {
        &self.params
    }

    /// `P g = eps^-2 (-Lap + m^2)^-1 g`.
    pub fn precondition(&self, g: &[f64]) -> Vec<f64> {
        let l = self.params.lattice;
        let inv_eps2 = 1.0 / l.epsilon().powi(2);
        fft::apply_multiplier(g, &self.inv_mu, l.n())
            .into_iter()
            .map(|v| v * inv_eps2)
            .collect()
    }

    /// `v^T P^-1 v = eps^2 v^T (-Lap + m^2) v`.
    pub fn inverse_norm_sq(&self, v: &[f64]) -> Result<f64> {
        let f = Field::new(self.params.lattice, v.to_vec())?;
        let lap = neg_laplacian(&f);
        let eps2 = self.params.lattice.epsilon().powi(2);
        Ok(eps2
            * v.iter()
                .zip(&lap)
                .map(|(x, l)| x * (l + self.params.mass_sq * x))
                .sum::<f64>())
    }

    pub fn state(&self, phi: Field) -> Result<MalaState> {
        let energy = energy(&self.params, &phi)?;
        if !energy.is_finite() {
            return Err(Error::Numerical("non-finite energy".into()));
        }
        let grad = grad_energy(&self.params, &phi)?.into_values();
        let pgrad = self.precondition(&grad);
        Ok(MalaState {
            phi,
            energy,
            grad,
            pgrad,
        })
    }

    /// `log q(to | from)` up to the Gaussian normalization, which cancels in
    /// every acceptance ratio.
    pub fn log_proposal(&self, from: &MalaState, to: &Field, h: f64) -> Result<f64> {
        let diff: Vec<f64> = to
            .values()
            .iter()
            .zip(from.phi.values())
            .zip(&from.pgrad)
            .map(|((y, x), pg)| y - x + 0.5 * h * pg)
            .collect();
        Ok(-self.inverse_norm_sq(&diff)? / (2.0 * h))
    }

    /// `log` of the Metropolis-Hastings ratio for the move `from -> to`.
    pub fn log_accept_ratio(&self, from: &MalaState, to: &MalaState, h: f64) -> Result<f64> {
        Ok(from.energy - to.energy + self.log_proposal(to, &from.phi, h)?
            - self.log_proposal(from, &to.phi, h)?)
    }

    /// `phi - (h/2) P grad H + sqrt(h) P^(1/2) xi`, with `P^(1/2) xi` drawn as
    /// a GFF sample from `key`.
    pub fn propose(&self, from: &MalaState, h: f64, key: StreamKey) -> Result<Field> {
        let xi = synthesize(&sample_noise_keyed(self.params.lattice, key), &self.gff)?;
        let sh = h.sqrt();
        let values = from
            .phi
            .values()
            .iter()
            .zip(&from.pgrad)
            .zip(xi.values())
            .map(|((x, pg), z)| x - 0.5 * h * pg + sh * z)
            .collect();
        Field::new(self.params.lattice, values)
    }
}

/// Run configuration for one MALA chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MalaConfig {
    pub step_size: f64,
    pub n_samples: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Adapt the step size toward [`TARGET_ACCEPTANCE`] during burn-in.
    pub adapt: bool,
}

impl MalaConfig {
    pub fn new(step_size: f64, n_samples: usize, burn_in: usize, thin: usize, seed: u64) -> Self {
        Self {
            step_size,
            n_samples,
            burn_in,
            thin,
            seed,
            adapt: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    /// Acceptance rate over the measurement phase.
    pub acceptance_rate: f64,
    /// Integrated autocorrelation time, in MALA steps, of the spatial mean.
    pub autocorrelation_time: f64,
    pub samples_kept: usize,
    /// Step size used during measurement.
    pub step_size: f64,
    pub warning: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub samples: Vec<Field>,
    pub diagnostics: ChainDiagnostics,
}

/// Integrated autocorrelation time with Sokal's automatic window (`c = 5`).
/// Never below 0.5.
pub fn integrated_autocorrelation_time(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return 0.5;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let c0 = centered.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return 0.5;
    }
    let mut tau = 0.5;
    for lag in 1..n / 2 {
        let c: f64 = centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64;
        tau += c / c0;
        if lag as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(0.5)
}

/// Metropolis-adjusted Langevin chain targeting `exp(-H)`, started at zero.
///
/// Proposal noise for step `i` comes from `root(seed) / "mala-proposal" / i`
/// and the accept draw from `root(seed) / "mala-accept" / i`, so a chain is a
/// pure function of `(params, config)`.
pub fn mala_chain(params: &SGParams, config: &MalaConfig) -> Result<ChainOutput> {
    if !(config.step_size > 0.0) {
        return Err(invalid("step_size must be positive"));
    }
    if config.n_samples == 0 || config.thin == 0 {
        return Err(invalid("n_samples and thin must be at least 1"));
    }
    let mala = Mala::new(*params)?;
    let root = StreamKey::root(config.seed);
    let mut state = mala.state(Field::zeros(params.lattice))?;
    let mut log_h = config.step_size.ln();
    let total = config.burn_in + config.n_samples * config.thin;
    let mut samples = Vec::with_capacity(config.n_samples);
    let mut accepted = 0usize;
    let mut trace = Vec::with_capacity(config.n_samples * config.thin);

    for step in 0..total {
        let h = log_h.exp();
        let proposal = mala.propose(&state, h, root.child("mala-proposal", step as u64))?;
        let candidate = mala.state(proposal)?;
        let log_ratio = mala.log_accept_ratio(&state, &candidate, h)?;
        if !log_ratio.is_finite() {
            return Err(Error::Numerical(format!("non-finite acceptance ratio at step {step}")));
        }
        let u: f64 = root.child("mala-accept", step as u64).rng().gen();
        let accept = u.ln() < log_ratio;
        if accept {
            state = candidate;
        }
        if step < config.burn_in {
            if config.adapt {
                let rate = log_ratio.min(0.0).exp();
                let gain = 1.0 / ((step + 1) as f64).powf(0.6);
                log_h += gain * (rate - TARGET_ACCEPTANCE);
            }
        } else {
            accepted += accept as usize;
            trace.push(state.phi.mean());
            if (step - config.burn_in + 1) % config.thin == 0 {
                samples.push(state.phi.clone());
            }
        }
    }

    let measured = total - config.burn_in;
    let acceptance_rate = accepted as f64 / measured as f64;
    let warning = if !(0.1..=0.9).contains(&acceptance_rate) {
        let msg = format!("acceptance rate {acceptance_rate:.3} outside [0.1, 0.9]");
        warn!("{msg}");
        Some(msg)
    } else {
        None
    };
    Ok(ChainOutput {
        diagnostics: ChainDiagnostics {
            acceptance_rate,
            autocorrelation_time: integrated_autocorrelation_time(&trace),
            samples_kept: samples.len(),
            step_size: log_h.exp(),
            warning,
        },
        samples,
    })
}

/// Independent chains in parallel; chain `c` uses the seed derived from
/// `(config.seed, c)`. Samples are concatenated in chain order.
pub fn mala_chains(
    params: &SGParams,
    config: &MalaConfig,
    n_chains: usize,
) -> Result<Vec<ChainOutput>> {
    (0..n_chains)
        .into_par_iter()
        .map(|c| {
            let seed = StreamKey::root(config.seed).child("mala-chain", c as u64).fingerprint();
            mala_chain(params, &MalaConfig { seed, ..*config })
        })
        .collect()
}
