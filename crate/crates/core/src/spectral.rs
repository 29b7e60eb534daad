//! Exact Gaussian sampling on the torus by Fourier synthesis.
//!
//! Convention: a field with multiplier `c(k)` is
//! `phi(x) = sum_k sqrt(c(k)) exp(i k.x) X(k)` where `X` is a Hermitian
//! standard complex Gaussian vector (`E|X(k)|^2 = 1`). The per-site variance
//! is therefore `sum_k c(k)` and the covariance at displacement `x` is
//! `sum_k c(k) cos(k.x)`. With this convention the massive GFF has
//! `c(k) = 1 / (-Lap(k) + m^2)` and per-site variance close to
//! `(1 / 2 pi) log n`.

use std::f64::consts::FRAC_1_SQRT_2;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fft;
use crate::lattice::TorusLattice;
use crate::rng::StreamKey;

/// A real configuration on the sites of a lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    lattice: TorusLattice,
    values: Vec<f64>,
}

impl Field {
    pub fn new(lattice: TorusLattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.site_count() {
            return Err(invalid(format!(
                "field has {} values, lattice needs {}",
                values.len(),
                lattice.site_count()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite field value at site {i}")));
        }
        Ok(Self { lattice, values })
    }

    pub fn zeros(lattice: TorusLattice) -> Self {
        Self::constant(lattice, 0.0)
    }

    pub fn constant(lattice: TorusLattice, c: f64) -> Self {
        Self {
            lattice,
            values: vec![c; lattice.site_count()],
        }
    }

    pub fn from_fn(lattice: TorusLattice, f: impl Fn(usize) -> f64) -> Self {
        Self {
            lattice,
            values: (0..lattice.site_count()).map(f).collect(),
        }
    }

    #[inline]
    pub fn lattice(&self) -> TorusLattice {
        self.lattice
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, site: usize) -> f64 {
        self.values[site]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    fn check_same(&self, other: &Field) -> Result<()> {
        if self.lattice != other.lattice {
            return Err(Error::LatticeMismatch {
                expected: self.lattice.n(),
                found: other.lattice.n(),
            });
        }
        Ok(())
    }

    /// `a * self + b * other`.
    pub fn axpby(&self, a: f64, other: &Field, b: f64) -> Result<Field> {
        self.check_same(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Field {
            lattice: self.lattice,
            values,
        })
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.axpby(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.axpby(1.0, other, -1.0)
    }

    pub fn add_constant(&self, c: f64) -> Field {
        Field {
            lattice: self.lattice,
            values: self.values.iter().map(|v| v + c).collect(),
        }
    }

    pub fn scaled(&self, a: f64) -> Field {
        Field {
            lattice: self.lattice,
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    /// Cyclic shift: the returned field takes at site `x + (a, b)` the value
    /// this field takes at `x`.
    pub fn shifted(&self, a: usize, b: usize) -> Field {
        let mut values = vec![0.0; self.values.len()];
        for (x, &v) in self.values.iter().enumerate() {
            values[self.lattice.shift(x, a, b)] = v;
        }
        Field {
            lattice: self.lattice,
            values,
        }
    }

    /// Values on the coarse sublattice of resolution `coarse.n()`.
    pub fn restrict(&self, coarse: TorusLattice) -> Result<Field> {
        let (nf, nc) = (self.lattice.n(), coarse.n());
        if nf % nc != 0 {
            return Err(Error::NonDivisible { coarse: nc, fine: nf });
        }
        let step = nf / nc;
        Ok(Field::from_fn(coarse, |s| {
            let (i, j) = coarse.coords(s);
            self.values[self.lattice.index(i * step, j * step)]
        }))
    }
}

/// Hermitian standard complex Gaussian coefficients, one per Fourier mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralNoise {
    lattice: TorusLattice,
    coeffs: Vec<Complex64>,
    seed: u64,
}

impl SpectralNoise {
    pub fn lattice(&self) -> TorusLattice {
        self.lattice
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Seed (or stream fingerprint) the coefficients were drawn from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scaled(&self, a: f64) -> SpectralNoise {
        SpectralNoise {
            lattice: self.lattice,
            coeffs: self.coeffs.iter().map(|c| c * a).collect(),
            seed: self.seed,
        }
    }

    /// Largest violation of `X(-k) = conj X(k)`.
    pub fn hermitian_defect(&self) -> f64 {
        let dual = self.lattice.dual();
        (0..dual.len())
            .map(|m| (self.coeffs[dual.partner(m)] - self.coeffs[m].conj()).norm())
            .fold(0.0, f64::max)
    }
}

/// Draws spectral noise from the stream `root(seed) / "spectral-noise"`.
pub fn sample_noise(lattice: TorusLattice, seed: u64) -> SpectralNoise {
    let mut noise = sample_noise_keyed(lattice, StreamKey::root(seed).child("spectral-noise", 0));
    noise.seed = seed;
    noise
}

/// Draws spectral noise from an explicit stream. Modes are visited in index
/// order; each pair `{k, -k}` consumes two normals at its lower index, each
/// self-paired mode one.
pub fn sample_noise_keyed(lattice: TorusLattice, key: StreamKey) -> SpectralNoise {
    let mut rng = key.rng();
    let dual = lattice.dual();
    let mut coeffs = vec![Complex64::default(); dual.len()];
    for m in 0..dual.len() {
        let p = dual.partner(m);
        if p < m {
            continue;
        }
        if p == m {
            let re: f64 = rng.sample(StandardNormal);
            coeffs[m] = Complex64::new(re, 0.0);
        } else {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let c = Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2);
            coeffs[m] = c;
            coeffs[p] = c.conj();
        }
    }
    SpectralNoise {
        lattice,
        coeffs,
        seed: key.fingerprint(),
    }
}

/// Non-negative per-mode covariance (or filter) values.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMultiplier {
    lattice: TorusLattice,
    values: Vec<f64>,
    label: String,
}

impl SpectralMultiplier {
    pub fn new(lattice: TorusLattice, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if values.len() != lattice.site_count() {
            return Err(invalid("multiplier length does not match the lattice"));
        }
        if let Some(m) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Numerical(format!(
                "multiplier value {} at mode {m} is not finite and non-negative",
                values[m]
            )));
        }
        Ok(Self {
            lattice,
            values,
            label: label.into(),
        })
    }

    fn from_spectrum(
        lattice: TorusLattice,
        mass_sq: f64,
        label: String,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let values = lattice
            .laplacian_spectrum()
            .into_iter()
            .map(|lap| f(lap + mass_sq))
            .collect();
        Self::new(lattice, values, label)
    }

    pub fn lattice(&self) -> TorusLattice {
        self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Per-site variance of the synthesized field, `sum_k c(k)`.
    pub fn variance(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Covariance between `phi(0)` and `phi(x)` for the residue offset
    /// `(a, b)`: `sum_k c(k) cos(k.x)`.
    pub fn covariance_at(&self, a: usize, b: usize) -> f64 {
        let dual = self.lattice.dual();
        let n = self.lattice.n() as f64;
        let x = [a as f64 / n, b as f64 / n];
        self.values
            .iter()
            .enumerate()
            .map(|(m, c)| {
                let k = dual.wave_vector(m);
                c * (k[0] * x[0] + k[1] * x[1]).cos()
            })
            .sum()
    }

    pub fn sqrt(&self) -> SpectralMultiplier {
        SpectralMultiplier {
            lattice: self.lattice,
            values: self.values.iter().map(|v| v.sqrt()).collect(),
            label: format!("sqrt({})", self.label),
        }
    }
}

fn check_mass(mass_sq: f64) -> Result<()> {
    if !(mass_sq > 0.0) || !mass_sq.is_finite() {
        return Err(invalid(format!("mass_sq must be positive, got {mass_sq}")));
    }
    Ok(())
}

fn check_scale(name: &str, s: f64, allow_zero: bool) -> Result<()> {
    let ok = if allow_zero { s >= 0.0 } else { s > 0.0 };
    if !ok || s.is_nan() {
        return Err(invalid(format!("{name} out of range: {s}")));
    }
    Ok(())
}

/// Covariance of the decomposed GFF `Phi_t = int_t^inf q_u dW_u`:
/// `exp(-t mu) / mu` with `mu = -Lap(k) + m^2`. At `t = 0` this is the
/// full massive GFF.
pub fn gff_multiplier(lattice: TorusLattice, mass_sq: f64, t: f64) -> Result<SpectralMultiplier> {
    check_mass(mass_sq)?;
    check_scale("t", t, true)?;
    let label = format!("gff(m2={mass_sq}, t={t})");
    SpectralMultiplier::from_spectrum(lattice, mass_sq, label, |mu| {
        if t.is_infinite() {
            0.0
        } else {
            (-t * mu).exp() / mu
        }
    })
}

/// `int_0^t exp(-s mu) ds`, with the `mu -> 0` limit handled.
#[inline]
pub(crate) fn heat_integral(mu: f64, t: f64) -> f64 {
    if t.is_infinite() {
        return if mu > 0.0 { 1.0 / mu } else { f64::INFINITY };
    }
    let u = t * mu;
    if u.abs() < 1e-12 {
        t * (1.0 - 0.5 * u)
    } else {
        -(-u).exp_m1() / mu
    }
}

/// `int_t0^t1 exp(-s mu) ds` for `t0 <= t1`, evaluated without cancellation.
#[inline]
pub(crate) fn heat_increment(mu: f64, t0: f64, t1: f64) -> f64 {
    (-t0 * mu).exp() * heat_integral(mu, t1 - t0)
}

/// Multiplier of `c_t = int_0^t cdot_s ds`, namely `(1 - exp(-t mu)) / mu`.
/// For `mass_sq = 0` the zero mode takes its limit `t`.
pub fn heat_kernel_multiplier(
    lattice: TorusLattice,
    mass_sq: f64,
    t: f64,
) -> Result<SpectralMultiplier> {
    check_scale("mass_sq", mass_sq, true)?;
    check_scale("t", t, true)?;
    let label = format!("heat(m2={mass_sq}, t={t})");
    SpectralMultiplier::from_spectrum(lattice, mass_sq, label, |mu| heat_integral(mu, t))
}

/// Multiplier of the heat kernel `cdot_t = exp(t (Lap - m^2))`.
pub fn heat_kernel_rate_multiplier(
    lattice: TorusLattice,
    mass_sq: f64,
    t: f64,
) -> Result<SpectralMultiplier> {
    check_scale("mass_sq", mass_sq, true)?;
    check_scale("t", t, true)?;
    let label = format!("heat-rate(m2={mass_sq}, t={t})");
    SpectralMultiplier::from_spectrum(lattice, mass_sq, label, |mu| (-t * mu).exp())
}

/// Multiplier of `c_t1 - c_t0`, the covariance of the GFF increment between
/// scales `t0 <= t1`.
pub fn heat_increment_multiplier(
    lattice: TorusLattice,
    mass_sq: f64,
    t0: f64,
    t1: f64,
) -> Result<SpectralMultiplier> {
    check_scale("mass_sq", mass_sq, true)?;
    check_scale("t0", t0, true)?;
    if !(t1 >= t0) {
        return Err(invalid(format!("need t0 <= t1, got {t0} > {t1}")));
    }
    let label = format!("heat-increment(m2={mass_sq}, {t0}..{t1})");
    SpectralMultiplier::from_spectrum(lattice, mass_sq, label, |mu| heat_increment(mu, t0, t1))
}

/// `g_s(mu) = (1 - exp(-mu s)) / mu - 1 / (mu + 1/s)`.
///
/// Near `mu s = 0` a four-term Taylor series replaces the difference of
/// nearly equal terms.
pub fn g_s(mu: f64, s: f64) -> f64 {
    let u = mu * s;
    if u < 1e-4 {
        s * u * (0.5 - u * (5.0 / 6.0 - u * (23.0 / 24.0 - u * (119.0 / 120.0))))
    } else {
        // Common denominator: (1/s)(1 - e^{-u}(1 + u)) / (mu (mu + 1/s)).
        let inv_s = 1.0 / s;
        let num = inv_s * (-(-u).exp_m1() - u * (-u).exp());
        num / (mu * (mu + inv_s))
    }
}

/// Covariance of the smooth field `X_s^h`: `g_s(-Lap(k) + m^2)`.
pub fn gs_multiplier(lattice: TorusLattice, mass_sq: f64, s: f64) -> Result<SpectralMultiplier> {
    check_scale("mass_sq", mass_sq, true)?;
    check_scale("s", s, false)?;
    let label = format!("g_s(m2={mass_sq}, s={s})");
    SpectralMultiplier::from_spectrum(lattice, mass_sq, label, |mu| g_s(mu, s))
}

/// Covariance of the GFF with mass `m^2 + 1/s`: `1 / (-Lap(k) + m^2 + 1/s)`.
pub fn massive_gff_multiplier(
    lattice: TorusLattice,
    mass_sq: f64,
    s: f64,
) -> Result<SpectralMultiplier> {
    check_scale("mass_sq", mass_sq, true)?;
    check_scale("s", s, false)?;
    let label = format!("massive-gff(m2={mass_sq}, s={s})");
    SpectralMultiplier::from_spectrum(lattice, mass_sq, label, |mu| 1.0 / (mu + 1.0 / s))
}

/// Synthesizes the field and also returns the largest imaginary part left
/// by the inverse transform.
pub fn synthesize_with_residue(
    noise: &SpectralNoise,
    mult: &SpectralMultiplier,
) -> Result<(Field, f64)> {
    if noise.lattice != mult.lattice {
        return Err(Error::LatticeMismatch {
            expected: noise.lattice.n(),
            found: mult.lattice.n(),
        });
    }
    let n = noise.lattice.n();
    let mut buf: Vec<Complex64> = noise
        .coeffs
        .iter()
        .zip(&mult.values)
        .map(|(x, c)| x * c.sqrt())
        .collect();
    fft::inverse_2d(&mut buf, n);
    let residue = buf.iter().fold(0.0f64, |m, c| m.max(c.im.abs()));
    let values = buf.into_iter().map(|c| c.re).collect();
    Ok((Field::new(noise.lattice, values)?, residue))
}

/// `phi(x) = sum_k sqrt(c(k)) exp(i k.x) X(k)`.
pub fn synthesize(noise: &SpectralNoise, mult: &SpectralMultiplier) -> Result<Field> {
    synthesize_with_residue(noise, mult).map(|(f, _)| f)
}

/// Draws one field with the given covariance from a keyed stream.
pub fn sample_field(mult: &SpectralMultiplier, key: StreamKey) -> Result<Field> {
    synthesize(&sample_noise_keyed(mult.lattice, key), mult)
}

/// Largest per-mode violation of
/// `gff(t=0) - gff(t=s) = massive_gff(s) + g_s`.
pub fn decomposition_identity_check(lattice: TorusLattice, mass_sq: f64, s: f64) -> Result<f64> {
    let full = gff_multiplier(lattice, mass_sq, 0.0)?;
    let coarse = gff_multiplier(lattice, mass_sq, s)?;
    let massive = massive_gff_multiplier(lattice, mass_sq, s)?;
    let smooth = gs_multiplier(lattice, mass_sq, s)?;
    Ok((0..lattice.site_count())
        .map(|m| {
            (full.values[m] - coarse.values[m] - massive.values[m] - smooth.values[m]).abs()
        })
        .fold(0.0, f64::max))
}

/// How one coarse mode reads the fine noise: `X_c(k) = sum_j w_j X_f(m_j)`.
fn refinement_map(
    fine: TorusLattice,
    coarse: TorusLattice,
) -> Result<Vec<Vec<(usize, f64)>>> {
    let (nf, nc) = (fine.n(), coarse.n());
    if nf % nc != 0 {
        return Err(Error::NonDivisible { coarse: nc, fine: nf });
    }
    let fdual = fine.dual();
    let cdual = coarse.dual();
    let nyquist = |f: i64| nc % 2 == 0 && 2 * f == nc as i64;
    let mut map = Vec::with_capacity(cdual.len());
    for m in 0..cdual.len() {
        let (fa, fb) = cdual.frequencies(m);
        let direct = fdual.mode_of_frequencies(fa, fb);
        if nf == nc || (!nyquist(fa) && !nyquist(fb)) {
            map.push(vec![(direct, 1.0)]);
            continue;
        }
        // On the coarse lattice k and its coarse partner k' are tied by
        // Hermitian symmetry, but on the fine lattice they are distinct
        // modes. X_c(k) = (X_f(k) + conj X_f(k')) / sqrt 2 restores the
        // symmetry and the unit variance, and conj X_f(k') = X_f(-k').
        let (pa, pb) = cdual.frequencies(cdual.partner(m));
        let mirrored = fdual.mode_of_frequencies(-pa, -pb);
        map.push(vec![(direct, FRAC_1_SQRT_2), (mirrored, FRAC_1_SQRT_2)]);
    }
    Ok(map)
}

/// Restricts fine-lattice noise to the coarse dual so that fields at both
/// resolutions are driven by the same `X(k)`.
///
/// Interior modes are copied. Modes with a component on the coarse Nyquist
/// frequency are symmetrized (see [`refinement_map`]) so the result is again
/// Hermitian with unit variances.
pub fn shared_noise_refinement(
    noise_fine: &SpectralNoise,
    lattice_coarse: TorusLattice,
) -> Result<SpectralNoise> {
    let map = refinement_map(noise_fine.lattice, lattice_coarse)?;
    let coeffs = map
        .iter()
        .map(|terms| {
            terms
                .iter()
                .map(|&(m, w)| noise_fine.coeffs[m] * w)
                .sum::<Complex64>()
        })
        .collect();
    Ok(SpectralNoise {
        lattice: lattice_coarse,
        coeffs,
        seed: noise_fine.seed,
    })
}

/// Expected squared difference, at any coarse site, between the coarse field
/// synthesized from refined noise and the fine reference field.
///
/// For modes off the coarse Nyquist lines this is the familiar
/// `sum_k |q_c(k) 1{k in coarse dual} - q_ref(k)|^2`; Nyquist modes are
/// accounted for through the same symmetrization the refinement uses.
pub fn refinement_discrepancy(
    coarse: &SpectralMultiplier,
    reference: &SpectralMultiplier,
) -> Result<f64> {
    let map = refinement_map(reference.lattice, coarse.lattice)?;
    let mut effective = vec![0.0; reference.lattice.site_count()];
    for (k, terms) in map.iter().enumerate() {
        let q = coarse.values[k].sqrt();
        for &(m, w) in terms {
            effective[m] += q * w;
        }
    }
    Ok(effective
        .iter()
        .zip(&reference.values)
        .map(|(a, c)| {
            let d = a - c.sqrt();
            d * d
        })
        .sum())
}
