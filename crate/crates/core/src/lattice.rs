//! Periodic lattice geometry on the unit torus and its Fourier dual.
//!
//! Sites are stored row-major: site `(i, j)` has index `i * n + j` and sits at
//! the continuum point `(i / n, j / n)`. Every conversion between indices,
//! integer coordinates and continuum coordinates goes through
//! [`TorusLattice::index`] and [`TorusLattice::coords`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// `4 / pi^2`, the lower constant in `kappa |k|^2 <= -Lap(k) <= |k|^2`.
pub const MULTIPLIER_KAPPA: f64 = 4.0 / (PI * PI);

/// The discretised unit torus with `n` sites per side and spacing `1 / n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TorusLattice {
    n: usize,
}

impl TorusLattice {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("lattice needs n >= 2, got {n}")));
        }
        Ok(Self { n })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Lattice spacing, derived from `n`.
    #[inline]
    pub fn epsilon(&self) -> f64 {
        1.0 / self.n as f64
    }

    #[inline]
    pub fn site_count(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        i * self.n + j
    }

    #[inline]
    pub fn coords(&self, site: usize) -> (usize, usize) {
        (site / self.n, site % self.n)
    }

    /// Continuum coordinates of a site, in `[0, 1)^2`.
    #[inline]
    pub fn point(&self, site: usize) -> [f64; 2] {
        let (i, j) = self.coords(site);
        let n = self.n as f64;
        [i as f64 / n, j as f64 / n]
    }

    /// Site reached from `site` by the residue offset `(a, b)`.
    #[inline]
    pub fn shift(&self, site: usize, a: usize, b: usize) -> usize {
        let (i, j) = self.coords(site);
        self.index((i + a) % self.n, (j + b) % self.n)
    }

    /// Length of the shortest periodic representative of a residue offset.
    #[inline]
    pub fn wrap(&self, a: usize) -> usize {
        let a = a % self.n;
        a.min(self.n - a)
    }

    /// Torus distance of the residue offset `(a, b)`.
    ///
    /// This is the single distance routine for lattice sites: balls, local
    /// maxima, and pair counts all call it, so boundary cases at exactly `r`
    /// are classified identically everywhere.
    #[inline]
    pub fn offset_distance(&self, a: usize, b: usize) -> f64 {
        let da = self.wrap(a) as f64;
        let db = self.wrap(b) as f64;
        (da * da + db * db).sqrt() / self.n as f64
    }

    pub fn site_distance(&self, x: usize, y: usize) -> f64 {
        let (xi, xj) = self.coords(x);
        let (yi, yj) = self.coords(y);
        let a = (yi + self.n - xi) % self.n;
        let b = (yj + self.n - xj) % self.n;
        self.offset_distance(a, b)
    }

    /// Residue offsets `(a, b)` whose torus length is at most `r`.
    /// Always contains `(0, 0)`; no offset is repeated.
    pub fn ball_offsets(&self, r: f64) -> Vec<(usize, usize)> {
        let reach = if r.is_finite() {
            ((r * self.n as f64).floor() as usize).min(self.n)
        } else {
            self.n
        };
        let axis: Vec<usize> = (0..self.n).filter(|&a| self.wrap(a) <= reach).collect();
        let mut out = Vec::with_capacity(axis.len() * axis.len());
        for &a in &axis {
            for &b in &axis {
                if self.offset_distance(a, b) <= r {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Closed ball `{y : |x - y| <= r}` as ascending site indices.
    pub fn ball(&self, x: usize, r: f64) -> Vec<usize> {
        let mut sites: Vec<usize> = self
            .ball_offsets(r.max(0.0))
            .into_iter()
            .map(|(a, b)| self.shift(x, a, b))
            .collect();
        sites.sort_unstable();
        sites
    }

    pub fn dual(&self) -> FourierDual {
        FourierDual::new(*self)
    }

    /// `-Lap(k)` for every mode, in mode-index order.
    pub fn laplacian_spectrum(&self) -> Vec<f64> {
        let dual = self.dual();
        (0..dual.len())
            .map(|m| laplacian_multiplier(self, dual.wave_vector(m)))
            .collect()
    }
}

/// Euclidean distance on the continuum unit torus.
pub fn torus_distance(x: [f64; 2], y: [f64; 2]) -> f64 {
    let mut sq = 0.0;
    for c in 0..2 {
        let d = (x[c] - y[c]).abs().rem_euclid(1.0);
        let d = d.min(1.0 - d);
        sq += d * d;
    }
    sq.sqrt()
}

/// Fourier multiplier of the negative lattice Laplacian,
/// `eps^-2 * sum_i (2 - 2 cos(eps k_i))`.
pub fn laplacian_multiplier(lattice: &TorusLattice, k: [f64; 2]) -> f64 {
    let eps = lattice.epsilon();
    let inv = 1.0 / (eps * eps);
    // 2 - 2cos(x) = 4 sin^2(x/2) avoids cancellation for small x.
    k.iter()
        .map(|&ki| {
            let s = (0.5 * eps * ki).sin();
            4.0 * s * s * inv
        })
        .sum()
}

/// Fourier dual of a [`TorusLattice`]: wave vectors `k in 2 pi Z^2` with
/// `-pi n < k_i <= pi n`.
///
/// Mode `(a, b)` with `a, b in 0..n` has index `a * n + b`, the same layout a
/// two-dimensional DFT uses, and wave vector `2 pi (a~, b~)` where `a~` is
/// `a` folded into `(-n/2, n/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FourierDual {
    lattice: TorusLattice,
}

impl FourierDual {
    pub fn new(lattice: TorusLattice) -> Self {
        Self { lattice }
    }

    pub fn lattice(&self) -> TorusLattice {
        self.lattice
    }

    pub fn len(&self) -> usize {
        self.lattice.site_count()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Signed frequency of a DFT bin, folded into `(-n/2, n/2]`.
    #[inline]
    pub fn frequency(&self, a: usize) -> i64 {
        let n = self.lattice.n as i64;
        let a = a as i64;
        if 2 * a > n {
            a - n
        } else {
            a
        }
    }

    /// Bin of a signed frequency.
    #[inline]
    pub fn bin(&self, f: i64) -> usize {
        f.rem_euclid(self.lattice.n as i64) as usize
    }

    pub fn frequencies(&self, mode: usize) -> (i64, i64) {
        let (a, b) = self.lattice.coords(mode);
        (self.frequency(a), self.frequency(b))
    }

    pub fn wave_vector(&self, mode: usize) -> [f64; 2] {
        let (fa, fb) = self.frequencies(mode);
        [2.0 * PI * fa as f64, 2.0 * PI * fb as f64]
    }

    /// Index of the mode `-k`.
    #[inline]
    pub fn partner(&self, mode: usize) -> usize {
        let n = self.lattice.n;
        let (a, b) = self.lattice.coords(mode);
        self.lattice.index((n - a) % n, (n - b) % n)
    }

    /// Self-paired modes have every component in `{0, n pi}`.
    #[inline]
    pub fn is_self_paired(&self, mode: usize) -> bool {
        self.partner(mode) == mode
    }

    pub fn mode_of_frequencies(&self, fa: i64, fb: i64) -> usize {
        self.lattice.index(self.bin(fa), self.bin(fb))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn distance_examples() {
        assert_abs_diff_eq!(torus_distance([0.9, 0.0], [0.1, 0.0]), 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(
            torus_distance([0.0, 0.0], [0.5, 0.5]),
            2f64.sqrt() / 2.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(torus_distance([0.25, 0.0], [0.0, 0.0]), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn rejects_tiny_lattice() {
        assert!(TorusLattice::new(1).is_err());
        assert!(TorusLattice::new(0).is_err());
    }

    #[test]
    fn ball_examples() {
        let l = TorusLattice::new(8).unwrap();
        assert_eq!(l.ball(0, 1.0 / 8.0).len(), 5);
        assert_eq!(l.ball(0, 1.0 / 8.0), vec![0, 1, 7, 8, 56]);
        assert_eq!(l.ball(27, 0.0), vec![27]);
        assert_eq!(l.ball(0, 1.0).len(), 64);
    }

    #[test]
    fn ball_matches_continuum_distance() {
        let l = TorusLattice::new(12).unwrap();
        for &r in &[0.0, 0.05, 1.0 / 12.0, 0.2, 0.33, 0.5, 0.8] {
            for x in [0, 13, 77, 143] {
                let brute: Vec<usize> = (0..l.site_count())
                    .filter(|&y| torus_distance(l.point(x), l.point(y)) <= r + 1e-12)
                    .collect();
                assert_eq!(l.ball(x, r), brute, "r = {r}, x = {x}");
            }
        }
    }

    #[test]
    fn multiplier_example() {
        let l = TorusLattice::new(4).unwrap();
        assert_eq!(laplacian_multiplier(&l, [0.0, 0.0]), 0.0);
        assert_abs_diff_eq!(laplacian_multiplier(&l, [2.0 * PI, 0.0]), 32.0, epsilon = 1e-12);
    }

    #[test]
    fn multiplier_sandwich_exhaustive() {
        for n in 2..=64 {
            let l = TorusLattice::new(n).unwrap();
            let dual = l.dual();
            for m in 0..dual.len() {
                let k = dual.wave_vector(m);
                let k2 = k[0] * k[0] + k[1] * k[1];
                let lap = laplacian_multiplier(&l, k);
                if m == 0 {
                    assert_eq!(lap, 0.0);
                    continue;
                }
                assert!(lap > 0.0);
                assert!(lap <= k2 * (1.0 + 1e-12), "n={n} m={m}");
                assert!(lap >= MULTIPLIER_KAPPA * k2 * (1.0 - 1e-12), "n={n} m={m}");
            }
        }
    }

    #[test]
    fn dual_pairing() {
        for n in [2usize, 3, 8, 9] {
            let dual = TorusLattice::new(n).unwrap().dual();
            let mut selfp = 0;
            for m in 0..dual.len() {
                assert_eq!(dual.partner(dual.partner(m)), m);
                let (fa, fb) = dual.frequencies(m);
                assert!(2 * fa > -(n as i64) && 2 * fa <= n as i64);
                assert!(2 * fb > -(n as i64) && 2 * fb <= n as i64);
                if dual.is_self_paired(m) {
                    selfp += 1;
                    assert!(fa == 0 || 2 * fa == n as i64);
                    assert!(fb == 0 || 2 * fb == n as i64);
                }
            }
            assert_eq!(selfp, if n % 2 == 0 { 4 } else { 1 });
        }
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(
            x in prop::array::uniform2(0.0f64..1.0),
            y in prop::array::uniform2(0.0f64..1.0),
            z in prop::array::uniform2(0.0f64..1.0),
        ) {
            let dxy = torus_distance(x, y);
            prop_assert!((dxy - torus_distance(y, x)).abs() < 1e-15);
            prop_assert!(dxy <= torus_distance(x, z) + torus_distance(z, y) + 1e-12);
            prop_assert!(dxy <= 2f64.sqrt() / 2.0 + 1e-12);
        }

        #[test]
        fn distance_translation_invariant(
            x in prop::array::uniform2(0.0f64..1.0),
            y in prop::array::uniform2(0.0f64..1.0),
            s in prop::array::uniform2(0.0f64..1.0),
        ) {
            let shift = |p: [f64; 2]| [(p[0] + s[0]).rem_euclid(1.0), (p[1] + s[1]).rem_euclid(1.0)];
            prop_assert!((torus_distance(x, y) - torus_distance(shift(x), shift(y))).abs() < 1e-12);
        }

        #[test]
        fn ball_monotone_and_covariant(
            n in 2usize..20, x in 0usize..400, a in 0usize..20, b in 0usize..20,
            r1 in 0.0f64..0.8, dr in 0.0f64..0.3,
        ) {
            let l = TorusLattice::new(n).unwrap();
            let x = x % l.site_count();
            let small = l.ball(x, r1);
            let big = l.ball(x, r1 + dr);
            prop_assert!(small.contains(&x));
            prop_assert!(small.iter().all(|s| big.binary_search(s).is_ok()));
            let y = l.shift(x, a, b);
            let mut moved: Vec<usize> = small.iter().map(|&s| l.shift(s, a, b)).collect();
            moved.sort_unstable();
            prop_assert_eq!(moved, l.ball(y, r1));
        }
    }
}
