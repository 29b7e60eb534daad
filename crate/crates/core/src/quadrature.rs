//! Tensor-product Gauss-Hermite quadrature for Gaussian expectations on the
//! 2x2 torus, where every Fourier mode is real and the field is an explicit
//! linear image of four independent standard normals.

use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::lattice::TorusLattice;
use crate::spectral::SpectralMultiplier;

/// Nodes and weights for `E[f(X)]`, `X ~ N(0, 1)`, exact for polynomials of
/// degree `< 2 * order`.
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    // Newton iteration on the orthonormal physicists' Hermite recurrence.
    let m = order;
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let pim4 = PI.powf(-0.25);
    let half = m.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..half {
        z = match i {
            0 => (2.0 * m as f64 + 1.0).sqrt() - 1.855_75 * (2.0 * m as f64 + 1.0).powf(-0.166_67),
            1 => z - 1.14 * (m as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..m {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2 - (j as f64 / (j as f64 + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * m as f64).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        nodes[i] = z;
        nodes[m - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[m - 1 - i] = weights[i];
    }
    // Physicists' weight exp(-x^2) -> standard normal.
    let nodes = nodes.iter().map(|x| x * 2f64.sqrt()).collect();
    let weights = weights.iter().map(|w| w / PI.sqrt()).collect();
    (nodes, weights)
}

/// Gaussian integrator on the 2x2 torus for a covariance given by a spectral
/// multiplier.
#[derive(Debug, Clone)]
pub struct TinyGaussian {
    /// `basis[m][x]`: contribution of the m-th standard normal to site x.
    basis: [[f64; 4]; 4],
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl TinyGaussian {
    pub fn new(mult: &SpectralMultiplier, order: usize) -> Result<Self> {
        let lattice = mult.lattice();
        if lattice.n() != 2 {
            return Err(invalid("quadrature oracle is defined on the 2x2 torus only"));
        }
        Ok(Self::from_basis(lattice, mult, order))
    }

    fn from_basis(lattice: TorusLattice, mult: &SpectralMultiplier, order: usize) -> Self {
        let dual = lattice.dual();
        let mut basis = [[0.0; 4]; 4];
        for (m, row) in basis.iter_mut().enumerate() {
            let k = dual.wave_vector(m);
            let amp = mult.values()[m].sqrt();
            for (x, entry) in row.iter_mut().enumerate() {
                let p = lattice.point(x);
                // exp(i k.x) is +-1 on the 2x2 torus.
                *entry = amp * (k[0] * p[0] + k[1] * p[1]).cos();
            }
        }
        let (nodes, weights) = gauss_hermite(order);
        Self { basis, nodes, weights }
    }

    /// `E[f(zeta)]` for `zeta` Gaussian with the multiplier's covariance.
    /// `f` may return several values at once, accumulated component-wise.
    pub fn expect<const K: usize>(&self, f: impl Fn(&[f64; 4]) -> [f64; K]) -> [f64; K] {
        let q = self.nodes.len();
        let mut acc = [0.0; K];
        let mut zeta = [0.0; 4];
        for i0 in 0..q {
            for i1 in 0..q {
                for i2 in 0..q {
                    for i3 in 0..q {
                        let idx = [i0, i1, i2, i3];
                        let w: f64 = idx.iter().map(|&i| self.weights[i]).product();
                        for (x, z) in zeta.iter_mut().enumerate() {
                            *z = (0..4).map(|m| self.basis[m][x] * self.nodes[idx[m]]).sum();
                        }
                        let v = f(&zeta);
                        for (a, b) in acc.iter_mut().zip(v) {
                            *a += w * b;
                        }
                    }
                }
            }
        }
        acc
    }
}
