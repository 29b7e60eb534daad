//! Local maxima, level sets and the centered extremal point process of a
//! lattice field.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fft;
use crate::lattice::TorusLattice;
use crate::spectral::Field;

/// `sqrt(8 pi)`, the exponential rate of the limiting height intensity.
pub const ALPHA: f64 = 5.013_256_549_262_001;

/// `m_eps = (2 log(1/eps) - (3/4) log log(1/eps)) / sqrt(2 pi)`.
///
/// Defined for `0 < eps < 1/e`, where `log log(1/eps) > 0`.
pub fn centering(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < (-1.0f64).exp()) {
        return Err(invalid(format!(
            "centering needs 0 < epsilon < 1/e, got {epsilon}"
        )));
    }
    let l = (1.0 / epsilon).ln();
    Ok((2.0 * l - 0.75 * l.ln()) / (2.0 * PI).sqrt())
}

/// Default extraction radius `r_eps = eps log^2(1/eps)`.
pub fn default_radius(epsilon: f64) -> f64 {
    let l = (1.0 / epsilon).ln();
    epsilon * l * l
}

/// Sliding maximum over the circular window `[j - w, j + w]` of a row,
/// by the van Herk / Gil-Werman block method.
fn circular_window_max(row: &[f64], w: usize, out: &mut [f64]) {
    let n = row.len();
    let k = 2 * w + 1;
    if k >= n {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.fill(m);
        return;
    }
    let len = n + 2 * w;
    let ext: Vec<f64> = (0..len).map(|t| row[(t + n - w) % n]).collect();
    let mut prefix = ext.clone();
    let mut suffix = ext.clone();
    for t in 1..len {
        if t % k != 0 {
            prefix[t] = prefix[t].max(prefix[t - 1]);
        }
    }
    for t in (0..len - 1).rev() {
        if (t + 1) % k != 0 {
            suffix[t] = suffix[t].max(suffix[t + 1]);
        }
    }
    for (j, o) in out.iter_mut().enumerate() {
        *o = suffix[j].max(prefix[j + k - 1]);
    }
}

/// `max_{y in ball(x, r)} phi(y)` for every site.
pub fn ball_max(field: &Field, r: f64) -> Vec<f64> {
    let l = field.lattice();
    let n = l.n();
    let v = field.values();
    // The ball is a union of circular row intervals [-w_a, w_a].
    let mut widths: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut half: BTreeMap<usize, usize> = BTreeMap::new();
    for (a, b) in l.ball_offsets(r.max(0.0)) {
        let e = half.entry(a).or_insert(0);
        *e = (*e).max(l.wrap(b));
    }
    for (a, w) in half {
        widths.entry(w).or_default().push(a);
    }
    let mut out = vec![f64::NEG_INFINITY; v.len()];
    let mut rowmax = vec![0.0; v.len()];
    for (w, rows) in widths {
        for i in 0..n {
            circular_window_max(&v[i * n..(i + 1) * n], w, &mut rowmax[i * n..(i + 1) * n]);
        }
        for a in rows {
            for i in 0..n {
                let src = ((i + a) % n) * n;
                let dst = i * n;
                for j in 0..n {
                    out[dst + j] = out[dst + j].max(rowmax[src + j]);
                }
            }
        }
    }
    out
}

/// Turns the sites that pass the ball test into `Theta_r`.
///
/// Sites with equal values within distance `r` of each other form a tied
/// plateau (chains of such pairs are one plateau). A plateau counts only if
/// none of its sites is dominated inside its own ball; a surviving plateau
/// is then thinned greedily in increasing index order to an `r`-separated
/// set. Fields without ties skip all of this.
fn select_maxima(field: &Field, passes: &[bool], r: f64) -> Vec<usize> {
    let l = field.lattice();
    let v = field.values();
    let offsets = l.ball_offsets(r.max(0.0));
    let mut kept = Vec::new();
    let mut seen = vec![false; v.len()];
    for x in (0..v.len()).filter(|&x| passes[x]) {
        if seen[x] {
            continue;
        }
        let tied = offsets
            .iter()
            .any(|&(a, b)| (a, b) != (0, 0) && v[l.shift(x, a, b)] == v[x]);
        if !tied {
            kept.push(x);
            continue;
        }
        let mut plateau = vec![x];
        seen[x] = true;
        let mut head = 0;
        while head < plateau.len() {
            let y = plateau[head];
            head += 1;
            for &(a, b) in &offsets {
                let z = l.shift(y, a, b);
                if !seen[z] && v[z] == v[x] {
                    seen[z] = true;
                    plateau.push(z);
                }
            }
        }
        if plateau.iter().all(|&y| passes[y]) {
            plateau.sort_unstable();
            let mut blocked: Vec<usize> = Vec::new();
            for y in plateau {
                if blocked.iter().all(|&k| l.site_distance(k, y) > r) {
                    blocked.push(y);
                    kept.push(y);
                }
            }
        }
    }
    kept.sort_unstable();
    kept
}

/// The `r`-local maxima `Theta_r`: sites with `phi(x) >= phi(y)` for all `y`
/// in the closed ball of radius `r`, with ties handled by
/// [`select_maxima`]. Ascending indices.
pub fn local_maxima(field: &Field, r: f64) -> Vec<usize> {
    let m = ball_max(field, r);
    let passes: Vec<bool> = field.values().iter().zip(&m).map(|(v, m)| v >= m).collect();
    select_maxima(field, &passes, r)
}

/// Direct `O(N^2)` scan of the definition, kept as a test oracle.
pub fn local_maxima_brute_force(field: &Field, r: f64) -> Vec<usize> {
    let l = field.lattice();
    let v = field.values();
    let passes: Vec<bool> = (0..v.len())
        .map(|x| (0..v.len()).all(|y| l.site_distance(x, y) > r || v[x] >= v[y]))
        .collect();
    select_maxima(field, &passes, r)
}

/// Near maxima `Gamma(lambda) = {x : phi(x) >= m_eps - lambda}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSet {
    pub lattice: TorusLattice,
    pub lambda: f64,
    pub m_eps: f64,
    /// Ascending site indices.
    pub sites: Vec<usize>,
}

impl LevelSet {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, site: usize) -> bool {
        self.sites.binary_search(&site).is_ok()
    }

    pub fn is_subset_of(&self, other: &LevelSet) -> bool {
        self.sites.iter().all(|&x| other.contains(x))
    }
}

pub fn level_set(field: &Field, lambda: f64, m_eps: f64) -> LevelSet {
    let threshold = m_eps - lambda;
    LevelSet {
        lattice: field.lattice(),
        lambda,
        m_eps,
        sites: field
            .values()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= threshold)
            .map(|(x, _)| x)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremalPoint {
    /// Continuum location in `[0, 1)^2`.
    pub x: [f64; 2],
    /// Centered height `phi(x) - m_eps`.
    pub h: f64,
}

/// One realization of the extremal process `sum_{x in Theta_r} delta_(x, phi(x) - m_eps)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalProcessSample {
    pub points: Vec<ExtremalPoint>,
    pub r: f64,
    pub epsilon: f64,
    pub m_eps: f64,
}

impl ExtremalProcessSample {
    pub fn heights(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.h)
    }

    /// Number of points with `lo <= h < hi`.
    pub fn count_in(&self, lo: f64, hi: f64) -> usize {
        self.heights().filter(|&h| h >= lo && h < hi).count()
    }
}

/// Extremal process centered by `centering(eps)` of the field's lattice.
pub fn extremal_process(field: &Field, r: f64) -> Result<ExtremalProcessSample> {
    let m_eps = centering(field.lattice().epsilon())?;
    Ok(extremal_process_centered(field, r, m_eps))
}

/// Extremal process with an explicit centering.
pub fn extremal_process_centered(field: &Field, r: f64, m_eps: f64) -> ExtremalProcessSample {
    let l = field.lattice();
    let points = local_maxima(field, r)
        .into_iter()
        .map(|x| ExtremalPoint {
            x: l.point(x),
            h: field.get(x) - m_eps,
        })
        .collect();
    ExtremalProcessSample {
        points,
        r,
        epsilon: l.epsilon(),
        m_eps,
    }
}

/// `max - min` of the field over a non-empty set of sites.
pub fn oscillation(field: &Field, sites: &[usize]) -> Result<f64> {
    if sites.is_empty() {
        return Err(invalid("oscillation over an empty set"));
    }
    let (lo, hi) = sites.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        let v = field.get(x);
        (lo.min(v), hi.max(v))
    });
    Ok(hi - lo)
}

/// Site of the maximum of the field on the closed ball of radius `radius`
/// around `x`; ties go to the smallest index.
pub fn argmax_map(field: &Field, x: usize, radius: f64) -> usize {
    let v = field.values();
    field
        .lattice()
        .ball(x, radius)
        .into_iter()
        .fold(None::<usize>, |best, y| match best {
            Some(b) if v[b] >= v[y] => Some(b),
            _ => Some(y),
        })
        .expect("a ball contains its centre")
}

/// Level sets larger than this are counted by autocorrelation instead of
/// by direct pair enumeration.
const DIRECT_PAIR_LIMIT: usize = 2048;

/// Unordered pairs `{u, v}` of the level set with `eps r < |u - v| < 1/r`.
pub fn intermediate_pair_count(set: &LevelSet, r: f64, epsilon: f64) -> Result<u64> {
    if !(r >= 1.0) {
        return Err(invalid(format!("intermediate_pair_count needs r >= 1, got {r}")));
    }
    let l = set.lattice;
    let (lo, hi) = (epsilon * r, 1.0 / r);
    let inside = |d: f64| d > lo && d < hi;
    if set.len() <= DIRECT_PAIR_LIMIT {
        let mut count = 0u64;
        for (i, &u) in set.sites.iter().enumerate() {
            for &v in &set.sites[i + 1..] {
                count += inside(l.site_distance(u, v)) as u64;
            }
        }
        return Ok(count);
    }
    // Pairs at each residue offset from the autocorrelation of the indicator.
    let n = l.n();
    let mut buf = vec![Complex64::default(); l.site_count()];
    for &x in &set.sites {
        buf[x] = Complex64::new(1.0, 0.0);
    }
    fft::forward_2d(&mut buf, n);
    for c in buf.iter_mut() {
        *c = Complex64::new(c.norm_sqr(), 0.0);
    }
    fft::inverse_2d(&mut buf, n);
    let norm = 1.0 / l.site_count() as f64;
    let mut ordered = 0u64;
    for a in 0..n {
        for b in 0..n {
            if inside(l.offset_distance(a, b)) {
                let c = (buf[a * n + b].re * norm).round();
                if c < 0.0 {
                    return Err(Error::Numerical("negative autocorrelation count".into()));
                }
                ordered += c as u64;
            }
        }
    }
    Ok(ordered / 2)
}
