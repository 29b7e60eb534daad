//! Unnormalized two-dimensional DFTs on square row-major buffers.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

thread_local! {
    static PLANNER: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|cell| {
        let mut guard = cell.borrow_mut();
        let (planner, cache) = &mut *guard;
        cache
            .entry((n, inverse))
            .or_insert_with(|| {
                let dir = if inverse {
                    FftDirection::Inverse
                } else {
                    FftDirection::Forward
                };
                planner.plan_fft(n, dir)
            })
            .clone()
    })
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

fn transform(buf: &mut [Complex64], n: usize, inverse: bool) {
    assert_eq!(buf.len(), n * n, "buffer is not n x n");
    let fft = plan(n, inverse);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    fft.process_with_scratch(buf, &mut scratch);
    transpose(buf, n);
    fft.process_with_scratch(buf, &mut scratch);
    transpose(buf, n);
}

/// `out[x] = sum_k buf[k] exp(+2 pi i k.x / n)`.
pub fn inverse_2d(buf: &mut [Complex64], n: usize) {
    transform(buf, n, true);
}

/// `out[k] = sum_x buf[x] exp(-2 pi i k.x / n)`.
pub fn forward_2d(buf: &mut [Complex64], n: usize) {
    transform(buf, n, false);
}

/// Applies a real, even Fourier multiplier to a real field: returns the real
/// part of `IDFT(mult * DFT(values)) / n^2`.
pub fn apply_multiplier(values: &[f64], mult: &[f64], n: usize) -> Vec<f64> {
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward_2d(&mut buf, n);
    let norm = 1.0 / (n * n) as f64;
    for (c, &m) in buf.iter_mut().zip(mult) {
        *c *= m * norm;
    }
    inverse_2d(&mut buf, n);
    buf.into_iter().map(|c| c.re).collect()
}
