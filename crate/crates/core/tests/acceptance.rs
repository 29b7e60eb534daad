//! Acceptance suite: one PASS/FAIL line per criterion, at full size.
//!
//! Run with `cargo test --test acceptance`. The process exits 0 whenever the
//! suite itself ran; failed criteria are reported, not hidden.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use sgextremes::config::ExperimentConfig;
use sgextremes::experiments::{
    auxiliary_pairs, chain_mean_and_se, compare_observables, execute, gff_field, REMAINDER_MARKS,
};
use sgextremes::extremes::{
    centering, default_radius, extremal_process_centered, intermediate_pair_count, level_set,
    local_maxima, local_maxima_brute_force, ExtremalPoint, ExtremalProcessSample, ALPHA,
};
use sgextremes::io::{decode_field, decode_points, encode_field, encode_points};
use sgextremes::polchinski::{
    backward_flows, estimate_grad_vt, estimate_vt, mean_remainder_decay, polchinski_residual,
    quadrature_residual, FlowConfig, PotentialEstimator, ResidualStatus,
};
use sgextremes::runner::sha256_hex;
use sgextremes::sinegordon::{
    energy, grad_energy, mala_chains, observable_suite, quadrature_moments, MalaConfig, SGParams,
};
use sgextremes::spectral::{decomposition_identity_check, gff_multiplier};
use sgextremes::stats::{
    exceedance_rate_fit, gumbel_tail_fit, inclusion_test, ks_two_sample, level_set_growth_from_sizes,
    pooled_correspondence, strip_ratio_test, synthetic_cox, LevelSetGrowth,
};
use sgextremes::{Field, StreamKey, TorusLattice};

type Outcome = Result<(bool, String), String>;

fn lat(n: usize) -> TorusLattice {
    TorusLattice::new(n).unwrap()
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn report(id: usize, title: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into()))
    });
    let (pass, detail) = match result {
        Ok(v) => v,
        Err(msg) => (false, format!("error: {msg}")),
    };
    println!(
        "{} [{id:02}] {title}: {detail} ({:.0} s)",
        if pass { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    pass
}

const SEED: u64 = 20_240_601;

fn c01() -> Outcome {
    let mut worst = 0.0f64;
    for n in [16, 64, 256] {
        for s in [0.01, 0.1, 1.0] {
            worst = worst.max(decomposition_identity_check(lat(n), 1.0, s).map_err(e)?);
        }
    }
    Ok((worst < 1e-12, format!("max per-mode discrepancy {worst:.2e} (< 1e-12)")))
}

fn c02() -> Outcome {
    let offsets: Vec<f64> = [64, 128, 256, 512]
        .iter()
        .map(|&n| Ok(gff_multiplier(lat(n), 1.0, 0.0)?.variance() - (n as f64).ln() / (2.0 * PI)))
        .collect::<sgextremes::Result<_>>()
        .map_err(e)?;
    let spread = offsets.iter().cloned().fold(f64::MIN, f64::max) - offsets.iter().cloned().fold(f64::MAX, f64::min);
    let l = lat(256);
    let spectral = gff_multiplier(l, 1.0, 0.0).map_err(e)?.variance();
    let draws = 10_000;
    let sum_sq: f64 = (0..draws)
        .into_par_iter()
        .map(|i| gff_field(l, 1.0, SEED + 2, i).map(|f| f.get(0).powi(2)))
        .collect::<sgextremes::Result<Vec<f64>>>()
        .map_err(e)?
        .iter()
        .sum();
    let empirical = sum_sq / draws as f64;
    let rel = (empirical / spectral - 1.0).abs();
    Ok((
        spread < 0.2 && rel < 0.05,
        format!(
            "offsets {offsets:.4?} spread {spread:.4} (< 0.2); var(phi(0)) {empirical:.4} vs {spectral:.4}, rel {rel:.3} (< 0.05)"
        ),
    ))
}

fn c03() -> Outcome {
    // (a) free MALA against the spectral sampler.
    let l16 = lat(16);
    let free = SGParams::unit_mass(l16, 0.0, PI).map_err(e)?;
    let chains = mala_chains(&free, &MalaConfig::new(0.5, 2500, 1000, 20, SEED + 31), 4).map_err(e)?;
    let mala: Vec<f64> = chains.iter().flat_map(|c| c.samples.iter().map(|f| f.get(0))).collect();
    let exact: Vec<f64> = (0..10_000)
        .into_par_iter()
        .map(|i| gff_field(l16, 1.0, SEED + 32, i).map(|f| f.get(0)))
        .collect::<sgextremes::Result<_>>()
        .map_err(e)?;
    let (_, p) = ks_two_sample(&mala, &exact);
    let a = p > 0.01;

    // (b) four-site quadrature.
    let l2 = lat(2);
    let tiny = SGParams::unit_mass(l2, 0.1, PI).map_err(e)?;
    let [sq, cos] = quadrature_moments(&tiny, 40).map_err(e)?;
    let chains = mala_chains(&tiny, &MalaConfig::new(0.5, 10_000, 1000, 2, SEED + 33), 4).map_err(e)?;
    let series = |f: &dyn Fn(f64) -> f64| -> Vec<Vec<f64>> {
        chains.iter().map(|c| c.samples.iter().map(|s| f(s.get(0))).collect()).collect()
    };
    let (m_sq, se_sq) = chain_mean_and_se(&series(&|x| x * x));
    let (m_cos, se_cos) = chain_mean_and_se(&series(&|x| (PI.sqrt() * x).cos()));
    let b = (m_sq - sq).abs() <= 3.0 * se_sq && (m_cos - cos).abs() <= 3.0 * se_cos;

    // (c) coupling flow against MALA.
    let l8 = lat(8);
    let params = SGParams::unit_mass(l8, 0.2, PI).map_err(e)?;
    let flow = FlowConfig::for_params(&params, 0.01, 32);
    let paths = backward_flows(&params, &flow, SEED + 34, 400).map_err(e)?;
    let flow_obs: Vec<_> = paths.iter().map(|p| observable_suite(&p.end().sg, params.beta)).collect();
    let chains = mala_chains(&params, &MalaConfig::new(0.5, 2000, 1000, 10, SEED + 35), 4).map_err(e)?;
    let chain_obs: Vec<Vec<_>> = chains
        .iter()
        .map(|c| c.samples.iter().map(|s| observable_suite(s, params.beta)).collect())
        .collect();
    let rows = compare_observables(&flow_obs, &chain_obs);
    let c = rows.iter().all(|r| r.z_score.abs() <= 3.0);
    let zs: Vec<String> = rows.iter().map(|r| format!("{} {:+.2}", r.name, r.z_score)).collect();
    Ok((
        a && b && c,
        format!(
            "(a) KS p = {p:.3} (> 0.01); (b) E phi^2 {m_sq:.4}+-{se_sq:.4} vs {sq:.4}, E cos {m_cos:.4}+-{se_cos:.4} vs {cos:.4}; (c) z-scores [{}] (|z| <= 3)",
            zs.join(", ")
        ),
    ))
}

fn c04() -> Outcome {
    let l4 = lat(4);
    let params = SGParams::unit_mass(l4, 0.1, PI).map_err(e)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for t in [0.1, 0.5, 1.0] {
        let est = PotentialEstimator::new(params, t, 20_000).map_err(e)?;
        let r = polchinski_residual(&est, &Field::zeros(l4), 0.01 * t, SEED + 40, None).map_err(e)?;
        ok &= r.status == ResidualStatus::Consistent;
        parts.push(format!("t={t}: {:.2e}+-{:.1e}", r.residual, r.error_bar));
    }
    let l2 = lat(2);
    let tiny = SGParams::unit_mass(l2, 0.1, PI).map_err(e)?;
    let phi = Field::new(l2, vec![0.3, -0.2, 0.5, 0.1]).map_err(e)?;
    let mut worst = 0.0f64;
    for t in [0.1, 0.5, 1.0] {
        for f in [Field::zeros(l2), phi.clone()] {
            worst = worst.max(quadrature_residual(&tiny, t, &f, 1e-3, 40).map_err(e)?.abs());
        }
    }
    ok &= worst < 1e-4;
    Ok((ok, format!("{} (|r| <= 3 sigma); quadrature max |r| {worst:.1e} (< 1e-4)", parts.join(", "))))
}

fn random_field(l: TorusLattice, scale: f64, key: StreamKey) -> Field {
    let mut rng = key.rng();
    Field::new(l, (0..l.site_count()).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()).unwrap()
}

fn bump(phi: &Field, site: usize, h: f64) -> Field {
    let mut v = phi.clone().into_values();
    v[site] += h;
    Field::new(phi.lattice(), v).unwrap()
}

fn c05() -> Outcome {
    let l = lat(4);
    let sg = SGParams::unit_mass(l, 0.5, 2.0 * PI).map_err(e)?;
    let h = 1e-5;
    let mut worst_energy = 0.0f64;
    for c in 0..10 {
        let phi = random_field(l, 1.0, StreamKey::root(SEED + 50).child("config", c));
        let g = grad_energy(&sg, &phi).map_err(e)?;
        for x in 0..16 {
            let fd = (energy(&sg, &bump(&phi, x, h)).map_err(e)? - energy(&sg, &bump(&phi, x, -h)).map_err(e)?) / (2.0 * h);
            worst_energy = worst_energy.max((fd - g.get(x)).abs() / g.get(x).abs().max(1e-3));
        }
    }
    let params = SGParams::unit_mass(l, 0.1, PI).map_err(e)?;
    let est = PotentialEstimator::new(params, 0.5, 256).map_err(e)?;
    let mut worst_vt = 0.0f64;
    for c in 0..10 {
        let phi = random_field(l, 0.5, StreamKey::root(SEED + 51).child("config", c));
        let g = estimate_grad_vt(&est, &phi, c).map_err(e)?;
        for x in 0..16 {
            let up = estimate_vt(&est, &bump(&phi, x, h), c).map_err(e)?.value;
            let down = estimate_vt(&est, &bump(&phi, x, -h), c).map_err(e)?.value;
            let a = g.field.get(x);
            worst_vt = worst_vt.max(((up - down) / (2.0 * h) - a).abs() / a.abs().max(1e-6));
        }
    }
    Ok((
        worst_energy < 1e-6 && worst_vt < 1e-3,
        format!("grad_energy rel {worst_energy:.1e} (< 1e-6); grad v_t rel {worst_vt:.1e} (< 1e-3)"),
    ))
}

/// Flow paths shared by criteria 6 and 7, keyed by `(n, z)`.
fn difference_paths(n: usize, z: f64) -> Result<Vec<sgextremes::polchinski::CoupledPath>, String> {
    let params = SGParams::unit_mass(lat(n), z, PI).map_err(e)?;
    let mut flow = FlowConfig::for_params(&params, 0.02, 16);
    flow.s_marks = REMAINDER_MARKS.to_vec();
    backward_flows(&params, &flow, SEED + 60 + n as u64 + (z * 10.0) as u64, 100).map_err(e)
}

fn c06_c07() -> (Outcome, Outcome) {
    let start = Instant::now();
    let mut means = std::collections::BTreeMap::new();
    let mut decay = None;
    for n in [8usize, 16] {
        for z in [0.1, 0.2] {
            let paths = match difference_paths(n, z) {
                Ok(p) => p,
                Err(msg) => return (Err(msg.clone()), Err(msg)),
            };
            let m = paths.iter().map(|p| p.end().delta.sup_norm()).sum::<f64>() / paths.len() as f64;
            means.insert((n, (z * 10.0) as u32), m);
            if n == 8 && z == 0.2 {
                decay = Some(mean_remainder_decay(&paths[..50]).map_err(e));
            }
        }
    }
    let mut ok6 = true;
    let mut parts = Vec::new();
    for z in [1u32, 2] {
        let (a, b) = (means[&(8, z)], means[&(16, z)]);
        let rel = (b - a).abs() / a.min(b);
        ok6 &= rel < 0.5;
        parts.push(format!("z=0.{z}: n8 {a:.4} n16 {b:.4} diff {:.0}%", 100.0 * rel));
    }
    for n in [8usize, 16] {
        let ratio = means[&(n, 2)] / means[&(n, 1)];
        ok6 &= (1.0..=4.0).contains(&ratio);
        parts.push(format!("n={n} ratio z0.2/z0.1 {ratio:.2} (in [1, 4])"));
    }
    parts.push(format!("flows {:.0} s", start.elapsed().as_secs_f64()));
    let c6 = Ok((ok6, parts.join("; ")));
    let c7 = match decay.expect("decay computed") {
        Ok(rows) => {
            // Rows are by increasing s; need strict decrease as s decreases.
            let strict = rows.windows(2).all(|w| w[0].1 < w[1].1);
            let want: Vec<f64> = REMAINDER_MARKS.to_vec();
            let got: Vec<f64> = rows.iter().map(|r| r.0).collect();
            Ok((
                strict && got == want,
                format!(
                    "mean max|R_s| {}",
                    rows.iter().map(|(s, m)| format!("s={s}: {m:.3e}")).collect::<Vec<_>>().join(", ")
                ),
            ))
        }
        Err(msg) => Err(msg),
    };
    (c6, c7)
}

fn c08() -> Outcome {
    let m = centering(1.0 / 256.0).map_err(e)?;
    Ok(((m - 3.9115).abs() <= 1e-4, format!("centering(1/256) = {m:.7} (target 3.9115 +- 1e-4)")))
}

/// Per-field quantities used by criteria 9 to 13.
struct Summary {
    process: ExtremalProcessSample,
    max_centered: f64,
    sizes: Vec<usize>,
    pairs: [u64; 3],
}

const GROWTH_GRID: [f64; 7] = [1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0];
const PAIR_RADII: [f64; 3] = [4.0, 8.0, 16.0];

fn summarize(n: usize, seed: u64, count: usize, full: bool) -> Result<Vec<Summary>, String> {
    let l = lat(n);
    let eps = l.epsilon();
    let m_eps = centering(eps).map_err(e)?;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let f = gff_field(l, 1.0, seed, i).map_err(e)?;
            let process = extremal_process_centered(&f, default_radius(eps), m_eps);
            let (sizes, pairs) = if full {
                let sizes = GROWTH_GRID.iter().map(|&g| level_set(&f, g, m_eps).len()).collect();
                let set = level_set(&f, 3.0, m_eps);
                let mut pairs = [0; 3];
                for (p, &r) in pairs.iter_mut().zip(&PAIR_RADII) {
                    *p = intermediate_pair_count(&set, r, eps).map_err(e)?;
                }
                (sizes, pairs)
            } else {
                (Vec::new(), [0; 3])
            };
            Ok(Summary { process, max_centered: f.max() - m_eps, sizes, pairs })
        })
        .collect()
}

fn exceedances(s: &[Summary], h0: f64) -> Vec<f64> {
    s.iter().flat_map(|x| x.process.heights()).filter(|&h| h >= h0).collect()
}

fn c09(gff512: &[Summary]) -> Outcome {
    let fit = exceedance_rate_fit(&exceedances(&gff512[..200], -1.0), -1.0).map_err(e)?;
    let p = fit.p_value.unwrap_or(0.0);
    let band = (3.5..=6.5).contains(&fit.estimate);
    let mut closer = 0;
    let mut reps = Vec::new();
    for rep in 0..3u64 {
        let fine = if rep == 0 {
            fit.estimate
        } else {
            let s = summarize(512, SEED + 90 + rep, 200, false)?;
            exceedance_rate_fit(&exceedances(&s, -1.0), -1.0).map_err(e)?.estimate
        };
        let coarse_s = summarize(128, SEED + 95 + rep, 200, false)?;
        let coarse = exceedance_rate_fit(&exceedances(&coarse_s, -1.0), -1.0).map_err(e)?.estimate;
        closer += ((fine - ALPHA).abs() < (coarse - ALPHA).abs()) as usize;
        reps.push(format!("{fine:.2}/{coarse:.2}"));
    }

    // Sine-Gordon at n = 256 by MALA.
    let l = lat(256);
    let params = SGParams::unit_mass(l, 0.5, PI).map_err(e)?;
    let chains = mala_chains(&params, &MalaConfig::new(0.05, 50, 1000, 100, SEED + 99), 4).map_err(e)?;
    let eps = l.epsilon();
    let m_eps = centering(eps).map_err(e)?;
    let sg_heights: Vec<f64> = chains
        .iter()
        .flat_map(|c| c.samples.iter())
        .flat_map(|f| extremal_process_centered(f, default_radius(eps), m_eps).points)
        .map(|p| p.h)
        .filter(|&h| h >= -1.0)
        .collect();
    let sg = exceedance_rate_fit(&sg_heights, -1.0).map_err(e)?;
    let sg_band = (3.5..=6.5).contains(&sg.estimate);
    let acc: Vec<String> = chains.iter().map(|c| format!("{:.2}", c.diagnostics.acceptance_rate)).collect();
    Ok((
        band && p > 0.01 && closer >= 2 && sg_band,
        format!(
            "GFF n=512 alpha {:.3}+-{:.3} (band [3.5, 6.5]), KS p {p:.3} (> 0.01), N={}; n512/n128 replicates [{}] closer in {closer}/3 (>= 2); SG n=256 alpha {:.3}+-{:.3}, KS p {:.3}, N={}, MALA acceptance [{}]",
            fit.estimate, fit.std_error, fit.sample_size, reps.join(", "), sg.estimate, sg.std_error,
            sg.p_value.unwrap_or(0.0), sg.sample_size, acc.join(", ")
        ),
    ))
}

fn c10(gff512: &[Summary]) -> Outcome {
    let target = (ALPHA * 0.2).exp() - 1.0;
    let lognormal = |rng: &mut rand_chacha::ChaCha8Rng| {
        let g: f64 = rng.sample(StandardNormal);
        40.0 * (0.5 * g).exp()
    };
    let synth: Vec<_> = (0..400)
        .map(|i| synthetic_cox(lognormal, ALPHA, 0.0, StreamKey::root(SEED + 100).child("cox", i)))
        .collect::<sgextremes::Result<_>>()
        .map_err(e)?;
    let a = strip_ratio_test(&synth, 0.0, 0.2, SEED + 101).map_err(e)?;
    let processes: Vec<ExtremalProcessSample> = gff512[..200].iter().map(|s| s.process.clone()).collect();
    let b = strip_ratio_test(&processes, -1.0, -0.8, SEED + 102).map_err(e)?;
    let ok_a = (a.estimate - target).abs() <= 3.0 * a.std_error;
    let ok_b = (b.estimate - target).abs() <= 4.0 * b.std_error;
    Ok((
        ok_a && ok_b,
        format!(
            "theory {target:.4}; synthetic Cox {:.4}+-{:.4} (3 SE); GFF n=512 strip [-1,-0.8) {:.4}+-{:.4} (4 SE)",
            a.estimate, a.std_error, b.estimate, b.std_error
        ),
    ))
}

fn c11(gff512: &[Summary]) -> Outcome {
    let s = &gff512[..200];
    let n = s.len() as f64;
    let frac: Vec<f64> = (0..3).map(|j| s.iter().filter(|x| x.pairs[j] > 0).count() as f64 / n).collect();
    let sd = |p: f64| (p * (1.0 - p) / n).sqrt();
    let mut inversions = 0;
    let mut within = true;
    for j in 0..2 {
        if frac[j + 1] > frac[j] {
            inversions += 1;
            let sigma = (sd(frac[j]).powi(2) + sd(frac[j + 1]).powi(2)).sqrt();
            within &= frac[j + 1] - frac[j] <= 2.0 * sigma;
        }
    }
    Ok((
        inversions == 0 || (inversions == 1 && within),
        format!("fractions with intermediate pairs at r = 4, 8, 16: {frac:.3?}; inversions {inversions}"),
    ))
}

fn growth(s: &[Summary]) -> Result<LevelSetGrowth, String> {
    let sizes: Vec<Vec<usize>> = s.iter().map(|x| x.sizes.clone()).collect();
    level_set_growth_from_sizes(&sizes, &GROWTH_GRID).map_err(e)
}

fn c12(gff256: &[Summary], gff512: &[Summary]) -> Outcome {
    let a = growth(gff256)?;
    let b = growth(&gff512[..200])?;
    let shape_ok = |g: &LevelSetGrowth| {
        let r = &g.rows;
        let increasing = r.windows(2).all(|w| w[1].mean_log_size > w[0].mean_log_size);
        // Not concave beyond noise: second differences above -2 sigma.
        let convex = r.windows(3).all(|w| {
            let d2 = w[2].mean_log_size - 2.0 * w[1].mean_log_size + w[0].mean_log_size;
            let sigma = (w[0].std_error.powi(2) + 4.0 * w[1].std_error.powi(2) + w[2].std_error.powi(2)).sqrt();
            d2 >= -2.0 * sigma
        });
        increasing && convex && g.dropped.is_empty()
    };
    let rel = (a.report.estimate - b.report.estimate).abs() / b.report.estimate.abs();
    let show = |g: &LevelSetGrowth| g.rows.iter().map(|r| format!("{:.2}", r.mean_log_size)).collect::<Vec<_>>().join(" ");
    Ok((
        shape_ok(&a) && shape_ok(&b) && rel <= 0.3,
        format!(
            "mean log|Gamma| n=256 [{}], n=512 [{}]; slopes {:.3} / {:.3}, diff {:.0}% (<= 30%)",
            show(&a), show(&b), a.report.estimate, b.report.estimate, 100.0 * rel
        ),
    ))
}

fn c13(gff512: &[Summary]) -> Outcome {
    let maxima: Vec<f64> = gff512.iter().map(|s| s.max_centered).collect();
    let fit = gumbel_tail_fit(&maxima).map_err(e)?;
    let mut rng = StreamKey::root(SEED + 130).rng();
    let synth: Vec<f64> = (0..100_000).map(|_| -(-(rng.gen::<f64>()).ln()).ln() / ALPHA).collect();
    let cal = gumbel_tail_fit(&synth).map_err(e)?;
    let cal_rel = (cal.estimate + ALPHA).abs() / ALPHA;
    Ok((
        (-6.5..=-3.5).contains(&fit.estimate) && cal_rel <= 0.05,
        format!(
            "slope on {} maxima {:.3}+-{:.3} (in [-6.5, -3.5]); synthetic calibration {:.3} vs -{ALPHA:.3}, rel {:.1}% (<= 5%)",
            maxima.len(), fit.estimate, fit.std_error, cal.estimate, 100.0 * cal_rel
        ),
    ))
}

fn c14() -> Outcome {
    let l = lat(128);
    let params = SGParams::unit_mass(l, 0.2, PI).map_err(e)?;
    let flow = FlowConfig::for_params(&params, 0.05, 16);
    let pairs = auxiliary_pairs(&params, 0.1, &flow, SEED + 140, 100).map_err(e)?;
    let m_eps = centering(l.epsilon()).map_err(e)?;
    let corr = pooled_correspondence(&pairs, 8.0, 4.0, 0.5, m_eps).map_err(e)?;
    let inc = inclusion_test(&pairs, 4.0, m_eps).map_err(e)?;
    // Diagnostic only: the same test with the GFF part against itself.
    let own: Vec<(Field, Field)> = pairs.iter().map(|p| (p.1.clone(), p.1.clone())).collect();
    let ceiling = pooled_correspondence(&own, 8.0, 4.0, 0.5, m_eps).map_err(e)?.psi_to_gff.estimate;
    let (f, b) = (corr.psi_to_gff.estimate, corr.gff_to_psi.estimate);
    let (i1, i2) = (inc.gff_in_psi.estimate, inc.psi_in_gff.estimate);
    Ok((
        f >= 0.9 && b >= 0.9 && i1 >= 0.95 && i2 >= 0.95,
        format!(
            "correspondence Psi->GFF {f:.3} (N={}), GFF->Psi {b:.3} (N={}) (>= 0.9); inclusions {i1:.2}, {i2:.2} (>= 0.95); GFF-against-itself ceiling {ceiling:.3}",
            corr.psi_to_gff.sample_size, corr.gff_to_psi.sample_size
        ),
    ))
}

fn c15() -> Outcome {
    let mut rng = StreamKey::root(SEED + 150).rng();
    let l = lat(64);
    let f = Field::new(l, (0..l.site_count()).map(|_| rng.gen::<f64>() * 20.0 - 10.0).collect()).map_err(e)?;
    let back = decode_field(&encode_field(&f)).map_err(e)?;
    let fields_ok = f.values().iter().zip(back.values()).all(|(a, b)| a.to_bits() == b.to_bits());
    let pts = ExtremalProcessSample {
        points: (0..1000).map(|_| ExtremalPoint { x: [rng.gen(), rng.gen()], h: rng.gen::<f64>() * 4.0 - 2.0 }).collect(),
        r: 0.1,
        epsilon: 1.0 / 64.0,
        m_eps: centering(1.0 / 64.0).map_err(e)?,
    };
    let points_ok = decode_points(encode_points(&pts).map_err(e)?.as_bytes()).map_err(e)?.sample == pts;

    let cfg = ExperimentConfig::parse("kind = gff-extremes\nn = 64\nsamples = 10\nseed = 7\n", &[]).map_err(e)?;
    let digest = |threads: usize| -> Result<Vec<String>, String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(e)?;
        let out = pool.install(|| execute(&cfg)).map_err(e)?;
        let mut d: Vec<String> = out.files.values().map(|b| sha256_hex(b)).collect();
        d.push(sha256_hex(&serde_json::to_vec(&out.report).map_err(e)?));
        Ok(d)
    };
    let deterministic = digest(1)? == digest(4)?;

    let mut mismatches = 0;
    for i in 0..1000u64 {
        let mut rng = StreamKey::root(SEED + 151).child("maxima", i).rng();
        let n = [2usize, 4, 8][(i % 3) as usize];
        let l = lat(n);
        let v = (0..n * n).map(|_| f64::from(rng.gen_range(-3i32..=3))).collect();
        let f = Field::new(l, v).map_err(e)?;
        let r = rng.gen::<f64>() * 0.6;
        mismatches += (local_maxima(&f, r) != local_maxima_brute_force(&f, r)) as usize;
    }
    Ok((
        fields_ok && points_ok && deterministic && mismatches == 0,
        format!(
            "field bits {fields_ok}, points exact {points_ok}, checksums equal at 1 and 4 threads {deterministic}, local-maxima mismatches {mismatches}/1000"
        ),
    ))
}

fn main() {
    let _ = env_logger::builder().is_test(true).try_init();
    let start = Instant::now();
    let mut passed = 0;
    passed += report(1, "Spectral decomposition identity", c01) as usize;
    passed += report(2, "Log-correlated normalization", c02) as usize;
    passed += report(3, "Sampler oracle chain", c03) as usize;
    passed += report(4, "Polchinski residual", c04) as usize;
    passed += report(5, "Gradient consistency", c05) as usize;
    let (c6, c7) = c06_c07();
    passed += report(6, "Difference-field uniformity", || c6) as usize;
    passed += report(7, "Remainder decay", || c7) as usize;
    passed += report(8, "Centering closed form", c08) as usize;

    let fields = summarize(512, SEED + 9, 500, true);
    let fields256 = summarize(256, SEED + 12, 200, true);
    let with = |f: &dyn Fn(&[Summary]) -> Outcome| -> Outcome {
        match &fields {
            Ok(s) => f(s),
            Err(msg) => Err(msg.clone()),
        }
    };
    passed += report(9, "Extremal height law", || with(&c09)) as usize;
    passed += report(10, "Strip-ratio Z-cancellation", || with(&c10)) as usize;
    passed += report(11, "Near-maxima geometry", || with(&c11)) as usize;
    passed += report(12, "Level-set growth", || {
        let a = fields256.as_ref().map_err(|m| m.clone())?;
        with(&|b| c12(a, b))
    }) as usize;
    passed += report(13, "Gumbel tail", || with(&c13)) as usize;
    passed += report(14, "Correspondence and inclusion", c14) as usize;
    passed += report(15, "Infrastructure", c15) as usize;
    println!("acceptance: {passed}/15 criteria pass ({:.0} s)", start.elapsed().as_secs_f64());
}
