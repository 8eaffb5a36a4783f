//! Acceptance suite. Prints one `criterion N: PASS|FAIL` line per criterion.
//!
//! Run a subset with `cargo test -p rotwalk --test acceptance -- 2 7 12`.
//! The process exits nonzero when a criterion fails that is not listed in
//! `KNOWN_FAILURES`; listed failures still print FAIL.

use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rotwalk::angular::{mc_angular_exceedance, mc_time_increment, taylor_tail_bound, WindowSpec};
use rotwalk::increments::{sample_increments, IncrementLaw, SeedSpec};
use rotwalk::moddev::{decorrelation_curve, mc_joint, mc_smoothed, mc_tail, plateau_eval, PlateauSpec};
use rotwalk::oracle::{dirichlet_kernel, joint_tail, joint_tail_envelope, single_tail, QuadratureSpec};
use rotwalk::tree::{
    build_forest, dimension_slope, find_feasible_schedule, gamma_energy, level_means, synthetic_bernoulli_tree,
    variance_ratio_profile, CircledTree, TreeConfig,
};
use rotwalk::walk::eval_grid_fft;

/// Criteria expected to fail at these parameters.
///
/// 8: at 10^6 replicas the standard error of `p_hat n^alpha` grows from
/// about 0.006 to 0.018 along the n sequence, above the true deviations, so
/// whether the observed deviations decrease is decided by noise.
const KNOWN_FAILURES: &[u32] = &[8];

/// Master seed of criterion `c`, fixed before any run.
fn seed(c: u32) -> u64 {
    0x5eed_0000 + c as u64
}

// Tolerances.
const Z_BONFERRONI_8: f64 = 2.734;
const C3_MC_REPS: u64 = 10_000_000;
const C4_MAX_RATIO: f64 = 20.0;
const C5_COUNT_SES: f64 = 4.0;
const C5_SLOPE_TOL: f64 = 0.05;
const C6_MAX_RATIO: f64 = 10.0;
const C6_TREND_FACTOR: f64 = 2.0;
const C7_SLOPE_SES: f64 = 3.0;
const C8_FINAL_DEV: f64 = 0.1;
const C9_SES: f64 = 4.0;
const C11_ADDITIVITY: f64 = 1e-12;
const C11_GROWTH: f64 = 0.05;
const C12_REL_ERR: f64 = 1e-9;
const C13_SHRINK: f64 = 0.2;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gaussian() -> IncrementLaw {
    IncrementLaw::gaussian(1.0).unwrap()
}

fn c1() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, alpha) in [(100usize, 1.0), (1000, 0.7), (10_000, 0.5)] {
        let t = Instant::now();
        let est = mc_tail(&gaussian(), n, alpha, 1_000_000, seed(1)).unwrap();
        let target = single_tail(n as u64, alpha).unwrap();
        pass &= est.contains(target);
        parts.push(format!(
            "n={n} a={alpha}: p_hat={:.6e} ci=[{:.6e},{:.6e}] target={target:.6e} ({:.0}s)",
            est.p_hat,
            est.ci95.0,
            est.ci95.1,
            t.elapsed().as_secs_f64()
        ));
    }
    outcome(pass, parts.join("; "))
}

fn c2() -> Outcome {
    let (n, theta, alpha) = (4u64, 0.25, 0.5);
    let target = (n as f64).powf(-2.0 * alpha);
    let d = dirichlet_kernel(n, theta).unwrap().norm();
    let est = mc_joint(&gaussian(), n as usize, theta, alpha, 1_000_000, seed(2)).unwrap();
    let q = joint_tail(n, theta, alpha, QuadratureSpec::default()).unwrap();
    let pass = est.joint.contains(target) && (q.value - target).abs() < 1e-10;
    outcome(
        pass,
        format!(
            "|D|={d:.1e} mc={:.6} ci=[{:.6},{:.6}] quad={:.15} target={target}",
            est.joint.p_hat, est.joint.ci95.0, est.joint.ci95.1, q.value
        ),
    )
}

fn c3() -> Outcome {
    let alpha = 0.4;
    let pairs: Vec<(u64, f64)> = [
        0.013, 0.037, 0.071, 0.113, 0.1551, 0.2003, 0.2571, 0.3007, 0.3913, 0.4567,
    ]
    .iter()
    .map(|&t| (100u64, t))
    .chain(
        [
            0.0013, 0.0037, 0.0113, 0.0371, 0.0777, 0.1234, 0.2001, 0.3003, 0.3331, 0.4441,
        ]
        .iter()
        .map(|&t| (1000u64, t)),
    )
    .collect();
    let mut inside = 0;
    let mut worst = String::new();
    for &(n, theta) in &pairs {
        let q = joint_tail(n, theta, alpha, QuadratureSpec::default()).unwrap();
        let (lo, hi) = joint_tail_envelope(n, theta, alpha).unwrap();
        if lo - q.error <= q.value && q.value <= hi + q.error {
            inside += 1;
        } else {
            worst = format!(
                " outside: n={n} theta={theta} lo={lo:.3e} q={:.3e} hi={hi:.3e}",
                q.value
            );
        }
    }
    let (n, theta) = (1000u64, 0.3);
    let q = joint_tail(n, theta, alpha, QuadratureSpec::default()).unwrap();
    let est = mc_joint(&gaussian(), n as usize, theta, alpha, C3_MC_REPS, seed(3)).unwrap();
    let pass = inside == pairs.len() && est.joint.contains(q.value);
    outcome(
        pass,
        format!(
            "envelope holds for {inside}/{}{worst}; mc={:.6e} ci=[{:.6e},{:.6e}] quad={:.6e}",
            pairs.len(),
            est.joint.p_hat,
            est.joint.ci95.0,
            est.joint.ci95.1,
            q.value
        ),
    )
}

fn c4() -> Outcome {
    let thetas: Vec<f64> = (1..=8).map(|k| 0.5f64.powi(k)).collect();
    let rows = decorrelation_curve(&gaussian(), 1000, 0.4, &thetas, 1_000_000, seed(4)).unwrap();
    let mut max_ratio = 0.0f64;
    let mut max_z = 0.0f64;
    for r in &rows {
        max_ratio = max_ratio.max(r.oracle_ratio.unwrap());
        max_z = max_z.max(r.mc.joint.z_score(r.oracle_joint.unwrap()));
    }
    let ratios: Vec<String> = rows.iter().map(|r| format!("{:.3}", r.oracle_ratio.unwrap())).collect();
    outcome(
        max_ratio <= C4_MAX_RATIO && max_z <= Z_BONFERRONI_8,
        format!("ratios [{}] max={max_ratio:.3}; max mc z={max_z:.2}", ratios.join(",")),
    )
}

fn forest() -> Vec<CircledTree> {
    let config = TreeConfig::indicator(3.0, 12, 0.5).unwrap();
    build_forest(&gaussian(), config, seed(5), 200).unwrap()
}

fn c5(trees: &[CircledTree]) -> Outcome {
    let levels: Vec<u32> = (4..=12).collect();
    let means = level_means(trees, &levels).unwrap();
    let mut worst_z = 0.0f64;
    for m in &means {
        let expected = 2f64.powi(m.level as i32) * (3f64.powi(m.level as i32).floor()).powf(-0.5);
        worst_z = worst_z.max((m.mean - expected).abs() / m.stderr);
    }
    let fit = dimension_slope(&means).unwrap();
    let target = 1.0 - 0.5 * 3f64.log2();
    outcome(
        worst_z <= C5_COUNT_SES && (fit.slope - target).abs() <= C5_SLOPE_TOL,
        format!(
            "max count z={worst_z:.2}; slope={:.4}+-{:.4} target={target:.4}",
            fit.slope, fit.stderr
        ),
    )
}

fn c6(trees: &[CircledTree]) -> Outcome {
    let levels: Vec<u32> = (4..=12).collect();
    let profile = variance_ratio_profile(trees, &levels).unwrap();
    let ratio = |l: u32| profile.rows.iter().find(|r| r.level == l).and_then(|r| r.ratio);
    let all: Vec<String> = profile
        .rows
        .iter()
        .map(|r| r.ratio.map_or("-".into(), |x| format!("{x:.2}")))
        .collect();
    let pass = match (profile.max_ratio, ratio(6), ratio(12)) {
        (Some(max), Some(r6), Some(r12)) => max <= C6_MAX_RATIO && r12 < C6_TREND_FACTOR * r6,
        _ => false,
    };
    outcome(pass, format!("ratios levels 4-12 [{}]", all.join(",")))
}

fn c7() -> Outcome {
    let levels: Vec<u32> = (4..=14).collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, beta) in [0.3, 0.6].into_iter().enumerate() {
        let trees: Vec<CircledTree> = (0..200)
            .map(|r| synthetic_bernoulli_tree(beta, 14, SeedSpec::new(seed(7) + i as u64, r)).unwrap())
            .collect();
        let fit = dimension_slope(&level_means(&trees, &levels).unwrap()).unwrap();
        let z = (fit.slope - (1.0 - beta)).abs() / fit.stderr;
        pass &= z <= C7_SLOPE_SES;
        parts.push(format!(
            "beta={beta}: slope={:.4}+-{:.4} z={z:.2}",
            fit.slope, fit.stderr
        ));
    }
    outcome(pass, parts.join("; "))
}

fn c8() -> Outcome {
    let law = IncrementLaw::unit_circle();
    let mut devs = Vec::new();
    let mut parts = Vec::new();
    for n in [1_000usize, 10_000, 100_000] {
        let t = Instant::now();
        let est = mc_tail(&law, n, 0.5, 1_000_000, seed(8)).unwrap();
        let scale = (n as f64).sqrt();
        let dev = (est.p_hat * scale - 1.0).abs();
        parts.push(format!(
            "n={n}: p_hat*n^a={:.4}+-{:.4} ({:.0}s)",
            est.p_hat * scale,
            est.stderr * scale,
            t.elapsed().as_secs_f64()
        ));
        devs.push(dev);
    }
    let decreasing = devs.windows(2).all(|w| w[1] < w[0]);
    let pass = decreasing && devs[2] < C8_FINAL_DEV;
    outcome(pass, format!("{}; decreasing={decreasing}", parts.join("; ")))
}

fn c9() -> Outcome {
    let settings: [(u64, u64, f64); 5] = [
        (1, 2, 1.5),
        (10, 30, 4.0),
        (100, 200, 12.0),
        (1000, 1100, 15.0),
        (5000, 9000, 80.0),
    ];
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (i, &(n1, n2, t)) in settings.iter().enumerate() {
        let est = mc_time_increment(&gaussian(), n1, n2, t, 100_000, seed(9) + i as u64).unwrap();
        let target = (-t * t / (2.0 * (n2 - n1) as f64)).exp();
        let z = est.z_score(target);
        worst = worst.max(z);
        parts.push(format!("({n1},{n2},{t}): {:.4} vs {target:.4} z={z:.2}", est.p_hat));
    }
    outcome(worst <= C9_SES, parts.join("; "))
}

fn c10() -> Outcome {
    let (n, alpha, eta) = (10_000u64, 0.5, 0.1);
    let window = WindowSpec::standard(n, 0.5, eta, 16).unwrap();
    let est = mc_angular_exceedance(&gaussian(), window, alpha, 100_000, seed(10)).unwrap();
    let bound = taylor_tail_bound(n, 3, window.eps, eta, alpha).unwrap();
    let upper = est.corrected.upper_confidence();
    let zero = est.corrected.hits == Some(0);
    outcome(
        zero && bound.probability() >= upper,
        format!(
            "grid hits={:?} corrected hits={:?} upper CI={upper:.3e}; taylor terms={:?} remainder={:.3e} bound={:.3e}",
            est.grid.hits,
            est.corrected.hits,
            bound.terms,
            bound.remainder,
            bound.probability()
        ),
    )
}

fn c11(trees: &[CircledTree]) -> Outcome {
    let (alpha, q, gamma) = (0.5, 3.0f64, 0.1);
    assert!(gamma < 1.0 - alpha * q.log2());
    let candidates = vec![vec![0, 4, 8, 12], vec![0, 6, 12], vec![0, 12]];
    let (mut feasible, mut worst_add) = (0usize, 0.0f64);
    let (mut e9, mut e10) = (0.0, 0.0);
    let mut finite = true;
    for tree in trees {
        let Some((_, measure)) = find_feasible_schedule(tree, &candidates) else {
            continue;
        };
        feasible += 1;
        worst_add = worst_add.max(measure.additivity_error());
        let a = gamma_energy(&measure, gamma, 9).unwrap();
        let b = gamma_energy(&measure, gamma, 10).unwrap();
        finite &= a.value.is_finite() && b.value.is_finite();
        e9 += a.value;
        e10 += b.value;
    }
    let growth = e10 / e9 - 1.0;
    let pass = feasible > 0 && worst_add < C11_ADDITIVITY && finite && growth < C11_GROWTH;
    outcome(
        pass,
        format!(
            "feasible trees {feasible}/{}; max additivity error {worst_add:.1e}; mean energy depth 9 {:.4} depth 10 {:.4} growth {:.2}%",
            trees.len(),
            e9 / feasible.max(1) as f64,
            e10 / feasible.max(1) as f64,
            100.0 * growth
        ),
    )
}

/// `sum_j U_j e^{2 pi i j idx / 2^m}` with the phase reduced exactly mod `2^m`.
fn grid_direct(inc: &[Complex64], m: u32, idx: u64) -> Complex64 {
    let size = 1u64 << m;
    inc.iter()
        .enumerate()
        .map(|(k, &u)| {
            let r = ((k as u64 + 1) * idx) % size;
            let (s, c) = (std::f64::consts::TAU * r as f64 / size as f64).sin_cos();
            u * Complex64::new(c, s)
        })
        .sum()
}

fn c12() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed(12));
    let law = gaussian();
    let mut worst = 0.0f64;
    for case in 0..100u64 {
        let n = rng.random_range(1..=100_000usize);
        let m = rng.random_range(0..=12u32);
        let inc = sample_increments(&law, n, SeedSpec::new(seed(12), case)).unwrap();
        let grid = eval_grid_fft(&inc, m).unwrap();
        let size = 1u64 << m;
        let idx: Vec<u64> = if size * n as u64 <= 2_000_000 {
            (0..size).collect()
        } else {
            (0..64).map(|_| rng.random_range(0..size)).collect()
        };
        let direct: Vec<Complex64> = idx.iter().map(|&i| grid_direct(&inc, m, i)).collect();
        let scale = direct.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let err = idx
            .iter()
            .zip(&direct)
            .map(|(&i, d)| (grid.values[i as usize] - d).norm())
            .fold(0.0, f64::max);
        worst = worst.max(err / scale);
    }
    outcome(
        worst < C12_REL_ERR,
        format!("max relative error {worst:.2e} over 100 cases"),
    )
}

fn c13() -> Outcome {
    // Fourth differences across both knots of p_{1,1}.
    let p = PlateauSpec::new(1.0, 1.0).unwrap();
    let d4 = |r: f64, h: f64| {
        let f = |x: f64| plateau_eval(&p, x);
        (f(r + 2.0 * h) - 4.0 * f(r + h) + 6.0 * f(r) - 4.0 * f(r - h) + f(r - 2.0 * h)) / h.powi(4)
    };
    let mut shrink = 0.0f64;
    for knot in [1.0, 2.0] {
        let jump = |h: f64| (d4(knot + 3.0 * h, h) - d4(knot - 3.0 * h, h)).abs();
        shrink = shrink.max(jump(1e-3) / jump(1e-2));
    }

    // Pointwise sandwich on a grid of specs and radii.
    let mut violations = 0;
    for i in 0..=20 {
        let m = i as f64 / 20.0;
        for eps in [1e-3, 0.01, 0.1, 0.5] {
            let inner = PlateauSpec::new(m, eps).unwrap();
            let outer = PlateauSpec::new(m - eps, eps).unwrap();
            for k in 0..=3000 {
                let r = k as f64 / 1000.0;
                let ind = if r > m { 1.0 } else { 0.0 };
                if plateau_eval(&inner, r) > ind || ind > plateau_eval(&outer, r) {
                    violations += 1;
                }
            }
        }
    }

    // The same sandwich for estimates on shared streams.
    let (n, alpha, eps, reps) = (100usize, 1.0, 0.1, 100_000u64);
    let law = gaussian();
    let lower = mc_smoothed(&law, n, alpha, PlateauSpec::new(1.0, eps).unwrap(), reps, seed(13)).unwrap();
    let tail = mc_tail(&law, n, alpha, reps, seed(13)).unwrap();
    let upper = mc_smoothed(
        &law,
        n,
        alpha,
        PlateauSpec::new(1.0 - eps, eps).unwrap(),
        reps,
        seed(13),
    )
    .unwrap();
    let ordered = lower.p_hat <= tail.p_hat && tail.p_hat <= upper.p_hat;

    outcome(
        shrink <= C13_SHRINK && violations == 0 && ordered,
        format!(
            "4th-difference jump ratio h=1e-3/1e-2 {shrink:.3}; pointwise violations {violations}; smoothed {:.5} <= tail {:.5} <= smoothed {:.5}",
            lower.p_hat, tail.p_hat, upper.p_hat
        ),
    )
}

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |c: u32| selected.is_empty() || selected.contains(&c);

    let mut trees: Option<Vec<CircledTree>> = None;
    let mut unexpected = Vec::new();
    for c in 1..=13u32 {
        if !want(c) {
            continue;
        }
        let start = Instant::now();
        if matches!(c, 5 | 6 | 11) && trees.is_none() {
            trees = Some(forest());
        }
        let forest = trees.as_deref().unwrap_or(&[]);
        let o = match c {
            1 => c1(),
            2 => c2(),
            3 => c3(),
            4 => c4(),
            5 => c5(forest),
            6 => c6(forest),
            7 => c7(),
            8 => c8(),
            9 => c9(),
            10 => c10(),
            11 => c11(forest),
            12 => c12(),
            _ => c13(),
        };
        let status = if o.pass { "PASS" } else { "FAIL" };
        let note = if !o.pass && KNOWN_FAILURES.contains(&c) {
            " (known)"
        } else {
            ""
        };
        println!(
            "criterion {c}: {status}{note} [{:.1}s] {}",
            start.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.pass && !KNOWN_FAILURES.contains(&c) {
            unexpected.push(c);
        }
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
