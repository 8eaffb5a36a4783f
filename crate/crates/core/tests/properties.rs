use num_complex::Complex64;
use proptest::prelude::*;

use rotwalk::increments::{sample_increments, IncrementLaw, SeedSpec};
use rotwalk::moddev::{plateau_eval, PlateauSpec};
use rotwalk::oracle::{dirichlet_direct, dirichlet_kernel};
use rotwalk::tree::{build_frostman_measure, build_tree, synthetic_bernoulli_tree, TreeConfig};
use rotwalk::walk::{eval_grid_fft, eval_point, normalize_angle, phase, sup_window};

fn complex_vec(max_len: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec(
        (-3.0f64..3.0, -3.0f64..3.0).prop_map(|(a, b)| Complex64::new(a, b)),
        1..max_len,
    )
}

fn complex_exact(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0).prop_map(|(a, b)| Complex64::new(a, b)), n)
}

fn direct(inc: &[Complex64], theta: f64) -> Complex64 {
    inc.iter()
        .enumerate()
        .map(|(k, &u)| u * phase(k as u64 + 1, theta))
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn point_evaluation_matches_direct_sum(inc in complex_vec(2000), theta in -2.0f64..2.0) {
        let a = eval_point(&inc, theta);
        let b = direct(&inc, theta);
        let scale: f64 = inc.iter().map(|u| u.norm()).sum();
        prop_assert!((a - b).norm() <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn evaluation_is_linear(
        (a, b) in (1usize..300).prop_flat_map(|n| (complex_exact(n), complex_exact(n))),
        theta in 0.0f64..1.0,
        c in -2.0f64..2.0,
    ) {
        let (a, b) = (&a[..], &b[..]);
        let mix: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x * c + y).collect();
        let lhs = eval_point(&mix, theta);
        let rhs = eval_point(a, theta) * c + eval_point(b, theta);
        prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + rhs.norm()));
    }

    #[test]
    fn rotation_moves_the_angle(inc in complex_vec(500), theta in 0.0f64..1.0, shift in 0.0f64..1.0) {
        // S_n(theta + shift) for U equals S_n(theta) for U_j e^{2 pi i j shift}.
        let rotated: Vec<Complex64> = inc.iter().enumerate().map(|(k, &u)| u * phase(k as u64 + 1, shift)).collect();
        let a = eval_point(&inc, theta + shift);
        let b = eval_point(&rotated, theta);
        prop_assert!((a - b).norm() <= 1e-10 * (1.0 + a.norm()));
    }

    #[test]
    fn angles_are_one_periodic(inc in complex_vec(300), theta in 0.0f64..1.0, k in -5i32..5) {
        let a = eval_point(&inc, theta);
        let b = eval_point(&inc, theta + k as f64);
        prop_assert!((a - b).norm() <= 1e-10 * (1.0 + a.norm()));
        prop_assert!((0.0..1.0).contains(&normalize_angle(theta + k as f64)));
    }

    #[test]
    fn grid_refinement_is_nested(inc in complex_vec(3000), m in 0u32..9) {
        let coarse = eval_grid_fft(&inc, m).unwrap();
        let fine = eval_grid_fft(&inc, m + 1).unwrap();
        for i in 0..coarse.len() {
            let d = (coarse.values[i] - fine.values[2 * i]).norm();
            prop_assert!(d <= 1e-9 * (1.0 + coarse.values[i].norm()));
        }
    }

    #[test]
    fn increment_streams_are_prefix_consistent(seed in any::<u64>(), replica in 0u64..1000, n in 1usize..500, extra in 1usize..500) {
        let law = IncrementLaw::unit_circle();
        let short = sample_increments(&law, n, SeedSpec::new(seed, replica)).unwrap();
        let long = sample_increments(&law, n + extra, SeedSpec::new(seed, replica)).unwrap();
        prop_assert_eq!(&short[..], &long[..n]);
    }

    #[test]
    fn kernel_closed_form_matches_direct(n in 1u64..5000, theta in 0.0f64..1.0) {
        let a = dirichlet_kernel(n, theta).unwrap();
        let b = dirichlet_direct(n, theta);
        prop_assert!((a - b).norm() <= 1e-12);
        prop_assert!(a.norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn plateau_is_monotone_and_bounded(m in -1.0f64..1.0, eps in 1e-3f64..3.0, r1 in 0.0f64..6.0, r2 in 0.0f64..6.0) {
        let p = PlateauSpec::new(m, eps).unwrap();
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let (a, b) = (plateau_eval(&p, lo), plateau_eval(&p, hi));
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        prop_assert!(a <= b);
    }

    #[test]
    fn plateau_sandwiches_the_indicator(m in 0.0f64..1.0, eps in 1e-3f64..0.5, r in 0.0f64..3.0) {
        let inner = PlateauSpec::new(m, eps).unwrap();
        let outer = PlateauSpec::new(m - eps, eps).unwrap();
        let ind = if r > m { 1.0 } else { 0.0 };
        prop_assert!(plateau_eval(&inner, r) <= ind);
        prop_assert!(ind <= plateau_eval(&outer, r));
    }

    #[test]
    fn window_bounds_bracket_a_dense_scan(seed in any::<u64>(), n in 2usize..200, eps in 1e-4f64..0.05) {
        let law = IncrementLaw::gaussian(1.0).unwrap();
        let inc = sample_increments(&law, n, SeedSpec::new(seed, 0)).unwrap();
        let w = sup_window(&inc, 0.3, eps, 9).unwrap();
        let finer = sup_window(&inc, 0.3, eps, 17).unwrap();
        let anchor = eval_point(&inc, 0.3);
        let dense = (0..=400)
            .map(|k| (eval_point(&inc, 0.3 + eps * k as f64 / 400.0) - anchor).norm())
            .fold(0.0f64, f64::max);
        prop_assert!(w.lower <= finer.lower + 1e-12);
        prop_assert!(finer.lower <= dense + 1e-12);
        prop_assert!(dense <= w.upper + 1e-9);
    }

    #[test]
    fn frostman_measures_are_additive(seed in any::<u64>(), beta in 0.0f64..0.5) {
        let tree = synthetic_bernoulli_tree(beta, 10, SeedSpec::new(seed, 0)).unwrap();
        if let Ok(m) = build_frostman_measure(&tree, &[0, 3, 6, 10]) {
            prop_assert!(m.additivity_error() < 1e-12);
            prop_assert!(m.masses_at(10).iter().all(|&x| x >= 0.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn tree_marks_are_prefix_stable(seed in any::<u64>(), depth in 2u32..8) {
        let law = IncrementLaw::gaussian(1.0).unwrap();
        let s = SeedSpec::new(seed, 3);
        let a = build_tree(&law, TreeConfig::indicator(2.5, depth, 0.4).unwrap(), s).unwrap();
        let b = build_tree(&law, TreeConfig::indicator(2.5, depth + 2, 0.4).unwrap(), s).unwrap();
        prop_assert_eq!(&a.levels[..], &b.levels[..=depth as usize]);
    }
}

/// Fourth finite difference across the knots at `m` and `m + eps` shrinks
/// with the step, so the profile has four continuous derivatives there.
#[test]
fn plateau_fourth_difference_is_continuous_at_the_knots() {
    let p = PlateauSpec::new(1.0, 1.0).unwrap();
    let d4 = |r: f64, h: f64| {
        let f = |x: f64| plateau_eval(&p, x);
        (f(r + 2.0 * h) - 4.0 * f(r + h) + 6.0 * f(r) - 4.0 * f(r - h) + f(r - 2.0 * h)) / h.powi(4)
    };
    for knot in [1.0, 2.0] {
        let jump = |h: f64| (d4(knot + 3.0 * h, h) - d4(knot - 3.0 * h, h)).abs();
        let (j2, j3) = (jump(1e-2), jump(1e-3));
        assert!(j2 < 1000.0 && j3 < 0.2 * j2 + 1e-6, "knot {knot}: {j2} {j3}");
    }
}
