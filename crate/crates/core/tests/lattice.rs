use bsde_lms::lattice::{lattice_laws, DEFAULT_MERGE_TOL};
use bsde_lms::{
    conditional_expectation, convolve_increments, gauss_hermite_rule, gaussian_moment,
    interp_eval, weighted_conditional_expectation, BoundaryMode, SpatialGrid, TransitionKernel,
    ValueFunction,
};
use proptest::prelude::*;

fn moment_error(q: usize, p: usize) -> f64 {
    let rule = gauss_hermite_rule(q).unwrap();
    (rule.moment(p) - gaussian_moment(p)).abs() / gaussian_moment(p).max(1.0)
}

#[test]
fn moment_closure_and_first_failure() {
    for q in 1..=8 {
        for p in 0..2 * q {
            assert!(moment_error(q, p) < 1e-11, "q={q}, p={p}: {}", moment_error(q, p));
        }
        assert!(moment_error(q, 2 * q) > 1e-6, "q={q}: p=2q moment is matched");
        let rule = gauss_hermite_rule(q).unwrap();
        assert_eq!(rule.match_order, 2 * q - 1);
        let total: f64 = rule.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!(rule.weights.iter().all(|w| *w > 0.0));
    }
}

#[test]
fn hermite_nodes_are_roots_of_he_q() {
    // He_4(x) = x^4 - 6x^2 + 3.
    let rule = gauss_hermite_rule(4).unwrap();
    for x in &rule.nodes {
        assert!((x.powi(4) - 6.0 * x * x + 3.0).abs() < 1e-12, "{x}");
    }
}

/// Moments of a sum of `j` independent copies, from the one-step moments.
fn sum_moment(one: &dyn Fn(usize) -> f64, j: usize, p: usize) -> f64 {
    // dist[k] = moments of the k-fold sum.
    let mut dist: Vec<f64> = (0..=p).map(|k| if k == 0 { 1.0 } else { 0.0 }).collect();
    for _ in 0..j {
        let mut next = vec![0.0; p + 1];
        for (n, slot) in next.iter_mut().enumerate() {
            let mut binom = 1.0;
            for k in 0..=n {
                *slot += binom * dist[k] * one(n - k);
                binom = binom * (n - k) as f64 / (k + 1) as f64;
            }
        }
        dist = next;
    }
    dist[p]
}

proptest! {
    #[test]
    fn convolution_preserves_moments(q in 1usize..=6, j in 1usize..=4, h in 0.001f64..1.0, exact in any::<bool>()) {
        let rule = gauss_hermite_rule(q).unwrap();
        let tol = if exact { 0.0 } else { DEFAULT_MERGE_TOL };
        let incr = convolve_increments(&rule, j, h, tol).unwrap();
        let total: f64 = incr.weights.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-13);
        // Without merging, sums one ulp apart may coincide once scaled by sqrt(h).
        prop_assert!(incr.atoms.windows(2).all(|w| w[0] < w[1] || (tol == 0.0 && w[0] == w[1])));
        // Sums of the same multiset of nodes coincide up to rounding.
        let multisets = (1..=j).fold(1usize, |acc, k| acc * (q + k - 1) / k);
        prop_assert!(incr.atoms.len() <= multisets || tol == 0.0);
        prop_assert!(incr.atoms.len() <= q.pow(j as u32));
        for p in 0..=2 * q + 1 {
            let want = sum_moment(&|k| rule.moment(k), j, p) * h.powf(p as f64 / 2.0);
            // Odd moments vanish; measure against the neighbouring even one.
            let scale = gaussian_moment(p + p % 2) * (j as f64 * h).powf(p as f64 / 2.0);
            prop_assert!((incr.moment(p) - want).abs() <= 1e-11 * scale,
                "p={}: {} vs {}", p, incr.moment(p), want);
        }
    }

    #[test]
    fn interpolation_reproduces_low_degree_polynomials(
        degree in 1usize..=9,
        coeffs in prop::collection::vec(-2.0f64..2.0, 10),
        x in -3.9f64..3.9,
    ) {
        let grid = SpatialGrid::new(-4.0, 4.0, 161, degree, BoundaryMode::Clamp).unwrap();
        let poly = |x: f64| coeffs[..=degree].iter().rev().fold(0.0, |acc, c| acc * x + c);
        let f = ValueFunction::from_fn(grid, poly);
        let scale: f64 = coeffs.iter().map(|c| c.abs()).sum::<f64>() * 4f64.powi(degree as i32);
        prop_assert!((interp_eval(&f, x) - poly(x)).abs() < 1e-12 * scale.max(1.0));
    }

    #[test]
    fn kernel_matches_direct_expectations(q in 1usize..=6, j in 1usize..=3, m in 200usize..600) {
        let grid = SpatialGrid::centered(0.0, 8.0, 801, 7).unwrap();
        let incr = convolve_increments(&gauss_hermite_rule(q).unwrap(), j, 0.05, DEFAULT_MERGE_TOL).unwrap();
        let y = ValueFunction::from_fn(grid, |x| (0.7 * x).sin() + 0.1 * x * x);
        let kernel = TransitionKernel::new(grid, &incr);
        let (ce, wce) = kernel.expectations(m, &y.values);
        let x = grid.node(m);
        prop_assert!((ce - conditional_expectation(&y, x, &incr)).abs() < 1e-12);
        prop_assert!((wce - weighted_conditional_expectation(&y, x, &incr)).abs() < 1e-11);
    }
}

#[test]
fn expectations_of_polynomials_are_moment_exact() {
    // E[(x + D)^3] = x^3 + 3 x var and E[D/(jh) (x + D)^2] = 2x for D ~ N(0, jh).
    let grid = SpatialGrid::centered(0.0, 10.0, 1001, 7).unwrap();
    let y = ValueFunction::from_fn(grid, |x| x.powi(3));
    let sq = ValueFunction::from_fn(grid, |x| x * x);
    let h = 0.1;
    for j in 1..=3 {
        let incr = convolve_increments(&gauss_hermite_rule(3).unwrap(), j, h, DEFAULT_MERGE_TOL).unwrap();
        let var = j as f64 * h;
        for &x in &[-1.3, 0.0, 0.45, 2.0] {
            let ce = conditional_expectation(&y, x, &incr);
            assert!((ce - (x.powi(3) + 3.0 * x * var)).abs() < 1e-11, "j={j}, x={x}");
            let wce = weighted_conditional_expectation(&sq, x, &incr);
            assert!((wce - 2.0 * x).abs() < 1e-11, "j={j}, x={x}");
        }
    }
}

#[test]
fn lattice_laws_are_probability_measures_with_gaussian_moments() {
    let grid = SpatialGrid::centered(0.0, 8.0, 1601, 7).unwrap();
    let h = 1.0 / 16.0;
    let incr = convolve_increments(&gauss_hermite_rule(3).unwrap(), 1, h, DEFAULT_MERGE_TOL).unwrap();
    let kernel = TransitionKernel::new(grid, &incr);
    let laws = lattice_laws(&kernel, 0.0, 16);
    for (i, law) in laws.iter().enumerate() {
        let mass: f64 = law.iter().sum();
        assert!((mass - 1.0).abs() < 1e-12, "step {i}: mass {mass}");
        let var: f64 = law.iter().zip(grid.nodes()).map(|(w, x)| w * x * x).sum();
        assert!((var - i as f64 * h).abs() < 1e-10, "step {i}: var {var}");
    }
}
