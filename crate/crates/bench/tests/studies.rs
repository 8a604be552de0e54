use bsde_bench::study::{classify_ratios, DEFAULT_N_LIST};
use bsde_bench::{
    convergence_sweep, moment_order_study, stability_study, ConvergenceReport, SweepConfig,
    Verdict,
};
use bsde_lms::schemes::{classify_order, registered_schemes};
use bsde_lms::{builtin_scheme, logistic_problem, martingale_problem};

#[test]
fn martingale_sweep_is_exact() {
    let spec = martingale_problem(1.0, 1.0).unwrap();
    let s = builtin_scheme("abb_short_beta", Some(3)).unwrap();
    let rep = convergence_sweep(&spec, &s, DEFAULT_N_LIST, &SweepConfig::default()).unwrap();
    assert!(rep.rows.iter().all(|r| r.err_y.unwrap() < 1e-10 && r.err_z.unwrap() < 1e-10));
    assert_eq!(rep.fitted_order_y, None);
}

#[test]
fn implicit_euler_and_milne_orders() {
    let spec = logistic_problem(1.0).unwrap();
    let ie = convergence_sweep(
        &spec,
        &builtin_scheme("implicit_euler", None).unwrap(),
        DEFAULT_N_LIST,
        &SweepConfig::default(),
    )
    .unwrap();
    assert!((0.7..=1.5).contains(&ie.fitted_order_y.unwrap()));
    let milne = convergence_sweep(
        &spec,
        &builtin_scheme("milne", None).unwrap(),
        DEFAULT_N_LIST,
        &SweepConfig::default(),
    )
    .unwrap();
    assert!((3.5..=4.7).contains(&milne.fitted_order_y.unwrap()));
}

#[test]
fn moment_order_saturates() {
    let spec = logistic_problem(1.0).unwrap();
    let milne = builtin_scheme("milne", None).unwrap();
    let reports =
        moment_order_study(&spec, &milne, &[3, 9, 11], DEFAULT_N_LIST, &SweepConfig::default()).unwrap();
    let order = |k: usize| reports.iter().find(|(kk, _)| *kk == k).unwrap().1.fitted_order_y.unwrap();
    assert!((0.5..=1.5).contains(&order(3)), "{}", order(3));
    assert!(order(9) >= 3.5);
    // Beyond K = 2m + 1 the time discretization dominates.
    assert!((order(11) - order(9)).abs() < 0.1);
    assert!(moment_order_study(&spec, &milne, &[4], DEFAULT_N_LIST, &SweepConfig::default()).is_err());
}

/// Slope between the last two rows whose errors clear the fit floor.
fn final_rate(rep: &ConvergenceReport, pick: fn(&bsde_bench::ConvergenceRow) -> Option<f64>) -> f64 {
    let usable: Vec<(f64, f64)> = rep
        .rows
        .iter()
        .filter_map(|r| pick(r).filter(|e| *e > 1e-12).map(|e| (r.h, e)))
        .collect();
    let [.., (h0, e0), (h1, e1)] = usable.as_slice() else {
        panic!("{}: fewer than two usable rows", rep.scheme);
    };
    (e0 / e1).ln() / (h0 / h1).ln()
}

/// Registered schemes whose root error at n = 8 is still pre-asymptotic, so
/// that the least-squares slope over 8..128 undershoots although successive
/// error ratios approach 2^m.
const PRE_ASYMPTOTIC: &[&str] = &["amb3", "amb4", "adams_pc2"];

#[test]
fn every_registered_scheme_converges_at_its_order() {
    let spec = logistic_problem(1.0).unwrap();
    for s in registered_schemes() {
        let m = classify_order(&s) as f64;
        let rep = convergence_sweep(&spec, &s, DEFAULT_N_LIST, &SweepConfig::default()).unwrap();
        assert_eq!(rep.failures(), 0, "{}", s.name());
        let (fy, fz) = (rep.fitted_order_y.unwrap(), rep.fitted_order_z.unwrap());
        assert!(fz >= m - 0.5, "{}: z order {fz} (m = {m})", s.name());
        if PRE_ASYMPTOTIC.contains(&s.name()) {
            let rate = final_rate(&rep, |r| r.err_y);
            assert!(rate >= m - 0.3, "{}: final y rate {rate} (m = {m})", s.name());
            assert!(fy < m - 0.3, "{} now meets the fitted bound; drop it from the list", s.name());
        } else {
            assert!(fy >= m - 0.3, "{}: y order {fy} (m = {m})", s.name());
        }
    }
}

#[test]
fn stability_verdicts() {
    let spec = logistic_problem(1.0).unwrap();
    let ns = [16, 32, 64];
    let cn = builtin_scheme("crank_nicolson", None).unwrap();
    let rep = stability_study(&spec, &cn, &ns, 1e-3, 11, &SweepConfig::default()).unwrap();
    assert_eq!(rep.verdict, Verdict::Bounded);
    assert!(rep.rows.iter().all(|r| r.ratio.is_finite() && r.ratio > 0.0));
    let zero = stability_study(&spec, &cn, &ns, 0.0, 11, &SweepConfig::default()).unwrap();
    assert_eq!(zero.verdict, Verdict::Degenerate);
    let bad = builtin_scheme("unstable2", None).unwrap();
    let rep = stability_study(&spec, &bad, &ns, 1e-3, 11, &SweepConfig::default()).unwrap();
    assert_eq!(rep.verdict, Verdict::Growing);
    assert!(stability_study(&spec, &cn, &ns, -1.0, 11, &SweepConfig::default()).is_err());
}

#[test]
fn stability_is_reproducible() {
    let spec = logistic_problem(1.0).unwrap();
    let s = builtin_scheme("nystrom", None).unwrap();
    let a = stability_study(&spec, &s, &[16, 32], 1e-3, 5, &SweepConfig::default()).unwrap();
    let b = stability_study(&spec, &s, &[16, 32], 1e-3, 5, &SweepConfig::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(classify_ratios(&a.rows.iter().map(|r| r.ratio).collect::<Vec<_>>()), a.verdict);
}
