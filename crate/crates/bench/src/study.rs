//! Convergence, moment-order, truncation and stability studies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use bsde_lms::lattice::{lattice_laws, SpatialGrid, TransitionKernel};
use bsde_lms::schemes::classify_order;
use bsde_lms::solver::{increment_rules, solve_trajectory, DEFAULT_PICARD_TOL};
use bsde_lms::{
    local_truncation_error, perturbed_solve, solve, ProblemSpec, SchemeCoefficients, SolverConfig,
    Trajectory,
};

use crate::report::{log_log_slope, ConvergenceReport};
use crate::{BenchError, Result};

pub const DEFAULT_N_LIST: &[usize] = &[8, 16, 32, 64, 128];
pub const DEFAULT_STABILITY_N_LIST: &[usize] = &[16, 32, 64, 128];
pub const DEFAULT_SEED: u64 = 0x005e_ed0f_b5de;
pub const DEFAULT_EPS: f64 = 1e-3;

/// Settings shared by every row of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub x0: f64,
    pub grid_points: usize,
    pub grid_width_sigmas: f64,
    pub interp_degree: usize,
    pub picard_tol: f64,
    /// Overrides the `q = m + 1` rule.
    pub quad_points: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            x0: 0.0,
            grid_points: 2001,
            grid_width_sigmas: 8.0,
            interp_degree: 7,
            picard_tol: DEFAULT_PICARD_TOL,
            quad_points: None,
        }
    }
}

impl SweepConfig {
    /// `q = m + 1` Hermite points (moment order `K = 2m + 1`) unless overridden.
    pub fn quad_points_for(&self, scheme: &SchemeCoefficients) -> usize {
        self.quad_points.unwrap_or_else(|| classify_order(scheme).max(1) + 1)
    }

    pub fn solver_config(
        &self,
        problem: &ProblemSpec,
        scheme: &SchemeCoefficients,
        n: usize,
    ) -> Result<SolverConfig> {
        let horizon = problem.problem.horizon;
        let grid = SpatialGrid::centered(
            self.x0,
            self.grid_width_sigmas * horizon.sqrt(),
            self.grid_points,
            self.interp_degree,
        )?;
        let mut cfg = SolverConfig::new(scheme.clone(), n, self.quad_points_for(scheme), horizon, self.x0)?;
        cfg.grid = grid;
        cfg.picard_tol = self.picard_tol;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn check_n_list(ns: &[usize], scheme: &SchemeCoefficients) -> Result<()> {
    if ns.is_empty() {
        return Err(BenchError::Input("empty n list".into()));
    }
    if ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BenchError::Input(format!("n list {ns:?} is not strictly ascending")));
    }
    let r = scheme.steps();
    if ns[0] < r + 1 {
        return Err(BenchError::Input(format!(
            "n = {} is too small for the {r}-step scheme {}",
            ns[0],
            scheme.name()
        )));
    }
    Ok(())
}

/// Root-node errors for each `n`. Rows run in parallel and are reported in
/// `n` order; solver failures are kept as failed rows.
pub fn convergence_sweep(
    problem: &ProblemSpec,
    scheme: &SchemeCoefficients,
    ns: &[usize],
    base: &SweepConfig,
) -> Result<ConvergenceReport> {
    check_n_list(ns, scheme)?;
    let p = &problem.problem;
    let Some((y_exact, z_exact)) = p.exact(0.0, base.x0) else {
        return Err(BenchError::Input(format!("problem {} has no closed form", problem.name)));
    };
    let configs = ns
        .iter()
        .map(|&n| base.solver_config(problem, scheme, n))
        .collect::<Result<Vec<_>>>()?;
    let results = configs
        .par_iter()
        .map(|cfg| {
            let h = p.horizon / cfg.n as f64;
            let res = solve(p, cfg)
                .map(|(y, z)| ((y_exact - y).abs(), (z_exact - z).abs()))
                .map_err(|e| e.to_string());
            (cfg.n, h, res)
        })
        .collect();
    Ok(ConvergenceReport::from_results(
        scheme.name(),
        &problem.name,
        base.quad_points_for(scheme),
        results,
    ))
}

/// One sweep per moment order `K`, each with `q = (K + 1) / 2` points.
pub fn moment_order_study(
    problem: &ProblemSpec,
    scheme: &SchemeCoefficients,
    ks: &[usize],
    ns: &[usize],
    base: &SweepConfig,
) -> Result<Vec<(usize, ConvergenceReport)>> {
    if ks.iter().any(|k| k % 2 == 0) {
        return Err(BenchError::Input(format!("moment orders {ks:?} must be odd")));
    }
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BenchError::Input(format!("moment orders {ks:?} are not ascending")));
    }
    ks.iter()
        .map(|&k| {
            let cfg = SweepConfig {
                quad_points: Some(k.div_ceil(2)),
                ..base.clone()
            };
            Ok((k, convergence_sweep(problem, scheme, ns, &cfg)?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationRow {
    pub n: usize,
    pub h: f64,
    pub eta_y: f64,
    pub eta_z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationReport {
    pub scheme: String,
    pub order: usize,
    pub step: usize,
    pub rows: Vec<TruncationRow>,
    /// Slopes of `log(eta_y)` and `log(eta_z)` against `log(h)`.
    pub fitted_slope_y: Option<f64>,
    pub fitted_slope_z: Option<f64>,
    /// Slope of `log(eta_y + eta_z)` over rows whose dominant part is usable.
    pub fitted_slope: Option<f64>,
}

/// Root-mean-square one-step errors below this level are rounding noise.
pub const LOCAL_NOISE_FLOOR: f64 = 1e-14;

pub const DEFAULT_TRUNCATION_N_LIST: &[usize] = &[64, 128, 256, 512];

/// Local truncation errors at step `i` for each `n`.
///
/// A component enters its fit when its one-step RMS error (`h sqrt(eta_y)`
/// for Y, `sqrt(eta_z)` for Z) exceeds [`LOCAL_NOISE_FLOOR`].
pub fn truncation_sweep(
    problem: &ProblemSpec,
    scheme: &SchemeCoefficients,
    ns: &[usize],
    step: usize,
    base: &SweepConfig,
) -> Result<TruncationReport> {
    check_n_list(ns, scheme)?;
    let p = &problem.problem;
    let rows = ns
        .par_iter()
        .map(|&n| {
            let cfg = base.solver_config(problem, scheme, n)?;
            let (eta_y, eta_z) = local_truncation_error(p, scheme, n, step, &cfg)?;
            Ok(TruncationRow {
                n,
                h: p.horizon / n as f64,
                eta_y,
                eta_z,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let usable_y = |r: &TruncationRow| r.h * r.eta_y.sqrt() > LOCAL_NOISE_FLOOR;
    let usable_z = |r: &TruncationRow| r.eta_z.sqrt() > LOCAL_NOISE_FLOOR;
    let fit = |keep: &dyn Fn(&TruncationRow) -> bool, value: fn(&TruncationRow) -> f64| {
        let pts: Vec<(f64, f64)> = rows.iter().filter(|r| keep(r)).map(|r| (r.h, value(r))).collect();
        log_log_slope(&pts).ok()
    };
    Ok(TruncationReport {
        scheme: scheme.name().to_string(),
        order: classify_order(scheme),
        step,
        fitted_slope_y: fit(&usable_y, |r| r.eta_y),
        fitted_slope_z: fit(&usable_z, |r| r.eta_z),
        fitted_slope: fit(
            &|r| if r.eta_y >= r.eta_z { usable_y(r) } else { usable_z(r) },
            |r| r.eta_y + r.eta_z,
        ),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Bounded,
    Growing,
    Inconclusive,
    /// Zero perturbation: the ratio is undefined.
    Degenerate,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Bounded => "bounded",
            Verdict::Growing => "growing",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Degenerate => "degenerate",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub n: usize,
    pub eps: f64,
    /// `max_i E|dY_i|^2 + sum_i h E|dZ_i|^2`.
    pub lhs: f64,
    /// `h sum_i E[h^-2 |zeta^Y_i|^2 + |zeta^Z_i|^2]`.
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub scheme: String,
    pub problem: String,
    pub rows: Vec<StabilityRow>,
    pub verdict: Verdict,
}

impl StabilityReport {
    pub fn summary(&self) -> String {
        let mut out = format!("{} on {}\n", self.scheme, self.problem);
        out.push_str(&format!("{:>6} {:>12} {:>12} {:>12}\n", "n", "lhs", "rhs", "ratio"));
        for r in &self.rows {
            out.push_str(&format!(
                "{:>6} {:>12.5e} {:>12.5e} {:>12.5e}\n",
                r.n, r.lhs, r.rhs, r.ratio
            ));
        }
        out.push_str(&format!("verdict: {}\n", self.verdict));
        out
    }
}

/// Bounded when the ratios stay within a factor 2 of each other, growing when
/// they increase monotonically by at least a factor 10 overall.
pub fn classify_ratios(ratios: &[f64]) -> Verdict {
    if ratios.is_empty() || ratios.iter().any(|r| !r.is_finite() || *r <= 0.0) {
        return Verdict::Degenerate;
    }
    let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
    if max / min < 2.0 {
        return Verdict::Bounded;
    }
    let monotone = ratios.windows(2).all(|w| w[1] > w[0]);
    if monotone && ratios[ratios.len() - 1] / ratios[0] >= 10.0 {
        return Verdict::Growing;
    }
    Verdict::Inconclusive
}

/// Per-step shifts `(zeta^Y_i, zeta^Z_i) = eps (h U_i, V_i)`, constant in space.
#[derive(Debug, Clone)]
struct Perturbation {
    y: Vec<f64>,
    z: Vec<f64>,
}

impl Perturbation {
    /// `one_signed` draws `U, V` uniform on `[0, 1]`, otherwise on `[-1, 1]`.
    fn draw(n: usize, h: f64, eps: f64, seed: u64, one_signed: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lo = if one_signed { 0.0 } else { -1.0 };
        let mut y = Vec::with_capacity(n + 1);
        let mut z = Vec::with_capacity(n + 1);
        for _ in 0..=n {
            y.push(eps * h * rng.gen_range(lo..=1.0));
            z.push(eps * rng.gen_range(lo..=1.0));
        }
        Perturbation { y, z }
    }
}

fn stability_ratio(
    base: &Trajectory,
    perturbed: &Trajectory,
    laws: &[Vec<f64>],
    zeta: &Perturbation,
    h: f64,
    last: usize,
) -> (f64, f64) {
    let mean_sq = |law: &[f64], a: &[f64], b: &[f64]| -> f64 {
        law.iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * (x - y) * (x - y))
            .sum()
    };
    let mut max_y: f64 = 0.0;
    let mut sum_z = 0.0;
    let mut rhs = 0.0;
    for i in 0..=last {
        max_y = max_y.max(mean_sq(&laws[i], &perturbed.y[i].values, &base.y[i].values));
        sum_z += h * mean_sq(&laws[i], &perturbed.z[i].values, &base.z[i].values);
        rhs += h * (zeta.y[i] * zeta.y[i] / (h * h) + zeta.z[i] * zeta.z[i]);
    }
    (max_y + sum_z, rhs)
}

/// Empirical amplification factor of the stability inequality for each `n`.
///
/// Each `n` runs the unperturbed scheme and two perturbed runs, one with
/// zero-mean and one with one-signed shifts drawn from a ChaCha stream seeded
/// with `seed`; the larger of the two ratios is reported. Expectations use the
/// lattice law of `W_{t_i}` from `x0`.
pub fn stability_study(
    problem: &ProblemSpec,
    scheme: &SchemeCoefficients,
    ns: &[usize],
    eps: f64,
    seed: u64,
    base: &SweepConfig,
) -> Result<StabilityReport> {
    check_n_list(ns, scheme)?;
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(BenchError::Input(format!("perturbation scale {eps} must be nonnegative")));
    }
    let p = &problem.problem;
    let r = scheme.steps();
    let rows = ns
        .par_iter()
        .map(|&n| {
            let cfg = base.solver_config(problem, scheme, n)?;
            let h = p.horizon / n as f64;
            let last = n - r;
            let unperturbed = solve_trajectory(p, &cfg)?;
            let one_step = increment_rules(cfg.quad_points, 1, h, cfg.merge_tol)?;
            let kernel = TransitionKernel::new(cfg.grid, &one_step[0]);
            let laws = lattice_laws(&kernel, cfg.x0, last);
            let mut worst = (0.0, 0.0, f64::NAN);
            for (k, one_signed) in [false, true].into_iter().enumerate() {
                let zeta = Perturbation::draw(n, h, eps, seed.wrapping_add(k as u64), one_signed);
                let run = perturbed_solve(p, &cfg, |i, _| (zeta.y[i], zeta.z[i]))?;
                let (lhs, rhs) = stability_ratio(&unperturbed, &run, &laws, &zeta, h, last);
                let ratio = lhs / rhs;
                if worst.2.is_nan() || ratio > worst.2 {
                    worst = (lhs, rhs, ratio);
                }
            }
            Ok(StabilityRow {
                n,
                eps,
                lhs: worst.0,
                rhs: worst.1,
                ratio: worst.2,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let verdict = if eps == 0.0 {
        Verdict::Degenerate
    } else {
        classify_ratios(&rows.iter().map(|r| r.ratio).collect::<Vec<_>>())
    };
    Ok(StabilityReport {
        scheme: scheme.name().to_string(),
        problem: problem.name.clone(),
        rows,
        verdict,
    })
}
