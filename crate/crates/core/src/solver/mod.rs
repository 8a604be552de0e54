//! Backward recursions on the grid.
//!
//! Terminal layers are sampled from the closed-form solution; each earlier
//! layer `i` is computed node by node from the `r` following layers through
//! the conditional-expectation kernels of the spans `j = 1..r`. Within a layer
//! nodes are independent and are evaluated in parallel; each node sums its
//! contributions in a fixed order, so results do not depend on scheduling.

mod tree;
mod truncation;

pub use tree::{exact_tree_oracle, MAX_TREE_LEAVES};
pub use truncation::local_truncation_error;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::lattice::{
    convolve_increments, gauss_hermite_rule, interp_eval, IncrementRule, SpatialGrid,
    TransitionKernel, ValueFunction, DEFAULT_MERGE_TOL,
};
use crate::problems::BsdeProblem;
use crate::schemes::{SchemeCoefficients, SchemeKind};

/// Default relative Picard tolerance: `|y - map(y)| <= 1e-13 max(1, |y_init|)`.
pub const DEFAULT_PICARD_TOL: f64 = 1e-13;
pub const DEFAULT_PICARD_MAX_ITER: usize = 50;

/// Default grid: `x0 +- 8 sqrt(T)`, 2001 nodes, degree-7 interpolation.
pub const DEFAULT_GRID_POINTS: usize = 2001;
pub const DEFAULT_GRID_SIGMAS: f64 = 8.0;
pub const DEFAULT_INTERP_DEGREE: usize = 7;

pub fn default_grid(x0: f64, horizon: f64) -> Result<SpatialGrid> {
    SpatialGrid::centered(
        x0,
        DEFAULT_GRID_SIGMAS * horizon.sqrt(),
        DEFAULT_GRID_POINTS,
        DEFAULT_INTERP_DEGREE,
    )
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Number of time steps; `h = T / n`.
    pub n: usize,
    pub scheme: SchemeCoefficients,
    /// Gauss-Hermite points of the one-step increment.
    pub quad_points: usize,
    pub grid: SpatialGrid,
    /// Relative Picard tolerance (scaled by `max(1, |y_init|)`).
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    /// Root state where `(Y_0, Z_0)` is read.
    pub x0: f64,
    pub merge_tol: f64,
}

impl SolverConfig {
    /// Configuration with the default grid around `x0` for horizon `horizon`.
    pub fn new(
        scheme: SchemeCoefficients,
        n: usize,
        quad_points: usize,
        horizon: f64,
        x0: f64,
    ) -> Result<Self> {
        let cfg = SolverConfig {
            n,
            scheme,
            quad_points,
            grid: default_grid(x0, horizon)?,
            picard_tol: DEFAULT_PICARD_TOL,
            picard_max_iter: DEFAULT_PICARD_MAX_ITER,
            x0,
            merge_tol: DEFAULT_MERGE_TOL,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.scheme.steps();
        if self.n < r + 1 {
            return invalid(format!(
                "n = {} is too small for a {r}-step scheme (need n >= {})",
                self.n,
                r + 1
            ));
        }
        if !(self.picard_tol > 0.0) {
            return invalid("picard tolerance must be positive");
        }
        if self.picard_max_iter == 0 {
            return invalid("picard iteration budget must be positive");
        }
        if self.quad_points == 0 {
            return invalid("at least one quadrature point is required");
        }
        if !self.x0.is_finite() {
            return invalid("x0 must be finite");
        }
        Ok(())
    }
}

/// The `r` layers following index `i`: `y_layers[j - 1]` holds `y_{i+j}`.
#[derive(Debug, Clone)]
pub struct LayerWindow {
    pub index: usize,
    pub y_layers: Vec<ValueFunction>,
    pub z_layers: Vec<ValueFunction>,
}

impl LayerWindow {
    fn validate(&self, r: usize) -> Result<SpatialGrid> {
        if self.y_layers.len() != r || self.z_layers.len() != r {
            return invalid(format!(
                "window depth ({}, {}) does not match r = {r}",
                self.y_layers.len(),
                self.z_layers.len()
            ));
        }
        let grid = self.y_layers[0].grid;
        if self
            .y_layers
            .iter()
            .chain(&self.z_layers)
            .any(|layer| layer.grid != grid)
        {
            return invalid("all window layers must share one grid");
        }
        Ok(grid)
    }
}

/// Every layer of a backward run, indexed by time step `0..=n`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub y: Vec<ValueFunction>,
    pub z: Vec<ValueFunction>,
}

impl Trajectory {
    /// `(y_0(x), z_0(x))`.
    pub fn root(&self, x: f64) -> (f64, f64) {
        (interp_eval(&self.y[0], x), interp_eval(&self.z[0], x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOutcome {
    pub value: f64,
    pub iterations: usize,
}

/// Fixed-point iteration `y <- map(y)` until two iterates differ by at most `tol`.
pub fn picard_solve(
    map: impl Fn(f64) -> f64,
    y_init: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PicardOutcome> {
    if !(tol > 0.0) {
        return invalid("picard tolerance must be positive");
    }
    let mut y = y_init;
    let mut increment = f64::INFINITY;
    for iterations in 1..=max_iter {
        let next = map(y);
        if !next.is_finite() {
            return Err(Error::PicardNonConvergence {
                iterations,
                residual: f64::INFINITY,
            });
        }
        increment = (next - y).abs();
        y = next;
        if increment <= tol {
            return Ok(PicardOutcome {
                value: y,
                iterations,
            });
        }
    }
    Err(Error::PicardNonConvergence {
        iterations: max_iter,
        residual: increment,
    })
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PicardSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardSettings {
    fn default() -> Self {
        PicardSettings {
            tol: DEFAULT_PICARD_TOL,
            max_iter: DEFAULT_PICARD_MAX_ITER,
        }
    }
}

/// Scheme-weighted sums of the span expectations at one node.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct NodeSums {
    ce_y: f64,
    ce_f_corrector: f64,
    ce_f_predictor: f64,
    wce_y: f64,
    wce_f: f64,
}

impl NodeSums {
    /// Adds span `j` (1-based) given `[E y, E f, E[H y], E[H f]]`.
    #[inline]
    pub fn add_span(&mut self, scheme: &SchemeCoefficients, j: usize, e: [f64; 4]) {
        self.ce_y += scheme.a()[j - 1] * e[0];
        self.ce_f_corrector += scheme.b()[j] * e[1];
        if let SchemeKind::PredictorCorrector { predictor } = scheme.kind() {
            self.ce_f_predictor += predictor[j - 1] * e[1];
        }
        self.wce_y += scheme.alpha()[j - 1] * e[2];
        self.wce_f += scheme.beta()[j - 1] * e[3];
    }
}

/// Outcome of the node algebra; `Err` carries the Picard iteration count.
pub(crate) fn resolve_node(
    scheme: &SchemeCoefficients,
    problem: &BsdeProblem,
    h: f64,
    sums: &NodeSums,
    zeta: (f64, f64),
    picard: PicardSettings,
) -> std::result::Result<(f64, f64), usize> {
    let z = sums.wce_y + h * sums.wce_f + zeta.1;
    let explicit = sums.ce_y + h * sums.ce_f_corrector;
    let b0 = scheme.b()[0];
    let y = match scheme.kind() {
        SchemeKind::Multistep if b0 == 0.0 => explicit + zeta.0,
        SchemeKind::Multistep => {
            let base = explicit + zeta.0;
            let tol = picard.tol * base.abs().max(1.0);
            match picard_solve(|y| base + h * b0 * problem.f(y, z), base, tol, picard.max_iter) {
                Ok(out) => out.value,
                Err(Error::PicardNonConvergence { iterations, .. }) => return Err(iterations),
                Err(_) => return Err(0),
            }
        }
        SchemeKind::PredictorCorrector { .. } => {
            let predicted = sums.ce_y + h * sums.ce_f_predictor;
            explicit + h * b0 * problem.f(predicted, z) + zeta.0
        }
    };
    Ok((y, z))
}

/// Increment laws for spans `1..=r` built from a `q`-point Hermite rule.
pub fn increment_rules(q: usize, r: usize, h: f64, merge_tol: f64) -> Result<Vec<IncrementRule>> {
    let rule = gauss_hermite_rule(q)?;
    (1..=r)
        .map(|j| convolve_increments(&rule, j, h, merge_tol))
        .collect()
}

fn driver_layer(problem: &BsdeProblem, y: &[f64], z: &[f64]) -> Vec<f64> {
    y.iter().zip(z).map(|(&y, &z)| problem.f(y, z)).collect()
}

/// One backward layer from slices of the following layers.
#[allow(clippy::too_many_arguments)]
fn step_layer(
    problem: &BsdeProblem,
    scheme: &SchemeCoefficients,
    kernels: &[TransitionKernel],
    h: f64,
    picard: PicardSettings,
    index: usize,
    ys: &[&[f64]],
    fs: &[&[f64]],
    zeta: Option<&(dyn Fn(usize, f64) -> (f64, f64) + Sync)>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let grid = *kernels[0].grid();
    let solved: Vec<(f64, f64)> = (0..grid.n_points)
        .into_par_iter()
        .map(|m| {
            let mut sums = NodeSums::default();
            for (j, kernel) in kernels.iter().enumerate() {
                sums.add_span(scheme, j + 1, kernel.expectations_pair(m, ys[j], fs[j]));
            }
            let x = grid.node(m);
            let shift = zeta.map_or((0.0, 0.0), |z| z(index, x));
            resolve_node(scheme, problem, h, &sums, shift, picard).map_err(|iterations| {
                Error::StepFailure {
                    step: index,
                    x,
                    iterations,
                }
            })
        })
        .collect::<Result<_>>()?;
    let (y, z): (Vec<f64>, Vec<f64>) = solved.into_iter().unzip();
    if y.iter().chain(&z).any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite values in layer {index}")));
    }
    Ok((y, z))
}

/// `(u(t_{n-j}, .), u_x(t_{n-j}, .))` on the grid for `j = 0..r-1`.
pub fn initialize_terminal_layers(
    p: &BsdeProblem,
    s: &SchemeCoefficients,
    grid: SpatialGrid,
    n: usize,
) -> Result<Vec<(ValueFunction, ValueFunction)>> {
    let r = s.steps();
    if n < r {
        return invalid(format!("n = {n} is smaller than the step count r = {r}"));
    }
    let (Some(u), Some(ux)) = (&p.exact_u, &p.exact_ux) else {
        return Err(Error::InitializationUnavailable);
    };
    Ok((0..r)
        .map(|j| {
            let t = time_at(p.horizon, n, n - j);
            (
                ValueFunction::from_fn(grid, |x| u(t, x)),
                ValueFunction::from_fn(grid, |x| ux(t, x)),
            )
        })
        .collect())
}

fn time_at(horizon: f64, n: usize, k: usize) -> f64 {
    if k == n {
        horizon
    } else {
        horizon * k as f64 / n as f64
    }
}

fn check_rules(rules: &[IncrementRule], r: usize, h: f64) -> Result<()> {
    if rules.len() < r {
        return invalid(format!("{} increment rules supplied for r = {r}", rules.len()));
    }
    for (j, rule) in rules.iter().take(r).enumerate() {
        if rule.span != j + 1 || (rule.step - h).abs() > 1e-15 * h {
            return invalid(format!(
                "increment rule {} has span {} and step {}, expected span {} and step {h}",
                j,
                rule.span,
                rule.step,
                j + 1
            ));
        }
    }
    Ok(())
}

fn window_step(
    w: &LayerWindow,
    p: &BsdeProblem,
    s: &SchemeCoefficients,
    incr_rules: &[IncrementRule],
    h: f64,
    cfg: &SolverConfig,
) -> Result<(ValueFunction, ValueFunction)> {
    let r = s.steps();
    let grid = w.validate(r)?;
    check_rules(incr_rules, r, h)?;
    let kernels: Vec<TransitionKernel> = incr_rules[..r]
        .iter()
        .map(|rule| TransitionKernel::new(grid, rule))
        .collect();
    let fs: Vec<Vec<f64>> = w
        .y_layers
        .iter()
        .zip(&w.z_layers)
        .map(|(y, z)| driver_layer(p, &y.values, &z.values))
        .collect();
    let ys: Vec<&[f64]> = w.y_layers.iter().map(|l| l.values.as_slice()).collect();
    let fs: Vec<&[f64]> = fs.iter().map(Vec::as_slice).collect();
    let picard = PicardSettings {
        tol: cfg.picard_tol,
        max_iter: cfg.picard_max_iter,
    };
    let (y, z) = step_layer(p, s, &kernels, h, picard, w.index, &ys, &fs, None)?;
    Ok((ValueFunction::new(grid, y)?, ValueFunction::new(grid, z)?))
}

/// One step of the generic multi-step recursion: `Z_i` from the weighted
/// expectations, then `Y_i`, with the implicit `b_0` term resolved by Picard.
pub fn multistep_backward_step(
    w: &LayerWindow,
    p: &BsdeProblem,
    s: &SchemeCoefficients,
    incr_rules: &[IncrementRule],
    h: f64,
    cfg: &SolverConfig,
) -> Result<(ValueFunction, ValueFunction)> {
    if !matches!(s.kind(), SchemeKind::Multistep) {
        return invalid(format!("{} is a predictor-corrector pair", s.name()));
    }
    window_step(w, p, s, incr_rules, h, cfg)
}

/// One predictor-corrector step: Bashforth `Z_i`, explicit predictor, and the
/// Moulton corrector with `b_0 f(Y^p_i, Z_i)`. No Picard loop.
pub fn predictor_corrector_step(
    w: &LayerWindow,
    p: &BsdeProblem,
    pc: &SchemeCoefficients,
    incr_rules: &[IncrementRule],
    h: f64,
    cfg: &SolverConfig,
) -> Result<(ValueFunction, ValueFunction)> {
    if !matches!(pc.kind(), SchemeKind::PredictorCorrector { .. }) {
        return invalid(format!("{} is not a predictor-corrector pair", pc.name()));
    }
    window_step(w, p, pc, incr_rules, h, cfg)
}

/// Kernels and settings shared by every layer of one run.
struct Engine<'a> {
    problem: &'a BsdeProblem,
    cfg: &'a SolverConfig,
    h: f64,
    kernels: Vec<TransitionKernel>,
    picard: PicardSettings,
}

impl<'a> Engine<'a> {
    fn new(problem: &'a BsdeProblem, cfg: &'a SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let scheme = &cfg.scheme;
        let h = problem.horizon / cfg.n as f64;
        let b0 = scheme.b()[0];
        if matches!(scheme.kind(), SchemeKind::Multistep)
            && b0 != 0.0
            && h * problem.lipschitz_bound * b0.abs() >= 1.0
        {
            return invalid(format!(
                "implicit step is not a contraction: h L |b_0| = {}",
                h * problem.lipschitz_bound * b0.abs()
            ));
        }
        let kernels = increment_rules(cfg.quad_points, scheme.steps(), h, cfg.merge_tol)?
            .iter()
            .map(|rule| TransitionKernel::new(cfg.grid, rule))
            .collect();
        Ok(Engine {
            problem,
            cfg,
            h,
            kernels,
            picard: PicardSettings {
                tol: cfg.picard_tol,
                max_iter: cfg.picard_max_iter,
            },
        })
    }

    fn run(
        &self,
        zeta: Option<&(dyn Fn(usize, f64) -> (f64, f64) + Sync)>,
    ) -> Result<Trajectory> {
        let cfg = self.cfg;
        let (n, r) = (cfg.n, cfg.scheme.steps());
        let grid = cfg.grid;
        let mut y: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
        let mut z: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
        let mut f: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
        for (j, (yl, zl)) in initialize_terminal_layers(self.problem, &cfg.scheme, grid, n)?
            .into_iter()
            .enumerate()
        {
            let k = n - j;
            f[k] = driver_layer(self.problem, &yl.values, &zl.values);
            y[k] = yl.values;
            z[k] = zl.values;
        }
        for i in (0..=n - r).rev() {
            let ys: Vec<&[f64]> = (1..=r).map(|j| y[i + j].as_slice()).collect();
            let fs: Vec<&[f64]> = (1..=r).map(|j| f[i + j].as_slice()).collect();
            let (yi, zi) = step_layer(
                self.problem,
                &cfg.scheme,
                &self.kernels,
                self.h,
                self.picard,
                i,
                &ys,
                &fs,
                zeta,
            )?;
            f[i] = driver_layer(self.problem, &yi, &zi);
            y[i] = yi;
            z[i] = zi;
        }
        Ok(Trajectory {
            times: (0..=n).map(|k| time_at(self.problem.horizon, n, k)).collect(),
            y: y.into_iter().map(|values| ValueFunction { grid, values }).collect(),
            z: z.into_iter().map(|values| ValueFunction { grid, values }).collect(),
        })
    }
}

/// Full backward run; every layer is returned.
pub fn solve_trajectory(p: &BsdeProblem, cfg: &SolverConfig) -> Result<Trajectory> {
    Engine::new(p, cfg)?.run(None)
}

/// `(y_0(x0), z_0(x0))` of the fully discrete scheme.
pub fn solve(p: &BsdeProblem, cfg: &SolverConfig) -> Result<(f64, f64)> {
    Ok(solve_trajectory(p, cfg)?.root(cfg.x0))
}

/// Same recursion with `zeta(i, x) = (zeta_Y, zeta_Z)` added to the Y- and
/// Z-updates of layer `i` at node `x`.
pub fn perturbed_solve(
    p: &BsdeProblem,
    cfg: &SolverConfig,
    zeta: impl Fn(usize, f64) -> (f64, f64) + Sync,
) -> Result<Trajectory> {
    Engine::new(p, cfg)?.run(Some(&zeta))
}
