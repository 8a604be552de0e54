//! Moment-matched Brownian increments and grid conditional expectations.
//!
//! The fully discrete schemes replace the Brownian motion by a random walk
//! `W_{t_i} = x + sum_k sqrt(h) xi_k`, where `xi` is a discrete variable whose
//! moments agree with a standard Gaussian up to some order `K`. Functions of
//! space are stored on a uniform grid and evaluated off-grid by local Lagrange
//! interpolation, which turns one step of the walk into a banded linear map on
//! grid values ([`TransitionKernel`]).

use nalgebra::{linalg::SymmetricEigen, DMatrix};

use crate::error::{invalid, Error, Result};

/// Largest supported Gauss-Hermite rule.
pub const MAX_QUAD_POINTS: usize = 20;

/// Largest supported interpolation degree.
pub const MAX_INTERP_DEGREE: usize = 15;

/// Atoms closer than `merge_tol * sqrt(j h)` are merged by default.
pub const DEFAULT_MERGE_TOL: f64 = 1e-12;

// Positions within this many grid spacings of a node snap to it, so that
// evaluating at a node returns the stored value bit for bit.
const NODE_SNAP: f64 = 1e-11;

/// Discrete variable `xi` with `E[xi^p] = E[G^p]` for `p <= match_order`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub match_order: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `sum_k w_k xi_k^p`, accumulated over mirrored pairs so odd moments of a
    /// symmetric rule vanish exactly.
    pub fn moment(&self, p: usize) -> f64 {
        symmetric_moment(&self.nodes, &self.weights, p)
    }
}

fn symmetric_moment(nodes: &[f64], weights: &[f64], p: usize) -> f64 {
    let n = nodes.len();
    let mut acc = 0.0;
    for k in 0..n / 2 {
        let l = n - 1 - k;
        acc += weights[k] * nodes[k].powi(p as i32) + weights[l] * nodes[l].powi(p as i32);
    }
    if n % 2 == 1 {
        let c = n / 2;
        acc += weights[c] * nodes[c].powi(p as i32);
    }
    acc
}

/// `E[G^p]` for a standard Gaussian: `0` for odd `p`, `(p-1)!!` for even `p`.
pub fn gaussian_moment(p: usize) -> f64 {
    if p % 2 == 1 {
        return 0.0;
    }
    (1..p).step_by(2).fold(1.0, |acc, k| acc * k as f64)
}

/// Probabilists' Hermite polynomials `He_q(x)` and `He_{q-1}(x)`.
fn hermite_pair(q: usize, x: f64) -> (f64, f64) {
    let mut prev = 1.0;
    let mut cur = x;
    if q == 0 {
        return (1.0, 0.0);
    }
    for k in 1..q {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// `q`-point Gauss-Hermite rule for the standard normal law.
///
/// Nodes start from the eigenvalues of the Jacobi matrix of the Hermite
/// recurrence (off-diagonal `sqrt(k)`), are polished by Newton on `He_q`, and
/// weights use `q! / (q He_{q-1}(x))^2`. The result is symmetrized so that
/// `nodes[k] = -nodes[q-1-k]` exactly.
pub fn gauss_hermite_rule(q: usize) -> Result<QuadratureRule> {
    if q == 0 || q > MAX_QUAD_POINTS {
        return invalid(format!("quadrature size must be in 1..={MAX_QUAD_POINTS}, got {q}"));
    }
    if q == 1 {
        return Ok(QuadratureRule {
            nodes: vec![0.0],
            weights: vec![1.0],
            match_order: 1,
        });
    }
    let mut jacobi = DMatrix::<f64>::zeros(q, q);
    for k in 1..q {
        let off = (k as f64).sqrt();
        jacobi[(k, k - 1)] = off;
        jacobi[(k - 1, k)] = off;
    }
    let eig = SymmetricEigen::try_new(jacobi, 1e-15, 10_000).ok_or_else(|| {
        Error::Numerical(format!("Jacobi eigen-solver did not converge for q = {q}"))
    })?;
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);

    let factorial: f64 = (1..=q).map(|k| k as f64).product();
    let mut weights = vec![0.0; q];
    for (x, w) in nodes.iter_mut().zip(weights.iter_mut()) {
        for _ in 0..8 {
            let (he, he_prev) = hermite_pair(q, *x);
            let step = he / (q as f64 * he_prev);
            *x -= step;
            if step.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        let (_, he_prev) = hermite_pair(q, *x);
        *w = factorial / (q as f64 * he_prev).powi(2);
    }

    for k in 0..q / 2 {
        let l = q - 1 - k;
        let x = 0.5 * (nodes[l] - nodes[k]);
        let w = 0.5 * (weights[k] + weights[l]);
        nodes[k] = -x;
        nodes[l] = x;
        weights[k] = w;
        weights[l] = w;
    }
    if q % 2 == 1 {
        nodes[q / 2] = 0.0;
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);

    Ok(QuadratureRule {
        nodes,
        weights,
        match_order: 2 * q - 1,
    })
}

/// Law of `W_{t_{i+j}} - W_{t_i}` on the lattice: `sqrt(h) (xi_1 + ... + xi_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementRule {
    pub span: usize,
    pub step: f64,
    /// Displacements, ascending.
    pub atoms: Vec<f64>,
    pub weights: Vec<f64>,
}

impl IncrementRule {
    pub fn moment(&self, p: usize) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(d, w)| w * d.powi(p as i32))
            .sum()
    }

    /// Elapsed time `j h` covered by the increment.
    pub fn duration(&self) -> f64 {
        self.span as f64 * self.step
    }
}

fn merge_sorted(mut atoms: Vec<(f64, f64)>, threshold: f64) -> Vec<(f64, f64)> {
    atoms.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
    // (anchor, weighted offset sum, weight sum, last position)
    let mut cluster: Option<(f64, f64, f64, f64)> = None;
    for (x, w) in atoms {
        cluster = match cluster {
            Some((anchor, off, tw, last)) if x - last <= threshold => {
                Some((anchor, off + w * (x - anchor), tw + w, x))
            }
            Some((anchor, off, tw, _)) => {
                out.push((anchor + off / tw, tw));
                Some((x, 0.0, w, x))
            }
            None => Some((x, 0.0, w, x)),
        };
    }
    if let Some((anchor, off, tw, _)) = cluster {
        out.push((anchor + off / tw, tw));
    }
    out
}

/// Exact law of `sqrt(h) (xi_1 + ... + xi_j)` for i.i.d. `xi ~ rule`.
///
/// Atoms closer than `merge_tol * sqrt(j h)` are merged (weights summed,
/// position weight-averaged); `merge_tol = 0` only merges coincident sums.
pub fn convolve_increments(
    rule: &QuadratureRule,
    j: usize,
    h: f64,
    merge_tol: f64,
) -> Result<IncrementRule> {
    if j == 0 {
        return invalid("increment span must be at least 1");
    }
    if !(h > 0.0 && h.is_finite()) {
        return invalid(format!("time step must be positive, got {h}"));
    }
    if !(merge_tol >= 0.0) {
        return invalid(format!("merge tolerance must be non-negative, got {merge_tol}"));
    }
    let sqrt_h = h.sqrt();
    if j == 1 {
        return Ok(IncrementRule {
            span: 1,
            step: h,
            atoms: rule.nodes.iter().map(|x| sqrt_h * x).collect(),
            weights: rule.weights.clone(),
        });
    }
    let threshold = merge_tol * (j as f64).sqrt();
    let base: Vec<(f64, f64)> = rule
        .nodes
        .iter()
        .copied()
        .zip(rule.weights.iter().copied())
        .collect();
    let mut law = base.clone();
    for _ in 1..j {
        let mut next = Vec::with_capacity(law.len() * base.len());
        for &(x, w) in &law {
            for &(xi, wi) in &base {
                next.push((x + xi, w * wi));
            }
        }
        law = merge_sorted(next, threshold);
    }
    Ok(IncrementRule {
        span: j,
        step: h,
        atoms: law.iter().map(|(x, _)| sqrt_h * x).collect(),
        weights: law.iter().map(|(_, w)| *w).collect(),
    })
}

/// What interpolation does for positions outside `[x_min, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    /// Evaluate at the nearest boundary point (constant extension).
    Clamp,
    /// Evaluate the boundary stencil's polynomial outside the grid.
    Extrapolate,
}

/// Uniform grid with local Lagrange interpolation of degree `interp_degree`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
    pub interp_degree: usize,
    pub boundary: BoundaryMode,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Stencil {
    pub base: usize,
    pub weights: [f64; MAX_INTERP_DEGREE + 1],
}

impl SpatialGrid {
    pub fn new(
        x_min: f64,
        x_max: f64,
        n_points: usize,
        interp_degree: usize,
        boundary: BoundaryMode,
    ) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return invalid(format!("grid bounds must satisfy x_min < x_max, got [{x_min}, {x_max}]"));
        }
        if interp_degree == 0 || interp_degree > MAX_INTERP_DEGREE {
            return invalid(format!(
                "interpolation degree must be in 1..={MAX_INTERP_DEGREE}, got {interp_degree}"
            ));
        }
        if n_points <= interp_degree {
            return invalid(format!(
                "{n_points} grid points cannot carry degree-{interp_degree} interpolation"
            ));
        }
        Ok(SpatialGrid {
            x_min,
            x_max,
            n_points,
            interp_degree,
            boundary,
        })
    }

    /// Grid on `[center - half_width, center + half_width]`; with an odd point
    /// count the center is a node.
    pub fn centered(center: f64, half_width: f64, n_points: usize, interp_degree: usize) -> Result<Self> {
        Self::new(
            center - half_width,
            center + half_width,
            n_points,
            interp_degree,
            BoundaryMode::Clamp,
        )
    }

    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    pub fn node(&self, m: usize) -> f64 {
        if m + 1 == self.n_points {
            self.x_max
        } else {
            self.x_min + m as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|m| self.node(m)).collect()
    }

    /// Continuous index of `x`.
    fn position(&self, x: f64) -> f64 {
        (x - self.x_min) / self.spacing()
    }

    /// Interpolation stencil at continuous index `s`.
    pub(crate) fn stencil_at(&self, s: f64) -> Stencil {
        let p = self.interp_degree;
        let last = (self.n_points - 1) as f64;
        let s = match self.boundary {
            BoundaryMode::Clamp => s.clamp(0.0, last),
            BoundaryMode::Extrapolate => s,
        };
        let max_base = (self.n_points - 1 - p) as i64;
        let base = stencil_offset(s, p).clamp(0, max_base);
        Stencil {
            base: base as usize,
            weights: lagrange_weights(s - base as f64, p),
        }
    }

    pub(crate) fn stencil(&self, x: f64) -> Stencil {
        self.stencil_at(self.position(x))
    }

    pub(crate) fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let st = self.stencil(x);
        dot_stencil(&st.weights[..=self.interp_degree], &values[st.base..])
    }
}

/// First node of the `p + 1` nodes nearest to continuous index `s`.
/// Shift-invariant: `stencil_offset(s + m) = stencil_offset(s) + m` for integer `m`.
fn stencil_offset(s: f64, p: usize) -> i64 {
    if p % 2 == 1 {
        s.floor() as i64 - (p as i64 - 1) / 2
    } else {
        (s + 0.5).floor() as i64 - p as i64 / 2
    }
}

/// Lagrange basis on the integer nodes `0..=p`, evaluated at `t`.
fn lagrange_weights(t: f64, p: usize) -> [f64; MAX_INTERP_DEGREE + 1] {
    let mut out = [0.0; MAX_INTERP_DEGREE + 1];
    let nearest = t.round();
    if (t - nearest).abs() <= NODE_SNAP && nearest >= 0.0 && nearest <= p as f64 {
        out[nearest as usize] = 1.0;
        return out;
    }
    for (l, slot) in out.iter_mut().enumerate().take(p + 1) {
        let mut v = 1.0;
        for k in 0..=p {
            if k != l {
                v *= (t - k as f64) / (l as f64 - k as f64);
            }
        }
        *slot = v;
    }
    out
}

#[inline]
fn dot_stencil(weights: &[f64], values: &[f64]) -> f64 {
    weights.iter().zip(values).map(|(w, v)| w * v).sum()
}

/// Samples of a function of space on a [`SpatialGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub grid: SpatialGrid,
    pub values: Vec<f64>,
}

impl ValueFunction {
    pub fn new(grid: SpatialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points {
            return invalid(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.n_points
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("value function has non-finite samples".into()));
        }
        Ok(ValueFunction { grid, values })
    }

    pub fn from_fn(grid: SpatialGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.n_points).map(|m| f(grid.node(m))).collect();
        ValueFunction { grid, values }
    }

    pub fn constant(grid: SpatialGrid, c: f64) -> Self {
        ValueFunction {
            grid,
            values: vec![c; grid.n_points],
        }
    }
}

/// Local Lagrange interpolation of `f` at `x` over the `p + 1` nearest nodes
/// (one-sided stencils at the edges).
pub fn interp_eval(f: &ValueFunction, x: f64) -> f64 {
    f.grid.interpolate(&f.values, x)
}

/// `E[f(x + D)]` with `D` distributed as `incr`.
pub fn conditional_expectation(f: &ValueFunction, x: f64, incr: &IncrementRule) -> f64 {
    incr.atoms
        .iter()
        .zip(&incr.weights)
        .map(|(d, w)| w * interp_eval(f, x + d))
        .sum()
}

/// `E[D / (j h) f(x + D)]`: the conditional expectation weighted by the
/// normalized increment, which stands in for the Brownian weight `H`.
pub fn weighted_conditional_expectation(f: &ValueFunction, x: f64, incr: &IncrementRule) -> f64 {
    let duration = incr.duration();
    incr.atoms
        .iter()
        .zip(&incr.weights)
        .map(|(d, w)| w * (d / duration) * interp_eval(f, x + d))
        .sum()
}

#[derive(Debug, Clone)]
struct KernelAtom {
    delta: f64,
    weight: f64,
    // weight * delta / (j h)
    h_weight: f64,
    offset: i64,
    lagrange: [f64; MAX_INTERP_DEGREE + 1],
}

/// One increment law applied to grid values at every node.
///
/// On a uniform grid the interpolation stencil of `x_m + delta` is the stencil
/// of `delta` shifted by `m`, so away from the edges each atom contributes a
/// fixed set of Lagrange weights. Nodes whose stencils would touch the edges
/// fall back to [`SpatialGrid`] interpolation at `x_m + delta`.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    grid: SpatialGrid,
    span: usize,
    step: f64,
    atoms: Vec<KernelAtom>,
    interior_lo: usize,
    interior_hi: usize,
}

impl TransitionKernel {
    pub fn new(grid: SpatialGrid, incr: &IncrementRule) -> Self {
        let p = grid.interp_degree;
        let dx = grid.spacing();
        let duration = incr.duration();
        let atoms: Vec<KernelAtom> = incr
            .atoms
            .iter()
            .zip(&incr.weights)
            .map(|(&delta, &weight)| {
                let u = delta / dx;
                let offset = stencil_offset(u, p);
                KernelAtom {
                    delta,
                    weight,
                    h_weight: weight * delta / duration,
                    offset,
                    lagrange: lagrange_weights(u - offset as f64, p),
                }
            })
            .collect();
        let min_off = atoms.iter().map(|a| a.offset).min().unwrap_or(0);
        let max_off = atoms.iter().map(|a| a.offset).max().unwrap_or(0);
        let last = grid.n_points as i64 - 1;
        let lo = (-min_off).max(0);
        let hi = last - p as i64 - max_off;
        let (interior_lo, interior_hi) = if hi >= lo {
            (lo as usize, hi as usize + 1)
        } else {
            (0, 0)
        };
        TransitionKernel {
            grid,
            span: incr.span,
            step: incr.step,
            atoms,
            interior_lo,
            interior_hi,
        }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn span(&self) -> usize {
        self.span
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    fn is_interior(&self, m: usize) -> bool {
        m >= self.interior_lo && m < self.interior_hi
    }

    /// `(E[y], E[H y])` at node `m`.
    pub fn expectations(&self, m: usize, y: &[f64]) -> (f64, f64) {
        let p = self.grid.interp_degree;
        let (mut ce, mut wce) = (0.0, 0.0);
        if self.is_interior(m) {
            for a in &self.atoms {
                let base = (m as i64 + a.offset) as usize;
                let v = dot_stencil(&a.lagrange[..=p], &y[base..]);
                ce += a.weight * v;
                wce += a.h_weight * v;
            }
        } else {
            let x = self.grid.node(m);
            for a in &self.atoms {
                let v = self.grid.interpolate(y, x + a.delta);
                ce += a.weight * v;
                wce += a.h_weight * v;
            }
        }
        (ce, wce)
    }

    /// `[E[y], E[f], E[H y], E[H f]]` at node `m`, sharing stencils between the
    /// two layers.
    pub fn expectations_pair(&self, m: usize, y: &[f64], f: &[f64]) -> [f64; 4] {
        let p = self.grid.interp_degree;
        let mut acc = [0.0; 4];
        let mut add = |a: &KernelAtom, vy: f64, vf: f64| {
            acc[0] += a.weight * vy;
            acc[1] += a.weight * vf;
            acc[2] += a.h_weight * vy;
            acc[3] += a.h_weight * vf;
        };
        if self.is_interior(m) {
            for a in &self.atoms {
                let base = (m as i64 + a.offset) as usize;
                let w = &a.lagrange[..=p];
                add(a, dot_stencil(w, &y[base..]), dot_stencil(w, &f[base..]));
            }
        } else {
            let x = self.grid.node(m);
            for a in &self.atoms {
                let st = self.grid.stencil(x + a.delta);
                let w = &st.weights[..=p];
                add(a, dot_stencil(w, &y[st.base..]), dot_stencil(w, &f[st.base..]));
            }
        }
        acc
    }

    /// Pushes a signed measure on the nodes one step forward: the adjoint of
    /// `y -> E[y(. + D)]`.
    pub fn propagate_law(&self, mu: &[f64]) -> Vec<f64> {
        let p = self.grid.interp_degree;
        let mut next = vec![0.0; self.grid.n_points];
        for (m, &mass) in mu.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            if self.is_interior(m) {
                for a in &self.atoms {
                    let base = (m as i64 + a.offset) as usize;
                    for (l, w) in a.lagrange[..=p].iter().enumerate() {
                        next[base + l] += mass * a.weight * w;
                    }
                }
            } else {
                let x = self.grid.node(m);
                for a in &self.atoms {
                    let st = self.grid.stencil(x + a.delta);
                    for (l, w) in st.weights[..=p].iter().enumerate() {
                        next[st.base + l] += mass * a.weight * w;
                    }
                }
            }
        }
        next
    }
}

/// Node measures representing the lattice law of `W_{t_i}` started at `x0`,
/// for `i = 0..=steps`, obtained by pushing the point mass at `x0` through the
/// one-step kernel. `E[phi(W_{t_i})]` is then `sum_m laws[i][m] phi(x_m)`.
pub fn lattice_laws(one_step: &TransitionKernel, x0: f64, steps: usize) -> Vec<Vec<f64>> {
    let grid = one_step.grid;
    let p = grid.interp_degree;
    let mut mu = vec![0.0; grid.n_points];
    let st = grid.stencil(x0);
    for (l, w) in st.weights[..=p].iter().enumerate() {
        mu[st.base + l] += w;
    }
    let mut laws = Vec::with_capacity(steps + 1);
    laws.push(mu);
    for i in 0..steps {
        let next = one_step.propagate_law(&laws[i]);
        laws.push(next);
    }
    laws
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(lo: f64, hi: f64, n: usize, p: usize) -> SpatialGrid {
        SpatialGrid::new(lo, hi, n, p, BoundaryMode::Clamp).unwrap()
    }

    #[test]
    fn small_hermite_rules() {
        let r1 = gauss_hermite_rule(1).unwrap();
        assert_eq!((r1.nodes.clone(), r1.weights.clone(), r1.match_order), (vec![0.0], vec![1.0], 1));

        let r2 = gauss_hermite_rule(2).unwrap();
        assert_abs_diff_eq!(r2.nodes[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r2.nodes[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r2.weights[0], 0.5, epsilon = 1e-15);
        assert_eq!(r2.match_order, 3);

        let r3 = gauss_hermite_rule(3).unwrap();
        let s3 = 3f64.sqrt();
        for (got, want) in r3.nodes.iter().zip([-s3, 0.0, s3]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
        for (got, want) in r3.weights.iter().zip([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
        assert_eq!(r3.match_order, 5);
    }

    #[test]
    fn hermite_rejects_bad_sizes() {
        assert!(gauss_hermite_rule(0).is_err());
        assert!(gauss_hermite_rule(21).is_err());
        assert!(gauss_hermite_rule(20).is_ok());
    }

    #[test]
    fn gaussian_moments() {
        assert_eq!(gaussian_moment(0), 1.0);
        assert_eq!(gaussian_moment(3), 0.0);
        assert_eq!(gaussian_moment(4), 3.0);
        assert_eq!(gaussian_moment(6), 15.0);
    }

    #[test]
    fn two_point_rule_convolved_twice() {
        let r2 = gauss_hermite_rule(2).unwrap();
        let inc = convolve_increments(&r2, 2, 1.0, DEFAULT_MERGE_TOL).unwrap();
        assert_eq!(inc.atoms.len(), 3);
        for (got, want) in inc.atoms.iter().zip([-2.0, 0.0, 2.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-14);
        }
        for (got, want) in inc.weights.iter().zip([0.25, 0.5, 0.25]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
    }

    #[test]
    fn single_step_scales_nodes() {
        let r4 = gauss_hermite_rule(4).unwrap();
        let inc = convolve_increments(&r4, 1, 4.0, DEFAULT_MERGE_TOL).unwrap();
        for (a, x) in inc.atoms.iter().zip(&r4.nodes) {
            assert_eq!(*a, 2.0 * x);
        }
        assert_eq!(inc.weights, r4.weights);
    }

    #[test]
    fn convolution_variance_adds() {
        let r3 = gauss_hermite_rule(3).unwrap();
        let inc = convolve_increments(&r3, 2, 1.0, DEFAULT_MERGE_TOL).unwrap();
        assert_abs_diff_eq!(inc.moment(2), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn convolution_rejects_bad_arguments() {
        let r2 = gauss_hermite_rule(2).unwrap();
        assert!(convolve_increments(&r2, 0, 1.0, 0.0).is_err());
        assert!(convolve_increments(&r2, 1, 0.0, 0.0).is_err());
        assert!(convolve_increments(&r2, 1, 1.0, -1.0).is_err());
    }

    #[test]
    fn interpolation_hits_nodes_exactly() {
        let g = grid(-1.0, 1.0, 41, 5);
        let f = ValueFunction::from_fn(g, |x| (3.0 * x).exp());
        for m in [0, 7, 20, 33, 40] {
            assert_eq!(interp_eval(&f, g.node(m)), f.values[m]);
        }
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        for p in [1, 2, 5, 7] {
            let g = grid(-2.0, 3.0, 51, p);
            let poly = |x: f64| (0..=p).fold(0.0, |acc, k| acc * x + (k as f64 - 1.5));
            let f = ValueFunction::from_fn(g, poly);
            for k in 0..200 {
                let x = -2.0 + 5.0 * k as f64 / 199.0;
                assert_abs_diff_eq!(interp_eval(&f, x), poly(x), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn sine_on_fine_grid() {
        let g = grid(-8.0, 8.0, 1000, 7);
        let f = ValueFunction::from_fn(g, f64::sin);
        let worst = (0..20_000)
            .map(|k| -8.0 + 16.0 * k as f64 / 19_999.0)
            .map(|x| (interp_eval(&f, x) - x.sin()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-10, "max error {worst:e}");
    }

    #[test]
    fn boundary_modes_outside_grid() {
        let linear = |x: f64| 2.0 * x + 1.0;
        let clamp = grid(0.0, 1.0, 11, 3);
        let extrap = SpatialGrid { boundary: BoundaryMode::Extrapolate, ..clamp };
        let fc = ValueFunction::from_fn(clamp, linear);
        let fe = ValueFunction::from_fn(extrap, linear);
        assert_abs_diff_eq!(interp_eval(&fc, 1.5), 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(interp_eval(&fc, -0.5), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(interp_eval(&fe, 1.5), 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(interp_eval(&fe, -0.5), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn expectation_identities() {
        let g = grid(-8.0, 8.0, 801, 7);
        let r3 = gauss_hermite_rule(3).unwrap();
        let inc = convolve_increments(&r3, 2, 0.1, DEFAULT_MERGE_TOL).unwrap();
        let c = ValueFunction::constant(g, 2.5);
        let id = ValueFunction::from_fn(g, |x| x);
        let sq = ValueFunction::from_fn(g, |x| x * x);
        for x in [-1.3, 0.0, 0.77] {
            assert_abs_diff_eq!(conditional_expectation(&c, x, &inc), 2.5, epsilon = 1e-14);
            assert_abs_diff_eq!(weighted_conditional_expectation(&c, x, &inc), 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(conditional_expectation(&id, x, &inc), x, epsilon = 1e-13);
            assert_abs_diff_eq!(weighted_conditional_expectation(&id, x, &inc), 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(conditional_expectation(&sq, x, &inc), x * x + 0.2, epsilon = 1e-10);
            assert_abs_diff_eq!(weighted_conditional_expectation(&sq, x, &inc), 2.0 * x, epsilon = 1e-10);
        }
    }

    #[test]
    fn kernel_matches_direct_expectations() {
        let g = grid(-4.0, 4.0, 321, 7);
        let r4 = gauss_hermite_rule(4).unwrap();
        let y = ValueFunction::from_fn(g, |x| 1.0 / (1.0 + (-x).exp()));
        let f = ValueFunction::from_fn(g, |x| (0.5 * x).sin());
        for span in 1..=3 {
            let inc = convolve_increments(&r4, span, 0.05, DEFAULT_MERGE_TOL).unwrap();
            let kernel = TransitionKernel::new(g, &inc);
            for m in (0..g.n_points).step_by(7) {
                let x = g.node(m);
                let [cy, cf, wy, wf] = kernel.expectations_pair(m, &y.values, &f.values);
                assert_abs_diff_eq!(cy, conditional_expectation(&y, x, &inc), epsilon = 1e-12);
                assert_abs_diff_eq!(cf, conditional_expectation(&f, x, &inc), epsilon = 1e-12);
                assert_abs_diff_eq!(wy, weighted_conditional_expectation(&y, x, &inc), epsilon = 1e-11);
                assert_abs_diff_eq!(wf, weighted_conditional_expectation(&f, x, &inc), epsilon = 1e-11);
                let (c1, w1) = kernel.expectations(m, &y.values);
                assert_eq!((c1, w1), (cy, wy));
            }
        }
    }

    #[test]
    fn law_propagation_is_adjoint() {
        let g = grid(-6.0, 6.0, 241, 5);
        let r3 = gauss_hermite_rule(3).unwrap();
        let inc = convolve_increments(&r3, 1, 0.04, DEFAULT_MERGE_TOL).unwrap();
        let kernel = TransitionKernel::new(g, &inc);
        let phi = ValueFunction::from_fn(g, |x| (x - 0.3).powi(2));
        let laws = lattice_laws(&kernel, 0.0, 3);
        // <mu_1, phi> equals E[phi(x0 + D)].
        let lhs: f64 = laws[1].iter().zip(&phi.values).map(|(m, v)| m * v).sum();
        let rhs = conditional_expectation(&phi, 0.0, &inc);
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
        // Mass and variance after three steps.
        let mass: f64 = laws[3].iter().sum();
        let var: f64 = laws[3].iter().zip(g.nodes()).map(|(m, x)| m * x * x).sum();
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(var, 0.12, epsilon = 1e-10);
    }
}
