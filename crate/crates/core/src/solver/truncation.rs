//! Local truncation errors: one scheme step started from exact layers.

use crate::error::{invalid, Error, Result};
use crate::lattice::{lattice_laws, TransitionKernel};
use crate::problems::BsdeProblem;
use crate::schemes::SchemeCoefficients;

use super::{increment_rules, resolve_node, NodeSums, PicardSettings, SolverConfig};

/// `(eta_Y, eta_Z)` at step `i` of an `n`-step run: with layers `i+1..i+r`
/// set to the exact solution, one scheme step gives `(Y~_i, Z~_i)` and
///
/// `eta_Y = h^-2 E[(u(t_i, W) - Y~_i)^2]`, `eta_Z = E[(u_x(t_i, W) - Z~_i)^2]`,
///
/// with `W` distributed by the lattice law at `t_i` started from `cfg.x0`.
/// Grid, quadrature and Picard settings come from `cfg`; its `n` and scheme
/// are ignored in favour of the arguments.
pub fn local_truncation_error(
    p: &BsdeProblem,
    s: &SchemeCoefficients,
    n: usize,
    i: usize,
    cfg: &SolverConfig,
) -> Result<(f64, f64)> {
    let r = s.steps();
    if n == 0 || i + r > n {
        return invalid(format!("step {i} has no {r} following layers in an {n}-step run"));
    }
    let (Some(u), Some(ux)) = (&p.exact_u, &p.exact_ux) else {
        return Err(Error::InitializationUnavailable);
    };
    let grid = cfg.grid;
    let h = p.horizon / n as f64;
    let time = |k: usize| p.horizon * k as f64 / n as f64;
    let kernels: Vec<TransitionKernel> = increment_rules(cfg.quad_points, r, h, cfg.merge_tol)?
        .iter()
        .map(|rule| TransitionKernel::new(grid, rule))
        .collect();
    let nodes = grid.nodes();
    let ys: Vec<Vec<f64>> = (1..=r)
        .map(|j| nodes.iter().map(|&x| u(time(i + j), x)).collect())
        .collect();
    let fs: Vec<Vec<f64>> = (1..=r)
        .map(|j| {
            let t = time(i + j);
            nodes.iter().map(|&x| p.f(u(t, x), ux(t, x))).collect()
        })
        .collect();
    let law = lattice_laws(&kernels[0], cfg.x0, i).pop().expect("law at step i");
    let picard = PicardSettings {
        tol: cfg.picard_tol,
        max_iter: cfg.picard_max_iter,
    };
    let ti = time(i);
    let (mut eta_y, mut eta_z) = (0.0, 0.0);
    for (m, &mass) in law.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let mut sums = NodeSums::default();
        for (j, kernel) in kernels.iter().enumerate() {
            sums.add_span(s, j + 1, kernel.expectations_pair(m, &ys[j], &fs[j]));
        }
        let x = nodes[m];
        let (y, z) = resolve_node(s, p, h, &sums, (0.0, 0.0), picard).map_err(|iterations| {
            Error::StepFailure {
                step: i,
                x,
                iterations,
            }
        })?;
        eta_y += mass * (u(ti, x) - y).powi(2);
        eta_z += mass * (ux(ti, x) - z).powi(2);
    }
    Ok((eta_y / (h * h), eta_z))
}
