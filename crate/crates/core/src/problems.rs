//! Test problems with closed-form solutions `Y_t = u(t, W_t)`, `Z_t = u_x(t, W_t)`.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Result};

pub type Driver = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type Terminal = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SpaceTimeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Decoupled BSDE `Y_t = g(W_T) + int_t^T f(Y_s, Z_s) ds - int_t^T Z_s dW_s`.
#[derive(Clone)]
pub struct BsdeProblem {
    pub horizon: f64,
    pub driver: Driver,
    pub terminal: Terminal,
    pub exact_u: Option<SpaceTimeFn>,
    pub exact_ux: Option<SpaceTimeFn>,
    /// Lipschitz constant of the driver on the range the solver visits.
    pub lipschitz_bound: f64,
}

impl BsdeProblem {
    pub fn f(&self, y: f64, z: f64) -> f64 {
        (self.driver)(y, z)
    }

    pub fn g(&self, x: f64) -> f64 {
        (self.terminal)(x)
    }

    /// `(u(t, x), u_x(t, x))` when the closed form is known.
    pub fn exact(&self, t: f64, x: f64) -> Option<(f64, f64)> {
        match (&self.exact_u, &self.exact_ux) {
            (Some(u), Some(ux)) => Some((u(t, x), ux(t, x))),
            _ => None,
        }
    }
}

impl fmt::Debug for BsdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BsdeProblem")
            .field("horizon", &self.horizon)
            .field("has_exact", &self.exact_u.is_some())
            .field("lipschitz_bound", &self.lipschitz_bound)
            .finish_non_exhaustive()
    }
}

/// A named, registered problem.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub problem: BsdeProblem,
    pub description: String,
}

pub const PROBLEM_NAMES: &[&str] = &["logistic", "martingale"];

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// `f(y, z) = -z (3/4 - y)`, `g(x) = 1 / (1 + exp(-x - T/4))`, with
/// `u(t, x) = 1 / (1 + exp(-x - t/4))` and `u_x = u (1 - u)`.
pub fn logistic_problem(horizon: f64) -> Result<ProblemSpec> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return invalid(format!("horizon must be positive, got {horizon}"));
    }
    let u: SpaceTimeFn = Arc::new(|t, x| logistic(x + t / 4.0));
    let ux: SpaceTimeFn = Arc::new(|t, x| {
        let e = (-x - t / 4.0).exp();
        e / ((1.0 + e) * (1.0 + e))
    });
    Ok(ProblemSpec {
        name: "logistic".into(),
        description: "driver -z(3/4 - y), logistic terminal; u = 1/(1+exp(-x-t/4))".into(),
        problem: BsdeProblem {
            horizon,
            driver: Arc::new(|y, z| -z * (0.75 - y)),
            terminal: Arc::new(move |x| logistic(x + horizon / 4.0)),
            exact_u: Some(u),
            exact_ux: Some(ux),
            // |d_y f| = |z| <= 1/4 and |d_z f| = |3/4 - y| <= 3/4 on the solution range, padded.
            lipschitz_bound: 1.0,
        },
    })
}

/// Zero driver with linear terminal `g(x) = slope x`: `Y_t = slope W_t`, `Z_t = slope`.
pub fn martingale_problem(horizon: f64, slope: f64) -> Result<ProblemSpec> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return invalid(format!("horizon must be positive, got {horizon}"));
    }
    if !slope.is_finite() {
        return invalid("slope must be finite");
    }
    Ok(ProblemSpec {
        name: "martingale".into(),
        description: format!("zero driver, terminal {slope} x"),
        problem: BsdeProblem {
            horizon,
            driver: Arc::new(|_, _| 0.0),
            terminal: Arc::new(move |x| slope * x),
            exact_u: Some(Arc::new(move |_, x| slope * x)),
            exact_ux: Some(Arc::new(move |_, _| slope)),
            lipschitz_bound: 0.0,
        },
    })
}

/// Looks a problem up by its CLI name (`martingale` uses slope 1).
pub fn problem_by_name(name: &str, horizon: f64) -> Result<ProblemSpec> {
    match name {
        "logistic" => logistic_problem(horizon),
        "martingale" => martingale_problem(horizon, 1.0),
        other => invalid(format!(
            "unknown problem {other:?}; expected one of {}",
            PROBLEM_NAMES.join(", ")
        )),
    }
}

/// Central-difference value of `u_t + u_xx / 2 + f(u, u_x)` at `(t, x)`, which
/// vanishes for the value function of the problem.
pub fn pde_residual(p: &ProblemSpec, t: f64, x: f64, fd_step: f64) -> Result<f64> {
    let Some(u) = &p.problem.exact_u else {
        return invalid(format!("problem {} has no closed-form solution", p.name));
    };
    if !(fd_step > 0.0) {
        return invalid(format!("finite-difference step must be positive, got {fd_step}"));
    }
    let k = fd_step;
    let u0 = u(t, x);
    let u_t = (u(t + k, x) - u(t - k, x)) / (2.0 * k);
    let u_x = (u(t, x + k) - u(t, x - k)) / (2.0 * k);
    let u_xx = (u(t, x + k) - 2.0 * u0 + u(t, x - k)) / (k * k);
    Ok(u_t + 0.5 * u_xx + p.problem.f(u0, u_x))
}

/// Rejects a problem whose closed form is inconsistent with its driver and
/// terminal condition on a 10 x 10 sample of `[0, T] x [-2, 2]`.
pub fn check_consistency(p: &ProblemSpec) -> Result<()> {
    let problem = &p.problem;
    let (Some(u), Some(_)) = (&problem.exact_u, &problem.exact_ux) else {
        return Ok(());
    };
    let horizon = problem.horizon;
    for k in 0..100 {
        let x = -4.0 + 8.0 * k as f64 / 99.0;
        let gap = (u(horizon, x) - problem.g(x)).abs();
        if gap > 1e-12 {
            return invalid(format!("{}: u(T, {x}) differs from g by {gap:e}", p.name));
        }
    }
    for a in 0..10 {
        for b in 0..10 {
            let t = 0.05 * horizon + 0.9 * horizon * a as f64 / 9.0;
            let x = -2.0 + 4.0 * b as f64 / 9.0;
            let res = pde_residual(p, t, x, 1e-4)?;
            if res.abs() >= 1e-6 {
                return invalid(format!("{}: PDE residual {res:e} at (t, x) = ({t}, {x})", p.name));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn logistic_closed_form_at_origin() {
        let p = logistic_problem(1.0).unwrap();
        let (y0, z0) = p.problem.exact(0.0, 0.0).unwrap();
        assert_eq!(y0, 0.5);
        assert_eq!(z0, 0.25);
        assert_eq!(p.problem.f(0.5, 0.25), -1.0 / 16.0);
    }

    #[test]
    fn logistic_residual_is_small() {
        let p = logistic_problem(1.0).unwrap();
        assert!(pde_residual(&p, 0.3, 0.7, 1e-4).unwrap().abs() < 1e-6);
        check_consistency(&p).unwrap();
    }

    #[test]
    fn residual_shrinks_quadratically() {
        // A wrong driver sign leaves an O(1) residual; the correct one leaves
        // only the O(k^2) finite-difference error.
        let p = logistic_problem(1.0).unwrap();
        let coarse = pde_residual(&p, 0.4, -0.3, 1e-2).unwrap().abs();
        let fine = pde_residual(&p, 0.4, -0.3, 5e-3).unwrap().abs();
        assert!(coarse > 0.0);
        let ratio = coarse / fine;
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn martingale_problem_is_exact() {
        let p = martingale_problem(2.0, 1.5).unwrap();
        assert_eq!(p.problem.exact(0.7, 2.0), Some((3.0, 1.5)));
        assert_eq!(p.problem.g(2.0), 3.0);
        assert_abs_diff_eq!(pde_residual(&p, 0.3, 1.1, 1e-3).unwrap(), 0.0, epsilon = 1e-12);
        check_consistency(&p).unwrap();
    }

    #[test]
    fn logistic_bounds() {
        let p = logistic_problem(1.0).unwrap();
        for a in 0..20 {
            for b in 0..20 {
                let t = a as f64 / 19.0;
                let x = -10.0 + 20.0 * b as f64 / 19.0;
                let (u, ux) = p.problem.exact(t, x).unwrap();
                assert!(u > 0.0 && u < 1.0);
                assert!(ux > 0.0 && ux <= 0.25);
            }
        }
    }

    #[test]
    fn bad_arguments() {
        assert!(logistic_problem(0.0).is_err());
        assert!(martingale_problem(-1.0, 1.0).is_err());
        assert!(problem_by_name("heat", 1.0).is_err());
        let p = logistic_problem(1.0).unwrap();
        assert!(pde_residual(&p, 0.1, 0.1, 0.0).is_err());
    }
}
