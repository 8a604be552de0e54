//! Linear multi-step time discretizations of decoupled BSDEs driven by a
//! one-dimensional Brownian motion.
//!
//! The crate is split along the numerical pipeline:
//!
//! * [`schemes`] generates and verifies coefficient sets `(a, b, alpha, beta)`:
//!   Adams-Moulton / Adams-Bashforth integrals, the named-scheme registry,
//!   the non-negativity condition on `a`, the root condition and the order
//!   conditions.
//! * [`lattice`] builds moment-matched discrete Brownian increments and the
//!   grid-based conditional-expectation operators used by the fully discrete
//!   schemes.
//! * [`solver`] runs the backward recursion (generic multi-step and
//!   predictor-corrector), perturbation experiments, local truncation
//!   measurements and a brute-force tree oracle.
//! * [`problems`] holds test problems with closed-form solutions.

pub mod error;
pub mod lattice;
pub mod problems;
pub mod schemes;
pub mod solver;

pub use error::{Error, Result};
pub use lattice::{
    conditional_expectation, convolve_increments, gauss_hermite_rule, gaussian_moment,
    interp_eval, weighted_conditional_expectation, BoundaryMode, IncrementRule, QuadratureRule,
    SpatialGrid, TransitionKernel, ValueFunction,
};
pub use problems::{logistic_problem, martingale_problem, pde_residual, BsdeProblem, ProblemSpec};
pub use schemes::{
    adams_bashforth_coefficients, adams_moulton_coefficients, builtin_scheme, check_hc,
    check_root_condition, construct_weight_polynomial, order_condition_residuals, OrderReport,
    SchemeCoefficients, SchemeKind, WeightPolynomial,
};
pub use solver::{
    exact_tree_oracle, initialize_terminal_layers, local_truncation_error,
    multistep_backward_step, perturbed_solve, picard_solve, predictor_corrector_step, solve,
    LayerWindow, PicardOutcome, SolverConfig, Trajectory,
};
