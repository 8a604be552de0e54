//! Coefficient sets of linear multi-step BSDE schemes.
//!
//! A scheme with `r` steps computes, backwards in time,
//!
//! ```text
//! Y_i = E_i[ sum_{j=1..r} a_j Y_{i+j} + h sum_{j=0..r} b_j f(Y_{i+j}, Z_{i+j}) ]
//! Z_i = E_i[ sum_{j=1..r} alpha_j H_{i,j} Y_{i+j} + h sum_{j=1..r} beta_j H_{i,j} f(Y_{i+j}, Z_{i+j}) ]
//! ```
//!
//! where `H_{i,j}` is a zero-mean weight built from the Brownian increment over
//! `j` steps. This module owns the coefficient tuple, the Adams integrals that
//! generate the standard families, and the algebraic checks (stability
//! condition, root condition, order conditions).

use nalgebra::{linalg::Schur, DMatrix};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

/// Upper bound on `|a_j| + |b_j| + |alpha_j| + |beta_j|` accepted for any scheme.
pub const COEFFICIENT_BOUND: f64 = 64.0;

/// Tolerance on `sum(a) = sum(alpha) = 1`.
pub const PRECONSISTENCY_TOL: f64 = 1e-12;

/// Residual threshold below which an order condition counts as satisfied.
pub const ORDER_TOL: f64 = 1e-12;

const ROOT_TOL: f64 = 1e-9;
// Roots closer than this are treated as one multiple root.
const ROOT_CLUSTER_TOL: f64 = 1e-5;

/// Largest vanishing-moment order handled by [`construct_weight_polynomial`].
pub const MAX_WEIGHT_ORDER: usize = 12;

/// Names accepted by [`builtin_scheme`].
pub const SCHEME_NAMES: &[&str] = &[
    "implicit_euler",
    "crank_nicolson",
    "nystrom",
    "milne",
    "amb",
    "abb_same_beta",
    "abb_short_beta",
    "heun_pc",
    "adams_pc",
    "unstable2",
];

/// How the coefficients are driven by the backward solver.
#[derive(Debug, Clone, PartialEq)]
pub enum SchemeKind {
    /// Plain multi-step recursion; an implicit `b_0` is resolved by Picard iteration.
    Multistep,
    /// Explicit predictor `Y^p = E[Y_{i+1} + h sum_j predictor_j f_{i+j}]` whose value
    /// replaces `Y_i` inside the `b_0` term of the corrector.
    PredictorCorrector { predictor: Vec<f64> },
}

/// The tuple `(r, a, b, alpha, beta)` of one linear multi-step scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeCoefficients {
    name: String,
    a: Vec<f64>,
    b: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    kind: SchemeKind,
}

impl SchemeCoefficients {
    /// Builds and validates a multi-step coefficient set.
    ///
    /// `a`, `alpha`, `beta` hold `r` entries (index `j = 1..r`), `b` holds `r + 1`
    /// entries (index `j = 0..r`).
    pub fn new(
        name: impl Into<String>,
        a: Vec<f64>,
        b: Vec<f64>,
        alpha: Vec<f64>,
        beta: Vec<f64>,
    ) -> Result<Self> {
        let s = SchemeCoefficients {
            name: name.into(),
            a,
            b,
            alpha,
            beta,
            kind: SchemeKind::Multistep,
        };
        s.validate()?;
        Ok(s)
    }

    /// Builds a predictor-corrector pair: `b` is the corrector, `predictor` the
    /// explicit weights (index `j = 1..r`) used to predict `Y_i`.
    pub fn predictor_corrector(
        name: impl Into<String>,
        a: Vec<f64>,
        b: Vec<f64>,
        alpha: Vec<f64>,
        beta: Vec<f64>,
        predictor: Vec<f64>,
    ) -> Result<Self> {
        let s = SchemeCoefficients {
            name: name.into(),
            a,
            b,
            alpha,
            beta,
            kind: SchemeKind::PredictorCorrector { predictor },
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        let r = self.a.len();
        if r == 0 {
            return invalid(format!("{}: a scheme needs at least one step", self.name));
        }
        if self.b.len() != r + 1 || self.alpha.len() != r || self.beta.len() != r {
            return invalid(format!(
                "{}: coefficient lengths (a={}, b={}, alpha={}, beta={}) do not match r={r}",
                self.name,
                self.a.len(),
                self.b.len(),
                self.alpha.len(),
                self.beta.len()
            ));
        }
        if let SchemeKind::PredictorCorrector { predictor } = &self.kind {
            if predictor.len() != r {
                return invalid(format!(
                    "{}: predictor has {} weights, expected {r}",
                    self.name,
                    predictor.len()
                ));
            }
        }
        let all = self
            .a
            .iter()
            .chain(&self.b)
            .chain(&self.alpha)
            .chain(&self.beta);
        if all.clone().any(|c| !c.is_finite()) {
            return invalid(format!("{}: non-finite coefficient", self.name));
        }
        let sum_a: f64 = self.a.iter().sum();
        let sum_alpha: f64 = self.alpha.iter().sum();
        if (sum_a - 1.0).abs() > PRECONSISTENCY_TOL || (sum_alpha - 1.0).abs() > PRECONSISTENCY_TOL
        {
            return invalid(format!(
                "{}: not pre-consistent (sum a = {sum_a}, sum alpha = {sum_alpha})",
                self.name
            ));
        }
        for j in 0..=r {
            let mut total = self.b[j].abs();
            if j >= 1 {
                total += self.a[j - 1].abs() + self.alpha[j - 1].abs() + self.beta[j - 1].abs();
            }
            if total > COEFFICIENT_BOUND {
                return invalid(format!(
                    "{}: coefficients at j={j} exceed the bound {COEFFICIENT_BOUND}",
                    self.name
                ));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of steps `r`.
    pub fn steps(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    /// `b_0..b_r`.
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn kind(&self) -> &SchemeKind {
        &self.kind
    }

    /// True iff the Y-update contains `f(Y_i, Z_i)`.
    pub fn is_implicit(&self) -> bool {
        self.b[0] != 0.0
    }

    /// Multi-line listing of every coefficient with 17 significant digits.
    pub fn dump(&self) -> String {
        let mut out = format!("scheme {} (r = {})\n", self.name, self.steps());
        let mut line = |label: &str, offset: usize, values: &[f64]| {
            for (k, v) in values.iter().enumerate() {
                out.push_str(&format!("{label}_{} = {}\n", k + offset, decimal17(*v)));
            }
        };
        line("a", 1, &self.a);
        line("b", 0, &self.b);
        line("alpha", 1, &self.alpha);
        line("beta", 1, &self.beta);
        if let SchemeKind::PredictorCorrector { predictor } = &self.kind {
            line("predictor", 1, predictor);
        }
        out
    }
}

/// Decimal rendering with 17 significant digits; parses back to the same double.
pub fn decimal17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn check_knots(knots: &[f64]) -> Result<()> {
    if knots.len() < 2 {
        return invalid("at least two knots are required");
    }
    if knots.iter().any(|t| !t.is_finite()) {
        return invalid("knots must be finite");
    }
    if knots.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("knots must be strictly increasing");
    }
    Ok(())
}

/// `(1/h) * int_{t_0}^{t_1} L_j(s) ds` for each Lagrange basis polynomial over
/// `basis_knots`, with `h = t_1 - t_0`. Computed by Gauss-Legendre in the
/// normalized variable `u = (s - t_0) / h`; used for non-uniform knots.
fn lagrange_step_integrals(t0: f64, t1: f64, basis_knots: &[f64]) -> Vec<f64> {
    let h = t1 - t0;
    let tau: Vec<f64> = basis_knots.iter().map(|t| (t - t0) / h).collect();
    let degree = tau.len() - 1;
    let (gx, gw) = gauss_legendre(degree.div_ceil(2) + 1);
    (0..tau.len())
        .map(|j| {
            let mut acc = 0.0;
            for (x, w) in gx.iter().zip(&gw) {
                let u = 0.5 * (x + 1.0);
                let mut l = 1.0;
                for (k, tk) in tau.iter().enumerate() {
                    if k != j {
                        l *= (u - tk) / (tau[j] - tk);
                    }
                }
                acc += 0.5 * w * l;
            }
            acc
        })
        .collect()
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Exact version of [`lagrange_step_integrals`] for integer nodes `first..=last`
/// on `[0, 1]`: each weight is a ratio of integers rounded once, so the result
/// is the nearest double. `None` if an intermediate would not fit exactly.
fn integer_node_integrals(first: i128, last: i128) -> Option<Vec<f64>> {
    let nodes: Vec<i128> = (first..=last).collect();
    let degree = nodes.len() - 1;
    let lcm = (1..=degree as i128 + 1).fold(1i128, |acc, d| acc / gcd(acc, d) * d);
    let exact = 1i128 << f64::MANTISSA_DIGITS;
    nodes
        .iter()
        .map(|&xl| {
            // prod_{k != l} (u - x_k), lowest degree first, and prod (x_l - x_k).
            let mut poly = vec![1i128];
            let mut denom = 1i128;
            for &xk in nodes.iter().filter(|&&xk| xk != xl) {
                let mut next = vec![0i128; poly.len() + 1];
                for (d, c) in poly.iter().enumerate() {
                    next[d + 1] = next[d + 1].checked_add(*c)?;
                    next[d] = next[d].checked_sub(c.checked_mul(xk)?)?;
                }
                poly = next;
                denom = denom.checked_mul(xl - xk)?;
            }
            let mut num = 0i128;
            for (d, c) in poly.iter().enumerate() {
                num = num.checked_add(c.checked_mul(lcm / (d as i128 + 1))?)?;
            }
            let mut den = denom.checked_mul(lcm)?;
            let g = gcd(num, den);
            let (mut num, den_abs) = (num / g, den.abs() / g);
            if den < 0 {
                num = -num;
            }
            den = den_abs;
            (num.abs() < exact && den < exact).then(|| num as f64 / den as f64)
        })
        .collect()
}

/// True when the knots are `t_0 + k h` exactly, so that the normalized nodes
/// are the integers `0..=r`.
fn is_uniform(knots: &[f64]) -> bool {
    let h = knots[1] - knots[0];
    knots
        .iter()
        .enumerate()
        .all(|(k, t)| (t - knots[0]) / h == k as f64)
}

/// Adams-Moulton weights `b_0..b_r` for the knots `t_i < ... < t_{i+r}`: the
/// integrals over the first interval of the Lagrange basis on all `r + 1` knots.
pub fn adams_moulton_coefficients(knots: &[f64]) -> Result<Vec<f64>> {
    check_knots(knots)?;
    let r = knots.len() as i128 - 1;
    if is_uniform(knots) {
        if let Some(w) = integer_node_integrals(0, r) {
            return Ok(w);
        }
    }
    Ok(lagrange_step_integrals(knots[0], knots[1], knots))
}

/// Adams-Bashforth weights `beta_1..beta_r` for the knots `t_i < ... < t_{i+r}`:
/// the basis only uses `t_{i+1}..t_{i+r}` and is integrated over `[t_i, t_{i+1}]`.
pub fn adams_bashforth_coefficients(knots: &[f64]) -> Result<Vec<f64>> {
    check_knots(knots)?;
    let r = knots.len() as i128 - 1;
    if is_uniform(knots) {
        if let Some(w) = integer_node_integrals(1, r) {
            return Ok(w);
        }
    }
    Ok(lagrange_step_integrals(knots[0], knots[1], &knots[1..]))
}

fn uniform_knots(r: usize) -> Vec<f64> {
    (0..=r).map(|k| k as f64).collect()
}

/// Non-negativity condition on `a`: `a_j >= 0`, `sum a = 1`, and
/// `a_j = 0 => alpha_j = 0`. Sufficient for mean-square stability.
pub fn check_hc(s: &SchemeCoefficients) -> bool {
    let sum: f64 = s.a.iter().sum();
    s.a.iter().all(|&a| a >= 0.0)
        && (sum - 1.0).abs() <= PRECONSISTENCY_TOL
        && s.a.iter().zip(&s.alpha).all(|(&a, &al)| a != 0.0 || al == 0.0)
}

/// Diagonal shifts tried in turn when the QR iteration stalls. Cyclic
/// companion matrices (`a = e_r`) are fixed points of the unshifted Francis
/// step; `C + sigma I` has the same eigenvectors and no such symmetry.
const COMPANION_SHIFTS: [f64; 4] = [0.0, 0.5, -0.375, 0.8125];

/// Roots of `y^{r+1} - sum_j a_j y^{r-j+1}` (companion-matrix eigenvalues).
pub fn characteristic_roots(s: &SchemeCoefficients) -> Result<Vec<Complex64>> {
    let r = s.steps();
    let dim = r + 1;
    let mut companion = DMatrix::<f64>::zeros(dim, dim);
    for (j, a) in s.a.iter().enumerate() {
        companion[(0, j)] = *a;
    }
    for k in 1..dim {
        companion[(k, k - 1)] = 1.0;
    }
    for sigma in COMPANION_SHIFTS {
        let shifted = &companion + DMatrix::<f64>::identity(dim, dim) * sigma;
        if let Some(schur) = Schur::try_new(shifted, 1e-15, 10_000) {
            return Ok(schur
                .complex_eigenvalues()
                .iter()
                .map(|z| z - sigma)
                .collect());
        }
    }
    Err(Error::Numerical(format!(
        "companion eigen-solver did not converge for scheme {} with a = {:?} (shifts {:?})",
        s.name, s.a, COMPANION_SHIFTS
    )))
}

/// Root condition: every root in the closed unit disc, and roots of
/// multiplicity greater than one strictly inside.
pub fn check_root_condition(s: &SchemeCoefficients) -> Result<bool> {
    let roots = characteristic_roots(s)?;
    for (k, root) in roots.iter().enumerate() {
        let modulus = root.norm();
        if modulus > 1.0 + ROOT_TOL {
            return Ok(false);
        }
        let repeated = roots
            .iter()
            .enumerate()
            .any(|(l, other)| l != k && (other - root).norm() < ROOT_CLUSTER_TOL);
        if repeated && modulus >= 1.0 - ROOT_TOL {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Residuals of the order conditions and the order they certify.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderReport {
    /// `(C^Y)_p` residuals for `p = 1..=m_max`.
    pub residuals_y: Vec<f64>,
    /// `(C^Z)_p` residuals for `p = 1..=m_max - 1`.
    pub residuals_z: Vec<f64>,
    pub classified_order: usize,
}

/// Evaluates
///
/// ```text
/// res_y[p] = sum_j a_j j^p - p sum_{j=0..r} b_j j^(p-1)      1 <= p <= m
/// res_z[p] = sum_j alpha_j j^p - p sum_{j=1..r} beta_j j^(p-1)   1 <= p <= m - 1
/// ```
///
/// with `0^0 = 1`, and classifies the largest `m' <= m` whose conditions all
/// hold to [`ORDER_TOL`]. Predictor-corrector pairs are classified on their
/// corrector coefficients.
pub fn order_condition_residuals(s: &SchemeCoefficients, m: usize) -> OrderReport {
    let pow = |j: usize, p: usize| -> f64 {
        if p == 0 {
            1.0
        } else {
            (j as f64).powi(p as i32)
        }
    };
    let residual_y = |p: usize| -> f64 {
        let lhs: f64 = s.a.iter().enumerate().map(|(k, a)| a * pow(k + 1, p)).sum();
        let rhs: f64 = s.b.iter().enumerate().map(|(j, b)| b * pow(j, p - 1)).sum();
        lhs - p as f64 * rhs
    };
    let residual_z = |p: usize| -> f64 {
        let lhs: f64 = s.alpha.iter().enumerate().map(|(k, a)| a * pow(k + 1, p)).sum();
        let rhs: f64 = s.beta.iter().enumerate().map(|(k, b)| b * pow(k + 1, p - 1)).sum();
        lhs - p as f64 * rhs
    };
    let residuals_y: Vec<f64> = (1..=m).map(residual_y).collect();
    let residuals_z: Vec<f64> = (1..m).map(residual_z).collect();

    let mut classified_order = 0;
    for order in 1..=m {
        let y_ok = residuals_y[..order].iter().all(|r| r.abs() < ORDER_TOL);
        let z_ok = residuals_z[..order - 1].iter().all(|r| r.abs() < ORDER_TOL);
        if y_ok && z_ok {
            classified_order = order;
        } else {
            break;
        }
    }
    OrderReport {
        residuals_y,
        residuals_z,
        classified_order,
    }
}

/// Convenience wrapper: classified order searched up to `r + 3`.
pub fn classify_order(s: &SchemeCoefficients) -> usize {
    order_condition_residuals(s, s.steps() + 3).classified_order
}

fn unit(r: usize) -> Vec<f64> {
    let mut v = vec![0.0; r];
    v[0] = 1.0;
    v
}

/// Default step count of each registered family.
pub fn default_steps(name: &str) -> Option<usize> {
    match name {
        "implicit_euler" | "crank_nicolson" | "heun_pc" => Some(1),
        "nystrom" | "unstable2" => Some(2),
        "milne" => Some(4),
        "amb" | "abb_same_beta" | "abb_short_beta" | "adams_pc" => Some(2),
        _ => None,
    }
}

/// Looks up a registered scheme. Fixed-step schemes accept `r = None` or their
/// own step count; Adams families accept `1 <= r <= 4`.
///
/// `unstable2` is the explicit two-step counterexample with `a = (2, -1)`; it
/// violates the root condition and is kept for stability experiments only.
pub fn builtin_scheme(name: &str, r: Option<usize>) -> Result<SchemeCoefficients> {
    let fixed = |expected: usize| -> Result<()> {
        match r {
            Some(given) if given != expected => invalid(format!(
                "scheme {name} has a fixed step count {expected}, got r = {given}"
            )),
            _ => Ok(()),
        }
    };
    let family_r = || -> Result<usize> {
        let r = r.unwrap_or(2);
        if (1..=4).contains(&r) {
            Ok(r)
        } else {
            invalid(format!("scheme {name} supports 1 <= r <= 4, got r = {r}"))
        }
    };
    match name {
        "implicit_euler" => {
            fixed(1)?;
            SchemeCoefficients::new(name, vec![1.0], vec![1.0, 0.0], vec![1.0], vec![0.0])
        }
        "crank_nicolson" => {
            fixed(1)?;
            SchemeCoefficients::new(name, vec![1.0], vec![0.5, 0.5], vec![1.0], vec![1.0])
        }
        "nystrom" => {
            fixed(2)?;
            SchemeCoefficients::new(
                name,
                vec![0.0, 1.0],
                vec![0.0, 2.0, 0.0],
                vec![0.0, 1.0],
                vec![0.0, 2.0],
            )
        }
        "milne" => {
            fixed(4)?;
            let (p, q) = (8.0 / 3.0, -4.0 / 3.0);
            SchemeCoefficients::new(
                name,
                vec![0.0, 0.0, 0.0, 1.0],
                vec![0.0, p, q, p, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
                vec![p, q, p, 0.0],
            )
        }
        "unstable2" => {
            fixed(2)?;
            SchemeCoefficients::new(
                name,
                vec![2.0, -1.0],
                vec![0.0, 1.0, -1.0],
                vec![1.0, 0.0],
                vec![1.0, 0.0],
            )
        }
        "amb" => {
            let r = family_r()?;
            let knots = uniform_knots(r);
            SchemeCoefficients::new(
                format!("amb{r}"),
                unit(r),
                adams_moulton_coefficients(&knots)?,
                unit(r),
                adams_bashforth_coefficients(&knots)?,
            )
        }
        "abb_same_beta" | "abb_short_beta" => {
            let r = family_r()?;
            let bashforth = adams_bashforth_coefficients(&uniform_knots(r))?;
            let mut b = vec![0.0];
            b.extend_from_slice(&bashforth);
            let beta = if name == "abb_same_beta" {
                bashforth
            } else {
                let mut beta = if r > 1 {
                    adams_bashforth_coefficients(&uniform_knots(r - 1))?
                } else {
                    Vec::new()
                };
                beta.push(0.0);
                beta
            };
            SchemeCoefficients::new(format!("{name}{r}"), unit(r), b, unit(r), beta)
        }
        "heun_pc" | "adams_pc" => {
            let r = if name == "heun_pc" {
                fixed(1)?;
                1
            } else {
                family_r()?
            };
            let knots = uniform_knots(r);
            let bashforth = adams_bashforth_coefficients(&knots)?;
            let label = if name == "heun_pc" {
                name.to_string()
            } else {
                format!("adams_pc{r}")
            };
            SchemeCoefficients::predictor_corrector(
                label,
                unit(r),
                adams_moulton_coefficients(&knots)?,
                unit(r),
                bashforth.clone(),
                bashforth,
            )
        }
        other => invalid(format!(
            "unknown scheme {other:?}; expected one of {}",
            SCHEME_NAMES.join(", ")
        )),
    }
}

/// Every registered scheme that is meant to be convergent (all Adams members
/// for `r = 1..4`, excluding the `unstable2` counterexample).
pub fn registered_schemes() -> Vec<SchemeCoefficients> {
    let mut out = Vec::new();
    for name in ["implicit_euler", "crank_nicolson", "nystrom", "milne", "heun_pc"] {
        out.push(builtin_scheme(name, None).expect("fixed registry entry"));
    }
    for name in ["amb", "abb_same_beta", "abb_short_beta", "adams_pc"] {
        for r in 1..=4 {
            out.push(builtin_scheme(name, Some(r)).expect("adams registry entry"));
        }
    }
    out
}

/// Polynomial `psi` on `[0, 1]` with `int psi = 1` and vanishing moments
/// `int psi(u) u^k du = 0` for `1 <= k <= m`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPolynomial {
    pub m: usize,
    /// Monomial coefficients, lowest degree first.
    pub coeffs: Vec<f64>,
}

impl WeightPolynomial {
    pub fn eval(&self, u: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }

    /// `int_0^1 psi(u) u^k du`.
    pub fn moment(&self, k: usize) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c / (i + k + 1) as f64)
            .sum()
    }
}

fn binomial(n: u64, k: u64) -> i128 {
    if k > n {
        return 0;
    }
    let mut acc: i128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as i128 / (i + 1) as i128;
    }
    acc
}

/// The unique degree-`m` member of the weight class with `m` vanishing moments.
///
/// The moment system is the Gram system of the monomials on `[0, 1]`; its
/// solution is the reproducing kernel at `u = 0` of the degree-`m` polynomials,
/// `psi = sum_k (2k+1) P_k(0) P_k(u)` in shifted Legendre polynomials. Its
/// monomial coefficients are integers, accumulated exactly before conversion.
pub fn construct_weight_polynomial(m: usize) -> Result<WeightPolynomial> {
    if m > MAX_WEIGHT_ORDER {
        return Err(Error::UnsupportedOrder {
            order: m,
            max: MAX_WEIGHT_ORDER,
        });
    }
    let coeffs = (0..=m as u64)
        .map(|i| {
            let total: i128 = (i..=m as u64)
                .map(|k| (2 * k + 1) as i128 * binomial(k, i) * binomial(k + i, i))
                .sum();
            let signed = if i % 2 == 0 { total } else { -total };
            signed as f64
        })
        .collect();
    Ok(WeightPolynomial { m, coeffs })
}
