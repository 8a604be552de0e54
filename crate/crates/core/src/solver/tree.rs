//! Brute-force recursion on the full increment tree.
//!
//! Level `l` of the tree holds the `q^l` paths of `l` one-step Hermite
//! increments from `x0`. Conditional expectations over span `j` are exact sums
//! over the `q^j` descendants, so no spatial interpolation is involved. The
//! node algebra is shared with the grid solver.

use crate::error::{invalid, Error, Result};
use crate::lattice::gauss_hermite_rule;
use crate::problems::BsdeProblem;
use crate::schemes::SchemeCoefficients;

use super::{resolve_node, NodeSums, PicardSettings};

/// Largest admissible leaf count `q^n`.
pub const MAX_TREE_LEAVES: f64 = 1e7;

/// Descendant paths of span `j`: probability weights and summed increments.
struct SpanPaths {
    weights: Vec<f64>,
    increments: Vec<f64>,
}

fn span_paths(nodes: &[f64], weights: &[f64], j: usize) -> SpanPaths {
    let mut paths = SpanPaths {
        weights: vec![1.0],
        increments: vec![0.0],
    };
    for _ in 0..j {
        let mut w = Vec::with_capacity(paths.weights.len() * nodes.len());
        let mut d = Vec::with_capacity(w.capacity());
        for (pw, pd) in paths.weights.iter().zip(&paths.increments) {
            for (nw, nd) in weights.iter().zip(nodes) {
                w.push(pw * nw);
                d.push(pd + nd);
            }
        }
        paths = SpanPaths {
            weights: w,
            increments: d,
        };
    }
    paths
}

/// `(Y_0, Z_0)` of the scheme with expectations taken over the exact
/// `q`-point increment tree of depth `n`, started at `x0`. Refuses trees with
/// more than [`MAX_TREE_LEAVES`] leaves.
pub fn exact_tree_oracle(
    p: &BsdeProblem,
    s: &SchemeCoefficients,
    n: usize,
    q: usize,
    x0: f64,
) -> Result<(f64, f64)> {
    let r = s.steps();
    if n < r + 1 {
        return invalid(format!("n = {n} is too small for a {r}-step scheme"));
    }
    let leaves = (q as f64).powi(n as i32);
    if leaves > MAX_TREE_LEAVES {
        return Err(Error::SizeLimit(format!(
            "tree with q = {q}, n = {n} has {leaves:e} leaves (limit {MAX_TREE_LEAVES:e})"
        )));
    }
    let (Some(u), Some(ux)) = (&p.exact_u, &p.exact_ux) else {
        return Err(Error::InitializationUnavailable);
    };
    let rule = gauss_hermite_rule(q)?;
    let h = p.horizon / n as f64;
    let sqrt_h = h.sqrt();
    let atoms: Vec<f64> = rule.nodes.iter().map(|&xi| sqrt_h * xi).collect();
    let paths: Vec<SpanPaths> = (1..=r).map(|j| span_paths(&atoms, &rule.weights, j)).collect();
    let picard = PicardSettings::default();

    // levels[k] holds (y, f) at tree level k for the r levels below the current one.
    let mut levels: Vec<Option<(Vec<f64>, Vec<f64>)>> = vec![None; n + 1];
    for j in 0..r {
        let level = n - j;
        let t = if j == 0 {
            p.horizon
        } else {
            p.horizon * level as f64 / n as f64
        };
        let size = q.pow(level as u32);
        let mut y = Vec::with_capacity(size);
        let mut f = Vec::with_capacity(size);
        for k in 0..size {
            let x = position(x0, &atoms, k, level);
            let (yv, zv) = (u(t, x), ux(t, x));
            y.push(yv);
            f.push(p.f(yv, zv));
        }
        levels[level] = Some((y, f));
    }

    let mut root = (f64::NAN, f64::NAN);
    for level in (0..=n - r).rev() {
        let size = q.pow(level as u32);
        let mut y = Vec::with_capacity(size);
        let mut f = Vec::with_capacity(size);
        let mut z0 = f64::NAN;
        for k in 0..size {
            let mut sums = NodeSums::default();
            for (j, span) in paths.iter().enumerate() {
                let span_len = j + 1;
                let (ys, fs) = levels[level + span_len].as_ref().expect("layer kept");
                let first = k * span.weights.len();
                let duration = span_len as f64 * h;
                let mut e = [0.0; 4];
                for (c, (w, d)) in span.weights.iter().zip(&span.increments).enumerate() {
                    let (yv, fv) = (ys[first + c], fs[first + c]);
                    let hw = w * d / duration;
                    e[0] += w * yv;
                    e[1] += w * fv;
                    e[2] += hw * yv;
                    e[3] += hw * fv;
                }
                sums.add_span(s, span_len, e);
            }
            let (yv, zv) = resolve_node(s, p, h, &sums, (0.0, 0.0), picard).map_err(|iterations| {
                Error::StepFailure {
                    step: level,
                    x: position(x0, &atoms, k, level),
                    iterations,
                }
            })?;
            y.push(yv);
            f.push(p.f(yv, zv));
            z0 = zv;
        }
        if level == 0 {
            root = (y[0], z0);
        }
        levels[level] = Some((y, f));
        levels[level + r] = None;
    }
    Ok(root)
}

/// State of node `k` at `level`: the base-`q` digits of `k` select the atoms,
/// most significant digit first.
fn position(x0: f64, atoms: &[f64], mut k: usize, level: usize) -> f64 {
    let q = atoms.len();
    let mut digits = vec![0usize; level];
    for d in digits.iter_mut().rev() {
        *d = k % q;
        k /= q;
    }
    digits.iter().fold(x0, |x, &d| x + atoms[d])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{logistic_problem, martingale_problem};
    use crate::schemes::builtin_scheme;

    #[test]
    fn martingale_is_reproduced() {
        let p = martingale_problem(1.0, 2.0).unwrap();
        for name in ["crank_nicolson", "nystrom", "implicit_euler"] {
            let s = builtin_scheme(name, None).unwrap();
            let (y, z) = exact_tree_oracle(&p.problem, &s, 5, 2, 0.5).unwrap();
            assert!((y - 1.0).abs() < 1e-13, "{name}: {y}");
            assert!((z - 2.0).abs() < 1e-12, "{name}: {z}");
        }
    }

    #[test]
    fn size_limit() {
        let p = logistic_problem(1.0).unwrap();
        let s = builtin_scheme("crank_nicolson", None).unwrap();
        assert!(matches!(
            exact_tree_oracle(&p.problem, &s, 20, 3, 0.0),
            Err(Error::SizeLimit(_))
        ));
    }

    #[test]
    fn positions_follow_digits() {
        let atoms = [-1.0, 0.0, 1.0];
        // k = 5 = (0, 1, 2) in base 3.
        assert_eq!(position(0.0, &atoms, 5, 3), 0.0 + -1.0 + 0.0 + 1.0);
        assert_eq!(position(0.5, &atoms, 8, 2), 2.5);
        assert_eq!(position(0.5, &atoms, 0, 0), 0.5);
    }

    #[test]
    fn logistic_tree_is_close_to_closed_form() {
        let p = logistic_problem(1.0).unwrap();
        let s = builtin_scheme("crank_nicolson", None).unwrap();
        let (y, z) = exact_tree_oracle(&p.problem, &s, 6, 3, 0.0).unwrap();
        assert!((y - 0.5).abs() < 1e-3, "{y}");
        assert!((z - 0.25).abs() < 1e-2, "{z}");
    }
}
