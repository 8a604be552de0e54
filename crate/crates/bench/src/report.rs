//! Report types, order fitting and the CSV format.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use bsde_lms::schemes::decimal17;

use crate::{BenchError, Result};

/// Errors at or below this level are treated as numerical noise and excluded
/// from slope fits.
pub const FIT_NOISE_FLOOR: f64 = 1e-12;

pub const CSV_HEADER: &str = "n,h,err_y,err_z,ratio_y,ratio_z";

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h: f64,
    /// `|Y_0 - y_0(x0)|`; `None` when the solve failed.
    pub err_y: Option<f64>,
    pub err_z: Option<f64>,
    /// Previous row's error over this row's error.
    pub ratio_y: Option<f64>,
    pub ratio_z: Option<f64>,
    pub failure: Option<String>,
}

impl ConvergenceRow {
    pub fn is_failure(&self) -> bool {
        self.failure.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub scheme: String,
    pub problem: String,
    pub quad_points: usize,
    pub rows: Vec<ConvergenceRow>,
    pub fitted_order_y: Option<f64>,
    pub fitted_order_z: Option<f64>,
}

impl ConvergenceReport {
    /// Builds a report from `(n, h, result)` triples sorted by `n`, filling in
    /// ratios and fitted slopes.
    pub fn from_results(
        scheme: &str,
        problem: &str,
        quad_points: usize,
        results: Vec<(usize, f64, std::result::Result<(f64, f64), String>)>,
    ) -> Self {
        let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(results.len());
        for (n, h, res) in results {
            let (err_y, err_z, failure) = match res {
                Ok((ey, ez)) => (Some(ey), Some(ez), None),
                Err(msg) => (None, None, Some(msg)),
            };
            let prev = rows.last();
            let ratio = |prev: Option<f64>, cur: Option<f64>| match (prev, cur) {
                // 0/0 has no meaningful ratio; x/0 reports inf.
                (Some(p), Some(c)) if !(p / c).is_nan() => Some(p / c),
                _ => None,
            };
            let ratio_y = ratio(prev.and_then(|r| r.err_y), err_y);
            let ratio_z = ratio(prev.and_then(|r| r.err_z), err_z);
            rows.push(ConvergenceRow {
                n,
                h,
                err_y,
                err_z,
                ratio_y,
                ratio_z,
                failure,
            });
        }
        let fit = |pick: fn(&ConvergenceRow) -> Option<f64>| {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter_map(|r| pick(r).map(|e| (r.h, e)))
                .collect();
            fit_order(&pts).ok()
        };
        let fitted_order_y = fit(|r| r.err_y);
        let fitted_order_z = fit(|r| r.err_z);
        ConvergenceReport {
            scheme: scheme.to_string(),
            problem: problem.to_string(),
            quad_points,
            rows,
            fitted_order_y,
            fitted_order_z,
        }
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.is_failure()).count()
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} on {} (q = {}, K = {})",
            self.scheme,
            self.problem,
            self.quad_points,
            2 * self.quad_points - 1
        );
        let _ = writeln!(
            out,
            "{:>6} {:>12} {:>12} {:>12} {:>8} {:>8}",
            "n", "h", "err_y", "err_z", "ratio_y", "ratio_z"
        );
        let num = |v: Option<f64>, prec: usize| match v {
            Some(v) => format!("{v:.prec$e}"),
            None => "-".to_string(),
        };
        let ratio = |v: Option<f64>| match v {
            Some(v) => format!("{v:.3}"),
            None => "-".to_string(),
        };
        for r in &self.rows {
            let _ = write!(
                out,
                "{:>6} {:>12} {:>12} {:>12} {:>8} {:>8}",
                r.n,
                format!("{:.5e}", r.h),
                num(r.err_y, 5),
                num(r.err_z, 5),
                ratio(r.ratio_y),
                ratio(r.ratio_z)
            );
            if let Some(msg) = &r.failure {
                let _ = write!(out, "  FAILED: {msg}");
            }
            out.push('\n');
        }
        let order = |v: Option<f64>| v.map_or("unavailable".to_string(), |v| format!("{v:.3}"));
        let _ = writeln!(
            out,
            "fitted order: y {}, z {}",
            order(self.fitted_order_y),
            order(self.fitted_order_z)
        );
        out
    }
}

/// Ordinary least-squares slope of `log(err)` against `log(h)` over the
/// points `(h, err)` with `err` above [`FIT_NOISE_FLOOR`].
pub fn fit_order(points: &[(f64, f64)]) -> Result<f64> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(_, e)| *e > FIT_NOISE_FLOOR)
        .collect();
    log_log_slope(&usable)
}

/// Least-squares slope of `log(y)` against `log(x)` over points with both
/// coordinates positive and finite.
pub fn log_log_slope(points: &[(f64, f64)]) -> Result<f64> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && x.is_finite() && *y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if usable.len() < 2 {
        return Err(BenchError::FitUnavailable(usable.len()));
    }
    let k = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / k;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(BenchError::FitUnavailable(1));
    }
    Ok(sxy / sxx)
}

fn field(v: Option<f64>) -> String {
    v.map(decimal17).unwrap_or_default()
}

/// Writes the rows as CSV. Failed rows keep `n` and `h` and leave the error
/// columns empty.
pub fn write_csv(report: &ConvergenceReport, mut w: impl Write) -> Result<()> {
    let mut out = String::with_capacity(64 * (report.rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.n,
            decimal17(r.h),
            field(r.err_y),
            field(r.err_z),
            field(r.ratio_y),
            field(r.ratio_z)
        );
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub fn to_csv_string(report: &ConvergenceReport) -> String {
    let mut buf = Vec::new();
    write_csv(report, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

/// Reads rows written by [`write_csv`]. Rows with empty error columns come
/// back as failures with a generic message.
pub fn read_csv(r: impl BufRead) -> Result<Vec<ConvergenceRow>> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header != CSV_HEADER {
        return Err(BenchError::Parse(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(BenchError::Parse(format!("line {}: {} columns", k + 2, cols.len())));
        }
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|_| BenchError::Parse(format!("line {}: bad number {s:?}", k + 2)))
            }
        };
        let n = cols[0]
            .parse()
            .map_err(|_| BenchError::Parse(format!("line {}: bad n {:?}", k + 2, cols[0])))?;
        let h = opt(cols[1])?
            .ok_or_else(|| BenchError::Parse(format!("line {}: missing h", k + 2)))?;
        let err_y = opt(cols[2])?;
        let err_z = opt(cols[3])?;
        let failure = (err_y.is_none() || err_z.is_none()).then(|| "failed".to_string());
        rows.push(ConvergenceRow {
            n,
            h,
            err_y,
            err_z,
            ratio_y: opt(cols[4])?,
            ratio_z: opt(cols[5])?,
            failure,
        });
    }
    Ok(rows)
}
