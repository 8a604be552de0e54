//! Command-line front end.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use bsde_lms::problems::problem_by_name;
use bsde_lms::schemes::{classify_order, decimal17};
use bsde_lms::{builtin_scheme, check_hc, check_root_condition, order_condition_residuals};

use crate::report::{write_csv, ConvergenceReport};
use crate::study::{
    convergence_sweep, moment_order_study, stability_study, truncation_sweep, StabilityReport,
    SweepConfig, TruncationReport, DEFAULT_EPS, DEFAULT_N_LIST, DEFAULT_SEED,
    DEFAULT_STABILITY_N_LIST, DEFAULT_TRUNCATION_N_LIST,
};
use crate::{BenchError, Result};

#[derive(Debug, Parser)]
#[command(name = "bsde-bench", version, about = "Convergence and stability studies for multi-step BSDE schemes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Root-node errors and fitted orders over a list of step counts.
    Converge(Common),
    /// One convergence sweep per moment order K.
    MomentStudy(Common),
    /// Amplification of per-step perturbations.
    Stability(StabilityArgs),
    /// Order conditions, (Hc) and root condition of one scheme.
    VerifyScheme(SchemeArgs),
    /// Local truncation errors at one step over a list of step counts.
    Truncation(TruncationArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Debug, Clone, Args)]
struct SchemeArgs {
    #[arg(long)]
    scheme: String,
    /// Step count for the Adams families.
    #[arg(long)]
    r: Option<usize>,
}

#[derive(Debug, Clone, Args)]
struct Common {
    #[command(flatten)]
    scheme: SchemeArgs,
    #[arg(long, default_value = "logistic")]
    problem: String,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Moment order(s) of the increment rule; odd.
    #[arg(long = "K", value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[arg(long = "T", default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    x0: f64,
    #[arg(long, default_value_t = 2001)]
    grid_points: usize,
    #[arg(long, default_value_t = 8.0)]
    grid_width_sigmas: f64,
    #[arg(long, default_value_t = 7)]
    interp_degree: usize,
    #[arg(long)]
    picard_tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Debug, Clone, Args)]
struct StabilityArgs {
    #[command(flatten)]
    common: Common,
    /// Perturbation scale.
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
}

#[derive(Debug, Clone, Args)]
struct TruncationArgs {
    #[command(flatten)]
    common: Common,
    /// Time step whose local error is measured.
    #[arg(long, default_value_t = 0)]
    step: usize,
}

impl Common {
    fn sweep_config(&self, single_k: bool) -> Result<SweepConfig> {
        let quad_points = match &self.k {
            None => None,
            Some(ks) if single_k => {
                let [k] = ks.as_slice() else {
                    return Err(BenchError::Input("--K takes a single value here".into()));
                };
                Some(quad_points_for_k(*k)?)
            }
            Some(_) => None,
        };
        let mut cfg = SweepConfig {
            x0: self.x0,
            grid_points: self.grid_points,
            grid_width_sigmas: self.grid_width_sigmas,
            interp_degree: self.interp_degree,
            quad_points,
            ..SweepConfig::default()
        };
        if let Some(tol) = self.picard_tol {
            cfg.picard_tol = tol;
        }
        Ok(cfg)
    }

    fn n_list(&self, default: &[usize]) -> Vec<usize> {
        self.n.clone().unwrap_or_else(|| default.to_vec())
    }
}

fn quad_points_for_k(k: usize) -> Result<usize> {
    if k % 2 == 0 {
        return Err(BenchError::Input(format!("moment order K = {k} must be odd")));
    }
    Ok(k.div_ceil(2))
}

fn open_out(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// `m.csv` with `K = 3` becomes `m_K3.csv`.
fn path_with_k(path: &Path, k: usize) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_K{k}.{}", ext.to_string_lossy()),
        None => format!("{stem}_K{k}"),
    };
    path.with_file_name(name)
}

fn emit_convergence(
    report: &ConvergenceReport,
    out_path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    write!(out, "{}", report.summary())?;
    match out_path {
        Some(path) => {
            let mut f = open_out(path)?;
            write_csv(report, &mut f)?;
            f.flush()?;
        }
        None => write_csv(report, &mut *out)?,
    }
    Ok(())
}

fn stability_csv(report: &StabilityReport, mut w: impl Write) -> Result<()> {
    writeln!(w, "n,eps,lhs,rhs,ratio")?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.n,
            decimal17(r.eps),
            decimal17(r.lhs),
            decimal17(r.rhs),
            decimal17(r.ratio)
        )?;
    }
    Ok(())
}

fn truncation_csv(report: &TruncationReport, mut w: impl Write) -> Result<()> {
    writeln!(w, "n,h,eta_y,eta_z")?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.n,
            decimal17(r.h),
            decimal17(r.eta_y),
            decimal17(r.eta_z)
        )?;
    }
    Ok(())
}

fn write_table(
    out_path: Option<&Path>,
    out: &mut dyn Write,
    table: impl Fn(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    match out_path {
        Some(path) => {
            let mut f = open_out(path)?;
            table(&mut f)?;
            f.flush()?;
            Ok(())
        }
        None => table(out),
    }
}

/// Runs one command; returns the process exit code.
fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::VerifyScheme(args) => {
            let s = builtin_scheme(&args.scheme, args.r)?;
            let order = classify_order(&s);
            let hc = check_hc(&s);
            let root = check_root_condition(&s)?;
            let report = order_condition_residuals(&s, s.steps() + 3);
            let pass = |b: bool| if b { "pass" } else { "fail" };
            writeln!(out, "classified order: {order}")?;
            writeln!(out, "Hc: {}", pass(hc))?;
            writeln!(out, "root condition: {}", pass(root))?;
            for (p, res) in report.residuals_y.iter().enumerate() {
                writeln!(out, "C^Y_{} residual = {}", p + 1, decimal17(*res))?;
            }
            for (p, res) in report.residuals_z.iter().enumerate() {
                writeln!(out, "C^Z_{} residual = {}", p + 1, decimal17(*res))?;
            }
            write!(out, "{}", s.dump())?;
            Ok(0)
        }
        Command::Converge(c) => {
            let scheme = builtin_scheme(&c.scheme.scheme, c.scheme.r)?;
            let problem = problem_by_name(&c.problem, c.horizon)?;
            let report =
                convergence_sweep(&problem, &scheme, &c.n_list(DEFAULT_N_LIST), &c.sweep_config(true)?)?;
            emit_convergence(&report, c.out.as_deref(), out)?;
            Ok(if report.failures() > 0 { 1 } else { 0 })
        }
        Command::MomentStudy(c) => {
            let scheme = builtin_scheme(&c.scheme.scheme, c.scheme.r)?;
            let problem = problem_by_name(&c.problem, c.horizon)?;
            let ks = match &c.k {
                Some(ks) => ks.clone(),
                None => {
                    let m = classify_order(&scheme);
                    (1..=m).map(|p| 2 * p + 1).collect()
                }
            };
            let reports = moment_order_study(
                &problem,
                &scheme,
                &ks,
                &c.n_list(DEFAULT_N_LIST),
                &c.sweep_config(false)?,
            )?;
            let mut failures = 0;
            for (k, report) in &reports {
                writeln!(out, "K = {k}")?;
                let path = c.out.as_deref().map(|p| path_with_k(p, *k));
                emit_convergence(report, path.as_deref(), out)?;
                failures += report.failures();
            }
            Ok(if failures > 0 { 1 } else { 0 })
        }
        Command::Stability(args) => {
            let c = &args.common;
            let scheme = builtin_scheme(&c.scheme.scheme, c.scheme.r)?;
            let problem = problem_by_name(&c.problem, c.horizon)?;
            let report = stability_study(
                &problem,
                &scheme,
                &c.n_list(DEFAULT_STABILITY_N_LIST),
                args.eps,
                c.seed.unwrap_or(DEFAULT_SEED),
                &c.sweep_config(true)?,
            )?;
            write!(out, "{}", report.summary())?;
            write_table(c.out.as_deref(), out, |w| stability_csv(&report, w))?;
            Ok(0)
        }
        Command::Truncation(args) => {
            let c = &args.common;
            let scheme = builtin_scheme(&c.scheme.scheme, c.scheme.r)?;
            let problem = problem_by_name(&c.problem, c.horizon)?;
            let report = truncation_sweep(
                &problem,
                &scheme,
                &c.n_list(DEFAULT_TRUNCATION_N_LIST),
                args.step,
                &c.sweep_config(true)?,
            )?;
            writeln!(out, "{} (order {}), step {}", report.scheme, report.order, report.step)?;
            for r in &report.rows {
                writeln!(out, "{:>6} {:>12.5e} {:>12.5e} {:>12.5e}", r.n, r.h, r.eta_y, r.eta_z)?;
            }
            let slope = |v: Option<f64>| v.map_or("unavailable".to_string(), |v| format!("{v:.3}"));
            writeln!(
                out,
                "fitted slope: eta {}, eta_y {}, eta_z {}",
                slope(report.fitted_slope),
                slope(report.fitted_slope_y),
                slope(report.fitted_slope_z)
            )?;
            write_table(c.out.as_deref(), out, |w| truncation_csv(&report, w))?;
            Ok(0)
        }
    }
}

/// Parses `args` (program name first) and runs the command. Usage errors
/// exit with 2, runtime errors with 1.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(code) => code,
        Err(e @ BenchError::Input(_)) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

pub fn cli_main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
