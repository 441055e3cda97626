//! `covpot` — covariate-dependent threshold selection for tail analysis.
//!
//! Three subcommands: `simulate` runs the Monte Carlo method comparison and
//! writes a metrics CSV; `fit` fits a threshold plus conditional GPD to a CSV
//! dataset and writes a JSON report; `threshold` fits the threshold alone and
//! writes a per-observation exceedance table.
//!
//! Exit codes: 0 success, 1 runtime/convergence failure, 2 usage/validation
//! error. Relative `--out` paths are joined onto `$COVPOT_OUT_DIR` when set.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use covpot::distributions::Family;
use covpot::io;
use covpot::mle::{fit_conditional_gpd_with, Link};
use covpot::simulation::{
    default_k_grid, run_study_mode, sort_rows, ExecMode, MetricRow, SimConfig,
    DEFAULT_GAMMA_COEFFS, DEFAULT_X_EVAL, METHODS,
};
use covpot::thresholds::{
    calibrate_p_for_k, constant_threshold, exceedances, fit_regression, Method, ThresholdModel,
};
use covpot::{Basis, Dataset, Error};

#[derive(Parser)]
#[command(
    name = "covpot",
    version,
    about = "Covariate-dependent threshold selection for peaks-over-threshold tail analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo study comparing threshold rules; write a metrics CSV
    Simulate(SimulateArgs),
    /// Fit a threshold and conditional GPD to CSV data; write a JSON report
    Fit(FitArgs),
    /// Fit a threshold only; write per-observation x,u,exceeded CSV
    Threshold(ThresholdArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON config file mirroring the study-config field names
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scale preset: desk (200 replications)
    #[arg(long)]
    preset: Option<String>,
    /// burr | pareto | frechet | all
    #[arg(long)]
    family: Option<String>,
    /// Sample size per replication
    #[arg(long)]
    n: Option<usize>,
    /// Replication count
    #[arg(long)]
    r: Option<usize>,
    /// Master seed for the replication streams
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated exceedance counts (default: 40 log-spaced in [20, 0.8n])
    #[arg(long)]
    k_grid: Option<String>,
    /// Comma-separated evaluation covariates in (0,1)
    #[arg(long)]
    x_eval: Option<String>,
    /// Intercept a of the tail-index function exp(a + b·x)
    #[arg(long)]
    gamma_a: Option<f64>,
    /// Slope b of the tail-index function exp(a + b·x)
    #[arg(long)]
    gamma_b: Option<f64>,
    /// GPD regression basis: intercept | linear | poly2 | poly3
    #[arg(long)]
    basis: Option<String>,
    /// Separate basis for the threshold curves (default: same as --basis)
    #[arg(long)]
    threshold_basis: Option<String>,
    /// Link for the shape function: log | identity
    #[arg(long)]
    shape_link: Option<String>,
    /// Link for the scale function: log | identity
    #[arg(long)]
    scale_link: Option<String>,
    /// Replication schedule: serial | parallel
    #[arg(long)]
    exec: Option<String>,
    /// Output metrics CSV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV with covariate and response columns
    #[arg(long)]
    input: PathBuf,
    /// Covariate column name
    #[arg(long, default_value = "x")]
    x_col: String,
    /// Response column name
    #[arg(long, default_value = "y")]
    y_col: String,
    /// constant | quantile | expectile
    #[arg(long)]
    method: String,
    /// Target exceedance count (calibrates p for regression rules)
    #[arg(long)]
    k: Option<usize>,
    /// Explicit asymmetry level in (0,1) instead of k
    #[arg(long)]
    p: Option<f64>,
    /// Threshold and shape basis: intercept | linear | poly2 | poly3
    #[arg(long, default_value = "linear")]
    basis: String,
    /// Separate basis for the GPD scale function (default: same as --basis)
    #[arg(long)]
    scale_basis: Option<String>,
    /// Link for the shape function: log | identity
    #[arg(long, default_value = "log")]
    shape_link: String,
    /// Link for the scale function: log | identity
    #[arg(long, default_value = "log")]
    scale_link: String,
    /// Comma-separated covariates where the fit is evaluated
    #[arg(long, default_value = "0.10,0.40,0.70,0.90")]
    x_query: String,
    /// Output JSON report path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ThresholdArgs {
    /// Input CSV with covariate and response columns
    #[arg(long)]
    input: PathBuf,
    /// Covariate column name
    #[arg(long, default_value = "x")]
    x_col: String,
    /// Response column name
    #[arg(long, default_value = "y")]
    y_col: String,
    /// constant | quantile | expectile
    #[arg(long)]
    method: String,
    /// Target exceedance count (calibrates p for regression rules)
    #[arg(long)]
    k: Option<usize>,
    /// Explicit asymmetry level in (0,1) instead of k
    #[arg(long)]
    p: Option<f64>,
    /// Threshold basis: intercept | linear | poly2 | poly3
    #[arg(long, default_value = "linear")]
    basis: String,
    /// Output CSV path (columns x,u,exceeded in raw covariate units)
    #[arg(long)]
    out: PathBuf,
}

/// Error carrying its process exit code. Validation problems exit 2,
/// runtime failures exit 1.
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> CliError {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> CliError {
        CliError {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> CliError {
        let code = match e {
            Error::InvalidArgument(_) => 2,
            _ => 1,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Threshold(args) => cmd_threshold(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

/// Partial study config read from `--config` (JSON, field names as in the
/// library's study config; `seed` accepted for `master_seed`).
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    family: Option<String>,
    n: Option<usize>,
    #[serde(alias = "r")]
    replications: Option<usize>,
    k_grid: Option<Vec<usize>>,
    x_eval: Option<Vec<f64>>,
    gamma_coeffs: Option<(f64, f64)>,
    #[serde(alias = "seed")]
    master_seed: Option<u64>,
    basis: Option<String>,
    threshold_basis: Option<String>,
    shape_link: Option<String>,
    scale_link: Option<String>,
    exec: Option<String>,
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let file: FileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::usage(format!("bad config {}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };

    // Precedence: built-in defaults < config file < preset < flags.
    let mut replications = file.replications.unwrap_or(1000);
    match args.preset.as_deref() {
        Some("desk") => replications = 200,
        Some(other) => {
            return Err(CliError::usage(format!(
                "unknown preset '{other}' (expected: desk)"
            )))
        }
        None => {}
    }
    if let Some(r) = args.r {
        replications = r;
    }

    let family_word = args
        .family
        .or(file.family)
        .unwrap_or_else(|| "all".to_string());
    let families: Vec<Family> = if family_word.eq_ignore_ascii_case("all") {
        vec![Family::Burr, Family::Pareto, Family::Frechet]
    } else {
        vec![Family::parse(&family_word)?]
    };

    let n = args.n.or(file.n).unwrap_or(1000);
    let k_grid = match args.k_grid {
        Some(ref s) => parse_usize_list(s)?,
        None => match file.k_grid {
            Some(g) => g,
            None => default_k_grid(n)?,
        },
    };
    let x_eval = match args.x_eval {
        Some(ref s) => parse_f64_list(s)?,
        None => file.x_eval.unwrap_or_else(|| DEFAULT_X_EVAL.to_vec()),
    };
    let gamma_coeffs = {
        let base = file.gamma_coeffs.unwrap_or(DEFAULT_GAMMA_COEFFS);
        (
            args.gamma_a.unwrap_or(base.0),
            args.gamma_b.unwrap_or(base.1),
        )
    };
    let basis = Basis::parse(&args.basis.or(file.basis).unwrap_or_else(|| "linear".into()))?;
    let threshold_basis = match args.threshold_basis.or(file.threshold_basis) {
        Some(s) => Some(Basis::parse(&s)?),
        None => None,
    };
    let shape_link = Link::parse(
        &args
            .shape_link
            .or(file.shape_link)
            .unwrap_or_else(|| "log".into()),
    )?;
    let scale_link = Link::parse(
        &args
            .scale_link
            .or(file.scale_link)
            .unwrap_or_else(|| "log".into()),
    )?;
    let exec = parse_exec(&args.exec.or(file.exec).unwrap_or_else(|| "parallel".into()))?;
    let master_seed = args.seed.or(file.master_seed).unwrap_or(42);

    let mut rows: Vec<MetricRow> = Vec::new();
    for &family in &families {
        let config = SimConfig {
            family,
            n,
            replications,
            k_grid: k_grid.clone(),
            x_eval: x_eval.clone(),
            gamma_coeffs,
            master_seed,
            basis,
            threshold_basis,
            shape_link,
            scale_link,
        };
        config.validate()?;
        rows.extend(run_study_mode(&config, exec)?);
    }
    sort_rows(&mut rows);

    let out = resolve_out(args.out);
    io::write_metrics(&rows, &out)?;

    for &family in &families {
        for &x in &x_eval {
            for method in METHODS {
                let best = rows
                    .iter()
                    .filter(|r| r.family == family && r.method == method && (r.x - x).abs() < 1e-12)
                    .filter(|r| !r.mad.is_nan())
                    .min_by(|a, b| a.mad.partial_cmp(&b.mad).unwrap());
                match best {
                    Some(r) => println!(
                        "family={} x={:.2} method={}: min MAD {:.4e} at k={}",
                        family.name(),
                        x,
                        method.name(),
                        r.mad,
                        r.k
                    ),
                    None => println!(
                        "family={} x={:.2} method={}: every replication failed",
                        family.name(),
                        x,
                        method.name()
                    ),
                }
            }
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<(), CliError> {
    let method = Method::parse(&args.method)?;
    let basis = Basis::parse(&args.basis)?;
    let scale_basis = match &args.scale_basis {
        Some(s) => Basis::parse(s)?,
        None => basis,
    };
    let shape_link = Link::parse(&args.shape_link)?;
    let scale_link = Link::parse(&args.scale_link)?;
    let x_query = parse_f64_list(&args.x_query)?;

    let data = io::read_csv(&args.input, &args.x_col, &args.y_col)?;
    let threshold = build_threshold(&data, method, basis, args.k, args.p)?;
    let exc = exceedances(&data, &threshold)?;
    let fit = fit_conditional_gpd_with(&exc, basis, scale_basis, shape_link, scale_link)?;

    let out = resolve_out(args.out);
    io::write_fit_report(&fit, &threshold, &x_query, &out)?;
    println!(
        "method={} achieved_k={} loglik={:.6} converged={}",
        method.name(),
        threshold.achieved_k,
        fit.loglik,
        fit.converged
    );
    if fit.converged {
        for &x in &x_query {
            println!(
                "x={:.4}: u={:.6} gamma={:.6} sigma={:.6}",
                x,
                threshold.threshold_at(x),
                fit.model.gamma_at(x),
                fit.model.sigma_at(x)
            );
        }
    }
    println!("wrote {}", out.display());
    if !fit.converged {
        return Err(CliError::runtime(format!(
            "fit did not converge (gradient norm {:.3e}); report written with converged=false",
            fit.grad_norm
        )));
    }
    Ok(())
}

fn cmd_threshold(args: ThresholdArgs) -> Result<(), CliError> {
    let method = Method::parse(&args.method)?;
    let basis = Basis::parse(&args.basis)?;
    let data = io::read_csv(&args.input, &args.x_col, &args.y_col)?;
    let threshold = build_threshold(&data, method, basis, args.k, args.p)?;

    let out = resolve_out(args.out);
    write_threshold_table(&data, &threshold, &out).map_err(Error::Io)?;
    println!(
        "method={} achieved_k={} of n={}",
        method.name(),
        threshold.achieved_k,
        data.n()
    );
    println!("wrote {}", out.display());
    Ok(())
}

/// Threshold from either a target exceedance count or an explicit level.
fn build_threshold(
    data: &Dataset,
    method: Method,
    basis: Basis,
    k: Option<usize>,
    p: Option<f64>,
) -> Result<ThresholdModel, CliError> {
    match (k, p) {
        (Some(_), Some(_)) => Err(CliError::usage(
            "--k and --p are mutually exclusive".to_string(),
        )),
        (None, None) => Err(CliError::usage("one of --k or --p is required".to_string())),
        (Some(k), None) => Ok(calibrate_p_for_k(data, basis, method, k)?),
        (None, Some(p)) => {
            if !(p > 0.0 && p < 1.0) {
                return Err(CliError::usage(format!(
                    "asymmetry level must lie in (0,1), got {p}"
                )));
            }
            if method == Method::Constant {
                // The constant rule has no p; use the matching order statistic.
                let n = data.n() as f64;
                let k = (((1.0 - p) * n).round() as usize).clamp(1, data.n() - 1);
                Ok(constant_threshold(data, k)?)
            } else {
                Ok(fit_regression(data, basis, method, p)?)
            }
        }
    }
}

fn write_threshold_table(
    data: &Dataset,
    threshold: &ThresholdModel,
    path: &Path,
) -> std::io::Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(b"x,u,exceeded\n")?;
    for (&x, &y) in data.x().iter().zip(data.y()) {
        let u = threshold.threshold_at(x);
        writeln!(w, "{},{},{}", data.unscale(x), u, u8::from(y > u))?;
    }
    w.flush()
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::usage(format!("bad real '{t}' in list '{s}'")))
        })
        .collect()
}

fn parse_usize_list(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| CliError::usage(format!("bad integer '{t}' in list '{s}'")))
        })
        .collect()
}

fn parse_exec(s: &str) -> Result<ExecMode, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "serial" => Ok(ExecMode::Serial),
        "parallel" => Ok(ExecMode::Parallel),
        _ => Err(CliError::usage(format!(
            "unrecognized exec mode '{s}' (expected serial or parallel)"
        ))),
    }
}

fn resolve_out(path: PathBuf) -> PathBuf {
    if path.is_relative() {
        if let Ok(dir) = std::env::var("COVPOT_OUT_DIR") {
            if !dir.is_empty() {
                return PathBuf::from(dir).join(path);
            }
        }
    }
    path
}
