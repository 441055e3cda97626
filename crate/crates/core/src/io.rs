//! CSV ingest of (covariate, response) tables, metrics-CSV output of study
//! results, and JSON fit reports.
//!
//! All files use `.` decimals, comma delimiters, UTF-8, and LF line endings;
//! reals are written with 17 significant digits so write/read roundtrips are
//! exact. Row order in outputs is a pure function of row content.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::design::Basis;
use crate::distributions::Family;
use crate::error::{Error, Result};
use crate::mle::{FitResult, Link, LinkedGpdModel};
use crate::simulation::{sort_rows, MetricRow};
use crate::thresholds::{Method, ThresholdModel};

/// Read a covariate/response table. The named covariate column is min-max
/// scaled to [0,1] (recorded in the returned dataset's scaling). The first
/// unusable cell aborts the read with its 1-based file row (the header is
/// row 1).
pub fn read_csv(path: impl AsRef<Path>, x_column: &str, y_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(csv_error)?;
    let headers = reader.headers().map_err(csv_error)?.clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::Data(format!(
                "column '{name}' not found in {} (available: {})",
                path.display(),
                headers.iter().collect::<Vec<_>>().join(", ")
            ))
        })
    };
    let xi = col(x_column)?;
    let yi = col(y_column)?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let row = i + 2;
        let cell = |idx: usize, name: &str| -> Result<f64> {
            let raw = record.get(idx).unwrap_or("");
            raw.trim().parse::<f64>().map_err(|_| {
                Error::Data(format!(
                    "non-numeric value '{raw}' in column '{name}' at row {row}"
                ))
            })
        };
        x.push(cell(xi, x_column)?);
        y.push(cell(yi, y_column)?);
    }
    if x.is_empty() {
        return Err(Error::Data(format!(
            "no usable data rows in {}",
            path.display()
        )));
    }
    Dataset::from_raw(&x, &y)
}

/// Write a dataset as a two-column `x,y` CSV in raw covariate units, so that
/// [`read_csv`] reconstructs it.
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(b"x,y\n")?;
    for (&x, &y) in data.x().iter().zip(data.y()) {
        writeln!(w, "{},{}", fmt_real(data.unscale(x)), fmt_real(y))?;
    }
    w.flush()?;
    Ok(())
}

pub const METRICS_HEADER: &str = "family,n,x,gamma_true,method,k,mad,bias,failures";

/// Write study metrics sorted by (family, n, x, method, k); reals carry 17
/// significant digits and undefined cells are the literal `NaN`.
pub fn write_metrics(rows: &[MetricRow], path: impl AsRef<Path>) -> Result<()> {
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{METRICS_HEADER}")?;
    for r in &sorted {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.family.name(),
            r.n,
            fmt_real(r.x),
            fmt_real(r.gamma_true),
            r.method.name(),
            r.k,
            fmt_real(r.mad),
            fmt_real(r.bias),
            r.failures
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Parse a metrics CSV produced by [`write_metrics`].
pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricRow>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(csv_error)?;
    let headers = reader.headers().map_err(csv_error)?;
    let joined = headers.iter().collect::<Vec<_>>().join(",");
    if joined != METRICS_HEADER {
        return Err(Error::Data(format!(
            "unexpected metrics header '{joined}' in {}",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let row = i + 2;
        let field = |idx: usize| -> Result<&str> {
            record
                .get(idx)
                .ok_or_else(|| Error::Data(format!("short record at row {row}")))
        };
        let real = |idx: usize| -> Result<f64> {
            let raw = field(idx)?;
            raw.parse::<f64>()
                .map_err(|_| Error::Data(format!("bad real '{raw}' at row {row}")))
        };
        let int = |idx: usize| -> Result<usize> {
            let raw = field(idx)?;
            raw.parse::<usize>()
                .map_err(|_| Error::Data(format!("bad integer '{raw}' at row {row}")))
        };
        rows.push(MetricRow {
            family: Family::parse(field(0)?)?,
            n: int(1)?,
            x: real(2)?,
            gamma_true: real(3)?,
            method: Method::parse(field(4)?)?,
            k: int(5)?,
            mad: real(6)?,
            bias: real(7)?,
            failures: int(8)?,
        });
    }
    Ok(rows)
}

/// Threshold half of a fit report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub method: Method,
    pub achieved_k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    pub basis: Basis,
    pub theta: Vec<f64>,
}

/// Conditional-GPD half of a fit report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub converged: bool,
    pub loglik: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub positivity_ok: bool,
    pub shape_basis: Basis,
    pub scale_basis: Basis,
    pub shape_link: Link,
    pub scale_link: Link,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
}

/// Threshold and tail-index values at one covariate point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub x: f64,
    pub threshold: f64,
    pub gamma: f64,
    pub sigma: f64,
}

/// Machine-readable record of a threshold + conditional GPD fit. The
/// `evaluations` block is present only for converged fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub threshold: ThresholdReport,
    pub fit: FitSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluations: Option<Vec<PointEstimate>>,
}

impl FitReport {
    pub fn new(fit: &FitResult, threshold: &ThresholdModel, x_query: &[f64]) -> FitReport {
        let evaluations = fit.converged.then(|| {
            x_query
                .iter()
                .map(|&x| PointEstimate {
                    x,
                    threshold: threshold.threshold_at(x),
                    gamma: fit.model.gamma_at(x),
                    sigma: fit.model.sigma_at(x),
                })
                .collect()
        });
        FitReport {
            threshold: ThresholdReport {
                method: threshold.method,
                achieved_k: threshold.achieved_k,
                p: threshold.p,
                basis: threshold.basis,
                theta: threshold.theta.clone(),
            },
            fit: FitSummary {
                converged: fit.converged,
                loglik: fit.loglik,
                iterations: fit.iterations,
                grad_norm: fit.grad_norm,
                positivity_ok: fit.positivity_ok,
                shape_basis: fit.model.shape_basis,
                scale_basis: fit.model.scale_basis,
                shape_link: fit.model.shape_link,
                scale_link: fit.model.scale_link,
                beta1: fit.model.beta1.clone(),
                beta2: fit.model.beta2.clone(),
            },
            evaluations,
        }
    }

    /// Reconstruct the fitted regression model for re-evaluation.
    pub fn model(&self) -> Result<LinkedGpdModel> {
        LinkedGpdModel::new(
            self.fit.shape_basis,
            self.fit.scale_basis,
            self.fit.shape_link,
            self.fit.scale_link,
            self.fit.beta1.clone(),
            self.fit.beta2.clone(),
        )
    }

    /// Reconstruct the threshold model for re-evaluation.
    pub fn threshold_model(&self) -> ThresholdModel {
        ThresholdModel {
            method: self.threshold.method,
            p: self.threshold.p,
            basis: self.threshold.basis,
            theta: self.threshold.theta.clone(),
            achieved_k: self.threshold.achieved_k,
        }
    }
}

pub fn write_fit_report(
    fit: &FitResult,
    threshold: &ThresholdModel,
    x_query: &[f64],
    path: impl AsRef<Path>,
) -> Result<()> {
    let report = FitReport::new(fit, threshold, x_query);
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &report)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_fit_report(path: impl AsRef<Path>) -> Result<FitReport> {
    Ok(serde_json::from_reader(File::open(path)?)?)
}

/// 17 significant digits (exact f64 roundtrip); NaN spelled literally.
fn fmt_real(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Data(format!("malformed CSV: {other:?}")),
    }
}
