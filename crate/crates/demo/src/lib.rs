//! Interactive browser demo backing `www/index.html`.
//!
//! Three operations, each returning a JSON string so the page stays a thin
//! canvas renderer: draw a covariate-indexed heavy-tailed sample, fit one of
//! the three threshold rules to it, and fit the conditional GPD above that
//! threshold to compare γ̂(x) with the design curve γ(x) = exp(a + b·x).
//!
//! The plain functions compile and run natively (that is how they are
//! tested); the `wasm_bindgen` exports wrap them for the browser build.

use serde::Serialize;

use covpot::distributions::Family;
use covpot::mle::{fit_conditional_gpd, Link};
use covpot::simulation::{gamma_true, sample_dataset};
use covpot::thresholds::{calibrate_p_for_k, exceedances};
use covpot::{Basis, Dataset, Error, Method, Result};

const CURVE_POINTS: usize = 101;

#[derive(Serialize)]
struct SamplePoint {
    x: f64,
    y: f64,
}

#[derive(Serialize)]
struct ThresholdCurve {
    method: String,
    achieved_k: usize,
    /// Asymmetry level the calibration landed on; absent for the constant rule.
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    /// (x, u(x)) pairs on a regular grid over [0,1].
    curve: Vec<[f64; 2]>,
    /// Per-observation exceedance flags, aligned with the sample order.
    exceeded: Vec<bool>,
}

#[derive(Serialize)]
struct TailPoint {
    x: f64,
    gamma_hat: f64,
    gamma_true: f64,
}

#[derive(Serialize)]
struct TailCurve {
    converged: bool,
    loglik: f64,
    achieved_k: usize,
    points: Vec<TailPoint>,
}

fn make_sample(family: &str, gamma_a: f64, gamma_b: f64, n: usize, seed: u64) -> Result<Dataset> {
    let family = Family::parse(family)?;
    if !(2..=100_000).contains(&n) {
        return Err(Error::InvalidArgument(format!(
            "sample size must lie in [2, 100000], got {n}"
        )));
    }
    Ok(sample_dataset(family, (gamma_a, gamma_b), n, seed, 0))
}

fn grid() -> impl Iterator<Item = f64> {
    (0..CURVE_POINTS).map(|i| i as f64 / (CURVE_POINTS - 1) as f64)
}

/// JSON array of the sample's (x, y) points.
pub fn sample_points(
    family: &str,
    gamma_a: f64,
    gamma_b: f64,
    n: usize,
    seed: u64,
) -> Result<String> {
    let data = make_sample(family, gamma_a, gamma_b, n, seed)?;
    let pts: Vec<SamplePoint> = data
        .x()
        .iter()
        .zip(data.y())
        .map(|(&x, &y)| SamplePoint { x, y })
        .collect();
    Ok(serde_json::to_string(&pts)?)
}

/// Fit a threshold rule calibrated to k exceedances and return its curve
/// plus per-observation exceedance flags.
pub fn threshold_curve(
    family: &str,
    gamma_a: f64,
    gamma_b: f64,
    n: usize,
    seed: u64,
    method: &str,
    k: usize,
) -> Result<String> {
    let data = make_sample(family, gamma_a, gamma_b, n, seed)?;
    let method = Method::parse(method)?;
    let model = calibrate_p_for_k(&data, Basis::Linear, method, k)?;
    let curve = grid().map(|x| [x, model.threshold_at(x)]).collect();
    let exceeded = data
        .x()
        .iter()
        .zip(data.y())
        .map(|(&x, &y)| y > model.threshold_at(x))
        .collect();
    let out = ThresholdCurve {
        method: method.name().to_string(),
        achieved_k: model.achieved_k,
        p: model.p,
        curve,
        exceeded,
    };
    Ok(serde_json::to_string(&out)?)
}

/// Fit the conditional GPD above the calibrated threshold and return γ̂(x)
/// against the design curve γ(x).
pub fn tail_index_curve(
    family: &str,
    gamma_a: f64,
    gamma_b: f64,
    n: usize,
    seed: u64,
    method: &str,
    k: usize,
) -> Result<String> {
    let data = make_sample(family, gamma_a, gamma_b, n, seed)?;
    let method = Method::parse(method)?;
    let model = calibrate_p_for_k(&data, Basis::Linear, method, k)?;
    let exc = exceedances(&data, &model)?;
    let fit = fit_conditional_gpd(&exc, Basis::Linear, Link::Log, Link::Log)?;
    let points = grid()
        .map(|x| TailPoint {
            x,
            gamma_hat: fit.model.gamma_at(x),
            gamma_true: gamma_true((gamma_a, gamma_b), x),
        })
        .collect();
    let out = TailCurve {
        converged: fit.converged,
        loglik: fit.loglik,
        achieved_k: model.achieved_k,
        points,
    };
    Ok(serde_json::to_string(&out)?)
}

#[cfg(target_arch = "wasm32")]
mod wasm {
    use wasm_bindgen::prelude::*;

    fn lift(r: covpot::Result<String>) -> Result<String, JsError> {
        r.map_err(|e| JsError::new(&e.to_string()))
    }

    #[wasm_bindgen]
    pub fn sample_points_json(
        family: &str,
        gamma_a: f64,
        gamma_b: f64,
        n: usize,
        seed: u64,
    ) -> Result<String, JsError> {
        lift(super::sample_points(family, gamma_a, gamma_b, n, seed))
    }

    #[wasm_bindgen]
    pub fn threshold_curve_json(
        family: &str,
        gamma_a: f64,
        gamma_b: f64,
        n: usize,
        seed: u64,
        method: &str,
        k: usize,
    ) -> Result<String, JsError> {
        lift(super::threshold_curve(
            family, gamma_a, gamma_b, n, seed, method, k,
        ))
    }

    #[wasm_bindgen]
    pub fn tail_index_curve_json(
        family: &str,
        gamma_a: f64,
        gamma_b: f64,
        n: usize,
        seed: u64,
        method: &str,
        k: usize,
    ) -> Result<String, JsError> {
        lift(super::tail_index_curve(
            family, gamma_a, gamma_b, n, seed, method, k,
        ))
    }
}
