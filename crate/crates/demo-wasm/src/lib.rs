//! Browser demo: covariance explorer, coupled-pair scatter and margin curves.
//!
//! Everything crosses the boundary as JSON strings or plain `f64` slices so the
//! page needs no bundler.

use kolmogorov_bounds::coupling::{coupled_start, sample_coupled_pair, CouplingSpec};
use kolmogorov_bounds::estimator::McConfig;
use kolmogorov_bounds::inequalities::{check_be, check_poincare, CheckReport, Variant};
use kolmogorov_bounds::matfun::{covariance_paper, covariance_sde, min_eigenvalue};
use kolmogorov_bounds::model::{validate_structure, ModelStructure, RawModel};
use kolmogorov_bounds::testfns::{make_testfn, TestFnSpec};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn parse_model(json: &str) -> Result<ModelStructure, JsError> {
    let raw: RawModel = serde_json::from_str(json).map_err(js_err)?;
    validate_structure(&raw).map_err(js_err)
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn point(model: &ModelStructure, x: &[f64]) -> Result<DVector<f64>, JsError> {
    if x.len() != model.n() {
        return Err(JsError::new(&format!("point needs {} coordinates, got {}", model.n(), x.len())));
    }
    Ok(DVector::from_column_slice(x))
}

#[derive(Serialize)]
struct CovarianceView {
    n: usize,
    c: Vec<Vec<f64>>,
    c_plus: Vec<Vec<f64>>,
    min_eigenvalue: f64,
    log_det: f64,
}

/// `C(t)`, `C_+(t)` and the smallest eigenvalue of `C(t)` for a model given as JSON.
#[wasm_bindgen]
pub fn covariance(model_json: &str, t: f64) -> Result<String, JsError> {
    let m = parse_model(model_json)?;
    let c = covariance_paper(&m).eval(t);
    let cp = covariance_sde(&m).eval(t);
    let log_det = c.clone().cholesky().map(|l| 2.0 * l.l().diagonal().map(f64::ln).sum()).unwrap_or(f64::NEG_INFINITY);
    serde_json::to_string(&CovarianceView {
        n: m.n(),
        min_eigenvalue: min_eigenvalue(&c),
        c: rows(&c),
        c_plus: rows(&cp),
        log_det,
    })
    .map_err(js_err)
}

/// Synchronously coupled endpoints projected on coordinates `(i, j)`.
///
/// Returns `[px0, py0, sx0, sy0, px1, …]`: primary then shadow for each draw.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn coupled_scatter(
    model_json: &str,
    x: &[f64],
    alpha: &[f64],
    v: &[f64],
    eps: f64,
    t: f64,
    n: usize,
    seed: u32,
    i: usize,
    j: usize,
) -> Result<Vec<f64>, JsError> {
    let m = parse_model(model_json)?;
    let x = point(&m, x)?;
    if i >= m.n() || j >= m.n() {
        return Err(JsError::new("projection index out of range"));
    }
    let cs = CouplingSpec::new(alpha.to_vec(), DVector::from_column_slice(v), eps).map_err(js_err)?;
    let pair = coupled_start(&x, &cs, &m).map_err(js_err)?;
    let batch = sample_coupled_pair(&m, &pair, t, n, seed as u64, n.max(1)).map_err(js_err)?;
    let mut out = Vec::with_capacity(4 * n);
    for k in 0..n {
        let p = batch.primary.row(k);
        let s = batch.shadow_row(k);
        out.extend_from_slice(&[p[i], p[j], s[i], s[j]]);
    }
    Ok(out)
}

#[derive(Serialize)]
struct MarginPoint {
    t: f64,
    lhs: f64,
    rhs: f64,
    margin: f64,
    stderr: f64,
    pass: bool,
}

/// Margins of a Poincaré or Bakry-Émery check along a list of times.
///
/// `check` is `"poincare"` or `"be"`, `variant` is `"right"` or `"reverse"`.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn margins(
    model_json: &str,
    testfn_json: &str,
    check: &str,
    variant: &str,
    x: &[f64],
    times: &[f64],
    n: usize,
    seed: u32,
) -> Result<String, JsError> {
    let m = parse_model(model_json)?;
    let spec: TestFnSpec = serde_json::from_str(testfn_json).map_err(js_err)?;
    let f = make_testfn(&spec).map_err(js_err)?;
    let x = point(&m, x)?;
    let variant = match variant {
        "right" => Variant::Right,
        "reverse" => Variant::Reverse,
        other => return Err(JsError::new(&format!("unknown variant {other}"))),
    };
    let mc = McConfig::new(n, seed as u64);
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let r: CheckReport = match check {
            "poincare" => check_poincare(&m, &f, t, &x, variant, &mc),
            "be" => check_be(&m, &f, t, &x, variant, None, &mc),
            other => return Err(JsError::new(&format!("unknown check {other}"))),
        }
        .map_err(js_err)?;
        out.push(MarginPoint {
            t,
            lhs: r.lhs.value,
            rhs: r.rhs.value,
            margin: r.margin,
            stderr: r.margin_stderr,
            pass: r.verdict == kolmogorov_bounds::inequalities::Verdict::Pass,
        });
    }
    serde_json::to_string(&out).map_err(js_err)
}
