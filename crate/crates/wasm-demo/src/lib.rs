//! Three operations for the static page in `www/`: a Gaussian prior row,
//! a Tanh fit of a prediction sequence and curriculum levels of a class run.

use con4m::autodiff::gaussian_kernel;
use con4m::data::assign_levels;
use con4m::predict::fit_tanh;
use wasm_bindgen::prelude::*;

/// Row `center` of the row-normalized Gaussian prior over `len` positions.
pub fn prior_row(len: usize, center: usize, sigma: f64) -> Result<Vec<f64>, String> {
    if center >= len {
        return Err(format!("center {center} outside 0..{len}"));
    }
    let g = gaussian_kernel(&vec![sigma; len]).map_err(|e| e.to_string())?;
    Ok(g.row(center).to_vec())
}

/// Fitted curve and parameters as JSON.
pub fn tanh_fit_json(values: &[f64]) -> Result<String, String> {
    if values.is_empty() {
        return Err("empty sequence".into());
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(format!("value {v} outside [0, 1]"));
    }
    let fit = fit_tanh(values);
    let p = fit.params;
    Ok(serde_json::json!({
        "a": p.a,
        "k": p.k,
        "b": p.b,
        "h": p.h,
        "iterations": p.iterations,
        "converged": p.converged,
        "curve": fit.curve,
    })
    .to_string())
}

pub fn run_levels(k: usize, levels: usize) -> Result<Vec<u32>, String> {
    if k == 0 || levels == 0 {
        return Err("run length and level count must be positive".into());
    }
    Ok(assign_levels(k, levels).into_iter().map(|l| l as u32).collect())
}

#[wasm_bindgen(js_name = priorRow)]
pub fn prior_row_js(len: usize, center: usize, sigma: f64) -> Result<Vec<f64>, JsValue> {
    prior_row(len, center, sigma).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = fitTanh)]
pub fn fit_tanh_js(values: Vec<f64>) -> Result<String, JsValue> {
    tanh_fit_json(&values).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = runLevels)]
pub fn run_levels_js(k: usize, levels: usize) -> Result<Vec<u32>, JsValue> {
    run_levels(k, levels).map_err(|e| JsValue::from_str(&e))
}
