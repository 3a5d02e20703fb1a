//! Browser bindings: each export takes plain numbers and returns a JSON string.

use fbsde_hjb::benchmarks::{merton_grid, riskmin_grid};
use fbsde_hjb::{
    build_merton, build_riskmin, merton_log_value, minimal_risk_identity, riskmin_closed_form, solve, MarketParams,
    SolveReport, SpaceTimeGrid, Utility,
};
use serde_json::json;
use wasm_bindgen::prelude::*;

const MAX_NODES: usize = 400;
const MAX_PATHS: usize = 200_000;

fn check_grid(nx: usize, nt: usize) -> Result<(), String> {
    if nx > MAX_NODES || nt > 2 * MAX_NODES {
        return Err(format!("grid {nx}x{nt} exceeds the demo limit {MAX_NODES}x{}", 2 * MAX_NODES));
    }
    Ok(())
}

fn profile(grid: &SpaceTimeGrid, report: &SolveReport, oracle: impl Fn(f64) -> f64) -> serde_json::Value {
    let xs = grid.x_nodes();
    json!({
        "y0_at_x0": report.y0_at_x0,
        "x": xs,
        "y": report.field.y_row(0),
        "u": report.control_row(0),
        "oracle": xs.iter().map(|&x| oracle(x)).collect::<Vec<_>>(),
        "substeps": report.diagnostics.substeps,
    })
}

pub fn riskmin_json(b: f64, sigma: f64, horizon: f64, x0: f64, nx: usize, nt: usize) -> Result<String, String> {
    check_grid(nx, nt)?;
    let p = MarketParams::constant(b, sigma, horizon, x0, Utility::Linear);
    let spec = build_riskmin(&p).map_err(|e| e.to_string())?;
    let sol = riskmin_closed_form(&p).map_err(|e| e.to_string())?;
    let grid = riskmin_grid(&p, nx, nt).map_err(|e| e.to_string())?;
    let report = solve(&spec, &grid).map_err(|e| e.to_string())?;
    let mut v = profile(&grid, &report, |x| sol.y_hat(0.0, x));
    v["closed_form"] = json!(sol.y_hat(0.0, x0));
    v["u_closed_form"] = json!(sol.u_hat(0.0));
    Ok(v.to_string())
}

pub fn merton_json(b: f64, sigma: f64, horizon: f64, x0: f64, nx: usize, nt: usize) -> Result<String, String> {
    check_grid(nx, nt)?;
    let p = MarketParams::constant(b, sigma, horizon, x0, Utility::Log);
    let spec = build_merton(&p).map_err(|e| e.to_string())?;
    let grid = merton_grid(&p, nx, nt).map_err(|e| e.to_string())?;
    let report = solve(&spec, &grid).map_err(|e| e.to_string())?;
    let mut v = profile(&grid, &report, |x| merton_log_value(0.0, x, &p).unwrap_or(f64::NAN));
    v["closed_form"] = json!(merton_log_value(0.0, x0, &p).map_err(|e| e.to_string())?);
    Ok(v.to_string())
}

pub fn entropy_json(b: f64, sigma: f64, horizon: f64, n_paths: usize, dt: f64, seed: u64) -> Result<String, String> {
    if n_paths > MAX_PATHS {
        return Err(format!("at most {MAX_PATHS} paths in the demo"));
    }
    let p = MarketParams::constant(b, sigma, horizon, 0.0, Utility::Linear);
    let id = minimal_risk_identity(&p, n_paths, dt, seed).map_err(|e| e.to_string())?;
    serde_json::to_string(&id).map_err(|e| e.to_string())
}

/// Risk-minimization value and control profile at t = 0.
#[wasm_bindgen]
pub fn solve_riskmin(b: f64, sigma: f64, horizon: f64, x0: f64, nx: usize, nt: usize) -> Result<String, JsError> {
    riskmin_json(b, sigma, horizon, x0, nx, nt).map_err(|e| JsError::new(&e))
}

/// Merton log-utility value and control profile at t = 0.
#[wasm_bindgen]
pub fn solve_merton(b: f64, sigma: f64, horizon: f64, x0: f64, nx: usize, nt: usize) -> Result<String, JsError> {
    merton_json(b, sigma, horizon, x0, nx, nt).map_err(|e| JsError::new(&e))
}

/// Girsanov entropy estimate against `½∫(b/σ)² dt`.
#[wasm_bindgen]
pub fn entropy(b: f64, sigma: f64, horizon: f64, n_paths: usize, dt: f64, seed: u32) -> Result<String, JsError> {
    entropy_json(b, sigma, horizon, n_paths, dt, seed as u64).map_err(|e| JsError::new(&e))
}
