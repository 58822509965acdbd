//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each export returns JSON text so the page needs no generated type glue.
//! The plain functions underneath are ordinary Rust and tested natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use prot_fpl::adversary::{prop1_run, prot_learner, AdversaryConfig};
use prot_fpl::harness::probe;
use prot_fpl::volatility::{fbm_generate, run_trading_experiment, FbmParams, TradingConfig};
use prot_fpl::{choose_a, GammaSchedule, LossMode, Result, ScheduleParams};

#[derive(Debug, Serialize)]
pub struct Curve {
    pub eps: Vec<f64>,
    /// `probabilities[j][k]` is `P{I = j}` at `eps[k]`.
    pub probabilities: Vec<Vec<f64>>,
    pub mc_eps: f64,
    pub exact: Vec<f64>,
    pub monte_carlo: Vec<f64>,
}

/// Exact selection probabilities over a log-spaced range of learning rates,
/// plus a Monte Carlo comparison at `mc_eps`.
pub fn probability_curve(cumulative: &[f64], mc_eps: f64, samples: usize, seed: u64) -> Result<Curve> {
    if cumulative.is_empty() || cumulative.iter().any(|c| !c.is_finite()) {
        return Err(prot_fpl::Error::Validation("cumulative losses must be a non-empty list of finite reals".into()));
    }
    let points = 121;
    let eps: Vec<f64> = (0..points).map(|k| 10f64.powf(-2.0 + 4.0 * k as f64 / (points - 1) as f64)).collect();
    let mut probabilities = vec![Vec::with_capacity(points); cumulative.len()];
    for &e in &eps {
        let p = prot_fpl::selection_probabilities_exact(cumulative, prot_fpl::LearningRate::Finite(e));
        for (row, x) in probabilities.iter_mut().zip(p) {
            row.push(x);
        }
    }
    let r = probe(cumulative, mc_eps, samples, seed)?;
    Ok(Curve { eps, probabilities, mc_eps, exact: r.exact, monte_carlo: r.monte_carlo })
}

fn default_params(num_experts: usize, gamma: GammaSchedule, v0: f64) -> Result<ScheduleParams> {
    ScheduleParams::new(choose_a(1.0, LossMode::General)?, num_experts, gamma, v0, LossMode::General)
}

pub fn adversary_rows(eps: f64, horizon: usize) -> Result<String> {
    let params = default_params(2, GammaSchedule::Power { delta: 1.0 }, 1.0)?;
    let config = AdversaryConfig::new(eps, 1.0, horizon)?;
    let trace = prop1_run(prot_learner(&params), &config)?;
    #[derive(Serialize)]
    struct Out<'a> {
        stated_bound: f64,
        fluctuation: f64,
        rows: &'a [prot_fpl::adversary::AdversaryRow],
    }
    Ok(serde_json::to_string(&Out {
        stated_bound: config.stated_bound(),
        fluctuation: config.fluctuation(),
        rows: &trace.rows,
    })?)
}

pub fn trading_rows(hurst: f64, steps: usize, seed: u64, gamma: f64, c: f64) -> Result<String> {
    let prices = fbm_generate(&FbmParams { scale: 10.0, ..FbmParams::new(hurst, steps, seed) })?;
    let params = default_params(2, GammaSchedule::Constant { c: gamma }, 1.0)?;
    let report = run_trading_experiment(&TradingConfig::new(c, params, 1.0)?, &prices)?;
    Ok(serde_json::to_string(&report)?)
}

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// JSON `{eps, probabilities, mc_eps, exact, monte_carlo}`.
#[wasm_bindgen]
pub fn selection_curve(
    cumulative: Vec<f64>,
    mc_eps: f64,
    samples: usize,
    seed: u64,
) -> std::result::Result<String, JsValue> {
    let curve = probability_curve(&cumulative, mc_eps, samples, seed).map_err(js_err)?;
    serde_json::to_string(&curve).map_err(js_err)
}

/// JSON trace of the lower-bound adversary playing against PROT.
#[wasm_bindgen]
pub fn adversary_trace(eps: f64, horizon: usize) -> std::result::Result<String, JsValue> {
    adversary_rows(eps, horizon).map_err(js_err)
}

/// JSON report of the volatility-trading game on a generated fBm path.
#[wasm_bindgen]
pub fn trading_experiment(
    hurst: f64,
    steps: usize,
    seed: u64,
    gamma: f64,
    c: f64,
) -> std::result::Result<String, JsValue> {
    trading_rows(hurst, steps, seed, gamma, c).map_err(js_err)
}
