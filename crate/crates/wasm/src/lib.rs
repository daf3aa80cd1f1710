//! Browser bindings for the demo page in `www/`.
//!
//! Every export takes a JSON request and returns a JSON reply, so the page
//! needs no generated types. The same functions run natively for tests.

use glwb_ltc::{
    fair_fee, optimal_action_map, ContractParams, FairFeeOptions, HealthState, MarketParams, Numerics, RateMode,
    Strategy, StrategyKind, BPS,
};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

/// Inputs shared by all operations. Missing fields take the reference values.
#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct Request {
    pub x0: u32,
    pub c: f64,
    pub alpha_bps: f64,
    /// `bs` or `bs-cir`.
    pub mode: RateMode,
    pub sigma_f: f64,
    pub sigma_r: f64,
    pub rho: f64,
    pub strategy: StrategyKind,
    pub steps_per_year: usize,
    pub f_a: f64,
}

impl Default for Request {
    fn default() -> Self {
        Self {
            x0: 60,
            c: 0.06,
            alpha_bps: 150.0,
            mode: RateMode::BsConstantRate,
            sigma_f: 0.2,
            sigma_r: 0.1,
            rho: -0.25,
            strategy: StrategyKind::Static,
            steps_per_year: 50,
            f_a: 50.0,
        }
    }
}

impl Request {
    fn contract(&self) -> ContractParams {
        ContractParams::reference(self.x0, self.c).with_alpha(self.alpha_bps * BPS)
    }

    fn market(&self) -> MarketParams {
        MarketParams {
            sigma_f: self.sigma_f,
            sigma_r: self.sigma_r,
            rho: self.rho,
            mode: self.mode,
            ..MarketParams::reference_cir()
        }
    }

    fn numerics(&self) -> Numerics {
        Numerics::new(self.steps_per_year, self.f_a)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PriceReply {
    pub price: f64,
    pub time_steps: usize,
    pub account_nodes: usize,
    pub rate_nodes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MapReply {
    pub anniversary: usize,
    pub account: Vec<f64>,
    pub rate: Vec<f64>,
    /// Row-major `[rate][account]`.
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub sigma_r: f64,
    pub alpha_bps: Option<f64>,
    pub error: Option<String>,
}

pub fn price_request(req: &Request) -> glwb_ltc::Result<PriceReply> {
    let r = glwb_ltc::price(&req.contract(), &req.market(), &Strategy::new(req.strategy), &req.numerics())?;
    Ok(PriceReply {
        price: r.price,
        time_steps: r.diagnostics.time_steps,
        account_nodes: r.diagnostics.account_nodes,
        rate_nodes: r.diagnostics.rate_nodes,
    })
}

/// Map of a healthy policyholder at one anniversary; the grid is trimmed to
/// accounts up to `4 P` so the interesting region fills the plot.
pub fn action_map_request(req: &Request, anniversary: usize) -> glwb_ltc::Result<MapReply> {
    let contract = req.contract();
    let maps = optimal_action_map(
        &contract,
        &req.market(),
        &Strategy::new(req.strategy),
        &req.numerics(),
        &[anniversary],
        &[HealthState::Healthy],
    )?;
    let m = &maps[0];
    let keep = m.account.iter().take_while(|&&a| a <= 4.0 * contract.premium).count();
    let gamma = (0..m.rate.len())
        .flat_map(|k| (0..keep).map(move |j| (k, j)))
        .map(|(k, j)| m.gamma_at(k, j))
        .collect();
    Ok(MapReply {
        anniversary,
        account: m.account[..keep].to_vec(),
        rate: m.rate.clone(),
        gamma,
    })
}

/// Fair fee at each rate volatility; a failing point keeps its error.
pub fn fee_curve_request(req: &Request, sigmas: &[f64]) -> Vec<CurvePoint> {
    let contract = req.contract();
    sigmas
        .iter()
        .map(|&s| {
            let market = MarketParams {
                sigma_r: s,
                mode: RateMode::BsCir,
                ..req.market()
            };
            let res = fair_fee(
                &contract,
                &market,
                &Strategy::new(req.strategy),
                &req.numerics(),
                &FairFeeOptions::default(),
            );
            match res {
                Ok(f) => CurvePoint {
                    sigma_r: s,
                    alpha_bps: Some(f.alpha_bps()),
                    error: None,
                },
                Err(e) => CurvePoint {
                    sigma_r: s,
                    alpha_bps: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

fn parse(json: &str) -> Result<Request, JsError> {
    serde_json::from_str(json).map_err(|e| JsError::new(&format!("bad request: {e}")))
}

fn reply<T: Serialize>(value: &T) -> Result<String, JsError> {
    serde_json::to_string(value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn price(request: &str) -> Result<String, JsError> {
    let req = parse(request)?;
    reply(&price_request(&req)?)
}

#[wasm_bindgen]
pub fn action_map(request: &str, anniversary: usize) -> Result<String, JsError> {
    let req = parse(request)?;
    reply(&action_map_request(&req, anniversary)?)
}

#[wasm_bindgen]
pub fn fee_curve(request: &str, sigmas: &[f64]) -> Result<String, JsError> {
    let req = parse(request)?;
    reply(&fee_curve_request(&req, sigmas))
}
