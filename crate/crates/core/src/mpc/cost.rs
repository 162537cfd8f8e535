use crate::plant::ControlInput;
use crate::schedule::ComfortBounds;
use serde::{Deserialize, Serialize};

/// Comfort weight and heat production constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostParams {
    /// Weight of the squared comfort violation against €.
    pub alpha: f64,
    /// Gas price, €/kWh.
    pub c_gas: f64,
    /// Electricity price, €/kWh.
    pub c_ele: f64,
    pub eta_gas: f64,
    pub eta_cool: f64,
    /// W
    pub q_heat_max: f64,
    /// W
    pub q_cool_max: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            alpha: 100.0,
            c_gas: 0.041,
            c_ele: 0.15,
            eta_gas: 0.9,
            eta_cool: 2.5,
            q_heat_max: 500_000.0,
            q_cool_max: 300_000.0,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("c_gas", self.c_gas),
            ("c_ele", self.c_ele),
            ("eta_gas", self.eta_gas),
            ("eta_cool", self.eta_cool),
            ("q_heat_max", self.q_heat_max),
            ("q_cool_max", self.q_cool_max),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be > 0, got {v}"));
            }
        }
        if !(1.0..=10_000.0).contains(&self.alpha) {
            return Err(format!("alpha must lie in [1, 10000], got {}", self.alpha));
        }
        Ok(())
    }

    pub fn with_alpha(&self, alpha: f64) -> CostParams {
        CostParams { alpha, ..self.clone() }
    }

    /// € per W held for `dt_hours`, for (heating, cooling).
    pub fn energy_prices(&self, dt_hours: f64) -> (f64, f64) {
        (
            self.c_gas / (1000.0 * self.eta_gas) * dt_hours,
            self.c_ele / (1000.0 * self.eta_cool) * dt_hours,
        )
    }
}

/// Signed distance outside the comfort band: positive above `t_max`, negative
/// below `t_min`, zero inside.
pub fn violation(t_zone: f64, bounds: &ComfortBounds) -> f64 {
    (t_zone - bounds.t_max).max(0.0) + (t_zone - bounds.t_min).min(0.0)
}

/// Squared violation, K².
pub fn discomfort_cost(t_zone: f64, bounds: &ComfortBounds) -> f64 {
    let v = violation(t_zone, bounds);
    v * v
}

/// d(discomfort)/d(t_zone).
pub fn discomfort_slope(t_zone: f64, bounds: &ComfortBounds) -> f64 {
    2.0 * violation(t_zone, bounds)
}

/// € for holding `input` during `dt_hours`.
pub fn energy_cost(input: &ControlInput, params: &CostParams, dt_hours: f64) -> f64 {
    let (heat, cool) = params.energy_prices(dt_hours);
    heat * input.q_heat + cool * input.q_cool
}
