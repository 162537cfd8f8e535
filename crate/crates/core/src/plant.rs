//! Nonlinear two-state (zone, wall) building model.
//!
//! Heat balances, with absolute temperatures in the radiative term:
//!
//! ```text
//! c_zone·dTz/dt = (Tw−Tz)/r_zw + (Ta−Tz)/r_za + η(Tz)·q_heat − q_cool + a_sol_zone·I + q_occ·θ
//! c_wall·dTw/dt = (Tz−Tw)/r_zw + (Ta−Tw)/r_wa + a_sol_wall·I + eps_rad·(Ta_K⁴ − Tw_K⁴)
//! η(Tz)         = 1 − k_emit·softplus_β(Tz − t_emit0)
//! ```
//!
//! The same model is the prediction model of the nonlinear controllers and the
//! truth simulator of the closed loop.

use crate::error::{Error, Result};
use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

pub const KELVIN_OFFSET: f64 = 273.15;

/// Temperatures outside this band mean the integration has diverged.
pub const SANITY_ENVELOPE: (f64, f64) = (-50.0, 100.0);

/// Longest RK4 sub-step in seconds.
pub const MAX_SUBSTEP: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildingState {
    pub t_zone: f64,
    pub t_wall: f64,
}

impl BuildingState {
    pub fn new(t_zone: f64, t_wall: f64) -> Self {
        BuildingState { t_zone, t_wall }
    }

    pub fn is_sane(&self) -> bool {
        let (lo, hi) = SANITY_ENVELOPE;
        [self.t_zone, self.t_wall]
            .iter()
            .all(|t| t.is_finite() && *t >= lo && *t <= hi)
    }

    pub(crate) fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.t_zone, self.t_wall)
    }

    pub(crate) fn from_vector(v: &Vector2<f64>) -> Self {
        BuildingState::new(v[0], v[1])
    }
}

/// Heating and cooling power in W.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub q_heat: f64,
    pub q_cool: f64,
}

impl ControlInput {
    pub fn new(q_heat: f64, q_cool: f64) -> Self {
        ControlInput { q_heat, q_cool }
    }
}

/// Exogenous inputs held constant over one sampling interval.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DisturbanceSample {
    /// Ambient temperature, °C.
    pub t_amb: f64,
    /// Solar irradiance, W/m².
    pub irradiance: f64,
    /// Occupancy fraction in [0, 1].
    pub occupancy: f64,
}

impl DisturbanceSample {
    pub fn new(t_amb: f64, irradiance: f64, occupancy: f64) -> Self {
        DisturbanceSample {
            t_amb,
            irradiance,
            occupancy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantParams {
    /// Zone thermal capacitance, J/K.
    pub c_zone: f64,
    /// Wall thermal capacitance, J/K.
    pub c_wall: f64,
    /// Zone–wall resistance, K/W.
    pub r_zw: f64,
    /// Zone–ambient resistance, K/W.
    pub r_za: f64,
    /// Wall–ambient resistance, K/W.
    pub r_wa: f64,
    /// Solar aperture onto the zone, m².
    pub a_sol_zone: f64,
    /// Solar aperture onto the wall, m².
    pub a_sol_wall: f64,
    /// Internal gain at full occupancy, W.
    pub q_occ: f64,
    /// Emitter derating slope, 1/K.
    pub k_emit: f64,
    /// Zone temperature where emitter derating sets in, °C.
    pub t_emit0: f64,
    /// Softplus smoothing constant of the derating, 1/K.
    pub beta: f64,
    /// Radiative exchange coefficient, W/K⁴.
    pub eps_rad: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            c_zone: 5e8,
            c_wall: 5e9,
            r_zw: 3e-5,
            r_za: 1.5e-4,
            r_wa: 1e-4,
            a_sol_zone: 50.0,
            a_sol_wall: 150.0,
            q_occ: 30_000.0,
            k_emit: 0.01,
            t_emit0: 24.0,
            beta: 2.0,
            eps_rad: 2e-5,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("c_zone", self.c_zone),
            ("c_wall", self.c_wall),
            ("r_zw", self.r_zw),
            ("r_za", self.r_za),
            ("r_wa", self.r_wa),
            ("beta", self.beta),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        let nonneg = [
            ("k_emit", self.k_emit),
            ("eps_rad", self.eps_rad),
            ("a_sol_zone", self.a_sol_zone),
            ("a_sol_wall", self.a_sol_wall),
            ("q_occ", self.q_occ),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !self.t_emit0.is_finite() {
            return Err(Error::InvalidParameter("t_emit0 must be finite".into()));
        }
        Ok(())
    }

    /// Emitter efficiency and its derivative with respect to the zone temperature.
    pub fn emitter_efficiency(&self, t_zone: f64) -> (f64, f64) {
        let x = self.beta * (t_zone - self.t_emit0);
        // log(1+e^x) without overflow
        let softplus = if x > 30.0 { x } else { x.exp().ln_1p() } / self.beta;
        let sigmoid = 1.0 / (1.0 + (-x).exp());
        (1.0 - self.k_emit * softplus, -self.k_emit * sigmoid)
    }
}

/// Time derivative of the state, °C/s per component.
pub fn derivative(
    state: &BuildingState,
    input: &ControlInput,
    d: &DisturbanceSample,
    p: &PlantParams,
) -> Result<Vector2<f64>> {
    let rate = rates(&state.to_vector(), input, d, p);
    if rate.iter().all(|r| r.is_finite()) {
        Ok(rate)
    } else {
        Err(Error::InvalidParameter(format!(
            "non-finite state rate {rate:?} at {state:?}"
        )))
    }
}

fn rates(x: &Vector2<f64>, u: &ControlInput, d: &DisturbanceSample, p: &PlantParams) -> Vector2<f64> {
    let (tz, tw) = (x[0], x[1]);
    let (eta, _) = p.emitter_efficiency(tz);
    let ta_k = d.t_amb + KELVIN_OFFSET;
    let tw_k = tw + KELVIN_OFFSET;
    let zone = (tw - tz) / p.r_zw + (d.t_amb - tz) / p.r_za + eta * u.q_heat - u.q_cool
        + p.a_sol_zone * d.irradiance
        + p.q_occ * d.occupancy;
    let wall = (tz - tw) / p.r_zw
        + (d.t_amb - tw) / p.r_wa
        + p.a_sol_wall * d.irradiance
        + p.eps_rad * (ta_k.powi(4) - tw_k.powi(4));
    Vector2::new(zone / p.c_zone, wall / p.c_wall)
}

/// Rates together with their Jacobians with respect to state and input.
fn rates_with_jacobians(
    x: &Vector2<f64>,
    u: &ControlInput,
    d: &DisturbanceSample,
    p: &PlantParams,
) -> (Vector2<f64>, Matrix2<f64>, Matrix2<f64>) {
    let (eta, deta) = p.emitter_efficiency(x[0]);
    let tw_k = x[1] + KELVIN_OFFSET;
    let jx = Matrix2::new(
        (-1.0 / p.r_zw - 1.0 / p.r_za + deta * u.q_heat) / p.c_zone,
        1.0 / (p.r_zw * p.c_zone),
        1.0 / (p.r_zw * p.c_wall),
        (-1.0 / p.r_zw - 1.0 / p.r_wa - 4.0 * p.eps_rad * tw_k.powi(3)) / p.c_wall,
    );
    let ju = Matrix2::new(eta / p.c_zone, -1.0 / p.c_zone, 0.0, 0.0);
    (rates(x, u, d, p), jx, ju)
}

/// Sensitivities of a step's end state: `dx` with respect to the start state,
/// `du` with respect to the held input (per W).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepJacobian {
    pub dx: Matrix2<f64>,
    pub du: Matrix2<f64>,
}

fn substeps(dt: f64) -> Result<(usize, f64)> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
    }
    let n = (dt / MAX_SUBSTEP).ceil().max(1.0) as usize;
    Ok((n, dt / n as f64))
}

fn check(x: &Vector2<f64>) -> Result<()> {
    let s = BuildingState::from_vector(x);
    if s.is_sane() {
        Ok(())
    } else {
        Err(Error::IntegrationBlowup {
            t_zone: s.t_zone,
            t_wall: s.t_wall,
        })
    }
}

/// Advance the state by `dt` seconds with input and disturbance held constant
/// (classical RK4, sub-steps of at most [`MAX_SUBSTEP`]).
pub fn step(
    state: &BuildingState,
    input: &ControlInput,
    d: &DisturbanceSample,
    dt: f64,
    p: &PlantParams,
) -> Result<BuildingState> {
    let (n, h) = substeps(dt)?;
    let mut x = state.to_vector();
    for _ in 0..n {
        let k1 = rates(&x, input, d, p);
        let k2 = rates(&(x + k1 * (h / 2.0)), input, d, p);
        let k3 = rates(&(x + k2 * (h / 2.0)), input, d, p);
        let k4 = rates(&(x + k3 * h), input, d, p);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        check(&x)?;
    }
    Ok(BuildingState::from_vector(&x))
}

/// [`step`] plus the exact derivative of the discrete RK4 map.
pub fn step_with_jacobian(
    state: &BuildingState,
    input: &ControlInput,
    d: &DisturbanceSample,
    dt: f64,
    p: &PlantParams,
) -> Result<(BuildingState, StepJacobian)> {
    let (n, h) = substeps(dt)?;
    let mut x = state.to_vector();
    let mut sx = Matrix2::identity();
    let mut su = Matrix2::zeros();
    for _ in 0..n {
        let (k1, a1, b1) = rates_with_jacobians(&x, input, d, p);
        let dk1x = a1 * sx;
        let dk1u = a1 * su + b1;

        let (k2, a2, b2) = rates_with_jacobians(&(x + k1 * (h / 2.0)), input, d, p);
        let dk2x = a2 * (sx + dk1x * (h / 2.0));
        let dk2u = a2 * (su + dk1u * (h / 2.0)) + b2;

        let (k3, a3, b3) = rates_with_jacobians(&(x + k2 * (h / 2.0)), input, d, p);
        let dk3x = a3 * (sx + dk2x * (h / 2.0));
        let dk3u = a3 * (su + dk2u * (h / 2.0)) + b3;

        let (k4, a4, b4) = rates_with_jacobians(&(x + k3 * h), input, d, p);
        let dk4x = a4 * (sx + dk3x * h);
        let dk4u = a4 * (su + dk3u * h) + b4;

        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        sx += (dk1x + dk2x * 2.0 + dk3x * 2.0 + dk4x) * (h / 6.0);
        su += (dk1u + dk2u * 2.0 + dk3u * 2.0 + dk4u) * (h / 6.0);
        check(&x)?;
    }
    Ok((BuildingState::from_vector(&x), StepJacobian { dx: sx, du: su }))
}
