use super::cost::{discomfort_cost, discomfort_slope, CostParams};
use super::solver::Objective;
use crate::error::{Error, Result};
use crate::ident::{step_linear, LinearModel};
use crate::plant::{self, BuildingState, ControlInput, DisturbanceSample, PlantParams, StepJacobian};
use crate::scen::ScenarioSet;
use crate::schedule::{ComfortBounds, ComfortSchedule};
use nalgebra::Vector2;

/// Model used to predict the horizon.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictionModel {
    Nonlinear(PlantParams),
    /// Identified for one fixed sampling interval; `dt` is ignored.
    Linear(LinearModel),
}

impl PredictionModel {
    pub fn step(
        &self,
        state: &BuildingState,
        input: &ControlInput,
        d: &DisturbanceSample,
        dt_seconds: f64,
    ) -> Result<BuildingState> {
        match self {
            PredictionModel::Nonlinear(p) => plant::step(state, input, d, dt_seconds, p),
            PredictionModel::Linear(m) => sane(step_linear(m, state, input, d)),
        }
    }

    pub fn step_with_jacobian(
        &self,
        state: &BuildingState,
        input: &ControlInput,
        d: &DisturbanceSample,
        dt_seconds: f64,
    ) -> Result<(BuildingState, StepJacobian)> {
        match self {
            PredictionModel::Nonlinear(p) => plant::step_with_jacobian(state, input, d, dt_seconds, p),
            PredictionModel::Linear(m) => Ok((
                sane(step_linear(m, state, input, d))?,
                StepJacobian { dx: m.a, du: m.b1 },
            )),
        }
    }
}

fn sane(s: BuildingState) -> Result<BuildingState> {
    if s.is_sane() {
        Ok(s)
    } else {
        Err(Error::IntegrationBlowup {
            t_zone: s.t_zone,
            t_wall: s.t_wall,
        })
    }
}

/// Flattened decision vector `[q_heat₀, q_cool₀, q_heat₁, …]` → inputs.
pub fn unpack_inputs(q: &[f64]) -> Vec<ControlInput> {
    q.chunks_exact(2).map(|c| ControlInput::new(c[0], c[1])).collect()
}

pub fn pack_inputs(inputs: &[ControlInput]) -> Vec<f64> {
    inputs.iter().flat_map(|u| [u.q_heat, u.q_cool]).collect()
}

/// One horizon problem with inputs shared across all scenarios:
///
/// `Σᵢ [ Σ_{k<N} (α·Jᵈ(x_{k,i}) + Jᵉ(u_k)) + α·Jᵈ(x_{N,i}) ]`
///
/// where `x_{0,i}` is the current state and `x_{k+1,i}` follows from `x_{k,i}`,
/// `u_k` and the `k`-th disturbance of scenario `i`. Step `k` is the hour
/// `issue + k`, whose comfort bounds price `x_k`.
///
/// Identical scenarios are evaluated once and weighted by their multiplicity.
/// The optimizer sees the weighted scenario mean, whose argmin is that of the
/// sum; `M` copies of one scenario therefore give the one-scenario problem
/// bit for bit.
#[derive(Debug, Clone)]
pub struct HorizonProblem<'a> {
    model: &'a PredictionModel,
    x0: BuildingState,
    scenarios: &'a ScenarioSet,
    /// `N + 1` bounds; the last one prices the terminal state.
    bounds: Vec<ComfortBounds>,
    /// `(index of the first occurrence, multiplicity)` per distinct scenario.
    groups: Vec<(usize, usize)>,
    costs: CostParams,
    horizon: usize,
    dt_seconds: f64,
    dt_hours: f64,
}

pub fn build_problem<'a>(
    model: &'a PredictionModel,
    x0: BuildingState,
    scenarios: &'a ScenarioSet,
    schedule: &ComfortSchedule,
    costs: &CostParams,
    horizon: usize,
    dt_hours: f64,
) -> Result<HorizonProblem<'a>> {
    if scenarios.is_empty() {
        return Err(Error::InvalidParameter("a horizon problem needs at least one scenario".into()));
    }
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be ≥ 1".into()));
    }
    if scenarios.scenarios.iter().any(|s| s.len() < horizon) {
        return Err(Error::InvalidParameter(format!(
            "scenarios shorter than the horizon {horizon}"
        )));
    }
    if !x0.is_sane() {
        return Err(Error::InvalidParameter(format!("initial state {x0:?} is not finite/sane")));
    }
    if !(dt_hours.is_finite() && dt_hours > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt_hours} h")));
    }
    let bounds = schedule.window(scenarios.issue, horizon + 1);
    let mut groups: Vec<(usize, usize)> = Vec::new();
    for (i, s) in scenarios.scenarios.iter().enumerate() {
        let s = &s[..horizon];
        match groups.iter_mut().find(|(j, _)| &scenarios.scenarios[*j][..horizon] == s) {
            Some(g) => g.1 += 1,
            None => groups.push((i, 1)),
        }
    }
    Ok(HorizonProblem {
        model,
        x0,
        scenarios,
        bounds,
        groups,
        costs: costs.clone(),
        horizon,
        dt_seconds: dt_hours * 3600.0,
        dt_hours,
    })
}

impl HorizonProblem<'_> {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_scenarios(&self) -> usize {
        self.scenarios.len()
    }

    /// Number of distinct scenario trajectories.
    pub fn n_distinct(&self) -> usize {
        self.groups.len()
    }

    pub fn costs(&self) -> &CostParams {
        &self.costs
    }

    pub fn bounds(&self) -> &[ComfortBounds] {
        &self.bounds
    }

    pub fn lower(&self) -> Vec<f64> {
        vec![0.0; 2 * self.horizon]
    }

    pub fn upper(&self) -> Vec<f64> {
        (0..self.horizon)
            .flat_map(|_| [self.costs.q_heat_max, self.costs.q_cool_max])
            .collect()
    }

    /// Predicted states, `M × (N + 1)`, starting with the current state.
    pub fn rollout(&self, q: &[f64]) -> Result<Vec<Vec<BuildingState>>> {
        let inputs = unpack_inputs(q);
        self.scenarios
            .scenarios
            .iter()
            .map(|scenario| {
                let mut states = Vec::with_capacity(self.horizon + 1);
                let mut x = self.x0;
                states.push(x);
                for k in 0..self.horizon {
                    x = self
                        .model
                        .step(&x, &inputs[k], &scenario[k], self.dt_seconds)
                        .map_err(|_| Error::InfeasibleRollout)?;
                    states.push(x);
                }
                Ok(states)
            })
            .collect()
    }

    fn energy_term(&self, inputs: &[ControlInput], weight: f64, grad: &mut [f64]) -> f64 {
        let (heat, cool) = self.costs.energy_prices(self.dt_hours);
        let mut total = 0.0;
        for (k, u) in inputs.iter().enumerate() {
            total += heat * u.q_heat + cool * u.q_cool;
            grad[2 * k] = weight * heat;
            grad[2 * k + 1] = weight * cool;
        }
        weight * total
    }

    /// Value and gradient of the scenario sum, or
    /// [`Error::InfeasibleRollout`] if any scenario leaves the state envelope.
    pub fn value_and_gradient(&self, q: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.weighted(q, grad, false)
    }

    /// Value and gradient of the scenario mean, the sum divided by `M`.
    pub fn mean_value_and_gradient(&self, q: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.weighted(q, grad, true)
    }

    fn weighted(&self, q: &[f64], grad: &mut [f64], mean: bool) -> Result<f64> {
        assert_eq!(q.len(), 2 * self.horizon, "decision vector length");
        let m = self.scenarios.len() as f64;
        let inputs = unpack_inputs(q);
        let alpha = self.costs.alpha;
        let mut total = self.energy_term(&inputs, if mean { 1.0 } else { m }, grad);
        let mut states = Vec::with_capacity(self.horizon + 1);
        let mut jacobians = Vec::with_capacity(self.horizon);
        let mut g = vec![0.0; 2 * self.horizon];
        for &(index, count) in &self.groups {
            let w = if mean { count as f64 / m } else { count as f64 };
            let scenario = &self.scenarios.scenarios[index];
            states.clear();
            jacobians.clear();
            let mut x = self.x0;
            states.push(x);
            for k in 0..self.horizon {
                let (next, jac) = self
                    .model
                    .step_with_jacobian(&x, &inputs[k], &scenario[k], self.dt_seconds)
                    .map_err(|_| Error::InfeasibleRollout)?;
                x = next;
                states.push(x);
                jacobians.push(jac);
            }
            let mut value = 0.0;
            for (x, b) in states.iter().zip(&self.bounds) {
                value += alpha * discomfort_cost(x.t_zone, b);
            }
            // adjoint sweep: λ_k = ∂(cost-to-go)/∂x_k
            let n = self.horizon;
            let mut lambda = Vector2::new(alpha * discomfort_slope(states[n].t_zone, &self.bounds[n]), 0.0);
            for k in (0..n).rev() {
                let jac = &jacobians[k];
                let gu = jac.du.transpose() * lambda;
                g[2 * k] = gu[0];
                g[2 * k + 1] = gu[1];
                lambda = jac.dx.transpose() * lambda;
                lambda[0] += alpha * discomfort_slope(states[k].t_zone, &self.bounds[k]);
            }
            total += w * value;
            for (gi, v) in grad.iter_mut().zip(&g) {
                *gi += w * v;
            }
        }
        Ok(total)
    }
}

impl Objective for HorizonProblem<'_> {
    fn dim(&self) -> usize {
        2 * self.horizon
    }

    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        match self.mean_value_and_gradient(x, grad) {
            Ok(v) => v,
            Err(_) => {
                grad.fill(0.0);
                f64::INFINITY
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::HourStamp;

    fn instance(m: usize, n: usize) -> (PredictionModel, ScenarioSet, ComfortSchedule) {
        let schedule = ComfortSchedule::default();
        let issue = HourStamp::parse("2017-02-06T06:00:00").unwrap();
        let scenarios = ScenarioSet {
            issue,
            scenarios: (0..m)
                .map(|i| {
                    (0..n)
                        .map(|k| {
                            DisturbanceSample::new(
                                -2.0 + i as f64 + 0.3 * k as f64,
                                40.0 * k as f64,
                                schedule.occupancy(issue + k as i64),
                            )
                        })
                        .collect()
                })
                .collect(),
            seed: None,
        };
        (PredictionModel::Nonlinear(PlantParams::default()), scenarios, schedule)
    }

    #[test]
    fn zero_alpha_is_pure_energy() {
        let (model, sc, schedule) = instance(3, 4);
        let costs = CostParams {
            alpha: 0.0,
            ..CostParams::default()
        };
        let p = build_problem(&model, BuildingState::new(19.0, 18.0), &sc, &schedule, &costs, 4, 1.0).unwrap();
        let q = pack_inputs(&[ControlInput::new(100_000.0, 0.0); 4]);
        let mut g = vec![0.0; 8];
        let v = p.value_and_gradient(&q, &mut g).unwrap();
        let per_step = super::super::cost::energy_cost(&ControlInput::new(100_000.0, 0.0), &costs, 1.0);
        assert!((v - 3.0 * 4.0 * per_step).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (model, sc, schedule) = instance(2, 3);
        let costs = CostParams::default();
        let p = build_problem(&model, BuildingState::new(19.0, 18.0), &sc, &schedule, &costs, 3, 1.0).unwrap();
        let q = vec![250_000.0, 10_000.0, 400_000.0, 0.0, 50_000.0, 120_000.0];
        let mut g = vec![0.0; 6];
        p.value_and_gradient(&q, &mut g).unwrap();
        let mut scratch = vec![0.0; 6];
        for i in 0..6 {
            let h = 10.0;
            let mut qp = q.clone();
            qp[i] += h;
            let mut qm = q.clone();
            qm[i] -= h;
            let fd = (p.value_and_gradient(&qp, &mut scratch).unwrap()
                - p.value_and_gradient(&qm, &mut scratch).unwrap())
                / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1e-6), "i={i} fd={fd} g={}", g[i]);
        }
    }

    #[test]
    fn rollout_starts_at_current_state() {
        let (model, sc, schedule) = instance(2, 3);
        let x0 = BuildingState::new(21.0, 20.0);
        let p = build_problem(&model, x0, &sc, &schedule, &CostParams::default(), 3, 1.0).unwrap();
        let states = p.rollout(&vec![0.0; 6]).unwrap();
        assert_eq!(states.len(), 2);
        assert!(states.iter().all(|s| s.len() == 4 && s[0] == x0));
    }

    #[test]
    fn rejects_empty_or_short_scenarios() {
        let (model, sc, schedule) = instance(1, 3);
        let x0 = BuildingState::new(21.0, 20.0);
        let costs = CostParams::default();
        assert!(build_problem(&model, x0, &sc, &schedule, &costs, 4, 1.0).is_err());
        let empty = ScenarioSet {
            issue: sc.issue,
            scenarios: vec![],
            seed: None,
        };
        assert!(build_problem(&model, x0, &empty, &schedule, &costs, 3, 1.0).is_err());
    }
}
