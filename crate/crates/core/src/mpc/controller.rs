use super::cost::CostParams;
use super::problem::{build_problem, pack_inputs, unpack_inputs, HorizonProblem, PredictionModel};
use super::solver::{minimize_box, SolverOptions, SolverStatus};
use crate::error::{Error, Result};
use crate::ident::LinearModel;
use crate::plant::{BuildingState, ControlInput, PlantParams};
use crate::scen::{
    estimate_marginals, fit_copula, perfect_scenarios, point_scenario, sample_scenarios, CopulaModel,
    ErrorPool, PointForecast, ScenarioSet,
};
use crate::schedule::ComfortSchedule;
use crate::time::HourStamp;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSolution {
    pub inputs: Vec<ControlInput>,
    /// `M × (N + 1)` predicted states, empty if the final rollout failed.
    pub predicted: Vec<Vec<BuildingState>>,
    /// Summed over scenarios.
    pub objective: f64,
    pub n_scenarios: usize,
    pub status: SolverStatus,
    pub iterations: usize,
}

impl HorizonSolution {
    /// Objective averaged over scenarios, comparable across scenario counts.
    pub fn mean_objective(&self) -> f64 {
        self.objective / self.n_scenarios as f64
    }
}

/// Solves `problem` from `warm_start` (box midpoint when `None`). The solver
/// works on the scenario mean; its projected-gradient tolerance is scaled by
/// `α + 1`, the magnitude of that objective's sensitivities. The reported
/// objective is the scenario sum.
pub fn solve(
    problem: &HorizonProblem<'_>,
    warm_start: Option<&[ControlInput]>,
    options: &SolverOptions,
) -> HorizonSolution {
    let scale = problem.costs().alpha + 1.0;
    let opts = SolverOptions {
        tolerance: options.tolerance * scale,
        ..options.clone()
    };
    let start = warm_start.map(pack_inputs);
    let result = minimize_box(problem, &problem.lower(), &problem.upper(), start.as_deref(), &opts);
    HorizonSolution {
        predicted: problem.rollout(&result.x).unwrap_or_default(),
        inputs: unpack_inputs(&result.x),
        objective: result.objective * problem.n_scenarios() as f64,
        n_scenarios: problem.n_scenarios(),
        status: result.status,
        iterations: result.iterations,
    }
}

/// Previous plan advanced by one step, its last input repeated.
pub fn shift_warm_start(previous: &[ControlInput]) -> Vec<ControlInput> {
    match previous.split_first() {
        None => Vec::new(),
        Some((_, rest)) if rest.is_empty() => previous.to_vec(),
        Some((_, rest)) => {
            let mut v = rest.to_vec();
            v.push(*rest.last().expect("non-empty"));
            v
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ControllerKind {
    /// Nonlinear model, realized future disturbances.
    Pimpc,
    DetMpcMod,
    DetMpcLin,
    SbmpcMod,
    SbmpcLin,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 5] = [
        ControllerKind::Pimpc,
        ControllerKind::DetMpcMod,
        ControllerKind::DetMpcLin,
        ControllerKind::SbmpcMod,
        ControllerKind::SbmpcLin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Pimpc => "PIMPC",
            ControllerKind::DetMpcMod => "DetMPC-Mod",
            ControllerKind::DetMpcLin => "DetMPC-Lin",
            ControllerKind::SbmpcMod => "SBMPC-Mod",
            ControllerKind::SbmpcLin => "SBMPC-Lin",
        }
    }

    pub fn is_scenario_based(self) -> bool {
        matches!(self, ControllerKind::SbmpcMod | ControllerKind::SbmpcLin)
    }

    pub fn uses_linear_model(self) -> bool {
        matches!(self, ControllerKind::DetMpcLin | ControllerKind::SbmpcLin)
    }
}

/// A controller kind with its scenario count (1 unless scenario-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ControllerSpec {
    pub kind: ControllerKind,
    pub n_scenarios: usize,
}

impl ControllerSpec {
    pub fn new(kind: ControllerKind, n_scenarios: usize) -> Self {
        ControllerSpec {
            kind,
            n_scenarios: if kind.is_scenario_based() { n_scenarios } else { 1 },
        }
    }

    pub fn label(&self) -> String {
        if self.kind.is_scenario_based() {
            format!("{}-{}", self.kind.name(), self.n_scenarios)
        } else {
            self.kind.name().to_string()
        }
    }

    /// Expands a controller name. Scenario-based names without an explicit
    /// count (`SBMPC-Mod`) produce one spec per entry of `scenario_counts`;
    /// `SBMPC-Mod-10` pins the count.
    pub fn expand(name: &str, scenario_counts: &[usize]) -> Result<Vec<ControllerSpec>> {
        if let Ok(kind) = name.parse::<ControllerKind>() {
            return Ok(if kind.is_scenario_based() {
                scenario_counts.iter().map(|m| ControllerSpec::new(kind, *m)).collect()
            } else {
                vec![ControllerSpec::new(kind, 1)]
            });
        }
        name.parse::<ControllerSpec>().map(|s| vec![s])
    }
}

impl fmt::Display for ControllerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ControllerKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown controller {s:?}")))
    }
}

impl FromStr for ControllerSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if let Ok(kind) = s.parse::<ControllerKind>() {
            if kind.is_scenario_based() {
                return Err(Error::Config(format!("{s} needs a scenario count, e.g. {s}-20")));
            }
            return Ok(ControllerSpec::new(kind, 1));
        }
        let (head, count) = s
            .rsplit_once('-')
            .ok_or_else(|| Error::Config(format!("unknown controller {s:?}")))?;
        let kind: ControllerKind = head.parse()?;
        let m: usize = count
            .parse()
            .map_err(|_| Error::Config(format!("bad scenario count in {s:?}")))?;
        if !kind.is_scenario_based() || m == 0 {
            return Err(Error::Config(format!("unknown controller {s:?}")));
        }
        Ok(ControllerSpec::new(kind, m))
    }
}

/// What a policy may look at when deciding the input for hour `time`.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub step: usize,
    pub time: HourStamp,
    pub state: BuildingState,
    /// Issued at `time` from observations before it.
    pub forecast: &'a PointForecast,
    /// Realized values from `time` on, at least one horizon long. Only the
    /// perfect-information controller reads them.
    pub future_t_amb: &'a [f64],
    pub future_irradiance: &'a [f64],
    pub pool: &'a ErrorPool,
}

/// Where the scenarios of a decision came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioSource {
    Perfect,
    PointForecast,
    Sampled,
    /// Independent leads because too few past horizons were available.
    SampledIndependent,
    /// Scenario-based controller before any forecast error was recorded.
    PointForecastFallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub input: ControlInput,
    pub solution: HorizonSolution,
    pub source: ScenarioSource,
}

pub trait Policy: Send {
    fn label(&self) -> String;
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Decision>;
}

/// State estimation hook between the measured and the controlled state.
pub trait Observer: Send {
    fn estimate(&mut self, measured: &BuildingState) -> BuildingState;
}

/// The full state is measured.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityObserver;

impl Observer for IdentityObserver {
    fn estimate(&mut self, measured: &BuildingState) -> BuildingState {
        *measured
    }
}

/// Everything a controller is wired with.
#[derive(Debug, Clone)]
pub struct ControllerSetup {
    pub plant: PlantParams,
    pub linear: Option<LinearModel>,
    pub costs: CostParams,
    pub schedule: ComfortSchedule,
    pub horizon: usize,
    pub dt_hours: f64,
    pub solver: SolverOptions,
    /// Base seed of the scenario streams.
    pub seed: u64,
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the scenario draw at `step` of a run seeded with `base`.
pub fn step_seed(base: u64, step: usize) -> u64 {
    mix(base ^ mix(step as u64))
}

/// Receding-horizon controller of any [`ControllerKind`].
#[derive(Debug, Clone)]
pub struct MpcController {
    spec: ControllerSpec,
    model: PredictionModel,
    setup: ControllerSetup,
    previous: Option<Vec<ControlInput>>,
}

impl MpcController {
    pub fn new(spec: ControllerSpec, setup: ControllerSetup) -> Result<Self> {
        if spec.n_scenarios == 0 {
            return Err(Error::Config(format!("{} needs at least one scenario", spec.kind.name())));
        }
        let model = if spec.kind.uses_linear_model() {
            let m = setup.linear.clone().ok_or_else(|| {
                Error::Config(format!("{} needs an identified linear model", spec.label()))
            })?;
            PredictionModel::Linear(m)
        } else {
            PredictionModel::Nonlinear(setup.plant.clone())
        };
        Ok(MpcController {
            spec,
            model,
            setup,
            previous: None,
        })
    }

    pub fn spec(&self) -> ControllerSpec {
        self.spec
    }

    pub fn model(&self) -> &PredictionModel {
        &self.model
    }

    /// Scenarios this controller optimizes over at `ctx`.
    pub fn scenarios(&self, ctx: &DecisionContext<'_>) -> Result<(ScenarioSet, ScenarioSource)> {
        let n = self.setup.horizon;
        let schedule = &self.setup.schedule;
        Ok(match self.spec.kind {
            ControllerKind::Pimpc => {
                if ctx.future_t_amb.len() < n || ctx.future_irradiance.len() < n {
                    return Err(Error::Coverage(format!(
                        "perfect information needs {n} future hours at {}",
                        ctx.time
                    )));
                }
                (
                    perfect_scenarios(ctx.time, &ctx.future_t_amb[..n], &ctx.future_irradiance[..n], schedule),
                    ScenarioSource::Perfect,
                )
            }
            ControllerKind::DetMpcMod | ControllerKind::DetMpcLin => {
                (point_scenario(ctx.forecast, schedule), ScenarioSource::PointForecast)
            }
            ControllerKind::SbmpcMod | ControllerKind::SbmpcLin => {
                let marginals = match estimate_marginals(ctx.pool, ctx.forecast) {
                    Ok(m) => m,
                    Err(Error::ColdStart(why)) => {
                        log::debug!("{} at {}: {why}; using the point forecast", self.spec, ctx.time);
                        return Ok((
                            point_scenario(ctx.forecast, schedule),
                            ScenarioSource::PointForecastFallback,
                        ));
                    }
                    Err(e) => return Err(e),
                };
                let (copula, source) = match fit_copula(ctx.pool, &marginals) {
                    Ok(c) => (c, ScenarioSource::Sampled),
                    Err(Error::ColdStart(why)) => {
                        log::debug!("{} at {}: {why}; sampling leads independently", self.spec, ctx.time);
                        (CopulaModel::identity(marginals.horizon()), ScenarioSource::SampledIndependent)
                    }
                    Err(e) => return Err(e),
                };
                let seed = step_seed(self.setup.seed, ctx.step);
                (
                    sample_scenarios(&marginals, &copula, schedule, self.spec.n_scenarios, seed),
                    source,
                )
            }
        })
    }

    /// Solves over the given scenarios from the current warm start and
    /// stores the plan for the next warm start.
    pub fn decide_with(&mut self, state: BuildingState, scenarios: &ScenarioSet) -> Result<HorizonSolution> {
        let s = &self.setup;
        let problem = build_problem(&self.model, state, scenarios, &s.schedule, &s.costs, s.horizon, s.dt_hours)?;
        let warm = self
            .previous
            .as_deref()
            .map(shift_warm_start)
            .filter(|w| w.len() == s.horizon);
        let solution = solve(&problem, warm.as_deref(), &s.solver);
        self.previous = Some(solution.inputs.clone());
        Ok(solution)
    }
}

impl Policy for MpcController {
    fn label(&self) -> String {
        self.spec.label()
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Decision> {
        let (scenarios, source) = self.scenarios(ctx)?;
        let solution = self.decide_with(ctx.state, &scenarios)?;
        if solution.status != SolverStatus::Converged {
            log::debug!(
                "{} at {}: solver stopped with {} after {} iterations",
                self.spec,
                ctx.time,
                solution.status,
                solution.iterations
            );
        }
        Ok(Decision {
            input: solution.inputs[0],
            solution,
            source,
        })
    }
}
