use super::trace::{SimulationTrace, TraceMeta, TraceRow};
use crate::error::{Error, Result};
use crate::mpc::{discomfort_cost, energy_cost, CostParams, DecisionContext, IdentityObserver, Observer, Policy};
use crate::plant::{self, BuildingState, DisturbanceSample, PlantParams};
use crate::scen::{ErrorPool, Forecaster, HistoryView, Variable};
use crate::schedule::ComfortSchedule;
use crate::time::HourStamp;
use crate::weather::WeatherSeries;
use std::fmt;

/// Hours of observations the forecaster needs before its first issue.
pub const FORECAST_LOOKBACK_HOURS: i64 = crate::scen::MIN_HISTORY_HOURS as i64;

/// Everything about a closed-loop run except the policy and the weather.
#[derive(Debug, Clone)]
pub struct LoopSetup {
    /// The simulated building.
    pub plant: PlantParams,
    pub schedule: ComfortSchedule,
    pub costs: CostParams,
    pub horizon: usize,
    pub dt_hours: f64,
    pub steps: usize,
    pub start: HourStamp,
    pub initial_state: BuildingState,
}

/// A run that stopped early; `partial` holds every completed step.
#[derive(Debug)]
pub struct LoopAbort {
    pub partial: SimulationTrace,
    pub error: Error,
}

impl fmt::Display for LoopAbort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "run aborted after {} steps: {}", self.partial.len(), self.error)
    }
}

impl std::error::Error for LoopAbort {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Records the errors of the forecast issued at `issue` against `weather`.
fn record_forecast(
    pool: &mut ErrorPool,
    forecaster: &dyn Forecaster,
    weather: &WeatherSeries,
    issue: HourStamp,
    horizon: usize,
) -> Result<()> {
    let forecast = forecaster.forecast(&HistoryView::before(weather, issue), issue, horizon)?;
    let realized = weather.window(issue, horizon)?;
    pool.update(&forecast, &realized.t_amb, &realized.irradiance);
    Ok(())
}

/// First hour at which `weather` supports a forecast.
pub fn first_issue(weather: &WeatherSeries) -> HourStamp {
    weather.start + FORECAST_LOOKBACK_HOURS
}

/// Replays the forecaster over every issue hour in `[first_issue, until)` and
/// records its errors. Forecasts issued at `s` need `weather` up to `s + horizon`.
pub fn warm_up_pool(
    pool: &mut ErrorPool,
    forecaster: &dyn Forecaster,
    weather: &WeatherSeries,
    until: HourStamp,
    horizon: usize,
) -> Result<()> {
    let mut issue = first_issue(weather);
    while issue < until {
        record_forecast(pool, forecaster, weather, issue, horizon)?;
        issue = issue + 1;
    }
    Ok(())
}

fn check_coverage(weather: &WeatherSeries, setup: &LoopSetup) -> Result<()> {
    if first_issue(weather) > setup.start {
        return Err(Error::Coverage(format!(
            "weather starts at {}, need {FORECAST_LOOKBACK_HOURS} hours before {}",
            weather.start, setup.start
        )));
    }
    let end = setup.start + (setup.steps + setup.horizon) as i64;
    if weather.end() < end {
        return Err(Error::Coverage(format!(
            "weather ends at {}, the last horizon needs data until {end}",
            weather.end()
        )));
    }
    Ok(())
}

/// [`run_closed_loop_observed`] with the full state measured.
pub fn run_closed_loop(
    policy: &mut dyn Policy,
    forecaster: &dyn Forecaster,
    weather: &WeatherSeries,
    setup: &LoopSetup,
    meta: TraceMeta,
) -> std::result::Result<SimulationTrace, LoopAbort> {
    run_closed_loop_observed(policy, &mut IdentityObserver, forecaster, weather, setup, meta)
}

/// Receding-horizon simulation with the plant as truth. Each step reads the
/// state, issues a point forecast from the weather observed so far, records
/// the errors of the forecast whose horizon has just been fully realized,
/// lets the policy decide, applies its first input and integrates the plant
/// over the sampling interval with the realized weather.
///
/// `weather` must start [`FORECAST_LOOKBACK_HOURS`] before `setup.start`;
/// everything before `setup.start` warms up the error pool.
pub fn run_closed_loop_observed(
    policy: &mut dyn Policy,
    observer: &mut dyn Observer,
    forecaster: &dyn Forecaster,
    weather: &WeatherSeries,
    setup: &LoopSetup,
    meta: TraceMeta,
) -> std::result::Result<SimulationTrace, LoopAbort> {
    let mut trace = SimulationTrace::new(meta);
    if setup.steps == 0 {
        return Ok(trace);
    }
    macro_rules! abort {
        ($e:expr) => {
            return Err(LoopAbort {
                partial: trace,
                error: $e,
            })
        };
    }
    if let Err(e) = check_coverage(weather, setup) {
        abort!(e);
    }
    let n = setup.horizon;
    let dt_seconds = setup.dt_hours * 3600.0;
    let mut pool = ErrorPool::new(n);
    if let Err(e) = warm_up_pool(&mut pool, forecaster, weather, setup.start - n as i64, n) {
        abort!(e);
    }

    let mut state = setup.initial_state;
    for step in 0..setup.steps {
        let time = setup.start + step as i64;
        let observed = observer.estimate(&state);
        let realized_issue = time - n as i64;
        if realized_issue >= first_issue(weather) {
            if let Err(e) = record_forecast(&mut pool, forecaster, weather, realized_issue, n) {
                abort!(e);
            }
        }
        let forecast = match forecaster.forecast(&HistoryView::before(weather, time), time, n) {
            Ok(f) => f,
            Err(e) => abort!(e),
        };
        let idx = weather.index_of(time).expect("coverage checked");
        let ctx = DecisionContext {
            step,
            time,
            state: observed,
            forecast: &forecast,
            future_t_amb: &weather.t_amb[idx..idx + n],
            future_irradiance: &weather.irradiance[idx..idx + n],
            pool: &pool,
        };
        let decision = match policy.decide(&ctx) {
            Ok(d) => d,
            Err(e) => abort!(e),
        };
        let bounds = setup.schedule.bounds(time);
        let d = DisturbanceSample::new(weather.t_amb[idx], weather.irradiance[idx], bounds.occupancy());
        let input = decision.input;
        let next = match plant::step(&state, &input, &d, dt_seconds, &setup.plant) {
            Ok(s) => s,
            Err(e) => abort!(e),
        };
        trace.rows.push(TraceRow {
            step,
            timestamp: time,
            state,
            input,
            disturbance: d,
            j_d: discomfort_cost(state.t_zone, &bounds),
            j_e: energy_cost(&input, &setup.costs, setup.dt_hours),
            solver_status: decision.solution.status,
            solver_iters: decision.solution.iterations,
            predicted_next: decision.solution.predicted.first().and_then(|s| s.get(1)).copied(),
            forecast_t_amb: forecast.values(Variable::Temperature).to_vec(),
            forecast_irradiance: forecast.values(Variable::Irradiance).to_vec(),
        });
        state = next;
    }
    trace.final_state = Some(state);
    Ok(trace)
}
