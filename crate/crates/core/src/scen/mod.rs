//! Disturbance scenarios for the horizon problems.
//!
//! A scenario set is built in four stages: a point forecast, per-lead marginal
//! distributions (point forecast plus the empirical distribution of past errors
//! made at the same lead and hour of day over the last 60 days), a Gaussian
//! copula over the horizon estimated from probit-transformed past error
//! vectors, and sampling through the inverse transforms.

mod copula;
mod forecast;
mod marginal;
mod pool;

pub use copula::{fit_copula, CopulaModel, CopulaSource, VariableCopula};
pub use forecast::{Forecaster, HistoryView, PointForecast, SeasonalPersistence, MIN_HISTORY_HOURS};
pub use marginal::{
    estimate_marginals, EmpiricalQuantile, Marginal, MarginalSet, PoolLevel, MIN_CELL_SAMPLES,
};
pub use pool::{ErrorPool, HorizonErrors, RETENTION_DAYS};

use crate::error::Result;
use crate::plant::DisturbanceSample;
use crate::schedule::ComfortSchedule;
use crate::time::HourStamp;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::io::Write;

/// Forecast disturbance channels. Occupancy follows the schedule and is never sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variable {
    Temperature,
    Irradiance,
}

impl Variable {
    pub const ALL: [Variable; 2] = [Variable::Temperature, Variable::Irradiance];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Variable::Temperature => "t_amb",
            Variable::Irradiance => "irradiance",
        }
    }

    /// Physical floor applied to forecasts and samples.
    pub fn clip(self, v: f64) -> f64 {
        match self {
            Variable::Temperature => v,
            Variable::Irradiance => v.max(0.0),
        }
    }
}

/// `M × N` disturbance trajectories; the first lead is the interval starting at `issue`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub issue: HourStamp,
    pub scenarios: Vec<Vec<DisturbanceSample>>,
    pub seed: Option<u64>,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.scenarios.first().map_or(0, Vec::len)
    }

    /// Builds the single scenario given by per-variable trajectories.
    pub fn single(
        issue: HourStamp,
        t_amb: &[f64],
        irradiance: &[f64],
        schedule: &ComfortSchedule,
    ) -> ScenarioSet {
        let row = t_amb
            .iter()
            .zip(irradiance)
            .enumerate()
            .map(|(k, (t, i))| DisturbanceSample::new(*t, *i, schedule.occupancy(issue + k as i64)))
            .collect();
        ScenarioSet {
            issue,
            scenarios: vec![row],
            seed: None,
        }
    }

    /// Rows `lead,scenario_id,variable,value` with 1-based leads.
    pub fn write_fan_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["lead", "scenario_id", "variable", "value"])?;
        for (i, scenario) in self.scenarios.iter().enumerate() {
            for (k, d) in scenario.iter().enumerate() {
                for (name, v) in [("t_amb", d.t_amb), ("irradiance", d.irradiance), ("occupancy", d.occupancy)] {
                    out.write_record([(k + 1).to_string(), i.to_string(), name.to_string(), v.to_string()])?;
                }
            }
        }
        out.flush().map_err(|e| crate::Error::io("<csv>", e))?;
        Ok(())
    }
}

/// The realized future as the only scenario (perfect information).
pub fn perfect_scenarios(
    issue: HourStamp,
    t_amb: &[f64],
    irradiance: &[f64],
    schedule: &ComfortSchedule,
) -> ScenarioSet {
    ScenarioSet::single(issue, t_amb, irradiance, schedule)
}

/// The point forecast as the only scenario.
pub fn point_scenario(forecast: &PointForecast, schedule: &ComfortSchedule) -> ScenarioSet {
    ScenarioSet::single(
        forecast.issue,
        forecast.values(Variable::Temperature),
        forecast.values(Variable::Irradiance),
        schedule,
    )
}

fn scenario_rng(seed: u64, var: Variable, scenario: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((var.index() as u64) << 32) | scenario as u64);
    rng
}

/// Draws `m` scenarios: `z = L·ξ` with `ξ` standard normal, `u = Φ(z)`,
/// value = point forecast + error quantile at `u`.
pub fn sample_scenarios(
    marginals: &MarginalSet,
    copula: &CopulaModel,
    schedule: &ComfortSchedule,
    m: usize,
    seed: u64,
) -> ScenarioSet {
    let n = marginals.horizon();
    let normal = Normal::standard();
    let mut values = [vec![vec![0.0; n]; m], vec![vec![0.0; n]; m]];
    let mut xi = nalgebra::DVector::<f64>::zeros(n);
    for var in Variable::ALL {
        let factor = &copula.variable(var).factor;
        let leads = marginals.variable(var);
        for (i, row) in values[var.index()].iter_mut().enumerate() {
            let mut rng = scenario_rng(seed, var, i);
            for x in xi.iter_mut() {
                *x = StandardNormal.sample(&mut rng);
            }
            let z = factor * &xi;
            for (k, out) in row.iter_mut().enumerate() {
                let u = normal.cdf(z[k]);
                *out = var.clip(leads[k].forecast + leads[k].errors.quantile(u));
            }
        }
    }
    let [t_amb, irradiance] = values;
    let occupancy: Vec<f64> = (0..n).map(|k| schedule.occupancy(marginals.issue + k as i64)).collect();
    let scenarios = t_amb
        .iter()
        .zip(&irradiance)
        .map(|(t, irr)| {
            (0..n)
                .map(|k| DisturbanceSample::new(t[k], irr[k], occupancy[k]))
                .collect()
        })
        .collect();
    ScenarioSet {
        issue: marginals.issue,
        scenarios,
        seed: Some(seed),
    }
}
