use crate::error::{Error, Result};
use crate::mpc::SolverStatus;
use crate::plant::{BuildingState, ControlInput, DisturbanceSample};
use crate::time::HourStamp;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Identifies the run a trace belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub controller: String,
    pub alpha: f64,
    pub n_scenarios: usize,
    pub seed: u64,
    pub config_hash: String,
    pub dt_hours: f64,
}

/// One closed-loop step: the state at the start of the hour, what was applied
/// over it and what it cost.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub timestamp: HourStamp,
    pub state: BuildingState,
    pub input: ControlInput,
    pub disturbance: DisturbanceSample,
    /// Squared comfort violation of `state`, K².
    pub j_d: f64,
    /// Energy cost of `input` over the step, €.
    pub j_e: f64,
    pub solver_status: SolverStatus,
    pub solver_iters: usize,
    /// Controller's one-step prediction of the next state (first scenario).
    pub predicted_next: Option<BuildingState>,
    /// Point forecast issued at `timestamp`, lead by lead.
    pub forecast_t_amb: Vec<f64>,
    pub forecast_irradiance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub meta: TraceMeta,
    pub rows: Vec<TraceRow>,
    /// State after the last step.
    pub final_state: Option<BuildingState>,
}

pub const TRACE_HEADER: [&str; 13] = [
    "step",
    "timestamp",
    "t_zone",
    "t_wall",
    "q_heat",
    "q_cool",
    "t_amb",
    "irradiance",
    "occupancy",
    "j_d",
    "j_e",
    "solver_status",
    "solver_iters",
];

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    step: usize,
    timestamp: String,
    t_zone: f64,
    t_wall: f64,
    q_heat: f64,
    q_cool: f64,
    t_amb: f64,
    irradiance: f64,
    occupancy: f64,
    j_d: f64,
    j_e: f64,
    solver_status: String,
    solver_iters: usize,
}

impl SimulationTrace {
    pub fn new(meta: TraceMeta) -> Self {
        SimulationTrace {
            meta,
            rows: Vec::new(),
            final_state: None,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        out.write_record(TRACE_HEADER)?;
        for r in &self.rows {
            out.serialize(CsvRow {
                step: r.step,
                timestamp: r.timestamp.to_string(),
                t_zone: r.state.t_zone,
                t_wall: r.state.t_wall,
                q_heat: r.input.q_heat,
                q_cool: r.input.q_cool,
                t_amb: r.disturbance.t_amb,
                irradiance: r.disturbance.irradiance,
                occupancy: r.disturbance.occupancy,
                j_d: r.j_d,
                j_e: r.j_e,
                solver_status: r.solver_status.to_string(),
                solver_iters: r.solver_iters,
            })?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(buf)
    }

    /// Reads the CSV columns back; predictions and forecasts are not stored there.
    pub fn read_csv<R: Read>(r: R, meta: TraceMeta) -> Result<SimulationTrace> {
        let mut reader = csv::Reader::from_reader(r);
        let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
        if header != TRACE_HEADER {
            return Err(Error::Data(format!("unexpected trace header {header:?}")));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.deserialize::<CsvRow>().enumerate() {
            let row = rec?;
            let timestamp = HourStamp::parse(&row.timestamp)
                .map_err(|e| Error::Data(format!("trace row {i}: bad timestamp: {e}")))?;
            let solver_status = SolverStatus::parse(&row.solver_status)
                .ok_or_else(|| Error::Data(format!("trace row {i}: unknown status {:?}", row.solver_status)))?;
            rows.push(TraceRow {
                step: row.step,
                timestamp,
                state: BuildingState::new(row.t_zone, row.t_wall),
                input: ControlInput::new(row.q_heat, row.q_cool),
                disturbance: DisturbanceSample::new(row.t_amb, row.irradiance, row.occupancy),
                j_d: row.j_d,
                j_e: row.j_e,
                solver_status,
                solver_iters: row.solver_iters,
                predicted_next: None,
                forecast_t_amb: Vec::new(),
                forecast_irradiance: Vec::new(),
            });
        }
        Ok(SimulationTrace {
            meta,
            rows,
            final_state: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMetrics {
    /// `Σ (α·Jᵈ + Jᵉ)`.
    pub total_cost: f64,
    /// `Σ Jᵉ`, €.
    pub energy_cost: f64,
    /// Integrated comfort-band violation, K·h.
    pub discomfort_kh: f64,
}

/// Metrics from the per-step costs of `trace`. The K·h figure integrates the
/// unsquared violation `√Jᵈ` over the sampling interval.
pub fn compute_metrics(trace: &SimulationTrace, alpha: f64) -> RunMetrics {
    let dt = trace.meta.dt_hours;
    let mut m = RunMetrics::default();
    for r in &trace.rows {
        m.total_cost += alpha * r.j_d + r.j_e;
        m.energy_cost += r.j_e;
        m.discomfort_kh += r.j_d.sqrt() * dt;
    }
    m
}
