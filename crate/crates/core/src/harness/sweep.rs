use super::run::{run_closed_loop, LoopSetup, FORECAST_LOOKBACK_HOURS};
use super::trace::{compute_metrics, RunMetrics, SimulationTrace, TraceMeta};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::ident::{fit_linear_model, generate_excitation_data_with, ExcitationSetup, FitReport, LinearModel};
use crate::io::{sha256_hex, write_atomic};
use crate::mpc::{ControllerSetup, ControllerSpec, MpcController};
use crate::scen::SeasonalPersistence;
use crate::weather::{generate_weather, WeatherSeries};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

pub const METRICS_HEADER: [&str; 7] = [
    "controller",
    "alpha",
    "n_scenarios",
    "seed",
    "total_cost",
    "energy_cost",
    "discomfort_kh",
];

/// One row of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub controller: String,
    pub alpha: f64,
    pub n_scenarios: usize,
    pub seed: u64,
    pub total_cost: f64,
    pub energy_cost: f64,
    pub discomfort_kh: f64,
}

impl MetricsRow {
    pub fn metrics(&self) -> RunMetrics {
        RunMetrics {
            total_cost: self.total_cost,
            energy_cost: self.energy_cost,
            discomfort_kh: self.discomfort_kh,
        }
    }
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(METRICS_HEADER)?;
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_metrics_csv<R: Read>(r: R) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_reader(r);
    let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    if header != METRICS_HEADER {
        return Err(Error::Data(format!("unexpected metrics header {header:?}")));
    }
    reader.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn load_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_metrics_csv(f).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Weather and models shared by every cell of a sweep.
#[derive(Debug, Clone)]
pub struct SweepInputs {
    /// Realized weather per seed, starting with the warm-up history.
    pub weather: BTreeMap<u64, WeatherSeries>,
    pub linear: Option<LinearModel>,
}

impl SweepInputs {
    /// SHA-256 of the weather CSV of each seed.
    pub fn weather_hashes(&self) -> Result<BTreeMap<u64, String>> {
        self.weather
            .iter()
            .map(|(seed, w)| {
                let mut buf = Vec::new();
                w.write_csv(&mut buf)?;
                Ok((*seed, sha256_hex(&buf)))
            })
            .collect()
    }
}

/// Warm-up history followed by the control period and one horizon of
/// look-ahead, generated with `seed`.
pub fn experiment_weather(cfg: &ExperimentConfig, seed: u64) -> Result<WeatherSeries> {
    let start = cfg.start_stamp()?;
    let history_hours = cfg.history_days as i64 * 24;
    let hours = history_hours as usize + cfg.steps + cfg.horizon;
    generate_weather(start - history_hours, hours.div_ceil(24), &cfg.weather, seed)
}

/// Splits an experiment series at `start`: (history, control period + look-ahead).
pub fn split_weather(cfg: &ExperimentConfig, series: &WeatherSeries) -> Result<(WeatherSeries, WeatherSeries)> {
    let start = cfg.start_stamp()?;
    let history = series.window(series.start, (start - series.start).max(0) as usize)?;
    let realized = series.window(start, cfg.steps + cfg.horizon)?;
    Ok((history, realized))
}

fn load_weather(cfg: &ExperimentConfig) -> Result<Option<WeatherSeries>> {
    let Some(path) = &cfg.paths.weather else {
        return Ok(None);
    };
    let realized = WeatherSeries::load(path)?;
    let series = match &cfg.paths.history {
        Some(h) => WeatherSeries::load(h)?.concat(&realized)?,
        None => realized,
    };
    Ok(Some(series))
}

/// Identifies the linear model on excitation data from the configured plant.
pub fn identify(cfg: &ExperimentConfig) -> Result<FitReport> {
    let setup = ExcitationSetup {
        start: cfg.start_stamp()? - cfg.ident_days as i64 * 24,
        dt: cfg.dt_hours * 3600.0,
        q_heat_max: cfg.costs.q_heat_max,
        q_cool_max: cfg.costs.q_cool_max,
        initial: cfg.initial_state,
        weather: cfg.weather.clone(),
        schedule: cfg.schedule.clone(),
    };
    let data = generate_excitation_data_with(&cfg.plant, cfg.ident_days, cfg.ident_seed, &setup)?;
    fit_linear_model(&data)
}

/// Loads or generates the weather of every seed and, if any linear controller
/// is selected, loads or identifies the linear model.
pub fn prepare_inputs(cfg: &ExperimentConfig) -> Result<SweepInputs> {
    let loaded = load_weather(cfg)?;
    let mut weather = BTreeMap::new();
    for seed in &cfg.seeds {
        let w = match &loaded {
            Some(w) => w.clone(),
            None => experiment_weather(cfg, *seed)?,
        };
        weather.insert(*seed, w);
    }
    let needs_linear = cfg.controller_specs()?.iter().any(|s| s.kind.uses_linear_model());
    let linear = match (&cfg.paths.linear_model, needs_linear) {
        (Some(p), _) => Some(LinearModel::load(p)?),
        (None, true) => {
            let report = identify(cfg)?;
            for w in &report.warnings {
                log::warn!("identification: {w}");
            }
            Some(report.model)
        }
        (None, false) => None,
    };
    Ok(SweepInputs { weather, linear })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub spec: ControllerSpec,
    pub alpha: f64,
    pub seed: u64,
}

/// Cells in output order: controller, then α, then seed.
pub fn sweep_cells(cfg: &ExperimentConfig) -> Result<Vec<SweepCell>> {
    let mut cells = Vec::new();
    for spec in cfg.controller_specs()? {
        for alpha in &cfg.alphas {
            for seed in &cfg.seeds {
                cells.push(SweepCell {
                    spec,
                    alpha: *alpha,
                    seed: *seed,
                });
            }
        }
    }
    Ok(cells)
}

pub fn loop_setup(cfg: &ExperimentConfig, alpha: f64) -> Result<LoopSetup> {
    Ok(LoopSetup {
        plant: cfg.plant.clone(),
        schedule: cfg.schedule.clone(),
        costs: cfg.costs.with_alpha(alpha),
        horizon: cfg.horizon,
        dt_hours: cfg.dt_hours,
        steps: cfg.steps,
        start: cfg.start_stamp()?,
        initial_state: cfg.initial_state,
    })
}

/// Runs one closed loop.
pub fn run_cell(cfg: &ExperimentConfig, inputs: &SweepInputs, cell: &SweepCell) -> Result<SimulationTrace> {
    let weather = inputs
        .weather
        .get(&cell.seed)
        .ok_or_else(|| Error::Data(format!("no weather for seed {}", cell.seed)))?;
    let setup = loop_setup(cfg, cell.alpha)?;
    let mut controller = MpcController::new(
        cell.spec,
        ControllerSetup {
            plant: cfg.plant.clone(),
            linear: inputs.linear.clone(),
            costs: setup.costs.clone(),
            schedule: cfg.schedule.clone(),
            horizon: cfg.horizon,
            dt_hours: cfg.dt_hours,
            solver: cfg.solver.clone(),
            seed: cell.seed,
        },
    )?;
    let meta = TraceMeta {
        controller: cell.spec.label(),
        alpha: cell.alpha,
        n_scenarios: cell.spec.n_scenarios,
        seed: cell.seed,
        config_hash: cfg.hash(),
        dt_hours: cfg.dt_hours,
    };
    run_closed_loop(&mut controller, &SeasonalPersistence, weather, &setup, meta).map_err(|abort| {
        log::warn!("{}", abort);
        abort.error
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub controller: String,
    pub alpha: f64,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<MetricsRow>,
    pub failures: Vec<CellFailure>,
    /// Traces of the successful cells, in row order.
    pub traces: Vec<SimulationTrace>,
}

/// Runs every (controller, α, seed) cell, in parallel on `workers` threads
/// (all cores when `None`). Failed cells are reported, not fatal. Output order
/// is the cell order regardless of scheduling.
pub fn sweep(cfg: &ExperimentConfig, inputs: &SweepInputs, workers: Option<usize>) -> Result<SweepOutcome> {
    let cells = sweep_cells(cfg)?;
    let run = || -> Vec<(SweepCell, Result<SimulationTrace>)> {
        cells
            .par_iter()
            .map(|cell| (*cell, run_cell(cfg, inputs, cell)))
            .collect()
    };
    let results = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    let mut outcome = SweepOutcome {
        rows: Vec::new(),
        failures: Vec::new(),
        traces: Vec::new(),
    };
    for (cell, result) in results {
        match result {
            Ok(trace) => {
                let m = compute_metrics(&trace, cell.alpha);
                outcome.rows.push(MetricsRow {
                    controller: cell.spec.label(),
                    alpha: cell.alpha,
                    n_scenarios: cell.spec.n_scenarios,
                    seed: cell.seed,
                    total_cost: m.total_cost,
                    energy_cost: m.energy_cost,
                    discomfort_kh: m.discomfort_kh,
                });
                outcome.traces.push(trace);
            }
            Err(e) => outcome.failures.push(CellFailure {
                controller: cell.spec.label(),
                alpha: cell.alpha,
                seed: cell.seed,
                error: e.to_string(),
            }),
        }
    }
    Ok(outcome)
}

/// File name of a cell's trace inside the `traces/` directory.
pub fn trace_file_name(controller: &str, alpha: f64, seed: u64) -> String {
    format!("{controller}_alpha{alpha}_seed{seed}.csv")
}

/// Reproduction record of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub package_version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub weather_sha256: BTreeMap<u64, String>,
    pub linear_model_sha256: Option<String>,
    pub cells: usize,
    pub failures: Vec<CellFailure>,
    pub forecast_lookback_hours: i64,
}

/// Writes `metrics.csv`, `manifest.json` and (if enabled) `traces/*.csv` into
/// `out_dir`, each atomically. Returns the metrics path.
pub fn write_sweep_outputs(
    out_dir: &Path,
    cfg: &ExperimentConfig,
    inputs: &SweepInputs,
    outcome: &SweepOutcome,
) -> Result<PathBuf> {
    let mut metrics = Vec::new();
    write_metrics_csv(&outcome.rows, &mut metrics)?;
    let metrics_path = out_dir.join("metrics.csv");
    write_atomic(&metrics_path, &metrics)?;
    if cfg.write_traces {
        for t in &outcome.traces {
            let name = trace_file_name(&t.meta.controller, t.meta.alpha, t.meta.seed);
            write_atomic(&out_dir.join("traces").join(name), &t.to_csv_bytes()?)?;
        }
    }
    let linear_model_sha256 = match &inputs.linear {
        Some(m) => Some(sha256_hex(&serde_json::to_vec(&crate::ident::LinearModelFile::from(m))?)),
        None => None,
    };
    let manifest = Manifest {
        package_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.hash(),
        config: cfg.clone(),
        seeds: cfg.seeds.clone(),
        weather_sha256: inputs.weather_hashes()?,
        linear_model_sha256,
        cells: outcome.rows.len() + outcome.failures.len(),
        failures: outcome.failures.clone(),
        forecast_lookback_hours: FORECAST_LOOKBACK_HOURS,
    };
    write_atomic(&out_dir.join("manifest.json"), &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(metrics_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_csv_round_trip() {
        let rows = vec![MetricsRow {
            controller: "SBMPC-Mod-10".into(),
            alpha: 50.0,
            n_scenarios: 10,
            seed: 3,
            total_cost: 1234.5678,
            energy_cost: 1000.0 / 3.0,
            discomfort_kh: 0.0,
        }];
        let mut buf = Vec::new();
        write_metrics_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("controller,alpha,n_scenarios,seed,total_cost,energy_cost,discomfort_kh\n"));
        assert_eq!(read_metrics_csv(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn cell_enumeration() {
        let cfg = ExperimentConfig {
            controllers: vec!["PIMPC".into(), "SBMPC-Mod".into()],
            alphas: vec![50.0, 100.0],
            scenario_counts: vec![10, 20],
            seeds: vec![1, 2],
            ..ExperimentConfig::default()
        };
        let cells = sweep_cells(&cfg).unwrap();
        assert_eq!(cells.len(), 3 * 2 * 2);
        assert_eq!(cells[0].spec.label(), "PIMPC");
        assert_eq!(cells[4].spec.label(), "SBMPC-Mod-10");
        assert_eq!(cells[4].seed, 1);
    }

    #[test]
    fn experiment_weather_spans_history_and_horizon() {
        let cfg = ExperimentConfig {
            steps: 30,
            history_days: 3,
            ..ExperimentConfig::default()
        };
        let w = experiment_weather(&cfg, 0).unwrap();
        let start = cfg.start_stamp().unwrap();
        assert_eq!(w.start, start - 72);
        assert!(w.end() >= start + 30 + 24);
        let (h, r) = split_weather(&cfg, &w).unwrap();
        assert_eq!(h.len(), 72);
        assert_eq!(r.len(), 54);
        assert_eq!(r.start, start);
    }
}
