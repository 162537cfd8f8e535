//! Experiment configuration (TOML).

use crate::error::{Error, Result};
use crate::mpc::{ControllerSpec, CostParams, SolverOptions};
use crate::plant::{BuildingState, PlantParams};
use crate::schedule::ComfortSchedule;
use crate::time::HourStamp;
use crate::weather::WeatherParams;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Optional input files and the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Realized weather from `start` on. Generated per seed when absent.
    pub weather: Option<PathBuf>,
    /// Weather before `start`, used to warm up the forecast-error pool.
    pub history: Option<PathBuf>,
    /// Identified linear model. Identified on the fly when absent.
    pub linear_model: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            weather: None,
            history: None,
            linear_model: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// First controlled hour, `YYYY-MM-DDTHH:MM:SS`.
    pub start: String,
    pub steps: usize,
    pub horizon: usize,
    pub dt_hours: f64,
    /// Days of weather replayed before `start` to fill the error pool.
    pub history_days: usize,
    /// Days of excitation data for identifying the linear model.
    pub ident_days: usize,
    pub ident_seed: u64,
    pub alphas: Vec<f64>,
    pub scenario_counts: Vec<usize>,
    /// `PIMPC`, `DetMPC-Mod`, `DetMPC-Lin`, `SBMPC-Mod`, `SBMPC-Lin`; the
    /// scenario-based names expand over `scenario_counts` unless suffixed
    /// with a count (`SBMPC-Mod-20`).
    pub controllers: Vec<String>,
    pub seeds: Vec<u64>,
    pub initial_state: BuildingState,
    /// Worker threads for sweeps; all cores when absent.
    pub workers: Option<usize>,
    pub write_traces: bool,
    pub plant: PlantParams,
    pub costs: CostParams,
    pub schedule: ComfortSchedule,
    pub weather: WeatherParams,
    pub solver: SolverOptions,
    pub paths: PathsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            start: "2017-02-01T00:00:00".into(),
            steps: 720,
            horizon: 24,
            dt_hours: 1.0,
            history_days: 60,
            ident_days: 30,
            ident_seed: 0,
            alphas: vec![50.0, 100.0, 200.0, 500.0],
            scenario_counts: vec![10, 20, 30, 40],
            controllers: ["PIMPC", "DetMPC-Mod", "DetMPC-Lin", "SBMPC-Mod", "SBMPC-Lin"]
                .map(String::from)
                .to_vec(),
            seeds: vec![0],
            initial_state: BuildingState::new(21.0, 20.0),
            workers: None,
            write_traces: true,
            plant: PlantParams::default(),
            costs: CostParams::default(),
            schedule: ComfortSchedule::default(),
            weather: WeatherParams::default(),
            solver: SolverOptions::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable as TOML")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        crate::io::sha256_hex(self.to_toml().as_bytes())
    }

    pub fn start_stamp(&self) -> Result<HourStamp> {
        HourStamp::parse(&self.start).map_err(|e| Error::Config(format!("start {:?}: {e}", self.start)))
    }

    pub fn controller_specs(&self) -> Result<Vec<ControllerSpec>> {
        let mut out = Vec::new();
        for name in &self.controllers {
            for spec in ControllerSpec::expand(name, &self.scenario_counts)? {
                if !out.contains(&spec) {
                    out.push(spec);
                }
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let start = self.start_stamp()?;
        if start.datetime().format("%M:%S").to_string() != "00:00" {
            return bad(format!("start must be on the hour, got {}", self.start));
        }
        if self.horizon == 0 {
            return bad("horizon must be ≥ 1".into());
        }
        if (self.history_days as i64) * 24 < crate::scen::MIN_HISTORY_HOURS as i64 {
            return bad(format!(
                "history_days must cover the forecaster's {} h look-back",
                crate::scen::MIN_HISTORY_HOURS
            ));
        }
        if self.ident_days < 2 {
            return bad("ident_days must be ≥ 2".into());
        }
        if self.dt_hours != 1.0 {
            return bad(format!("only hourly sampling is supported, got dt_hours = {}", self.dt_hours));
        }
        if self.alphas.is_empty() || self.seeds.is_empty() || self.controllers.is_empty() {
            return bad("alphas, seeds and controllers must be non-empty".into());
        }
        for a in &self.alphas {
            self.costs
                .with_alpha(*a)
                .validate()
                .or_else(|e| bad(format!("costs: {e}")))?;
        }
        self.costs.validate().or_else(|e| bad(format!("costs: {e}")))?;
        if self.scenario_counts.contains(&0) {
            return bad("scenario counts must be ≥ 1".into());
        }
        let specs = self.controller_specs()?;
        if specs.is_empty() {
            return bad("no controllers selected (empty scenario_counts?)".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be ≥ 1".into());
        }
        if !self.initial_state.is_sane() {
            return bad(format!("initial_state {:?} outside the sanity envelope", self.initial_state));
        }
        self.plant.validate().map_err(|e| Error::Config(format!("plant: {e}")))?;
        self.weather.validate().map_err(|e| Error::Config(format!("weather: {e}")))?;
        self.schedule.validate().or_else(|e| bad(format!("schedule: {e}")))?;
        self.solver.validate().or_else(|e| bad(format!("solver: {e}")))?;
        if self.paths.history.is_some() && self.paths.weather.is_none() {
            return bad("paths.history requires paths.weather".into());
        }
        for p in [&self.paths.weather, &self.paths.history, &self.paths.linear_model]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                return bad(format!("{}: file not found", p.display()));
            }
        }
        Ok(())
    }
}
