mod common;

use common::small_config;
use sbmpc::config::ExperimentConfig;
use sbmpc::harness::{
    compute_metrics, loop_setup, prepare_inputs, run_cell, run_closed_loop, sweep, sweep_cells, write_sweep_outputs,
    SimulationTrace, SweepCell, TraceMeta,
};
use sbmpc::mpc::{ControllerSpec, Decision, DecisionContext, HorizonSolution, Policy, ScenarioSource, SolverStatus};
use sbmpc::scen::SeasonalPersistence;
use sbmpc::weather::WeatherParams;
use sbmpc::{ControlInput, Error};

fn cell(cfg: &ExperimentConfig, label: &str, alpha: f64, seed: u64) -> SweepCell {
    let spec = ControllerSpec::expand(label, &cfg.scenario_counts).unwrap()[0];
    SweepCell { spec, alpha, seed }
}

fn run(cfg: &ExperimentConfig, label: &str, alpha: f64, seed: u64) -> SimulationTrace {
    let inputs = prepare_inputs(cfg).unwrap();
    run_cell(cfg, &inputs, &cell(cfg, label, alpha, seed)).unwrap()
}

fn meta(label: &str) -> TraceMeta {
    TraceMeta {
        controller: label.into(),
        alpha: 100.0,
        n_scenarios: 1,
        seed: 0,
        config_hash: String::new(),
        dt_hours: 1.0,
    }
}

#[test]
fn perfect_information_predicts_the_next_state_exactly() {
    let cfg = small_config(24, &[100.0], &["PIMPC"], &[4]);
    let trace = run(&cfg, "PIMPC", 100.0, 4);
    assert_eq!(trace.len(), 24);
    let mut next_states: Vec<_> = trace.rows.iter().skip(1).map(|r| r.state).collect();
    next_states.push(trace.final_state.unwrap());
    for (r, next) in trace.rows.iter().zip(&next_states) {
        let p = r.predicted_next.unwrap();
        assert!((p.t_zone - next.t_zone).abs() < 1e-6, "step {}", r.step);
        assert!((p.t_wall - next.t_wall).abs() < 1e-6, "step {}", r.step);
    }
}

#[test]
fn zero_steps_give_an_empty_trace() {
    let cfg = small_config(0, &[100.0], &["SBMPC-Mod"], &[0]);
    let trace = run(&cfg, "SBMPC-Mod", 100.0, 0);
    assert!(trace.is_empty());
    let m = compute_metrics(&trace, 100.0);
    assert_eq!((m.total_cost, m.energy_cost, m.discomfort_kh), (0.0, 0.0, 0.0));
}

#[test]
fn same_configuration_same_trace() {
    let cfg = small_config(12, &[100.0], &["SBMPC-Mod"], &[9]);
    let a = run(&cfg, "SBMPC-Mod", 100.0, 9);
    let b = run(&cfg, "SBMPC-Mod", 100.0, 9);
    assert_eq!(a, b);
    assert_eq!(a.to_csv_bytes().unwrap(), b.to_csv_bytes().unwrap());
}

#[test]
fn metrics_recomputed_from_the_csv_agree() {
    let cfg = small_config(24, &[200.0], &["DetMPC-Mod"], &[2]);
    let trace = run(&cfg, "DetMPC-Mod", 200.0, 2);
    let bytes = trace.to_csv_bytes().unwrap();
    let back = SimulationTrace::read_csv(&bytes[..], trace.meta.clone()).unwrap();
    let (m, n) = (compute_metrics(&trace, 200.0), compute_metrics(&back, 200.0));
    assert!((m.total_cost - n.total_cost).abs() < 1e-9);
    assert!((m.energy_cost - n.energy_cost).abs() < 1e-9);
    assert!((m.discomfort_kh - n.discomfort_kh).abs() < 1e-9);
}

#[test]
fn trace_rows_are_consistent() {
    let cfg = small_config(30, &[50.0], &["SBMPC-Lin"], &[1]);
    let trace = run(&cfg, "SBMPC-Lin", 50.0, 1);
    let start = cfg.start_stamp().unwrap();
    assert_eq!(trace.len(), 30);
    for (k, r) in trace.rows.iter().enumerate() {
        assert_eq!(r.step, k);
        assert_eq!(r.timestamp, start + k as i64);
        assert!((0.0..=cfg.costs.q_heat_max).contains(&r.input.q_heat));
        assert!((0.0..=cfg.costs.q_cool_max).contains(&r.input.q_cool));
        assert!(r.j_d >= 0.0 && r.j_e >= 0.0);
        assert_eq!(r.forecast_t_amb.len(), cfg.horizon);
        assert_eq!(r.forecast_irradiance.len(), cfg.horizon);
        assert!(r.state.is_sane());
    }
}

/// Holds the heating off for `calm` steps, then demands absurd power.
struct Runaway {
    calm: usize,
}

impl Policy for Runaway {
    fn label(&self) -> String {
        "runaway".into()
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> sbmpc::Result<Decision> {
        let q = if ctx.step < self.calm { 0.0 } else { 1e300 };
        Ok(Decision {
            input: ControlInput::new(q, 0.0),
            solution: HorizonSolution {
                inputs: vec![ControlInput::new(q, 0.0)],
                predicted: Vec::new(),
                objective: 0.0,
                n_scenarios: 1,
                status: SolverStatus::Converged,
                iterations: 0,
            },
            source: ScenarioSource::PointForecast,
        })
    }
}

#[test]
fn plant_blowup_aborts_with_the_completed_steps() {
    let cfg = small_config(10, &[100.0], &["PIMPC"], &[0]);
    let inputs = prepare_inputs(&cfg).unwrap();
    let setup = loop_setup(&cfg, 100.0).unwrap();
    let abort = run_closed_loop(
        &mut Runaway { calm: 3 },
        &SeasonalPersistence,
        &inputs.weather[&0],
        &setup,
        meta("runaway"),
    )
    .unwrap_err();
    assert!(matches!(abort.error, Error::IntegrationBlowup { .. }), "{:?}", abort.error);
    assert_eq!(abort.partial.len(), 3);
    assert!(abort.partial.rows.iter().all(|r| r.input.q_heat == 0.0));
}

#[test]
fn short_weather_is_a_coverage_error() {
    let cfg = small_config(10, &[100.0], &["PIMPC"], &[0]);
    let inputs = prepare_inputs(&cfg).unwrap();
    let setup = loop_setup(&cfg, 100.0).unwrap();
    let w = &inputs.weather[&0];
    let short = w.window(w.start, w.len() - 30).unwrap();
    let abort =
        run_closed_loop(&mut Runaway { calm: 100 }, &SeasonalPersistence, &short, &setup, meta("x")).unwrap_err();
    assert!(matches!(abort.error, Error::Coverage(_)));
    assert!(abort.partial.is_empty());
}

#[test]
fn periodic_noise_free_weather_makes_scenarios_redundant() {
    let mut cfg = small_config(36, &[100.0], &["DetMPC-Mod", "SBMPC-Mod"], &[5]);
    cfg.weather = WeatherParams {
        noise_sigma: 0.0,
        cloud_step_sigma: 0.0,
        seasonal_amplitude: 0.0,
        ..WeatherParams::default()
    };
    let inputs = prepare_inputs(&cfg).unwrap();
    let det = run_cell(&cfg, &inputs, &cell(&cfg, "DetMPC-Mod", 100.0, 5)).unwrap();
    let sb = run_cell(&cfg, &inputs, &cell(&cfg, "SBMPC-Mod", 100.0, 5)).unwrap();
    assert!(det.rows.iter().any(|r| r.input.q_heat > 0.0));
    for (a, b) in det.rows.iter().zip(&sb.rows) {
        assert!((a.input.q_heat - b.input.q_heat).abs() <= 1e-6, "step {}", a.step);
        assert!((a.input.q_cool - b.input.q_cool).abs() <= 1e-6, "step {}", a.step);
    }
    assert_eq!(det.len(), sb.len());
}

#[test]
fn single_cell_sweep_writes_one_reproducible_row() {
    let cfg = small_config(6, &[50.0], &["PIMPC"], &[11]);
    let write = || {
        let inputs = prepare_inputs(&cfg).unwrap();
        let outcome = sweep(&cfg, &inputs, Some(1)).unwrap();
        assert_eq!(outcome.rows.len(), 1);
        assert!(outcome.failures.is_empty());
        let dir = tempfile::tempdir().unwrap();
        let path = write_sweep_outputs(dir.path(), &cfg, &inputs, &outcome).unwrap();
        assert!(dir.path().join("manifest.json").exists());
        std::fs::read(path).unwrap()
    };
    let a = write();
    assert_eq!(a, write());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 2);
}

#[test]
fn sweep_rows_follow_cell_order_and_share_weather_per_seed() {
    let cfg = small_config(4, &[50.0, 500.0], &["PIMPC", "DetMPC-Mod"], &[1, 2]);
    let inputs = prepare_inputs(&cfg).unwrap();
    let serial = sweep(&cfg, &inputs, Some(1)).unwrap();
    let parallel = sweep(&cfg, &inputs, Some(3)).unwrap();
    let cells = sweep_cells(&cfg).unwrap();
    assert_eq!(serial.rows.len(), cells.len());
    for (row, c) in serial.rows.iter().zip(&cells) {
        assert_eq!((row.controller.as_str(), row.alpha, row.seed), (c.spec.label().as_str(), c.alpha, c.seed));
    }
    assert_eq!(serial.rows, parallel.rows);

    // every cell of a seed simulates the same weather
    for (t, c) in serial.traces.iter().zip(&cells) {
        let w = &inputs.weather[&c.seed];
        let i = w.index_of(t.rows[0].timestamp).unwrap();
        for (k, r) in t.rows.iter().enumerate() {
            assert_eq!(r.disturbance.t_amb, w.t_amb[i + k]);
            assert_eq!(r.disturbance.irradiance, w.irradiance[i + k]);
        }
    }
    let hashes = inputs.weather_hashes().unwrap();
    assert_ne!(hashes[&1], hashes[&2]);
    assert_eq!(hashes, prepare_inputs(&cfg).unwrap().weather_hashes().unwrap());
}
