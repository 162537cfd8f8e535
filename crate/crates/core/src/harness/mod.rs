//! Closed-loop simulation, metrics, parameter sweeps and reports.

mod report;
mod run;
mod sweep;
mod trace;

pub use report::{pivot, plot_csv, render_report, PivotTable};
pub use run::{
    first_issue, run_closed_loop, run_closed_loop_observed, warm_up_pool, LoopAbort, LoopSetup,
    FORECAST_LOOKBACK_HOURS,
};
pub use sweep::{
    experiment_weather, identify, load_metrics, loop_setup, prepare_inputs, read_metrics_csv, run_cell,
    split_weather, sweep, sweep_cells, trace_file_name, write_metrics_csv, write_sweep_outputs, CellFailure,
    Manifest, MetricsRow, SweepCell, SweepInputs, SweepOutcome, METRICS_HEADER,
};
pub use trace::{compute_metrics, RunMetrics, SimulationTrace, TraceMeta, TraceRow, TRACE_HEADER};
