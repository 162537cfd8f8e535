//! Stage costs, horizon problems and the receding-horizon controllers.
//!
//! Each horizon problem keeps one input sequence shared by all disturbance
//! scenarios, eliminates the states by single shooting through the chosen
//! prediction model and is solved as a box-constrained smooth program.

mod controller;
mod cost;
mod problem;
mod solver;

pub use controller::{
    shift_warm_start, solve, step_seed, ControllerKind, ControllerSetup, ControllerSpec, Decision,
    DecisionContext, HorizonSolution, IdentityObserver, MpcController, Observer, Policy, ScenarioSource,
};
pub use cost::{discomfort_cost, discomfort_slope, energy_cost, violation, CostParams};
pub use problem::{build_problem, pack_inputs, unpack_inputs, HorizonProblem, PredictionModel};
pub use solver::{minimize_box, Objective, SolveResult, SolverOptions, SolverStatus};
