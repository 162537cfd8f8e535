//! Scenario-based nonlinear model predictive control for building heating.
//!
//! - [`plant`]: nonlinear zone/wall building model and its RK4 discretization
//! - [`ident`]: least-squares identification of a linear surrogate
//! - [`weather`]: synthetic hourly weather
//! - [`scen`]: point forecasts, empirical error quantiles and Gaussian-copula scenarios
//! - [`mpc`]: stage costs, single-shooting horizon problems, projected L-BFGS solver, controllers
//! - [`harness`]: receding-horizon closed loop, metrics and parameter sweeps

pub mod config;
pub mod error;
pub mod harness;
pub mod ident;
pub mod io;
pub mod mpc;
pub mod plant;
pub mod scen;
pub mod schedule;
pub mod time;
pub mod weather;

pub use error::{Error, Result};
pub use plant::{BuildingState, ControlInput, DisturbanceSample, PlantParams};
pub use time::HourStamp;
