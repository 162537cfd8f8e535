//! Linear surrogate `x⁺ = A·x + B1·u + B2·d` identified by least squares.

use crate::error::{Error, Result};
use crate::plant::{self, BuildingState, ControlInput, DisturbanceSample, PlantParams};
use crate::schedule::ComfortSchedule;
use crate::time::HourStamp;
use crate::weather::{generate_weather, WeatherParams};
use nalgebra::{DMatrix, Matrix2, Matrix2x3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

const REGRESSORS: usize = 7;
/// Condition number above which the fit switches to the ridge fallback.
pub const CONDITION_LIMIT: f64 = 1e10;
pub const RIDGE_LAMBDA: f64 = 1e-6;
/// Relative singular value below which the regressors count as rank deficient.
const RANK_TOLERANCE: f64 = 1e-14;

/// One-step linear model at the sampling time it was fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: Matrix2<f64>,
    pub b1: Matrix2<f64>,
    pub b2: Matrix2x3<f64>,
}

impl LinearModel {
    pub fn spectral_radius(&self) -> f64 {
        let tr = self.a.trace();
        let det = self.a.determinant();
        let disc = tr * tr / 4.0 - det;
        if disc >= 0.0 {
            let s = disc.sqrt();
            (tr / 2.0 + s).abs().max((tr / 2.0 - s).abs())
        } else {
            det.abs().sqrt()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().chain(self.b1.iter()).chain(self.b2.iter()).all(|v| v.is_finite())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&LinearModelFile::from(self))?;
        crate::io::write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<LinearModel> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: LinearModel = serde_json::from_str::<LinearModelFile>(&text)?.try_into()?;
        Ok(model)
    }
}

/// On-disk layout: row-major number lists under `a`, `b1`, `b2`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearModelFile {
    pub a: Vec<f64>,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
}

fn row_major<const R: usize, const C: usize>(
    m: &nalgebra::SMatrix<f64, R, C>,
) -> Vec<f64> {
    (0..R).flat_map(|i| (0..C).map(move |j| m[(i, j)])).collect()
}

impl From<&LinearModel> for LinearModelFile {
    fn from(m: &LinearModel) -> Self {
        LinearModelFile {
            a: row_major(&m.a),
            b1: row_major(&m.b1),
            b2: row_major(&m.b2),
        }
    }
}

impl TryFrom<LinearModelFile> for LinearModel {
    type Error = Error;
    fn try_from(f: LinearModelFile) -> Result<Self> {
        if f.a.len() != 4 || f.b1.len() != 4 || f.b2.len() != 6 {
            return Err(Error::Data(format!(
                "linear model needs 4/4/6 entries in a/b1/b2, got {}/{}/{}",
                f.a.len(),
                f.b1.len(),
                f.b2.len()
            )));
        }
        let m = LinearModel {
            a: Matrix2::from_row_slice(&f.a),
            b1: Matrix2::from_row_slice(&f.b1),
            b2: Matrix2x3::from_row_slice(&f.b2),
        };
        if !m.is_finite() {
            return Err(Error::Data("linear model has non-finite entries".into()));
        }
        Ok(m)
    }
}

pub fn disturbance_vector(d: &DisturbanceSample) -> Vector3<f64> {
    Vector3::new(d.t_amb, d.irradiance, d.occupancy)
}

/// `A·x + B1·u + B2·d`, no saturation.
pub fn step_linear(
    m: &LinearModel,
    state: &BuildingState,
    input: &ControlInput,
    d: &DisturbanceSample,
) -> BuildingState {
    let x = m.a * state.to_vector()
        + m.b1 * Vector2::new(input.q_heat, input.q_cool)
        + m.b2 * disturbance_vector(d);
    BuildingState::from_vector(&x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub state: BuildingState,
    pub input: ControlInput,
    pub disturbance: DisturbanceSample,
    pub next: BuildingState,
}

impl TrainingRow {
    fn regressors(&self) -> [f64; REGRESSORS] {
        [
            self.state.t_zone,
            self.state.t_wall,
            self.input.q_heat,
            self.input.q_cool,
            self.disturbance.t_amb,
            self.disturbance.irradiance,
            self.disturbance.occupancy,
        ]
    }
}

/// Consecutive one-step transitions at a fixed sampling time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    rows: Vec<TrainingRow>,
}

impl TrainingSet {
    pub fn new(rows: Vec<TrainingRow>) -> Result<Self> {
        if rows.len() < REGRESSORS {
            return Err(Error::Identifiability(format!(
                "need at least {REGRESSORS} rows, got {}",
                rows.len()
            )));
        }
        Ok(TrainingSet { rows })
    }

    pub fn rows(&self) -> &[TrainingRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub model: LinearModel,
    /// One-step mean absolute error of (zone, wall), °C.
    pub mae: [f64; 2],
    /// Condition number of the column-equilibrated regressor matrix.
    pub condition: f64,
    /// Set when the ridge fallback was used.
    pub ridge_lambda: Option<f64>,
    pub warnings: Vec<String>,
}

impl FitReport {
    pub fn is_stable(&self) -> bool {
        self.model.spectral_radius() < 1.0
    }
}

/// Least squares over both state components via column-equilibrated
/// Householder QR. Ill-conditioned (but not rank-deficient) regressors fall back
/// to ridge regression with [`RIDGE_LAMBDA`].
pub fn fit_linear_model(data: &TrainingSet) -> Result<FitReport> {
    let n = data.len();
    let mut phi = DMatrix::<f64>::zeros(n, REGRESSORS);
    let mut y = DMatrix::<f64>::zeros(n, 2);
    for (i, row) in data.rows.iter().enumerate() {
        for (j, v) in row.regressors().into_iter().enumerate() {
            phi[(i, j)] = v;
        }
        y[(i, 0)] = row.next.t_zone;
        y[(i, 1)] = row.next.t_wall;
    }
    if phi.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Identifiability("non-finite training data".into()));
    }

    let scales: Vec<f64> = (0..REGRESSORS).map(|j| phi.column(j).norm()).collect();
    if let Some(j) = scales.iter().position(|s| *s == 0.0) {
        return Err(Error::Identifiability(format!("regressor column {j} is identically zero")));
    }
    for j in 0..REGRESSORS {
        phi.column_mut(j).scale_mut(1.0 / scales[j]);
    }

    let sv = phi.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > RANK_TOLERANCE * smax) {
        return Err(Error::Identifiability(format!(
            "regressor matrix is rank deficient (singular values {smax:e} .. {smin:e})"
        )));
    }
    let condition = smax / smin;

    let mut warnings = Vec::new();
    let ridge_lambda = (condition > CONDITION_LIMIT).then_some(RIDGE_LAMBDA);
    let (lhs, rhs) = match ridge_lambda {
        None => (phi, y),
        Some(lambda) => {
            warnings.push(format!(
                "condition number {condition:e} exceeds {CONDITION_LIMIT:e}; ridge lambda {lambda:e} applied"
            ));
            let mut lhs = DMatrix::<f64>::zeros(n + REGRESSORS, REGRESSORS);
            lhs.rows_mut(0, n).copy_from(&phi);
            for j in 0..REGRESSORS {
                lhs[(n + j, j)] = lambda.sqrt();
            }
            let mut rhs = DMatrix::<f64>::zeros(n + REGRESSORS, 2);
            rhs.rows_mut(0, n).copy_from(&y);
            (lhs, rhs)
        }
    };
    let qr = lhs.qr();
    let theta = qr
        .r()
        .solve_upper_triangular(&(qr.q().transpose() * rhs))
        .ok_or_else(|| Error::Identifiability("singular triangular factor".into()))?;

    // theta is REGRESSORS x 2 in equilibrated units
    let coef = |out: usize, j: usize| theta[(j, out)] / scales[j];
    let model = LinearModel {
        a: Matrix2::from_fn(|i, j| coef(i, j)),
        b1: Matrix2::from_fn(|i, j| coef(i, 2 + j)),
        b2: Matrix2x3::from_fn(|i, j| coef(i, 4 + j)),
    };
    if !model.is_finite() {
        return Err(Error::Identifiability("fit produced non-finite coefficients".into()));
    }
    let rho = model.spectral_radius();
    if rho >= 1.0 {
        warnings.push(format!("estimated state matrix is not stable (spectral radius {rho})"));
    }
    let mae = one_step_mae(&model, data);
    Ok(FitReport {
        model,
        mae,
        condition,
        ridge_lambda,
        warnings,
    })
}

/// Mean absolute one-step residual of `model` on `data`, per state component.
pub fn one_step_mae(model: &LinearModel, data: &TrainingSet) -> [f64; 2] {
    let mut acc = [0.0; 2];
    for row in data.rows() {
        let pred = step_linear(model, &row.state, &row.input, &row.disturbance);
        acc[0] += (pred.t_zone - row.next.t_zone).abs();
        acc[1] += (pred.t_wall - row.next.t_wall).abs();
    }
    let n = data.len() as f64;
    [acc[0] / n, acc[1] / n]
}

/// Setup of the open-loop excitation experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationSetup {
    pub start: HourStamp,
    pub dt: f64,
    pub q_heat_max: f64,
    pub q_cool_max: f64,
    pub initial: BuildingState,
    pub weather: WeatherParams,
    pub schedule: ComfortSchedule,
}

impl Default for ExcitationSetup {
    fn default() -> Self {
        ExcitationSetup {
            start: HourStamp::parse("2017-01-01T00:00:00").expect("valid literal"),
            dt: 3600.0,
            q_heat_max: 500_000.0,
            q_cool_max: 300_000.0,
            initial: BuildingState::new(20.0, 18.0),
            weather: WeatherParams::default(),
            schedule: ComfortSchedule::default(),
        }
    }
}

/// Simulates the nonlinear plant for `days` days under inputs drawn uniformly
/// from the input boxes (redrawn every sample) and synthetic weather.
pub fn generate_excitation_data(plant: &PlantParams, days: usize, seed: u64) -> Result<TrainingSet> {
    generate_excitation_data_with(plant, days, seed, &ExcitationSetup::default())
}

pub fn generate_excitation_data_with(
    plant: &PlantParams,
    days: usize,
    seed: u64,
    setup: &ExcitationSetup,
) -> Result<TrainingSet> {
    if days < 2 {
        return Err(Error::InvalidParameter("excitation needs at least 2 days".into()));
    }
    plant.validate()?;
    let weather = generate_weather(setup.start, days, &setup.weather, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x1DE7);

    let samples = weather.len();
    let mut rows = Vec::with_capacity(samples - 1);
    let mut state = setup.initial;
    for i in 0..samples - 1 {
        let stamp = weather.stamp(i);
        let input = ControlInput::new(
            rng.random::<f64>() * setup.q_heat_max,
            rng.random::<f64>() * setup.q_cool_max,
        );
        let d = DisturbanceSample::new(
            weather.t_amb[i],
            weather.irradiance[i],
            setup.schedule.occupancy(stamp),
        );
        let next = plant::step(&state, &input, &d, setup.dt, plant)?;
        rows.push(TrainingRow {
            state,
            input,
            disturbance: d,
            next,
        });
        state = next;
    }
    TrainingSet::new(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_rows(n: usize) -> Vec<TrainingRow> {
        let s = BuildingState::new(20.0, 20.0);
        vec![
            TrainingRow {
                state: s,
                input: ControlInput::default(),
                disturbance: DisturbanceSample::default(),
                next: s,
            };
            n
        ]
    }

    #[test]
    fn constant_data_is_not_identifiable() {
        let set = TrainingSet::new(constant_rows(20)).unwrap();
        assert!(matches!(fit_linear_model(&set), Err(Error::Identifiability(_))));
    }

    #[test]
    fn too_few_rows() {
        assert!(matches!(TrainingSet::new(constant_rows(6)), Err(Error::Identifiability(_))));
    }

    #[test]
    fn step_linear_trivial_cases() {
        let zero = LinearModel {
            a: Matrix2::zeros(),
            b1: Matrix2::zeros(),
            b2: Matrix2x3::zeros(),
        };
        let out = step_linear(
            &zero,
            &BuildingState::new(0.0, 0.0),
            &ControlInput::default(),
            &DisturbanceSample::default(),
        );
        assert_eq!(out, BuildingState::new(0.0, 0.0));
        let identity = LinearModel {
            a: Matrix2::identity(),
            ..zero
        };
        let s = BuildingState::new(21.3, -4.0);
        let out = step_linear(
            &identity,
            &s,
            &ControlInput::new(1e5, 2e4),
            &DisturbanceSample::new(3.0, 100.0, 1.0),
        );
        assert_eq!(out, s);
    }

    #[test]
    fn excitation_row_count_and_determinism() {
        let p = PlantParams::default();
        let a = generate_excitation_data(&p, 2, 9).unwrap();
        assert_eq!(a.len(), 47);
        let b = generate_excitation_data(&p, 2, 9).unwrap();
        assert_eq!(a, b);
        let setup = ExcitationSetup::default();
        for row in a.rows() {
            assert!((0.0..=setup.q_heat_max).contains(&row.input.q_heat));
            assert!((0.0..=setup.q_cool_max).contains(&row.input.q_cool));
        }
        assert!(generate_excitation_data(&p, 1, 9).is_err());
    }

    #[test]
    fn spectral_radius_of_rotation_and_diagonal() {
        let m = LinearModel {
            a: Matrix2::new(0.0, -0.5, 0.5, 0.0),
            b1: Matrix2::zeros(),
            b2: Matrix2x3::zeros(),
        };
        assert!((m.spectral_radius() - 0.5).abs() < 1e-15);
        let m = LinearModel {
            a: Matrix2::new(0.9, 0.0, 0.0, -1.1),
            ..m
        };
        assert!((m.spectral_radius() - 1.1).abs() < 1e-15);
    }

    #[test]
    fn model_file_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let m = LinearModel {
            a: Matrix2::new(0.9, 0.05, 0.01, 0.99),
            b1: Matrix2::new(7e-6, -7e-6, 0.0, 0.0),
            b2: Matrix2x3::new(0.04, 1e-4, 0.2, 0.01, 3e-4, 0.0),
        };
        m.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"a\"") && text.contains("\"b1\"") && text.contains("\"b2\""));
        assert_eq!(LinearModel::load(&path).unwrap(), m);
        std::fs::write(&path, r#"{"a":[1,2,3],"b1":[0,0,0,0],"b2":[0,0,0,0,0,0]}"#).unwrap();
        assert!(matches!(LinearModel::load(&path), Err(Error::Data(_))));
    }
}
