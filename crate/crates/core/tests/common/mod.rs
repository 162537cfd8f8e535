#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix2, Matrix2x3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use sbmpc::config::ExperimentConfig;
use sbmpc::ident::{fit_linear_model, generate_excitation_data, step_linear, LinearModel, TrainingRow};
use sbmpc::mpc::{
    build_problem, ControllerKind, ControllerSetup, ControllerSpec, CostParams, HorizonProblem, MpcController, Objective,
    PredictionModel, SolverOptions,
};
use sbmpc::scen::{
    CopulaModel, CopulaSource, EmpiricalQuantile, ErrorPool, Marginal, MarginalSet, PointForecast, PoolLevel,
    ScenarioSet, Variable, VariableCopula,
};
use sbmpc::schedule::ComfortSchedule;
use sbmpc::{BuildingState, ControlInput, DisturbanceSample, HourStamp, PlantParams};
use std::sync::OnceLock;

pub fn stamp(s: &str) -> HourStamp {
    HourStamp::parse(s).unwrap()
}

/// Linear model identified once per test binary on default-plant excitation data.
pub fn linear_model() -> &'static LinearModel {
    static MODEL: OnceLock<LinearModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let data = generate_excitation_data(&PlantParams::default(), 30, 0).unwrap();
        fit_linear_model(&data).unwrap().model
    })
}

/// Owned pieces of one horizon problem.
pub struct Instance {
    pub model: PredictionModel,
    pub x0: BuildingState,
    pub scenarios: ScenarioSet,
    pub schedule: ComfortSchedule,
    pub costs: CostParams,
    pub horizon: usize,
    pub q: Vec<f64>,
}

impl Instance {
    pub fn problem(&self) -> HorizonProblem<'_> {
        build_problem(
            &self.model,
            self.x0,
            &self.scenarios,
            &self.schedule,
            &self.costs,
            self.horizon,
            1.0,
        )
        .unwrap()
    }
}

/// Random small instance around the comfort band: `N ≤ max_n`, `M ≤ max_m`,
/// either model.
pub fn random_instance(rng: &mut ChaCha8Rng, max_n: usize, max_m: usize) -> Instance {
    let horizon = rng.random_range(1..=max_n);
    let m = rng.random_range(1..=max_m);
    let model = if rng.random::<bool>() {
        PredictionModel::Nonlinear(PlantParams::default())
    } else {
        PredictionModel::Linear(linear_model().clone())
    };
    let schedule = ComfortSchedule::default();
    let issue = stamp("2017-02-06T00:00:00") + rng.random_range(0..24 * 7);
    let scenarios = ScenarioSet {
        issue,
        scenarios: (0..m)
            .map(|_| {
                (0..horizon)
                    .map(|k| {
                        DisturbanceSample::new(
                            rng.random_range(-10.0..12.0),
                            rng.random_range(0.0..400.0),
                            schedule.occupancy(issue + k as i64),
                        )
                    })
                    .collect()
            })
            .collect(),
        seed: None,
    };
    let costs = CostParams {
        alpha: rng.random_range(1.0..1000.0),
        ..CostParams::default()
    };
    let q = (0..horizon)
        .flat_map(|_| [rng.random_range(0.0..costs.q_heat_max), rng.random_range(0.0..costs.q_cool_max)])
        .collect();
    Instance {
        model,
        x0: BuildingState::new(rng.random_range(16.0..27.0), rng.random_range(14.0..24.0)),
        scenarios,
        schedule,
        costs,
        horizon,
        q,
    }
}

/// `‖∇f − ∇f_fd‖∞ / ‖∇f_fd‖∞` with central differences of step `h`.
pub fn gradient_relative_error(problem: &HorizonProblem<'_>, q: &[f64], h: f64) -> f64 {
    let mut grad = vec![0.0; q.len()];
    problem.value_and_gradient(q, &mut grad).unwrap();
    let mut scratch = vec![0.0; q.len()];
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..q.len() {
        let mut plus = q.to_vec();
        let mut minus = q.to_vec();
        plus[i] += h;
        minus[i] -= h;
        let fd = (problem.value_and_gradient(&plus, &mut scratch).unwrap()
            - problem.value_and_gradient(&minus, &mut scratch).unwrap())
            / (2.0 * h);
        worst = worst.max((grad[i] - fd).abs());
        scale = scale.max(fd.abs());
    }
    worst / scale
}

/// `½ (x − c)ᵀ H (x − c)` with `H` positive definite.
pub struct Quadratic {
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let r = DVector::from_column_slice(x) - &self.c;
        let g = &self.h * &r;
        grad.copy_from_slice(g.as_slice());
        0.5 * r.dot(&g)
    }
}

/// A box QP built backwards from a chosen solution: each coordinate is
/// free, at its lower bound or at its upper bound, with multipliers of the
/// right sign so the KKT conditions single out `solution`.
pub struct BoxQp {
    pub objective: Quadratic,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub solution: Vec<f64>,
    pub active: Vec<u8>,
}

pub fn box_qp(rng: &mut ChaCha8Rng, n: usize) -> BoxQp {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = a.transpose() * &a + DMatrix::identity(n, n) * 0.5;
    let lower: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..0.0)).collect();
    let upper: Vec<f64> = lower.iter().map(|l| l + rng.random_range(0.5..5.0)).collect();
    let active: Vec<u8> = (0..n).map(|_| rng.random_range(0..3u8)).collect();
    let mut solution = vec![0.0; n];
    let mut g = DVector::zeros(n);
    for i in 0..n {
        match active[i] {
            0 => solution[i] = lower[i] + (upper[i] - lower[i]) * rng.random_range(0.1..0.9),
            1 => {
                solution[i] = lower[i];
                g[i] = rng.random_range(0.1..2.0);
            }
            _ => {
                solution[i] = upper[i];
                g[i] = -rng.random_range(0.1..2.0);
            }
        }
    }
    let c = DVector::from_column_slice(&solution) - h.clone().try_inverse().unwrap() * g;
    BoxQp {
        objective: Quadratic { h, c },
        lower,
        upper,
        solution,
        active,
    }
}

/// Pool holding `days` of exactly-zero errors for forecasts issued at every hour.
pub fn zero_error_pool(horizon: usize, until: HourStamp, days: i64) -> ErrorPool {
    let mut pool = ErrorPool::new(horizon);
    let zeros = vec![0.0; horizon];
    let mut issue = until - days * 24;
    while issue < until {
        let f = PointForecast {
            issue,
            t_amb: zeros.clone(),
            irradiance: zeros.clone(),
        };
        pool.update(&f, &zeros, &zeros);
        issue = issue + 1;
    }
    pool
}

/// Short closed-loop experiment with the default plant.
pub fn small_config(steps: usize, alphas: &[f64], controllers: &[&str], seeds: &[u64]) -> ExperimentConfig {
    ExperimentConfig {
        steps,
        alphas: alphas.to_vec(),
        controllers: controllers.iter().map(|s| s.to_string()).collect(),
        seeds: seeds.to_vec(),
        scenario_counts: vec![20],
        write_traces: false,
        ..ExperimentConfig::default()
    }
}

/// Distribution of `forecast + Q(U)`, `U` uniform, with `Q` the piecewise
/// linear interpolation of the order statistics at `i / (n + 1)`. Returns the
/// CDF and its left limit at `x`.
pub fn target_cdf(sorted: &[f64], forecast: f64, x: f64) -> (f64, f64) {
    let n = sorted.len();
    let step = 1.0 / (n + 1) as f64;
    let e = x - forecast;
    let at = |e: f64| -> f64 {
        if e < sorted[0] {
            return 0.0;
        }
        if e >= sorted[n - 1] {
            return 1.0;
        }
        let mut i = 0;
        while sorted[i + 1] <= e {
            i += 1;
        }
        (i + 1) as f64 * step + (e - sorted[i]) / (sorted[i + 1] - sorted[i]) * step
    };
    let left = if e == sorted[0] {
        0.0
    } else if e == sorted[n - 1] {
        n as f64 * step
    } else {
        at(e)
    };
    (at(e), left)
}

pub fn ks_distance(mut samples: Vec<f64>, cdf: impl Fn(f64) -> (f64, f64)) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = samples.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < samples.len() {
        let x = samples[i];
        let mut j = i;
        while j < samples.len() && samples[j] == x {
            j += 1;
        }
        let (f, f_left) = cdf(x);
        d = d.max((j as f64 / m - f).abs()).max((i as f64 / m - f_left).abs());
        i = j;
    }
    d
}

pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|a, b| v[*a].partial_cmp(&v[*b]).unwrap());
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&ranks(a), &ranks(b))
}

pub fn skewness(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let s2 = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    v.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n / s2.powf(1.5)
}

/// Hand-built marginals: skewed, lead-dependent error samples.
pub fn skewed_marginals(issue: HourStamp, n: usize, samples: usize, seed: u64) -> MarginalSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let exp = Exp::new(1.0).unwrap();
    let mut lead = |scale: f64, forecast: f64, sign: f64| {
        let e: Vec<f64> = (0..samples).map(|_| sign * scale * (exp.sample(&mut rng) - 1.0)).collect();
        Marginal {
            forecast,
            errors: EmpiricalQuantile::new(e),
            level: PoolLevel::Cell,
        }
    };
    MarginalSet {
        issue,
        t_amb: (0..n).map(|k| lead(0.5 + 0.1 * k as f64, -2.0 + 0.2 * k as f64, 1.0)).collect(),
        irradiance: (0..n).map(|k| lead(20.0 + k as f64, 300.0, -1.0)).collect(),
    }
}

pub fn ar_copula(n: usize, rho: f64) -> CopulaModel {
    let raw = nalgebra::DMatrix::from_fn(n, n, |i, j| rho.powi((i as i32 - j as i32).abs()));
    let c = VariableCopula::from_correlation(raw, 0, CopulaSource::AllIssueHours);
    CopulaModel {
        t_amb: c.clone(),
        irradiance: c,
    }
}

pub fn column(set: &sbmpc::scen::ScenarioSet, var: Variable, k: usize) -> Vec<f64> {
    set.scenarios
        .iter()
        .map(|s| match var {
            Variable::Temperature => s[k].t_amb,
            Variable::Irradiance => s[k].irradiance,
        })
        .collect()
}

pub fn known_model() -> LinearModel {
    LinearModel {
        a: Matrix2::new(0.93, 0.05, 0.004, 0.992),
        b1: Matrix2::new(7.2e-6, -7.2e-6, 4.0e-8, -4.0e-8),
        b2: Matrix2x3::new(0.02, 9.0e-5, 0.055, 0.004, 2.5e-5, 1.0e-4),
    }
}

/// Rows generated by `m` itself from random inputs and disturbances.
pub fn exact_rows(m: &LinearModel, n: usize, seed: u64) -> Vec<TrainingRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = BuildingState::new(20.0, 18.0);
    (0..n)
        .map(|_| {
            let input = ControlInput::new(rng.random_range(0.0..5e5), rng.random_range(0.0..3e5));
            let d = DisturbanceSample::new(
                rng.random_range(-10.0..15.0),
                rng.random_range(0.0..500.0),
                if rng.random::<bool>() { 1.0 } else { 0.0 },
            );
            let next = step_linear(m, &state, &input, &d);
            let row = TrainingRow {
                state,
                input,
                disturbance: d,
                next,
            };
            state = if next.is_sane() { next } else { BuildingState::new(20.0, 18.0) };
            row
        })
        .collect()
}

pub fn frobenius(a: &LinearModel, b: &LinearModel) -> f64 {
    ((a.a - b.a).norm_squared() + (a.b1 - b.b1).norm_squared() + (a.b2 - b.b2).norm_squared()).sqrt()
}

pub fn controller(kind: ControllerKind, m: usize, alpha: f64) -> MpcController {
    MpcController::new(
        ControllerSpec::new(kind, m),
        ControllerSetup {
            plant: PlantParams::default(),
            linear: Some(linear_model().clone()),
            costs: CostParams::default().with_alpha(alpha),
            schedule: ComfortSchedule::default(),
            horizon: 24,
            dt_hours: 1.0,
            solver: SolverOptions::default(),
            seed: 3,
        },
    )
    .unwrap()
}

pub fn winter_forecast(issue: sbmpc::HourStamp) -> PointForecast {
    PointForecast {
        issue,
        t_amb: (0..24).map(|k| -3.0 + 4.0 * ((k as f64 - 9.0) / 24.0 * 6.283).cos()).collect(),
        irradiance: (0..24).map(|k| if (8..17).contains(&((issue + k).hour_of_day())) { 150.0 } else { 0.0 }).collect(),
    }
}
