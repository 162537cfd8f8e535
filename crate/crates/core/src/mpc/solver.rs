//! Projected limited-memory BFGS for smooth box-constrained problems.
//!
//! The iteration runs in box-normalized coordinates `u ∈ [0, 1]ⁿ`
//! (`x = lower + u·(upper − lower)`), so that heating and cooling powers of
//! different magnitude are treated alike and projection is a clamp.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::fmt;

/// Smooth objective over `ℝⁿ`. Returning `+∞` marks an infeasible point; the
/// line search then backs off.
pub trait Objective {
    fn dim(&self) -> usize;
    /// Writes the gradient into `grad` and returns the value.
    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolverStatus {
    Converged,
    IterationCap,
    LineSearchFailure,
}

impl SolverStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverStatus::Converged => "converged",
            SolverStatus::IterationCap => "iteration-cap",
            SolverStatus::LineSearchFailure => "line-search-failure",
        }
    }

    pub fn parse(s: &str) -> Option<SolverStatus> {
        match s {
            "converged" => Some(SolverStatus::Converged),
            "iteration-cap" => Some(SolverStatus::IterationCap),
            "line-search-failure" => Some(SolverStatus::LineSearchFailure),
            _ => None,
        }
    }
}

impl fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Stop once the ∞-norm of the projected gradient, measured in
    /// box-normalized coordinates, falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Curvature pairs kept.
    pub memory: usize,
    /// Sufficient-decrease constant.
    pub armijo: f64,
    pub max_backtracks: usize,
    /// Largest move of any coordinate, as a fraction of its box, on a
    /// steepest-descent step.
    pub initial_step: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-4,
            max_iterations: 500,
            memory: 10,
            armijo: 1e-4,
            max_backtracks: 40,
            initial_step: 0.1,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(format!("solver tolerance must be > 0, got {}", self.tolerance));
        }
        if self.memory == 0 || self.max_backtracks == 0 {
            return Err("solver memory and max_backtracks must be ≥ 1".into());
        }
        if !(self.armijo > 0.0 && self.armijo < 0.5) {
            return Err(format!("armijo constant must lie in (0, 0.5), got {}", self.armijo));
        }
        if !(self.initial_step > 0.0 && self.initial_step <= 1.0) {
            return Err(format!("initial_step must lie in (0, 1], got {}", self.initial_step));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    /// Best iterate, always inside the box.
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: SolverStatus,
    /// Accepted steps.
    pub iterations: usize,
    /// Objective at the start and after every accepted step.
    pub history: Vec<f64>,
    /// ∞-norm of the final projected gradient in normalized coordinates.
    pub projected_gradient: f64,
}

struct Scaled<'a, O: Objective + ?Sized> {
    inner: &'a O,
    lower: &'a [f64],
    upper: &'a [f64],
    width: Vec<f64>,
    x: Vec<f64>,
    gx: Vec<f64>,
}

impl<O: Objective + ?Sized> Scaled<'_, O> {
    fn to_x(&self, u: &[f64], x: &mut [f64]) {
        for i in 0..u.len() {
            x[i] = (self.lower[i] + self.width[i] * u[i]).clamp(self.lower[i], self.upper[i]);
        }
    }

    fn eval(&mut self, u: &[f64], g: &mut [f64]) -> f64 {
        let mut x = std::mem::take(&mut self.x);
        self.to_x(u, &mut x);
        let f = self.inner.evaluate(&x, &mut self.gx);
        self.x = x;
        if f.is_finite() {
            for i in 0..g.len() {
                g[i] = self.gx[i] * self.width[i];
            }
        }
        f
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn masked_dot(a: &[f64], b: &[f64], free: &[bool]) -> f64 {
    a.iter()
        .zip(b)
        .zip(free)
        .filter(|(_, f)| **f)
        .map(|((x, y), _)| x * y)
        .sum()
}

/// `‖P(u − g) − u‖∞` on the unit box.
fn projected_gradient_norm(u: &[f64], g: &[f64]) -> f64 {
    u.iter()
        .zip(g)
        .map(|(ui, gi)| ((ui - gi).clamp(0.0, 1.0) - ui).abs())
        .fold(0.0, f64::max)
}

/// Variables that are not held at a bound by the gradient.
fn free_set(u: &[f64], g: &[f64], free: &mut [bool]) {
    for i in 0..u.len() {
        free[i] = !((u[i] <= 0.0 && g[i] > 0.0) || (u[i] >= 1.0 && g[i] < 0.0));
    }
}

/// Two-loop recursion restricted to the free variables. Returns `false` if the
/// result is not a descent direction.
fn lbfgs_direction(
    g: &[f64],
    free: &[bool],
    pairs: &VecDeque<(Vec<f64>, Vec<f64>)>,
    d: &mut [f64],
) -> bool {
    let n = g.len();
    let mut q: Vec<f64> = (0..n).map(|i| if free[i] { g[i] } else { 0.0 }).collect();
    let mut alphas = Vec::with_capacity(pairs.len());
    let mut gamma = None;
    for (s, y) in pairs.iter().rev() {
        let sy = masked_dot(s, y, free);
        let yy = masked_dot(y, y, free);
        if !(sy > 1e-12 * yy.sqrt() * masked_dot(s, s, free).sqrt() && sy > 0.0) {
            alphas.push(None);
            continue;
        }
        if gamma.is_none() {
            gamma = Some(sy / yy);
        }
        let rho = 1.0 / sy;
        let a = rho * masked_dot(s, &q, free);
        for i in 0..n {
            if free[i] {
                q[i] -= a * y[i];
            }
        }
        alphas.push(Some((a, rho)));
    }
    let Some(gamma) = gamma else {
        return false;
    };
    for v in q.iter_mut() {
        *v *= gamma;
    }
    for ((s, y), coef) in pairs.iter().zip(alphas.iter().rev()) {
        if let Some((a, rho)) = coef {
            let b = rho * masked_dot(y, &q, free);
            for i in 0..n {
                if free[i] {
                    q[i] += s[i] * (a - b);
                }
            }
        }
    }
    for i in 0..n {
        d[i] = if free[i] { -q[i] } else { 0.0 };
    }
    dot(g, d) < 0.0
}

/// Minimizes `objective` over `lower ≤ x ≤ upper` from `start` (projected onto
/// the box; the box midpoint when `None`).
///
/// Panics if the bound slices do not match the objective dimension or a lower
/// bound exceeds its upper bound.
pub fn minimize_box<O: Objective + ?Sized>(
    objective: &O,
    lower: &[f64],
    upper: &[f64],
    start: Option<&[f64]>,
    options: &SolverOptions,
) -> SolveResult {
    let n = objective.dim();
    assert!(lower.len() == n && upper.len() == n, "bound dimension mismatch");
    assert!(lower.iter().zip(upper).all(|(l, u)| l <= u), "inconsistent bounds");
    let width: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| u - l).collect();
    let mut u: Vec<f64> = match start {
        Some(x0) => {
            assert_eq!(x0.len(), n, "start dimension mismatch");
            (0..n)
                .map(|i| {
                    if width[i] > 0.0 {
                        ((x0[i] - lower[i]) / width[i]).clamp(0.0, 1.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        }
        None => vec![0.5; n],
    };
    let mut problem = Scaled {
        inner: objective,
        lower,
        upper,
        width,
        x: vec![0.0; n],
        gx: vec![0.0; n],
    };

    let mut g = vec![0.0; n];
    let mut f = problem.eval(&u, &mut g);
    if !f.is_finite() {
        // nothing to descend from
        let mut x = vec![0.0; n];
        problem.to_x(&u, &mut x);
        return SolveResult {
            x,
            objective: f,
            status: SolverStatus::LineSearchFailure,
            iterations: 0,
            history: vec![f],
            projected_gradient: f64::INFINITY,
        };
    }
    let mut history = vec![f];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::with_capacity(options.memory);
    let mut free = vec![true; n];
    let mut d = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut iterations = 0;
    let status;

    loop {
        let pg = projected_gradient_norm(&u, &g);
        if pg < options.tolerance {
            status = SolverStatus::Converged;
            break;
        }
        if iterations >= options.max_iterations {
            status = SolverStatus::IterationCap;
            break;
        }
        free_set(&u, &g, &mut free);

        let mut accepted = false;
        let mut f_new = f;
        // quasi-Newton first; if that fails drop the memory and retry along −g
        let mut quasi_newton = lbfgs_direction(&g, &free, &pairs, &mut d);
        loop {
            if !quasi_newton {
                pairs.clear();
                for i in 0..n {
                    d[i] = if free[i] { -g[i] } else { 0.0 };
                }
            }
            let d_max = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if d_max > 0.0 {
                let mut t = if quasi_newton {
                    1.0f64.min(1.0 / d_max)
                } else {
                    options.initial_step / d_max
                };
                for _ in 0..options.max_backtracks {
                    for i in 0..n {
                        trial[i] = (u[i] + t * d[i]).clamp(0.0, 1.0);
                    }
                    let decrease: f64 = (0..n).map(|i| g[i] * (trial[i] - u[i])).sum();
                    if decrease < 0.0 {
                        let f_trial = problem.eval(&trial, &mut g_trial);
                        if f_trial.is_finite() && f_trial <= f + options.armijo * decrease {
                            f_new = f_trial;
                            accepted = true;
                            break;
                        }
                    }
                    t *= 0.5;
                }
            }
            if accepted || !quasi_newton {
                break;
            }
            quasi_newton = false;
        }
        if !accepted {
            status = SolverStatus::LineSearchFailure;
            break;
        }
        let s: Vec<f64> = (0..n).map(|i| trial[i] - u[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_trial[i] - g[i]).collect();
        if dot(&s, &y) > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if pairs.len() == options.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y));
        }
        std::mem::swap(&mut u, &mut trial);
        std::mem::swap(&mut g, &mut g_trial);
        f = f_new;
        iterations += 1;
        history.push(f);
    }

    let mut x = vec![0.0; n];
    problem.to_x(&u, &mut x);
    SolveResult {
        x,
        objective: f,
        status,
        iterations,
        history,
        projected_gradient: projected_gradient_norm(&u, &g),
    }
}
