use super::{ErrorPool, PointForecast, Variable};
use crate::error::{Error, Result};
use crate::time::HourStamp;
use serde::{Deserialize, Serialize};

/// Minimum cell size before falling back to pooled errors.
pub const MIN_CELL_SAMPLES: usize = 10;

/// Empirical distribution of a sorted sample with order statistic `i` (1-based)
/// placed at probability `i / (n + 1)`. Linear in between, constant outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalQuantile {
    sorted: Vec<f64>,
}

impl EmpiricalQuantile {
    /// Panics on an empty sample or NaN values.
    pub fn new(mut sample: Vec<f64>) -> Self {
        assert!(!sample.is_empty(), "empirical quantile of an empty sample");
        sample.sort_by(|a, b| a.partial_cmp(b).expect("NaN in error sample"));
        EmpiricalQuantile { sorted: sample }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.sorted.len();
        let pos = p * (n + 1) as f64;
        if !(pos > 1.0) {
            return self.sorted[0];
        }
        if pos >= n as f64 {
            return self.sorted[n - 1];
        }
        let lo = pos.floor() as usize;
        let frac = pos - lo as f64;
        let (a, b) = (self.sorted[lo - 1], self.sorted[lo]);
        if frac == 0.0 {
            a
        } else {
            a + frac * (b - a)
        }
    }

    /// Inverse of [`quantile`](Self::quantile), always inside `[1/(n+1), n/(n+1)]`.
    /// Tied values map to the mean of their plotting positions.
    pub fn cdf(&self, x: f64) -> f64 {
        let n = self.sorted.len();
        let below = self.sorted.partition_point(|v| *v < x);
        let at_or_below = self.sorted.partition_point(|v| *v <= x);
        let pos = if at_or_below > below {
            (below + 1 + at_or_below) as f64 / 2.0
        } else if below == 0 {
            1.0
        } else if below == n {
            n as f64
        } else {
            let (a, b) = (self.sorted[below - 1], self.sorted[below]);
            below as f64 + (x - a) / (b - a)
        };
        pos.clamp(1.0, n as f64) / (n + 1) as f64
    }
}

/// Where a lead's error sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoolLevel {
    /// The (lead, hour-of-day) cell itself.
    Cell,
    /// All leads targeting the same hour of day.
    Hour,
    /// Every error of the variable.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub forecast: f64,
    pub errors: EmpiricalQuantile,
    pub level: PoolLevel,
}

impl Marginal {
    pub fn quantile(&self, p: f64) -> f64 {
        self.forecast + self.errors.quantile(p)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.errors.cdf(x - self.forecast)
    }
}

/// Per-variable, per-lead marginal distributions anchored at one forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSet {
    pub issue: HourStamp,
    pub t_amb: Vec<Marginal>,
    pub irradiance: Vec<Marginal>,
}

impl MarginalSet {
    pub fn horizon(&self) -> usize {
        self.t_amb.len()
    }

    pub fn variable(&self, var: Variable) -> &[Marginal] {
        match var {
            Variable::Temperature => &self.t_amb,
            Variable::Irradiance => &self.irradiance,
        }
    }
}

fn marginal_for(
    pool: &ErrorPool,
    var: Variable,
    lead: usize,
    hour: usize,
    forecast: f64,
) -> Result<Marginal> {
    let cell = pool.cell(var, lead, hour);
    let (sample, level) = if cell.len() >= MIN_CELL_SAMPLES {
        (cell.iter().map(|(_, e)| *e).collect::<Vec<_>>(), PoolLevel::Cell)
    } else {
        let by_hour: Vec<f64> = pool
            .cells(var)
            .filter(|(_, h, _)| *h == hour)
            .flat_map(|(_, _, c)| c.iter().map(|(_, e)| *e))
            .collect();
        if by_hour.len() >= MIN_CELL_SAMPLES {
            (by_hour, PoolLevel::Hour)
        } else {
            let all: Vec<f64> = pool
                .cells(var)
                .flat_map(|(_, _, c)| c.iter().map(|(_, e)| *e))
                .collect();
            (all, PoolLevel::Global)
        }
    };
    if sample.is_empty() {
        return Err(Error::ColdStart(format!("no {} forecast errors recorded", var.name())));
    }
    Ok(Marginal {
        forecast,
        errors: EmpiricalQuantile::new(sample),
        level,
    })
}

/// Marginal of lead `k` = point forecast + empirical errors of cell
/// (k, hour of day of the target), with pooled fallbacks for thin cells.
pub fn estimate_marginals(pool: &ErrorPool, forecast: &PointForecast) -> Result<MarginalSet> {
    let n = forecast.horizon();
    if n > pool.horizon() {
        return Err(Error::InvalidParameter(format!(
            "forecast horizon {n} exceeds pool horizon {}",
            pool.horizon()
        )));
    }
    let build = |var: Variable| -> Result<Vec<Marginal>> {
        let values = forecast.values(var);
        (0..n)
            .map(|k| marginal_for(pool, var, k, forecast.target(k).hour_of_day(), values[k]))
            .collect()
    };
    Ok(MarginalSet {
        issue: forecast.issue,
        t_amb: build(Variable::Temperature)?,
        irradiance: build(Variable::Irradiance)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_point_sample() {
        let q = EmpiricalQuantile::new(vec![1.0, -1.0, 0.0]);
        assert_eq!(q.quantile(0.5), 0.0);
        assert_eq!(q.quantile(0.0), -1.0);
        assert_eq!(q.quantile(1.0), 1.0);
        assert_eq!(q.quantile(0.25), -1.0);
        assert_eq!(q.quantile(0.375), -0.5);
        assert_eq!(q.cdf(0.0), 0.5);
        assert_eq!(q.cdf(-5.0), 0.25);
        assert_eq!(q.cdf(5.0), 0.75);
    }

    #[test]
    fn zero_errors_collapse_to_forecast() {
        let m = Marginal {
            forecast: 7.5,
            errors: EmpiricalQuantile::new(vec![0.0; 12]),
            level: PoolLevel::Cell,
        };
        for p in [0.0, 0.01, 0.5, 0.99, 1.0] {
            assert_eq!(m.quantile(p), 7.5);
        }
    }

    #[test]
    fn quantile_inverts_cdf_on_support() {
        let q = EmpiricalQuantile::new(vec![-2.0, -0.3, 0.1, 0.4, 1.7, 3.0]);
        for x in [-2.0, -1.0, -0.3, 0.0, 0.25, 1.7, 2.9, 3.0] {
            assert!((q.quantile(q.cdf(x)) - x).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn empty_pool_is_cold_start() {
        let pool = ErrorPool::new(4);
        let f = PointForecast {
            issue: HourStamp(0),
            t_amb: vec![0.0; 4],
            irradiance: vec![0.0; 4],
        };
        assert!(matches!(estimate_marginals(&pool, &f), Err(Error::ColdStart(_))));
    }

    #[test]
    fn thin_cells_fall_back() {
        let mut pool = ErrorPool::new(2);
        // eight days of forecasts issued at hour 0: cell (0, 0) and (1, 1) get 8 each
        for day in 0..8 {
            let f = PointForecast {
                issue: HourStamp(day * 24),
                t_amb: vec![0.0; 2],
                irradiance: vec![0.0; 2],
            };
            pool.update(&f, &[1.0, 2.0], &[0.0, 0.0]);
        }
        let f = PointForecast {
            issue: HourStamp(8 * 24),
            t_amb: vec![0.0; 2],
            irradiance: vec![0.0; 2],
        };
        let m = estimate_marginals(&pool, &f).unwrap();
        // 8 < 10 in the cell and in the hour pool -> global (16 samples)
        assert_eq!(m.t_amb[0].level, PoolLevel::Global);
        assert_eq!(m.t_amb[0].errors.len(), 16);
        for day in 8..12 {
            let f = PointForecast {
                issue: HourStamp(day * 24),
                t_amb: vec![0.0; 2],
                irradiance: vec![0.0; 2],
            };
            pool.update(&f, &[1.0, 2.0], &[0.0, 0.0]);
        }
        let m = estimate_marginals(&pool, &f).unwrap();
        assert_eq!(m.t_amb[0].level, PoolLevel::Cell);
        assert_eq!(m.t_amb[1].errors.quantile(0.5), 2.0);
    }
}
