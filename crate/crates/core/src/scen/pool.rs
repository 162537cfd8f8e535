use super::{PointForecast, Variable};
use crate::time::HourStamp;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Days of error history retained.
pub const RETENTION_DAYS: i64 = 60;

/// Errors of one issued forecast over its whole horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonErrors {
    pub issue: HourStamp,
    pub t_amb: Vec<f64>,
    pub irradiance: Vec<f64>,
}

impl HorizonErrors {
    pub fn values(&self, var: Variable) -> &[f64] {
        match var {
            Variable::Temperature => &self.t_amb,
            Variable::Irradiance => &self.irradiance,
        }
    }
}

/// Past forecast errors (realized − forecast) indexed by lead and by hour of day
/// of the forecast target, each cell ordered by target day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPool {
    horizon: usize,
    /// `cells[var][lead * 24 + hour]`
    cells: [Vec<VecDeque<(i64, f64)>>; 2],
    horizons: VecDeque<HorizonErrors>,
    newest_target_day: Option<i64>,
    newest_issue_day: Option<i64>,
}

impl ErrorPool {
    pub fn new(horizon: usize) -> Self {
        let empty = || vec![VecDeque::new(); horizon * 24];
        ErrorPool {
            horizon,
            cells: [empty(), empty()],
            horizons: VecDeque::new(),
            newest_target_day: None,
            newest_issue_day: None,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Errors at 0-based `lead` whose target falls at `hour` of day.
    pub fn cell(&self, var: Variable, lead: usize, hour: usize) -> &VecDeque<(i64, f64)> {
        &self.cells[var.index()][lead * 24 + hour]
    }

    pub fn cells(&self, var: Variable) -> impl Iterator<Item = (usize, usize, &VecDeque<(i64, f64)>)> {
        self.cells[var.index()]
            .iter()
            .enumerate()
            .map(|(i, c)| (i / 24, i % 24, c))
    }

    pub fn horizons(&self) -> &VecDeque<HorizonErrors> {
        &self.horizons
    }

    pub fn len(&self, var: Variable) -> usize {
        self.cells[var.index()].iter().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        Variable::ALL.iter().all(|v| self.len(*v) == 0)
    }

    /// Records the errors of `forecast` against the realized values of its
    /// horizon, then evicts everything older than [`RETENTION_DAYS`].
    ///
    /// Panics if `realized` does not cover the forecast horizon.
    pub fn update(&mut self, forecast: &PointForecast, realized_t_amb: &[f64], realized_irradiance: &[f64]) {
        let n = forecast.horizon().min(self.horizon);
        assert!(
            realized_t_amb.len() >= n && realized_irradiance.len() >= n,
            "realization shorter than the forecast horizon"
        );
        let errors = |var: Variable, realized: &[f64]| -> Vec<f64> {
            let f = forecast.values(var);
            (0..n).map(|k| realized[k] - f[k]).collect()
        };
        let record = HorizonErrors {
            issue: forecast.issue,
            t_amb: errors(Variable::Temperature, realized_t_amb),
            irradiance: errors(Variable::Irradiance, realized_irradiance),
        };

        for var in Variable::ALL {
            let e = record.values(var);
            for (k, &err) in e.iter().enumerate() {
                let target = forecast.target(k);
                let day = target.day();
                let cell = &mut self.cells[var.index()][k * 24 + target.hour_of_day()];
                let at = cell.partition_point(|(d, _)| *d <= day);
                cell.insert(at, (day, err));
                self.newest_target_day = Some(self.newest_target_day.map_or(day, |d| d.max(day)));
            }
        }
        let issue_day = forecast.issue.day();
        self.newest_issue_day = Some(self.newest_issue_day.map_or(issue_day, |d| d.max(issue_day)));
        let at = self.horizons.partition_point(|h| h.issue <= record.issue);
        self.horizons.insert(at, record);
        self.evict();
    }

    fn evict(&mut self) {
        if let Some(newest) = self.newest_target_day {
            let cutoff = newest - RETENTION_DAYS;
            for cell in self.cells.iter_mut().flatten() {
                while cell.front().is_some_and(|(d, _)| *d <= cutoff) {
                    cell.pop_front();
                }
            }
        }
        if let Some(newest) = self.newest_issue_day {
            let cutoff = newest - RETENTION_DAYS;
            while self.horizons.front().is_some_and(|h| h.issue.day() <= cutoff) {
                self.horizons.pop_front();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn forecast(issue: HourStamp, n: usize, value: f64) -> PointForecast {
        PointForecast {
            issue,
            t_amb: vec![value; n],
            irradiance: vec![0.0; n],
        }
    }

    #[test]
    fn perfect_forecast_adds_zero_errors() {
        let mut pool = ErrorPool::new(24);
        let f = forecast(HourStamp(24 * 100 + 5), 24, 3.0);
        pool.update(&f, &[3.0; 24], &[0.0; 24]);
        assert_eq!(pool.len(Variable::Temperature), 24);
        for var in Variable::ALL {
            for (_, _, cell) in pool.cells(var) {
                assert!(cell.iter().all(|(_, e)| *e == 0.0));
            }
        }
        // lead 0 targets hour 5, lead 20 wraps to hour 1 of the next day
        assert_eq!(pool.cell(Variable::Temperature, 0, 5).len(), 1);
        assert_eq!(pool.cell(Variable::Temperature, 20, 1)[0].0, 101);
    }

    #[test]
    fn window_holds_sixty_days_per_cell() {
        let mut pool = ErrorPool::new(24);
        for hour in 0..61 * 24 {
            let f = forecast(HourStamp(hour), 24, 0.0);
            pool.update(&f, &[1.0; 24], &[0.0; 24]);
        }
        // every (lead, hour) cell saw at least 60 complete days
        let mut full = 0;
        for (_, _, cell) in pool.cells(Variable::Temperature) {
            assert!(cell.len() <= 60);
            if cell.len() == 60 {
                full += 1;
            }
        }
        assert!(full > 0);
        assert!(pool.horizons().len() <= 60 * 24);
    }

    #[test]
    fn daily_updates_keep_sixty_entries() {
        let mut pool = ErrorPool::new(24);
        for day in 0..61 {
            let f = forecast(HourStamp(day * 24), 24, 0.0);
            pool.update(&f, &[0.5; 24], &[0.0; 24]);
        }
        for k in 0..24 {
            assert_eq!(pool.cell(Variable::Temperature, k, k).len(), 60);
        }
        assert_eq!(pool.horizons().len(), 60);
    }
}
