use super::Variable;
use crate::error::{Error, Result};
use crate::time::HourStamp;
use crate::weather::WeatherSeries;
use serde::{Deserialize, Serialize};

/// Hourly observations strictly before `end`.
#[derive(Debug, Clone, Copy)]
pub struct HistoryView<'a> {
    pub start: HourStamp,
    pub t_amb: &'a [f64],
    pub irradiance: &'a [f64],
}

impl<'a> HistoryView<'a> {
    /// Everything in `series` before `end`.
    pub fn before(series: &'a WeatherSeries, end: HourStamp) -> HistoryView<'a> {
        let n = (end - series.start).clamp(0, series.len() as i64) as usize;
        HistoryView {
            start: series.start,
            t_amb: &series.t_amb[..n],
            irradiance: &series.irradiance[..n],
        }
    }

    pub fn len(&self) -> usize {
        self.t_amb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_amb.is_empty()
    }

    pub fn end(&self) -> HourStamp {
        self.start + self.len() as i64
    }

    pub fn values(&self, var: Variable) -> &'a [f64] {
        match var {
            Variable::Temperature => self.t_amb,
            Variable::Irradiance => self.irradiance,
        }
    }

    pub fn at(&self, var: Variable, stamp: HourStamp) -> Option<f64> {
        let i = stamp - self.start;
        (i >= 0).then(|| self.values(var).get(i as usize).copied()).flatten()
    }
}

/// Per-variable predictions for leads `1..=N`; lead `k` is the hour `issue + k − 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointForecast {
    pub issue: HourStamp,
    pub t_amb: Vec<f64>,
    pub irradiance: Vec<f64>,
}

impl PointForecast {
    pub fn horizon(&self) -> usize {
        self.t_amb.len()
    }

    pub fn values(&self, var: Variable) -> &[f64] {
        match var {
            Variable::Temperature => &self.t_amb,
            Variable::Irradiance => &self.irradiance,
        }
    }

    pub fn target(&self, lead: usize) -> HourStamp {
        self.issue + lead as i64
    }
}

/// Point forecaster. Implementations only see data observed before the issue
/// time, but may use any variable in it (e.g. irradiance to predict temperature).
pub trait Forecaster: Send + Sync {
    fn forecast(&self, history: &HistoryView<'_>, issue: HourStamp, horizon: usize) -> Result<PointForecast>;
}

/// Seasonal persistence: each lead repeats the value observed at the same hour
/// of day on the most recent observed day.
#[derive(Debug, Clone, Copy, Default)]
pub struct SeasonalPersistence;

pub const MIN_HISTORY_HOURS: usize = 48;

impl Forecaster for SeasonalPersistence {
    fn forecast(&self, history: &HistoryView<'_>, issue: HourStamp, horizon: usize) -> Result<PointForecast> {
        if history.end() != issue {
            return Err(Error::Coverage(format!(
                "history ends at {}, forecast issued at {issue}",
                history.end()
            )));
        }
        if history.len() < MIN_HISTORY_HOURS.max(horizon) {
            return Err(Error::Coverage(format!(
                "need {} hours of history before {issue}, have {}",
                MIN_HISTORY_HOURS.max(horizon),
                history.len()
            )));
        }
        let lead_values = |var: Variable| -> Vec<f64> {
            (0..horizon)
                .map(|k| {
                    let days_back = k as i64 / 24 + 1;
                    let v = history
                        .at(var, issue + (k as i64 - 24 * days_back))
                        .expect("coverage checked above");
                    var.clip(v)
                })
                .collect()
        };
        Ok(PointForecast {
            issue,
            t_amb: lead_values(Variable::Temperature),
            irradiance: lead_values(Variable::Irradiance),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(start: HourStamp, f: impl Fn(usize) -> (f64, f64), hours: usize) -> WeatherSeries {
        let (t_amb, irradiance) = (0..hours).map(&f).unzip();
        WeatherSeries {
            start,
            t_amb,
            irradiance,
            seed: None,
        }
    }

    #[test]
    fn periodic_history_is_a_fixed_point() {
        let start = HourStamp::parse("2017-02-01T00:00:00").unwrap();
        let w = series(
            start,
            |i| ((i % 24) as f64 * 0.5 - 3.0, ((i % 24) as f64 - 12.0).abs()),
            24 * 10,
        );
        for issue_offset in [48, 60, 100, 200] {
            let issue = start + issue_offset;
            let f = SeasonalPersistence
                .forecast(&HistoryView::before(&w, issue), issue, 24)
                .unwrap();
            for k in 0..24 {
                let i = issue_offset as usize + k;
                if i < w.len() {
                    assert_eq!(f.t_amb[k], w.t_amb[i]);
                    assert_eq!(f.irradiance[k], w.irradiance[i]);
                }
            }
        }
    }

    #[test]
    fn constant_history_constant_forecast() {
        let start = HourStamp(1000);
        let w = series(start, |_| (4.25, 0.0), 72);
        let issue = start + 72;
        let f = SeasonalPersistence
            .forecast(&HistoryView::before(&w, issue), issue, 30)
            .unwrap();
        assert!(f.t_amb.iter().all(|v| *v == 4.25));
        assert_eq!(f.horizon(), 30);
    }

    #[test]
    fn short_history_is_a_coverage_error() {
        let start = HourStamp(1000);
        let w = series(start, |_| (1.0, 0.0), 47);
        let issue = start + 47;
        assert!(matches!(
            SeasonalPersistence.forecast(&HistoryView::before(&w, issue), issue, 24),
            Err(Error::Coverage(_))
        ));
    }
}
