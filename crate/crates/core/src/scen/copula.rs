use super::{ErrorPool, HorizonErrors, MarginalSet, Variable};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Minimum number of historical horizon vectors.
pub const MIN_HORIZONS: usize = 20;
pub const EIGENVALUE_FLOOR: f64 = 1e-8;
/// Leads whose transformed sample has less spread than this are treated as
/// independent of the rest.
const DEGENERATE_SD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CopulaSource {
    /// Forecasts issued at the same hour of day as the current one.
    SameIssueHour,
    /// Every retained forecast.
    AllIssueHours,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableCopula {
    /// `N × N` correlation over leads.
    pub correlation: DMatrix<f64>,
    /// `factor · factorᵀ = correlation`.
    pub factor: DMatrix<f64>,
    pub samples: usize,
    pub source: CopulaSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopulaModel {
    pub t_amb: VariableCopula,
    pub irradiance: VariableCopula,
}

impl CopulaModel {
    pub fn variable(&self, var: Variable) -> &VariableCopula {
        match var {
            Variable::Temperature => &self.t_amb,
            Variable::Irradiance => &self.irradiance,
        }
    }

    /// Independent leads.
    pub fn identity(n: usize) -> CopulaModel {
        let c = VariableCopula::from_correlation(DMatrix::identity(n, n), 0, CopulaSource::AllIssueHours);
        CopulaModel {
            t_amb: c.clone(),
            irradiance: c,
        }
    }
}

impl VariableCopula {
    /// Projects `raw` onto a valid correlation matrix and factors it.
    pub fn from_correlation(raw: DMatrix<f64>, samples: usize, source: CopulaSource) -> Self {
        let (correlation, factor) = project_correlation(raw);
        VariableCopula {
            correlation,
            factor,
            samples,
            source,
        }
    }
}

/// Symmetrizes, floors the eigenvalues at [`EIGENVALUE_FLOOR`] and rescales to
/// unit diagonal. Returns the matrix and a square-root factor of it.
fn project_correlation(raw: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = raw.nrows();
    let sym = (&raw + raw.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let vals = eig.eigenvalues.map(|v| v.max(EIGENVALUE_FLOOR));
    let v = &eig.eigenvectors;
    let floored = v * DMatrix::from_diagonal(&vals) * v.transpose();
    let d: Vec<f64> = (0..n).map(|i| 1.0 / floored[(i, i)].sqrt()).collect();
    let mut corr = DMatrix::from_fn(n, n, |i, j| floored[(i, j)] * d[i] * d[j]);
    for i in 0..n {
        corr[(i, i)] = 1.0;
        for j in 0..i {
            let m = 0.5 * (corr[(i, j)] + corr[(j, i)]);
            corr[(i, j)] = m;
            corr[(j, i)] = m;
        }
    }
    // D·V·√Λ factors the rescaled matrix
    let mut factor = v * DMatrix::from_diagonal(&vals.map(f64::sqrt));
    for i in 0..n {
        factor.row_mut(i).scale_mut(d[i]);
    }
    (corr, factor)
}

fn transformed_correlation(
    horizons: &[&HorizonErrors],
    marginals: &MarginalSet,
    var: Variable,
) -> DMatrix<f64> {
    let n = marginals.horizon();
    let count = horizons.len();
    let clip_lo = 1.0 / (count + 1) as f64;
    let clip_hi = count as f64 / (count + 1) as f64;
    let normal = Normal::standard();
    let leads = marginals.variable(var);
    let z = DMatrix::from_fn(count, n, |i, k| {
        let u = leads[k].errors.cdf(horizons[i].values(var)[k]).clamp(clip_lo, clip_hi);
        normal.inverse_cdf(u)
    });

    let means: Vec<f64> = (0..n).map(|k| z.column(k).mean()).collect();
    let centered = DMatrix::from_fn(count, n, |i, k| z[(i, k)] - means[k]);
    let cov = centered.transpose() * &centered / (count as f64 - 1.0);
    let sd: Vec<f64> = (0..n).map(|k| cov[(k, k)].sqrt()).collect();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else if sd[i] < DEGENERATE_SD || sd[j] < DEGENERATE_SD {
            0.0
        } else {
            cov[(i, j)] / (sd[i] * sd[j])
        }
    })
}

/// Estimates one Gaussian copula per variable from the retained horizon error
/// vectors, each mapped lead-wise through the error distribution of `marginals`
/// and then through the probit.
pub fn fit_copula(pool: &ErrorPool, marginals: &MarginalSet) -> Result<CopulaModel> {
    let n = marginals.horizon();
    let issue_hour = marginals.issue.hour_of_day();
    let usable: Vec<&HorizonErrors> = pool.horizons().iter().filter(|h| h.t_amb.len() >= n).collect();
    let same_hour: Vec<&HorizonErrors> = usable
        .iter()
        .copied()
        .filter(|h| h.issue.hour_of_day() == issue_hour)
        .collect();
    let (horizons, source) = if same_hour.len() >= MIN_HORIZONS {
        (same_hour, CopulaSource::SameIssueHour)
    } else if usable.len() >= MIN_HORIZONS {
        (usable, CopulaSource::AllIssueHours)
    } else {
        return Err(Error::ColdStart(format!(
            "copula needs {MIN_HORIZONS} past horizons, pool has {}",
            usable.len()
        )));
    };
    let fit = |var| {
        VariableCopula::from_correlation(
            transformed_correlation(&horizons, marginals, var),
            horizons.len(),
            source,
        )
    };
    Ok(CopulaModel {
        t_amb: fit(Variable::Temperature),
        irradiance: fit(Variable::Irradiance),
    })
}
