//! Competitor estimators fitted on the same centered moments as the PLS
//! estimator: ordinary least squares, ridge, and principal component
//! regression.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::EstimatorError;
use crate::linalg::solve_spd;
use crate::model::SpectralDecomposition;
use crate::sample::{empirical_moments, fit_pls_with, CovDivisor, Dataset};

/// Which estimator to fit, with its tuning parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EstimatorSpec {
    Ols,
    Ridge(f64),
    Pcr(usize),
    Pls(usize),
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorSpec::Ols => write!(f, "ols"),
            EstimatorSpec::Ridge(k) => write!(f, "ridge:{k}"),
            EstimatorSpec::Pcr(c) => write!(f, "pcr:{c}"),
            EstimatorSpec::Pls(a) => write!(f, "pls:{a}"),
        }
    }
}

impl FromStr for EstimatorSpec {
    type Err = EstimatorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || EstimatorError::InvalidSpec(s.to_string());
        match s.split_once(':') {
            None if s == "ols" => Ok(EstimatorSpec::Ols),
            Some(("ridge", k)) => {
                let k: f64 = k.parse().map_err(|_| bad())?;
                if !(k.is_finite() && k >= 0.0) {
                    return Err(bad());
                }
                Ok(EstimatorSpec::Ridge(k))
            }
            Some(("pcr", c)) => Ok(EstimatorSpec::Pcr(c.parse().map_err(|_| bad())?)),
            Some(("pls", a)) => Ok(EstimatorSpec::Pls(a.parse().map_err(|_| bad())?)),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for EstimatorSpec {
    type Error = EstimatorError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<EstimatorSpec> for String {
    fn from(e: EstimatorSpec) -> String {
        e.to_string()
    }
}

/// Fitted coefficient vector with the centering offsets needed to predict.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedCoefficients {
    pub beta: DVector<f64>,
    pub x_mean: DVector<f64>,
    pub y_mean: f64,
}

impl FittedCoefficients {
    pub fn predict(&self, x_new: &DVector<f64>) -> f64 {
        self.y_mean + self.beta.dot(&(x_new - &self.x_mean))
    }
}

/// Fit the requested estimator on centered empirical moments (divisor n-1).
pub fn fit(spec: EstimatorSpec, data: &Dataset) -> Result<FittedCoefficients, EstimatorError> {
    fit_with(spec, data, CovDivisor::default())
}

pub fn fit_with(
    spec: EstimatorSpec,
    data: &Dataset,
    divisor: CovDivisor,
) -> Result<FittedCoefficients, EstimatorError> {
    let p = data.p();
    if let EstimatorSpec::Pls(a) = spec {
        let fit = fit_pls_with(data, a, divisor)?;
        return Ok(FittedCoefficients {
            beta: fit.beta_hat,
            x_mean: fit.x_mean,
            y_mean: fit.y_mean,
        });
    }
    let mom = empirical_moments(data, divisor);
    let beta = match spec {
        EstimatorSpec::Ols => {
            let spec_dec = SpectralDecomposition::of_matrix(&mom.sigma_xx);
            let max = spec_dec.eigenvalues()[0];
            let min = *spec_dec.eigenvalues().last().unwrap();
            if !(min > 1e-12 * max.max(0.0)) {
                return Err(EstimatorError::SingularDesign);
            }
            solve_spd(&mom.sigma_xx, &mom.sigma_xy).ok_or(EstimatorError::SingularDesign)?
        }
        EstimatorSpec::Ridge(k) => {
            let shifted = &mom.sigma_xx + DMatrix::<f64>::identity(p, p) * k;
            solve_spd(&shifted, &mom.sigma_xy).ok_or(EstimatorError::SingularDesign)?
        }
        EstimatorSpec::Pcr(c) => {
            if c == 0 || c > p {
                return Err(EstimatorError::InvalidComponentCount { got: c, max: p });
            }
            let spec_dec = SpectralDecomposition::of_matrix(&mom.sigma_xx);
            let mut beta = DVector::<f64>::zeros(p);
            for i in 0..c {
                let lam = spec_dec.eigenvalues()[i];
                if lam <= 1e-12 * spec_dec.eigenvalues()[0].max(0.0) {
                    return Err(EstimatorError::SingularDesign);
                }
                let d = spec_dec.eigenvectors().column(i);
                beta += (d.dot(&mom.sigma_xy) / lam) * d;
            }
            beta
        }
        EstimatorSpec::Pls(_) => unreachable!("handled above"),
    };
    Ok(FittedCoefficients {
        beta,
        x_mean: mom.x_mean,
        y_mean: mom.y_mean,
    })
}

/// Default ridge grid: {0.001, 0.01, 0.1, 1, 10} scaled by trace(Sigma)/p.
pub fn default_ridge_grid(sigma_xx: &DMatrix<f64>) -> Vec<f64> {
    let scale = sigma_xx.trace() / sigma_xx.nrows() as f64;
    [1e-3, 1e-2, 1e-1, 1.0, 10.0]
        .iter()
        .map(|m| m * scale)
        .collect()
}
