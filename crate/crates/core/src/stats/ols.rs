// SPDX-License-Identifier: MIT OR Apache-2.0

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::build_design;
use super::spec::RegressionSpec;
use crate::error::{LabError, Result};
use crate::tables::{self, Provenance, Table};

/// Normal multiplier for approximate 95% intervals.
pub const Z95: f64 = 1.96;

const RANK_TOLERANCE: f64 = 1e-9;
const LEVERAGE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub low95: f64,
    pub high95: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    /// HC3 covariance, row-major `p × p`.
    pub covariance: Vec<Vec<f64>>,
    pub se: Vec<f64>,
    /// Homoskedastic standard errors, for diagnostics only.
    pub classical_se: Vec<f64>,
    pub n: usize,
    pub r_squared: Option<f64>,
    pub residuals: Vec<f64>,
    pub leverage: Vec<f64>,
}

pub const COEFFICIENT_HEADER: [&str; 5] = ["name", "estimate", "se", "low95", "high95"];

impl RegressionResult {
    pub fn coefficients(&self) -> Vec<Coefficient> {
        self.names
            .iter()
            .zip(self.estimates.iter().zip(&self.se))
            .map(|(name, (&estimate, &se))| Coefficient {
                name: name.clone(),
                estimate,
                se,
                low95: estimate - Z95 * se,
                high95: estimate + Z95 * se,
            })
            .collect()
    }

    pub fn coefficient(&self, name: &str) -> Option<Coefficient> {
        self.coefficients().into_iter().find(|c| c.name == name)
    }

    pub fn to_csv(&self, provenance: Option<&Provenance>) -> Result<Vec<u8>> {
        let rows: Vec<Vec<String>> = self
            .coefficients()
            .into_iter()
            .map(|c| {
                vec![
                    c.name,
                    c.estimate.to_string(),
                    c.se.to_string(),
                    c.low95.to_string(),
                    c.high95.to_string(),
                ]
            })
            .collect();
        tables::table_bytes(provenance, &COEFFICIENT_HEADER, &rows)
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let p = self.names.len();
        DMatrix::from_fn(p, p, |i, j| self.covariance[i][j])
    }
}

pub fn fit_ols_hc3(spec: &RegressionSpec, data: &Table) -> Result<RegressionResult> {
    let design = build_design(spec, data)?;
    fit_matrix(&design.x, &design.y, &design.names)
}

/// OLS through a thin QR factorisation, with HC3 sandwich covariance
/// `(XᵀX)⁻¹ Xᵀ diag(eᵢ²/(1 − hᵢᵢ)²) X (XᵀX)⁻¹`.
pub fn fit_matrix(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<RegressionResult> {
    let (n, p) = x.shape();
    if names.len() != p {
        return Err(LabError::LengthMismatch { expected: p, found: names.len() });
    }
    if y.len() != n {
        return Err(LabError::LengthMismatch { expected: n, found: y.len() });
    }
    if n <= p {
        return Err(LabError::InsufficientData(format!(
            "{n} observations for {p} columns"
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(LabError::Invalid("non-finite value in regression data".into()));
    }

    let qr = x.clone().qr();
    let q = qr.q();
    let r = qr.r();
    for j in 0..p {
        let col_norm = x.column(j).norm();
        if r[(j, j)].abs() <= RANK_TOLERANCE * col_norm || col_norm == 0.0 {
            return Err(LabError::RankDeficient { column: names[j].clone() });
        }
    }

    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| LabError::RankDeficient { column: names[p - 1].clone() })?;
    let beta = &r_inv * (q.transpose() * y);
    let fitted = x * &beta;
    let resid = y - fitted;

    let leverage: Vec<f64> = (0..n).map(|i| q.row(i).norm_squared()).collect();
    let mut weights = DVector::<f64>::zeros(n);
    for i in 0..n {
        let denom = 1.0 - leverage[i];
        if denom <= LEVERAGE_TOLERANCE {
            return Err(LabError::UndefinedLeverage { row: i });
        }
        weights[i] = (resid[i] / denom).powi(2);
    }

    // Qᵀ diag(w) Q
    let mut wq = q.clone();
    for i in 0..n {
        wq.row_mut(i).scale_mut(weights[i]);
    }
    let meat = q.transpose() * wq;
    let mut cov = &r_inv * meat * r_inv.transpose();
    cov = (&cov + cov.transpose()) * 0.5;

    let sse = resid.norm_squared();
    let sigma2 = sse / (n - p) as f64;
    let xtx_inv = &r_inv * r_inv.transpose();
    let classical_se = (0..p).map(|j| (sigma2 * xtx_inv[(j, j)]).max(0.0).sqrt()).collect();

    let y_mean = y.mean();
    let sst: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    let r_squared = (sst > 0.0).then(|| 1.0 - sse / sst);

    Ok(RegressionResult {
        names: names.to_vec(),
        estimates: beta.iter().copied().collect(),
        se: (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect(),
        covariance: (0..p).map(|i| (0..p).map(|j| cov[(i, j)]).collect()).collect(),
        classical_se,
        n,
        r_squared,
        residuals: resid.iter().copied().collect(),
        leverage,
    })
}
