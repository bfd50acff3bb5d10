// SPDX-License-Identifier: MIT OR Apache-2.0

//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library's numerics.

#![allow(dead_code)]

use std::path::PathBuf;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Row-major dense matrix.
pub type Dense = Vec<Vec<f64>>;

pub fn transpose(a: &Dense) -> Dense {
    let (n, m) = (a.len(), a[0].len());
    (0..m).map(|j| (0..n).map(|i| a[i][j]).collect()).collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for t in 0..k {
            for j in 0..m {
                out[i][j] += a[i][t] * b[t][j];
            }
        }
    }
    out
}

pub fn matvec(a: &Dense, v: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn invert(a: &Dense) -> Dense {
    let n = a.len();
    let mut m: Dense = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        assert!(p.abs() > 1e-12, "singular matrix");
        m[col].iter_mut().for_each(|v| *v /= p);
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// OLS estimates and HC3 standard errors from the textbook sandwich
/// `(X'X)⁻¹ X' diag(e²/(1−h)²) X (X'X)⁻¹`.
pub struct BruteOls {
    pub beta: Vec<f64>,
    pub hc3_se: Vec<f64>,
    pub classical_se: Vec<f64>,
}

pub fn brute_ols(x: &Dense, y: &[f64]) -> BruteOls {
    let (n, p) = (x.len(), x[0].len());
    let xt = transpose(x);
    let bread = invert(&matmul(&xt, x));
    let xty = matvec(&xt, y);
    let beta = matvec(&bread, &xty);
    let fitted = matvec(x, &beta);
    let e: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let mut meat = vec![vec![0.0; p]; p];
    for i in 0..n {
        let bx = matvec(&bread, &x[i]);
        let h: f64 = x[i].iter().zip(&bx).map(|(a, b)| a * b).sum();
        let w = e[i] * e[i] / ((1.0 - h) * (1.0 - h));
        for a in 0..p {
            for b in 0..p {
                meat[a][b] += w * x[i][a] * x[i][b];
            }
        }
    }
    let cov = matmul(&matmul(&bread, &meat), &bread);
    let s2 = e.iter().map(|v| v * v).sum::<f64>() / (n - p) as f64;
    BruteOls {
        hc3_se: (0..p).map(|j| cov[j][j].sqrt()).collect(),
        classical_se: (0..p).map(|j| (s2 * bread[j][j]).sqrt()).collect(),
        beta,
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1e-300)
}

/// Arithmetic mean by explicit integer summation.
pub fn int_mean(v: &[i64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<i64>() as f64 / v.len() as f64)
}

pub fn int_median(v: &[i64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_unstable();
    let n = s.len();
    Some(if n % 2 == 1 {
        s[n / 2] as f64
    } else {
        (s[n / 2 - 1] as f64 + s[n / 2] as f64) / 2.0
    })
}

/// Standard normal CDF via the Abramowitz-Stegun 7.1.26 erf approximation
/// (absolute error below 1.5e-7).
pub fn normal_cdf(x: f64) -> f64 {
    let z = x.abs() / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.3275911 * z);
    let poly = t * (0.254829592
        + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = 1.0 - poly * (-z * z).exp();
    if x >= 0.0 {
        0.5 * (1.0 + erf)
    } else {
        0.5 * (1.0 - erf)
    }
}
