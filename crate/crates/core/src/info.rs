//! Observed information matrices and delta-method variances for the ratio.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric observed information with parameter labels; the rate pair
/// `(mu, nu)` always occupies the last two positions.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoMatrix {
    pub labels: Vec<&'static str>,
    pub matrix: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct InfoRepr {
    labels: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Serialize for InfoMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        InfoRepr {
            labels: self.labels.iter().map(|l| l.to_string()).collect(),
            rows: self
                .matrix
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
        }
        .serialize(s)
    }
}

impl InfoMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Variance of `mu / nu` from the Schur complement of the nuisance
    /// block, `I_rr - I_rn I_nn^{-1} I_nr`, which is the inverse covariance
    /// of the rate pair.
    pub fn ratio_variance(&self, mu: f64, nu: f64) -> Result<f64> {
        let d = self.dim();
        let k = d - 2;
        let rr = self.matrix.view((k, k), (2, 2)).into_owned();
        let schur = if k == 0 {
            rr
        } else {
            let nn = self.matrix.view((0, 0), (k, k)).into_owned();
            let rn = self.matrix.view((k, 0), (2, k)).into_owned();
            let nn_inv = nn.try_inverse().ok_or(Error::SingularInfo)?;
            rr - &rn * nn_inv * rn.transpose()
        };
        let cov = schur.try_inverse().ok_or(Error::SingularInfo)?;
        let g = DVector::from_vec(vec![1.0 / nu, -mu / (nu * nu)]);
        check_variance((g.transpose() * cov * g)[(0, 0)])
    }

    /// The same variance from the full inverse, `g' I^{-1} g`.
    pub fn ratio_variance_full(&self, mu: f64, nu: f64) -> Result<f64> {
        let d = self.dim();
        let inv = self.matrix.clone().try_inverse().ok_or(Error::SingularInfo)?;
        let mut g = DVector::zeros(d);
        g[d - 2] = 1.0 / nu;
        g[d - 1] = -mu / (nu * nu);
        check_variance((g.transpose() * inv * g)[(0, 0)])
    }

    /// Standard errors from the diagonal of the inverse.
    pub fn standard_errors(&self) -> Result<Vec<f64>> {
        let inv = self.matrix.clone().try_inverse().ok_or(Error::SingularInfo)?;
        (0..self.dim())
            .map(|i| {
                let v = inv[(i, i)];
                if v > 0.0 && v.is_finite() {
                    Ok(v.sqrt())
                } else {
                    Err(Error::SingularInfo)
                }
            })
            .collect()
    }
}

fn check_variance(v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::SingularInfo)
    }
}

/// Adds `w * a a'` to `m`.
pub(crate) fn add_outer(m: &mut DMatrix<f64>, w: f64, a: &[f64]) {
    for i in 0..a.len() {
        for j in 0..=i {
            let v = w * a[i] * a[j];
            m[(i, j)] += v;
            if i != j {
                m[(j, i)] += v;
            }
        }
    }
}
