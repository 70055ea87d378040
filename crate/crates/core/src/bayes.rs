//! The conjugate family for the rate ratio and the empirical-Bayes
//! estimators built from EM imputations.
//!
//! With `A = scale * r` and `B = scale * (1 - r) + 1`, a member of the family
//! has density
//! `Gamma(a + b) / (Gamma(a) Gamma(b)) * A^a B^b theta^(a - 1) / (A theta + B)^(a + b)`,
//! i.e. `A theta / (A theta + B)` is Beta(a, b).

use serde::{Deserialize, Serialize};

use crate::em::EmFit;
use crate::em_zipm::ZipmResponsibilities;
use crate::error::{domain, Error, Result};
use crate::interval::IntervalEstimate;
use crate::model::{Counts, ExposureGrid, PriorSpec};
use crate::numeric::{beta_reg, ln_gamma};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorPhi {
    pub a: f64,
    pub b: f64,
    /// Total exposure in the rate units of the data.
    pub scale: f64,
    /// Fraction of the exposure attributed to the rare component.
    pub r: f64,
}

impl PosteriorPhi {
    pub fn new(a: f64, b: f64, scale: f64, r: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(domain("a", a, "a > 0"));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(domain("b", b, "b > 0"));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(domain("scale", scale, "scale > 0"));
        }
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::DegenerateSplit(r));
        }
        Ok(Self { a, b, scale, r })
    }

    fn coefficients(&self) -> (f64, f64) {
        (self.scale * self.r, self.scale * (1.0 - self.r) + 1.0)
    }

    pub fn log_density(&self, theta: f64) -> f64 {
        if theta <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let (ca, cb) = self.coefficients();
        let (a, b) = (self.a, self.b);
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * ca.ln() + b * cb.ln()
            + (a - 1.0) * theta.ln()
            - (a + b) * (ca * theta + cb).ln()
    }

    pub fn density(&self, theta: f64) -> f64 {
        self.log_density(theta).exp()
    }

    pub fn mean(&self) -> Result<f64> {
        if self.b <= 1.0 {
            return Err(Error::MeanUndefined { b: self.b });
        }
        let (ca, cb) = self.coefficients();
        Ok(cb * self.a / (ca * (self.b - 1.0)))
    }

    pub fn cdf(&self, theta: f64) -> f64 {
        if theta <= 0.0 {
            return 0.0;
        }
        if theta == f64::INFINITY {
            return 1.0;
        }
        let (ca, cb) = self.coefficients();
        beta_reg(self.a, self.b, ca * theta / (ca * theta + cb))
    }

    /// Quantile by bisection on the beta scale to an absolute tolerance of
    /// `1e-13` in probability-space coordinates.
    pub fn quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        if p >= 1.0 {
            return f64::INFINITY;
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if beta_reg(self.a, self.b, mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 * hi.max(1e-300) {
                break;
            }
        }
        let x = 0.5 * (lo + hi);
        let (ca, cb) = self.coefficients();
        cb * x / (ca * (1.0 - x))
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    /// Equal-tailed credible interval.  The point is the posterior mean when
    /// it exists and the median otherwise; at very small levels the point
    /// need not lie inside the interval.
    pub fn credible_interval(&self, level: f64) -> Result<IntervalEstimate> {
        if !(0.0..1.0).contains(&level) {
            return Err(domain("level", level, "0 <= level < 1"));
        }
        let tail = (1.0 - level) / 2.0;
        let point = self.mean().unwrap_or_else(|_| self.median());
        Ok(IntervalEstimate {
            point,
            lower: self.quantile(tail),
            upper: self.quantile(1.0 - tail),
            level,
        })
    }
}

/// Whether to use the proper prior from a [`PriorSpec`] or the limiting
/// improper prior with `alpha = beta = 0`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriorMode {
    #[default]
    Proper,
    Improper,
}

fn shapes(prior: &PriorSpec, mode: PriorMode) -> Result<(f64, f64)> {
    prior.validate()?;
    match mode {
        PriorMode::Improper => Ok((0.0, 0.0)),
        PriorMode::Proper => {
            if prior.alpha <= 0.0 {
                return Err(domain("alpha", prior.alpha, "alpha > 0 for a proper prior"));
            }
            if prior.beta <= 0.0 {
                return Err(domain("beta", prior.beta, "beta > 0 for a proper prior"));
            }
            Ok((prior.alpha, prior.beta))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalBayes {
    pub posterior: PosteriorPhi,
    pub estimate: f64,
}

fn finish(a: f64, b: f64, scale: f64, r: f64) -> Result<EmpiricalBayes> {
    if a <= 0.0 {
        return Err(Error::ImproperPosterior("no imputed rare-component counts"));
    }
    let posterior = PosteriorPhi::new(a, b, scale, r)?;
    Ok(EmpiricalBayes {
        estimate: posterior.mean()?,
        posterior,
    })
}

/// Empirical-Bayes estimate from a fitted plain mixture: the fully observed
/// conjugate posterior with the labels replaced by their imputations.
pub fn empirical_bayes_mixture(
    m: &Counts,
    grid: &ExposureGrid,
    fit: &EmFit<Vec<f64>>,
    prior: &PriorSpec,
    mode: PriorMode,
) -> Result<EmpiricalBayes> {
    grid.check_shape(&m.0, "m")?;
    let (alpha, beta) = shapes(prior, mode)?;
    let yhat = &fit.responsibilities;
    if yhat.len() != grid.sites() {
        return Err(Error::DimensionMismatch("responsibilities length".into()));
    }
    let totals = m.site_totals();
    let rare: f64 = totals.iter().zip(yhat).map(|(&s, &q)| s as f64 * q).sum();
    let common = m.total() as f64 - rare;
    let r = yhat.iter().sum::<f64>() / yhat.len() as f64;
    finish(rare + alpha, common + beta + prior.delta, grid.total_exposure(), r)
}

/// Empirical-Bayes estimate from a fitted zero-inflated mixture.  The
/// exposure scale is the imputed observable exposure and the split fraction
/// is the rare share of it.
pub fn empirical_bayes_zipm(
    n: &Counts,
    grid: &ExposureGrid,
    fit: &EmFit<ZipmResponsibilities>,
    prior: &PriorSpec,
    mode: PriorMode,
) -> Result<EmpiricalBayes> {
    grid.check_shape(&n.0, "n")?;
    let (alpha, beta) = shapes(prior, mode)?;
    let resp = &fit.responsibilities;
    let totals = n.site_totals();
    let rare: f64 = totals.iter().zip(&resp.yhat).map(|(&s, &q)| s as f64 * q).sum();
    let common = n.total() as f64 - rare;
    let (observable, rare_exposure) = resp.imputed_exposure(grid);
    if observable <= 0.0 {
        return Err(Error::DegenerateRatio);
    }
    finish(
        rare + alpha,
        common + beta + prior.delta,
        observable,
        rare_exposure / observable,
    )
}
