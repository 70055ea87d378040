//! Inference when every site's component label is known.
//!
//! Everything reduces to the rare-site fraction `r`, the two count totals
//! and the total exposure.

use serde::{Deserialize, Serialize};

use crate::bayes::PosteriorPhi;
use crate::error::{domain, Error, Result};
use crate::interval::IntervalEstimate;
use crate::model::{Counts, ExposureGrid, PriorSpec};
use crate::numeric::{ln_factorial, ln_gamma, normal_critical, xlogy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedSplit {
    pub rare_sites: usize,
    pub sites: usize,
    /// Total count over rare sites.
    pub rare_total: u64,
    /// Total count over common sites.
    pub common_total: u64,
    /// Sum of exposures over every cell.
    pub total_exposure: f64,
}

impl ObservedSplit {
    pub fn new(
        rare_sites: usize,
        sites: usize,
        rare_total: u64,
        common_total: u64,
        total_exposure: f64,
    ) -> Result<Self> {
        if rare_sites == 0 || rare_sites >= sites {
            return Err(Error::DegenerateSplit(rare_sites as f64 / sites.max(1) as f64));
        }
        if !(total_exposure > 0.0) {
            return Err(domain("total_exposure", total_exposure, "positive"));
        }
        Ok(Self {
            rare_sites,
            sites,
            rare_total,
            common_total,
            total_exposure,
        })
    }

    pub fn r(&self) -> f64 {
        self.rare_sites as f64 / self.sites as f64
    }

    pub fn total(&self) -> u64 {
        self.rare_total + self.common_total
    }

    /// `(scale * r, scale * (1 - r) + 1)`.
    fn coefficients(&self) -> (f64, f64) {
        let s = self.total_exposure;
        (s * self.r(), s * (1.0 - self.r()) + 1.0)
    }
}

pub fn split_from_data(y: &[bool], m: &Counts, grid: &ExposureGrid) -> Result<ObservedSplit> {
    grid.check_shape(&m.0, "m")?;
    if y.len() != grid.sites() {
        return Err(Error::DimensionMismatch(format!(
            "y has {} entries for {} sites",
            y.len(),
            grid.sites()
        )));
    }
    let totals = m.site_totals();
    let rare_total = totals.iter().zip(y).filter(|(_, &v)| v).map(|(&s, _)| s).sum();
    let common_total = totals.iter().zip(y).filter(|(_, &v)| !v).map(|(&s, _)| s).sum();
    ObservedSplit::new(
        y.iter().filter(|&&v| v).count(),
        y.len(),
        rare_total,
        common_total,
        grid.total_exposure(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedMle {
    pub mu: f64,
    pub nu: f64,
    pub theta: f64,
}

pub fn mle_observed(s: &ObservedSplit) -> Result<ObservedMle> {
    if s.common_total == 0 {
        return Err(Error::ZeroDenominator("no counts at common sites"));
    }
    let r = s.r();
    let mu = s.rare_total as f64 / (s.total_exposure * r);
    let nu = s.common_total as f64 / (s.total_exposure * (1.0 - r));
    Ok(ObservedMle {
        mu,
        nu,
        theta: (1.0 - r) * s.rare_total as f64 / (r * s.common_total as f64),
    })
}

/// Interval from the asymptotic normality of `ln theta_hat`, whose variance
/// estimate is `1 / rare_total + 1 / common_total`.
pub fn ci_theta_lognormal(s: &ObservedSplit, level: f64) -> Result<IntervalEstimate> {
    check_level(level)?;
    if s.rare_total == 0 || s.common_total == 0 {
        return Err(Error::EmptyCell("log-scale interval needs both totals positive"));
    }
    let theta = mle_observed(s)?.theta;
    let half = normal_critical(level)
        * (1.0 / s.rare_total as f64 + 1.0 / s.common_total as f64).sqrt();
    Ok(IntervalEstimate {
        point: theta,
        lower: theta * (-half).exp(),
        upper: theta * half.exp(),
        level,
    })
}

/// Interval from the variance-stabilized binomial proportion
/// `rare_total / total`, conditional on the total.
pub fn ci_theta_arcsine(s: &ObservedSplit, level: f64) -> Result<IntervalEstimate> {
    check_level(level)?;
    let m = s.total();
    if m == 0 {
        return Err(Error::EmptyCell("arcsine interval needs a positive total"));
    }
    let r = s.r();
    let odds = |eta: f64| {
        if eta >= 1.0 {
            f64::INFINITY
        } else {
            (1.0 - r) / r * eta / (1.0 - eta)
        }
    };
    let eta = s.rare_total as f64 / m as f64;
    let centre = eta.sqrt().asin();
    let half = normal_critical(level) / (2.0 * (m as f64).sqrt());
    let lo = (centre - half).max(0.0);
    let hi = (centre + half).min(std::f64::consts::FRAC_PI_2);
    Ok(IntervalEstimate {
        point: odds(eta),
        lower: odds(lo.sin().powi(2)),
        upper: odds(hi.sin().powi(2)),
        level,
    })
}

/// Log-pmf of the two totals after integrating the common rate against a
/// unit-scale Gamma(delta) prior.
pub fn integrated_pmf_split(s: &ObservedSplit, delta: f64, theta: f64) -> f64 {
    let (ms, mt) = (s.rare_total, s.common_total);
    let m = (ms + mt) as f64;
    let (ca, cb) = s.coefficients();
    ln_gamma(m + delta) - ln_gamma(delta) - ln_factorial(ms) - ln_factorial(mt)
        + xlogy(ms as f64, ca * theta)
        + xlogy(mt as f64, cb - 1.0)
        - (m + delta) * (ca * theta + cb).ln()
}

/// The same pmf written as a bivariate negative binomial.
pub fn integrated_pmf_split_negbin(s: &ObservedSplit, delta: f64, theta: f64) -> f64 {
    let (ms, mt) = (s.rare_total, s.common_total);
    let m = (ms + mt) as f64;
    let (ca, cb) = s.coefficients();
    let denom = ca * theta + cb;
    let a = ca * theta / denom;
    let b = (cb - 1.0) / denom;
    ln_gamma(m + delta) - ln_gamma(delta) - ln_factorial(ms) - ln_factorial(mt)
        + xlogy(ms as f64, a)
        + xlogy(mt as f64, b)
        + delta * (1.0 / denom).ln()
}

/// Conjugate posterior of the ratio given the labels.
pub fn conjugate_posterior_observed(s: &ObservedSplit, prior: &PriorSpec) -> Result<PosteriorPhi> {
    prior.validate()?;
    PosteriorPhi::new(
        s.rare_total as f64 + prior.alpha,
        s.common_total as f64 + prior.beta + prior.delta,
        s.total_exposure,
        s.r(),
    )
}

/// Expected information about the ratio in the integrated likelihood.
pub fn mile_information(s: &ObservedSplit, delta: f64, theta: f64) -> f64 {
    let (ca, cb) = s.coefficients();
    delta * ca * cb / (theta * (ca * theta + cb))
}

pub fn mile_inverse_information(s: &ObservedSplit, delta: f64, theta: f64) -> f64 {
    let (ca, cb) = s.coefficients();
    theta / delta * (theta / cb + 1.0 / ca)
}

/// Maximizer of the integrated likelihood with a Wald interval from the
/// expected information.
pub fn mile(s: &ObservedSplit, delta: f64, level: f64) -> Result<IntervalEstimate> {
    check_level(level)?;
    if !(delta > 0.0) {
        return Err(domain("delta", delta, "delta > 0"));
    }
    let (ca, cb) = s.coefficients();
    let theta = cb * s.rare_total as f64 / (ca * (s.common_total as f64 + delta));
    let half = normal_critical(level) * mile_inverse_information(s, delta, theta).sqrt();
    Ok(IntervalEstimate::wald(theta, half, level))
}

fn check_level(level: f64) -> Result<()> {
    if !(0.0..1.0).contains(&level) {
        return Err(domain("level", level, "0 <= level < 1"));
    }
    Ok(())
}
