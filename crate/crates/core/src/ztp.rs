//! Zero-truncated Poisson distributions, and why the nonzero part of the
//! zero-inflated mixture is not a mixture of them.
//!
//! Conditioning the zero-inflated mixture on a nonzero count cancels the
//! observability probability but renormalizes by the mixture's total
//! nonzero mass, whereas a mixture of zero-truncated Poissons renormalizes
//! each component separately.  The two agree at every count only when the
//! rates coincide.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::model::ModelParams;
use crate::numeric::{ln_factorial, log_add_exp, poisson_logpmf};

/// `ln(e^x - 1)` without overflow or cancellation.
fn ln_expm1(x: f64) -> f64 {
    if x > 1.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

/// `ln[lambda^x / ((e^lambda - 1) x!)]`.
pub fn ztp_logpmf(x: u64, lambda: f64) -> Result<f64> {
    if x == 0 {
        return Err(domain("x", 0.0, "x >= 1"));
    }
    if !(lambda > 0.0) {
        return Err(domain("lambda", lambda, "lambda > 0"));
    }
    Ok(x as f64 * lambda.ln() - ln_expm1(lambda) - ln_factorial(x))
}

/// Log-pmf of a zero-inflated mixture count given that it is nonzero.
pub fn conditional_zipm_logpmf(x: u64, p: &ModelParams, t: f64) -> Result<f64> {
    if x == 0 {
        return Err(domain("x", 0.0, "x >= 1"));
    }
    let (a, b) = (t * p.mu, t * p.nu);
    let mixture = log_add_exp(
        p.pi.ln() + poisson_logpmf(x, a),
        (-p.pi).ln_1p() + poisson_logpmf(x, b),
    );
    // 1 - pi e^{-a} - (1 - pi) e^{-b} = pi (1 - e^{-a}) + (1 - pi)(1 - e^{-b})
    let nonzero = p.pi * -(-a).exp_m1() + (1.0 - p.pi) * -(-b).exp_m1();
    Ok(mixture - nonzero.ln())
}

/// Log-pmf of `pi ZTP(t mu) + (1 - pi) ZTP(t nu)`.
pub fn ztp_mixture_logpmf(x: u64, p: &ModelParams, t: f64) -> Result<f64> {
    let rare = if p.pi > 0.0 {
        p.pi.ln() + ztp_logpmf(x, t * p.mu)?
    } else {
        f64::NEG_INFINITY
    };
    let common = if p.pi < 1.0 {
        (-p.pi).ln_1p() + ztp_logpmf(x, t * p.nu)?
    } else {
        f64::NEG_INFINITY
    };
    Ok(log_add_exp(rare, common))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyRow {
    pub x: u64,
    pub conditional: f64,
    pub ztp_mixture: f64,
    pub difference: f64,
    /// `x ln(mu / nu) - ln[(e^{t mu} - 1) / (e^{t nu} - 1)]`; the two pmfs
    /// agree at `x` exactly when this vanishes.
    pub identity_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub params: ModelParams,
    pub t: f64,
    pub rows: Vec<DiscrepancyRow>,
    pub max_abs_difference: f64,
    /// Sign changes of `identity_gap` along `x = 1..x_max`.
    pub identity_sign_changes: usize,
    /// Counts at which the reduced identity holds exactly (to rounding).
    pub identity_solutions: Vec<u64>,
}

pub fn ztp_discrepancy_report(p: &ModelParams, t: f64, x_max: u64) -> Result<DiscrepancyReport> {
    if x_max < 2 {
        return Err(domain("x_max", x_max as f64, "x_max >= 2"));
    }
    if !(t > 0.0) {
        return Err(domain("t", t, "t > 0"));
    }
    let log_ratio = p.mu.ln() - p.nu.ln();
    let offset = ln_expm1(t * p.mu) - ln_expm1(t * p.nu);
    let mut rows = Vec::with_capacity(x_max as usize);
    for x in 1..=x_max {
        let c = conditional_zipm_logpmf(x, p, t)?.exp();
        let z = ztp_mixture_logpmf(x, p, t)?.exp();
        rows.push(DiscrepancyRow {
            x,
            conditional: c,
            ztp_mixture: z,
            difference: c - z,
            identity_gap: x as f64 * log_ratio - offset,
        });
    }
    let max_abs_difference = rows.iter().map(|r| r.difference.abs()).fold(0.0, f64::max);
    let scale = offset.abs().max(1.0);
    let identity_solutions = rows
        .iter()
        .filter(|r| log_ratio != 0.0 && r.identity_gap.abs() <= 1e-12 * scale)
        .map(|r| r.x)
        .collect();
    let identity_sign_changes = rows
        .windows(2)
        .filter(|w| w[0].identity_gap.signum() * w[1].identity_gap.signum() < 0.0)
        .count();
    Ok(DiscrepancyReport {
        params: *p,
        t,
        rows,
        max_abs_difference,
        identity_sign_changes,
        identity_solutions,
    })
}
