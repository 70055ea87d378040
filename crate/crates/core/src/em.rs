//! Shared EM driver, options and fit record.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    /// Stop once the log-likelihood changes by less than this...
    pub tol: f64,
    /// ...and no parameter moves by more than this (rates relative to
    /// `max(1, rate)`).
    pub param_tol: f64,
    pub max_iter: usize,
    /// Also cap the observability probability at 1/2 after each M-step.
    pub clamp_eps: bool,
    /// Hold the observability probability fixed instead of updating it.
    pub fixed_eps: Option<f64>,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            param_tol: 1e-7,
            max_iter: 10_000,
            clamp_eps: false,
            fixed_eps: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryFlags {
    /// The 1/2 cap on the mixing weight was active in the last M-step.
    pub pi_clamped: bool,
    pub pi_at_zero: bool,
    pub eps_clamped: bool,
    pub eps_at_one: bool,
    pub rate_at_zero: bool,
}

impl BoundaryFlags {
    pub fn any(&self) -> bool {
        self.pi_clamped || self.pi_at_zero || self.eps_clamped || self.eps_at_one || self.rate_at_zero
    }

    pub fn describe(&self) -> String {
        let names = [
            (self.pi_clamped, "pi clamped at 1/2"),
            (self.pi_at_zero, "pi at 0"),
            (self.eps_clamped, "eps clamped at 1/2"),
            (self.eps_at_one, "eps at 1"),
            (self.rate_at_zero, "rate at 0"),
        ];
        names
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, s)| *s)
            .collect::<Vec<_>>()
            .join(", ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmFit<R> {
    pub params: ModelParams,
    pub theta: f64,
    pub loglik: f64,
    /// Log-likelihood at the starting point and after every iteration.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub boundary: BoundaryFlags,
    /// E-step output at the final parameters.
    pub responsibilities: R,
}

/// Result of one M-step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MStep {
    pub params: ModelParams,
    pub pi_clamped: bool,
    pub eps_clamped: bool,
}

pub(crate) struct Trajectory {
    pub params: ModelParams,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub last_step: Option<MStep>,
}

/// Alternates `step` (an E-step followed by an M-step) until the stopping
/// rule fires.
pub(crate) fn iterate<S, L>(init: ModelParams, opts: &EmOptions, mut step: S, loglik: L) -> Result<Trajectory>
where
    S: FnMut(&ModelParams) -> Result<MStep>,
    L: Fn(&ModelParams) -> Result<f64>,
{
    let mut params = init;
    let mut trace = vec![loglik(&params)?];
    let mut last_step = None;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let next = step(&params)?;
        let ll = loglik(&next.params)?;
        let dl = (ll - trace[trace.len() - 1]).abs();
        let dp = params.max_abs_change(&next.params);
        params = next.params;
        trace.push(ll);
        last_step = Some(next);
        iterations += 1;
        if dl < opts.tol && dp < opts.param_tol {
            converged = true;
            break;
        }
    }
    Ok(Trajectory {
        params,
        trace,
        iterations,
        converged,
        last_step,
    })
}

pub(crate) fn boundary_flags(p: &ModelParams, last: Option<&MStep>, zero_inflated: bool) -> BoundaryFlags {
    let hi = p.mu.max(p.nu);
    BoundaryFlags {
        pi_clamped: last.is_some_and(|s| s.pi_clamped),
        pi_at_zero: p.pi < 1e-6,
        eps_clamped: last.is_some_and(|s| s.eps_clamped),
        eps_at_one: zero_inflated && p.eps > 1.0 - 1e-6,
        rate_at_zero: p.mu.min(p.nu) <= 1e-8 * hi,
    }
}

/// Keeps the fit with the highest final log-likelihood.
pub fn best_fit<R>(fits: impl IntoIterator<Item = Result<EmFit<R>>>) -> Result<EmFit<R>> {
    let mut best: Option<EmFit<R>> = None;
    let mut first_err = None;
    for f in fits {
        match f {
            Ok(f) => {
                if best.as_ref().is_none_or(|b| f.loglik > b.loglik) {
                    best = Some(f);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("at least one start"))
}
