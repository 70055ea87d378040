//! EM for the plain two-component mixture, observed when every cell is
//! observable.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::em::{best_fit, boundary_flags, iterate, EmFit, EmOptions, MStep};
use crate::error::{Error, Result};
use crate::info::{add_outer, InfoMatrix};
use crate::interval::IntervalEstimate;
use crate::model::{observed_loglik, Counts, ExposureGrid, ModelParams};
use crate::numeric::{log_add_exp, normal_critical, sigmoid_pair, xlogy};

/// Posterior log-odds that each site is rare.  The day-level factors
/// `t_i^m / m!` are common to both components and cancel.
fn site_log_odds(totals: &[u64], t_sum: f64, p: &ModelParams) -> Vec<f64> {
    let prior = p.pi.ln() - (-p.pi).ln_1p();
    totals
        .iter()
        .map(|&s| {
            let s = s as f64;
            prior - t_sum * (p.mu - p.nu) + xlogy(s, p.mu) - xlogy(s, p.nu)
        })
        .collect()
}

/// Posterior probability that each site belongs to the rare component.
pub fn estep_mixture(m: &Counts, grid: &ExposureGrid, p: &ModelParams) -> Vec<f64> {
    site_log_odds(&m.site_totals(), grid.t_sum(), p)
        .into_iter()
        .map(|d| sigmoid_pair(d).0)
        .collect()
}

pub fn mstep_mixture(m: &Counts, grid: &ExposureGrid, yhat: &[f64]) -> Result<MStep> {
    if yhat.len() != m.sites() {
        return Err(Error::DimensionMismatch("responsibilities length".into()));
    }
    let rare_weight: f64 = yhat.iter().sum();
    let common_weight: f64 = yhat.iter().map(|q| 1.0 - q).sum();
    if rare_weight <= 0.0 {
        return Err(Error::EmptyComponent("rare"));
    }
    if common_weight <= 0.0 {
        return Err(Error::EmptyComponent("common"));
    }
    let totals = m.site_totals();
    let rare_count: f64 = totals.iter().zip(yhat).map(|(&s, &q)| s as f64 * q).sum();
    let common_count: f64 = totals.iter().zip(yhat).map(|(&s, &q)| s as f64 * (1.0 - q)).sum();
    let t_sum = grid.t_sum();
    let raw_pi = rare_weight / yhat.len() as f64;
    Ok(MStep {
        params: ModelParams::mixture(
            raw_pi.min(0.5),
            rare_count / (t_sum * rare_weight),
            common_count / (t_sum * common_weight),
        ),
        pi_clamped: raw_pi > 0.5,
        eps_clamped: false,
    })
}

/// Ratio estimate written directly in terms of the imputed labels:
/// `(1/ybar - 1) / (mbar / mbar_y - 1)`.  It does not involve the exposures.
pub fn theta_from_imputation(m: &Counts, yhat: &[f64]) -> Result<f64> {
    let ybar = yhat.iter().sum::<f64>() / yhat.len() as f64;
    let total = m.total() as f64;
    let rare: f64 = m.site_totals().iter().zip(yhat).map(|(&s, &q)| s as f64 * q).sum();
    if ybar <= 0.0 || rare <= 0.0 {
        return Err(Error::ZeroDenominator("no imputed rare mass"));
    }
    Ok((1.0 / ybar - 1.0) / (total / rare - 1.0))
}

/// Exact 1-d two-means clustering by scanning every split of the sorted
/// values.  Returns `(low cluster, high cluster)` as `(weight, mean)` pairs.
pub(crate) fn two_means(values: &mut [f64]) -> Option<((f64, f64), (f64, f64))> {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n < 2 || values[0] == values[n - 1] {
        return None;
    }
    let mut prefix = vec![0.0; n + 1];
    let mut prefix_sq = vec![0.0; n + 1];
    for (k, &v) in values.iter().enumerate() {
        prefix[k + 1] = prefix[k] + v;
        prefix_sq[k + 1] = prefix_sq[k] + v * v;
    }
    let sse = |a: usize, b: usize| {
        let s = prefix[b] - prefix[a];
        prefix_sq[b] - prefix_sq[a] - s * s / (b - a) as f64
    };
    let mut best = (f64::INFINITY, 0);
    for k in 1..n {
        // Only split between distinct values.
        if values[k] == values[k - 1] {
            continue;
        }
        let cost = sse(0, k) + sse(k, n);
        if cost < best.0 {
            best = (cost, k);
        }
    }
    let k = best.1;
    let nf = n as f64;
    Some((
        (k as f64 / nf, prefix[k] / k as f64),
        ((n - k) as f64 / nf, (prefix[n] - prefix[k]) / (n - k) as f64),
    ))
}

/// Starting values from two-means clustering of the per-site rates
/// `m_j / sum_i t_i`, falling back to per-cell rates `m_ij / t_i` when every
/// site has the same rate.  The smaller cluster (the lower-mean one on a
/// tie) seeds the rare component.
pub fn init_histogram_mixture(m: &Counts, grid: &ExposureGrid) -> Result<ModelParams> {
    grid.check_shape(&m.0, "m")?;
    let t_sum = grid.t_sum();
    let mut site_rates: Vec<f64> = m.site_totals().iter().map(|&s| s as f64 / t_sum).collect();
    let overall = site_rates.iter().sum::<f64>() / site_rates.len() as f64;
    let split = two_means(&mut site_rates).or_else(|| {
        let mut cell_rates: Vec<f64> = m.0.indexed_iter().map(|((i, _), &c)| c as f64 / grid.t()[i]).collect();
        two_means(&mut cell_rates)
    });
    let (low, high) = split.ok_or_else(|| Error::DegenerateData("all per-cell rates are identical".into()))?;
    let (rare, common) = if high.0 < low.0 { (high, low) } else { (low, high) };
    Ok(seed_params(rare, common, overall, 1.0))
}

pub(crate) fn seed_params(rare: (f64, f64), common: (f64, f64), overall: f64, eps: f64) -> ModelParams {
    let floor = 1e-2 * overall;
    ModelParams::new(rare.0.min(0.5), eps, rare.1.max(floor), common.1.max(floor))
}

/// The same start with the component roles swapped.  A clustering that
/// picks the wrong cluster as the minority leaves EM stuck against the
/// `pi <= 1/2` cap, so automatic fits also try this start.
pub(crate) fn mirrored(p: &ModelParams) -> ModelParams {
    ModelParams::new((1.0 - p.pi).min(0.5), p.eps, p.nu, p.mu)
}

pub fn fit_em_mixture(
    m: &Counts,
    grid: &ExposureGrid,
    init: Option<ModelParams>,
    opts: &EmOptions,
) -> Result<EmFit<Vec<f64>>> {
    grid.check_shape(&m.0, "m")?;
    match init {
        Some(p) => fit_from(m, grid, ModelParams { eps: 1.0, ..p }, opts),
        None => {
            let start = init_histogram_mixture(m, grid)?;
            best_fit([start, mirrored(&start)].map(|s| fit_from(m, grid, s, opts)))
        }
    }
}

fn fit_from(m: &Counts, grid: &ExposureGrid, init: ModelParams, opts: &EmOptions) -> Result<EmFit<Vec<f64>>> {
    init.validate()?;
    let traj = iterate(
        init,
        opts,
        |p| mstep_mixture(m, grid, &estep_mixture(m, grid, p)),
        |p| observed_loglik(m, grid, p, false),
    )?;
    let params = traj.params;
    Ok(EmFit {
        theta: params.theta(),
        loglik: traj.trace[traj.trace.len() - 1],
        boundary: boundary_flags(&params, traj.last_step.as_ref(), false),
        responsibilities: estep_mixture(m, grid, &params),
        params,
        loglik_trace: traj.trace,
        iterations: traj.iterations,
        converged: traj.converged,
    })
}

/// Observed information at `(pi, mu, nu)` together with its building
/// blocks.
#[derive(Debug, Clone, Serialize)]
pub struct MixtureInfo {
    pub info: InfoMatrix,
    /// Posterior rare-site probabilities.
    pub p: Vec<f64>,
    /// `ln[pi e^{-T mu} mu^{m_j} + (1 - pi) e^{-T nu} nu^{m_j}]` with
    /// `T = sum_i t_i`.
    pub log_gamma: Vec<f64>,
    /// `sqrt(pi (1 - pi))` times the gradient of the site log-odds.
    pub delta_vecs: Vec<[f64; 3]>,
    /// Weight of each rank-one correction, `e^{-T(mu + nu)} (mu nu)^{m_j} / gamma_j^2`.
    pub weights: Vec<f64>,
}

/// Observed information `D - sum_j w_j delta_j delta_j'` in the order
/// `(pi, mu, nu)`, where `D` is the conditional expectation of the
/// complete-data information.
pub fn observed_info_mixture(m: &Counts, grid: &ExposureGrid, p: &ModelParams) -> Result<MixtureInfo> {
    grid.check_shape(&m.0, "m")?;
    if !(p.pi > 0.0 && p.pi < 1.0) {
        return Err(Error::BoundaryParams("pi must lie strictly inside (0, 1)"));
    }
    if !(p.mu > 0.0 && p.nu > 0.0) {
        return Err(Error::BoundaryParams("rates must be positive"));
    }
    let totals = m.site_totals();
    let big_t = grid.t_sum();
    let (pi, mu, nu) = (p.pi, p.mu, p.nu);
    let sites = totals.len() as f64;

    let mut probs = Vec::with_capacity(totals.len());
    let mut log_gamma = Vec::with_capacity(totals.len());
    let mut delta_vecs = Vec::with_capacity(totals.len());
    let mut weights = Vec::with_capacity(totals.len());
    let mut d = [0.0; 3];
    let root = (pi * (1.0 - pi)).sqrt();
    for &s in &totals {
        let s = s as f64;
        let la = pi.ln() - big_t * mu + s * mu.ln();
        let lb = (-pi).ln_1p() - big_t * nu + s * nu.ln();
        let lg = log_add_exp(la, lb);
        let q = (la - lg).exp();
        d[0] += q;
        d[1] += s * q;
        d[2] += s * (1.0 - q);
        probs.push(q);
        log_gamma.push(lg);
        weights.push((-big_t * (mu + nu) + s * (mu * nu).ln() - 2.0 * lg).exp());
        delta_vecs.push([
            root / (pi * (1.0 - pi)),
            root * (s / mu - big_t),
            -root * (s / nu - big_t),
        ]);
    }
    let pbar = d[0] / sites;
    let mut mat = DMatrix::zeros(3, 3);
    mat[(0, 0)] = sites * ((1.0 - 2.0 * pi) * pbar + pi * pi) / (pi * pi * (1.0 - pi) * (1.0 - pi));
    mat[(1, 1)] = d[1] / (mu * mu);
    mat[(2, 2)] = d[2] / (nu * nu);
    for (w, dv) in weights.iter().zip(&delta_vecs) {
        add_outer(&mut mat, -w, dv);
    }
    Ok(MixtureInfo {
        info: InfoMatrix {
            labels: vec!["pi", "mu", "nu"],
            matrix: mat,
        },
        p: probs,
        log_gamma,
        delta_vecs,
        weights,
    })
}

/// Delta-method interval for the ratio.
pub fn ci_theta_mixture(fit: &EmFit<Vec<f64>>, info: &InfoMatrix, level: f64) -> Result<IntervalEstimate> {
    if fit.boundary.any() {
        return Err(Error::BoundaryFit(fit.boundary.describe()));
    }
    let p = &fit.params;
    let var = info.ratio_variance(p.mu, p.nu)?;
    Ok(IntervalEstimate::wald(p.theta(), normal_critical(level) * var.sqrt(), level))
}
