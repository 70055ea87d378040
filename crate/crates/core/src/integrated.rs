//! Likelihoods of the rate ratio with the nuisance parameters integrated
//! out: the common rate against a Gamma(delta, 1) prior, the mixing weight
//! against a prior on `(0, 1/2]`, and the observability probability against
//! a Beta(eta, kappa) prior.
//!
//! Summing over rare-site sets of each size turns the mixture likelihood
//! into elementary symmetric functions of `theta^{m_j}`, evaluated by the
//! usual one-site-at-a-time recurrence in log space.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{check_support, Counts, ExposureGrid, PiPrior, PriorSpec};
use crate::numeric::{ln_beta, ln_gamma, log_add_exp, xlogy, LogSumExp};
use crate::quadrature::{integrate, QuadOptions};

/// Largest site count for which the rare-site sum is enumerated exactly.
pub const MAX_ENUMERATED_SITES: usize = 15;
/// Exact evaluation from the counts alone also enumerates the
/// observability of every zero cell.
pub const MAX_EXACT_SITES: usize = 10;
pub const MAX_EXACT_CELLS: usize = 16;

/// `ln s_k`, `k = 0..J`, for the elementary symmetric functions of
/// `theta^{m_1}, ..., theta^{m_J}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElemSymmTable {
    pub logs: Vec<f64>,
    pub theta: f64,
    pub exponents: Vec<u64>,
}

pub fn elem_symm_log(exponents: &[u64], theta: f64) -> ElemSymmTable {
    let mut logs = vec![f64::NEG_INFINITY; exponents.len() + 1];
    logs[0] = 0.0;
    for (k, &m) in exponents.iter().enumerate() {
        let term = xlogy(m as f64, theta);
        for j in (1..=k + 1).rev() {
            logs[j] = log_add_exp(logs[j], logs[j - 1] + term);
        }
    }
    ElemSymmTable {
        logs,
        theta,
        exponents: exponents.to_vec(),
    }
}

/// `ln g(j) = ln int_0^{1/2} p^j (1 - p)^{J - j} prior(p) dp` for
/// `j = 0..J`.
pub fn log_binomial_moments(prior: &PiPrior, sites: usize) -> Result<Vec<f64>> {
    prior.validate()?;
    let opts = QuadOptions {
        rel_tol: 1e-13,
        ..QuadOptions::default()
    };
    let breaks = prior.breakpoints();
    let total = sites as f64;
    (0..=sites)
        .map(|j| {
            let jf = j as f64;
            let kernel = |p: f64| xlogy(jf, p) + xlogy(total - jf, 1.0 - p);
            let peak = (jf / total).clamp(f64::MIN_POSITIVE, 0.5);
            let scale = kernel(peak);
            let mut pts = breaks.clone();
            if peak > 0.0 && peak < 0.5 {
                pts.push(peak);
                pts.sort_by(f64::total_cmp);
            }
            let mut sum = 0.0;
            for w in pts.windows(2) {
                sum += integrate(|p| (kernel(p) - scale).exp() * prior.density(p), w[0], w[1], opts)?;
            }
            Ok(scale + sum.ln())
        })
        .collect()
}

/// `ln h(l) = ln B(eta + l, kappa + K - l) - ln B(eta, kappa)` for
/// `l = 0..K`.
pub fn log_beta_moments(eta: f64, kappa: f64, cells: usize) -> Vec<f64> {
    let base = ln_beta(eta, kappa);
    let k = cells as f64;
    (0..=cells)
        .map(|l| {
            let l = l as f64;
            ln_beta(eta + l, kappa + k - l) - base
        })
        .collect()
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(domain("theta", theta, "theta > 0"))
    }
}

/// `ln Gamma(n + delta) - ln Gamma(delta) + sum_ij (n_ij ln t_i - ln n_ij!)`.
fn log_constant(counts: &Counts, grid: &ExposureGrid, delta: f64) -> f64 {
    let total = counts.total() as f64;
    ln_gamma(total + delta) - ln_gamma(delta) + counts.log_exposure_constant(grid)
}

/// Log-likelihood of the counts given the labels with the common rate
/// integrated out.
pub fn integrated_loglik_given_y(
    m: &Counts,
    grid: &ExposureGrid,
    y: &[bool],
    delta: f64,
    theta: f64,
) -> Result<f64> {
    grid.check_shape(&m.0, "m")?;
    if y.len() != grid.sites() {
        return Err(Error::DimensionMismatch("y length".into()));
    }
    if !(delta > 0.0) {
        return Err(domain("delta", delta, "delta > 0"));
    }
    check_theta(theta)?;
    let rare_total: u64 = m.site_totals().iter().zip(y).filter(|(_, &v)| v).map(|(&s, _)| s).sum();
    let r = y.iter().filter(|&&v| v).count() as f64 / y.len() as f64;
    let total = m.total() as f64;
    Ok(log_constant(m, grid, delta) + xlogy(rare_total as f64, theta)
        - (total + delta) * (grid.total_exposure() * (r * theta + 1.0 - r) + 1.0).ln())
}

/// Integrated mixture likelihood with its mixing-weight moments cached.
#[derive(Debug, Clone)]
pub struct IntegratedMixture {
    site_totals: Vec<u64>,
    total: f64,
    delta: f64,
    total_exposure: f64,
    log_g: Vec<f64>,
    constant: f64,
}

impl IntegratedMixture {
    pub fn new(m: &Counts, grid: &ExposureGrid, prior: &PriorSpec) -> Result<Self> {
        grid.check_shape(&m.0, "m")?;
        prior.validate()?;
        Ok(Self {
            site_totals: m.site_totals(),
            total: m.total() as f64,
            delta: prior.delta,
            total_exposure: grid.total_exposure(),
            log_g: log_binomial_moments(&prior.pi_prior, grid.sites())?,
            constant: log_constant(m, grid, prior.delta),
        })
    }

    pub fn loglik(&self, theta: f64) -> Result<f64> {
        check_theta(theta)?;
        let table = elem_symm_log(&self.site_totals, theta);
        let sites = self.site_totals.len() as f64;
        let mut acc = LogSumExp::new();
        for (j, (&lg, &ls)) in self.log_g.iter().zip(&table.logs).enumerate() {
            let frac = j as f64 / sites;
            let denom = self.total_exposure * (frac * theta + 1.0 - frac) + 1.0;
            acc.add(lg + ls - (self.total + self.delta) * denom.ln());
        }
        Ok(self.constant + acc.value())
    }
}

pub fn integrated_loglik_mixture(m: &Counts, grid: &ExposureGrid, prior: &PriorSpec, theta: f64) -> Result<f64> {
    IntegratedMixture::new(m, grid, prior)?.loglik(theta)
}

/// Sum over rare-site sets of `g(|s|) theta^{n_s} / (1 + base + (theta - 1) t_s)^{power}`
/// with `t_s` the observable exposure at the sites in `s`.
fn rare_set_sum(log_g: &[f64], site_n: &[f64], site_t: &[f64], base: f64, power: f64, theta: f64) -> f64 {
    let sites = site_n.len();
    let lt = theta.ln();
    let mut t_of = vec![0.0; 1 << sites];
    let mut n_of = vec![0.0; 1 << sites];
    let mut acc = LogSumExp::new();
    for mask in 0usize..(1 << sites) {
        if mask > 0 {
            let low = mask.trailing_zeros() as usize;
            let rest = mask & (mask - 1);
            t_of[mask] = t_of[rest] + site_t[low];
            n_of[mask] = n_of[rest] + site_n[low];
        }
        let size = mask.count_ones() as usize;
        let denom = 1.0 + base + (theta - 1.0) * t_of[mask];
        let nl = if n_of[mask] == 0.0 { 0.0 } else { n_of[mask] * lt };
        acc.add(log_g[size] + nl - power * denom.ln());
    }
    acc.value()
}

/// Integrated likelihood of the counts and a given observability pattern.
pub fn integrated_loglik_zn(
    n: &Counts,
    z: &Array2<bool>,
    grid: &ExposureGrid,
    prior: &PriorSpec,
    theta: f64,
) -> Result<f64> {
    grid.check_shape(&n.0, "n")?;
    grid.check_shape(z, "z")?;
    check_support(z, n)?;
    prior.validate()?;
    check_theta(theta)?;
    if grid.sites() > MAX_ENUMERATED_SITES {
        return Err(Error::SizeLimit {
            what: "sites",
            value: grid.sites(),
            max: MAX_ENUMERATED_SITES,
        });
    }
    let log_g = log_binomial_moments(&prior.pi_prior, grid.sites())?;
    let log_h = log_beta_moments(prior.eta, prior.kappa, grid.cells());
    let site_t: Vec<f64> = z
        .columns()
        .into_iter()
        .map(|c| c.iter().zip(grid.t()).filter(|(&v, _)| v).map(|(_, &t)| t).sum())
        .collect();
    let site_n: Vec<f64> = n.site_totals().iter().map(|&s| s as f64).collect();
    let observable = z.iter().filter(|&&v| v).count();
    let tz: f64 = site_t.iter().sum();
    let power = n.total() as f64 + prior.delta;
    Ok(log_constant(n, grid, prior.delta)
        + log_h[observable]
        + rare_set_sum(&log_g, &site_n, &site_t, tz, power, theta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EvalMode {
    Exact,
    /// Importance sampling of the observability of zero cells from
    /// independent Bernoulli(`proposal`) draws.
    MonteCarlo { samples: usize, seed: u64, proposal: f64 },
}

/// A log-likelihood value with the standard error of its Monte Carlo
/// estimate (zero when exact).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoglikEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Likelihood of the recorded counts alone.
#[derive(Debug, Clone)]
pub struct IntegratedCounts {
    site_n: Vec<f64>,
    /// Observable exposure per site from the nonzero cells.
    nonzero_t: Vec<f64>,
    nonzero_cells: usize,
    /// `(day, site)` of every zero cell.
    zeros: Vec<(usize, usize)>,
    t: Vec<f64>,
    power: f64,
    constant: f64,
    log_g: Vec<f64>,
    log_h: Vec<f64>,
}

impl IntegratedCounts {
    pub fn new(n: &Counts, grid: &ExposureGrid, prior: &PriorSpec) -> Result<Self> {
        grid.check_shape(&n.0, "n")?;
        prior.validate()?;
        let mut nonzero_t = vec![0.0; grid.sites()];
        let mut zeros = Vec::new();
        for ((i, j), &c) in n.0.indexed_iter() {
            if c > 0 {
                nonzero_t[j] += grid.t()[i];
            } else {
                zeros.push((i, j));
            }
        }
        Ok(Self {
            site_n: n.site_totals().iter().map(|&s| s as f64).collect(),
            nonzero_t,
            nonzero_cells: grid.cells() - zeros.len(),
            zeros,
            t: grid.t().to_vec(),
            power: n.total() as f64 + prior.delta,
            constant: log_constant(n, grid, prior.delta),
            log_g: log_binomial_moments(&prior.pi_prior, grid.sites())?,
            log_h: log_beta_moments(prior.eta, prior.kappa, grid.cells()),
        })
    }

    /// Log of the summand for the zero cells switched on in `on`, without
    /// the data constant.
    fn pattern_term(&self, on: impl Iterator<Item = usize>, theta: f64) -> f64 {
        let mut site_t = self.nonzero_t.clone();
        let mut observable = self.nonzero_cells;
        for k in on {
            let (i, j) = self.zeros[k];
            site_t[j] += self.t[i];
            observable += 1;
        }
        let tz: f64 = site_t.iter().sum();
        self.log_h[observable] + rare_set_sum(&self.log_g, &self.site_n, &site_t, tz, self.power, theta)
    }

    pub fn exact(&self, theta: f64) -> Result<f64> {
        check_theta(theta)?;
        let sites = self.site_n.len();
        let cells = self.nonzero_cells + self.zeros.len();
        if sites > MAX_EXACT_SITES {
            return Err(Error::SizeLimit {
                what: "sites",
                value: sites,
                max: MAX_EXACT_SITES,
            });
        }
        if cells > MAX_EXACT_CELLS {
            return Err(Error::SizeLimit {
                what: "cells",
                value: cells,
                max: MAX_EXACT_CELLS,
            });
        }
        let zc = self.zeros.len();
        let mut acc = LogSumExp::new();
        for mask in 0usize..(1 << zc) {
            acc.add(self.pattern_term((0..zc).filter(|k| mask >> k & 1 == 1), theta));
        }
        Ok(self.constant + acc.value())
    }

    /// Importance-sampling estimate.  Zero cells are switched on
    /// independently with probability `proposal`.  Up to
    /// [`MAX_ENUMERATED_SITES`] sites the rare-site sum is done exactly per
    /// draw; above that the rare-site set is sampled too, see
    /// [`Self::monte_carlo_sampled_sites`].
    pub fn monte_carlo(&self, theta: f64, samples: usize, seed: u64, proposal: f64) -> Result<LoglikEstimate> {
        let sample_sites = self.site_n.len() > MAX_ENUMERATED_SITES;
        self.importance(theta, samples, seed, proposal, sample_sites)
    }

    /// Like [`Self::monte_carlo`] but always samples the rare-site set, from
    /// independent per-site draws whose odds come from linearizing the
    /// summand around the expected rare exposure.
    pub fn monte_carlo_sampled_sites(
        &self,
        theta: f64,
        samples: usize,
        seed: u64,
        proposal: f64,
    ) -> Result<LoglikEstimate> {
        self.importance(theta, samples, seed, proposal, true)
    }

    fn importance(
        &self,
        theta: f64,
        samples: usize,
        seed: u64,
        proposal: f64,
        sample_sites: bool,
    ) -> Result<LoglikEstimate> {
        check_theta(theta)?;
        if samples < 2 {
            return Err(domain("samples", samples as f64, "samples >= 2"));
        }
        if !(proposal > 0.0 && proposal < 1.0) {
            return Err(domain("proposal", proposal, "0 < proposal < 1"));
        }
        let rare = if sample_sites {
            Some(self.site_proposal(theta, proposal))
        } else {
            None
        };
        let lt = theta.ln();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lp, lq) = (proposal.ln(), (-proposal).ln_1p());
        let mut log_w = Vec::with_capacity(samples);
        let mut on = Vec::with_capacity(self.zeros.len());
        let mut site_t = vec![0.0; self.site_n.len()];
        for _ in 0..samples {
            on.clear();
            let mut log_q = 0.0;
            for k in 0..self.zeros.len() {
                if rng.random_bool(proposal) {
                    on.push(k);
                    log_q += lp;
                } else {
                    log_q += lq;
                }
            }
            let term = match &rare {
                None => self.pattern_term(on.iter().copied(), theta),
                Some(rho) => {
                    site_t.copy_from_slice(&self.nonzero_t);
                    for &k in &on {
                        let (i, j) = self.zeros[k];
                        site_t[j] += self.t[i];
                    }
                    let tz: f64 = site_t.iter().sum();
                    let (mut size, mut n_s, mut t_s) = (0, 0.0, 0.0);
                    for (j, &p) in rho.iter().enumerate() {
                        if rng.random_bool(p) {
                            size += 1;
                            n_s += self.site_n[j];
                            t_s += site_t[j];
                            log_q += p.ln();
                        } else {
                            log_q += (-p).ln_1p();
                        }
                    }
                    let nl = if n_s == 0.0 { 0.0 } else { n_s * lt };
                    self.log_h[self.nonzero_cells + on.len()] + self.log_g[size] + nl
                        - self.power * (1.0 + tz + (theta - 1.0) * t_s).ln()
                }
            };
            log_w.push(term - log_q);
        }
        // Mean and variance of the weights, rescaled by the largest.
        let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = log_w.iter().map(|&l| (l - top).exp()).collect();
        let s = samples as f64;
        let mean = w.iter().sum::<f64>() / s;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (s - 1.0);
        Ok(LoglikEstimate {
            value: self.constant + top + mean.ln(),
            std_error: (var / s).sqrt() / mean,
        })
    }

    /// Per-site probabilities of the rare-site proposal.  The log summand
    /// is linearized in the rare exposure around its proposal mean and the
    /// weight moments enter through the ratio at the expected set size; a
    /// few fixed-point passes settle the centre.  Clamped away from 0 and 1
    /// to keep the weights bounded.
    fn site_proposal(&self, theta: f64, proposal: f64) -> Vec<f64> {
        let sites = self.site_n.len();
        let mut site_t = self.nonzero_t.clone();
        for &(i, j) in &self.zeros {
            site_t[j] += proposal * self.t[i];
        }
        let tz: f64 = site_t.iter().sum();
        let lt = theta.ln();
        let mut rho = vec![0.5; sites];
        for _ in 0..20 {
            let t_s: f64 = rho.iter().zip(&site_t).map(|(p, t)| p * t).sum();
            let size = (rho.iter().sum::<f64>().round() as usize).min(sites - 1);
            let prior_odds = self.log_g[size + 1] - self.log_g[size];
            let slope = self.power * (theta - 1.0) / (1.0 + tz + (theta - 1.0) * t_s);
            for j in 0..sites {
                let logit = prior_odds + self.site_n[j] * lt - slope * site_t[j];
                rho[j] = (1.0 / (1.0 + (-logit).exp())).clamp(0.02, 0.98);
            }
        }
        rho
    }
}

pub fn integrated_loglik_n(
    n: &Counts,
    grid: &ExposureGrid,
    prior: &PriorSpec,
    theta: f64,
    mode: EvalMode,
) -> Result<LoglikEstimate> {
    let model = IntegratedCounts::new(n, grid, prior)?;
    match mode {
        EvalMode::Exact => Ok(LoglikEstimate {
            value: model.exact(theta)?,
            std_error: 0.0,
        }),
        EvalMode::MonteCarlo {
            samples,
            seed,
            proposal,
        } => model.monte_carlo(theta, samples, seed, proposal),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficiencyReport {
    pub thetas: Vec<f64>,
    /// `ln f(a | theta) - ln f(b | theta)` at each grid point.
    pub offsets: Vec<f64>,
    pub mean_offset: f64,
    pub variance: f64,
    pub max_deviation: f64,
    /// Whether every offset is within `1e-9` of the mean.
    pub constant: bool,
}

/// Compares the exact count likelihoods of two data sets over a grid of
/// ratios.  Data sets that share the site totals and the zero pattern (with
/// equal exposures) differ by a constant.
pub fn sufficiency_check(
    a: &Counts,
    b: &Counts,
    grid: &ExposureGrid,
    prior: &PriorSpec,
    thetas: &[f64],
) -> Result<SufficiencyReport> {
    if thetas.is_empty() {
        return Err(Error::DimensionMismatch("empty theta grid".into()));
    }
    let fa = IntegratedCounts::new(a, grid, prior)?;
    let fb = IntegratedCounts::new(b, grid, prior)?;
    let offsets = thetas
        .iter()
        .map(|&t| Ok(fa.exact(t)? - fb.exact(t)?))
        .collect::<Result<Vec<_>>>()?;
    let k = offsets.len() as f64;
    let mean = offsets.iter().sum::<f64>() / k;
    let variance = offsets.iter().map(|o| (o - mean).powi(2)).sum::<f64>() / k;
    let max_deviation = offsets.iter().map(|o| (o - mean).abs()).fold(0.0, f64::max);
    Ok(SufficiencyReport {
        thetas: thetas.to_vec(),
        offsets,
        mean_offset: mean,
        variance,
        max_deviation,
        constant: max_deviation <= 1e-9,
    })
}
