//! Random-walk Metropolis sampler for the posterior of the ratio, run on
//! `ln theta`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcOptions {
    /// Total iterations, burn-in included.
    pub n_samples: usize,
    /// Standard deviation of the normal step on `ln theta`.
    pub proposal_sd: f64,
    pub burn_in_frac: f64,
    pub seed: u64,
    pub init_theta: f64,
}

impl Default for McmcOptions {
    fn default() -> Self {
        Self {
            n_samples: 20_000,
            proposal_sd: 0.5,
            burn_in_frac: 0.2,
            seed: 1,
            init_theta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcChain {
    /// Post-burn-in draws of theta.
    pub samples: Vec<f64>,
    /// Accepted fraction over all iterations.
    pub acceptance_rate: f64,
    pub burn_in: usize,
    pub seed: u64,
}

impl McmcChain {
    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Empirical quantile by linear interpolation between order statistics.
    pub fn quantile(&self, p: f64) -> f64 {
        let mut s = self.samples.clone();
        s.sort_by(f64::total_cmp);
        let h = p.clamp(0.0, 1.0) * (s.len() - 1) as f64;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        s[lo] + (h - lo as f64) * (s[hi] - s[lo])
    }

    /// Batch-means standard error of the chain average of `f`, using
    /// `floor(sqrt(n))` batches.
    pub fn batch_means_se<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        batch_means_se(&self.samples.iter().map(|&x| f(x)).collect::<Vec<_>>())
    }
}

pub fn batch_means_se(values: &[f64]) -> f64 {
    let n = values.len();
    let batches = (n as f64).sqrt().floor() as usize;
    if batches < 2 {
        return f64::NAN;
    }
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| values[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

/// Samples `theta` from the density proportional to
/// `exp(loglik(theta) + log_prior(theta))`.
pub fn mcmc_posterior_theta<L, P>(loglik: L, log_prior: P, opts: &McmcOptions) -> Result<McmcChain>
where
    L: Fn(f64) -> f64,
    P: Fn(f64) -> f64,
{
    if opts.n_samples == 0 {
        return Err(domain("n_samples", 0.0, "n_samples >= 1"));
    }
    if !(opts.proposal_sd > 0.0) {
        return Err(domain("proposal_sd", opts.proposal_sd, "proposal_sd > 0"));
    }
    if !(0.0..1.0).contains(&opts.burn_in_frac) {
        return Err(domain("burn_in_frac", opts.burn_in_frac, "0 <= burn_in_frac < 1"));
    }
    // Density of u = ln theta picks up the Jacobian e^u.
    let target = |u: f64| {
        let theta = u.exp();
        loglik(theta) + log_prior(theta) + u
    };
    let mut u = opts.init_theta.ln();
    let mut current = target(u);
    if !current.is_finite() {
        return Err(Error::DegenerateData(format!(
            "posterior is not finite at the starting value {}",
            opts.init_theta
        )));
    }
    let step = Normal::new(0.0, opts.proposal_sd).expect("valid sd");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let burn_in = (opts.burn_in_frac * opts.n_samples as f64).floor() as usize;
    let mut samples = Vec::with_capacity(opts.n_samples - burn_in);
    let mut accepted = 0usize;
    for it in 0..opts.n_samples {
        let proposal = u + step.sample(&mut rng);
        let cand = target(proposal);
        let log_u: f64 = rng.random::<f64>().ln();
        if cand.is_finite() && log_u < cand - current {
            u = proposal;
            current = cand;
            accepted += 1;
        }
        if it >= burn_in {
            samples.push(u.exp());
        }
    }
    Ok(McmcChain {
        samples,
        acceptance_rate: accepted as f64 / opts.n_samples as f64,
        burn_in,
        seed: opts.seed,
    })
}
