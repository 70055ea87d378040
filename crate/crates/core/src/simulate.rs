//! Seeded generation of complete synthetic data sets.
//!
//! Replicate `r` of a run seeded with `s` draws from ChaCha8 seeded with `s`
//! on stream `r`, so any replicate can be regenerated on its own and
//! parallel runs are reproducible regardless of scheduling.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::model::{Counts, DataSet, ExposureGrid, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub grid: ExposureGrid,
    pub params: ModelParams,
    pub seed: u64,
    pub replicates: usize,
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        let p = &self.params;
        // Simulation accepts the closed unit interval so that degenerate
        // designs (no rare sites, nothing observable) can be generated.
        if !(0.0..=1.0).contains(&p.pi) {
            return Err(domain("pi", p.pi, "0 <= pi <= 1"));
        }
        if !(0.0..=1.0).contains(&p.eps) {
            return Err(domain("eps", p.eps, "0 <= eps <= 1"));
        }
        if !(p.mu >= 0.0 && p.mu.is_finite()) {
            return Err(domain("mu", p.mu, "mu >= 0"));
        }
        if !(p.nu >= 0.0 && p.nu.is_finite()) {
            return Err(domain("nu", p.nu, "nu >= 0"));
        }
        Ok(())
    }
}

/// The generator for replicate `r` of a run seeded with `seed`.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// Replicate zero of the configured run.
pub fn simulate_dataset(cfg: &SimConfig) -> Result<DataSet> {
    simulate_replicate(cfg, 0)
}

pub fn simulate_replicate(cfg: &SimConfig, replicate: u64) -> Result<DataSet> {
    cfg.validate()?;
    let mut rng = replicate_rng(cfg.seed, replicate);
    Ok(draw(&cfg.grid, &cfg.params, &mut rng))
}

/// Lazily generated replicates `0..cfg.replicates`.
pub fn simulate_replicates(cfg: &SimConfig) -> impl Iterator<Item = Result<DataSet>> + '_ {
    (0..cfg.replicates as u64).map(move |r| simulate_replicate(cfg, r))
}

fn poisson_draw<R: Rng>(dist: &Option<Poisson<f64>>, rng: &mut R) -> u64 {
    dist.as_ref().map_or(0, |d| d.sample(rng) as u64)
}

fn draw<R: Rng>(grid: &ExposureGrid, p: &ModelParams, rng: &mut R) -> DataSet {
    let (days, sites) = (grid.days(), grid.sites());
    let sampler = |mean: f64| Poisson::new(mean).ok();
    let rare: Vec<_> = grid.t().iter().map(|&t| sampler(t * p.mu)).collect();
    let common: Vec<_> = grid.t().iter().map(|&t| sampler(t * p.nu)).collect();

    let y: Vec<bool> = (0..sites).map(|_| rng.random_bool(p.pi)).collect();
    let mut z = Array2::from_elem((days, sites), false);
    let mut m = Array2::zeros((days, sites));
    for i in 0..days {
        for j in 0..sites {
            z[(i, j)] = rng.random_bool(p.eps);
            let dist = if y[j] { &rare[i] } else { &common[i] };
            m[(i, j)] = poisson_draw(dist, rng);
        }
    }
    let n = Array2::from_shape_fn((days, sites), |ij| if z[ij] { m[ij] } else { 0 });
    DataSet {
        grid: grid.clone(),
        y: Some(y),
        z: Some(z),
        m: Some(Counts::new(m)),
        n: Some(Counts::new(n)),
    }
}
