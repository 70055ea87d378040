//! Monte-Carlo coverage of the interval estimators for the rate ratio.
//!
//! Replicates are simulated on independent streams of one seed and fitted
//! in parallel; the report is identical whatever the thread count.  A
//! replicate whose fit fails counts as a miss for that estimator and is
//! tallied by failure kind.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use zipm_core::bayes::{empirical_bayes_mixture, empirical_bayes_zipm, PriorMode};
use zipm_core::em::{EmFit, EmOptions};
use zipm_core::em_mixture::{ci_theta_mixture, fit_em_mixture, observed_info_mixture};
use zipm_core::em_zipm::{ci_theta_zipm, fit_em_zipm, observed_info_zipm, ZipmResponsibilities};
use zipm_core::observed::{ci_theta_arcsine, ci_theta_lognormal, split_from_data};
use zipm_core::simulate::{simulate_replicate, SimConfig};
use zipm_core::{DataSet, Error, IntervalEstimate, PriorSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// Labelled data, log-scale interval
    Lognormal,
    /// Labelled data, arcsine interval
    Arcsine,
    /// EM on the unthinned counts, delta-method interval
    EmMixture,
    /// EM on the recorded counts, delta-method interval
    EmZipm,
    /// Empirical-Bayes credible interval after mixture EM
    EbMixture,
    /// Empirical-Bayes credible interval after zero-inflated EM
    EbZipm,
}

impl Estimator {
    pub const ALL: [Estimator; 6] = [
        Estimator::Lognormal,
        Estimator::Arcsine,
        Estimator::EmMixture,
        Estimator::EmZipm,
        Estimator::EbMixture,
        Estimator::EbZipm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Lognormal => "lognormal",
            Estimator::Arcsine => "arcsine",
            Estimator::EmMixture => "em-mixture",
            Estimator::EmZipm => "em-zipm",
            Estimator::EbMixture => "eb-mixture",
            Estimator::EbZipm => "eb-zipm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub sim: SimConfig,
    pub estimators: Vec<Estimator>,
    pub level: f64,
    pub em: EmOptions,
    pub prior: PriorSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    NotConverged,
    BoundaryFit,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Interval(IntervalEstimate),
    Failed { kind: FailureKind, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    pub replicates: usize,
    pub hits: usize,
    /// Hits over all replicates, failures included.
    pub coverage: f64,
    /// Monte-Carlo standard error of `coverage`.
    pub coverage_se: f64,
    /// Mean width over the finite intervals.
    pub mean_width: f64,
    pub not_converged: usize,
    pub boundary_fit: usize,
    pub other_failures: usize,
    /// Replicate index of each failure, for replay.
    pub failed_replicates: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub seed: u64,
    pub replicates: usize,
    pub true_theta: f64,
    pub level: f64,
    pub summaries: Vec<EstimatorSummary>,
}

fn fail(e: Error) -> Outcome {
    let kind = match e {
        Error::BoundaryFit(_) => FailureKind::BoundaryFit,
        _ => FailureKind::Other,
    };
    Outcome::Failed {
        kind,
        message: e.to_string(),
    }
}

fn not_converged() -> Outcome {
    Outcome::Failed {
        kind: FailureKind::NotConverged,
        message: "EM hit the iteration limit".into(),
    }
}

fn interval(r: zipm_core::Result<IntervalEstimate>) -> Outcome {
    r.map_or_else(fail, Outcome::Interval)
}

/// Fits are shared between the EM and empirical-Bayes estimators.
struct Fits {
    mixture: Option<zipm_core::Result<EmFit<Vec<f64>>>>,
    zipm: Option<zipm_core::Result<EmFit<ZipmResponsibilities>>>,
}

fn evaluate(cfg: &CoverageConfig, ds: &DataSet) -> Vec<Outcome> {
    let (grid, level) = (&ds.grid, cfg.level);
    let wants = |e: &[Estimator]| cfg.estimators.iter().any(|x| e.contains(x));
    let mut fits = Fits {
        mixture: None,
        zipm: None,
    };
    if wants(&[Estimator::EmMixture, Estimator::EbMixture]) {
        fits.mixture = Some(ds.m().and_then(|m| fit_em_mixture(m, grid, None, &cfg.em)));
    }
    if wants(&[Estimator::EmZipm, Estimator::EbZipm]) {
        fits.zipm = Some(ds.n().and_then(|n| fit_em_zipm(n, grid, None, &cfg.em)));
    }
    cfg.estimators
        .iter()
        .map(|&est| match est {
            Estimator::Lognormal => interval(
                ds.y().and_then(|y| split_from_data(y, ds.m()?, grid)).and_then(|s| ci_theta_lognormal(&s, level)),
            ),
            Estimator::Arcsine => interval(
                ds.y().and_then(|y| split_from_data(y, ds.m()?, grid)).and_then(|s| ci_theta_arcsine(&s, level)),
            ),
            Estimator::EmMixture | Estimator::EbMixture => match fits.mixture.as_ref().expect("fitted above") {
                Err(e) => fail(e.clone()),
                Ok(fit) if !fit.converged => not_converged(),
                Ok(fit) => {
                    let m = ds.m().expect("fit succeeded");
                    interval(if est == Estimator::EmMixture {
                        observed_info_mixture(m, grid, &fit.params).and_then(|i| ci_theta_mixture(fit, &i.info, level))
                    } else {
                        empirical_bayes_mixture(m, grid, fit, &cfg.prior, PriorMode::Proper)
                            .and_then(|eb| eb.posterior.credible_interval(level))
                    })
                }
            },
            Estimator::EmZipm | Estimator::EbZipm => match fits.zipm.as_ref().expect("fitted above") {
                Err(e) => fail(e.clone()),
                Ok(fit) if !fit.converged => not_converged(),
                Ok(fit) => {
                    let n = ds.n().expect("fit succeeded");
                    interval(if est == Estimator::EmZipm {
                        observed_info_zipm(n, grid, &fit.params).and_then(|i| ci_theta_zipm(fit, &i.info, level))
                    } else {
                        empirical_bayes_zipm(n, grid, fit, &cfg.prior, PriorMode::Proper)
                            .and_then(|eb| eb.posterior.credible_interval(level))
                    })
                }
            },
        })
        .collect()
}

/// Outcomes of one replicate, one per configured estimator.
pub fn run_replicate(cfg: &CoverageConfig, replicate: u64) -> Vec<Outcome> {
    match simulate_replicate(&cfg.sim, replicate) {
        Ok(ds) => evaluate(cfg, &ds),
        Err(e) => cfg.estimators.iter().map(|_| fail(e.clone())).collect(),
    }
}

pub fn run_coverage_study(cfg: &CoverageConfig) -> zipm_core::Result<CoverageReport> {
    if cfg.sim.replicates < 100 {
        return Err(Error::Domain {
            name: "replicates",
            value: cfg.sim.replicates as f64,
            constraint: "replicates >= 100",
        });
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::Domain {
            name: "level",
            value: cfg.level,
            constraint: "0 < level < 1",
        });
    }
    let outcomes: Vec<Vec<Outcome>> = (0..cfg.sim.replicates as u64)
        .into_par_iter()
        .map(|r| run_replicate(cfg, r))
        .collect();
    let theta = cfg.sim.params.theta();
    let summaries = cfg
        .estimators
        .iter()
        .enumerate()
        .map(|(k, &estimator)| summarize(estimator, outcomes.iter().map(|o| &o[k]), theta))
        .collect();
    Ok(CoverageReport {
        seed: cfg.sim.seed,
        replicates: cfg.sim.replicates,
        true_theta: theta,
        level: cfg.level,
        summaries,
    })
}

fn summarize<'a>(estimator: Estimator, outcomes: impl Iterator<Item = &'a Outcome>, theta: f64) -> EstimatorSummary {
    let mut s = EstimatorSummary {
        estimator,
        replicates: 0,
        hits: 0,
        coverage: 0.0,
        coverage_se: 0.0,
        mean_width: f64::NAN,
        not_converged: 0,
        boundary_fit: 0,
        other_failures: 0,
        failed_replicates: Vec::new(),
    };
    let (mut width_sum, mut widths) = (0.0, 0usize);
    for (r, o) in outcomes.enumerate() {
        s.replicates += 1;
        match o {
            Outcome::Interval(ci) => {
                s.hits += usize::from(ci.contains(theta));
                if ci.width().is_finite() {
                    width_sum += ci.width();
                    widths += 1;
                }
            }
            Outcome::Failed { kind, .. } => {
                s.failed_replicates.push(r as u64);
                match kind {
                    FailureKind::NotConverged => s.not_converged += 1,
                    FailureKind::BoundaryFit => s.boundary_fit += 1,
                    FailureKind::Other => s.other_failures += 1,
                }
            }
        }
    }
    if s.replicates > 0 {
        let n = s.replicates as f64;
        s.coverage = s.hits as f64 / n;
        s.coverage_se = (s.coverage * (1.0 - s.coverage) / n).sqrt();
    }
    if widths > 0 {
        s.mean_width = width_sum / widths as f64;
    }
    s
}
