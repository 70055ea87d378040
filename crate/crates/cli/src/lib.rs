//! Batch driver: ingest counts, fit, compare, simulate and run coverage
//! studies, writing CSV tables and versioned JSON reports.

pub mod config;
pub mod coverage;
pub mod io;
pub mod report;

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use zipm_core::bayes::{empirical_bayes_mixture, empirical_bayes_zipm, PosteriorPhi, PriorMode};
use zipm_core::em::{BoundaryFlags, EmFit};
use zipm_core::em_mixture::{ci_theta_mixture, fit_em_mixture, observed_info_mixture};
use zipm_core::em_zipm::{ci_theta_zipm, fit_em_zipm, observed_info_zipm};
use zipm_core::integrated::{IntegratedCounts, IntegratedMixture};
use zipm_core::mcmc::mcmc_posterior_theta;
use zipm_core::observed::{
    ci_theta_arcsine, ci_theta_lognormal, conjugate_posterior_observed, mile, mle_observed, split_from_data,
};
use zipm_core::simulate::{simulate_replicate, SimConfig};
use zipm_core::ztp::ztp_discrepancy_report;
use zipm_core::{IntervalEstimate, ModelParams};

use crate::config::*;
use crate::coverage::{run_coverage_study, CoverageConfig, Estimator};
use crate::io::{fmt_f64, ingest_counts, rows, CountTable, Format, TableJson};
use crate::report::{write_json, write_table, Report};

#[derive(Parser, Debug)]
#[command(name = "zipm", version, about = "Rate-ratio inference for zero-inflated Poisson mixtures")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Every cell observable
    Mixture,
    /// Zero-inflated
    Zipm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Likelihood {
    /// Treat the counts as fully observable and integrate out the weight
    /// and the common rate
    Mixture,
    /// Also integrate out the observability of the zero cells
    Counts,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate one data set from the model
    Simulate {
        #[command(flatten)]
        design: DesignArgs,
        /// Replicate index within the seeded run
        #[arg(long)]
        replicate: Option<u64>,
    },
    /// Intervals and posterior for the ratio when site labels are known
    FitObserved {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        prior: PriorArgs,
        /// Zero-based indices of the rare sites (overrides labels in the file)
        #[arg(long, value_delimiter = ',')]
        rare_sites: Option<Vec<usize>>,
    },
    /// EM fit of the plain two-component mixture
    FitMixture {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        em: EmArgs,
    },
    /// EM fit of the zero-inflated mixture
    FitZipm {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        em: EmArgs,
    },
    /// Empirical-Bayes posterior of the ratio after an EM fit
    FitEb {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        em: EmArgs,
        #[command(flatten)]
        prior: PriorArgs,
        #[arg(long, value_enum)]
        regime: Option<Regime>,
    },
    /// Integrated log-likelihood of the ratio over a log-spaced grid
    LoglikCurve {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        prior: PriorArgs,
        #[command(flatten)]
        curve: CurveArgs,
        #[arg(long, value_enum)]
        likelihood: Option<Likelihood>,
    },
    /// Metropolis sample from the posterior of the ratio
    PosteriorMcmc {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        prior: PriorArgs,
        #[command(flatten)]
        mcmc: McmcArgs,
        #[arg(long, value_enum)]
        likelihood: Option<Likelihood>,
    },
    /// Compare the nonzero-count law of the model with a zero-truncated
    /// Poisson mixture
    ZtpCompare {
        #[command(flatten)]
        design: DesignArgs,
        #[command(flatten)]
        ztp: ZtpArgs,
    },
    /// Simulated coverage of the interval estimators
    CoverageStudy {
        #[command(flatten)]
        design: DesignArgs,
        #[command(flatten)]
        em: EmArgs,
        #[command(flatten)]
        prior: PriorArgs,
        #[command(flatten)]
        coverage: CoverageArgs,
    },
}

/// A result or the reason there is none.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Maybe<T> {
    Ok(T),
    Error(String),
}

impl<T> From<zipm_core::Result<T>> for Maybe<T> {
    fn from(r: zipm_core::Result<T>) -> Self {
        match r {
            Ok(v) => Maybe::Ok(v),
            Err(e) => Maybe::Error(e.to_string()),
        }
    }
}

fn interval_rows(items: &[(&str, &Maybe<IntervalEstimate>)]) -> Vec<Vec<String>> {
    items
        .iter()
        .filter_map(|(name, m)| match m {
            Maybe::Ok(ci) => Some(vec![
                name.to_string(),
                fmt_f64(ci.point),
                fmt_f64(ci.lower),
                fmt_f64(ci.upper),
                fmt_f64(ci.level),
            ]),
            Maybe::Error(_) => None,
        })
        .collect()
}

const INTERVAL_HEADER: [&str; 5] = ["method", "point", "lower", "upper", "level"];

#[derive(Debug, Serialize)]
struct FitSummary<'a> {
    params: &'a ModelParams,
    theta: f64,
    loglik: f64,
    iterations: usize,
    converged: bool,
    boundary: &'a BoundaryFlags,
    /// Posterior probability that each site is rare.
    rare_site_probability: &'a [f64],
}

impl<'a> FitSummary<'a> {
    fn new<R>(fit: &'a EmFit<R>, yhat: &'a [f64]) -> Self {
        Self {
            params: &fit.params,
            theta: fit.theta,
            loglik: fit.loglik,
            iterations: fit.iterations,
            converged: fit.converged,
            boundary: &fit.boundary,
            rare_site_probability: yhat,
        }
    }
}

fn load(input: &InputArgs) -> anyhow::Result<CountTable> {
    let (path, format) = input.path()?;
    ingest_counts(path, format).with_context(|| format!("reading {}", path.display()))
}

fn trace_rows(trace: &[f64]) -> Vec<Vec<String>> {
    trace.iter().enumerate().map(|(i, l)| vec![i.to_string(), fmt_f64(*l)]).collect()
}

/// Runs one invocation and returns the files written.
pub fn run(cli: Cli) -> anyhow::Result<Vec<PathBuf>> {
    let file = FileConfig::load(cli.common.config.as_deref())?;
    let common = resolve_common(cli.common, &file);
    let level = common.level()?;
    let seed = common.seed();
    let mut written = Vec::new();
    match cli.command {
        Command::Simulate { design, replicate } => {
            let design = design.merge(file.design);
            let cfg = SimConfig {
                grid: design.grid()?,
                params: design.params()?,
                seed,
                replicates: 1,
            };
            let ds = simulate_replicate(&cfg, replicate.unwrap_or(0))?;
            let format = common.format.unwrap_or(Format::Csv);
            let path = common.output_path("simulated", format);
            let table = CountTable {
                y: ds.y.clone(),
                m: ds.m.clone(),
                ..CountTable::new(ds.grid.clone(), ds.n.clone().expect("simulation fills n"))
            };
            match format {
                Format::Csv => {
                    let f = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                    io::write_csv(&table, std::io::BufWriter::new(f))?;
                    written.push(path);
                }
                Format::Json => {
                    let mut body = TableJson::from_table(&table);
                    body.z = ds.z.as_ref().map(rows);
                    let config = json!({ "common": common, "design": design, "simulation": cfg, "replicate": replicate.unwrap_or(0) });
                    emit_json(path, &Report::new("simulate", &config, body), &mut written)?;
                }
            }
        }
        Command::FitObserved { input, prior, rare_sites } => {
            let input = input.merge(file.input);
            let prior_args = prior.merge(file.prior);
            let prior = prior_args.spec()?;
            let table = load(&input)?;
            let y = match rare_sites {
                Some(idx) => {
                    let mut y = vec![false; table.grid.sites()];
                    for j in idx {
                        if j >= y.len() {
                            bail!("rare site index {j} out of range for {} sites", y.len());
                        }
                        y[j] = true;
                    }
                    y
                }
                None => table.y.clone().context("site labels needed: give --rare-sites or a JSON input with `y`")?,
            };
            let m = table.m.as_ref().unwrap_or(&table.n);
            let split = split_from_data(&y, m, &table.grid)?;
            let lognormal: Maybe<_> = ci_theta_lognormal(&split, level).into();
            let arcsine: Maybe<_> = ci_theta_arcsine(&split, level).into();
            let mile: Maybe<_> = mile(&split, prior.delta, level).into();
            let posterior = conjugate_posterior_observed(&split, &prior);
            let credible: Maybe<_> = posterior.clone().and_then(|p| p.credible_interval(level)).into();
            let format = common.format.unwrap_or(Format::Json);
            let path = common.output_path("fit-observed", format);
            match format {
                Format::Csv => {
                    let rows = interval_rows(&[
                        ("lognormal", &lognormal),
                        ("arcsine", &arcsine),
                        ("mile", &mile),
                        ("posterior", &credible),
                    ]);
                    write_table(&path, &INTERVAL_HEADER, &rows)?;
                    written.push(path);
                }
                Format::Json => {
                    let body = json!({
                        "split": split,
                        "mle": Maybe::from(mle_observed(&split)),
                        "lognormal": lognormal,
                        "arcsine": arcsine,
                        "mile": mile,
                        "posterior": Maybe::from(posterior.map(|p| json!({ "phi": p, "mean": Maybe::from(p.mean()) }))),
                        "credible": credible,
                    });
                    let rare: Vec<usize> = (0..y.len()).filter(|&j| y[j]).collect();
                    let config = json!({ "common": common, "input": input, "prior": prior, "rare_sites": rare });
                    emit_json(path, &Report::new("fit-observed", &config, body), &mut written)?;
                }
            }
        }
        Command::FitMixture { input, em } => {
            let input = input.merge(file.input);
            let em = em.merge(file.em);
            let table = load(&input)?;
            let fit = fit_em_mixture(&table.n, &table.grid, None, &em.options())?;
            let info = observed_info_mixture(&table.n, &table.grid, &fit.params);
            let ses: Maybe<_> = info.as_ref().map_err(Clone::clone).and_then(|i| i.info.standard_errors()).into();
            let ci: Maybe<_> = info.and_then(|i| ci_theta_mixture(&fit, &i.info, level)).into();
            let config = json!({ "common": common, "input": input, "em": em.options() });
            emit_fit(&common, "fit-mixture", &config, FitSummary::new(&fit, &fit.responsibilities), &["pi", "mu", "nu"], ses, ci, &fit.loglik_trace, &mut written)?;
        }
        Command::FitZipm { input, em } => {
            let input = input.merge(file.input);
            let em = em.merge(file.em);
            let table = load(&input)?;
            let fit = fit_em_zipm(&table.n, &table.grid, None, &em.options())?;
            let info = observed_info_zipm(&table.n, &table.grid, &fit.params);
            let ses: Maybe<_> = info.as_ref().map_err(Clone::clone).and_then(|i| i.info.standard_errors()).into();
            let ci: Maybe<_> = info.and_then(|i| ci_theta_zipm(&fit, &i.info, level)).into();
            let config = json!({ "common": common, "input": input, "em": em.options() });
            emit_fit(&common, "fit-zipm", &config, FitSummary::new(&fit, &fit.responsibilities.yhat), &["pi", "eps", "mu", "nu"], ses, ci, &fit.loglik_trace, &mut written)?;
        }
        Command::FitEb { input, em, prior, regime } => {
            let input = input.merge(file.input);
            let em = em.merge(file.em);
            let prior_args = prior.merge(file.prior);
            let prior = prior_args.spec()?;
            let mode = if prior_args.improper.unwrap_or(false) {
                PriorMode::Improper
            } else {
                PriorMode::Proper
            };
            let regime = regime.unwrap_or(Regime::Zipm);
            let table = load(&input)?;
            let (summary, eb) = match regime {
                Regime::Mixture => {
                    let fit = fit_em_mixture(&table.n, &table.grid, None, &em.options())?;
                    let eb = empirical_bayes_mixture(&table.n, &table.grid, &fit, &prior, mode);
                    (serde_json::to_value(FitSummary::new(&fit, &fit.responsibilities))?, eb)
                }
                Regime::Zipm => {
                    let fit = fit_em_zipm(&table.n, &table.grid, None, &em.options())?;
                    let eb = empirical_bayes_zipm(&table.n, &table.grid, &fit, &prior, mode);
                    (serde_json::to_value(FitSummary::new(&fit, &fit.responsibilities.yhat))?, eb)
                }
            };
            let eb = eb?;
            let credible: Maybe<_> = eb.posterior.credible_interval(level).into();
            let format = common.format.unwrap_or(Format::Json);
            let path = common.output_path("fit-eb", format);
            match format {
                Format::Csv => {
                    write_table(&path, &INTERVAL_HEADER, &interval_rows(&[("empirical-bayes", &credible)]))?;
                    written.push(path);
                }
                Format::Json => {
                    let body = json!({ "regime": regime, "fit": summary, "estimate": eb.estimate, "posterior": eb.posterior, "credible": credible });
                    let config = json!({ "common": common, "input": input, "em": em.options(), "prior": prior, "mode": mode });
                    emit_json(path, &Report::new("fit-eb", &config, body), &mut written)?;
                }
            }
        }
        Command::LoglikCurve { input, prior, curve, likelihood } => {
            let input = input.merge(file.input);
            let prior_args = prior.merge(file.prior);
            let curve = curve.merge(file.curve);
            let prior = prior_args.spec()?;
            let likelihood = likelihood.unwrap_or(Likelihood::Mixture);
            let table = load(&input)?;
            let thetas = curve.grid()?;
            let points: Vec<(f64, f64, f64)> = match likelihood {
                Likelihood::Mixture => {
                    let model = IntegratedMixture::new(&table.n, &table.grid, &prior)?;
                    thetas.iter().map(|&t| Ok((t, model.loglik(t)?, 0.0))).collect::<zipm_core::Result<_>>()?
                }
                Likelihood::Counts => {
                    let model = IntegratedCounts::new(&table.n, &table.grid, &prior)?;
                    match curve.mc_samples {
                        None => thetas.iter().map(|&t| Ok((t, model.exact(t)?, 0.0))).collect::<zipm_core::Result<_>>()?,
                        Some(k) => thetas
                            .iter()
                            .map(|&t| {
                                let e = model.monte_carlo(t, k, seed, curve.mc_proposal.unwrap_or(0.5))?;
                                Ok((t, e.value, e.std_error))
                            })
                            .collect::<zipm_core::Result<_>>()?,
                    }
                }
            };
            let format = common.format.unwrap_or(Format::Csv);
            let path = common.output_path("loglik-curve", format);
            match format {
                Format::Csv => {
                    let rows: Vec<_> = points.iter().map(|p| vec![fmt_f64(p.0), fmt_f64(p.1), fmt_f64(p.2)]).collect();
                    write_table(&path, &["theta", "loglik", "std_error"], &rows)?;
                    written.push(path);
                }
                Format::Json => {
                    let body = json!({
                        "likelihood": likelihood,
                        "theta": points.iter().map(|p| p.0).collect::<Vec<_>>(),
                        "loglik": points.iter().map(|p| p.1).collect::<Vec<_>>(),
                        "std_error": points.iter().map(|p| p.2).collect::<Vec<_>>(),
                    });
                    let config = json!({ "common": common, "input": input, "prior": prior, "curve": curve });
                    emit_json(path, &Report::new("loglik-curve", &config, body), &mut written)?;
                }
            }
        }
        Command::PosteriorMcmc { input, prior, mcmc, likelihood } => {
            let input = input.merge(file.input);
            let prior_args = prior.merge(file.prior);
            let mcmc = mcmc.merge(file.mcmc);
            let prior = prior_args.spec()?;
            let likelihood = likelihood.unwrap_or(Likelihood::Mixture);
            let table = load(&input)?;
            let phi = PosteriorPhi::new(prior.alpha, prior.beta, table.grid.total_exposure(), prior_args.prior_r.unwrap_or(0.5))?;
            let opts = mcmc.options(seed);
            let chain = match likelihood {
                Likelihood::Mixture => {
                    let model = IntegratedMixture::new(&table.n, &table.grid, &prior)?;
                    mcmc_posterior_theta(|t| model.loglik(t).unwrap_or(f64::NEG_INFINITY), |t| phi.log_density(t), &opts)?
                }
                Likelihood::Counts => {
                    let model = IntegratedCounts::new(&table.n, &table.grid, &prior)?;
                    model.exact(1.0)?;
                    mcmc_posterior_theta(|t| model.exact(t).unwrap_or(f64::NEG_INFINITY), |t| phi.log_density(t), &opts)?
                }
            };
            let chain_path = common.output_path("posterior-mcmc", Format::Csv);
            let rows: Vec<_> = chain.samples.iter().enumerate().map(|(i, x)| vec![i.to_string(), fmt_f64(*x)]).collect();
            write_table(&chain_path, &["iteration", "theta"], &rows)?;
            written.push(chain_path.clone());
            let quantiles: Vec<_> = [0.025, 0.25, 0.5, 0.75, 0.975]
                .iter()
                .map(|&p| json!({ "p": p, "theta": chain.quantile(p) }))
                .collect();
            let body = json!({
                "likelihood": likelihood,
                "prior_phi": phi,
                "chain_file": chain_path,
                "draws": chain.samples.len(),
                "burn_in": chain.burn_in,
                "seed": chain.seed,
                "acceptance_rate": chain.acceptance_rate,
                "mean": chain.mean(),
                "mean_se": chain.batch_means_se(|x| x),
                "quantiles": quantiles,
            });
            let config = json!({ "common": common, "input": input, "prior": prior, "prior_r": phi.r, "mcmc": opts });
            emit_json(chain_path.with_extension("json"), &Report::new("posterior-mcmc", &config, body), &mut written)?;
        }
        Command::ZtpCompare { design, ztp } => {
            let design = design.merge(file.design);
            let ztp = ztp.merge(file.ztp);
            let params = design.params()?;
            let rep = ztp_discrepancy_report(&params, ztp.exposure.unwrap_or(1.0), ztp.x_max.unwrap_or(10))?;
            let format = common.format.unwrap_or(Format::Csv);
            let path = common.output_path("ztp-compare", format);
            match format {
                Format::Csv => {
                    let rows: Vec<_> = rep
                        .rows
                        .iter()
                        .map(|r| {
                            vec![
                                r.x.to_string(),
                                fmt_f64(r.conditional),
                                fmt_f64(r.ztp_mixture),
                                fmt_f64(r.difference),
                                fmt_f64(r.identity_gap),
                            ]
                        })
                        .collect();
                    write_table(&path, &["x", "conditional", "ztp_mixture", "difference", "identity_gap"], &rows)?;
                    written.push(path);
                }
                Format::Json => {
                    let config = json!({ "common": common, "params": params, "ztp": ztp });
                    emit_json(path, &Report::new("ztp-compare", &config, rep), &mut written)?;
                }
            }
        }
        Command::CoverageStudy { design, em, prior, coverage } => {
            let design = design.merge(file.design);
            let em = em.merge(file.em);
            let prior_args = prior.merge(file.prior);
            let coverage = coverage.merge(file.coverage);
            let cfg = CoverageConfig {
                sim: SimConfig {
                    grid: design.grid()?,
                    params: design.params()?,
                    seed,
                    replicates: coverage.replicates.unwrap_or(500),
                },
                estimators: coverage.estimators.clone().unwrap_or_else(|| Estimator::ALL.to_vec()),
                level,
                em: em.options(),
                prior: prior_args.spec()?,
            };
            let rep = run_coverage_study(&cfg)?;
            let format = common.format.unwrap_or(Format::Json);
            let path = common.output_path("coverage-study", format);
            match format {
                Format::Csv => {
                    let rows: Vec<_> = rep
                        .summaries
                        .iter()
                        .map(|s| {
                            vec![
                                s.estimator.name().to_string(),
                                s.replicates.to_string(),
                                s.hits.to_string(),
                                fmt_f64(s.coverage),
                                fmt_f64(s.mean_width),
                                s.not_converged.to_string(),
                                s.boundary_fit.to_string(),
                                s.other_failures.to_string(),
                            ]
                        })
                        .collect();
                    let header = [
                        "estimator",
                        "replicates",
                        "hits",
                        "coverage",
                        "mean_width",
                        "not_converged",
                        "boundary_fit",
                        "other_failures",
                    ];
                    write_table(&path, &header, &rows)?;
                    written.push(path);
                }
                Format::Json => {
                    let config = json!({ "common": common, "study": cfg });
                    emit_json(path, &Report::new("coverage-study", &config, rep), &mut written)?;
                }
            }
        }
    }
    Ok(written)
}

#[allow(clippy::too_many_arguments)]
fn emit_fit(
    common: &CommonArgs,
    command: &str,
    config: &serde_json::Value,
    summary: FitSummary<'_>,
    names: &[&str],
    ses: Maybe<Vec<f64>>,
    ci: Maybe<IntervalEstimate>,
    trace: &[f64],
    written: &mut Vec<PathBuf>,
) -> anyhow::Result<()> {
    let format = common.format.unwrap_or(Format::Json);
    let path = common.output_path(command, format);
    match format {
        Format::Csv => write_table(&path, &["iteration", "loglik"], &trace_rows(trace))?,
        Format::Json => {
            let body = json!({
                "fit": summary,
                "parameter_names": names,
                "standard_errors": ses,
                "interval": ci,
                "loglik_trace": trace,
            });
            write_json(&path, &Report::new(command, config, body))?;
        }
    }
    written.push(path);
    Ok(())
}

fn emit_json<T: Serialize>(path: PathBuf, doc: &T, written: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    write_json(&path, doc)?;
    written.push(path);
    Ok(())
}
