//! Settings from flags and an optional TOML file.  Flags win over the file
//! and the file wins over built-in defaults.  The file has top-level keys
//! for the shared settings and one table per group, for example
//!
//! ```toml
//! seed = 7
//! [design]
//! t = [0.5, 1.0, 1.5]
//! sites = 100
//! [em]
//! tol = 1e-10
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use serde::{Deserialize, Serialize};
use zipm_core::em::EmOptions;
use zipm_core::mcmc::McmcOptions;
use zipm_core::{ExposureGrid, ModelParams, PiPrior, PriorSpec};

use crate::coverage::Estimator;
use crate::io::Format;

/// Fills each unset field of `self` from `lower`.
pub trait Merge {
    fn merge(self, lower: Self) -> Self;
}

macro_rules! merge_fields {
    ($ty:ty { $($f:ident),* $(,)? }) => {
        impl Merge for $ty {
            fn merge(self, lower: Self) -> Self {
                Self { $($f: self.$f.or(lower.$f)),* }
            }
        }
    };
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommonArgs {
    /// TOML file with default settings
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output file; defaults to a command-specific name in the output directory
    #[arg(long, short, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Output directory
    #[arg(long, env = "ZIPM_OUT_DIR", global = true)]
    pub out_dir: Option<PathBuf>,
    /// Output format
    #[arg(long, value_enum, global = true)]
    pub format: Option<Format>,
    /// Random seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Nominal interval level
    #[arg(long, global = true)]
    pub level: Option<f64>,
}

impl CommonArgs {
    fn merge_file(self, f: &FileConfig) -> Self {
        Self {
            config: self.config,
            out: self.out,
            out_dir: self.out_dir.or_else(|| f.out_dir.clone()),
            format: self.format.or(f.format),
            seed: Some(self.seed.or(f.seed).unwrap_or(1)),
            level: Some(self.level.or(f.level).unwrap_or(0.95)),
        }
    }

    pub fn level(&self) -> anyhow::Result<f64> {
        let level = self.level.unwrap_or(0.95);
        if !(level > 0.0 && level < 1.0) {
            bail!("--level must lie in (0, 1), got {level}");
        }
        Ok(level)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    /// Where to write: `--out`, else `<out dir>/<name>.<ext>`.
    pub fn output_path(&self, name: &str, format: Format) -> PathBuf {
        match &self.out {
            Some(p) => p.clone(),
            None => self
                .out_dir
                .clone()
                .unwrap_or_else(|| PathBuf::from("."))
                .join(format!("{name}.{}", format.extension())),
        }
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputArgs {
    /// Count table (CSV `t,<sites>` or JSON `{t, n}`)
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// Input format; inferred from the extension when absent
    #[arg(long, value_enum)]
    pub input_format: Option<Format>,
}
merge_fields!(InputArgs { input, input_format });

impl InputArgs {
    pub fn path(&self) -> anyhow::Result<(&Path, Format)> {
        let path = self.input.as_deref().context("an input file is required (--input)")?;
        if !path.exists() {
            bail!("input file {} does not exist", path.display());
        }
        Ok((path, self.input_format.unwrap_or_else(|| Format::from_path(path))))
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignArgs {
    /// Day exposures, comma separated
    #[arg(long, value_delimiter = ',')]
    pub t: Option<Vec<f64>>,
    /// Number of days with unit exposure, used when --t is absent
    #[arg(long)]
    pub days: Option<usize>,
    /// Number of sites
    #[arg(long)]
    pub sites: Option<usize>,
    /// Rare-component weight
    #[arg(long)]
    pub pi: Option<f64>,
    /// Probability that a cell is observable
    #[arg(long)]
    pub eps: Option<f64>,
    /// Rare-component rate
    #[arg(long)]
    pub mu: Option<f64>,
    /// Common-component rate
    #[arg(long)]
    pub nu: Option<f64>,
    /// Rate ratio; sets the rare rate to theta * nu when --mu is absent
    #[arg(long)]
    pub theta: Option<f64>,
}
merge_fields!(DesignArgs { t, days, sites, pi, eps, mu, nu, theta });

impl DesignArgs {
    pub fn grid(&self) -> anyhow::Result<ExposureGrid> {
        let t = match (&self.t, self.days) {
            (Some(t), _) => t.clone(),
            (None, days) => vec![1.0; days.unwrap_or(10)],
        };
        Ok(ExposureGrid::new(t, self.sites.unwrap_or(100))?)
    }

    pub fn params(&self) -> anyhow::Result<ModelParams> {
        let nu = self.nu.unwrap_or(2.0);
        let mu = match (self.mu, self.theta) {
            (Some(mu), _) => mu,
            (None, Some(theta)) => theta * nu,
            (None, None) => 3.0 * nu,
        };
        Ok(ModelParams::new(self.pi.unwrap_or(0.3), self.eps.unwrap_or(0.8), mu, nu))
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmArgs {
    /// Log-likelihood change below which EM may stop
    #[arg(long)]
    pub tol: Option<f64>,
    /// Parameter change below which EM may stop
    #[arg(long)]
    pub param_tol: Option<f64>,
    /// Iteration limit
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Cap the observability probability at 1/2
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub clamp_eps: Option<bool>,
    /// Hold the observability probability at this value
    #[arg(long)]
    pub fixed_eps: Option<f64>,
}
merge_fields!(EmArgs { tol, param_tol, max_iter, clamp_eps, fixed_eps });

impl EmArgs {
    pub fn options(&self) -> EmOptions {
        let d = EmOptions::default();
        EmOptions {
            tol: self.tol.unwrap_or(d.tol),
            param_tol: self.param_tol.unwrap_or(d.param_tol),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            clamp_eps: self.clamp_eps.unwrap_or(d.clamp_eps),
            fixed_eps: self.fixed_eps.or(d.fixed_eps),
        }
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorArgs {
    /// First shape of the conjugate prior on the ratio
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Second shape of the conjugate prior on the ratio
    #[arg(long)]
    pub beta: Option<f64>,
    /// Gamma shape of the common rate
    #[arg(long)]
    pub delta: Option<f64>,
    /// First shape of the beta prior on the observability probability
    #[arg(long)]
    pub eta: Option<f64>,
    /// Second shape of the beta prior on the observability probability
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Use the improper limit alpha = beta = 0
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub improper: Option<bool>,
    /// Split fraction of the prior on the ratio used by posterior-mcmc
    #[arg(long)]
    pub prior_r: Option<f64>,
}
merge_fields!(PriorArgs { alpha, beta, delta, eta, kappa, improper, prior_r });

impl PriorArgs {
    pub fn spec(&self) -> anyhow::Result<PriorSpec> {
        let d = PriorSpec::default();
        let spec = PriorSpec {
            delta: self.delta.unwrap_or(d.delta),
            alpha: self.alpha.unwrap_or(d.alpha),
            beta: self.beta.unwrap_or(d.beta),
            eta: self.eta.unwrap_or(d.eta),
            kappa: self.kappa.unwrap_or(d.kappa),
            pi_prior: PiPrior::Uniform,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveArgs {
    /// Smallest ratio on the grid
    #[arg(long)]
    pub theta_min: Option<f64>,
    /// Largest ratio on the grid
    #[arg(long)]
    pub theta_max: Option<f64>,
    /// Number of log-spaced grid points
    #[arg(long)]
    pub points: Option<usize>,
    /// Importance samples per point; exact evaluation when absent
    #[arg(long)]
    pub mc_samples: Option<usize>,
    /// Probability that the importance proposal marks a zero cell observable
    #[arg(long)]
    pub mc_proposal: Option<f64>,
}
merge_fields!(CurveArgs { theta_min, theta_max, points, mc_samples, mc_proposal });

impl CurveArgs {
    pub fn grid(&self) -> anyhow::Result<Vec<f64>> {
        let lo = self.theta_min.unwrap_or(0.01);
        let hi = self.theta_max.unwrap_or(100.0);
        let k = self.points.unwrap_or(201);
        if !(lo > 0.0 && hi > lo && k >= 2) {
            bail!("theta grid needs 0 < theta-min < theta-max and at least 2 points");
        }
        let (a, b) = (lo.ln(), hi.ln());
        Ok((0..k).map(|i| (a + (b - a) * i as f64 / (k - 1) as f64).exp()).collect())
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcArgs {
    /// Chain length including burn-in
    #[arg(long)]
    pub samples: Option<usize>,
    /// Step size on the log-ratio scale
    #[arg(long)]
    pub proposal_sd: Option<f64>,
    /// Fraction of the chain discarded as burn-in
    #[arg(long)]
    pub burn_in_frac: Option<f64>,
    /// Starting ratio
    #[arg(long)]
    pub init_theta: Option<f64>,
}
merge_fields!(McmcArgs { samples, proposal_sd, burn_in_frac, init_theta });

impl McmcArgs {
    pub fn options(&self, seed: u64) -> McmcOptions {
        let d = McmcOptions::default();
        McmcOptions {
            n_samples: self.samples.unwrap_or(d.n_samples),
            proposal_sd: self.proposal_sd.unwrap_or(d.proposal_sd),
            burn_in_frac: self.burn_in_frac.unwrap_or(d.burn_in_frac),
            seed,
            init_theta: self.init_theta.unwrap_or(d.init_theta),
        }
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageArgs {
    /// Number of simulated data sets (at least 100)
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Interval methods to evaluate, comma separated
    #[arg(long, value_enum, value_delimiter = ',')]
    pub estimators: Option<Vec<Estimator>>,
}
merge_fields!(CoverageArgs { replicates, estimators });

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub out_dir: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: Option<u64>,
    pub level: Option<f64>,
    pub input: InputArgs,
    pub design: DesignArgs,
    pub em: EmArgs,
    pub prior: PriorArgs,
    pub curve: CurveArgs,
    pub mcmc: McmcArgs,
    pub coverage: CoverageArgs,
    pub ztp: ZtpArgs,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZtpArgs {
    /// Exposure of the compared cell
    #[arg(long)]
    pub exposure: Option<f64>,
    /// Largest count in the table
    #[arg(long)]
    pub x_max: Option<u64>,
}
merge_fields!(ZtpArgs { exposure, x_max });

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

pub fn resolve_common(flags: CommonArgs, file: &FileConfig) -> CommonArgs {
    flags.merge_file(file)
}
