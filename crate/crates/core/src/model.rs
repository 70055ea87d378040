//! Parameters, exposure designs, count arrays and the model likelihoods.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::numeric::{ln_factorial, log_add_exp, poisson_logpmf, xlogy};
use crate::quadrature::{integrate, QuadOptions};

/// Mixture weight of the rare component, observability probability and the
/// two component rates.  `eps = 1` is the plain two-component mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub pi: f64,
    pub eps: f64,
    pub mu: f64,
    pub nu: f64,
}

impl ModelParams {
    pub fn new(pi: f64, eps: f64, mu: f64, nu: f64) -> Self {
        Self { pi, eps, mu, nu }
    }

    /// Parameters with every cell observable.
    pub fn mixture(pi: f64, mu: f64, nu: f64) -> Self {
        Self::new(pi, 1.0, mu, nu)
    }

    /// Ratio of the rare rate to the common rate.
    pub fn theta(&self) -> f64 {
        self.mu / self.nu
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pi > 0.0 && self.pi <= 0.5) {
            return Err(domain("pi", self.pi, "0 < pi <= 1/2"));
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(domain("eps", self.eps, "0 < eps <= 1"));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(domain("mu", self.mu, "mu > 0"));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(domain("nu", self.nu, "nu > 0"));
        }
        Ok(())
    }

    /// Largest change between two parameter sets, rates measured relative
    /// to `max(1, rate)`.
    pub fn max_abs_change(&self, other: &Self) -> f64 {
        let rate = |a: f64, b: f64| (a - b).abs() / a.abs().max(1.0);
        (self.pi - other.pi)
            .abs()
            .max((self.eps - other.eps).abs())
            .max(rate(self.mu, other.mu))
            .max(rate(self.nu, other.nu))
    }
}

/// Day exposures `t_i` together with the number of sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureGrid {
    t: Vec<f64>,
    sites: usize,
}

impl ExposureGrid {
    pub fn new(t: Vec<f64>, sites: usize) -> Result<Self> {
        if t.is_empty() || sites == 0 {
            return Err(Error::DimensionMismatch(format!(
                "grid needs at least one day and one site, got {} x {}",
                t.len(),
                sites
            )));
        }
        if let Some(&bad) = t.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
            return Err(domain("t", bad, "t > 0"));
        }
        Ok(Self { t, sites })
    }

    pub fn uniform(days: usize, sites: usize) -> Result<Self> {
        Self::new(vec![1.0; days], sites)
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn days(&self) -> usize {
        self.t.len()
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn cells(&self) -> usize {
        self.t.len() * self.sites
    }

    pub fn t_sum(&self) -> f64 {
        self.t.iter().sum()
    }

    pub fn t_mean(&self) -> f64 {
        self.t_sum() / self.days() as f64
    }

    /// `K * mean(t)`, the total exposure over every cell.
    pub fn total_exposure(&self) -> f64 {
        self.t_sum() * self.sites as f64
    }

    pub fn check_shape<T>(&self, a: &Array2<T>, what: &str) -> Result<()> {
        if a.dim() != (self.days(), self.sites) {
            return Err(Error::DimensionMismatch(format!(
                "{what} is {:?}, grid is {} x {}",
                a.dim(),
                self.days(),
                self.sites
            )));
        }
        Ok(())
    }
}

/// Days-by-sites count array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts(pub Array2<u64>);

impl Counts {
    pub fn new(a: Array2<u64>) -> Self {
        Self(a)
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let flat: Vec<u64> = rows.iter().flatten().copied().collect();
        Array2::from_shape_vec((rows.len(), cols), flat)
            .map(Self)
            .map_err(|e| Error::DimensionMismatch(e.to_string()))
    }

    pub fn days(&self) -> usize {
        self.0.nrows()
    }

    pub fn sites(&self) -> usize {
        self.0.ncols()
    }

    pub fn get(&self, day: usize, site: usize) -> u64 {
        self.0[(day, site)]
    }

    pub fn total(&self) -> u64 {
        self.0.sum()
    }

    pub fn site_totals(&self) -> Vec<u64> {
        self.0.columns().into_iter().map(|c| c.sum()).collect()
    }

    pub fn day_totals(&self) -> Vec<u64> {
        self.0.rows().into_iter().map(|r| r.sum()).collect()
    }

    pub fn zero_cells(&self) -> usize {
        self.0.iter().filter(|&&x| x == 0).count()
    }

    /// `sum_ij n_ij ln t_i - ln n_ij!`, the parameter-free part of every
    /// Poisson likelihood for these counts.
    pub fn log_exposure_constant(&self, grid: &ExposureGrid) -> f64 {
        self.0
            .indexed_iter()
            .map(|((i, _), &n)| xlogy(n as f64, grid.t()[i]) - ln_factorial(n))
            .sum()
    }
}

/// A (possibly partially) observed data set.  Simulation fills every array;
/// real data usually carries only the recorded counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSet {
    pub grid: ExposureGrid,
    pub y: Option<Vec<bool>>,
    pub z: Option<Array2<bool>>,
    pub m: Option<Counts>,
    pub n: Option<Counts>,
}

impl DataSet {
    /// Data with only the recorded counts.
    pub fn from_counts(grid: ExposureGrid, n: Counts) -> Result<Self> {
        let ds = Self {
            grid,
            y: None,
            z: None,
            m: None,
            n: Some(n),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn y(&self) -> Result<&[bool]> {
        self.y.as_deref().ok_or(Error::MissingArray("y"))
    }

    pub fn z(&self) -> Result<&Array2<bool>> {
        self.z.as_ref().ok_or(Error::MissingArray("z"))
    }

    pub fn m(&self) -> Result<&Counts> {
        self.m.as_ref().ok_or(Error::MissingArray("m"))
    }

    pub fn n(&self) -> Result<&Counts> {
        self.n.as_ref().ok_or(Error::MissingArray("n"))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(y) = &self.y {
            if y.len() != self.grid.sites() {
                return Err(Error::DimensionMismatch(format!(
                    "y has {} entries for {} sites",
                    y.len(),
                    self.grid.sites()
                )));
            }
        }
        if let Some(z) = &self.z {
            self.grid.check_shape(z, "z")?;
        }
        if let Some(m) = &self.m {
            self.grid.check_shape(&m.0, "m")?;
        }
        if let Some(n) = &self.n {
            self.grid.check_shape(&n.0, "n")?;
            if let Some(z) = &self.z {
                check_support(z, n)?;
            }
        }
        Ok(())
    }
}

pub(crate) fn check_support(z: &Array2<bool>, n: &Counts) -> Result<()> {
    for ((i, j), &count) in n.0.indexed_iter() {
        if count > 0 && !z[(i, j)] {
            return Err(Error::SupportViolation {
                day: i,
                site: j,
                n: count,
            });
        }
    }
    Ok(())
}

/// Prior on the rare-component weight, supported on `(0, 1/2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PiPrior {
    /// Density 2 on `(0, 1/2]`.
    Uniform,
    /// Beta(a, b) density restricted to `(0, 1/2]` and renormalized.
    TruncatedBeta { a: f64, b: f64 },
    /// Piecewise-linear density through `(grid[k], density[k])`.
    Tabulated { grid: Vec<f64>, density: Vec<f64> },
}

impl PiPrior {
    pub fn density(&self, pi: f64) -> f64 {
        if !(pi > 0.0 && pi <= 0.5) {
            return 0.0;
        }
        match self {
            PiPrior::Uniform => 2.0,
            PiPrior::TruncatedBeta { a, b } => {
                let norm = crate::numeric::ln_beta(*a, *b)
                    + crate::numeric::beta_reg(*a, *b, 0.5).ln();
                ((a - 1.0) * pi.ln() + (b - 1.0) * (-pi).ln_1p() - norm).exp()
            }
            PiPrior::Tabulated { grid, density } => {
                let k = grid.partition_point(|&g| g <= pi);
                if k == 0 {
                    return density[0];
                }
                if k == grid.len() {
                    return density[grid.len() - 1];
                }
                let w = (pi - grid[k - 1]) / (grid[k] - grid[k - 1]);
                density[k - 1] * (1.0 - w) + density[k] * w
            }
        }
    }

    /// Breakpoints that adaptive integration should not straddle.
    pub(crate) fn breakpoints(&self) -> Vec<f64> {
        let mut pts = vec![0.0];
        if let PiPrior::Tabulated { grid, .. } = self {
            pts.extend(grid.iter().copied().filter(|&g| g > 0.0 && g < 0.5));
        }
        pts.push(0.5);
        pts
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PiPrior::Uniform => {}
            PiPrior::TruncatedBeta { a, b } => {
                if !(*a > 0.0) {
                    return Err(domain("pi prior a", *a, "a > 0"));
                }
                if !(*b > 0.0) {
                    return Err(domain("pi prior b", *b, "b > 0"));
                }
            }
            PiPrior::Tabulated { grid, density } => {
                if grid.len() < 2 || grid.len() != density.len() {
                    return Err(Error::DimensionMismatch(
                        "tabulated prior needs matching grid and density of length >= 2".into(),
                    ));
                }
                if grid.windows(2).any(|w| w[1] <= w[0]) || grid[0] < 0.0 || grid[grid.len() - 1] > 0.5 {
                    return Err(Error::DimensionMismatch(
                        "tabulated prior grid must increase within [0, 1/2]".into(),
                    ));
                }
                if let Some(&d) = density.iter().find(|&&d| !(d >= 0.0 && d.is_finite())) {
                    return Err(domain("pi prior density", d, "density >= 0"));
                }
            }
        }
        let mass = self.mass()?;
        if (mass - 1.0).abs() > 1e-8 {
            return Err(domain("pi prior mass", mass, "prior integrates to 1"));
        }
        Ok(())
    }

    fn mass(&self) -> Result<f64> {
        let pts = self.breakpoints();
        let opts = QuadOptions {
            rel_tol: 1e-10,
            ..QuadOptions::default()
        };
        pts.windows(2)
            .map(|w| integrate(|p| self.density(p), w[0], w[1], opts))
            .sum()
    }
}

/// Hyperparameters: `delta` is the gamma shape on the common rate,
/// `alpha`/`beta` shape the conjugate prior on the ratio, `eta`/`kappa` are
/// the beta prior on the observability probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub kappa: f64,
    pub pi_prior: PiPrior,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            delta: 1.0,
            alpha: 1.0,
            beta: 1.0,
            eta: 1.0,
            kappa: 1.0,
            pi_prior: PiPrior::Uniform,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("delta", self.delta), ("eta", self.eta), ("kappa", self.kappa)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(domain(name, v, "positive and finite"));
            }
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(domain(name, v, "non-negative and finite"));
            }
        }
        self.pi_prior.validate()
    }
}

/// Single-cell marginal log-pmf of the two-component mixture.
pub fn mixture_cell_logpmf(m: u64, t: f64, p: &ModelParams) -> f64 {
    log_add_exp(
        p.pi.ln() + poisson_logpmf(m, t * p.mu),
        (-p.pi).ln_1p() + poisson_logpmf(m, t * p.nu),
    )
}

/// Single-cell marginal log-pmf of the zero-inflated mixture.
pub fn zipm_cell_logpmf(n: u64, t: f64, p: &ModelParams) -> f64 {
    let observable = mixture_cell_logpmf(n, t, p) + p.eps.ln();
    if n == 0 {
        log_add_exp(observable, (-p.eps).ln_1p())
    } else {
        observable
    }
}

/// Log-pmf of one cell given its component rate, including inflation.
pub(crate) fn inflated_logpmf(n: u64, mean: f64, eps: f64) -> f64 {
    let observable = eps.ln() + poisson_logpmf(n, mean);
    if n == 0 {
        log_add_exp(observable, (-eps).ln_1p())
    } else {
        observable
    }
}

/// Per-site log-likelihoods given each component:
/// `(ln pi + ln P(column | rare), ln(1 - pi) + ln P(column | common))`.
pub(crate) fn site_component_logliks(
    counts: &Counts,
    grid: &ExposureGrid,
    p: &ModelParams,
    zero_inflated: bool,
) -> Vec<(f64, f64)> {
    let eps = if zero_inflated { p.eps } else { 1.0 };
    let (lp, lq) = (p.pi.ln(), (-p.pi).ln_1p());
    counts
        .0
        .columns()
        .into_iter()
        .map(|col| {
            let mut rare = lp;
            let mut common = lq;
            for (i, &n) in col.iter().enumerate() {
                let t = grid.t()[i];
                rare += inflated_logpmf(n, t * p.mu, eps);
                common += inflated_logpmf(n, t * p.nu, eps);
            }
            (rare, common)
        })
        .collect()
}

/// Observed-data log-likelihood.  The component label is shared by all
/// days of a site, so each site contributes
/// `ln[pi prod_i f_rare(n_ij) + (1 - pi) prod_i f_common(n_ij)]`.
pub fn observed_loglik(
    counts: &Counts,
    grid: &ExposureGrid,
    p: &ModelParams,
    zero_inflated: bool,
) -> Result<f64> {
    grid.check_shape(&counts.0, "counts")?;
    Ok(site_component_logliks(counts, grid, p, zero_inflated)
        .into_iter()
        .map(|(a, b)| log_add_exp(a, b))
        .sum())
}

/// Complete-data log-likelihood `ln f(y, z, n)` of the zero-inflated model.
pub fn complete_loglik_zipm(
    y: &[bool],
    z: &Array2<bool>,
    n: &Counts,
    grid: &ExposureGrid,
    p: &ModelParams,
) -> Result<f64> {
    grid.check_shape(z, "z")?;
    grid.check_shape(&n.0, "n")?;
    if y.len() != grid.sites() {
        return Err(Error::DimensionMismatch("y length".into()));
    }
    check_support(z, n)?;
    let rare_sites = y.iter().filter(|&&v| v).count() as f64;
    let observable = z.iter().filter(|&&v| v).count() as f64;
    let mut ll = xlogy(rare_sites, p.pi)
        + xlogy(grid.sites() as f64 - rare_sites, 1.0 - p.pi)
        + xlogy(observable, p.eps)
        + xlogy(grid.cells() as f64 - observable, 1.0 - p.eps);
    for ((i, j), &count) in n.0.indexed_iter() {
        if z[(i, j)] {
            let rate = if y[j] { p.mu } else { p.nu };
            ll += poisson_logpmf(count, grid.t()[i] * rate);
        }
    }
    Ok(ll)
}
