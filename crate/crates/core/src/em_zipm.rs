//! EM for the zero-inflated mixture from the recorded counts alone, with
//! its 4x4 observed information in the order `(pi, eps, mu, nu)`.

use nalgebra::DMatrix;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::em::{best_fit, boundary_flags, iterate, EmFit, EmOptions, MStep};
use crate::em_mixture::{mirrored, seed_params, two_means};
use crate::error::{Error, Result};
use crate::info::{add_outer, InfoMatrix};
use crate::interval::IntervalEstimate;
use crate::model::{inflated_logpmf, observed_loglik, site_component_logliks, Counts, ExposureGrid, ModelParams};
use crate::numeric::{log_add_exp, normal_critical, sigmoid_pair};

/// Conditional expectations of the latent labels given the counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZipmResponsibilities {
    /// `E[Y_j | n]`.
    pub yhat: Vec<f64>,
    /// `E[Z_ij | n]`.
    pub zhat: Array2<f64>,
    /// `E[Y_j Z_ij | n]`.
    pub yzhat: Array2<f64>,
    /// `E[(1 - Y_j) Z_ij | n]`.
    pub one_minus_yzhat: Array2<f64>,
}

impl ZipmResponsibilities {
    /// `(sum_ij t_i zhat_ij, sum_ij t_i yzhat_ij)`.
    pub fn imputed_exposure(&self, grid: &ExposureGrid) -> (f64, f64) {
        let mut observable = 0.0;
        let mut rare = 0.0;
        for ((i, j), &z) in self.zhat.indexed_iter() {
            observable += grid.t()[i] * z;
            rare += grid.t()[i] * self.yzhat[(i, j)];
        }
        (observable, rare)
    }

    /// Responsibilities that place all mass on a known configuration.
    pub fn from_labels(y: &[bool], z: &Array2<bool>) -> Self {
        let yhat: Vec<f64> = y.iter().map(|&v| f64::from(u8::from(v))).collect();
        let zhat = z.mapv(|v| f64::from(u8::from(v)));
        let yzhat = Array2::from_shape_fn(z.dim(), |(i, j)| yhat[j] * zhat[(i, j)]);
        let one_minus_yzhat = &zhat - &yzhat;
        Self {
            yhat,
            zhat,
            yzhat,
            one_minus_yzhat,
        }
    }
}

/// Probability that a zero cell is observable given the component rate.
fn zero_observable(mean: f64, eps: f64) -> f64 {
    (eps.ln() - mean - inflated_logpmf(0, mean, eps)).exp()
}

pub fn estep_zipm(n: &Counts, grid: &ExposureGrid, p: &ModelParams) -> ZipmResponsibilities {
    let (days, sites) = (n.days(), n.sites());
    let odds = site_component_logliks(n, grid, p, true);
    let rare_r: Vec<f64> = grid.t().iter().map(|&t| zero_observable(t * p.mu, p.eps)).collect();
    let common_r: Vec<f64> = grid.t().iter().map(|&t| zero_observable(t * p.nu, p.eps)).collect();

    let mut yhat = Vec::with_capacity(sites);
    let mut zhat = Array2::zeros((days, sites));
    let mut yzhat = Array2::zeros((days, sites));
    let mut one_minus_yzhat = Array2::zeros((days, sites));
    for (j, &(a, b)) in odds.iter().enumerate() {
        let (q, qc) = sigmoid_pair(a - b);
        yhat.push(q);
        for i in 0..days {
            let (r1, r0) = if n.get(i, j) > 0 {
                (1.0, 1.0)
            } else {
                (rare_r[i], common_r[i])
            };
            let yz = q * r1;
            let omy = qc * r0;
            yzhat[(i, j)] = yz;
            one_minus_yzhat[(i, j)] = omy;
            zhat[(i, j)] = if n.get(i, j) > 0 { 1.0 } else { yz + omy };
        }
    }
    ZipmResponsibilities {
        yhat,
        zhat,
        yzhat,
        one_minus_yzhat,
    }
}

pub fn mstep_zipm(n: &Counts, grid: &ExposureGrid, resp: &ZipmResponsibilities, opts: &EmOptions) -> Result<MStep> {
    let sites = resp.yhat.len();
    if sites != n.sites() || resp.zhat.dim() != n.0.dim() {
        return Err(Error::DimensionMismatch("responsibilities shape".into()));
    }
    let totals = n.site_totals();
    let rare_count: f64 = totals.iter().zip(&resp.yhat).map(|(&s, &q)| s as f64 * q).sum();
    let common_count: f64 = totals.iter().zip(&resp.yhat).map(|(&s, &q)| s as f64 * (1.0 - q)).sum();
    let mut rare_exposure = 0.0;
    let mut common_exposure = 0.0;
    for ((i, j), &yz) in resp.yzhat.indexed_iter() {
        rare_exposure += grid.t()[i] * yz;
        common_exposure += grid.t()[i] * resp.one_minus_yzhat[(i, j)];
    }
    if rare_exposure <= 0.0 {
        return Err(Error::EmptyComponent("rare"));
    }
    if common_exposure <= 0.0 {
        return Err(Error::EmptyComponent("common"));
    }
    let raw_pi = resp.yhat.iter().sum::<f64>() / sites as f64;
    let raw_eps = opts
        .fixed_eps
        .unwrap_or_else(|| resp.zhat.sum() / resp.zhat.len() as f64);
    let eps_clamped = opts.clamp_eps && opts.fixed_eps.is_none() && raw_eps > 0.5;
    Ok(MStep {
        params: ModelParams::new(
            raw_pi.min(0.5),
            if eps_clamped { 0.5 } else { raw_eps },
            rare_count / rare_exposure,
            common_count / common_exposure,
        ),
        pi_clamped: raw_pi > 0.5,
        eps_clamped,
    })
}

/// Starting values: the excess of zeros over what a Poisson at the mean
/// nonzero rate predicts seeds `1 - eps`, and two-means clustering of the
/// per-site rates over nonzero cells seeds the mixture.
pub fn init_histogram_zipm(n: &Counts, grid: &ExposureGrid) -> Result<ModelParams> {
    grid.check_shape(&n.0, "n")?;
    if n.total() == 0 {
        return Err(Error::AllZeros);
    }
    let mut cell_rates: Vec<f64> = n
        .0
        .indexed_iter()
        .filter(|(_, &c)| c > 0)
        .map(|((i, _), &c)| c as f64 / grid.t()[i])
        .collect();
    let mean_rate = cell_rates.iter().sum::<f64>() / cell_rates.len() as f64;
    let cells = grid.cells() as f64;
    let predicted_zero = grid.t().iter().map(|&t| (-t * mean_rate).exp()).sum::<f64>() * grid.sites() as f64 / cells;
    let observed_zero = n.zero_cells() as f64 / cells;
    let eps = (1.0 - (observed_zero - predicted_zero).max(0.0)).clamp(0.01, 0.99);

    let mut site_rates: Vec<f64> = n
        .0
        .columns()
        .into_iter()
        .filter_map(|col| {
            let (count, exposure) = col
                .iter()
                .zip(grid.t())
                .filter(|(&c, _)| c > 0)
                .fold((0.0, 0.0), |(c, e), (&ci, &ti)| (c + ci as f64, e + ti));
            (exposure > 0.0).then(|| count / exposure)
        })
        .collect();
    let split = two_means(&mut site_rates).or_else(|| two_means(&mut cell_rates));
    Ok(match split {
        Some((low, high)) => {
            let (rare, common) = if high.0 < low.0 { (high, low) } else { (low, high) };
            seed_params(rare, common, mean_rate, eps)
        }
        // A single distinct nonzero rate: spread the two components
        // around it so EM can break the symmetry.
        None => ModelParams::new(0.25, eps, 0.5 * mean_rate, 1.5 * mean_rate),
    })
}

pub fn fit_em_zipm(
    n: &Counts,
    grid: &ExposureGrid,
    init: Option<ModelParams>,
    opts: &EmOptions,
) -> Result<EmFit<ZipmResponsibilities>> {
    grid.check_shape(&n.0, "n")?;
    if n.total() == 0 {
        return Err(Error::AllZeros);
    }
    match init {
        Some(p) => fit_from(n, grid, p, opts),
        None => {
            let start = init_histogram_zipm(n, grid)?;
            best_fit([start, mirrored(&start)].map(|s| fit_from(n, grid, s, opts)))
        }
    }
}

fn fit_from(
    n: &Counts,
    grid: &ExposureGrid,
    mut init: ModelParams,
    opts: &EmOptions,
) -> Result<EmFit<ZipmResponsibilities>> {
    if let Some(e) = opts.fixed_eps {
        init.eps = e;
    }
    init.validate()?;
    let traj = iterate(
        init,
        opts,
        |p| mstep_zipm(n, grid, &estep_zipm(n, grid, p), opts),
        |p| observed_loglik(n, grid, p, true),
    )?;
    let params = traj.params;
    let mut boundary = boundary_flags(&params, traj.last_step.as_ref(), opts.fixed_eps.is_none());
    if opts.fixed_eps.is_some_and(|e| e >= 1.0) {
        boundary.eps_at_one = true;
    }
    Ok(EmFit {
        theta: params.theta(),
        loglik: traj.trace[traj.trace.len() - 1],
        boundary,
        responsibilities: estep_zipm(n, grid, &params),
        params,
        loglik_trace: traj.trace,
        iterations: traj.iterations,
        converged: traj.converged,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ZipmInfo {
    pub info: InfoMatrix,
    /// Posterior rare-site probabilities.
    pub q: Vec<f64>,
    /// Posterior mean fraction of observable cells.
    pub rho: f64,
    /// Log of each site's mixture mass with the parameter-free factors
    /// `t^n / n!` dropped.
    pub log_psi: Vec<f64>,
    /// Gradient of each site's rare-versus-common log-odds.
    pub phi_vecs: Vec<[f64; 4]>,
    /// Per-day directions of the zero-cell corrections for each component.
    pub chi1: Vec<[f64; 4]>,
    pub chi0: Vec<[f64; 4]>,
}

/// Observed information: the conditional expectation of the complete-data
/// information minus the conditional covariance of the latent-label scores,
/// which splits into a per-site rank-one term and a per-zero-cell term.
pub fn observed_info_zipm(n: &Counts, grid: &ExposureGrid, p: &ModelParams) -> Result<ZipmInfo> {
    grid.check_shape(&n.0, "n")?;
    if !(p.pi > 0.0 && p.pi < 1.0) {
        return Err(Error::BoundaryParams("pi must lie strictly inside (0, 1)"));
    }
    if !(p.eps > 0.0 && p.eps < 1.0) {
        return Err(Error::BoundaryParams("eps must lie strictly inside (0, 1)"));
    }
    if !(p.mu > 0.0 && p.nu > 0.0) {
        return Err(Error::BoundaryParams("rates must be positive"));
    }
    let (pi, eps, mu, nu) = (p.pi, p.eps, p.mu, p.nu);
    let t = grid.t();
    let days = n.days();
    // a(rate) = eps (e^{-t rate} - 1) + 1, the zero-cell mass.
    let e_mu: Vec<f64> = t.iter().map(|&ti| (-ti * mu).exp()).collect();
    let e_nu: Vec<f64> = t.iter().map(|&ti| (-ti * nu).exp()).collect();
    let a_mu: Vec<f64> = t.iter().map(|&ti| 1.0 + eps * (-ti * mu).exp_m1()).collect();
    let a_nu: Vec<f64> = t.iter().map(|&ti| 1.0 + eps * (-ti * nu).exp_m1()).collect();
    let ee = eps * (1.0 - eps);
    let chi1: Vec<[f64; 4]> = t.iter().map(|&ti| [0.0, 1.0 / ee, -ti, 0.0]).collect();
    let chi0: Vec<[f64; 4]> = t.iter().map(|&ti| [0.0, 1.0 / ee, 0.0, -ti]).collect();

    let mut mat = DMatrix::zeros(4, 4);
    let mut q_all = Vec::with_capacity(n.sites());
    let mut log_psi = Vec::with_capacity(n.sites());
    let mut phi_vecs = Vec::with_capacity(n.sites());
    let (mut qsum, mut zsum, mut rare_n, mut common_n) = (0.0, 0.0, 0.0, 0.0);
    for col in n.0.columns() {
        let nj: f64 = col.iter().map(|&c| c as f64).sum();
        let mut t_nonzero = 0.0;
        let (mut la, mut lb) = (pi.ln() + nj * mu.ln(), (-pi).ln_1p() + nj * nu.ln());
        let mut d_eps = 0.0;
        let (mut s_mu, mut s_nu) = (0.0, 0.0);
        for (i, &c) in col.iter().enumerate() {
            if c > 0 {
                t_nonzero += t[i];
            } else {
                la += a_mu[i].ln();
                lb += a_nu[i].ln();
                d_eps += (e_mu[i] - e_nu[i]) / (a_mu[i] * a_nu[i]);
                s_mu += t[i] * e_mu[i] / a_mu[i];
                s_nu += t[i] * e_nu[i] / a_nu[i];
            }
        }
        la -= t_nonzero * mu;
        lb -= t_nonzero * nu;
        let lpsi = log_add_exp(la, lb);
        let (q, qc) = sigmoid_pair(la - lb);
        let weight = (la + lb - 2.0 * lpsi).exp();
        let phi = [
            1.0 / (pi * (1.0 - pi)),
            d_eps,
            nj / mu - t_nonzero - eps * s_mu,
            -(nj / nu - t_nonzero - eps * s_nu),
        ];
        add_outer(&mut mat, -weight, &phi);

        for i in 0..days {
            if col[i] > 0 {
                zsum += 1.0;
                continue;
            }
            let r1 = eps * e_mu[i] / a_mu[i];
            let r0 = eps * e_nu[i] / a_nu[i];
            zsum += q * r1 + qc * r0;
            add_outer(&mut mat, -ee * q * e_mu[i] / (a_mu[i] * a_mu[i]), &chi1[i]);
            add_outer(&mut mat, -ee * qc * e_nu[i] / (a_nu[i] * a_nu[i]), &chi0[i]);
        }
        qsum += q;
        rare_n += nj * q;
        common_n += nj * qc;
        q_all.push(q);
        log_psi.push(lpsi);
        phi_vecs.push(phi);
    }
    let sites = n.sites() as f64;
    let cells = grid.cells() as f64;
    let qbar = qsum / sites;
    let rho = zsum / cells;
    mat[(0, 0)] += sites * ((1.0 - 2.0 * pi) * qbar + pi * pi) / (pi * pi * (1.0 - pi) * (1.0 - pi));
    mat[(1, 1)] += cells * ((1.0 - 2.0 * eps) * rho + eps * eps) / (ee * ee);
    mat[(2, 2)] += rare_n / (mu * mu);
    mat[(3, 3)] += common_n / (nu * nu);
    Ok(ZipmInfo {
        info: InfoMatrix {
            labels: vec!["pi", "eps", "mu", "nu"],
            matrix: mat,
        },
        q: q_all,
        rho,
        log_psi,
        phi_vecs,
        chi1,
        chi0,
    })
}

pub fn ci_theta_zipm(
    fit: &EmFit<ZipmResponsibilities>,
    info: &InfoMatrix,
    level: f64,
) -> Result<IntervalEstimate> {
    if fit.boundary.any() {
        return Err(Error::BoundaryFit(fit.boundary.describe()));
    }
    let p = &fit.params;
    let var = info.ratio_variance(p.mu, p.nu)?;
    Ok(IntervalEstimate::wald(p.theta(), normal_critical(level) * var.sqrt(), level))
}
