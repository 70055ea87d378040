//! Closed forms and brute-force sums for the integrated likelihoods and the
//! conjugate family, built from enumeration and one-dimensional quadrature.

use ndarray::Array2;
use zipm_core::model::Counts;
use zipm_core::quadrature::{integrate, integrate_to_infinity, QuadOptions};

use super::{bit_matrix, bits};

pub fn ln_fact(k: u64) -> f64 {
    (1..=k).map(|v| (v as f64).ln()).sum()
}

pub fn ln_choose(n: u64, k: u64) -> f64 {
    ln_fact(n) - ln_fact(k) - ln_fact(n - k)
}

/// `ln g(j)` for the uniform prior on `(0, 1/2]`, from the finite binomial
/// expansion of the incomplete beta function at 1/2.
pub fn uniform_log_g(sites: usize, j: usize) -> f64 {
    let n = sites as u64 + 1;
    let tail: f64 = ((j as u64 + 1)..=n).map(|k| ln_choose(n, k).exp()).sum();
    2f64.ln() + ln_fact(j as u64) + ln_fact((sites - j) as u64) - ln_fact(n) - n as f64 * 2f64.ln() + tail.ln()
}

/// `ln h(l)` for integer beta hyperparameters.
pub fn integer_log_h(eta: u64, kappa: u64, cells: usize, l: usize) -> f64 {
    let ln_b = |a: u64, b: u64| ln_fact(a - 1) + ln_fact(b - 1) - ln_fact(a + b - 1);
    ln_b(eta + l as u64, kappa + (cells - l) as u64) - ln_b(eta, kappa)
}

pub fn log_sum(v: &[f64]) -> f64 {
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    top + v.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}

/// `ln int_0^inf exp(f(x)) dx` for a unimodal log-integrand, split at the
/// mode.
pub fn log_integral(f: &dyn Fn(f64) -> f64) -> f64 {
    let mut best = (f64::NEG_INFINITY, 1.0);
    for k in -400..=400 {
        let x = 10f64.powf(k as f64 / 100.0);
        let v = f(x);
        if v > best.0 {
            best = (v, x);
        }
    }
    let (top, at) = best;
    let opts = QuadOptions {
        rel_tol: 1e-13,
        ..QuadOptions::default()
    };
    let g = |x: f64| if x <= 0.0 { 0.0 } else { (f(x) - top).exp() };
    let mass = integrate(g, 0.0, at, opts).unwrap() + integrate_to_infinity(g, at, opts).unwrap();
    top + mass.ln()
}

/// `ln sum_ij (n_ij ln t_i - ln n_ij!)` plus the gamma-prior constant.
pub fn data_constant(n: &Counts, t: &[f64], delta: f64) -> f64 {
    let total = n.total() as f64;
    let lg = |x: f64| quad_ln_gamma(x);
    lg(total + delta) - lg(delta)
        + n.0
            .indexed_iter()
            .map(|((i, _), &c)| c as f64 * t[i].ln() - ln_fact(c))
            .sum::<f64>()
}

/// `ln Gamma(x)` by numerical integration, so the oracle shares no special
/// functions with the library.
pub fn quad_ln_gamma(x: f64) -> f64 {
    log_integral(&|s: f64| (x - 1.0) * s.ln() - s)
}

/// `ln f(m | theta)` summed over every label vector.
pub fn mixture_by_enumeration(m: &Counts, t: &[f64], delta: f64, theta: f64) -> f64 {
    let sites = m.sites();
    let totals = m.site_totals();
    let total = m.total() as f64;
    let exposure: f64 = t.iter().sum::<f64>() * sites as f64;
    let terms: Vec<f64> = (0..1usize << sites)
        .map(|mask| {
            let y = bits(mask, sites);
            let k = y.iter().filter(|&&v| v).count();
            let rare: u64 = (0..sites).filter(|&j| y[j]).map(|j| totals[j]).sum();
            let r = k as f64 / sites as f64;
            uniform_log_g(sites, k) + rare as f64 * theta.ln()
                - (total + delta) * (exposure * (r * theta + 1.0 - r) + 1.0).ln()
        })
        .collect();
    data_constant(m, t, delta) + log_sum(&terms)
}

/// `ln f(z, n | theta)` summed over label vectors.
pub fn zn_by_enumeration(n: &Counts, z: &Array2<bool>, t: &[f64], eta: u64, kappa: u64, theta: f64) -> f64 {
    let (days, sites) = n.0.dim();
    let totals = n.site_totals();
    let total = n.total() as f64;
    let site_t: Vec<f64> = (0..sites).map(|j| (0..days).filter(|&i| z[(i, j)]).map(|i| t[i]).sum()).collect();
    let observable = z.iter().filter(|&&v| v).count();
    let terms: Vec<f64> = (0..1usize << sites)
        .map(|mask| {
            let y = bits(mask, sites);
            let k = y.iter().filter(|&&v| v).count();
            let rare: u64 = (0..sites).filter(|&j| y[j]).map(|j| totals[j]).sum();
            let rare_t: f64 = (0..sites).filter(|&j| y[j]).map(|j| site_t[j]).sum();
            let other_t: f64 = (0..sites).filter(|&j| !y[j]).map(|j| site_t[j]).sum();
            uniform_log_g(sites, k) + rare as f64 * theta.ln() - (total + 1.0) * (1.0 + theta * rare_t + other_t).ln()
        })
        .collect();
    data_constant(n, t, 1.0) + integer_log_h(eta, kappa, days * sites, observable) + log_sum(&terms)
}

/// `ln f(n | theta)` by summing over labels and observability, integrating
/// each configuration's common rate numerically.
pub fn counts_by_triple_enumeration(n: &Counts, t: &[f64], theta: f64) -> f64 {
    let (days, sites) = n.0.dim();
    let cells = days * sites;
    let mut terms = Vec::new();
    for ym in 0..1usize << sites {
        let y = bits(ym, sites);
        let k = y.iter().filter(|&&v| v).count();
        for zm in 0..1usize << cells {
            let z = bit_matrix(zm, days, sites);
            if n.0.indexed_iter().any(|(ix, &c)| c > 0 && !z[ix]) {
                continue;
            }
            let observable = z.iter().filter(|&&v| v).count();
            let f = |lambda: f64| {
                let mut v = -lambda;
                for ((i, j), &c) in n.0.indexed_iter() {
                    if z[(i, j)] {
                        let mean = t[i] * lambda * if y[j] { theta } else { 1.0 };
                        v += c as f64 * mean.ln() - mean - ln_fact(c);
                    }
                }
                v
            };
            terms.push(uniform_log_g(sites, k) + integer_log_h(1, 1, cells, observable) + log_integral(&f));
        }
    }
    log_sum(&terms)
}

pub fn tight_quad() -> QuadOptions {
    QuadOptions {
        rel_tol: 1e-12,
        ..QuadOptions::default()
    }
}

/// `int_0^inf g(theta) dtheta` split at a point near the bulk.
pub fn theta_integral(g: &dyn Fn(f64) -> f64, split: f64) -> f64 {
    let f = |x: f64| if x <= 0.0 { 0.0 } else { g(x) };
    integrate(f, 0.0, split, tight_quad()).unwrap() + integrate_to_infinity(f, split, tight_quad()).unwrap()
}
