//! Independent oracles shared by the integration and acceptance suites.
//! Everything here is written from the model definition directly, in
//! plain (non-log) arithmetic where sizes allow, and never calls the
//! library routines it is used to check.
#![allow(dead_code)]

pub mod integrals;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zipm_core::model::{Counts, ExposureGrid, ModelParams};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn factorial(k: u64) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

pub fn pois(k: u64, mean: f64) -> f64 {
    (-mean).exp() * mean.powi(k as i32) / factorial(k)
}

/// Central-difference Hessian.
pub fn fd_hessian(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let d = x.len();
    let at = |di: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(i, s) in di {
            y[i] += s;
        }
        f(&y)
    };
    let mut out = vec![vec![0.0; d]; d];
    let f0 = f(x);
    for i in 0..d {
        out[i][i] = (at(&[(i, h)]) - 2.0 * f0 + at(&[(i, -h)])) / (h * h);
        for j in 0..i {
            let v = (at(&[(i, h), (j, h)]) - at(&[(i, h), (j, -h)]) - at(&[(i, -h), (j, h)])
                + at(&[(i, -h), (j, -h)]))
                / (4.0 * h * h);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

/// Richardson-extrapolated central Hessian, fourth order in the step.
pub fn fd_hessian_rich(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let coarse = fd_hessian(f, x, h);
    let fine = fd_hessian(f, x, h / 2.0);
    fine.iter()
        .zip(&coarse)
        .map(|(a, b)| a.iter().zip(b).map(|(a, b)| (4.0 * a - b) / 3.0).collect())
        .collect()
}

pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += h;
            b[i] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

/// Largest entry error scaled by the geometric mean of the matching
/// diagonal entries of the reference, so that near-zero off-diagonal
/// entries are judged on the scale of the matrix.
pub fn scaled_max_error(got: &nalgebra::DMatrix<f64>, want: &[Vec<f64>]) -> f64 {
    let d = want.len();
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let scale = (want[i][i].abs() * want[j][j].abs()).sqrt();
            worst = worst.max((got[(i, j)] - want[i][j]).abs() / scale);
        }
    }
    worst
}

/// Joint pmf of labels, observability and counts, straight from the
/// generative description.
pub fn joint_pmf(y: &[bool], z: &Array2<bool>, n: &Counts, t: &[f64], p: &ModelParams) -> f64 {
    let mut f = 1.0;
    for &yj in y {
        f *= if yj { p.pi } else { 1.0 - p.pi };
    }
    for ((i, j), &c) in n.0.indexed_iter() {
        let rate = if y[j] { p.mu } else { p.nu };
        f *= if z[(i, j)] {
            p.eps * pois(c, t[i] * rate)
        } else if c == 0 {
            1.0 - p.eps
        } else {
            0.0
        };
    }
    f
}

pub fn bits(mask: usize, len: usize) -> Vec<bool> {
    (0..len).map(|k| mask >> k & 1 == 1).collect()
}

pub fn bit_matrix(mask: usize, days: usize, sites: usize) -> Array2<bool> {
    Array2::from_shape_fn((days, sites), |(i, j)| mask >> (i * sites + j) & 1 == 1)
}

pub struct Enumerated {
    pub marginal: f64,
    pub ey: Vec<f64>,
    pub ez: Array2<f64>,
    pub eyz: Array2<f64>,
}

/// Posterior moments of the latent labels by summing the joint pmf over
/// every configuration.
pub fn enumerate_posterior(n: &Counts, t: &[f64], p: &ModelParams) -> Enumerated {
    let (days, sites) = n.0.dim();
    let mut marginal = 0.0;
    let mut ey = vec![0.0; sites];
    let mut ez = Array2::zeros((days, sites));
    let mut eyz = Array2::zeros((days, sites));
    for ym in 0..1usize << sites {
        let y = bits(ym, sites);
        for zm in 0..1usize << (days * sites) {
            let z = bit_matrix(zm, days, sites);
            let f = joint_pmf(&y, &z, n, t, p);
            if f == 0.0 {
                continue;
            }
            marginal += f;
            for j in 0..sites {
                if y[j] {
                    ey[j] += f;
                }
                for i in 0..days {
                    if z[(i, j)] {
                        ez[(i, j)] += f;
                        if y[j] {
                            eyz[(i, j)] += f;
                        }
                    }
                }
            }
        }
    }
    Enumerated {
        ey: ey.iter().map(|v| v / marginal).collect(),
        ez: ez / marginal,
        eyz: eyz / marginal,
        marginal,
    }
}

/// Site-level log-likelihood straight from the per-site products.
pub fn naive_loglik(n: &Counts, t: &[f64], p: &ModelParams) -> f64 {
    let cell = |c: u64, mean: f64| p.eps * pois(c, mean) + if c == 0 { 1.0 - p.eps } else { 0.0 };
    n.0.columns()
        .into_iter()
        .map(|col| {
            let mut a = p.pi;
            let mut b = 1.0 - p.pi;
            for (i, &c) in col.iter().enumerate() {
                a *= cell(c, t[i] * p.mu);
                b *= cell(c, t[i] * p.nu);
            }
            (a + b).ln()
        })
        .sum()
}

/// Multi-resolution grid search: a full grid over the box, then repeated
/// zooming around the best `keep` points.
pub fn grid_maximize(f: &dyn Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], points: usize, levels: usize, keep: usize) -> (f64, Vec<f64>) {
    let d = lo.len();
    let grid_points = |lo: &[f64], hi: &[f64], pts: usize| -> Vec<Vec<f64>> {
        let total = pts.pow(d as u32);
        (0..total)
            .map(|mut k| {
                (0..d)
                    .map(|a| {
                        let idx = k % pts;
                        k /= pts;
                        lo[a] + (hi[a] - lo[a]) * idx as f64 / (pts - 1) as f64
                    })
                    .collect()
            })
            .collect()
    };
    let mut scored: Vec<(f64, Vec<f64>)> = grid_points(lo, hi, points)
        .into_iter()
        .map(|x| (f(&x), x))
        .filter(|(v, _)| v.is_finite())
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored.truncate(keep);
    let mut width: Vec<f64> = (0..d).map(|a| (hi[a] - lo[a]) / (points - 1) as f64).collect();
    let sub = 9;
    for _ in 0..levels {
        let mut next = Vec::new();
        for (_, c) in &scored {
            let blo: Vec<f64> = (0..d).map(|a| (c[a] - width[a]).max(lo[a])).collect();
            let bhi: Vec<f64> = (0..d).map(|a| (c[a] + width[a]).min(hi[a])).collect();
            next.extend(grid_points(&blo, &bhi, sub).into_iter().map(|x| (f(&x), x)));
        }
        next.extend(scored.drain(..));
        next.retain(|(v, _)| v.is_finite());
        next.sort_by(|a, b| b.0.total_cmp(&a.0));
        next.dedup_by(|a, b| a.1 == b.1);
        next.truncate(keep);
        scored = next;
        for w in &mut width {
            *w *= 2.0 / (sub - 1) as f64;
        }
    }
    scored.swap_remove(0)
}

/// A 3x4 design with unequal exposures and counts drawn so that both
/// zero and nonzero cells occur.
pub fn mixed_instance(seed: u64) -> (ExposureGrid, Counts, ModelParams) {
    let mut r = rng(seed);
    let t: Vec<f64> = (0..3).map(|_| r.random_range(0.5..2.0)).collect();
    let grid = ExposureGrid::new(t, 4).unwrap();
    let p = ModelParams::new(
        r.random_range(0.1..0.45),
        r.random_range(0.35..0.9),
        r.random_range(0.5..6.0),
        r.random_range(0.5..6.0),
    );
    loop {
        let counts = Array2::from_shape_fn((3, 4), |_| {
            if r.random_bool(0.35) {
                0
            } else {
                r.random_range(0..7u64)
            }
        });
        let zeros = counts.iter().filter(|&&c| c == 0).count();
        if zeros > 0 && zeros < 12 {
            return (grid, Counts::new(counts), p);
        }
    }
}

/// Random small count table with entries in `0..=max`.
pub fn small_counts(r: &mut ChaCha8Rng, days: usize, sites: usize, max: u64) -> Counts {
    Counts::new(Array2::from_shape_fn((days, sites), |_| r.random_range(0..=max)))
}
