mod support;

use support::*;
use zipm_core::em::EmOptions;
use zipm_core::em_mixture::{fit_em_mixture, observed_info_mixture};
use zipm_core::em_zipm::{ci_theta_zipm, fit_em_zipm, observed_info_zipm};
use zipm_core::model::{observed_loglik, Counts, ExposureGrid, ModelParams};
use zipm_core::simulate::{simulate_dataset, SimConfig};

fn zipm_fd(n: &Counts, grid: &ExposureGrid, p: &ModelParams) -> Vec<Vec<f64>> {
    let f = |x: &[f64]| -observed_loglik(n, grid, &ModelParams::new(x[0], x[1], x[2], x[3]), true).unwrap();
    fd_hessian_rich(&f, &[p.pi, p.eps, p.mu, p.nu], 2e-3)
}

fn mixture_fd(m: &Counts, grid: &ExposureGrid, p: &ModelParams) -> Vec<Vec<f64>> {
    let f = |x: &[f64]| -observed_loglik(m, grid, &ModelParams::mixture(x[0], x[1], x[2]), false).unwrap();
    fd_hessian_rich(&f, &[p.pi, p.mu, p.nu], 2e-3)
}

#[test]
fn zipm_information_matches_finite_differences() {
    for seed in 0..25 {
        let (grid, n, p) = mixed_instance(seed);
        let info = observed_info_zipm(&n, &grid, &p).unwrap();
        let err = scaled_max_error(&info.info.matrix, &zipm_fd(&n, &grid, &p));
        assert!(err <= 1e-4, "seed {seed}: scaled error {err:e}");
    }
}

#[test]
fn mixture_information_matches_finite_differences() {
    for seed in 100..125 {
        let (grid, m, p) = mixed_instance(seed);
        let p = ModelParams::mixture(p.pi, p.mu, p.nu);
        let info = observed_info_mixture(&m, &grid, &p).unwrap();
        let err = scaled_max_error(&info.info.matrix, &mixture_fd(&m, &grid, &p));
        assert!(err <= 1e-4, "seed {seed}: scaled error {err:e}");
    }
}

#[test]
fn information_is_exactly_symmetric() {
    let (grid, n, p) = mixed_instance(7);
    let a = observed_info_zipm(&n, &grid, &p).unwrap().info.matrix;
    assert_eq!(a, a.transpose());
    let b = observed_info_mixture(&n, &grid, &ModelParams::mixture(p.pi, p.mu, p.nu))
        .unwrap()
        .info
        .matrix;
    assert_eq!(b, b.transpose());
}

#[test]
fn intermediates_satisfy_their_invariants() {
    for seed in 0..10 {
        let (grid, n, p) = mixed_instance(seed);
        let info = observed_info_zipm(&n, &grid, &p).unwrap();
        let nonzero = (grid.cells() - n.zero_cells()) as f64 / grid.cells() as f64;
        assert!(info.rho >= nonzero - 1e-15 && info.rho <= 1.0);
        assert!(info.q.iter().all(|q| (0.0..=1.0).contains(q)));
        assert!(info.log_psi.iter().all(|l| l.is_finite()));
        let mix = observed_info_mixture(&n, &grid, &ModelParams::mixture(p.pi, p.mu, p.nu)).unwrap();
        assert!(mix.p.iter().all(|q| (0.0..=1.0).contains(q)));
        assert!(mix.log_gamma.iter().all(|l| l.is_finite()));
        // Weights of the rank-one corrections equal p (1 - p) / (pi (1 - pi)).
        for (w, q) in mix.weights.iter().zip(&mix.p) {
            let want = q * (1.0 - q) / (p.pi * (1.0 - p.pi));
            assert!((w - want).abs() <= 1e-7 * want.max(1e-300), "{w} vs {want}");
        }
    }
}

#[test]
fn schur_variance_equals_full_inverse() {
    for seed in 0..10 {
        let (grid, n, p) = mixed_instance(seed);
        let info = observed_info_zipm(&n, &grid, &p).unwrap().info;
        if let (Ok(a), Ok(b)) = (info.ratio_variance(p.mu, p.nu), info.ratio_variance_full(p.mu, p.nu)) {
            assert!((a - b).abs() <= 1e-10 * b, "{a} vs {b}");
        }
        let mix = observed_info_mixture(&n, &grid, &ModelParams::mixture(p.pi, p.mu, p.nu)).unwrap().info;
        if let (Ok(a), Ok(b)) = (mix.ratio_variance(p.mu, p.nu), mix.ratio_variance_full(p.mu, p.nu)) {
            assert!((a - b).abs() <= 1e-10 * b, "{a} vs {b}");
        }
    }
}

fn duplicate_sites(n: &Counts) -> Counts {
    let stacked = ndarray::concatenate(ndarray::Axis(1), &[n.0.view(), n.0.view()]).unwrap();
    Counts::new(stacked)
}

#[test]
fn ratio_variance_halves_when_sites_are_duplicated() {
    let cfg = SimConfig {
        grid: ExposureGrid::new(vec![0.5, 1.0, 1.5], 300).unwrap(),
        params: ModelParams::new(0.3, 0.8, 6.0, 2.0),
        seed: 3,
        replicates: 1,
    };
    let ds = simulate_dataset(&cfg).unwrap();
    let n = ds.n.unwrap();
    let opts = EmOptions::default();
    let fit = fit_em_zipm(&n, &cfg.grid, None, &opts).unwrap();
    let info = observed_info_zipm(&n, &cfg.grid, &fit.params).unwrap().info;
    let v1 = info.ratio_variance(fit.params.mu, fit.params.nu).unwrap();

    let n2 = duplicate_sites(&n);
    let grid2 = ExposureGrid::new(cfg.grid.t().to_vec(), 600).unwrap();
    let fit2 = fit_em_zipm(&n2, &grid2, Some(fit.params), &opts).unwrap();
    let info2 = observed_info_zipm(&n2, &grid2, &fit2.params).unwrap().info;
    let v2 = info2.ratio_variance(fit2.params.mu, fit2.params.nu).unwrap();
    assert!((v2 / v1 - 0.5).abs() < 1e-4, "ratio {}", v2 / v1);

    let ci = ci_theta_zipm(&fit, &info, 0.95).unwrap();
    let ci2 = ci_theta_zipm(&fit2, &info2, 0.95).unwrap();
    assert!((ci2.width() / ci.width() - 0.5f64.sqrt()).abs() < 1e-4);

    let mix_fit = fit_em_mixture(&ds.m.clone().unwrap(), &cfg.grid, None, &opts).unwrap();
    let mi = observed_info_mixture(ds.m.as_ref().unwrap(), &cfg.grid, &mix_fit.params).unwrap().info;
    let m2 = duplicate_sites(ds.m.as_ref().unwrap());
    let mi2 = observed_info_mixture(&m2, &grid2, &mix_fit.params).unwrap().info;
    let (a, b) = (
        mi.ratio_variance(mix_fit.params.mu, mix_fit.params.nu).unwrap(),
        mi2.ratio_variance(mix_fit.params.mu, mix_fit.params.nu).unwrap(),
    );
    assert!((b / a - 0.5).abs() < 1e-12);
}

#[test]
fn boundary_parameters_rejected() {
    let (grid, n, p) = mixed_instance(1);
    assert!(observed_info_zipm(&n, &grid, &ModelParams { eps: 1.0, ..p }).is_err());
    assert!(observed_info_mixture(&n, &grid, &ModelParams::mixture(0.0, 1.0, 2.0)).is_err());
}
