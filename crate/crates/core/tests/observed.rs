mod support;

use ndarray::Array2;
use support::*;
use zipm_core::model::{Counts, ExposureGrid, ModelParams};
use zipm_core::observed::*;
use zipm_core::quadrature::{integrate_to_infinity, QuadOptions};
use zipm_core::simulate::{simulate_replicate, SimConfig};
use zipm_core::Error;

#[test]
fn split_matches_cell_loop() {
    let mut r = rng(1);
    let grid = ExposureGrid::new(vec![0.5, 1.0, 2.0], 4).unwrap();
    let m = small_counts(&mut r, 3, 4, 9);
    let y = [true, false, false, true];
    let s = split_from_data(&y, &m, &grid).unwrap();
    let (mut rare, mut common) = (0, 0);
    for i in 0..3 {
        for j in 0..4 {
            if y[j] {
                rare += m.get(i, j);
            } else {
                common += m.get(i, j);
            }
        }
    }
    assert_eq!((s.rare_total, s.common_total, s.rare_sites, s.sites), (rare, common, 2, 4));
    assert!((s.total_exposure - 14.0).abs() < 1e-15);
    assert!(matches!(split_from_data(&[false; 4], &m, &grid), Err(Error::DegenerateSplit(_))));
    assert!(matches!(split_from_data(&[true; 4], &m, &grid), Err(Error::DegenerateSplit(_))));
}

#[test]
fn mle_examples_and_exposure_equivariance() {
    let s = ObservedSplit::new(2, 4, 20, 10, 8.0).unwrap();
    let e = mle_observed(&s).unwrap();
    assert_eq!(e.theta, 2.0);
    assert_eq!(mle_observed(&ObservedSplit::new(2, 4, 7, 7, 8.0).unwrap()).unwrap().theta, 1.0);
    let doubled = mle_observed(&ObservedSplit::new(2, 4, 20, 10, 16.0).unwrap()).unwrap();
    assert!((doubled.mu - e.mu / 2.0).abs() < 1e-15 && (doubled.nu - e.nu / 2.0).abs() < 1e-15);
    assert_eq!(doubled.theta, e.theta);
    assert!(matches!(
        mle_observed(&ObservedSplit::new(2, 4, 20, 0, 8.0).unwrap()),
        Err(Error::ZeroDenominator(_))
    ));
}

#[test]
fn lognormal_interval_widens_with_level_and_shrinks_with_data() {
    let s = ObservedSplit::new(3, 10, 90, 70, 50.0).unwrap();
    let mut prev = 0.0;
    for level in [0.5, 0.8, 0.9, 0.95, 0.99, 0.999] {
        let ci = ci_theta_lognormal(&s, level).unwrap();
        assert!(ci.width() > prev);
        prev = ci.width();
    }
    let first = ci_theta_lognormal(&s, 0.95).unwrap().width();
    let mut prev = f64::INFINITY;
    for k in 0..8 {
        let f = 1u64 << k;
        let s = ObservedSplit::new(3, 10, 90 * f, 70 * f, 50.0 * f as f64).unwrap();
        let w = ci_theta_lognormal(&s, 0.95).unwrap().width();
        assert!(w < prev);
        prev = w;
    }
    // 128 times the data: roughly 1/sqrt(128) of the width.
    assert!(prev < 0.1 * first);
}

#[test]
fn arcsine_interval_at_even_split_maps_proportion_interval() {
    let s = ObservedSplit::new(5, 10, 30, 50, 20.0).unwrap();
    let ci = ci_theta_arcsine(&s, 0.95).unwrap();
    let eta = 30.0f64 / 80.0;
    let half = 1.959963984540054 / (2.0 * 80f64.sqrt());
    let lo = (eta.sqrt().asin() - half).sin().powi(2);
    let hi = (eta.sqrt().asin() + half).sin().powi(2);
    assert!((ci.lower - lo / (1.0 - lo)).abs() < 1e-9);
    assert!((ci.upper - hi / (1.0 - hi)).abs() < 1e-9);
}

#[test]
fn split_pmf_sums_to_one() {
    for (delta, theta) in [(1.0, 1.0), (2.5, 0.4), (0.8, 3.0)] {
        let mut total = 0.0;
        for ms in 0..400u64 {
            for mt in 0..400u64 {
                let s = ObservedSplit::new(1, 3, ms, mt, 2.0).unwrap();
                total += integrated_pmf_split(&s, delta, theta).exp();
            }
        }
        assert!((total - 1.0).abs() < 1e-8, "{total}");
    }
}

#[test]
fn split_pmf_forms_agree() {
    let s = ObservedSplit::new(3, 8, 17, 41, 12.5).unwrap();
    for k in 0..40 {
        let theta = 10f64.powf(-2.0 + 0.1 * k as f64);
        for delta in [0.5, 1.0, 3.0] {
            let a = integrated_pmf_split(&s, delta, theta);
            let b = integrated_pmf_split_negbin(&s, delta, theta);
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
        }
    }
}

#[test]
fn split_pmf_matches_rate_quadrature() {
    let s = ObservedSplit::new(2, 5, 6, 11, 7.5).unwrap();
    let (a, b) = (7.5 * 0.4, 7.5 * 0.6);
    let fact = |k: u64| (1..=k).map(|v| v as f64).product::<f64>();
    for theta in [1.0, 0.3, 2.0] {
        let f = |l: f64| {
            let (ma, mb) = (a * theta * l, b * l);
            ma.powi(6) * (-ma).exp() / fact(6) * mb.powi(11) * (-mb).exp() / fact(11) * (-l).exp()
        };
        let want = integrate_to_infinity(f, 0.0, QuadOptions::default()).unwrap();
        let got = integrated_pmf_split(&s, 1.0, theta).exp();
        assert!((got / want - 1.0).abs() < 1e-8, "{got} vs {want}");
    }
}

#[test]
fn mile_examples() {
    let s = ObservedSplit::new(3, 8, 17, 41, 12.5).unwrap();
    for delta in [0.5, 1.0, 2.0] {
        let est = mile(&s, delta, 0.95).unwrap();
        let mut best = (f64::NEG_INFINITY, 0.0);
        for k in 1..200_000 {
            let theta = k as f64 * 1e-5;
            let v = integrated_pmf_split(&s, delta, theta);
            if v > best.0 {
                best = (v, theta);
            }
        }
        assert!((est.point - best.1).abs() <= 1e-5, "{} vs {}", est.point, best.1);
    }
    let zero = ObservedSplit::new(3, 8, 0, 41, 12.5).unwrap();
    assert_eq!(mile(&zero, 1.0, 0.95).unwrap().point, 0.0);
    for theta in [0.1, 1.0, 7.0] {
        for (r, delta) in [(1, 0.5), (4, 2.0)] {
            let s = ObservedSplit::new(r, 8, 5, 5, 3.0).unwrap();
            let prod = mile_information(&s, delta, theta) * mile_inverse_information(&s, delta, theta);
            assert!((prod - 1.0).abs() < 1e-14);
        }
    }
}

/// Expected information about the ratio, by summing the negative second
/// derivative of the split log-pmf against the pmf itself.
#[test]
fn mile_information_matches_expectation_by_summation() {
    let (delta, theta) = (1.5, 1.7);
    let s0 = ObservedSplit::new(2, 5, 0, 0, 4.0).unwrap();
    let (a, b) = (4.0 * 0.4, 4.0 * 0.6 + 1.0);
    let mut info = 0.0;
    for ms in 0..300u64 {
        for mt in 0..300u64 {
            let s = ObservedSplit { rare_total: ms, common_total: mt, ..s0 };
            let p = integrated_pmf_split(&s, delta, theta).exp();
            let m = (ms + mt) as f64;
            let d2 = -(ms as f64) / theta.powi(2) + (m + delta) * a * a / (a * theta + b).powi(2);
            info += p * -d2;
        }
    }
    let got = mile_information(&s0, delta, theta);
    assert!((got / info - 1.0).abs() < 1e-8, "{got} vs {info}");
}

#[test]
fn mle_is_consistent_in_simulation() {
    let cfg = SimConfig {
        grid: ExposureGrid::new(vec![1.0; 4], 1000).unwrap(),
        params: ModelParams::new(0.3, 1.0, 6.0, 2.0),
        seed: 21,
        replicates: 1,
    };
    let ds = simulate_replicate(&cfg, 0).unwrap();
    let s = split_from_data(ds.y.as_ref().unwrap(), ds.m.as_ref().unwrap(), &cfg.grid).unwrap();
    let theta = mle_observed(&s).unwrap().theta;
    let se = theta * (1.0 / s.rare_total as f64 + 1.0 / s.common_total as f64).sqrt();
    assert!((theta - 3.0).abs() < 3.0 * se, "{theta} +- {se}");
}

/// Coverage of the two frequentist intervals for labelled data.
#[test]
fn labelled_intervals_cover_at_nominal_rate() {
    let cfg = SimConfig {
        grid: ExposureGrid::uniform(1, 1000).unwrap(),
        params: ModelParams::new(0.5, 1.0, 2.0, 1.0),
        seed: 31,
        replicates: 1000,
    };
    let (mut log_hits, mut asin_hits) = (0, 0);
    for rep in 0..1000 {
        let ds = simulate_replicate(&cfg, rep).unwrap();
        let s = split_from_data(ds.y.as_ref().unwrap(), ds.m.as_ref().unwrap(), &cfg.grid).unwrap();
        log_hits += usize::from(ci_theta_lognormal(&s, 0.95).unwrap().contains(2.0));
        asin_hits += usize::from(ci_theta_arcsine(&s, 0.95).unwrap().contains(2.0));
    }
    let (a, b) = (log_hits as f64 / 1000.0, asin_hits as f64 / 1000.0);
    assert!((0.92..=0.97).contains(&a), "lognormal {a}");
    assert!((0.92..=0.98).contains(&b), "arcsine {b}");
}

#[test]
fn mle_ignores_exposure_pattern() {
    let m = Counts::new(Array2::from_shape_fn((3, 4), |(i, j)| (i * 4 + j) as u64 % 5 + 1));
    let y = [true, false, true, false];
    let a = split_from_data(&y, &m, &ExposureGrid::new(vec![0.5, 1.0, 1.5], 4).unwrap()).unwrap();
    let b = split_from_data(&y, &m, &ExposureGrid::new(vec![3.0, 0.1, 9.0], 4).unwrap()).unwrap();
    assert_eq!(mle_observed(&a).unwrap().theta, mle_observed(&b).unwrap().theta);
}
