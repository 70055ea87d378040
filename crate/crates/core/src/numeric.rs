//! Log-space arithmetic and special functions.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::{beta, factorial, gamma};

pub fn ln_gamma(x: f64) -> f64 {
    gamma::ln_gamma(x)
}

pub fn ln_factorial(k: u64) -> f64 {
    factorial::ln_factorial(k)
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Regularized incomplete beta function.
pub fn beta_reg(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        beta::beta_reg(a, b, x)
    }
}

/// `x * ln(y)` with the convention `0 * ln(0) = 0`.
pub fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    let lo = a.min(b);
    hi + (lo - hi).exp().ln_1p()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let mut acc = LogSumExp::new();
    for &x in xs {
        acc.add(x);
    }
    acc.value()
}

/// Streaming log-sum-exp that rescales whenever a new maximum arrives.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }

    pub fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.scaled += (x - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// `ln(1 - exp(x))` for `x <= 0`.
pub fn log1m_exp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// Returns `(p, 1 - p)` for `p = 1 / (1 + exp(-d))`, each computed without
/// cancellation.
pub fn sigmoid_pair(d: f64) -> (f64, f64) {
    if d.is_nan() {
        return (f64::NAN, f64::NAN);
    }
    if d >= 0.0 {
        let e = (-d).exp();
        (1.0 / (1.0 + e), e / (1.0 + e))
    } else {
        let e = d.exp();
        (e / (1.0 + e), 1.0 / (1.0 + e))
    }
}

/// `p (1 - p)` for the sigmoid of `d`.
pub fn sigmoid_var(d: f64) -> f64 {
    let e = (-d.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

/// Poisson log-pmf, allowing a zero mean.
pub fn poisson_logpmf(k: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    xlogy(k as f64, mean) - mean - ln_factorial(k)
}

/// Two-sided standard normal critical value for a central `level` interval.
pub fn normal_critical(level: f64) -> f64 {
    if level <= 0.0 {
        return 0.0;
    }
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    std.inverse_cdf(0.5 + level / 2.0)
}

pub fn ln_choose(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}
