//! Globally adaptive Gauss-Kronrod (7/15) quadrature.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 0.0,
            rel_tol: 1e-12,
            max_intervals: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    /// Rounding error level of `value`; refinement below it is pointless.
    floor: f64,
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut fv = [(0.0, 0.0); 7];
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    let mut abs_sum = WGK[7] * fc.abs();
    for (k, &x) in XGK.iter().enumerate().take(7) {
        let dx = half * x;
        let (lo, hi) = (f(centre - dx), f(centre + dx));
        fv[k] = (lo, hi);
        kron += WGK[k] * (lo + hi);
        abs_sum += WGK[k] * (lo.abs() + hi.abs());
        if k % 2 == 1 {
            gauss += WG[k / 2] * (lo + hi);
        }
    }
    // Spread of f about its mean, as in QUADPACK's qk15.
    let mean = 0.5 * kron;
    let mut asc = WGK[7] * (fc - mean).abs();
    for (k, &(lo, hi)) in fv.iter().enumerate() {
        asc += WGK[k] * ((lo - mean).abs() + (hi - mean).abs());
    }
    let resabs = abs_sum * half.abs();
    let resasc = asc * half.abs();
    let mut error = ((kron - gauss) * half).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    let floor = 50.0 * f64::EPSILON * resabs;
    Panel {
        a,
        b,
        value: kron * half,
        error: error.max(floor),
        floor,
    }
}

/// Integrates `f` over the finite interval `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let mut panels = vec![kronrod(&f, a, b)];
    loop {
        let total: f64 = panels.iter().map(|p| p.value).sum();
        let error: f64 = panels.iter().map(|p| p.error).sum();
        let floor: f64 = panels.iter().map(|p| p.floor).sum();
        if !total.is_finite() {
            return Err(Error::Quadrature(format!("non-finite integral on [{a}, {b}]")));
        }
        // Stop at the requested accuracy, or once every panel is down to
        // rounding error.
        if error <= opts.abs_tol.max(opts.rel_tol * total.abs()) || error <= floor {
            return Ok(total);
        }
        if panels.len() >= opts.max_intervals {
            return Err(Error::Quadrature(format!(
                "no convergence on [{a}, {b}]: estimate {total}, error {error}"
            )));
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .filter(|(_, p)| p.error > p.floor)
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("some panel is above its rounding floor");
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            // Interval can no longer be split; accept the panel as is.
            panels.push(Panel { error: p.floor, ..p });
            continue;
        }
        panels.push(kronrod(&f, p.a, mid));
        panels.push(kronrod(&f, mid, p.b));
    }
}

/// Integrates `f` over `[a, inf)` through the map `x = a + u / (1 - u)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, opts: QuadOptions) -> Result<f64> {
    integrate(
        |u| {
            if u >= 1.0 {
                return 0.0;
            }
            let v = 1.0 - u;
            let x = a + u / v;
            let fx = f(x);
            if fx == 0.0 {
                0.0
            } else {
                fx / (v * v)
            }
        },
        0.0,
        1.0,
        opts,
    )
}
