//! Error function to near machine precision.
//!
//! Two regimes: for |x| < 4 the confluent hypergeometric series
//!
//! ```text
//! erf(x) = (2x/√π) e^{-x²} Σ_{k≥0} (2x²)^k / (1·3·5···(2k+1))
//! ```
//!
//! whose terms are all positive (no cancellation), and for |x| ≥ 4 the
//! Legendre continued fraction for erfc evaluated by modified Lentz.
//! Absolute error is below 1e-15 over the full real line.

use std::f64::consts::{FRAC_2_SQRT_PI, PI};

const SERIES_CUTOFF: f64 = 4.0;
const LENTZ_TINY: f64 = 1e-300;

/// erf(x) = (2/√π) ∫₀ˣ e^{-t²} dt.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return -1.0;
    }
    let ax = x.abs();
    let value = if ax < SERIES_CUTOFF {
        erf_series(ax)
    } else {
        1.0 - erfc_cf(ax)
    };
    if x < 0.0 {
        -value
    } else {
        value
    }
}

/// erfc(x) = 1 − erf(x), accurate in the far tail.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    if x == f64::NEG_INFINITY {
        return 2.0;
    }
    if x < SERIES_CUTOFF {
        // For negative and moderate x, 1 - erf(x) loses nothing: erf(x) < 1 - 1e-8 here.
        1.0 - erf(x)
    } else {
        erfc_cf(x)
    }
}

fn erf_series(x: f64) -> f64 {
    let z = 2.0 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 0u32;
    loop {
        k += 1;
        term *= z / f64::from(2 * k + 1);
        sum += term;
        if term < sum * f64::EPSILON || k > 200 {
            break;
        }
    }
    FRAC_2_SQRT_PI * x * (-x * x).exp() * sum
}

// A&S 7.1.14: √π e^{x²} erfc(x) = 1/(x + (1/2)/(x + (2/2)/(x + (3/2)/(x + ...)))).
fn erfc_cf(x: f64) -> f64 {
    let mut f = x;
    let mut c = x;
    let mut d = 0.0_f64;
    for k in 1..=200u32 {
        let a = f64::from(k) / 2.0;
        d = x + a * d;
        if d == 0.0 {
            d = LENTZ_TINY;
        }
        c = x + a / c;
        if c == 0.0 {
            c = LENTZ_TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < f64::EPSILON {
            break;
        }
    }
    (-x * x).exp() / (PI.sqrt() * f)
}
