//! Principal branch of the Lambert W function on `[0, inf)`.
//!
//! `W(y)` is the unique `w >= 0` with `w * exp(w) = y`. Evaluation uses
//! Halley's iteration on `f(w) = w e^w - y`, started from `ln(1 + y)` for
//! `y <= e` and from the asymptotic `ln y - ln ln y` above.

use std::f64::consts::E;

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 50;

pub fn lambert_w0(y: f64) -> Result<f64> {
    if !y.is_finite() || y < 0.0 {
        return Err(Error::LambertDomain(y));
    }
    Ok(w0(y))
}

/// `dW/dy = W / (y (1 + W))`, written as `1 / (e^W (1 + W))` so it stays
/// accurate as `y -> 0`.
pub fn lambert_w0_derivative(y: f64) -> Result<f64> {
    if !y.is_finite() || y <= 0.0 {
        return Err(Error::LambertDomain(y));
    }
    let w = w0(y);
    Ok(1.0 / (w.exp() * (1.0 + w)))
}

/// Unchecked evaluation; callers guarantee `y` finite and non-negative.
pub(crate) fn w0(y: f64) -> f64 {
    debug_assert!(y.is_finite() && y >= 0.0, "W0 argument {y}");
    if y == 0.0 {
        return 0.0;
    }
    let mut w = if y <= E {
        y.ln_1p()
    } else {
        let l = y.ln();
        l - l.ln()
    };
    for _ in 0..MAX_ITERATIONS {
        let ew = w.exp();
        let f = w * ew - y;
        let wp1 = w + 1.0;
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= step;
        if step.abs() <= 1e-15 * (1.0 + w.abs()) {
            break;
        }
    }
    w.max(0.0)
}
