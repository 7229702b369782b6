//! Small numeric helpers shared by several modules.

use alloc::format;
use alloc::string::String;

/// Significant digits used for every real number written to text formats.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Render `x` like C's `%.12g`: twelve significant digits, trailing zeros
/// stripped, scientific notation only for very large or small magnitudes.
pub fn fmt_g12(x: f64) -> String {
    fmt_g(x, SIGNIFICANT_DIGITS)
}

/// `%.{digits}g` rendering.
pub fn fmt_g(x: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if x.is_nan() {
        return String::from("nan");
    }
    if x.is_infinite() {
        return String::from(if x > 0.0 { "inf" } else { "-inf" });
    }
    if x == 0.0 {
        return String::from(if x.is_sign_negative() { "-0" } else { "0" });
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("exponent digits");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = strip_zeros(mantissa);
        format!("{mantissa}e{exp}")
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{:.*}", decimals, x)).into()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Nearest-rank percentile of an ascending slice: the smallest value with at
/// least `p` of the mass at or below it. `p` in `[0, 1]`.
pub fn nearest_rank(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    let rank = libm::ceil(p.clamp(0.0, 1.0) * n as f64) as usize;
    Some(sorted[rank.clamp(1, n) - 1])
}

/// Linearly interpolated percentile of an ascending slice (the common
/// "linear" definition), `p` in `[0, 1]`.
pub fn interpolated(sorted: &[f64], p: f64) -> Option<f64> {
    match sorted.len() {
        0 => None,
        1 => Some(sorted[0]),
        n => {
            let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = libm::floor(pos) as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
        }
    }
}

/// Median of an ascending slice; mean of the two middle values for even
/// lengths.
pub fn median(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    if n == 0 {
        None
    } else if n % 2 == 1 {
        Some(sorted[n / 2])
    } else {
        Some(0.5 * (sorted[n / 2 - 1] + sorted[n / 2]))
    }
}

/// Wrap an angle in radians to `(-π, π]`.
pub fn wrap_pi(a: f64) -> f64 {
    use core::f64::consts::{PI, TAU};
    let mut w = a - TAU * libm::floor(a / TAU);
    if w > PI {
        w -= TAU;
    }
    w
}
