use errorfunctions::RealErrorFunctions;
use std::f64::consts::PI;

pub use statrs::function::gamma::{gamma, ln_gamma};

/// Scaled complementary error function `exp(x^2) erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    x.erfcx()
}

/// `1/(sqrt(pi) x) - erfcx(x)` for `x > 0`, free of cancellation for large `x`.
pub fn erfcx_deficit(x: f64) -> f64 {
    let inv_sqrt_pi = 1.0 / PI.sqrt();
    if x < 8.0 {
        return inv_sqrt_pi / x - erfcx(x);
    }
    // (1/sqrt(pi)) sum_{n>=1} (-1)^{n+1} (2n-1)!! / (2^n x^{2n+1}); terms shrink while 2n+1 < 2x^2
    let x2 = x * x;
    let mut term = 1.0 / (2.0 * x2 * x);
    let mut sum = 0.0;
    let mut n = 1.0;
    loop {
        sum += term;
        let next = -term * (2.0 * n + 1.0) / (2.0 * x2);
        if next.abs() < 1e-17 * sum.abs() || next.abs() >= term.abs() {
            break;
        }
        term = next;
        n += 1.0;
    }
    inv_sqrt_pi * sum
}
