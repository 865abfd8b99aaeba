//! Adaptive quadrature on top of double-exponential (tanh-sinh) panels.

use crate::error::{invalid, PrbmError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
    /// Upper limit of semi-infinite integrals, in units of the integrand's decay length.
    pub cutoff: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-9, abs_tol: 1e-300, max_subdivisions: 4000, cutoff: 60.0 }
    }
}

impl QuadratureConfig {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Self { rel_tol, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol >= 0.0) {
            return Err(invalid("quadrature tolerances must be positive"));
        }
        // exp(-cutoff) * cutoff^3 bounds the tail of u^k e^{-u}, k <= 3
        if !(self.cutoff > 0.0) || (-self.cutoff).exp() * self.cutoff.powi(3) > self.rel_tol {
            return Err(invalid(format!("cutoff {} leaves a tail above rel_tol", self.cutoff)));
        }
        if self.max_subdivisions == 0 {
            return Err(invalid("max_subdivisions must be >= 1"));
        }
        Ok(())
    }
}

/// Integral of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<f64> {
    integrate_breaks(f, &[a, b], cfg)
}

/// Integral over `[pts[0], pts[last]]`, with panel boundaries forced at every entry of `pts`.
/// Integrable endpoint singularities are allowed at any break point.
pub fn integrate_breaks<F: Fn(f64) -> f64>(f: F, pts: &[f64], cfg: &QuadratureConfig) -> Result<f64> {
    cfg.validate()?;
    if pts.len() < 2 || pts.iter().any(|p| !p.is_finite()) {
        return Err(invalid("integration limits must be finite"));
    }
    let lo = pts[0];
    let hi = pts[pts.len() - 1];
    if lo == hi {
        return Ok(0.0);
    }
    let sign = if hi < lo { -1.0 } else { 1.0 };
    let mut panels: Vec<(f64, f64)> = pts
        .windows(2)
        .filter(|w| w[0] != w[1])
        .map(|w| if sign > 0.0 { (w[0], w[1]) } else { (w[1], w[0]) })
        .collect();
    let width = (hi - lo).abs();

    let mut rough = 0.0;
    let mut first = Vec::with_capacity(panels.len());
    for &(x0, x1) in &panels {
        let o = quadrature::integrate(&f, x0, x1, 1e-6);
        rough += o.integral.abs();
        first.push(o);
    }
    let tol = (cfg.rel_tol * rough).max(cfg.abs_tol);
    // below this a panel's error estimate is roundoff, not truncation
    let floor = 8.0 * f64::EPSILON * rough;

    let mut total = 0.0;
    let mut comp = 0.0;
    let mut splits = 0usize;
    let mut stack: Vec<(f64, f64)> = Vec::new();
    stack.extend(panels.drain(..).rev());
    while let Some((x0, x1)) = stack.pop() {
        let target = tol * (x1 - x0) / width;
        let o = quadrature::integrate(&f, x0, x1, target);
        if o.error_estimate <= target.max(floor) || (x1 - x0) <= 1e-14 * (1.0 + x0.abs()) {
            // Kahan summation: many small panels near singular break points
            let y = o.integral - comp;
            let t = total + y;
            comp = (t - total) - y;
            total = t;
            continue;
        }
        splits += 1;
        if splits > cfg.max_subdivisions {
            return Err(PrbmError::SlowConvergence(format!(
                "no convergence on [{lo}, {hi}] after {} subdivisions",
                cfg.max_subdivisions
            )));
        }
        let mid = 0.5 * (x0 + x1);
        stack.push((mid, x1));
        stack.push((x0, mid));
    }
    Ok(sign * total)
}

/// Integral over `[a, inf)` of an integrand damped like `exp(-(x - a) / scale)`.
pub fn integrate_exp_tail<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    scale: f64,
    extra_breaks: &[f64],
    cfg: &QuadratureConfig,
) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(invalid("decay scale must be positive"));
    }
    let end = a + cfg.cutoff * scale;
    let mut pts = vec![a];
    let mut inner: Vec<f64> = extra_breaks.iter().copied().filter(|&p| p > a && p < end).collect();
    inner.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.extend(inner);
    // geometric panels keep the exponential decay resolvable by each DE panel
    let mut k = 1.0;
    while a + k * scale < end {
        pts.push(a + k * scale);
        k *= 2.0;
    }
    pts.push(end);
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup();
    integrate_breaks(f, &pts, cfg)
}

/// Integral over `[a, inf)` for algebraically decaying integrands, via `x = a + t / (1 - t)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, cfg: &QuadratureConfig) -> Result<f64> {
    integrate_breaks(
        |t| {
            let s = 1.0 - t;
            f(a + t / s) / (s * s)
        },
        &[0.0, 0.5, 0.9, 0.99, 1.0],
        cfg,
    )
}
