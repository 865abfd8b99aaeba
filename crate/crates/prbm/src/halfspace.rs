//! Partially reflected Brownian motion above a hyperplane.

use crate::error::{invalid, PrbmError, Result};
use crate::quadrature::{integrate, integrate_breaks, integrate_exp_tail, QuadratureConfig};
use crate::special::{erfcx, erfcx_deficit, gamma};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// `lambda = D / W` is a length; `diffusion` is `D`; `c0` the source concentration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportParams {
    pub lambda: f64,
    pub diffusion: f64,
    pub c0: f64,
}

impl TransportParams {
    pub fn new(lambda: f64, diffusion: f64, c0: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !(diffusion > 0.0) || !(c0 > 0.0) {
            return Err(invalid(format!("need Lambda >= 0, D > 0, C0 > 0; got ({lambda}, {diffusion}, {c0})")));
        }
        Ok(Self { lambda, diffusion, c0 })
    }
}

impl Default for TransportParams {
    fn default() -> Self {
        Self { lambda: 1.0, diffusion: 1.0, c0: 1.0 }
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

fn scaled_time(t: f64, lambda: f64) -> Result<f64> {
    check_positive("t", t)?;
    check_positive("Lambda", lambda)?;
    let tau = t / (2.0 * lambda * lambda);
    if !tau.is_finite() || tau == 0.0 {
        return Err(PrbmError::NumericOverflow(format!("t / (2 Lambda^2) = {t} / (2 {lambda}^2) is not representable")));
    }
    Ok(tau)
}

/// Density of the stopping time started on the hyperplane,
/// `rho(t) = (1 / 2 Lambda^2) [1 / sqrt(pi tau) - erfcx(sqrt tau)]`, `tau = t / 2 Lambda^2`.
pub fn stopping_time_density(t: f64, lambda: f64) -> Result<f64> {
    let tau = scaled_time(t, lambda)?;
    Ok(erfcx_deficit(tau.sqrt()) / (2.0 * lambda * lambda))
}

/// Closed-form distribution function `1 - erfcx(sqrt(t / 2 Lambda^2))`.
pub fn stopping_time_cdf(t: f64, lambda: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    let tau = scaled_time(t, lambda)?;
    Ok(1.0 - erfcx(tau.sqrt()))
}

/// Distribution function by quadrature of the density (substituting `t = v^2`).
pub fn stopping_time_cdf_quadrature(t: f64, lambda: f64, cfg: &QuadratureConfig) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    scaled_time(t, lambda)?;
    let vmax = t.sqrt();
    let mut pts = vec![0.0];
    let mut b = 1e-3 * lambda;
    while b < vmax {
        pts.push(b);
        b *= 4.0;
    }
    pts.push(vmax);
    let f = |v: f64| if v > 0.0 { 2.0 * v * stopping_time_density(v * v, lambda).unwrap_or(0.0) } else { 0.0 };
    integrate_breaks(f, &pts, cfg)
}

/// The density as the exponential mixture of first-passage densities,
/// `int_0^inf z exp(-z^2/2t) exp(-z/Lambda) dz / (Lambda sqrt(2 pi) t^{3/2})`.
pub fn stopping_time_density_quadrature(t: f64, lambda: f64, cfg: &QuadratureConfig) -> Result<f64> {
    scaled_time(t, lambda)?;
    let pref = 1.0 / (lambda * (2.0 * PI).sqrt() * t.powf(1.5));
    let width = t.sqrt();
    let scale = lambda.min(width);
    let v = integrate_exp_tail(
        |z| z * (-z * z / (2.0 * t) - z / lambda).exp(),
        0.0,
        scale,
        &[0.5 * width, width, 2.0 * width, 4.0 * width],
        cfg,
    )?;
    Ok(pref * v)
}

fn unit_sphere_factor(d: usize) -> f64 {
    gamma(d as f64 / 2.0) / PI.powf(d as f64 / 2.0)
}

fn check_dim(d: usize) -> Result<()> {
    if d < 2 {
        return Err(invalid(format!("dimension must be >= 2, got {d}")));
    }
    Ok(())
}

/// `int_0^inf u e^{-u} ((1 + z^2) / (u^2 + z^2))^{d/2} du`, i.e. eta_d(z).
fn eta_integral(z: f64, d: usize, cfg: &QuadratureConfig) -> Result<f64> {
    let h = d as f64 / 2.0;
    let one = 1.0 + z * z;
    let mut breaks = Vec::new();
    let mut b = z;
    while b < 1.0 {
        breaks.push(b);
        b *= 4.0;
    }
    if z < 1.0 {
        breaks.extend([0.25 * z, 0.5 * z, 2.0 * z]);
    }
    integrate_exp_tail(|u| u * (-u).exp() * (one / (u * u + z * z)).powf(h), 0.0, 1.0, &breaks, cfg)
}

/// Correction factor `eta_d(z) = (1+z^2)^{d/2} int_0^inf t e^{-t} (t^2+z^2)^{-d/2} dt`.
pub fn eta(z: f64, d: usize, cfg: &QuadratureConfig) -> Result<f64> {
    check_dim(d)?;
    check_positive("z", z)?;
    eta_integral(z, d, cfg)
}

/// Harmonic measure density of the half-space seen from `x` (`x_d > 0`) at the
/// boundary point `s`: `Gamma(d/2)/pi^{d/2} x_d / (|x_par - s|^2 + x_d^2)^{d/2}`.
pub fn harmonic_density_halfspace(x: &[f64], s: &[f64]) -> Result<f64> {
    let d = x.len();
    check_dim(d)?;
    if s.len() != d - 1 {
        return Err(invalid("boundary point must have d - 1 coordinates"));
    }
    let h = x[d - 1];
    check_positive("x_d", h)?;
    let r2: f64 = s.iter().zip(x).map(|(si, xi)| (xi - si) * (xi - si)).sum();
    Ok(unit_sphere_factor(d) * h / (r2 + h * h).powf(d as f64 / 2.0))
}

/// Absorption density on the hyperplane for the motion started on it at the origin,
/// `t_Lambda(s) = Gamma(d/2) / (pi^{d/2} Lambda) int_0^inf z e^{-z/Lambda} (|s|^2 + z^2)^{-d/2} dz`.
/// Diverges at `s = 0`, where `+inf` is returned.
pub fn spread_kernel_t(s: &[f64], lambda: f64, d: usize, cfg: &QuadratureConfig) -> Result<f64> {
    check_dim(d)?;
    check_positive("Lambda", lambda)?;
    if s.len() != d - 1 {
        return Err(invalid("lateral coordinate must have d - 1 components"));
    }
    let r = s.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r == 0.0 {
        return Ok(f64::INFINITY);
    }
    let z = r / lambda;
    // t = eta_d(z) * harmonic density at height Lambda
    let i = eta_integral(z, d, cfg)? / (1.0 + z * z).powf(d as f64 / 2.0);
    Ok(unit_sphere_factor(d) * lambda.powi(1 - d as i32) * i)
}

fn disk_constant(d: usize) -> f64 {
    2.0 * gamma(d as f64 / 2.0) / (gamma((d as f64 - 1.0) / 2.0) * PI.sqrt())
}

/// `G(w) = int_0^w y^{d-2} (1+y^2)^{-d/2} dy`, with `G(inf) = 1 / disk_constant(d)`.
fn disk_inner(w: f64, d: usize, cfg: &QuadratureConfig) -> Result<f64> {
    let h = d as f64 / 2.0;
    if w <= 1.0 {
        return integrate(|y| y.powi(d as i32 - 2) * (1.0 + y * y).powf(-h), 0.0, w, cfg);
    }
    // tail via y = 1/v
    let tail = integrate(|v| (1.0 + v * v).powf(-h), 0.0, 1.0 / w, cfg)?;
    Ok(1.0 / disk_constant(d) - tail)
}

/// Probability that the motion started at the centre of a hyperplane disk of
/// radius `r` is finally absorbed on it. Depends on `r / Lambda` only.
pub fn absorption_probability_disk(r: f64, lambda: f64, d: usize, cfg: &QuadratureConfig) -> Result<f64> {
    check_dim(d)?;
    check_positive("Lambda", lambda)?;
    if !(r >= 0.0) || !r.is_finite() {
        return Err(invalid(format!("radius must be finite and >= 0, got {r}")));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    let rho = r / lambda;
    let c = disk_constant(d);
    let inner_cfg = QuadratureConfig { rel_tol: cfg.rel_tol * 1e-2, ..*cfg };
    let f = |t: f64| {
        if t <= 0.0 {
            return 1.0 / c;
        }
        (-t).exp() * disk_inner(rho / t, d, &inner_cfg).unwrap_or(f64::NAN)
    };
    let v = integrate_exp_tail(f, 0.0, 1.0, &[0.5 * rho, rho, 2.0 * rho], cfg)?;
    if !v.is_finite() {
        return Err(PrbmError::SlowConvergence("inner disk integral did not converge".into()));
    }
    Ok((c * v).clamp(0.0, 1.0))
}

/// Smallest `x_2 / Lambda` accepted by [`spread_density_halfspace`].
pub const SPREAD_DENSITY_FLOOR: f64 = 1e-3;

/// Planar spread harmonic measure density (d = 2) at `s` for the start point `x = (x1, x2)`,
/// `(1/2pi) int e^{ik(s - x1)} e^{-x2|k|} / (1 + Lambda|k|) dk`.
pub fn spread_density_halfspace(x: [f64; 2], s: f64, lambda: f64, cfg: &QuadratureConfig) -> Result<f64> {
    check_positive("x_2", x[1])?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("Lambda must be finite and >= 0, got {lambda}")));
    }
    let h = x[1];
    if h / lambda < SPREAD_DENSITY_FLOOR {
        return Err(PrbmError::SlowConvergence(format!(
            "x_2 / Lambda = {} is below the floor {SPREAD_DENSITY_FLOOR}",
            h / lambda
        )));
    }
    // k = u / x2: (1 / pi x2) int_0^inf cos(w u) e^{-u} / (1 + c u) du
    let c = lambda / h;
    let w = ((s - x[0]) / h).abs();
    let core = if w > 40.0 * (1.0 + c) { cosine_transform_asymptotic(w, c) } else { cosine_transform_quadrature(w, c, cfg)? };
    Ok(core / (PI * h))
}

/// `int_0^inf cos(w u) e^{-u} / (1 + c u) du` over panels no longer than half a period.
fn cosine_transform_quadrature(w: f64, c: f64, cfg: &QuadratureConfig) -> Result<f64> {
    let end = cfg.cutoff;
    let mut pts = vec![0.0];
    if c > 1.0 {
        pts.extend([0.25 / c, 1.0 / c, 4.0 / c].into_iter().filter(|&p| p < 1.0));
    }
    let step = if w > 0.0 { (PI / w).min(1.0) } else { 1.0 };
    let mut u = step;
    while u < end {
        pts.push(u);
        u += step;
    }
    pts.push(end);
    pts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    pts.dedup();
    let local = QuadratureConfig { max_subdivisions: cfg.max_subdivisions.max(4 * pts.len()), ..*cfg };
    integrate_breaks(|u| (w * u).cos() * (-u).exp() / (1.0 + c * u), &pts, &local)
}

/// `int_0^inf cos(w u) g(u) du ~ sum_{m>=1} (-1)^m g^{(2m-1)}(0) / w^{2m}` for
/// `g(u) = e^{-u} / (1 + c u)`, valid for `w >> 1 + c`.
fn cosine_transform_asymptotic(w: f64, c: f64) -> f64 {
    // Taylor coefficients from (1 + c u) g = e^{-u}
    let n_max = 80;
    let mut coef = Vec::with_capacity(n_max);
    let mut inv_fact = 1.0;
    for n in 0..n_max {
        if n > 0 {
            inv_fact /= n as f64;
        }
        let e = if n % 2 == 0 { inv_fact } else { -inv_fact };
        let prev = if n > 0 { coef[n - 1] } else { 0.0 };
        coef.push(e - c * prev);
    }
    let mut sum = 0.0;
    let mut fact = 1.0; // (2m-1)!
    let mut wpow = 1.0;
    let mut last = f64::INFINITY;
    for m in 1..n_max / 2 {
        let k = 2 * m - 1;
        if m > 1 {
            fact *= (k - 1) as f64 * k as f64;
        }
        wpow *= w * w;
        let term = fact * coef[k] / wpow * if m % 2 == 0 { 1.0 } else { -1.0 };
        if term.abs() >= last {
            break;
        }
        sum += term;
        last = term.abs();
        if last < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}
