//! Exact spectral series for the disk, the ball and the annulus, and the
//! impedance built from a spectrum.

use crate::error::{invalid, PrbmError, Result};
use crate::quadrature::{integrate_exp_tail, QuadratureConfig};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesConfig {
    pub max_terms: usize,
    pub tail_tol: f64,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self { max_terms: 1_000_000, tail_tol: 1e-15 }
    }
}

fn check_radius(r: f64) -> Result<()> {
    if (0.0..1.0).contains(&r) {
        Ok(())
    } else {
        Err(invalid(format!("radius must lie in [0, 1), got {r}")))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && !lambda.is_nan() {
        Ok(())
    } else {
        Err(invalid(format!("Lambda must be >= 0, got {lambda}")))
    }
}

/// Smallest `n` with `poly(n) r^n / (1 - r)^2 < tail_tol`; bounds the tail of
/// series whose terms are dominated by `poly(alpha) r^alpha`.
fn terms_needed(r: f64, cfg: &SeriesConfig, poly: impl Fn(f64) -> f64) -> Result<usize> {
    if r == 0.0 {
        return Ok(1);
    }
    let bound = |n: usize| poly(n as f64) * r.powi(n as i32) / ((1.0 - r) * (1.0 - r));
    let mut n = 1usize;
    while bound(n) >= cfg.tail_tol {
        if n >= cfg.max_terms {
            return Err(PrbmError::TruncationTooCoarse { terms: cfg.max_terms, tail: bound(n) });
        }
        n = (n * 2).min(cfg.max_terms);
    }
    Ok(n)
}

/// `(1 - r^2) / (2 pi (1 - 2 r cos theta + r^2))`.
pub fn poisson_kernel_disk(r: f64, theta: f64) -> Result<f64> {
    check_radius(r)?;
    Ok((1.0 - r * r) / (2.0 * PI * (1.0 - 2.0 * r * theta.cos() + r * r)))
}

/// `(1/2pi) [1 + 2 sum_{alpha>=1} r^alpha cos(alpha theta) / (1 + Lambda alpha)]`.
pub fn disk_spread_density(r: f64, theta: f64, lambda: f64, cfg: &SeriesConfig) -> Result<f64> {
    check_radius(r)?;
    check_lambda(lambda)?;
    if r == 0.0 {
        return Ok(1.0 / (2.0 * PI));
    }
    let n = terms_needed(r, cfg, |_| 1.0)?;
    let mut sum = 0.0;
    let mut p = 1.0;
    for alpha in 1..=n {
        p *= r;
        let a = alpha as f64;
        sum += p * (a * theta).cos() / (1.0 + lambda * a);
    }
    Ok((1.0 + 2.0 * sum) / (2.0 * PI))
}

/// `T_Lambda(theta, theta') = (1/2pi) sum_alpha e^{i alpha (theta - theta')} / (1 + Lambda |alpha|)`.
///
/// The first `N >= 1/Lambda` terms are summed directly; the remainder
/// `sum_{alpha>N} cos(alpha d) / (1 + Lambda alpha)` equals
/// `int_0^inf e^{-v} Re[q^{N+1} / (1 - q)] dv` with `q = e^{-v Lambda + i d}` and is integrated.
pub fn disk_spreading_kernel(theta: f64, theta_p: f64, lambda: f64, cfg: &SeriesConfig) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("Lambda must be positive, got {lambda}")));
    }
    // |theta - theta'| is exactly symmetric in its arguments; the signed difference is not after reduction
    let d = (theta - theta_p).abs().rem_euclid(2.0 * PI);
    let gap = d.min(2.0 * PI - d);
    if gap < 1e-12 {
        return Err(PrbmError::DiagonalSingularity(gap));
    }
    let n = ((1.0 / lambda).ceil() as usize).clamp(16, cfg.max_terms.max(16));
    let mut partial = 0.0;
    for alpha in 1..=n {
        let a = alpha as f64;
        partial += (a * gap).cos() / (1.0 + lambda * a);
    }
    let m = (n + 1) as f64;
    // the kernel is even in the angle, so the folded gap makes it exactly symmetric
    let (cm, sm) = ((m * gap).cos(), (m * gap).sin());
    let s1 = gap.sin();
    let s_half = (0.5 * gap).sin();
    let f = |v: f64| {
        let rho = (-v * lambda).exp();
        let one_minus = -(-v * lambda).exp_m1();
        let den = one_minus * one_minus + 4.0 * rho * s_half * s_half;
        // 1 - rho cos(gap), without cancellation when both v and gap are small
        let num = cm * (one_minus + 2.0 * rho * s_half * s_half) - sm * rho * s1;
        (-v).exp() * rho.powf(m) * num / den
    };
    let decay = 1.0 / (1.0 + m * lambda);
    let qcfg = QuadratureConfig { rel_tol: cfg.tail_tol.max(1e-13), ..QuadratureConfig::default() };
    // the integrand behaves like 1/v between gap/Lambda and O(1): geometric breaks keep each piece smooth
    let breaks: Vec<f64> = (-1..40)
        .map(|k| gap / lambda * 10f64.powi(k))
        .take_while(|&b| b < 60.0 * decay)
        .collect();
    let tail = integrate_exp_tail(f, 0.0, decay, &breaks, &qcfg)?;
    Ok((1.0 + 2.0 * (partial + tail)) / (2.0 * PI))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BallSide {
    Interior,
    Exterior,
}

/// Dirichlet-to-Neumann eigenvalue of the unit ball: `l` inside, `l + 1` outside.
pub fn ball_eigenvalue(l: u64, side: BallSide) -> f64 {
    match side {
        BallSide::Interior => l as f64,
        BallSide::Exterior => l as f64 + 1.0,
    }
}

/// `n_l = (2l + d - 2) / (d - 2) * (l + d - 3)! / ((d - 3)! l!)`, exact.
pub fn ball_degeneracy(l: u64, d: u64) -> Result<u64> {
    if d < 3 {
        return Err(invalid(format!("ball degeneracy needs d >= 3, got {d}")));
    }
    // (l + d - 3)! / ((d - 3)! l!) = C(l + d - 3, l)
    let mut c: u128 = 1;
    for i in 1..=l as u128 {
        c = c * (d as u128 - 3 + i) / i;
    }
    let num = (2 * l as u128 + d as u128 - 2) * c;
    let v = num / (d as u128 - 2);
    u64::try_from(v).map_err(|_| PrbmError::NumericOverflow(format!("n_{l} for d = {d}")))
}

/// `(1 - r^2) / (4 pi (1 - 2 r cos theta + r^2)^{3/2})`.
pub fn ball_poisson_kernel(r: f64, theta: f64) -> Result<f64> {
    check_radius(r)?;
    Ok((1.0 - r * r) / (4.0 * PI * (1.0 - 2.0 * r * theta.cos() + r * r).powf(1.5)))
}

/// Zonal series `sum_l (2l + 1) / (4 pi) r^l P_l(cos theta) / (1 + Lambda l)`.
pub fn ball_spread_density(r: f64, theta: f64, lambda: f64, cfg: &SeriesConfig) -> Result<f64> {
    check_radius(r)?;
    check_lambda(lambda)?;
    if r == 0.0 {
        return Ok(1.0 / (4.0 * PI));
    }
    let n = terms_needed(r, cfg, |l| 2.0 * l + 1.0)?;
    let x = theta.cos();
    let (mut p_prev, mut p) = (1.0, x);
    let mut sum = 1.0;
    let mut rl = r;
    for l in 1..=n {
        let lf = l as f64;
        sum += (2.0 * lf + 1.0) * rl * p / (1.0 + lambda * lf);
        let next = ((2.0 * lf + 1.0) * x * p - lf * p_prev) / (lf + 1.0);
        p_prev = p;
        p = next;
        rl *= r;
    }
    Ok(sum / (4.0 * PI))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SpectrumKind {
    DiskInterior,
    DiskExterior,
    BallInterior,
    BallExterior,
    Annulus(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub index: u64,
    pub mu: f64,
    pub degeneracy: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticSpectrum {
    pub kind: SpectrumKind,
    pub eigenvalues: Vec<Eigenvalue>,
}

impl AnalyticSpectrum {
    pub fn mu(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|e| e.mu).collect()
    }

    /// Eigenvalues repeated by multiplicity, ascending.
    pub fn expanded(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .eigenvalues
            .iter()
            .flat_map(|e| std::iter::repeat_n(e.mu, e.degeneracy as usize))
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }
}

/// Unit disk: `mu_alpha = |alpha|`, degeneracy 2 for `alpha != 0`.
pub fn disk_spectrum(exterior: bool, alpha_max: u64) -> AnalyticSpectrum {
    let kind = if exterior { SpectrumKind::DiskExterior } else { SpectrumKind::DiskInterior };
    let eigenvalues = (0..=alpha_max)
        .map(|a| Eigenvalue { index: a, mu: a as f64, degeneracy: if a == 0 { 1 } else { 2 } })
        .collect();
    AnalyticSpectrum { kind, eigenvalues }
}

/// Unit ball in dimension `d >= 3`.
pub fn ball_spectrum(side: BallSide, l_max: u64, d: u64) -> Result<AnalyticSpectrum> {
    let kind = match side {
        BallSide::Interior => SpectrumKind::BallInterior,
        BallSide::Exterior => SpectrumKind::BallExterior,
    };
    let eigenvalues = (0..=l_max)
        .map(|l| Ok(Eigenvalue { index: l, mu: ball_eigenvalue(l, side), degeneracy: ball_degeneracy(l, d)? }))
        .collect::<Result<_>>()?;
    Ok(AnalyticSpectrum { kind, eigenvalues })
}

/// Unit circle with a concentric source at radius `R`:
/// `mu_0 = 1 / ln R`, `mu_alpha = |alpha| (R^{2|alpha|} + 1) / (R^{2|alpha|} - 1)`.
pub fn annulus_spectrum(r_outer: f64, alpha_max: u64) -> Result<AnalyticSpectrum> {
    if !(r_outer > 1.0) || !r_outer.is_finite() {
        return Err(invalid(format!("annulus requires R > 1, got {r_outer}")));
    }
    let ln_r = r_outer.ln();
    let mut eigenvalues = vec![Eigenvalue { index: 0, mu: 1.0 / ln_r, degeneracy: 1 }];
    for a in 1..=alpha_max {
        let af = a as f64;
        // (R^{2a} + 1) / (R^{2a} - 1) = coth(a ln R)
        let mu = af / (af * ln_r).tanh();
        eigenvalues.push(Eigenvalue { index: a, mu, degeneracy: 2 });
    }
    Ok(AnalyticSpectrum { kind: SpectrumKind::Annulus(r_outer), eigenvalues })
}

/// Spectral weights of the uniform normalized flux `1 / 2pi` on the unit circle:
/// only the constant mode carries weight, `F_0 = 1 / 2pi`.
pub fn uniform_circle_weights(sp: &AnalyticSpectrum) -> Vec<f64> {
    sp.eigenvalues.iter().map(|e| if e.index == 0 { 1.0 / (2.0 * PI) } else { 0.0 }).collect()
}

/// Cell impedance of the annulus, `(Lambda + ln R) / (2 pi D)`.
pub fn annulus_cell_impedance(r_outer: f64, lambda: f64, diffusion: f64) -> f64 {
    (lambda + r_outer.ln()) / (2.0 * PI * diffusion)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Impedance {
    pub lambda: f64,
    /// Effective impedance `Z(Lambda)`.
    pub z: f64,
    pub z_cell0: Option<f64>,
}

impl Impedance {
    /// `Z_sp = (1/Z - 1/Z_cell(0))^{-1}`.
    pub fn z_sp(&self) -> Result<f64> {
        let zc = self.z_cell0.ok_or(PrbmError::MissingCellImpedance)?;
        Ok(spectroscopic_from_effective(self.z, zc))
    }
}

pub fn spectroscopic_from_effective(z: f64, z_cell0: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    1.0 / (1.0 / z - 1.0 / z_cell0)
}

fn check_weights(mu: &[f64], f: &[f64]) -> Result<()> {
    if mu.len() != f.len() {
        return Err(invalid("eigenvalues and weights differ in length"));
    }
    if mu.iter().any(|&m| !(m >= 0.0)) {
        return Err(invalid("eigenvalues must be >= 0"));
    }
    Ok(())
}

/// `Z(Lambda) = (Lambda / D) sum_alpha F_alpha / (1 + Lambda mu_alpha)`.
pub fn effective_impedance(mu: &[f64], f: &[f64], lambda: f64, diffusion: f64) -> Result<f64> {
    check_weights(mu, f)?;
    check_lambda(lambda)?;
    if !(diffusion > 0.0) {
        return Err(invalid("D must be positive"));
    }
    if lambda == 0.0 {
        return Ok(0.0);
    }
    Ok(lambda / diffusion * mu.iter().zip(f).map(|(m, w)| w / (1.0 + lambda * m)).sum::<f64>())
}

pub fn impedance_from_spectrum(
    mu: &[f64],
    f: &[f64],
    lambda: f64,
    diffusion: f64,
    z_cell0: Option<f64>,
) -> Result<Impedance> {
    Ok(Impedance { lambda, z: effective_impedance(mu, f, lambda, diffusion)?, z_cell0 })
}

/// `zeta(lambda) = sum_alpha F_alpha e^{-lambda mu_alpha}`.
pub fn zeta(mu: &[f64], f: &[f64], lambda: f64) -> Result<f64> {
    check_weights(mu, f)?;
    check_lambda(lambda)?;
    Ok(mu.iter().zip(f).map(|(m, w)| w * (-lambda * m).exp()).sum())
}

/// `Z(Lambda) = (1/D) int_0^inf e^{-l / Lambda} zeta(l) dl`, by quadrature.
pub fn impedance_from_zeta(mu: &[f64], f: &[f64], lambda: f64, diffusion: f64, cfg: &QuadratureConfig) -> Result<f64> {
    check_weights(mu, f)?;
    if !(lambda > 0.0) {
        return Err(invalid("Lambda must be positive"));
    }
    let v = integrate_exp_tail(|l| (-l / lambda).exp() * zeta(mu, f, l).unwrap_or(0.0), 0.0, lambda, &[], cfg)?;
    Ok(v / diffusion)
}
