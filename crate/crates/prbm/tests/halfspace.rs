use prbm::halfspace::*;
use prbm::quadrature::{integrate, integrate_breaks, integrate_to_infinity, QuadratureConfig};
use std::f64::consts::PI;

fn cfg() -> QuadratureConfig {
    QuadratureConfig::default()
}

#[test]
fn absorption_constants_match_published_values() {
    let p2 = absorption_probability_disk(0.5, 1.0, 2, &cfg()).unwrap();
    assert!((p2 - 0.4521).abs() < 5e-4, "{p2}");
    let p3 = absorption_probability_disk(1.0, 1.0, 3, &cfg()).unwrap();
    assert!((p3 - 0.4611).abs() < 5e-4, "{p3}");
}

#[test]
fn absorption_probability_closed_forms() {
    // d = 2: (2/pi) int e^{-t} atan(rho/t) dt;  d = 3: 1 - int t e^{-t} / sqrt(rho^2 + t^2) dt
    for &rho in &[0.05, 0.5, 1.0, 4.0] {
        let d2 = 2.0 / PI
            * integrate_breaks(|t| (-t).exp() * (rho / t).atan(), &[0.0, rho, 1.0 + rho, 60.0], &cfg()).unwrap();
        let d3 = 1.0 - integrate_breaks(|t| t * (-t).exp() / (rho * rho + t * t).sqrt(), &[0.0, rho, 60.0], &cfg()).unwrap();
        let v2 = absorption_probability_disk(rho, 1.0, 2, &cfg()).unwrap();
        let v3 = absorption_probability_disk(rho, 1.0, 3, &cfg()).unwrap();
        assert!((v2 - d2).abs() < 1e-9, "rho {rho}: {v2} {d2}");
        assert!((v3 - d3).abs() < 1e-9, "rho {rho}: {v3} {d3}");
    }
}

#[test]
fn absorption_probability_depends_on_ratio_only() {
    let a = absorption_probability_disk(0.7, 1.3, 3, &cfg()).unwrap();
    let b = absorption_probability_disk(0.7 * 2.5, 1.3 * 2.5, 3, &cfg()).unwrap();
    assert!((a - b).abs() < 1e-12);
    assert_eq!(absorption_probability_disk(0.0, 1.0, 2, &cfg()).unwrap(), 0.0);
    let big = absorption_probability_disk(1e6, 1.0, 2, &cfg()).unwrap();
    assert!(big > 1.0 - 1e-5 && big <= 1.0);
}

#[test]
fn stopping_time_cdf_routes_agree() {
    for &t in &[1e-4, 0.01, 0.3, 1.0, 7.0, 300.0] {
        for &l in &[0.5, 1.0, 3.0] {
            let closed = stopping_time_cdf(t, l).unwrap();
            let quad = stopping_time_cdf_quadrature(t, l, &cfg()).unwrap();
            assert!((closed - quad).abs() < 1e-8, "t {t} L {l}: {closed} {quad}");
        }
    }
}

#[test]
fn stopping_time_density_routes_agree() {
    for &t in &[1e-3, 0.2, 2.0, 50.0] {
        let a = stopping_time_density(t, 1.0).unwrap();
        let b = stopping_time_density_quadrature(t, 1.0, &cfg()).unwrap();
        assert!((a / b - 1.0).abs() < 1e-8, "{t}: {a} {b}");
    }
}

#[test]
fn stopping_time_density_normalized_and_scaling() {
    let total = integrate_to_infinity(|t| stopping_time_density(t, 1.0).unwrap_or(0.0), 0.0, &cfg()).unwrap();
    assert!((total - 1.0).abs() < 1e-6, "{total}");
    // rho_Lambda(t) = rho_1(t / Lambda^2) / Lambda^2
    for &t in &[0.01, 1.0, 10.0] {
        let l = 2.5;
        let lhs = stopping_time_density(t, l).unwrap();
        let rhs = stopping_time_density(t / (l * l), 1.0).unwrap() / (l * l);
        assert!((lhs / rhs - 1.0).abs() < 1e-12);
    }
}

#[test]
fn spread_kernel_normalized() {
    let c = cfg();
    let d2 = 2.0 * integrate_to_infinity(|s| spread_kernel_t(&[s], 1.0, 2, &c).unwrap(), 0.0, &c).unwrap();
    assert!((d2 - 1.0).abs() < 1e-6, "{d2}");
    let d3 = 2.0 * PI * integrate_to_infinity(|s| s * spread_kernel_t(&[s, 0.0], 1.0, 3, &c).unwrap(), 0.0, &c).unwrap();
    assert!((d3 - 1.0).abs() < 1e-6, "{d3}");
}

#[test]
fn spread_kernel_is_eta_times_harmonic_density() {
    for &s in &[0.1, 1.0, 5.0] {
        let l = 0.8;
        let t = spread_kernel_t(&[s], l, 2, &cfg()).unwrap();
        let w = harmonic_density_halfspace(&[0.0, l], &[s]).unwrap();
        let e = eta(s / l, 2, &cfg()).unwrap();
        assert!((t / (e * w) - 1.0).abs() < 1e-9);
    }
}

#[test]
fn eta_large_argument() {
    // eta_d(z) = 1 - (5d/2) x + c4 x^2 + O(x^3), x = z^{-2};
    // c4 from expanding (1+x)^{d/2} and (1 + t^2 x)^{-d/2} under the t e^{-t} moments
    for d in [2, 3] {
        let h = d as f64 / 2.0;
        let c4 = h * (h + 1.0) / 2.0 * 120.0 + h * (h - 1.0) / 2.0 - h * 6.0 * h;
        let z: f64 = 200.0;
        let x = 1.0 / (z * z);
        let v = eta(z, d, &cfg()).unwrap();
        assert!((v - (1.0 - 2.5 * d as f64 * x + c4 * x * x)).abs() < 1e-9, "{v}");
    }
}

#[test]
fn spread_density_halfspace_normalized() {
    let c = cfg();
    for &(x, l) in &[([0.0, 1.0], 1.0), ([0.3, 0.2], 1.0), ([0.0, 1.0], 0.1), ([-1.0, 0.5], 5.0)] {
        // s = x1 + x2 tan(theta)
        let total = integrate(
            |th: f64| {
                let sec = 1.0 / th.cos();
                spread_density_halfspace(x, x[0] + x[1] * th.tan(), l, &c).unwrap() * x[1] * sec * sec
            },
            -PI / 2.0 + 1e-12,
            PI / 2.0 - 1e-12,
            &QuadratureConfig::with_rel_tol(1e-8),
        )
        .unwrap();
        assert!((total - 1.0).abs() < 1e-6, "{x:?} {l}: {total}");
    }
}

#[test]
fn spread_density_matches_mixture_oracle() {
    // omega = (1/pi) int e^{-v} (x2 + L v) / ((x2 + L v)^2 + D^2) dv
    let c = cfg();
    for &(x2, l, delta) in &[(1.0, 1.0, 0.0), (0.5, 2.0, 3.0), (0.2, 0.1, 40.0), (1.0, 0.5, 300.0)] {
        let oracle = integrate_breaks(
            |v: f64| {
                let h = x2 + l * v;
                (-v).exp() * h / (h * h + delta * delta) / PI
            },
            &[0.0, 1.0, 5.0, 60.0],
            &c,
        )
        .unwrap();
        let v = spread_density_halfspace([0.0, x2], delta, l, &c).unwrap();
        assert!((v / oracle - 1.0).abs() < 1e-7, "{x2} {l} {delta}: {v} {oracle}");
    }
}

#[test]
fn spread_density_dirichlet_limit() {
    let v = spread_density_halfspace([0.0, 1.0], 0.7, 1e-9, &cfg()).unwrap();
    let w = harmonic_density_halfspace(&[0.0, 1.0], &[0.7]).unwrap();
    assert!((v / w - 1.0).abs() < 1e-6);
}

#[test]
fn transport_params_validation() {
    assert!(TransportParams::new(1.0, 1.0, 1.0).is_ok());
    assert!(TransportParams::new(-1.0, 1.0, 1.0).is_err());
    assert!(TransportParams::new(1.0, 0.0, 1.0).is_err());
}
