use prbm::quadrature::{integrate, integrate_breaks, QuadratureConfig};
use prbm::spectral::*;
use std::f64::consts::{E, PI};

fn tight() -> QuadratureConfig {
    QuadratureConfig::with_rel_tol(1e-12)
}

#[test]
fn disk_spread_density_normalized() {
    let cfg = SeriesConfig::default();
    for &l in &[0.0, 0.1, 1.0, 10.0] {
        for &r in &[0.0, 0.5, 0.9] {
            let total = integrate(|th| disk_spread_density(r, th, l, &cfg).unwrap(), -PI, PI, &tight()).unwrap();
            assert!((total - 1.0).abs() < 1e-8, "L {l} r {r}: {total}");
        }
    }
}

#[test]
fn poisson_and_zonal_kernels_normalized() {
    let cfg = SeriesConfig::default();
    for &r in &[0.0, 0.4, 0.8] {
        let disk = integrate(|th| poisson_kernel_disk(r, th).unwrap(), -PI, PI, &tight()).unwrap();
        assert!((disk - 1.0).abs() < 1e-10);
        // sphere measure: 2 pi sin(theta) d theta
        let ball = integrate(|th| 2.0 * PI * th.sin() * ball_poisson_kernel(r, th).unwrap(), 0.0, PI, &tight()).unwrap();
        assert!((ball - 1.0).abs() < 1e-10, "{ball}");
        for &l in &[0.0, 0.3, 3.0] {
            let z = integrate(|th| 2.0 * PI * th.sin() * ball_spread_density(r, th, l, &cfg).unwrap(), 0.0, PI, &tight())
                .unwrap();
            assert!((z - 1.0).abs() < 1e-8, "r {r} L {l}: {z}");
        }
    }
}

#[test]
fn dirichlet_limit_on_grid() {
    let cfg = SeriesConfig::default();
    for i in 0..10 {
        let r = 0.095 * i as f64;
        for k in 0..24 {
            let th = 2.0 * PI * k as f64 / 24.0;
            let v = disk_spread_density(r, th, 1e-8, &cfg).unwrap();
            assert!((v - poisson_kernel_disk(r, th).unwrap()).abs() < 1e-6);
            let b = ball_spread_density(r, th, 1e-8, &cfg).unwrap();
            assert!((b - ball_poisson_kernel(r, th).unwrap()).abs() < 1e-6);
        }
    }
}

#[test]
fn ball_degeneracy_dual_route() {
    fn binom(n: u64, k: u64) -> u128 {
        if k > n {
            return 0;
        }
        (1..=k as u128).fold(1u128, |c, i| c * (n as u128 - k as u128 + i) / i)
    }
    for d in 3..9u64 {
        for l in 0..30u64 {
            let route = binom(l + d - 1, d - 1) - binom(l + d - 3, d - 1);
            assert_eq!(ball_degeneracy(l, d).unwrap() as u128, route, "l {l} d {d}");
        }
    }
    assert_eq!(ball_degeneracy(2, 3).unwrap(), 5);
    assert!(ball_degeneracy(1, 2).is_err());
}

/// Inner-boundary normal derivative of `u'' + u'/r - alpha^2 u / r^2 = 0`,
/// `u(1) = 1`, `u(R) = 0`, by second-order finite differences.
fn radial_fd(alpha: f64, r_outer: f64, n: usize) -> f64 {
    let h = (r_outer - 1.0) / n as f64;
    // unknowns u_1..u_{n-1}; Thomas algorithm
    let m = n - 1;
    let (mut a, mut b, mut c, mut d) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    for i in 0..m {
        let r = 1.0 + (i + 1) as f64 * h;
        a[i] = 1.0 / (h * h) - 1.0 / (2.0 * h * r);
        b[i] = -2.0 / (h * h) - alpha * alpha / (r * r);
        c[i] = 1.0 / (h * h) + 1.0 / (2.0 * h * r);
    }
    d[0] = -a[0];
    for i in 1..m {
        let w = a[i] / b[i - 1];
        b[i] -= w * c[i - 1];
        d[i] -= w * d[i - 1];
    }
    let mut u = vec![0.0; m];
    u[m - 1] = d[m - 1] / b[m - 1];
    for i in (0..m - 1).rev() {
        u[i] = (d[i] - c[i] * u[i + 1]) / b[i];
    }
    // -u'(1), one-sided second order
    -(-3.0 + 4.0 * u[0] - u[1]) / (2.0 * h)
}

#[test]
fn annulus_spectrum_matches_radial_solve() {
    for &r in &[E, 2.0, 1.5] {
        let sp = annulus_spectrum(r, 3).unwrap();
        for e in &sp.eigenvalues {
            let fd = radial_fd(e.index as f64, r, 20_000);
            assert!((e.mu / fd - 1.0).abs() < 1e-6, "R {r} alpha {}: {} vs {fd}", e.index, e.mu);
        }
    }
    assert!((annulus_spectrum(E, 0).unwrap().eigenvalues[0].mu - 1.0).abs() < 1e-15);
    let far = annulus_spectrum(3.0, 40).unwrap();
    assert!((far.eigenvalues[40].mu - 40.0).abs() < 1e-12);
    assert!(far.mu().iter().all(|&m| m > 0.0));
    assert!(annulus_spectrum(1.0, 3).is_err());
}

#[test]
fn annulus_spectroscopic_impedance_closed_form() {
    let r = 1.5;
    let sp = annulus_spectrum(r, 50).unwrap();
    let f = uniform_circle_weights(&sp);
    let z0 = annulus_cell_impedance(r, 0.0, 1.0);
    for &l in &[0.0, 0.01, 1.0, 100.0] {
        let imp = impedance_from_spectrum(&sp.mu(), &f, l, 1.0, Some(z0)).unwrap();
        let zsp = imp.z_sp().unwrap();
        assert!((zsp - l / (2.0 * PI)).abs() < 1e-12 * (1.0 + l));
        // identity route: Z_cell(Lambda) - Z_cell(0)
        let diff = annulus_cell_impedance(r, l, 1.0) - z0;
        assert!((zsp - diff).abs() < 1e-9 * (1.0 + diff));
    }
    let missing = impedance_from_spectrum(&sp.mu(), &f, 1.0, 1.0, None).unwrap();
    assert!(missing.z_sp().is_err());
}

#[test]
fn impedance_simple_cases() {
    let z = effective_impedance(&[1.0], &[1.0], 1.0, 1.0).unwrap();
    assert_eq!(z, 0.5);
    assert_eq!(effective_impedance(&[1.0, 2.0], &[0.3, 0.7], 0.0, 1.0).unwrap(), 0.0);
    assert_eq!(zeta(&[2.0], &[0.5], 1.0).unwrap(), 0.5 * (-2.0f64).exp());
    assert_eq!(zeta(&[2.0, 3.0], &[0.5, 0.25], 0.0).unwrap(), 0.75);
}

#[test]
fn laplace_identity_on_annulus_spectrum() {
    let sp = annulus_spectrum(2.0, 30).unwrap();
    let f: Vec<f64> = (0..sp.eigenvalues.len()).map(|a| 0.5f64.powi(a as i32)).collect();
    for &l in &[0.05, 0.5, 5.0] {
        let direct = effective_impedance(&sp.mu(), &f, l, 1.0).unwrap();
        let laplace = impedance_from_zeta(&sp.mu(), &f, l, 1.0, &tight()).unwrap();
        assert!((direct / laplace - 1.0).abs() < 1e-6, "{l}: {direct} {laplace}");
    }
}

#[test]
fn spreading_kernel_is_the_resolvent() {
    // int T(theta, t') cos(k t') dt' = cos(k theta) / (1 + Lambda k)
    let cfg = SeriesConfig::default();
    let qc = QuadratureConfig::with_rel_tol(1e-10);
    for &(l, k, th) in &[(0.5, 1.0, 0.3), (0.1, 3.0, 1.0), (2.0, 2.0, -0.7)] {
        let v = integrate_breaks(
            |t| {
                // the log singularity leaves O(gap ln gap / Lambda) out of this window
                if (t - th).abs() < 1e-11 {
                    0.0
                } else {
                    disk_spreading_kernel(th, t, l, &cfg).unwrap() * (k * t).cos()
                }
            },
            &[th - PI, th, th + PI],
            &qc,
        )
        .unwrap();
        let expect = (k * th).cos() / (1.0 + l * k);
        assert!((v - expect).abs() < 1e-6, "{v} {expect}");
    }
}

#[test]
fn spectra_listing() {
    let d = disk_spectrum(false, 3);
    assert_eq!(d.expanded(), vec![0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
    let b = ball_spectrum(BallSide::Exterior, 2, 3).unwrap();
    assert_eq!(b.expanded(), vec![1.0, 2.0, 2.0, 2.0, 3.0, 3.0, 3.0, 3.0, 3.0]);
}
