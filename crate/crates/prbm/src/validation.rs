//! Fast cross-check suite behind `prbm validate`.

use crate::dtn::{build_m, build_q, dirichlet_density, impedance_curve, spectrum};
use crate::error::Result;
use crate::fixtures;
use crate::halfspace::absorption_probability_disk;
use crate::quadrature::QuadratureConfig;
use crate::spectral::{disk_spread_density, poisson_kernel_disk, SeriesConfig};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.to_string(), passed, detail }
    }
}

fn absorption_constant(name: &str, ratio: f64, d: usize, expect: f64) -> Result<CheckOutcome> {
    let v = absorption_probability_disk(ratio, 1.0, d, &QuadratureConfig::default())?;
    Ok(CheckOutcome::new(name, (v - expect).abs() <= 5e-4, format!("{v:.6} vs {expect} +- 5e-4")))
}

/// Q symmetry and stochasticity on every bundled fixture.
fn q_checks() -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for (name, dom) in fixtures::bundled()? {
        let q = build_q(&dom)?;
        let asym = q.max_asymmetry();
        let sums = q.row_sums();
        let max_sum = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min_sum = sums.iter().copied().fold(f64::INFINITY, f64::min);
        let stochastic = if q.has_source {
            max_sum < 1.0
        } else {
            (max_sum - 1.0).abs() < 1e-10 && (min_sum - 1.0).abs() < 1e-10
        };
        let ok = asym < 1e-12 && q.min_entry() >= 0.0 && stochastic;
        out.push(CheckOutcome::new(
            &format!("q-{name}"),
            ok,
            format!("asymmetry {asym:.2e}, row sums in [{min_sum:.12}, {max_sum:.12}], source {}", q.has_source),
        ));
    }
    Ok(out)
}

/// Rasterized annulus against `Z_sp = Lambda / (2 pi D)`, both impedance routes.
fn annulus_impedance() -> Result<CheckOutcome> {
    let dom = fixtures::annulus(1.5, 1.0 / 64.0)?;
    let op = build_m(&build_q(&dom)?);
    let g = dirichlet_density(&op)?;
    let sp = spectrum(&op, Some(&g))?;
    let grid = [0.01, 0.1, 1.0, 10.0, 100.0];
    let rows = impedance_curve(&sp, &op, &grid, 1.0)?;
    let worst_ratio = rows.iter().map(|r| (r.z_sp * 2.0 * PI / r.lambda - 1.0).abs()).fold(0.0, f64::max);
    let worst_route = rows.iter().map(|r| r.route_mismatch()).fold(0.0, f64::max);
    Ok(CheckOutcome::new(
        "annulus-impedance",
        worst_ratio < 0.05 && worst_route < 1e-8,
        format!("max |Z_sp 2 pi D / Lambda - 1| = {worst_ratio:.4} (< 0.05 at a = 1/64), route mismatch {worst_route:.2e}"),
    ))
}

fn dirichlet_limit() -> Result<CheckOutcome> {
    let cfg = SeriesConfig::default();
    let mut worst: f64 = 0.0;
    for &r in &[0.0, 0.3, 0.6, 0.9] {
        for k in 0..16 {
            let th = 2.0 * PI * k as f64 / 16.0;
            let v = disk_spread_density(r, th, 1e-8, &cfg)?;
            worst = worst.max((v - poisson_kernel_disk(r, th)?).abs());
        }
    }
    Ok(CheckOutcome::new("disk-dirichlet-limit", worst < 1e-6, format!("max deviation {worst:.2e}")))
}

/// Runs every check; a check that errors is reported as failed.
pub fn run_all() -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    let mut push = |name: &str, r: Result<Vec<CheckOutcome>>| match r {
        Ok(v) => out.extend(v),
        Err(e) => out.push(CheckOutcome::new(name, false, format!("error: {e}"))),
    };
    push("absorption-d2", absorption_constant("absorption-d2", 0.5, 2, 0.4521).map(|c| vec![c]));
    push("absorption-d3", absorption_constant("absorption-d3", 1.0, 3, 0.4611).map(|c| vec![c]));
    push("q-fixtures", q_checks());
    push("annulus-impedance", annulus_impedance().map(|c| vec![c]));
    push("disk-dirichlet-limit", dirichlet_limit().map(|c| vec![c]));
    out
}
