//! Bundled lattice domains used by the operator checks and the CLI.

use crate::error::Result;
use crate::geometry::{rasterize, LatticeDomain, Polyline, Tag};
use crate::lsa::koch_island;

/// Polygon resolution for circles: segments much shorter than the mesh.
fn circle_segments(radius: f64, a: f64) -> usize {
    ((16.0 * std::f64::consts::PI * radius / a).ceil() as usize).max(256)
}

/// 16 x 16 unit box, `a = 1/16`, source on the top face, working elsewhere.
pub fn box16() -> Result<LatticeDomain> {
    LatticeDomain::boxed(&[16, 16], 1.0 / 16.0, &[(Tag::Working, Tag::Working), (Tag::Working, Tag::Source)])
}

/// Closed 8 x 8 box without a source.
pub fn closed_box() -> Result<LatticeDomain> {
    LatticeDomain::boxed(&[8, 8], 1.0 / 8.0, &[(Tag::Working, Tag::Working), (Tag::Working, Tag::Working)])
}

/// 5 x 5 x 5 cube with the top face as source.
pub fn cube() -> Result<LatticeDomain> {
    LatticeDomain::boxed(
        &[5, 5, 5],
        0.2,
        &[(Tag::Working, Tag::Working), (Tag::Working, Tag::Working), (Tag::Working, Tag::Source)],
    )
}

/// Rasterized sourceless unit disk.
pub fn unit_disk(a: f64) -> Result<LatticeDomain> {
    rasterize(&Polyline::circle([0.0, 0.0], 1.0, circle_segments(1.0, a)), None, a)
}

/// Rasterized annulus: working unit circle, source circle of radius `r`.
pub fn annulus(r: f64, a: f64) -> Result<LatticeDomain> {
    let inner = Polyline::circle([0.0, 0.0], 1.0, circle_segments(1.0, a));
    let outer = Polyline::circle([0.0, 0.0], r, circle_segments(r, a));
    rasterize(&inner, Some(&outer), a)
}

/// Generation-1 Koch island inside a square source of half-width 1.
pub fn koch_cell(a: f64) -> Result<LatticeDomain> {
    rasterize(&koch_island(1), Some(&Polyline::rectangle([-1.0, -1.0], [1.0, 1.0])), a)
}

/// Periodic strip, 8 columns by 8 rows.
pub fn strip() -> Result<LatticeDomain> {
    LatticeDomain::periodic_strip(8, 8, 1.0 / 9.0)
}

/// Every bundled fixture with its name.
pub fn bundled() -> Result<Vec<(&'static str, LatticeDomain)>> {
    Ok(vec![
        ("box16", box16()?),
        ("closed-box", closed_box()?),
        ("cube", cube()?),
        ("disk", unit_disk(1.0 / 16.0)?),
        ("annulus", annulus(2.0, 1.0 / 16.0)?),
        ("koch", koch_cell(1.0 / 32.0)?),
        ("strip", strip()?),
    ])
}

pub fn by_name(name: &str) -> Result<LatticeDomain> {
    bundled()?
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, d)| d)
        .ok_or_else(|| crate::error::invalid(format!("unknown fixture {name}")))
}
