//! Land Surveyor Approximation: the mixed condition on an irregular curve is
//! replaced by a Dirichlet condition on the curve coarse-grained into chords of
//! arclength `Lambda`.

use crate::dtn::robin_flux;
use crate::error::{invalid, PrbmError, Result};
use crate::geometry::{rasterize, LatticeDomain, Polyline};
use serde::{Deserialize, Serialize};

/// Where the chord partition starts.
pub const ANCHORING_NOTE: &str = "chords anchored at the stored curve origin; \
     random anchoring at the first-hit position is not modeled";

/// Chords between the points at arclength `0, Lambda, 2 Lambda, ...` and the curve end.
/// Chord endpoints lie on the curve, so the coarse perimeter never exceeds the original.
pub fn coarse_grain(curve: &Polyline, lambda: f64) -> Result<Polyline> {
    let total = curve.length();
    if !(lambda > 0.0) {
        return Err(invalid(format!("Lambda must be > 0, got {lambda}")));
    }
    if total <= lambda {
        return Err(PrbmError::PerimeterTooSmall { perimeter: total, lambda });
    }
    let cum = curve.cumulative();
    let n_full = (total / lambda).floor() as usize;
    let mut pts: Vec<[f64; 2]> = (0..=n_full)
        .map(|i| i as f64 * lambda)
        .filter(|&s| s < total * (1.0 - 1e-12))
        .map(|s| curve.point_at_with(&cum, s))
        .collect();
    pts.push(*curve.points.last().expect("nonempty curve"));
    Polyline::new(pts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LsaCell {
    /// Square source `|x|, |y| = half_width` around a closed working curve.
    Box { half_width: f64 },
    /// Flat working line with a parallel source at distance `height`, periodic
    /// along the line. Translation invariance reduces it to one lattice column.
    PeriodicStrip { height: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseGrainReport {
    /// Robin total flux on the original curve (per unit `D C0`).
    pub original_flux: f64,
    /// Dirichlet total flux on the coarse-grained curve.
    pub coarse_flux: f64,
    pub relative_error: f64,
    pub n_chords: usize,
    pub lambda: f64,
    pub mesh: f64,
    pub original_perimeter: f64,
    pub coarse_perimeter: f64,
    pub anchoring: String,
}

impl CoarseGrainReport {
    pub fn new(original_flux: f64, coarse_flux: f64, coarse: &Polyline, curve: &Polyline, lambda: f64, mesh: f64) -> Self {
        Self {
            original_flux,
            coarse_flux,
            relative_error: (coarse_flux - original_flux).abs() / original_flux,
            n_chords: coarse.points.len() - 1,
            lambda,
            mesh,
            original_perimeter: curve.length(),
            coarse_perimeter: coarse.length(),
            anchoring: ANCHORING_NOTE.to_string(),
        }
    }
}

/// Robin flux of `curve` at `Lambda` against the Dirichlet flux of its coarse graining.
pub fn compare_flux(curve: &Polyline, cell: LsaCell, lambda: f64, a: f64) -> Result<CoarseGrainReport> {
    if !(a > 0.0) || a > lambda / 10.0 * (1.0 + 1e-12) {
        return Err(invalid(format!("mesh {a} must satisfy 0 < a <= Lambda/10 = {}", lambda / 10.0)));
    }
    let coarse = coarse_grain(curve, lambda)?;
    let (original, coarse_flux) = match cell {
        LsaCell::Box { half_width } => {
            let source = Polyline::rectangle([-half_width, -half_width], [half_width, half_width]);
            let dom = rasterize(curve, Some(&source), a)?;
            let coarse_dom = rasterize(&coarse, Some(&source), a)?;
            (robin_flux(&dom, lambda, 1.0, 1.0)?, robin_flux(&coarse_dom, 0.0, 1.0, 1.0)?)
        }
        LsaCell::PeriodicStrip { height } => {
            let rows = (height / a).round() as i64 - 1;
            if rows < 1 || ((rows + 1) as f64 * a - height).abs() > 1e-9 * height {
                return Err(PrbmError::MeshTooCoarse(format!("height {height} is not a multiple of the mesh {a}")));
            }
            let dom = LatticeDomain::periodic_strip(1, rows as usize, a)?;
            let columns = curve.length() / a;
            (columns * robin_flux(&dom, lambda, 1.0, 1.0)?, columns * robin_flux(&dom, 0.0, 1.0, 1.0)?)
        }
    };
    Ok(CoarseGrainReport::new(original, coarse_flux, &coarse, curve, lambda, a))
}

/// Quadratic Koch island of generation `gen` on the counterclockwise unit square
/// centered at the origin. Each segment `PQ` becomes eight segments of length `|PQ|/4`.
pub fn koch_island(gen: usize) -> Polyline {
    let mut pts: Vec<[f64; 2]> = vec![[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5], [-0.5, -0.5]];
    for _ in 0..gen {
        let mut out = vec![pts[0]];
        for w in pts.windows(2) {
            let (p, q) = (w[0], w[1]);
            let u = [(q[0] - p[0]) / 4.0, (q[1] - p[1]) / 4.0];
            let v = [-u[1], u[0]];
            let at = |i: f64, j: f64| [p[0] + i * u[0] + j * v[0], p[1] + i * u[1] + j * v[1]];
            out.extend([at(1., 0.), at(1., 1.), at(2., 1.), at(2., 0.), at(2., -1.), at(3., -1.), at(3., 0.), q]);
        }
        pts = out;
    }
    Polyline::new(pts).expect("Koch island is a valid polyline")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_segment_is_fixed() {
        let line = Polyline::new(vec![[0.0, 0.0], [10.0, 0.0]]).unwrap();
        let c = coarse_grain(&line, 1.0).unwrap();
        assert_eq!(c.points.len(), 11);
        for (i, p) in c.points.iter().enumerate() {
            assert!((p[0] - i as f64).abs() < 1e-12 && p[1] == 0.0);
        }
    }

    #[test]
    fn square_gives_eight_half_sides() {
        let sq = Polyline::rectangle([0.0, 0.0], [1.0, 1.0]);
        let c = coarse_grain(&sq, 0.5).unwrap();
        assert_eq!(c.points.len() - 1, 8);
        for s in c.segments() {
            assert!(((s.1[0] - s.0[0]).hypot(s.1[1] - s.0[1]) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn perimeter_too_small() {
        let sq = Polyline::rectangle([0.0, 0.0], [1.0, 1.0]);
        assert!(matches!(coarse_grain(&sq, 4.0), Err(PrbmError::PerimeterTooSmall { .. })));
    }

    #[test]
    fn koch_perimeter_and_segments() {
        for g in 0..4 {
            let k = koch_island(g);
            assert_eq!(k.points.len() - 1, 4 * 8usize.pow(g as u32));
            assert!((k.length() - 4.0 * 2f64.powi(g as i32)).abs() < 1e-9);
            assert!(k.is_closed());
        }
    }

    #[test]
    fn mesh_must_resolve_lambda() {
        let k = koch_island(1);
        assert!(compare_flux(&k, LsaCell::Box { half_width: 2.0 }, 0.25, 0.05).is_err());
    }
}
