//! Canonical domains, polylines and hypercubic lattice domains.
//!
//! A lattice domain is a connected set of bulk sites of mesh `a`. Every bond
//! from a bulk site to a non-bulk site is a boundary link; the non-bulk end is
//! a boundary site tagged `Working` or `Source`.

use crate::error::{invalid, PrbmError, Result};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CanonicalKind {
    HalfSpace,
    DiskInterior,
    DiskExterior,
    BallInterior,
    BallExterior,
    Annulus,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainParams {
    pub dimension: Option<usize>,
    pub outer_radius: Option<f64>,
}

#[derive(Debug, Clone)]
pub enum DomainKind {
    HalfSpace(usize),
    DiskInterior,
    DiskExterior,
    BallInterior,
    BallExterior,
    /// Working interface is the unit circle, source the circle of radius `R > 1`.
    Annulus(f64),
    Lattice(Arc<LatticeDomain>),
}

#[derive(Debug, Clone)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub dimension: usize,
}

pub fn make_canonical(kind: CanonicalKind, params: &DomainParams) -> Result<DomainSpec> {
    let fixed = |want: usize| -> Result<usize> {
        match params.dimension {
            None => Ok(want),
            Some(d) if d == want => Ok(d),
            Some(d) => Err(invalid(format!("{kind:?} requires dimension {want}, got {d}"))),
        }
    };
    let domain = match kind {
        CanonicalKind::HalfSpace => {
            let d = params.dimension.unwrap_or(2);
            if d < 2 {
                return Err(invalid(format!("dimension must be >= 2, got {d}")));
            }
            DomainSpec { kind: DomainKind::HalfSpace(d), dimension: d }
        }
        CanonicalKind::DiskInterior => DomainSpec { kind: DomainKind::DiskInterior, dimension: fixed(2)? },
        CanonicalKind::DiskExterior => DomainSpec { kind: DomainKind::DiskExterior, dimension: fixed(2)? },
        CanonicalKind::BallInterior | CanonicalKind::BallExterior => {
            let d = params.dimension.unwrap_or(3);
            if d < 3 {
                return Err(invalid(format!("ball requires dimension >= 3, got {d}")));
            }
            let k = if kind == CanonicalKind::BallInterior { DomainKind::BallInterior } else { DomainKind::BallExterior };
            DomainSpec { kind: k, dimension: d }
        }
        CanonicalKind::Annulus => {
            let r = params.outer_radius.ok_or_else(|| invalid("annulus needs an outer radius"))?;
            if !(r > 1.0) || !r.is_finite() {
                return Err(invalid(format!("annulus requires R > 1, got {r}")));
            }
            DomainSpec { kind: DomainKind::Annulus(r), dimension: fixed(2)? }
        }
    };
    Ok(domain)
}

impl DomainSpec {
    pub fn half_space(d: usize) -> Result<Self> {
        make_canonical(CanonicalKind::HalfSpace, &DomainParams { dimension: Some(d), outer_radius: None })
    }

    pub fn annulus(r: f64) -> Result<Self> {
        make_canonical(CanonicalKind::Annulus, &DomainParams { dimension: None, outer_radius: Some(r) })
    }

    pub fn lattice(dom: LatticeDomain) -> Self {
        let d = dom.dim;
        DomainSpec { kind: DomainKind::Lattice(Arc::new(dom)), dimension: d }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub position: Vec<f64>,
    pub arclength: f64,
    pub inward_normal: Vec<f64>,
}

impl BoundaryPoint {
    /// Normalizes `normal`; rejects a zero normal or negative arclength.
    pub fn new(position: Vec<f64>, arclength: f64, normal: Vec<f64>) -> Result<Self> {
        let n = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n > 0.0) || !n.is_finite() || normal.len() != position.len() {
            return Err(invalid("inward normal must be a finite nonzero vector of matching dimension"));
        }
        if !(arclength >= 0.0) {
            return Err(invalid("arclength must be >= 0"));
        }
        Ok(Self { position, arclength, inward_normal: normal.iter().map(|v| v / n).collect() })
    }
}

/// Planar polyline; closed when the last point repeats the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polyline {
    pub points: Vec<[f64; 2]>,
}

impl Polyline {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.len() < 2 {
            return Err(invalid("a polyline needs at least two points"));
        }
        if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(invalid("polyline coordinates must be finite"));
        }
        Ok(Self { points })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let pts: Vec<[f64; 2]> = serde_json::from_str(s)?;
        Self::new(pts)
    }

    /// Counterclockwise regular `n`-gon inscribed in the circle.
    pub fn circle(center: [f64; 2], radius: f64, n: usize) -> Self {
        let mut pts: Vec<[f64; 2]> = (0..n)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
            })
            .collect();
        pts.push(pts[0]);
        Self { points: pts }
    }

    /// Counterclockwise axis-aligned rectangle.
    pub fn rectangle(lo: [f64; 2], hi: [f64; 2]) -> Self {
        Self { points: vec![lo, [hi[0], lo[1]], hi, [lo[0], hi[1]], lo] }
    }

    pub fn is_closed(&self) -> bool {
        let (a, b) = (self.points[0], self.points[self.points.len() - 1]);
        self.points.len() >= 4 && (a[0] - b[0]).abs() <= 1e-12 && (a[1] - b[1]).abs() <= 1e-12
    }

    pub fn segments(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        self.points.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(p, q)| (q[0] - p[0]).hypot(q[1] - p[1])).sum()
    }

    /// Cumulative arclength at every vertex.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.points.len());
        let mut s = 0.0;
        out.push(0.0);
        for (p, q) in self.segments() {
            s += (q[0] - p[0]).hypot(q[1] - p[1]);
            out.push(s);
        }
        out
    }

    /// Point at arclength `s`, clamped to the curve.
    pub fn point_at(&self, s: f64) -> [f64; 2] {
        let cum = self.cumulative();
        self.point_at_with(&cum, s)
    }

    pub(crate) fn point_at_with(&self, cum: &[f64], s: f64) -> [f64; 2] {
        let total = cum[cum.len() - 1];
        let s = s.clamp(0.0, total);
        let k = match cum.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
            Ok(k) => return self.points[k],
            Err(k) => k - 1,
        };
        let (p, q) = (self.points[k], self.points[k + 1]);
        let t = (s - cum[k]) / (cum[k + 1] - cum[k]);
        [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
    }

    /// Boundary point at arclength `s`; the inward side is the left of the direction of travel
    /// when `interior_left` is set.
    pub fn boundary_point(&self, s: f64, interior_left: bool) -> Result<BoundaryPoint> {
        let cum = self.cumulative();
        let total = cum[cum.len() - 1];
        let sc = s.clamp(0.0, total);
        let k = cum.partition_point(|&c| c <= sc).clamp(1, cum.len() - 1) - 1;
        let (p, q) = (self.points[k], self.points[k + 1]);
        let t = [q[0] - p[0], q[1] - p[1]];
        let n = if interior_left { vec![-t[1], t[0]] } else { vec![t[1], -t[0]] };
        let x = self.point_at_with(&cum, sc);
        BoundaryPoint::new(x.to_vec(), sc, n)
    }

    /// Distance from `x` to the curve and the index of the nearest segment.
    pub fn distance(&self, x: [f64; 2]) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for (k, (p, q)) in self.segments().enumerate() {
            let d = seg_distance(x, p, q);
            if d < best.0 {
                best = (d, k);
            }
        }
        best
    }

    /// Even-odd containment; meaningful for closed curves only.
    pub fn contains(&self, x: [f64; 2]) -> bool {
        let mut inside = false;
        for (p, q) in self.segments() {
            if (p[1] <= x[1]) != (q[1] <= x[1]) {
                let xc = p[0] + (x[1] - p[1]) * (q[0] - p[0]) / (q[1] - p[1]);
                if xc < x[0] {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Unit normal of segment `k` (left of the direction of travel).
    pub fn segment_normal(&self, k: usize) -> [f64; 2] {
        let (p, q) = (self.points[k], self.points[k + 1]);
        let (tx, ty) = (q[0] - p[0], q[1] - p[1]);
        let n = tx.hypot(ty);
        [-ty / n, tx / n]
    }

    fn bbox(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.points {
            for i in 0..2 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        (lo, hi)
    }
}

pub(crate) fn seg_distance(x: [f64; 2], p: [f64; 2], q: [f64; 2]) -> f64 {
    let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
    let l2 = dx * dx + dy * dy;
    let t = if l2 > 0.0 { (((x[0] - p[0]) * dx + (x[1] - p[1]) * dy) / l2).clamp(0.0, 1.0) } else { 0.0 };
    (x[0] - p[0] - t * dx).hypot(x[1] - p[1] - t * dy)
}

/// Symmetric Hausdorff distance between two finite point sets.
pub fn hausdorff(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let one = |u: &[[f64; 2]], v: &[[f64; 2]]| {
        u.iter()
            .map(|p| v.iter().map(|q| (p[0] - q[0]).hypot(p[1] - q[1])).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    one(a, b).max(one(b, a))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tag {
    Working,
    Source,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Neighbor {
    Bulk(usize),
    Link(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySite {
    pub index: [i64; 3],
    pub tag: Tag,
    /// Designated inward neighbor (bulk index).
    pub inward: usize,
}

/// Bond from bulk site `inward` to boundary site `site` along direction `dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLink {
    pub site: usize,
    pub inward: usize,
    pub dir: u8,
    /// Surface element carried by the link.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeDomain {
    pub mesh: f64,
    pub dim: usize,
    pub bulk: Vec<[i64; 3]>,
    /// `2 dim` entries per bulk site in direction order `+x, -x, +y, -y, +z, -z`;
    /// `v >= 0` is a bulk index, `v < 0` is link `-v - 1`.
    pub neighbors: Vec<i64>,
    pub boundary_sites: Vec<BoundarySite>,
    pub links: Vec<BoundaryLink>,
    /// Period in sites along each axis (0 = not periodic).
    pub period: [i64; 3],
}

pub fn unit_step(dir: usize) -> [i64; 3] {
    let mut e = [0i64; 3];
    e[dir / 2] = if dir.is_multiple_of(2) { 1 } else { -1 };
    e
}

impl LatticeDomain {
    pub fn degree(&self) -> usize {
        2 * self.dim
    }

    pub fn n_bulk(&self) -> usize {
        self.bulk.len()
    }

    pub fn neighbor(&self, site: usize, dir: usize) -> Neighbor {
        let v = self.neighbors[site * self.degree() + dir];
        if v >= 0 {
            Neighbor::Bulk(v as usize)
        } else {
            Neighbor::Link((-v - 1) as usize)
        }
    }

    pub fn position(&self, index: [i64; 3]) -> [f64; 3] {
        [index[0] as f64 * self.mesh, index[1] as f64 * self.mesh, index[2] as f64 * self.mesh]
    }

    pub fn link_tag(&self, k: usize) -> Tag {
        self.boundary_sites[self.links[k].site].tag
    }

    pub fn links_tagged(&self, tag: Tag) -> Vec<usize> {
        (0..self.links.len()).filter(|&k| self.link_tag(k) == tag).collect()
    }

    pub fn working_links(&self) -> Vec<usize> {
        self.links_tagged(Tag::Working)
    }

    pub fn source_links(&self) -> Vec<usize> {
        self.links_tagged(Tag::Source)
    }

    pub fn has_source(&self) -> bool {
        self.boundary_sites.iter().any(|s| s.tag == Tag::Source)
    }

    /// Midpoint of link `k`.
    pub fn link_midpoint(&self, k: usize) -> [f64; 3] {
        let l = &self.links[k];
        let p = self.position(self.bulk[l.inward]);
        let e = unit_step(l.dir as usize);
        let h = 0.5 * self.mesh;
        [p[0] + h * e[0] as f64, p[1] + h * e[1] as f64, p[2] + h * e[2] as f64]
    }

    /// Reflection probability of link `k`: `1 / (1 + w_k / (a^{d-2} Lambda))`.
    /// Equals `1 / (1 + a / Lambda)` whenever `w_k = a^{d-1}`.
    pub fn link_epsilon(&self, k: usize, lambda: f64) -> f64 {
        if lambda <= 0.0 {
            return 0.0;
        }
        if lambda.is_infinite() {
            return 1.0;
        }
        let scale = self.mesh.powi(self.dim as i32 - 2);
        1.0 / (1.0 + self.links[k].weight / (scale * lambda))
    }

    /// Positions of the boundary sites with `tag`.
    pub fn site_positions(&self, tag: Tag) -> Vec<[f64; 3]> {
        self.boundary_sites.iter().filter(|s| s.tag == tag).map(|s| self.position(s.index)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let dom: LatticeDomain = serde_json::from_str(s)?;
        dom.validate()?;
        Ok(dom)
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        let deg = self.degree();
        let bad = |m: String| Err(PrbmError::DegenerateGeometry(m));
        if !(self.mesh > 0.0) || !(2..=3).contains(&self.dim) {
            return bad("mesh must be positive and dimension 2 or 3".into());
        }
        if self.bulk.is_empty() {
            return bad("no bulk sites".into());
        }
        if self.neighbors.len() != self.bulk.len() * deg {
            return bad("neighbor table has the wrong length".into());
        }
        for (k, l) in self.links.iter().enumerate() {
            if l.site >= self.boundary_sites.len() || l.inward >= self.bulk.len() {
                return bad(format!("link {k} is dangling"));
            }
            if self.neighbor(l.inward, l.dir as usize) != Neighbor::Link(k) {
                return bad(format!("link {k} is not registered at its inward site"));
            }
            if !(l.weight > 0.0) {
                return bad(format!("link {k} has nonpositive weight"));
            }
        }
        for (s, site) in self.boundary_sites.iter().enumerate() {
            let ok = self.links.iter().any(|l| l.site == s && l.inward == site.inward);
            if !ok {
                return bad(format!("boundary site {s} has no bulk neighbor at its designated inward site"));
            }
        }
        // connectivity
        let mut seen = vec![false; self.bulk.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for dir in 0..deg {
                if let Neighbor::Bulk(j) = self.neighbor(i, dir) {
                    if !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return bad("bulk sites are not connected".into());
        }
        Ok(())
    }

    /// Assembles a lattice from its bulk sites. `classify` tags every non-bulk
    /// neighbor; `weight(midpoint, dir, tag)` gives the surface element of each link.
    pub fn assemble(
        dim: usize,
        mesh: f64,
        bulk: Vec<[i64; 3]>,
        period: [i64; 3],
        classify: &dyn Fn([i64; 3]) -> Result<Tag>,
        weight: &dyn Fn([f64; 3], usize, Tag) -> f64,
    ) -> Result<Self> {
        if !(mesh > 0.0) || !mesh.is_finite() {
            return Err(invalid(format!("mesh must be positive, got {mesh}")));
        }
        if bulk.is_empty() {
            return Err(PrbmError::DegenerateGeometry("enclosed bulk is empty".into()));
        }
        let deg = 2 * dim;
        let wrap = |mut x: [i64; 3]| {
            for ax in 0..3 {
                if period[ax] > 0 {
                    x[ax] = x[ax].rem_euclid(period[ax]);
                }
            }
            x
        };
        let index: HashMap<[i64; 3], usize> = bulk.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let mut dom = LatticeDomain {
            mesh,
            dim,
            bulk,
            neighbors: Vec::new(),
            boundary_sites: Vec::new(),
            links: Vec::new(),
            period,
        };
        dom.neighbors = Vec::with_capacity(dom.bulk.len() * deg);
        let mut site_index: HashMap<[i64; 3], usize> = HashMap::new();
        for i in 0..dom.bulk.len() {
            let s = dom.bulk[i];
            for dir in 0..deg {
                let e = unit_step(dir);
                let nb = wrap([s[0] + e[0], s[1] + e[1], s[2] + e[2]]);
                if let Some(&j) = index.get(&nb) {
                    dom.neighbors.push(j as i64);
                    continue;
                }
                let site = match site_index.get(&nb) {
                    Some(&b) => b,
                    None => {
                        let tag = classify(nb)?;
                        dom.boundary_sites.push(BoundarySite { index: nb, tag, inward: i });
                        site_index.insert(nb, dom.boundary_sites.len() - 1);
                        dom.boundary_sites.len() - 1
                    }
                };
                let k = dom.links.len();
                dom.links.push(BoundaryLink { site, inward: i, dir: dir as u8, weight: 0.0 });
                dom.neighbors.push(-(k as i64) - 1);
            }
        }
        for k in 0..dom.links.len() {
            let tag = dom.link_tag(k);
            let m = dom.link_midpoint(k);
            dom.links[k].weight = weight(m, dom.links[k].dir as usize, tag);
        }
        dom.designate_inward();
        Ok(dom)
    }

    /// Each boundary site keeps the bulk neighbor whose direction points most
    /// nearly toward the bulk centroid; ties go to the lowest direction index.
    fn designate_inward(&mut self) {
        let n = self.bulk.len() as f64;
        let mut c = [0.0; 3];
        for s in &self.bulk {
            for ax in 0..3 {
                c[ax] += s[ax] as f64 / n;
            }
        }
        let mut best: Vec<Option<(f64, u8, usize)>> = vec![None; self.boundary_sites.len()];
        for l in &self.links {
            let s = self.boundary_sites[l.site].index;
            let v = [c[0] - s[0] as f64, c[1] - s[1] as f64, c[2] - s[2] as f64];
            let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            // the step from the site back to its inward neighbor is the reverse of the link
            let e = unit_step(l.dir as usize);
            let score = if norm > 0.0 { -(e[0] as f64 * v[0] + e[1] as f64 * v[1] + e[2] as f64 * v[2]) / norm } else { 0.0 };
            let rev = l.dir ^ 1;
            let cand = (score, rev, l.inward);
            let slot = &mut best[l.site];
            *slot = match *slot {
                None => Some(cand),
                Some(b) if score > b.0 + 1e-12 || ((score - b.0).abs() <= 1e-12 && rev < b.1) => Some(cand),
                keep => keep,
            };
        }
        for (site, b) in self.boundary_sites.iter_mut().zip(best) {
            site.inward = b.expect("every boundary site has a link").2;
        }
    }

    /// Box of `shape` bulk sites; `faces[axis] = (low, high)` tags the two faces.
    pub fn boxed(shape: &[usize], mesh: f64, faces: &[(Tag, Tag)]) -> Result<Self> {
        let dim = shape.len();
        if !(2..=3).contains(&dim) || faces.len() != dim || shape.contains(&0) {
            return Err(invalid("box needs 2 or 3 positive extents with one tag pair per axis"));
        }
        let mut bulk = Vec::new();
        let nz = if dim == 3 { shape[2] } else { 1 };
        for z in 0..nz as i64 {
            for y in 0..shape[1] as i64 {
                for x in 0..shape[0] as i64 {
                    bulk.push([x, y, z]);
                }
            }
        }
        let ext: Vec<i64> = shape.iter().map(|&n| n as i64).collect();
        let classify = |s: [i64; 3]| -> Result<Tag> {
            for ax in 0..dim {
                if s[ax] < 0 {
                    return Ok(faces[ax].0);
                }
                if s[ax] >= ext[ax] {
                    return Ok(faces[ax].1);
                }
            }
            Err(PrbmError::DegenerateGeometry(format!("site {s:?} is neither bulk nor boundary")))
        };
        let w = mesh.powi(dim as i32 - 1);
        Self::assemble(dim, mesh, bulk, [0; 3], &classify, &|_, _, _| w)
    }

    /// Strip periodic along x with `width` columns; the working line lies one
    /// mesh below the first bulk row and the source one mesh above the last,
    /// so the working-to-source distance is `(height + 1) a`.
    pub fn periodic_strip(width: usize, height: usize, mesh: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid("strip needs positive width and height"));
        }
        let mut bulk = Vec::with_capacity(width * height);
        for y in 1..=height as i64 {
            for x in 0..width as i64 {
                bulk.push([x, y, 0]);
            }
        }
        let h = height as i64;
        let classify = move |s: [i64; 3]| -> Result<Tag> {
            match s[1] {
                0 => Ok(Tag::Working),
                y if y == h + 1 => Ok(Tag::Source),
                _ => Err(PrbmError::DegenerateGeometry(format!("site {s:?} is neither bulk nor boundary"))),
            }
        };
        Self::assemble(2, mesh, bulk, [width as i64, 0, 0], &classify, &|_, _, _| mesh)
    }
}

/// Rasterizes the region enclosed between a closed working curve and an optional
/// closed source curve (the region inside exactly one of them).
///
/// Grid points on either curve are never bulk. Boundary sites take the tag of the
/// nearest curve. A link's surface element is `a / (|n_x| + |n_y|)`, with `n` the
/// normal of the curve segment nearest to the link midpoint, so that the staircase
/// reproduces the true arclength.
pub fn rasterize(working: &Polyline, source: Option<&Polyline>, a: f64) -> Result<LatticeDomain> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(invalid(format!("mesh must be positive, got {a}")));
    }
    if !working.is_closed() {
        return Err(invalid("working polyline must be closed"));
    }
    if let Some(s) = source {
        if !s.is_closed() {
            return Err(invalid("source polyline must be closed"));
        }
    }
    let curves: Vec<&Polyline> = std::iter::once(working).chain(source).collect();
    let (mut lo, mut hi) = working.bbox();
    if let Some(s) = source {
        let (l2, h2) = s.bbox();
        for i in 0..2 {
            lo[i] = lo[i].min(l2[i]);
            hi[i] = hi[i].max(h2[i]);
        }
    }
    let i0 = (lo[0] / a).floor() as i64 - 2;
    let i1 = (hi[0] / a).ceil() as i64 + 2;
    let j0 = (lo[1] / a).floor() as i64 - 2;
    let j1 = (hi[1] / a).ceil() as i64 + 2;
    let nx = (i1 - i0 + 1) as usize;
    let ny = (j1 - j0 + 1) as usize;
    let at = |i: i64, j: i64| (j - j0) as usize * nx + (i - i0) as usize;

    // even-odd parity over both curves: inside exactly one of them
    let mut region = vec![false; nx * ny];
    for j in j0..=j1 {
        let y = j as f64 * a;
        let mut xs: Vec<f64> = Vec::new();
        for c in &curves {
            for (p, q) in c.segments() {
                if (p[1] <= y) != (q[1] <= y) {
                    xs.push(p[0] + (y - p[1]) * (q[0] - p[0]) / (q[1] - p[1]));
                }
            }
        }
        xs.sort_by(|u, v| u.partial_cmp(v).unwrap());
        let mut k = 0;
        for i in i0..=i1 {
            let x = i as f64 * a;
            while k < xs.len() && xs[k] < x {
                k += 1;
            }
            region[at(i, j)] = k % 2 == 1;
        }
    }
    // grid points on a curve are exterior
    let tol = 1e-9 * a;
    for c in &curves {
        for (p, q) in c.segments() {
            let ia = ((p[0].min(q[0]) - tol) / a).ceil() as i64;
            let ib = ((p[0].max(q[0]) + tol) / a).floor() as i64;
            let ja = ((p[1].min(q[1]) - tol) / a).ceil() as i64;
            let jb = ((p[1].max(q[1]) + tol) / a).floor() as i64;
            for j in ja.max(j0)..=jb.min(j1) {
                for i in ia.max(i0)..=ib.min(i1) {
                    if seg_distance([i as f64 * a, j as f64 * a], p, q) <= tol {
                        region[at(i, j)] = false;
                    }
                }
            }
        }
    }
    // keep the largest 4-connected component
    let mut comp = vec![usize::MAX; nx * ny];
    let mut best: (usize, usize) = (0, usize::MAX);
    let mut ncomp = 0;
    for start in 0..nx * ny {
        if !region[start] || comp[start] != usize::MAX {
            continue;
        }
        let mut size = 0;
        let mut queue = VecDeque::from([start]);
        comp[start] = ncomp;
        while let Some(c) = queue.pop_front() {
            size += 1;
            let (ci, cj) = (c % nx, c / nx);
            let nbs = [
                (ci + 1 < nx).then(|| c + 1),
                (ci > 0).then(|| c - 1),
                (cj + 1 < ny).then(|| c + nx),
                (cj > 0).then(|| c - nx),
            ];
            for n in nbs.into_iter().flatten() {
                if region[n] && comp[n] == usize::MAX {
                    comp[n] = ncomp;
                    queue.push_back(n);
                }
            }
        }
        if size > best.0 {
            best = (size, ncomp);
        }
        ncomp += 1;
    }
    if ncomp == 0 {
        return Err(PrbmError::DegenerateGeometry("enclosed bulk is empty".into()));
    }
    let mut bulk = Vec::with_capacity(best.0);
    for j in j0..=j1 {
        for i in i0..=i1 {
            if comp[at(i, j)] == best.1 {
                bulk.push([i, j, 0]);
            }
        }
    }

    let classify = |s: [i64; 3]| -> Result<Tag> {
        let x = [s[0] as f64 * a, s[1] as f64 * a];
        let dw = working.distance(x).0;
        let ds = source.map_or(f64::INFINITY, |c| c.distance(x).0);
        if (dw - ds).abs() <= 1e-9 * a {
            return Err(PrbmError::MeshTooCoarse(format!(
                "boundary site {x:?} is equidistant ({dw}) from working and source curves"
            )));
        }
        Ok(if dw < ds { Tag::Working } else { Tag::Source })
    };
    let weight = |m: [f64; 3], _dir: usize, tag: Tag| -> f64 {
        let c = match tag {
            Tag::Working => working,
            Tag::Source => source.unwrap_or(working),
        };
        let (_, k) = c.distance([m[0], m[1]]);
        let n = c.segment_normal(k);
        a / (n[0].abs() + n[1].abs())
    };
    LatticeDomain::assemble(2, a, bulk, [0; 3], &classify, &weight)
}

/// Surface element of every boundary link. Equals `a^{d-1}` on axis-aligned
/// boundaries; rasterized oblique curves carry the staircase-corrected value.
pub fn boundary_measure(dom: &LatticeDomain) -> Vec<f64> {
    dom.links.iter().map(|l| l.weight).collect()
}
