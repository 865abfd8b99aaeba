//! Monte Carlo realizations of partially reflected Brownian motion.
//!
//! The jump walker moves from an interior point straight to its exact
//! boundary hitting point, then is reflected to `s + a n(s)` or absorbed.
//! The lattice walker is a simple random walk whose working boundary links
//! reflect with probability `eps_k`. Each trajectory draws its boundary hits
//! and its absorption coins from two independent lanes of one `RngStream`, so
//! the hit sequence does not depend on the absorption rule.

use crate::error::{invalid, PrbmError, Result};
use crate::geometry::{DomainKind, DomainSpec, LatticeDomain, Neighbor, Tag};
use crate::rng::{Rng, RngStream};
use rand::Rng as _;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpParams {
    pub a: f64,
    pub lambda: f64,
}

impl JumpParams {
    pub fn new(a: f64, lambda: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() || !(lambda >= 0.0) {
            return Err(invalid(format!("need a > 0 and Lambda >= 0, got a = {a}, Lambda = {lambda}")));
        }
        Ok(Self { a, lambda })
    }

    /// `eps = 1 / (1 + a / Lambda)`.
    pub fn epsilon(&self) -> f64 {
        if self.lambda == 0.0 {
            0.0
        } else {
            1.0 / (1.0 + self.a / self.lambda)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Fate {
    AbsorbedOnWorking { point: [f64; 3], element: Option<usize> },
    AbsorbedOnSource,
    Censored,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionRecord {
    pub fate: Fate,
    pub n_reflections: u64,
    pub n_hits: u64,
    /// `a * n_hits`.
    pub local_time_proxy: f64,
    pub steps: u64,
}

/// How the walker decides between reflection and absorption at each hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AbsorptionRule {
    /// Absorb at each hit with probability `1 - eps`.
    Bernoulli,
    /// Draw `N ~ Geometric` once, `Pr{N = n} = (1 - eps) eps^n`, before the walk
    /// starts; absorb at hit `N + 1`.
    Geometric,
    /// Absorb at hit `n + 1`.
    Fixed(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Caps {
    pub max_steps: u64,
    pub escape_radius: f64,
}

impl Default for Caps {
    fn default() -> Self {
        Self { max_steps: 10_000_000, escape_radius: f64::INFINITY }
    }
}

impl Caps {
    /// Default caps with the half-plane escape radius `1e4 Lambda`.
    pub fn for_lambda(lambda: f64) -> Self {
        Self { escape_radius: 1e4 * lambda.max(f64::MIN_POSITIVE), ..Self::default() }
    }
}

/// Threshold `chi` with `Pr{chi >= l} = exp(-l / Lambda)`; `Lambda = 0` gives 0.
pub fn sample_threshold(lambda: f64, rng: &mut Rng) -> Result<f64> {
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let exp = Exp::new(1.0 / lambda).map_err(|_| invalid(format!("Lambda must be >= 0, got {lambda}")))?;
    Ok(exp.sample(rng))
}

/// Uniform in `(0, 1]`.
fn unit_open0(rng: &mut Rng) -> f64 {
    ((rng.random::<u64>() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

struct Clock {
    rule: AbsorptionRule,
    target: u64,
}

impl Clock {
    fn new(rule: AbsorptionRule, eps: f64, coins: &mut Rng) -> Self {
        let target = match rule {
            AbsorptionRule::Bernoulli => 0,
            AbsorptionRule::Fixed(n) => n,
            AbsorptionRule::Geometric => {
                // N successes of Bernoulli(eps) before the first failure, drawn up
                // front; the coin lane is consumed exactly as the local rule would
                let mut n = 0;
                while eps > 0.0 && coins.random::<f64>() < eps {
                    n += 1;
                }
                n
            }
        };
        Self { rule, target }
    }

    /// Decides the fate of hit number `n_reflections + 1`.
    fn reflect(&self, eps: f64, n_reflections: u64, coins: &mut Rng) -> bool {
        match self.rule {
            AbsorptionRule::Bernoulli => eps > 0.0 && coins.random::<f64>() < eps,
            _ => n_reflections < self.target,
        }
    }
}

fn wrapped_cauchy(rho: f64, rng: &mut Rng) -> f64 {
    // exact inverse of the Poisson kernel's angular distribution
    let u: f64 = rng.random();
    2.0 * (((1.0 - rho) / (1.0 + rho)) * (PI * (u - 0.5)).tan()).atan()
}

/// `cos` of the polar angle of the hitting point on the unit sphere from radius `r < 1`.
fn ball_polar_cosine(r: f64, rng: &mut Rng) -> f64 {
    let v: f64 = rng.random();
    if r < 1e-8 {
        return 2.0 * v - 1.0;
    }
    let a = 2.0 * r * v / (1.0 - r * r) + 1.0 / (1.0 + r);
    ((1.0 + r * r - 1.0 / (a * a)) / (2.0 * r)).clamp(-1.0, 1.0)
}

/// Unit vector at polar cosine `u` about the axis `axis`, with uniform azimuth.
fn around_axis(axis: [f64; 3], u: f64, rng: &mut Rng) -> [f64; 3] {
    let phi = 2.0 * PI * rng.random::<f64>();
    let s = (1.0 - u * u).max(0.0).sqrt();
    // orthonormal frame (e1, e2, axis)
    let helper = if axis[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let mut e1 = cross(helper, axis);
    let n1 = norm(e1);
    e1 = [e1[0] / n1, e1[1] / n1, e1[2] / n1];
    let e2 = cross(axis, e1);
    let (c, sn) = (phi.cos(), phi.sin());
    [0, 1, 2].map(|i| u * axis[i] + s * (c * e1[i] + sn * e2[i]))
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn uniform_sphere(rng: &mut Rng) -> [f64; 3] {
    let u = 2.0 * rng.random::<f64>() - 1.0;
    around_axis([0.0, 0.0, 1.0], u, rng)
}

enum Hit {
    Working([f64; 3]),
    Source,
    Escaped,
}

/// Exact first-passage move from `x` to the boundary.
fn hit_from(kind: &DomainKind, x: &[f64; 3], caps: &Caps, rng: &mut Rng) -> Hit {
    match *kind {
        DomainKind::HalfSpace(d) => {
            let h = x[d - 1];
            let mut s = *x;
            s[d - 1] = 0.0;
            if d == 2 {
                s[0] += h * (PI * (rng.random::<f64>() - 0.5)).tan();
            } else {
                let w: f64 = StandardNormal.sample(rng);
                let w = w.abs();
                for c in s.iter_mut().take(d - 1) {
                    let z: f64 = StandardNormal.sample(rng);
                    *c += h * z / w;
                }
            }
            let lat = s[..d - 1].iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(lat <= caps.escape_radius) {
                return Hit::Escaped;
            }
            Hit::Working(s)
        }
        DomainKind::DiskInterior | DomainKind::DiskExterior => {
            let r = x[0].hypot(x[1]);
            let phi = x[1].atan2(x[0]);
            let rho = if matches!(kind, DomainKind::DiskInterior) { r } else { 1.0 / r };
            let th = if rho == 0.0 { 2.0 * PI * rng.random::<f64>() } else { phi + wrapped_cauchy(rho, rng) };
            Hit::Working([th.cos(), th.sin(), 0.0])
        }
        DomainKind::BallInterior | DomainKind::BallExterior => {
            let r = norm(*x);
            if r == 0.0 {
                return Hit::Working(uniform_sphere(rng));
            }
            let axis = [x[0] / r, x[1] / r, x[2] / r];
            let rr = if matches!(kind, DomainKind::BallInterior) {
                r
            } else {
                // the sphere is hit with probability 1/r, otherwise the walker escapes to infinity
                if rng.random::<f64>() >= 1.0 / r {
                    return Hit::Source;
                }
                1.0 / r
            };
            let u = ball_polar_cosine(rr, rng);
            Hit::Working(around_axis(axis, u, rng))
        }
        DomainKind::Annulus(big_r) => {
            let r = x[0].hypot(x[1]);
            let phi = x[1].atan2(x[0]);
            let l = big_r.ln();
            let y = r.ln();
            if rng.random::<f64>() >= 1.0 - y / l {
                return Hit::Source;
            }
            // harmonic measure of the strip 0 < Re w < L under w = ln z
            let b = PI * y / l;
            let v: f64 = rng.random();
            let arg = ((0.5 * b).tan() * ((PI - b) * (v - 0.5)).tan()).clamp(-1.0, 1.0);
            let u = 2.0 * arg.atanh();
            let th = phi + l * u / PI;
            if !th.is_finite() {
                return Hit::Escaped;
            }
            Hit::Working([th.cos(), th.sin(), 0.0])
        }
        DomainKind::Lattice(_) => unreachable!("lattice domains use run_lattice_walker"),
    }
}

/// Reflected position `s + a n(s)`.
fn reflect_point(kind: &DomainKind, s: &[f64; 3], a: f64) -> [f64; 3] {
    match *kind {
        DomainKind::HalfSpace(d) => {
            let mut x = *s;
            x[d - 1] = a;
            x
        }
        DomainKind::DiskInterior | DomainKind::BallInterior => s.map(|v| v * (1.0 - a)),
        DomainKind::DiskExterior | DomainKind::BallExterior | DomainKind::Annulus(_) => s.map(|v| v * (1.0 + a)),
        DomainKind::Lattice(_) => unreachable!(),
    }
}

fn check_start(dom: &DomainSpec, x: &[f64], a: f64) -> Result<[f64; 3]> {
    let d = dom.dimension;
    if x.len() != d {
        return Err(invalid(format!("start point must have {d} coordinates")));
    }
    let mut p = [0.0; 3];
    p[..d].copy_from_slice(x);
    let r = norm(p);
    let ok = match dom.kind {
        DomainKind::HalfSpace(d) => {
            if d > 3 {
                return Err(invalid("jump walker supports half-spaces of dimension 2 and 3"));
            }
            p[d - 1] > 0.0
        }
        DomainKind::DiskInterior => r < 1.0 && a < 1.0,
        DomainKind::BallInterior => d == 3 && r < 1.0 && a < 1.0,
        DomainKind::DiskExterior => r > 1.0,
        DomainKind::BallExterior => d == 3 && r > 1.0,
        DomainKind::Annulus(big_r) => r > 1.0 && r < big_r && 1.0 + a < big_r,
        DomainKind::Lattice(_) => return Err(invalid("lattice domains use run_lattice_walker")),
    };
    if !ok {
        return Err(invalid(format!("start point {x:?} is not strictly interior (or a is too large)")));
    }
    Ok(p)
}

/// One jump-reflected trajectory in a canonical domain.
pub fn run_jump_walker(
    dom: &DomainSpec,
    start: &[f64],
    p: &JumpParams,
    rule: AbsorptionRule,
    stream: RngStream,
    caps: &Caps,
) -> Result<AbsorptionRecord> {
    let mut x = check_start(dom, start, p.a)?;
    let eps = p.epsilon();
    let mut hits = stream.split(0).rng();
    let mut coins = stream.split(1).rng();
    let clock = Clock::new(rule, eps, &mut coins);
    let mut rec = AbsorptionRecord {
        fate: Fate::Censored,
        n_reflections: 0,
        n_hits: 0,
        local_time_proxy: 0.0,
        steps: 0,
    };
    loop {
        if rec.steps >= caps.max_steps {
            rec.fate = Fate::Censored;
            break;
        }
        rec.steps += 1;
        match hit_from(&dom.kind, &x, caps, &mut hits) {
            Hit::Source => {
                rec.fate = Fate::AbsorbedOnSource;
                break;
            }
            Hit::Escaped => {
                rec.fate = Fate::Censored;
                break;
            }
            Hit::Working(s) => {
                rec.n_hits += 1;
                if clock.reflect(eps, rec.n_reflections, &mut coins) {
                    rec.n_reflections += 1;
                    x = reflect_point(&dom.kind, &s, p.a);
                } else {
                    rec.fate = Fate::AbsorbedOnWorking { point: s, element: None };
                    break;
                }
            }
        }
    }
    rec.local_time_proxy = p.a * rec.n_hits as f64;
    Ok(rec)
}

/// One lattice trajectory from bulk site `start`. A working link `k` reflects the
/// walker back to its inward site with probability `eps_k`; a source link absorbs.
pub fn run_lattice_walker(
    dom: &LatticeDomain,
    start: usize,
    lambda: f64,
    stream: RngStream,
    caps: &Caps,
) -> Result<AbsorptionRecord> {
    if start >= dom.n_bulk() {
        return Err(invalid(format!("start site {start} is not a bulk site")));
    }
    if !(lambda >= 0.0) {
        return Err(invalid("Lambda must be >= 0"));
    }
    let deg = dom.degree();
    let mut steps_rng = stream.split(0).rng();
    let mut coins = stream.split(1).rng();
    let mut site = start;
    let mut rec = AbsorptionRecord { fate: Fate::Censored, n_reflections: 0, n_hits: 0, local_time_proxy: 0.0, steps: 0 };
    while rec.steps < caps.max_steps {
        rec.steps += 1;
        let dir = steps_rng.random_range(0..deg);
        match dom.neighbor(site, dir) {
            Neighbor::Bulk(j) => site = j,
            Neighbor::Link(k) => {
                let link = &dom.links[k];
                if dom.boundary_sites[link.site].tag == Tag::Source {
                    rec.fate = Fate::AbsorbedOnSource;
                    break;
                }
                rec.n_hits += 1;
                let eps = dom.link_epsilon(k, lambda);
                if eps > 0.0 && coins.random::<f64>() < eps {
                    rec.n_reflections += 1;
                } else {
                    let point = dom.position(dom.boundary_sites[link.site].index);
                    rec.fate = Fate::AbsorbedOnWorking { point, element: Some(k) };
                    break;
                }
            }
        }
    }
    rec.local_time_proxy = dom.mesh * rec.n_hits as f64;
    Ok(rec)
}

/// Bulk site of the `i`-th source link; source emission draws `i` uniformly.
pub fn source_emission_site(dom: &LatticeDomain, rng: &mut Rng) -> Result<usize> {
    let src = dom.source_links();
    if src.is_empty() {
        return Err(invalid("domain has no source"));
    }
    Ok(dom.links[src[rng.random_range(0..src.len())]].inward)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Binning {
    /// Bins on the first coordinate of the absorption point over `[lo, hi)`.
    Lateral { lo: f64, hi: f64, bins: usize },
    /// Bins on the polar angle in `[0, 2 pi)`.
    Angle { bins: usize },
    /// One bin per boundary element (lattice link).
    Elements { n: usize },
}

impl Binning {
    fn n_bins(&self) -> usize {
        match *self {
            Binning::Lateral { bins, .. } | Binning::Angle { bins } => bins,
            Binning::Elements { n } => n,
        }
    }

    fn locate(&self, point: &[f64; 3], element: Option<usize>) -> Option<usize> {
        match *self {
            Binning::Lateral { lo, hi, bins } => {
                let x = point[0];
                if x >= lo && x < hi {
                    Some((((x - lo) / (hi - lo)) * bins as f64).floor().min(bins as f64 - 1.0) as usize)
                } else {
                    None
                }
            }
            Binning::Angle { bins } => {
                let th = point[1].atan2(point[0]).rem_euclid(2.0 * PI);
                Some(((th / (2.0 * PI)) * bins as f64).floor().min(bins as f64 - 1.0) as usize)
            }
            Binning::Elements { n } => element.filter(|&k| k < n),
        }
    }

    pub fn edges(&self) -> Vec<(f64, f64)> {
        match *self {
            Binning::Lateral { lo, hi, bins } => {
                let w = (hi - lo) / bins as f64;
                (0..bins).map(|i| (lo + i as f64 * w, lo + (i + 1) as f64 * w)).collect()
            }
            Binning::Angle { bins } => {
                let w = 2.0 * PI / bins as f64;
                (0..bins).map(|i| (i as f64 * w, (i + 1) as f64 * w)).collect()
            }
            Binning::Elements { n } => (0..n).map(|i| (i as f64, i as f64 + 1.0)).collect(),
        }
    }
}

/// Number of tracked reflection counts; larger counts share the last slot.
pub const REFLECTION_SLOTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureHistogram {
    pub binning: Binning,
    pub counts: Vec<u64>,
    /// Working absorptions outside the binned window.
    pub overflow: u64,
    pub source: u64,
    pub censored: u64,
    pub total: u64,
    pub reflections_sum: u64,
    pub reflection_counts: Vec<u64>,
}

impl MeasureHistogram {
    pub fn empty(binning: Binning) -> Self {
        let n = binning.n_bins();
        Self {
            binning,
            counts: vec![0; n],
            overflow: 0,
            source: 0,
            censored: 0,
            total: 0,
            reflections_sum: 0,
            reflection_counts: vec![0; REFLECTION_SLOTS],
        }
    }

    pub fn record(&mut self, rec: &AbsorptionRecord) {
        self.total += 1;
        match rec.fate {
            Fate::AbsorbedOnWorking { point, element } => {
                match self.binning.locate(&point, element) {
                    Some(i) => self.counts[i] += 1,
                    None => self.overflow += 1,
                }
                self.reflections_sum += rec.n_reflections;
                self.reflection_counts[(rec.n_reflections as usize).min(REFLECTION_SLOTS - 1)] += 1;
            }
            Fate::AbsorbedOnSource => self.source += 1,
            Fate::Censored => self.censored += 1,
        }
    }

    pub fn merge(mut self, other: Self) -> Self {
        for (c, o) in self.counts.iter_mut().zip(&other.counts) {
            *c += o;
        }
        for (c, o) in self.reflection_counts.iter_mut().zip(&other.reflection_counts) {
            *c += o;
        }
        self.overflow += other.overflow;
        self.source += other.source;
        self.censored += other.censored;
        self.total += other.total;
        self.reflections_sum += other.reflections_sum;
        self
    }

    pub fn working_absorbed(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.overflow
    }

    /// Working + source + censored = total.
    pub fn partition_holds(&self) -> bool {
        self.working_absorbed() + self.source + self.censored == self.total
    }

    pub fn estimate(&self, i: usize) -> f64 {
        self.counts[i] as f64 / self.total as f64
    }

    /// `sqrt(p (1 - p) / total)`.
    pub fn stderr(&self, i: usize) -> f64 {
        let p = self.estimate(i);
        (p * (1.0 - p) / self.total as f64).sqrt()
    }

    /// Fraction absorbed on the source, `1 - omega{boundary}` up to censoring.
    pub fn source_fraction(&self) -> f64 {
        self.source as f64 / self.total as f64
    }

    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / self.total as f64
    }

    pub fn mean_reflections(&self) -> f64 {
        self.reflections_sum as f64 / self.working_absorbed() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_walkers: u64,
    pub base: RngStream,
    /// Largest tolerated censored fraction.
    pub censor_ceiling: f64,
}

impl EnsembleConfig {
    pub fn new(n_walkers: u64, base: RngStream) -> Self {
        Self { n_walkers, base, censor_ceiling: 0.01 }
    }
}

/// Runs `n_walkers` trajectories, walker `i` on lane `i` of the base stream, and
/// reduces their records into a histogram. The reduction is order independent.
pub fn run_ensemble<F>(cfg: &EnsembleConfig, binning: Binning, walker: F) -> Result<MeasureHistogram>
where
    F: Fn(RngStream) -> Result<AbsorptionRecord> + Sync,
{
    if cfg.n_walkers == 0 {
        return Err(invalid("n_walkers must be >= 1"));
    }
    let hist = (0..cfg.n_walkers)
        .into_par_iter()
        .try_fold(
            || MeasureHistogram::empty(binning.clone()),
            |mut h, i| {
                let rec = walker(cfg.base.split(i))?;
                h.record(&rec);
                Ok::<_, PrbmError>(h)
            },
        )
        .try_reduce(|| MeasureHistogram::empty(binning.clone()), |a, b| Ok(a.merge(b)))?;
    let frac = hist.censored_fraction();
    if frac > cfg.censor_ceiling {
        return Err(PrbmError::TooManyCensored { fraction: frac, ceiling: cfg.censor_ceiling });
    }
    Ok(hist)
}

/// Spread harmonic measure of a canonical domain seen from `start`.
pub fn estimate_spread_measure(
    dom: &DomainSpec,
    start: &[f64],
    p: &JumpParams,
    binning: Binning,
    cfg: &EnsembleConfig,
    caps: &Caps,
) -> Result<MeasureHistogram> {
    check_start(dom, start, p.a)?;
    run_ensemble(cfg, binning, |s| run_jump_walker(dom, start, p, AbsorptionRule::Bernoulli, s, caps))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Emission {
    Site(usize),
    /// Uniform over the inward sites of the source links.
    Source,
}

/// Lattice spread measure, binned per working-link element index.
pub fn estimate_lattice_measure(
    dom: &LatticeDomain,
    emission: Emission,
    lambda: f64,
    cfg: &EnsembleConfig,
    caps: &Caps,
) -> Result<MeasureHistogram> {
    if let Emission::Source = emission {
        if !dom.has_source() {
            return Err(invalid("source emission needs a source"));
        }
    }
    run_ensemble(cfg, Binning::Elements { n: dom.links.len() }, |s| {
        let start = match emission {
            Emission::Site(i) => i,
            Emission::Source => source_emission_site(dom, &mut s.split(2).rng())?,
        };
        run_lattice_walker(dom, start, lambda, s, caps)
    })
}

// ---------------------------------------------------------------------------
// Stopping time on the hyperplane from the one-dimensional reflected walk.

const EXACT_RETURN_TERMS: usize = 256;

/// `S(m) = C(2m, m) / 4^m = Pr{T1 > 2m - 1}` for `m <= 256`.
fn survival_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut s = vec![1.0; EXACT_RETURN_TERMS + 1];
        for m in 1..=EXACT_RETURN_TERMS {
            s[m] = s[m - 1] * (2 * m - 1) as f64 / (2 * m) as f64;
        }
        s
    })
}

/// `ln S(x)` for `x >= 256` from `S(m) ~ (pi m)^{-1/2} (1 - 1/8m + 1/128m^2 + 5/1024m^3 - 21/32768m^4)`.
fn ln_survival_asymptotic(x: f64) -> f64 {
    let y = 1.0 / x;
    let series = 1.0 - y / 8.0 + y * y / 128.0 + 5.0 * y * y * y / 1024.0 - 21.0 * y * y * y * y / 32768.0;
    -0.5 * (PI * x).ln() + series.ln()
}

/// Steps for the simple random walk to first reach 0 from 1 (odd, heavy tailed).
pub fn sample_first_return(rng: &mut Rng) -> f64 {
    let u = unit_open0(rng);
    let table = survival_table();
    if u > table[EXACT_RETURN_TERMS] {
        // smallest m with S(m) < u
        let m = table.partition_point(|&s| s >= u);
        return (2 * m - 1) as f64;
    }
    let lu = u.ln();
    let mut x = 1.0 / (PI * u * u);
    for _ in 0..6 {
        x *= (2.0 * (ln_survival_asymptotic(x) - lu)).exp();
    }
    let mut m = x.floor().max(EXACT_RETURN_TERMS as f64) + 1.0;
    if m < 1e15 {
        for _ in 0..4 {
            if m - 1.0 > EXACT_RETURN_TERMS as f64 && ln_survival_asymptotic(m - 1.0) < lu {
                m -= 1.0;
            } else if ln_survival_asymptotic(m) >= lu {
                m += 1.0;
            } else {
                break;
            }
        }
    }
    2.0 * m - 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingTimeSample {
    /// Ascending uncensored stopping times.
    pub times: Vec<f64>,
    pub censored: u64,
    pub total: u64,
}

impl StoppingTimeSample {
    pub fn median(&self) -> f64 {
        // censored values lie above every recorded time
        let k = (self.total / 2) as usize;
        self.times.get(k).copied().unwrap_or(f64::INFINITY)
    }

    /// Kolmogorov-Smirnov distance to `cdf`, counting censored samples as `+inf`.
    pub fn ks_distance(&self, cdf: impl Fn(f64) -> f64) -> f64 {
        let n = self.total as f64;
        let mut d: f64 = 0.0;
        for (i, &t) in self.times.iter().enumerate() {
            let f = cdf(t);
            d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
        }
        d.max(1.0 - self.times.len() as f64 / n)
    }
}

/// One stopping time: the reflected walk of step `a` (one step per time `a^2`)
/// is stopped at its `k`-th return to the boundary, `k = ceil(chi / a)`, when the
/// local-time proxy `a k` first reaches the threshold `chi`. Returns `None` when
/// the walk exceeds `max_steps`.
pub fn sample_stopping_time(lambda: f64, a: f64, rng: &mut Rng, max_steps: f64) -> Result<Option<f64>> {
    if !(lambda > 0.0) || !(a > 0.0) {
        return Err(invalid("need Lambda > 0 and a > 0"));
    }
    let chi = sample_threshold(lambda, rng)?;
    let k = (chi / a).ceil().max(1.0) as u64;
    let mut steps = 0.0;
    for _ in 0..k {
        // leave the boundary, then return
        steps += 1.0 + sample_first_return(rng);
        if steps > max_steps {
            return Ok(None);
        }
    }
    Ok(Some(steps * a * a))
}

/// The same stopping time by explicit stepping of the reflected walk.
pub fn sample_stopping_time_stepping(lambda: f64, a: f64, rng: &mut Rng, max_steps: u64) -> Result<Option<f64>> {
    if !(lambda > 0.0) || !(a > 0.0) {
        return Err(invalid("need Lambda > 0 and a > 0"));
    }
    let chi = sample_threshold(lambda, rng)?;
    let mut pos: u64 = 0;
    let mut hits: u64 = 0;
    let mut steps: u64 = 0;
    loop {
        if steps >= max_steps {
            return Ok(None);
        }
        steps += 1;
        if pos == 0 || rng.random::<bool>() {
            pos += 1;
        } else {
            pos -= 1;
            if pos == 0 {
                hits += 1;
                if a * hits as f64 >= chi {
                    return Ok(Some(steps as f64 * a * a));
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingTimeConfig {
    /// Cap on walk steps per sample. Each excursion costs O(1) to sample, so the
    /// cap only guards against unbounded heavy-tailed sums.
    pub max_steps: f64,
}

impl Default for StoppingTimeConfig {
    fn default() -> Self {
        Self { max_steps: 1e18 }
    }
}

/// Empirical law of the stopping time from `n_samples` independent lanes of `base`.
pub fn estimate_stopping_time(
    lambda: f64,
    a: f64,
    n_samples: u64,
    base: RngStream,
    cfg: &StoppingTimeConfig,
) -> Result<StoppingTimeSample> {
    if n_samples == 0 {
        return Err(invalid("n_samples must be >= 1"));
    }
    let draws: Vec<Option<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|i| sample_stopping_time(lambda, a, &mut base.split(i).rng(), cfg.max_steps))
        .collect::<Result<_>>()?;
    let mut times: Vec<f64> = draws.iter().flatten().copied().collect();
    times.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let censored = n_samples - times.len() as u64;
    Ok(StoppingTimeSample { times, censored, total: n_samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_relation() {
        let p = JumpParams::new(0.3, 0.3).unwrap();
        assert_eq!(p.epsilon(), 0.5);
        assert_eq!(JumpParams::new(0.1, 0.0).unwrap().epsilon(), 0.0);
        assert!(JumpParams::new(0.0, 1.0).is_err());
    }

    #[test]
    fn threshold_mean_and_degenerate() {
        let mut rng = RngStream::new(1, 0).rng();
        let n = 1_000_000;
        let mean: f64 = (0..n).map(|_| sample_threshold(2.0, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 2.0).abs() < 0.01, "{mean}");
        assert_eq!(sample_threshold(0.0, &mut rng).unwrap(), 0.0);
        let a = sample_threshold(1.0, &mut RngStream::new(9, 9).rng()).unwrap();
        let b = sample_threshold(1.0, &mut RngStream::new(9, 9).rng()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn survival_asymptotic_matches_exact() {
        let mut s = survival_table()[EXACT_RETURN_TERMS];
        for m in EXACT_RETURN_TERMS + 1..4000 {
            s *= (2 * m - 1) as f64 / (2 * m) as f64;
            let approx = ln_survival_asymptotic(m as f64).exp();
            assert!((approx / s - 1.0).abs() < 1e-12, "m={m}");
        }
    }

    #[test]
    fn first_return_law() {
        // Pr{T1 = 1} = 1/2, Pr{T1 = 3} = 1/8, Pr{T1 > 511} = S(256)
        let mut rng = RngStream::new(5, 0).rng();
        let n = 400_000;
        let (mut one, mut three, mut big) = (0, 0, 0);
        for _ in 0..n {
            let t = sample_first_return(&mut rng);
            assert!(t >= 1.0 && (t as u64) % 2 == 1);
            if t == 1.0 {
                one += 1;
            } else if t == 3.0 {
                three += 1;
            }
            if t > 511.0 {
                big += 1;
            }
        }
        let nf = n as f64;
        let tol = |p: f64| 4.0 * (p * (1.0 - p) / nf).sqrt();
        assert!((one as f64 / nf - 0.5).abs() < tol(0.5));
        assert!((three as f64 / nf - 0.125).abs() < tol(0.125));
        let pb = survival_table()[EXACT_RETURN_TERMS];
        assert!((big as f64 / nf - pb).abs() < tol(pb));
    }

    #[test]
    fn tail_inversion_is_monotone_and_accurate() {
        // the sampled m for u just below S(m) is m itself
        for &m in &[300.0, 1e4, 1e8, 1e12] {
            let s = ln_survival_asymptotic(m);
            let x = {
                let lu = s - 1e-13;
                let mut x: f64 = 1.0 / (PI * lu.exp().powi(2));
                for _ in 0..6 {
                    x *= (2.0 * (ln_survival_asymptotic(x) - lu)).exp();
                }
                x
            };
            assert!((x / m - 1.0).abs() < 1e-9, "{x} {m}");
        }
    }
}
