//! Discrete Brownian self-transport operator and everything built on it.
//!
//! Boundary elements are the working links. For link `j` with inward bulk site
//! `y_j`, `Q_jk = [(2d I - A)^{-1}]_{y_j, y_k}` is the probability that a walk
//! started at `y_j` leaves the bulk through link `k`. With surface weights `W`
//! and scale `c = a^{d-2}`, `M = c W^{-1} (I - Q)` acts on densities and is
//! self-adjoint for `<u, v>_W = sum_k w_k u_k v_k`; `S = W^{1/2} M W^{-1/2}`
//! is its symmetric form. On uniform weights `a^{d-1}`, `M = (I - Q) / a`.

use crate::error::{invalid, PrbmError, Result};
use crate::geometry::{LatticeDomain, Neighbor, Tag};
use crate::rng::RngStream;
use crate::walkers::{run_lattice_walker, Caps, Fate};
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt as SparseLlt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Right-hand sides per sparse solve batch.
const BATCH: usize = 32;

/// Sparse Cholesky factor of the bulk operator `2d I - A` (walk killed on every link).
pub struct LatticeLaplacian {
    llt: SparseLlt<usize, f64>,
    n: usize,
}

impl LatticeLaplacian {
    pub fn new(dom: &LatticeDomain) -> Result<Self> {
        Self::with_diagonal_shift(dom, &[])
    }

    /// Factors `2d I - A - diag(shift)`; `shift` may be shorter than the bulk.
    pub fn with_diagonal_shift(dom: &LatticeDomain, shift: &[f64]) -> Result<Self> {
        let n = dom.n_bulk();
        let deg = dom.degree();
        let mut trip = Vec::with_capacity(n * (deg + 1));
        for i in 0..n {
            let s = shift.get(i).copied().unwrap_or(0.0);
            trip.push(Triplet::new(i, i, deg as f64 - s));
            for dir in 0..deg {
                if let Neighbor::Bulk(j) = dom.neighbor(i, dir) {
                    // only the lower triangle is read; periodic self-loops land on the diagonal
                    if j <= i {
                        trip.push(Triplet::new(i, j, -1.0));
                    }
                }
            }
        }
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip)
            .map_err(|e| PrbmError::SolveFailure(format!("sparse assembly: {e:?}")))?;
        let llt = a
            .sp_cholesky(Side::Lower)
            .map_err(|e| PrbmError::SingularSystem(format!("bulk operator is not positive definite: {e:?}")))?;
        Ok(Self { llt, n })
    }

    pub fn solve_in_place(&self, rhs: &mut Mat<f64>) {
        self.llt.solve_in_place(rhs.as_mut());
    }

    /// Rows `rows` of the columns `cols` of the inverse.
    pub fn inverse_block(&self, rows: &[usize], cols: &[usize]) -> Mat<f64> {
        let blocks: Vec<(usize, Mat<f64>)> = cols
            .par_chunks(BATCH)
            .enumerate()
            .map(|(b, chunk)| {
                let mut x = Mat::<f64>::zeros(self.n, chunk.len());
                for (c, &col) in chunk.iter().enumerate() {
                    x[(col, c)] = 1.0;
                }
                self.solve_in_place(&mut x);
                let g = Mat::from_fn(rows.len(), chunk.len(), |i, c| x[(rows[i], c)]);
                (b * BATCH, g)
            })
            .collect();
        let mut out = Mat::<f64>::zeros(rows.len(), cols.len());
        for (off, g) in blocks {
            for c in 0..g.ncols() {
                for i in 0..rows.len() {
                    out[(i, off + c)] = g[(i, c)];
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SelfTransportMatrix {
    pub q: Mat<f64>,
    pub mesh: f64,
    pub dim: usize,
    /// Link indices of the working elements, in matrix order.
    pub links: Vec<usize>,
    /// Surface weight of each working element.
    pub weights: Vec<f64>,
    pub has_source: bool,
}

impl SelfTransportMatrix {
    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn max_asymmetry(&self) -> f64 {
        max_asymmetry(&self.q)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.len()).map(|i| (0..self.len()).map(|j| self.q[(i, j)]).sum()).collect()
    }

    pub fn min_entry(&self) -> f64 {
        let n = self.len();
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| self.q[(i, j)]).fold(f64::INFINITY, f64::min)
    }
}

pub fn max_asymmetry(m: &Mat<f64>) -> f64 {
    let n = m.nrows();
    let mut d: f64 = 0.0;
    for i in 0..n {
        for j in 0..i {
            d = d.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    d
}

fn working_layout(dom: &LatticeDomain) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let links = dom.working_links();
    if links.is_empty() {
        return Err(invalid("domain has no working boundary"));
    }
    // unique inward sites and, per link, its column in the unique list
    let mut slot = HashMap::new();
    let mut sites = Vec::new();
    let mut col = Vec::with_capacity(links.len());
    for &k in &links {
        let y = dom.links[k].inward;
        let c = *slot.entry(y).or_insert_with(|| {
            sites.push(y);
            sites.len() - 1
        });
        col.push(c);
    }
    Ok((links, sites, col))
}

/// Exact `Q` by one sparse factorization and one solve per distinct inward site.
pub fn build_q(dom: &LatticeDomain) -> Result<SelfTransportMatrix> {
    let (links, sites, col) = working_layout(dom)?;
    let lap = LatticeLaplacian::new(dom)?;
    let g = lap.inverse_block(&sites, &sites);
    let n = links.len();
    let q = Mat::from_fn(n, n, |j, k| g[(col[j], col[k])]);
    if !q.as_ref().is_all_finite() {
        return Err(PrbmError::SingularSystem("self-transport matrix is not finite".into()));
    }
    Ok(SelfTransportMatrix {
        q,
        mesh: dom.mesh,
        dim: dom.dim,
        weights: links.iter().map(|&k| dom.links[k].weight).collect(),
        links,
        has_source: dom.has_source(),
    })
}

/// Monte Carlo estimate of `Q` with `n_per_row` walkers from each inward site.
pub fn build_q_monte_carlo(dom: &LatticeDomain, n_per_row: u64, base: RngStream) -> Result<Mat<f64>> {
    let links = dom.working_links();
    let index: HashMap<usize, usize> = links.iter().enumerate().map(|(i, &k)| (k, i)).collect();
    let n = links.len();
    let caps = Caps::default();
    let rows: Vec<Vec<f64>> = links
        .par_iter()
        .enumerate()
        .map(|(j, &k)| {
            let mut counts = vec![0u64; n];
            let row = base.split(j as u64);
            for w in 0..n_per_row {
                let rec = run_lattice_walker(dom, dom.links[k].inward, 0.0, row.split(w), &caps)?;
                if let Fate::AbsorbedOnWorking { element: Some(e), .. } = rec.fate {
                    counts[index[&e]] += 1;
                }
            }
            Ok(counts.iter().map(|&c| c as f64 / n_per_row as f64).collect())
        })
        .collect::<Result<_>>()?;
    Ok(Mat::from_fn(n, n, |i, j| rows[i][j]))
}

/// Discrete Dirichlet-to-Neumann operator in both forms.
#[derive(Debug, Clone)]
pub struct DtnOperator {
    /// `M = c W^{-1} (I - Q)`, acting on densities.
    pub m: Mat<f64>,
    /// `S = c W^{-1/2} (I - Q) W^{-1/2}`, symmetric.
    pub s: Mat<f64>,
    pub weights: Vec<f64>,
    pub mesh: f64,
    pub dim: usize,
    pub has_source: bool,
}

impl DtnOperator {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `<u, v>_W`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.weights.iter().zip(u).zip(v).map(|((w, a), b)| w * a * b).sum()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n).map(|i| (0..n).map(|j| self.m[(i, j)] * u[j]).sum()).collect()
    }

    /// Solves `(I + Lambda M) x = f`.
    pub fn resolve(&self, lambda: f64, f: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        let llt = self.shifted_llt(lambda)?;
        let mut z = Mat::from_fn(n, 1, |i, _| self.weights[i].sqrt() * f[i]);
        llt.solve_in_place(z.as_mut());
        Ok((0..n).map(|i| z[(i, 0)] / self.weights[i].sqrt()).collect())
    }

    fn shifted_llt(&self, lambda: f64) -> Result<faer::linalg::solvers::Llt<f64>> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(invalid(format!("Lambda must be finite and >= 0, got {lambda}")));
        }
        let n = self.len();
        let a = Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } + lambda * self.s[(i, j)]);
        a.llt(Side::Lower)
            .map_err(|e| PrbmError::SolveFailure(format!("I + Lambda M is not positive definite at Lambda = {lambda}: {e:?}")))
    }
}

pub fn build_m(q: &SelfTransportMatrix) -> DtnOperator {
    let c = q.mesh.powi(q.dim as i32 - 2);
    let n = q.len();
    let w = &q.weights;
    let iq = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 } - q.q[(i, j)];
    DtnOperator {
        m: Mat::from_fn(n, n, |i, j| c * iq(i, j) / w[i]),
        s: Mat::from_fn(n, n, |i, j| c * iq(i, j) / (w[i] * w[j]).sqrt()),
        weights: w.clone(),
        mesh: q.mesh,
        dim: q.dim,
        has_source: q.has_source,
    }
}

/// `T_Lambda = (I + Lambda M)^{-1}`, acting on densities.
pub fn spreading_operator(op: &DtnOperator, lambda: f64) -> Result<Mat<f64>> {
    let n = op.len();
    let llt = op.shifted_llt(lambda)?;
    if lambda == 0.0 {
        return Ok(Mat::identity(n, n));
    }
    let mut x = Mat::from_fn(n, n, |i, j| if i == j { op.weights[i].sqrt() } else { 0.0 });
    llt.solve_in_place(x.as_mut());
    let t = Mat::from_fn(n, n, |i, j| x[(i, j)] / op.weights[i].sqrt());
    if !t.as_ref().is_all_finite() {
        return Err(PrbmError::SolveFailure("spreading operator is not finite".into()));
    }
    Ok(t)
}

/// Partial sum `(1 - eps) sum_{n <= terms} (eps Q)^n`, the reflection series of `T`
/// on uniform weights.
pub fn spreading_series(q: &SelfTransportMatrix, eps: f64, terms: usize) -> Mat<f64> {
    let n = q.len();
    let eq = Mat::from_fn(n, n, |i, j| eps * q.q[(i, j)]);
    let mut power = Mat::<f64>::identity(n, n);
    let mut sum = Mat::<f64>::identity(n, n);
    for _ in 0..terms {
        power = &power * &eq;
        sum += &power;
    }
    Mat::from_fn(n, n, |i, j| (1.0 - eps) * sum[(i, j)])
}

/// Hitting probabilities on the working links for walkers emitted uniformly
/// from the source links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingDistribution {
    /// Unnormalized hitting probabilities; the deficit from 1 returns to the source.
    pub raw: Vec<f64>,
    /// `P_0 = raw / sum(raw)`.
    pub p0: Vec<f64>,
    /// `phi_0^h = P_0 / w`, unit discrete integral.
    pub density: Vec<f64>,
    pub links: Vec<usize>,
}

impl HittingDistribution {
    pub fn working_mass(&self) -> f64 {
        self.raw.iter().sum()
    }
}

pub fn hitting_distribution(dom: &LatticeDomain) -> Result<HittingDistribution> {
    let lap = LatticeLaplacian::new(dom)?;
    hitting_distribution_with(dom, &lap)
}

pub fn hitting_distribution_with(dom: &LatticeDomain, lap: &LatticeLaplacian) -> Result<HittingDistribution> {
    let src = dom.source_links();
    if src.is_empty() {
        return Err(invalid("hitting distribution needs a source"));
    }
    let links = dom.working_links();
    if links.is_empty() {
        return Err(invalid("domain has no working boundary"));
    }
    let mut b = Mat::<f64>::zeros(dom.n_bulk(), 1);
    for &s in &src {
        b[(dom.links[s].inward, 0)] += 1.0;
    }
    lap.solve_in_place(&mut b);
    let raw: Vec<f64> = links.iter().map(|&k| b[(dom.links[k].inward, 0)] / src.len() as f64).collect();
    let mass: f64 = raw.iter().sum();
    if !(mass > 0.0) {
        return Err(PrbmError::SingularSystem("no hitting mass reaches the working boundary".into()));
    }
    let p0: Vec<f64> = raw.iter().map(|r| r / mass).collect();
    let density = p0.iter().zip(&links).map(|(p, &k)| p / dom.links[k].weight).collect();
    Ok(HittingDistribution { raw, p0, density, links })
}

/// `P_Lambda = W T W^{-1} P_0`, the absorption probabilities after partial reflections.
pub fn absorption_distribution(p0: &[f64], t: &Mat<f64>, weights: &[f64]) -> Result<Vec<f64>> {
    let n = p0.len();
    if t.nrows() != n || t.ncols() != n || weights.len() != n {
        return Err(invalid("dimension mismatch between P_0 and T"));
    }
    // w_i / w_j is exactly 1 on the diagonal, so T = I returns P_0 bit for bit
    Ok((0..n).map(|i| (0..n).map(|j| t[(i, j)] * (weights[i] / weights[j]) * p0[j]).sum()).collect())
}

#[derive(Debug, Clone)]
pub struct DtnSpectrum {
    /// Ascending eigenvalues of `M`.
    pub mu: Vec<f64>,
    /// Orthonormal eigenvectors of `S` (columns); `W^{-1/2} V` are the `W`-orthonormal modes of `M`.
    pub v: Mat<f64>,
    /// `F_alpha = <phi_0^h, W^{-1/2} V_alpha>_W^2`.
    pub f: Vec<f64>,
    /// `||phi_0^h||_W^2`.
    pub norm2: f64,
    pub weights: Vec<f64>,
}

/// Dense symmetric eigendecomposition with the weights of `density`. Without a
/// density the uniform unit-integral density is used.
pub fn spectrum(op: &DtnOperator, density: Option<&[f64]>) -> Result<DtnSpectrum> {
    let n = op.len();
    let total_w: f64 = op.weights.iter().sum();
    let g: Vec<f64> = match density {
        Some(d) if d.len() == n => d.to_vec(),
        Some(_) => return Err(invalid("density length does not match the operator")),
        None => vec![1.0 / total_w; n],
    };
    let evd = op
        .s
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| PrbmError::EigenFailure(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let mu: Vec<f64> = (0..n).map(|i| s[i]).collect();
    let sg: Vec<f64> = (0..n).map(|i| op.weights[i].sqrt() * g[i]).collect();
    let f = (0..n)
        .map(|a| {
            let p: f64 = (0..n).map(|i| sg[i] * u[(i, a)]).sum();
            p * p
        })
        .collect();
    Ok(DtnSpectrum { mu, v: u.to_owned(), f, norm2: op.inner(&g, &g), weights: op.weights.clone() })
}

impl DtnSpectrum {
    pub fn max_orthonormality_error(&self) -> f64 {
        let n = self.v.ncols();
        let g = self.v.transpose() * &self.v;
        let mut e: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                e = e.max((g[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
        e
    }

    /// `T_Lambda` rebuilt as `W^{-1/2} V diag(1 / (1 + Lambda mu)) V^T W^{1/2}`.
    pub fn reconstruct_spreading(&self, lambda: f64) -> Mat<f64> {
        let n = self.mu.len();
        let scaled = Mat::from_fn(n, n, |i, a| self.v[(i, a)] / (1.0 + lambda * self.mu[a]));
        let core = &scaled * self.v.transpose();
        Mat::from_fn(n, n, |i, j| core[(i, j)] * (self.weights[j] / self.weights[i]).sqrt())
    }
}

/// `Z_cell(Lambda) = C0 / <1, D C0 M T 1>_W`, the inverse total flux per unit C0.
pub fn cell_impedance(op: &DtnOperator, lambda: f64, diffusion: f64) -> Result<f64> {
    let ones = vec![1.0; op.len()];
    let x = op.resolve(lambda, &ones)?;
    let flux = diffusion * op.inner(&ones, &op.apply(&x));
    if !(flux > 0.0) {
        return Err(PrbmError::SingularSystem("zero total flux: the domain needs a source".into()));
    }
    Ok(1.0 / flux)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpedanceRow {
    pub lambda: f64,
    /// Spectral sum `(Lambda / D) sum F / (1 + Lambda mu)`.
    pub z: f64,
    pub z_cell: f64,
    pub z_cell0: f64,
    /// `(1/Z - 1/Z_cell(0))^{-1}`.
    pub z_sp: f64,
    /// `Z_cell(Lambda) - Z_cell(0)`.
    pub z_sp_difference: f64,
}

impl ImpedanceRow {
    pub fn route_mismatch(&self) -> f64 {
        if self.z_sp == 0.0 && self.z_sp_difference == 0.0 {
            0.0
        } else {
            (self.z_sp - self.z_sp_difference).abs() / self.z_sp.abs().max(self.z_sp_difference.abs())
        }
    }
}

/// Impedance over `grid` by the spectral route and the direct resolvent route.
/// `sp` must carry the weights of `phi_0^h = M 1 / <1, M 1>_W`.
pub fn impedance_curve(sp: &DtnSpectrum, op: &DtnOperator, grid: &[f64], diffusion: f64) -> Result<Vec<ImpedanceRow>> {
    if !(diffusion > 0.0) {
        return Err(invalid("D must be > 0"));
    }
    let z_cell0 = cell_impedance(op, 0.0, diffusion)?;
    grid.iter()
        .map(|&lambda| {
            let z = (lambda / diffusion)
                * sp.f.iter().zip(&sp.mu).map(|(f, m)| f / (1.0 + lambda * m)).sum::<f64>();
            let z_cell = cell_impedance(op, lambda, diffusion)?;
            let z_sp = if z == 0.0 { 0.0 } else { 1.0 / (1.0 / z - 1.0 / z_cell0) };
            Ok(ImpedanceRow { lambda, z, z_cell, z_cell0, z_sp, z_sp_difference: z_cell - z_cell0 })
        })
        .collect()
}

/// `phi_0^h = M 1 / <1, M 1>_W`, the normalized Dirichlet flux density.
pub fn dirichlet_density(op: &DtnOperator) -> Result<Vec<f64>> {
    let ones = vec![1.0; op.len()];
    let m1 = op.apply(&ones);
    let total = op.inner(&ones, &m1);
    if !(total > 0.0) {
        return Err(PrbmError::SingularSystem("zero Dirichlet flux: the domain needs a source".into()));
    }
    Ok(m1.iter().map(|v| v / total).collect())
}

/// Total flux from the source (held at `c0`) into the working boundary under the
/// discrete Robin condition, by one sparse solve of the concentration field.
pub fn robin_flux(dom: &LatticeDomain, lambda: f64, diffusion: f64, c0: f64) -> Result<f64> {
    if !dom.has_source() {
        return Err(invalid("Robin flux needs a source"));
    }
    let links = dom.working_links();
    let mut shift = vec![0.0; dom.n_bulk()];
    for &k in &links {
        shift[dom.links[k].inward] += dom.link_epsilon(k, lambda);
    }
    let lap = LatticeLaplacian::with_diagonal_shift(dom, &shift)?;
    let mut c = Mat::<f64>::zeros(dom.n_bulk(), 1);
    for (k, l) in dom.links.iter().enumerate() {
        if dom.link_tag(k) == Tag::Source {
            c[(l.inward, 0)] += c0;
        }
    }
    lap.solve_in_place(&mut c);
    let scale = dom.mesh.powi(dom.dim as i32 - 2);
    Ok(links
        .iter()
        .map(|&k| diffusion * scale * (1.0 - dom.link_epsilon(k, lambda)) * c[(dom.links[k].inward, 0)])
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corridor() -> LatticeDomain {
        // three bulk sites in a row, working on every side
        LatticeDomain::boxed(&[3, 1], 1.0, &[(Tag::Working, Tag::Working), (Tag::Working, Tag::Working)]).unwrap()
    }

    #[test]
    fn corridor_matches_hand_solve() {
        let dom = corridor();
        let q = build_q(&dom).unwrap();
        // inverse of the 3x3 tridiagonal (4, -1)
        let inv = [[15.0, 4.0, 1.0], [4.0, 16.0, 4.0], [1.0, 4.0, 15.0]].map(|r| r.map(|v| v / 56.0));
        for (j, &kj) in q.links.iter().enumerate() {
            for (k, &kk) in q.links.iter().enumerate() {
                let expect = inv[dom.links[kj].inward][dom.links[kk].inward];
                assert!((q.q[(j, k)] - expect).abs() < 1e-14);
            }
        }
        for s in q.row_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn corridor_spectrum_has_zero_mode() {
        let q = build_q(&corridor()).unwrap();
        let op = build_m(&q);
        let sp = spectrum(&op, None).unwrap();
        assert!(sp.mu[0].abs() < 1e-10);
        assert!(sp.max_orthonormality_error() < 1e-10);
        let sum: f64 = sp.f.iter().sum();
        assert!((sum - sp.norm2).abs() < 1e-12);
    }

    #[test]
    fn resolvent_and_series_agree() {
        let dom = LatticeDomain::boxed(&[4, 4], 0.25, &[(Tag::Working, Tag::Working), (Tag::Working, Tag::Source)]).unwrap();
        let q = build_q(&dom).unwrap();
        let op = build_m(&q);
        // eps = 0.9 needs Lambda = 9 a
        let t = spreading_operator(&op, 9.0 * 0.25).unwrap();
        let s = spreading_series(&q, 0.9, 400);
        for i in 0..q.len() {
            for j in 0..q.len() {
                assert!((t[(i, j)] - s[(i, j)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn bad_inputs() {
        let dom = LatticeDomain::boxed(&[2, 2], 0.5, &[(Tag::Source, Tag::Source), (Tag::Source, Tag::Source)]).unwrap();
        assert!(build_q(&dom).is_err());
        let op = build_m(&build_q(&corridor()).unwrap());
        assert!(spreading_operator(&op, -1.0).is_err());
        assert!(hitting_distribution(&corridor()).is_err());
    }
}
