//! Discrete corrector problems on the traced cluster.
//!
//! The unknown is the corrector χ per direction; the harmonic coordinate is
//! y(z) = z_k − χ(z). Solving for χ rather than y lets the same assembly
//! serve both closures:
//!
//! - Dirichlet ball: χ pinned to zero on the killed layer (the sites adjacent
//!   to open sites beyond the solve radius), which is exactly the affine
//!   boundary condition y = z_k there; boundary pieces of the cluster itself
//!   stay reflecting because their edges are simply absent.
//! - Periodic box: the classic cell problem; wrap edges carry the same
//!   per-edge forcing δ·ê_k and no coordinate ambiguity arises.
//!
//! Conductances use edge-midpoint quadrature: c_e = ⟨A(mid) ê, ê⟩ δ^{d−2}.

pub mod diagnostics;

pub use diagnostics::{
    maximal_inequality_check, sublinearity_profile, MaximalInequalityParams,
    MaximalInequalityReport, SublinearityProfile,
};

use serde::Serialize;

use crate::cluster::ClusterDecomposition;
use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::lattice::{GraphRegion, LatticeGraph};
use crate::linalg::{symmetric_eigenvalues, Matrix, Vector};

const NONE: u32 = u32::MAX;

/// Conductance network over a traced region of the lattice graph.
pub struct DiscreteForm<'g, const D: usize> {
    pub graph: &'g LatticeGraph<D>,
    pub region: GraphRegion,
    pub center: Vector<D>,
    pub radius: f64,
    pub periodic: bool,
    pub delta: f64,
    /// +axis neighbor node per node, `NONE` when the edge is absent.
    plus_node: Vec<[u32; D]>,
    /// Conductance of the +axis edge per node.
    cond: Vec<[f64; D]>,
}

/// Dirichlet-ball assembly: the connected trace of the cluster within
/// `radius` of `center`, with the cut layer marked killed.
pub fn assemble<'g, const D: usize>(
    decomp: &ClusterDecomposition<D>,
    graph: &'g LatticeGraph<D>,
    field: &FieldSpec,
    center: Vector<D>,
    radius: f64,
) -> Result<DiscreteForm<'g, D>> {
    if graph.periodic {
        return Err(Error::invalid(
            "graph is periodic; use assemble_periodic for the cell problem",
        ));
    }
    let sites = graph.euclidean_trace(center, radius)?;
    let in_trace: std::collections::HashSet<usize> = sites.iter().copied().collect();
    let killed: Vec<bool> = sites
        .iter()
        .map(|&s| {
            (0..D).any(|axis| {
                [-1i64, 1]
                    .iter()
                    .any(|&dir| match graph.neighbor(s, axis, dir) {
                        Some(nb) => graph.is_open(nb) && !in_trace.contains(&nb),
                        None => false,
                    })
            })
        })
        .collect();
    let region = GraphRegion::new(sites, killed);
    build_form(decomp, graph, field, region, center, radius, false)
}

/// Periodic cell-problem assembly over the largest wrapped component.
pub fn assemble_periodic<'g, const D: usize>(
    decomp: &ClusterDecomposition<D>,
    graph: &'g LatticeGraph<D>,
    field: &FieldSpec,
) -> Result<DiscreteForm<'g, D>> {
    if !graph.periodic {
        return Err(Error::invalid(
            "assemble_periodic requires a periodic graph",
        ));
    }
    let largest = graph
        .largest_component
        .ok_or_else(|| Error::domain("no open sites in the graph"))?;
    let sites: Vec<usize> = (0..graph.num_sites())
        .filter(|&s| graph.labels[s] == largest)
        .collect();
    let killed = vec![false; sites.len()];
    let region = GraphRegion::new(sites, killed);
    let center = decomp.domain.center();
    build_form(decomp, graph, field, region, center, f64::INFINITY, true)
}

fn build_form<'g, const D: usize>(
    decomp: &ClusterDecomposition<D>,
    graph: &'g LatticeGraph<D>,
    field: &FieldSpec,
    region: GraphRegion,
    center: Vector<D>,
    radius: f64,
    periodic: bool,
) -> Result<DiscreteForm<'g, D>> {
    if region.is_empty() {
        return Err(Error::domain("empty trace region"));
    }
    let delta = graph.delta;
    let scale = delta.powi(D as i32 - 2);
    let n = region.len();
    let mut plus_node = vec![[NONE; D]; n];
    let mut cond = vec![[0.0; D]; n];
    for (node, &site) in region.sites.iter().enumerate() {
        let pos = graph.position(site);
        for axis in 0..D {
            let nb = match graph.neighbor(site, axis, 1) {
                Some(nb) => nb,
                None => continue,
            };
            let m = match region.node_of(nb) {
                Some(m) => m,
                None => continue,
            };
            let mut mid = pos;
            mid[axis] += 0.5 * delta;
            let a = field.evaluate(decomp, mid);
            plus_node[node][axis] = m;
            cond[node][axis] = a[axis][axis] * scale;
        }
    }
    Ok(DiscreteForm {
        graph,
        region,
        center,
        radius,
        periodic,
        delta,
        plus_node,
        cond,
    })
}

impl<'g, const D: usize> DiscreteForm<'g, D> {
    pub fn num_nodes(&self) -> usize {
        self.region.len()
    }

    pub fn node_position(&self, node: usize) -> Vector<D> {
        self.graph.position(self.region.sites[node])
    }

    /// Conductance of the +axis edge at a node (0 when absent).
    pub fn conductance(&self, node: usize, axis: usize) -> f64 {
        self.cond[node][axis]
    }

    pub fn edges_in_axis(&self, axis: usize) -> usize {
        self.plus_node.iter().filter(|p| p[axis] != NONE).count()
    }

    /// Dirichlet energy Σ_e c_e (u_n − u_m)² of a node function.
    pub fn energy(&self, u: &[f64]) -> f64 {
        let mut e = 0.0;
        for n in 0..self.num_nodes() {
            for axis in 0..D {
                let m = self.plus_node[n][axis];
                if m == NONE {
                    continue;
                }
                let d = u[n] - u[m as usize];
                e += self.cond[n][axis] * d * d;
            }
        }
        e
    }

    /// Laplacian apply with killed nodes eliminated (their value is zero).
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let killed = &self.region.killed;
        for n in 0..self.num_nodes() {
            for axis in 0..D {
                let m = self.plus_node[n][axis];
                if m == NONE {
                    continue;
                }
                let m = m as usize;
                let c = self.cond[n][axis];
                let xn = if killed[n] { 0.0 } else { x[n] };
                let xm = if killed[m] { 0.0 } else { x[m] };
                let f = c * (xn - xm);
                if !killed[n] {
                    out[n] += f;
                }
                if !killed[m] {
                    out[m] -= f;
                }
            }
        }
    }

    /// Per-edge forcing of the direction-k cell problem:
    /// (Aχ)_n = δ (c_{n,−k} − c_{n,+k}).
    fn rhs(&self, k: usize) -> Vec<f64> {
        let mut b = vec![0.0; self.num_nodes()];
        let killed = &self.region.killed;
        for n in 0..self.num_nodes() {
            let m = self.plus_node[n][k];
            if m == NONE {
                continue;
            }
            let m = m as usize;
            let c = self.cond[n][k] * self.delta;
            if !killed[n] {
                b[n] -= c;
            }
            if !killed[m] {
                b[m] += c;
            }
        }
        b
    }

    fn jacobi_diag(&self) -> Vec<f64> {
        let mut diag = vec![0.0; self.num_nodes()];
        for n in 0..self.num_nodes() {
            for axis in 0..D {
                let m = self.plus_node[n][axis];
                if m == NONE {
                    continue;
                }
                diag[n] += self.cond[n][axis];
                diag[m as usize] += self.cond[n][axis];
            }
        }
        for (n, d) in diag.iter_mut().enumerate() {
            if self.region.killed[n] || *d == 0.0 {
                *d = 1.0;
            }
        }
        diag
    }
}

#[derive(Debug, Clone)]
pub struct CorrectorSolution {
    pub direction: usize,
    /// Corrector value per region node (zero on killed nodes).
    pub chi: Vec<f64>,
    /// Harmonic coordinate y(z) = z_k − χ(z).
    pub harmonic: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

pub fn default_max_iter(n_nodes: usize) -> usize {
    ((20.0 * (n_nodes as f64).sqrt()) as usize).max(200)
}

/// Preconditioned conjugate gradients for the direction-k corrector.
pub fn solve_harmonic_coordinate<const D: usize>(
    form: &DiscreteForm<D>,
    k: usize,
    tol: f64,
    max_iter: usize,
) -> Result<CorrectorSolution> {
    if k >= D {
        return Err(Error::invalid(format!(
            "direction {k} out of range for d={D}"
        )));
    }
    let n = form.num_nodes();
    let b = form.rhs(k);
    let diag = form.jacobi_diag();
    let deflate = form.periodic;

    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    if deflate {
        let mean = z.iter().sum::<f64>() / n as f64;
        z.iter_mut().for_each(|v| *v -= mean);
    }
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let norm0 = rz.abs().sqrt();
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut residual = 0.0;

    if norm0 > 0.0 {
        let mut ap = vec![0.0; n];
        loop {
            residual = rz.abs().sqrt() / norm0;
            history.push(residual);
            if residual <= tol {
                break;
            }
            if iterations >= max_iter {
                return Err(Error::NonConvergence {
                    iterations,
                    residual,
                    history,
                });
            }
            form.apply(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                return Err(Error::NonConvergence {
                    iterations,
                    residual,
                    history,
                });
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            for i in 0..n {
                z[i] = r[i] / diag[i];
            }
            if deflate {
                let mean = z.iter().sum::<f64>() / n as f64;
                z.iter_mut().for_each(|v| *v -= mean);
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
            iterations += 1;
        }
    }

    for (i, &killed) in form.region.killed.iter().enumerate() {
        if killed {
            x[i] = 0.0;
        }
    }
    if deflate {
        let mean = x.iter().sum::<f64>() / n as f64;
        x.iter_mut().for_each(|v| *v -= mean);
    }
    let harmonic: Vec<f64> = (0..n)
        .map(|node| form.node_position(node)[k] - x[node])
        .collect();
    Ok(CorrectorSolution {
        direction: k,
        chi: x,
        harmonic,
        residual_norm: residual,
        iterations,
    })
}

/// Solve all d directions with shared settings.
pub fn solve_all_directions<const D: usize>(
    form: &DiscreteForm<D>,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<CorrectorSolution>> {
    (0..D)
        .map(|k| solve_harmonic_coordinate(form, k, tol, max_iter))
        .collect()
}

#[derive(Debug, Clone)]
pub struct EffectiveMatrix<const D: usize> {
    pub matrix: Matrix<D>,
    pub eigenvalues: Vector<D>,
    pub positive_definite: bool,
    pub r_used: f64,
    pub delta_used: f64,
    pub n_nodes: usize,
}

/// D_{kℓ} = (2 / |region|) Σ_e c_e (δ ê_k − Δχᵏ)(δ ê_ℓ − Δχˡ), the
/// edge-midpoint quadrature of 2⟨a ∇yᵏ, ∇yˡ⟩ averaged over the trace.
/// The factor two makes free space with a = ½I give standard Brownian
/// covariance I.
pub fn effective_matrix<const D: usize>(
    solutions: &[CorrectorSolution],
    form: &DiscreteForm<D>,
) -> Result<EffectiveMatrix<D>> {
    if solutions.len() != D {
        return Err(Error::invalid(format!(
            "need {D} directional solutions, got {}",
            solutions.len()
        )));
    }
    for (k, s) in solutions.iter().enumerate() {
        if s.direction != k || s.chi.len() != form.num_nodes() {
            return Err(Error::invalid(
                "solutions do not match the form (direction order or node count)",
            ));
        }
    }
    let n = form.num_nodes();
    let delta = form.delta;
    let mut m = [[0.0; D]; D];
    for node in 0..n {
        for axis in 0..D {
            let nb = form.plus_node[node][axis];
            if nb == NONE {
                continue;
            }
            let nb = nb as usize;
            let c = form.cond[node][axis];
            // edge gradient of y^k times δ: δ·1[axis=k] − Δχᵏ
            let mut g = [0.0; D];
            for k in 0..D {
                let dchi = solutions[k].chi[nb] - solutions[k].chi[node];
                g[k] = if axis == k { delta - dchi } else { -dchi };
            }
            for k in 0..D {
                for l in k..D {
                    m[k][l] += c * g[k] * g[l];
                }
            }
        }
    }
    let volume = delta.powi(D as i32) * n as f64;
    for k in 0..D {
        for l in k..D {
            m[k][l] *= 2.0 / volume;
            m[l][k] = m[k][l];
        }
    }
    let eigenvalues = symmetric_eigenvalues(&m);
    Ok(EffectiveMatrix {
        matrix: m,
        eigenvalues,
        positive_definite: eigenvalues[0] > 0.0,
        r_used: form.radius,
        delta_used: delta,
        n_nodes: n,
    })
}

/// Serializable view (row-major matrix, eigenvalues, flags).
#[derive(Debug, Clone, Serialize)]
pub struct EffectiveMatrixReport {
    pub matrix: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub positive_definite: bool,
    pub normalization: String,
    pub r_used: f64,
    pub delta_used: f64,
    pub n_nodes: usize,
}

impl<const D: usize> EffectiveMatrix<D> {
    pub fn report(&self) -> EffectiveMatrixReport {
        EffectiveMatrixReport {
            matrix: self.matrix.iter().map(|row| row.to_vec()).collect(),
            eigenvalues: self.eigenvalues.to_vec(),
            positive_definite: self.positive_definite,
            normalization: "per_cluster_volume".into(),
            r_used: self.r_used,
            delta_used: self.delta_used,
            n_nodes: self.n_nodes,
        }
    }
}

/// Multilinear interpolation of node values over the solver grid, with
/// missing corners dropped from the stencil (weights renormalized).
pub struct NodeInterpolant<'a, const D: usize> {
    pub form: &'a DiscreteForm<'a, D>,
    pub values: &'a [f64],
}

impl<'a, const D: usize> NodeInterpolant<'a, D> {
    pub fn new(form: &'a DiscreteForm<'a, D>, values: &'a [f64]) -> Self {
        assert_eq!(values.len(), form.num_nodes());
        NodeInterpolant { form, values }
    }

    fn corner_node(&self, coord: [i64; D]) -> Option<u32> {
        let graph = self.form.graph;
        let mut c = coord;
        if self.form.periodic {
            for i in 0..D {
                let lo = graph.min[i];
                let m = graph.dims[i] as i64;
                c[i] = lo + (c[i] - lo).rem_euclid(m);
            }
        }
        graph
            .index_of_coord(c)
            .and_then(|s| self.form.region.node_of(s))
    }

    /// Interpolated value; `None` when no stencil corner carries a node.
    pub fn value(&self, x: Vector<D>) -> Option<f64> {
        let delta = self.form.delta;
        let base: [i64; D] = std::array::from_fn(|i| (x[i] / delta).floor() as i64);
        let frac: [f64; D] = std::array::from_fn(|i| x[i] / delta - base[i] as f64);
        let mut wsum = 0.0;
        let mut vsum = 0.0;
        for mask in 0..(1usize << D) {
            let coord: [i64; D] = std::array::from_fn(|i| base[i] + ((mask >> i) & 1) as i64);
            if let Some(node) = self.corner_node(coord) {
                let mut w = 1.0;
                for i in 0..D {
                    w *= if (mask >> i) & 1 == 1 {
                        frac[i]
                    } else {
                        1.0 - frac[i]
                    };
                }
                wsum += w;
                vsum += w * self.values[node as usize];
            }
        }
        if wsum > 1e-12 {
            Some(vsum / wsum)
        } else {
            self.nearest_value(x)
        }
    }

    fn nearest_value(&self, x: Vector<D>) -> Option<f64> {
        let graph = self.form.graph;
        let site = graph.nearest_open_site(x, 3)?;
        self.form
            .region
            .node_of(site)
            .map(|n| self.values[n as usize])
    }

    /// Cell-wise gradient: per axis, the difference of the mean values on the
    /// two corner faces of the stencil.
    pub fn gradient(&self, x: Vector<D>) -> Option<Vector<D>> {
        let delta = self.form.delta;
        let base: [i64; D] = std::array::from_fn(|i| (x[i] / delta).floor() as i64);
        let mut lo_sum = [0.0; D];
        let mut lo_cnt = [0usize; D];
        let mut hi_sum = [0.0; D];
        let mut hi_cnt = [0usize; D];
        let mut any = false;
        for mask in 0..(1usize << D) {
            let coord: [i64; D] = std::array::from_fn(|i| base[i] + ((mask >> i) & 1) as i64);
            if let Some(node) = self.corner_node(coord) {
                any = true;
                let v = self.values[node as usize];
                for i in 0..D {
                    if (mask >> i) & 1 == 1 {
                        hi_sum[i] += v;
                        hi_cnt[i] += 1;
                    } else {
                        lo_sum[i] += v;
                        lo_cnt[i] += 1;
                    }
                }
            }
        }
        if !any {
            return None;
        }
        Some(std::array::from_fn(|i| {
            if hi_cnt[i] > 0 && lo_cnt[i] > 0 {
                (hi_sum[i] / hi_cnt[i] as f64 - lo_sum[i] / lo_cnt[i] as f64) / delta
            } else {
                0.0
            }
        }))
    }
}

/// Max-norm of the node-wise harmonic defect Σ_e c_e (y_n − y_m) relative to
/// the node degree, over interior (non-killed) nodes.
pub fn harmonicity_defect<const D: usize>(
    form: &DiscreteForm<D>,
    solution: &CorrectorSolution,
) -> f64 {
    let n = form.num_nodes();
    let mut defect = vec![0.0; n];
    let mut degree = vec![0.0; n];
    for node in 0..n {
        for axis in 0..D {
            let m = form.plus_node[node][axis];
            if m == NONE {
                continue;
            }
            let m = m as usize;
            let c = form.cond[node][axis];
            let dy = solution.harmonic[node] - solution.harmonic[m];
            defect[node] += c * dy;
            defect[m] -= c * dy;
            degree[node] += c;
            degree[m] += c;
        }
    }
    let mut worst = 0.0f64;
    for node in 0..n {
        if form.region.killed[node] || degree[node] == 0.0 {
            continue;
        }
        worst = worst.max(defect[node].abs() / (degree[node] * form.delta));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{build_clusters, RadiusPair};
    use crate::config::{Configuration, SimBox};
    use crate::lattice::build_delta_graph;
    use approx::assert_relative_eq;

    /// Dense cover of a box: every site open, one component.
    fn covered_config(side: f64, periodic: bool) -> Configuration<2> {
        let mut pts = Vec::new();
        let n = (side / 0.5).round() as usize;
        for i in 0..n {
            for j in 0..n {
                pts.push([0.25 + 0.5 * i as f64, 0.25 + 0.5 * j as f64]);
            }
        }
        let b = SimBox::new([0.0, 0.0], [side, side], periodic).unwrap();
        Configuration::explicit(b, pts, 1).unwrap()
    }

    fn covered_decomp(side: f64, periodic: bool) -> ClusterDecomposition<2> {
        build_clusters(
            &covered_config(side, periodic),
            RadiusPair::new(0.6, 1.2).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn constant_field_gives_uniform_conductances() {
        let d = covered_decomp(8.0, false);
        let g = build_delta_graph(&d, 0.25).unwrap();
        let f = FieldSpec::ConstantHalfIdentity;
        let form = assemble(&d, &g, &f, [4.0, 4.0], 3.0).unwrap();
        for n in 0..form.num_nodes() {
            for axis in 0..2 {
                let c = form.conductance(n, axis);
                assert!(c == 0.0 || c == 0.5, "conductance {c}");
            }
        }
    }

    #[test]
    fn energy_of_constants_is_zero_and_of_coordinates_counts_edges() {
        let d = covered_decomp(8.0, false);
        let g = build_delta_graph(&d, 0.25).unwrap();
        let f = FieldSpec::ConstantHalfIdentity;
        let form = assemble(&d, &g, &f, [4.0, 4.0], 3.0).unwrap();
        let ones = vec![1.0; form.num_nodes()];
        assert_eq!(form.energy(&ones), 0.0);
        for k in 0..2 {
            let coord: Vec<f64> = (0..form.num_nodes())
                .map(|n| form.node_position(n)[k])
                .collect();
            let delta = form.delta;
            let expect = 0.5 * delta.powi(0) * delta * delta * form.edges_in_axis(k) as f64;
            assert_relative_eq!(form.energy(&coord), expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn full_cube_dirichlet_solution_is_exactly_affine() {
        let d = covered_decomp(8.0, false);
        let g = build_delta_graph(&d, 0.25).unwrap();
        let f = FieldSpec::ConstantHalfIdentity;
        let form = assemble(&d, &g, &f, [4.0, 4.0], 3.0).unwrap();
        for k in 0..2 {
            let sol = solve_harmonic_coordinate(&form, k, 1e-8, 1000).unwrap();
            assert_eq!(sol.iterations, 0);
            assert!(sol.chi.iter().all(|&c| c == 0.0));
            for n in 0..form.num_nodes() {
                assert_eq!(sol.harmonic[n], form.node_position(n)[k]);
            }
        }
    }

    #[test]
    fn periodic_free_space_effective_matrix_is_twice_the_coefficient() {
        let d = covered_decomp(8.0, true);
        let g = build_delta_graph(&d, 0.25).unwrap();
        for (field, want) in [
            (FieldSpec::ConstantHalfIdentity, 1.0),
            (
                FieldSpec::TwoPhaseByCoverage {
                    alpha1: 0.35,
                    alpha2: 0.35,
                },
                0.7,
            ),
        ] {
            let form = assemble_periodic(&d, &g, &field).unwrap();
            let sols = solve_all_directions(&form, 1e-10, 2000).unwrap();
            for s in &sols {
                assert!(
                    s.chi.iter().all(|&c| c.abs() < 1e-12),
                    "free-space corrector"
                );
            }
            let eff = effective_matrix(&sols, &form).unwrap();
            for k in 0..2 {
                for l in 0..2 {
                    let expect = if k == l { want } else { 0.0 };
                    assert!(
                        (eff.matrix[k][l] - expect).abs() < 1e-8,
                        "D[{k}][{l}] = {} want {expect}",
                        eff.matrix[k][l]
                    );
                }
            }
            assert!(eff.positive_definite);
        }
    }

    /// Cover a box densely except for a disk-shaped hole.
    fn one_hole_decomp(side: f64, hole: [f64; 2], hole_r: f64) -> ClusterDecomposition<2> {
        let mut pts = Vec::new();
        let n = (side / 0.5).round() as usize;
        for i in 0..n {
            for j in 0..n {
                let p = [0.25 + 0.5 * i as f64, 0.25 + 0.5 * j as f64];
                let dx = p[0] - hole[0];
                let dy = p[1] - hole[1];
                if dx * dx + dy * dy > hole_r * hole_r {
                    pts.push(p);
                }
            }
        }
        let b = SimBox::new([0.0, 0.0], [side, side], false).unwrap();
        let c = Configuration::explicit(b, pts, 1).unwrap();
        build_clusters(&c, RadiusPair::new(0.6, 1.2).unwrap()).unwrap()
    }

    #[test]
    fn harmonicity_defect_is_small_on_perforated_geometry() {
        let d = one_hole_decomp(10.0, [6.5, 5.0], 1.4);
        let g = build_delta_graph(&d, 0.15).unwrap();
        let f = FieldSpec::ConstantHalfIdentity;
        let form = assemble(&d, &g, &f, [4.0, 5.0], 3.5).unwrap();
        let sol = solve_harmonic_coordinate(&form, 0, 1e-9, 5000).unwrap();
        assert!(sol.iterations > 0);
        assert!(sol.residual_norm <= 1e-9);
        let defect = harmonicity_defect(&form, &sol);
        assert!(defect < 1e-7, "defect {defect}");
    }

    #[test]
    fn edge_differences_of_harmonic_match_chi_exactly() {
        let d = one_hole_decomp(10.0, [6.5, 5.0], 1.4);
        let g = build_delta_graph(&d, 0.2).unwrap();
        let form = assemble(&d, &g, &FieldSpec::ConstantHalfIdentity, [4.0, 5.0], 3.0).unwrap();
        let sol = solve_harmonic_coordinate(&form, 1, 1e-8, 5000).unwrap();
        for n in 0..form.num_nodes() {
            // y is the coordinate minus chi identically, by construction
            assert_eq!(sol.harmonic[n], form.node_position(n)[1] - sol.chi[n]);
        }
    }

    #[test]
    fn one_hole_solution_matches_fine_grid_reference() {
        let d = one_hole_decomp(10.0, [6.5, 5.0], 1.4);
        let delta = 0.2;
        let g_coarse = build_delta_graph(&d, delta).unwrap();
        let g_fine = build_delta_graph(&d, delta / 4.0).unwrap();
        let f = FieldSpec::ConstantHalfIdentity;
        let center = [4.0, 5.0];
        let radius = 3.2;
        let form_c = assemble(&d, &g_coarse, &f, center, radius).unwrap();
        let form_f = assemble(&d, &g_fine, &f, center, radius).unwrap();
        let sol_c = solve_harmonic_coordinate(&form_c, 0, 1e-10, 20_000).unwrap();
        let sol_f = solve_harmonic_coordinate(&form_f, 0, 1e-10, 20_000).unwrap();
        let mut worst = 0.0f64;
        for n in 0..form_c.num_nodes() {
            if form_c.region.killed[n] {
                continue;
            }
            let site = form_c.region.sites[n];
            let coord = g_coarse.coord_of(site);
            let fine_coord = [coord[0] * 4, coord[1] * 4];
            if let Some(fsite) = g_fine.index_of_coord(fine_coord) {
                if let Some(fn_) = form_f.region.node_of(fsite) {
                    worst = worst.max((sol_c.harmonic[n] - sol_f.harmonic[fn_ as usize]).abs());
                }
            }
        }
        assert!(worst > 0.0, "grids should share nodes");
        assert!(
            worst < 3.0 * delta,
            "max-norm gap {worst} vs 3δ = {}",
            3.0 * delta
        );
    }

    #[test]
    fn effective_matrix_is_symmetric_and_bounded_on_a_hole_array() {
        let d = one_hole_decomp(8.0, [4.0, 4.0], 1.2);
        let mut cfg = covered_config(8.0, true);
        cfg.points = d.points.iter().copied().collect();
        let b = SimBox::new([0.0, 0.0], [8.0, 8.0], true).unwrap();
        let cfg = Configuration::explicit(b, cfg.points, 1).unwrap();
        let dp = build_clusters(&cfg, RadiusPair::new(0.6, 1.2).unwrap()).unwrap();
        let g = build_delta_graph(&dp, 0.125).unwrap();
        let f = FieldSpec::ConstantHalfIdentity;
        let form = assemble_periodic(&dp, &g, &f).unwrap();
        let sols = solve_all_directions(&form, 1e-9, 20_000).unwrap();
        let eff = effective_matrix(&sols, &form).unwrap();
        assert_eq!(eff.matrix[0][1], eff.matrix[1][0]);
        let (_, lam_max) = f.ellipticity();
        assert!(eff.eigenvalues[0] > 0.0);
        assert!(eff.eigenvalues[1] <= 2.0 * lam_max + 1e-9);
        assert!(eff.positive_definite);
        // the hole slows diffusion below free space
        assert!(eff.matrix[0][0] < 1.0);
    }

    #[test]
    fn effective_matrix_refinement_is_consistent() {
        let b = SimBox::new([0.0, 0.0], [8.0, 8.0], true).unwrap();
        let d0 = one_hole_decomp(8.0, [4.0, 4.0], 1.2);
        let cfg = Configuration::explicit(b, d0.points.clone(), 1).unwrap();
        let d = build_clusters(&cfg, RadiusPair::new(0.6, 1.2).unwrap()).unwrap();
        let f = FieldSpec::ConstantHalfIdentity;
        let mut mats = Vec::new();
        for delta in [0.125, 0.0625] {
            let g = build_delta_graph(&d, delta).unwrap();
            let form = assemble_periodic(&d, &g, &f).unwrap();
            let sols = solve_all_directions(&form, 1e-9, 40_000).unwrap();
            mats.push(effective_matrix(&sols, &form).unwrap().matrix);
        }
        for k in 0..2 {
            let rel = (mats[0][k][k] - mats[1][k][k]).abs() / mats[1][k][k];
            assert!(rel <= 0.05, "refinement gap {rel} on axis {k}");
        }
    }

    #[test]
    fn exhausted_iterations_report_the_residual_history() {
        let d = one_hole_decomp(10.0, [6.5, 5.0], 1.4);
        let g = build_delta_graph(&d, 0.15).unwrap();
        let form = assemble(&d, &g, &FieldSpec::ConstantHalfIdentity, [4.0, 5.0], 3.5).unwrap();
        match solve_harmonic_coordinate(&form, 0, 1e-12, 2) {
            Err(crate::Error::NonConvergence {
                iterations,
                residual,
                history,
            }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 1e-12);
                assert_eq!(history.len(), 3);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn mismatched_solutions_are_rejected() {
        let d = covered_decomp(8.0, false);
        let g = build_delta_graph(&d, 0.25).unwrap();
        let form = assemble(&d, &g, &FieldSpec::ConstantHalfIdentity, [4.0, 4.0], 3.0).unwrap();
        let sol = solve_harmonic_coordinate(&form, 0, 1e-8, 100).unwrap();
        assert!(effective_matrix(&[sol], &form).is_err());
    }
}
