//! Site percolation on δℤᵈ approximating the enlarged cluster.
//!
//! A site z is open when its cube G(z,δ) lies inside a single selected ball;
//! the farthest point of a cube from any center is a corner, so this test is
//! exact for "cube inside one ball" and conservative for "cube inside the
//! union" — openness only shrinks, which is the safe direction for the
//! lower-bound diagnostics built on top.

pub mod crossing;
pub mod scans;
pub mod sobolev;

use std::collections::VecDeque;

use crate::cluster::ClusterDecomposition;
use crate::error::{Error, Result};
use crate::linalg::Vector;

pub use crossing::{
    crossing_failure_scan, event_r, event_r0, is_crossing, CrossingScanRow, CubeSpec,
};
pub use scans::{
    euclidean_ball_ratio, isoperimetric_scan, surface_measure, volume_regularity_scan,
    GeometryReport, IsoKnobs, IsoSample, VolumeScan,
};
pub use sobolev::{sobolev_check, GraphRegion, SobolevParams, SobolevReport};

pub const CLOSED: u32 = u32::MAX;

/// Nearest-neighbor graph over the open sites of δℤᵈ inside the box.
pub struct LatticeGraph<const D: usize> {
    pub delta: f64,
    pub periodic: bool,
    /// Minimal integer site coordinate per axis.
    pub min: [i64; D],
    /// Number of sites per axis.
    pub dims: [usize; D],
    open: Vec<bool>,
    /// Component label per site; `CLOSED` on closed sites.
    pub labels: Vec<u32>,
    pub component_sizes: Vec<usize>,
    pub largest_component: Option<u32>,
    n_open: usize,
}

/// Which balls define openness: the selected percolation component (the
/// enlarged cluster proper) or every ball of the configuration (used by the
/// renormalization-event statistics where small boxes rarely percolate).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpennessSource {
    Selected,
    AllBalls,
}

pub fn build_delta_graph<const D: usize>(
    decomp: &ClusterDecomposition<D>,
    delta: f64,
) -> Result<LatticeGraph<D>> {
    LatticeGraph::build(decomp, delta, OpennessSource::Selected)
}

impl<const D: usize> LatticeGraph<D> {
    pub fn build(
        decomp: &ClusterDecomposition<D>,
        delta: f64,
        source: OpennessSource,
    ) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::invalid("delta must be positive"));
        }
        let rho_prime = decomp.radii.rho_prime;
        if delta > rho_prime {
            return Err(Error::invalid(format!(
                "delta {delta} exceeds rho_prime {rho_prime}; no site could be open"
            )));
        }
        let domain = &decomp.domain;
        let periodic = domain.periodic;
        let mut min = [0i64; D];
        let mut dims = [0usize; D];
        for i in 0..D {
            if periodic {
                let m = domain.side(i) / delta;
                if (m - m.round()).abs() > 1e-9 * m.max(1.0) {
                    return Err(Error::invalid(format!(
                        "periodic box side on axis {i} is not a multiple of delta"
                    )));
                }
                min[i] = ((domain.lower[i] + 0.5 * delta) / delta).ceil() as i64;
                dims[i] = m.round() as usize;
            } else {
                let lo = ((domain.lower[i] + 0.5 * delta) / delta).ceil() as i64;
                let hi = ((domain.upper[i] - 0.5 * delta) / delta).floor() as i64;
                if hi < lo {
                    return Err(Error::invalid("box too small for any lattice site"));
                }
                min[i] = lo;
                dims[i] = (hi - lo + 1) as usize;
            }
        }
        let total: usize = dims.iter().product();
        let mut graph = LatticeGraph {
            delta,
            periodic,
            min,
            dims,
            open: vec![false; total],
            labels: vec![CLOSED; total],
            component_sizes: Vec::new(),
            largest_component: None,
            n_open: 0,
        };
        graph.mark_open(decomp, source);
        graph.label_components();
        Ok(graph)
    }

    /// Open iff all corners of the site cube lie in one ball; the farthest
    /// corner from center x has distance² Σᵢ (|zᵢ−xᵢ| + δ/2)².
    fn mark_open(&mut self, decomp: &ClusterDecomposition<D>, source: OpennessSource) {
        let delta = self.delta;
        let half = 0.5 * delta;
        let rp = decomp.radii.rho_prime;
        let rp2 = rp * rp;
        let mark_for = |open: &mut Vec<bool>, this: &Self, x: Vector<D>| {
            let mut lo = [0i64; D];
            let mut hi = [0i64; D];
            for i in 0..D {
                lo[i] = (((x[i] - rp) / delta).floor() as i64).max(this.min[i]);
                hi[i] = (((x[i] + rp) / delta).ceil() as i64)
                    .min(this.min[i] + this.dims[i] as i64 - 1);
                if hi[i] < lo[i] {
                    return;
                }
            }
            let mut k = lo;
            'iter: loop {
                let mut d2 = 0.0;
                for i in 0..D {
                    let v = (k[i] as f64 * delta - x[i]).abs() + half;
                    d2 += v * v;
                }
                if d2 < rp2 {
                    let idx = this.index_of_coord_unchecked(k);
                    open[idx] = true;
                }
                for axis in (0..D).rev() {
                    k[axis] += 1;
                    if k[axis] <= hi[axis] {
                        continue 'iter;
                    }
                    k[axis] = lo[axis];
                    if axis == 0 {
                        break 'iter;
                    }
                }
            }
        };
        let mut open = std::mem::take(&mut self.open);
        match source {
            OpennessSource::Selected => {
                for &i in &decomp.index_set {
                    mark_for(&mut open, self, decomp.points[i as usize]);
                }
            }
            OpennessSource::AllBalls => {
                for &p in &decomp.points {
                    mark_for(&mut open, self, p);
                }
            }
        }
        self.n_open = open.iter().filter(|&&o| o).count();
        self.open = open;
    }

    fn label_components(&mut self) {
        let total = self.open.len();
        let mut labels = vec![CLOSED; total];
        let mut sizes = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..total {
            if !self.open[start] || labels[start] != CLOSED {
                continue;
            }
            let comp = sizes.len() as u32;
            let mut size = 0usize;
            labels[start] = comp;
            queue.push_back(start);
            while let Some(s) = queue.pop_front() {
                size += 1;
                for axis in 0..D {
                    for dir in [-1i64, 1] {
                        if let Some(nb) = self.neighbor(s, axis, dir) {
                            if self.open[nb] && labels[nb] == CLOSED {
                                labels[nb] = comp;
                                queue.push_back(nb);
                            }
                        }
                    }
                }
            }
            sizes.push(size);
        }
        self.largest_component = (0..sizes.len()).max_by_key(|&c| sizes[c]).map(|c| c as u32);
        self.labels = labels;
        self.component_sizes = sizes;
    }

    pub fn num_sites(&self) -> usize {
        self.open.len()
    }

    pub fn num_open(&self) -> usize {
        self.n_open
    }

    pub fn is_open(&self, idx: usize) -> bool {
        self.open[idx]
    }

    pub fn coord_of(&self, mut idx: usize) -> [i64; D] {
        let mut c = [0i64; D];
        for i in (0..D).rev() {
            c[i] = self.min[i] + (idx % self.dims[i]) as i64;
            idx /= self.dims[i];
        }
        c
    }

    fn index_of_coord_unchecked(&self, c: [i64; D]) -> usize {
        let mut idx = 0usize;
        for i in 0..D {
            idx = idx * self.dims[i] + (c[i] - self.min[i]) as usize;
        }
        idx
    }

    pub fn index_of_coord(&self, c: [i64; D]) -> Option<usize> {
        for i in 0..D {
            if c[i] < self.min[i] || c[i] >= self.min[i] + self.dims[i] as i64 {
                return None;
            }
        }
        Some(self.index_of_coord_unchecked(c))
    }

    pub fn position(&self, idx: usize) -> Vector<D> {
        let c = self.coord_of(idx);
        std::array::from_fn(|i| c[i] as f64 * self.delta)
    }

    /// Site whose cube contains `p` (nearest lattice point).
    pub fn site_at(&self, p: Vector<D>) -> Option<usize> {
        let c: [i64; D] = std::array::from_fn(|i| (p[i] / self.delta).round() as i64);
        self.index_of_coord(c)
    }

    /// Neighbor in the given axis direction; wraps when periodic.
    pub fn neighbor(&self, idx: usize, axis: usize, dir: i64) -> Option<usize> {
        let mut c = self.coord_of(idx);
        c[axis] += dir;
        if self.periodic {
            let lo = self.min[axis];
            let m = self.dims[axis] as i64;
            if c[axis] < lo {
                c[axis] += m;
            } else if c[axis] >= lo + m {
                c[axis] -= m;
            }
            Some(self.index_of_coord_unchecked(c))
        } else {
            self.index_of_coord(c)
        }
    }

    /// Closed graph ball in the graph metric: sites within distance ≤ r.
    pub fn graph_ball(&self, site: usize, r_graph: usize) -> Result<Vec<usize>> {
        if !self.open[site] {
            return Err(Error::domain("graph_ball: site is closed"));
        }
        let mut dist = std::collections::HashMap::new();
        dist.insert(site, 0usize);
        let mut queue = VecDeque::new();
        queue.push_back(site);
        let mut out = vec![site];
        while let Some(s) = queue.pop_front() {
            let d = dist[&s];
            if d == r_graph {
                continue;
            }
            for axis in 0..D {
                for dir in [-1i64, 1] {
                    if let Some(nb) = self.neighbor(s, axis, dir) {
                        if self.open[nb] && !dist.contains_key(&nb) {
                            dist.insert(nb, d + 1);
                            out.push(nb);
                            queue.push_back(nb);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Open sites of the connected trace within Euclidean radius `r` of
    /// `center`, found by BFS from the site at `center`.
    pub fn euclidean_trace(&self, center: Vector<D>, r: f64) -> Result<Vec<usize>> {
        let seed = self
            .nearest_open_site(center, 2)
            .ok_or_else(|| Error::domain("euclidean_trace: no open site near center"))?;
        let r2 = r * r;
        let inside = |s: usize| crate::linalg::dist_sq(self.position(s), center) < r2;
        if !inside(seed) {
            return Err(Error::domain("euclidean_trace: radius too small"));
        }
        let mut visited = vec![false; self.open.len()];
        visited[seed] = true;
        let mut queue = VecDeque::new();
        queue.push_back(seed);
        let mut out = vec![seed];
        while let Some(s) = queue.pop_front() {
            for axis in 0..D {
                for dir in [-1i64, 1] {
                    if let Some(nb) = self.neighbor(s, axis, dir) {
                        if self.open[nb] && !visited[nb] && inside(nb) {
                            visited[nb] = true;
                            out.push(nb);
                            queue.push_back(nb);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Nearest open site to `p` within a Chebyshev window of `k` cells.
    pub fn nearest_open_site(&self, p: Vector<D>, k: i64) -> Option<usize> {
        let c: [i64; D] = std::array::from_fn(|i| (p[i] / self.delta).round() as i64);
        let mut best: Option<(usize, f64)> = None;
        let mut offs = [-k; D];
        loop {
            let cc: [i64; D] = std::array::from_fn(|i| c[i] + offs[i]);
            if let Some(idx) = self.index_of_coord(cc) {
                if self.open[idx] {
                    let d = crate::linalg::dist_sq(self.position(idx), p);
                    if best.map_or(true, |(_, bd)| d < bd) {
                        best = Some((idx, d));
                    }
                }
            }
            let mut axis = D;
            loop {
                if axis == 0 {
                    return best.map(|(i, _)| i);
                }
                axis -= 1;
                offs[axis] += 1;
                if offs[axis] <= k {
                    break;
                }
                offs[axis] = -k;
            }
        }
    }

    /// δᵈ · #open sites: volume estimate of the traced set.
    pub fn open_volume(&self) -> f64 {
        self.delta.powi(D as i32) * self.n_open as f64
    }
}
