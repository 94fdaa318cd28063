//! Union-of-balls connectivity and the modified cluster.
//!
//! `build_clusters` connects configuration points whose distance is below
//! twice the base radius (open balls, strict inequality), selects the
//! percolation proxy component (all-faces box crossing, falling back to the
//! largest estimated ball-union volume), and serves the geometric queries the
//! lattice approximation and the diffusion simulator need: membership in the
//! enlarged cluster, depth to its boundary, specular reflection of segments,
//! and locally-witnessed components.

use std::collections::{HashMap, HashSet, VecDeque};

use crate::config::{Configuration, RngStream, SimBox};
use crate::error::{Error, Result};
use crate::linalg::{add, dist, dist_sq, norm, scale, sub, Vector};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Base radius (connectivity) and enlarged radius (domain). `rho_prime ≥ rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusPair {
    pub rho: f64,
    pub rho_prime: f64,
}

impl RadiusPair {
    pub fn new(rho: f64, rho_prime: f64) -> Result<Self> {
        if !(rho > 0.0) || !(rho_prime >= rho) {
            return Err(Error::invalid(format!(
                "radii must satisfy 0 < rho <= rho_prime, got rho={rho}, rho_prime={rho_prime}"
            )));
        }
        Ok(RadiusPair { rho, rho_prime })
    }

    pub fn equal(rho: f64) -> Result<Self> {
        Self::new(rho, rho)
    }
}

/// Pairs at distance exactly 2ρ (within this absolute tolerance) are a
/// measure-zero event the model excludes; we jitter them away.
const TIE_TOLERANCE: f64 = 1e-12;
const JITTER_SCALE: f64 = 1e-9;

pub(crate) struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    pub fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra as usize].cmp(&self.rank[rb as usize]) {
            std::cmp::Ordering::Less => self.parent[ra as usize] = rb,
            std::cmp::Ordering::Greater => self.parent[rb as usize] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb as usize] = ra;
                self.rank[ra as usize] += 1;
            }
        }
    }
}

/// Uniform-cell spatial index over a point list.
pub(crate) struct SpatialGrid<const D: usize> {
    cell: f64,
    origin: Vector<D>,
    dims: [usize; D],
    buckets: Vec<Vec<u32>>,
}

impl<const D: usize> SpatialGrid<D> {
    pub fn build(points: &[Vector<D>], ids: Option<&[u32]>, cell: f64, domain: &SimBox<D>) -> Self {
        let dims: [usize; D] =
            std::array::from_fn(|i| ((domain.side(i) / cell).ceil() as usize).max(1));
        let total: usize = dims.iter().product();
        let mut grid = SpatialGrid {
            cell,
            origin: domain.lower,
            dims,
            buckets: vec![Vec::new(); total],
        };
        match ids {
            Some(ids) => {
                for &id in ids {
                    let c = grid.cell_of(points[id as usize]);
                    let li = grid.linear(c);
                    grid.buckets[li].push(id);
                }
            }
            None => {
                for (id, &p) in points.iter().enumerate() {
                    let c = grid.cell_of(p);
                    let li = grid.linear(c);
                    grid.buckets[li].push(id as u32);
                }
            }
        }
        grid
    }

    fn cell_of(&self, p: Vector<D>) -> [i64; D] {
        std::array::from_fn(|i| {
            let c = ((p[i] - self.origin[i]) / self.cell).floor() as i64;
            c.clamp(0, self.dims[i] as i64 - 1)
        })
    }

    fn linear(&self, c: [i64; D]) -> usize {
        let mut idx = 0usize;
        for i in 0..D {
            idx = idx * self.dims[i] + c[i] as usize;
        }
        idx
    }

    /// Visit every stored id in the 3^d cell neighborhood of `p`. With cell
    /// size ≥ query radius this covers all candidates.
    pub fn for_neighbors(&self, p: Vector<D>, mut f: impl FnMut(u32)) {
        let c = self.cell_of(p);
        let mut offs = [-1i64; D];
        loop {
            let mut cc = [0i64; D];
            let mut ok = true;
            for i in 0..D {
                let v = c[i] + offs[i];
                if v < 0 || v >= self.dims[i] as i64 {
                    ok = false;
                    break;
                }
                cc[i] = v;
            }
            if ok {
                for &id in &self.buckets[self.linear(cc)] {
                    f(id);
                }
            }
            let mut axis = D;
            loop {
                if axis == 0 {
                    return;
                }
                axis -= 1;
                offs[axis] += 1;
                if offs[axis] <= 1 {
                    break;
                }
                offs[axis] = -1;
            }
        }
    }
}

/// One reflection of a segment off the cluster boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectionEvent<const D: usize> {
    pub position: Vector<D>,
    pub ball: usize,
}

/// Connected component of the enlarged cluster restricted to a ball,
/// witnessed on a fine grid.
#[derive(Debug, Clone)]
pub struct LocalRegion<const D: usize> {
    pub center: Vector<D>,
    pub radius: f64,
    pub member_balls: Vec<u32>,
    /// Number of grid cells in the witnessing trace and their size; the
    /// region's volume estimate is `delta^d * site_count`.
    pub site_count: usize,
    pub delta: f64,
}

impl<const D: usize> LocalRegion<D> {
    pub fn volume_estimate(&self) -> f64 {
        self.delta.powi(D as i32) * self.site_count as f64
    }
}

/// Connectivity structure of the Boolean model over a configuration.
pub struct ClusterDecomposition<const D: usize> {
    pub domain: SimBox<D>,
    /// Post-jitter copies of the configuration points.
    pub points: Vec<Vector<D>>,
    pub radii: RadiusPair,
    /// Component label per point.
    pub labels: Vec<u32>,
    pub n_components: usize,
    /// Component chosen as the percolation proxy.
    pub selected: u32,
    /// Whether the selected component's ball union touches all 2d box faces.
    pub crossing: bool,
    /// Indices of the points in the selected component.
    pub index_set: Vec<u32>,
    /// Indices that received a tie-breaking jitter.
    pub jittered: Vec<usize>,
    query_grid: SpatialGrid<D>,
    pub tol_geom: f64,
    pub max_reflections: usize,
}

/// Label connected overlap components and select the percolation proxy.
pub fn build_clusters<const D: usize>(
    config: &Configuration<D>,
    radii: RadiusPair,
) -> Result<ClusterDecomposition<D>> {
    if config.is_empty() {
        return Err(Error::invalid(
            "cannot build clusters of an empty configuration",
        ));
    }
    let mut points = config.points.clone();
    let n = points.len();
    let overlap = 2.0 * radii.rho;

    // Tie pass: jitter the later-indexed point of any pair at distance
    // exactly 2ρ, with a deterministic direction derived from the seed.
    let mut jittered = Vec::new();
    {
        let grid = SpatialGrid::build(&points, None, overlap, &config.domain);
        let mut to_jitter: Vec<usize> = Vec::new();
        for i in 0..n {
            grid.for_neighbors(points[i], |j| {
                let j = j as usize;
                if j <= i {
                    return;
                }
                let d = dist(points[i], points[j]);
                if (d - overlap).abs() < TIE_TOLERANCE {
                    to_jitter.push(j.max(i));
                }
            });
        }
        to_jitter.sort_unstable();
        to_jitter.dedup();
        for idx in to_jitter {
            let mut rng = RngStream::new(config.seed ^ 0xA5A5_5A5A, idx as u64).rng();
            let dir: Vector<D> = loop {
                let v: Vector<D> = std::array::from_fn(|_| rng.random::<f64>() * 2.0 - 1.0);
                let nv = norm(v);
                if nv > 1e-3 {
                    break scale(v, 1.0 / nv);
                }
            };
            points[idx] = add(points[idx], scale(dir, JITTER_SCALE * radii.rho));
            jittered.push(idx);
        }
    }

    // Union pass over the (possibly jittered) points; remaining exact ties
    // exhaust the tolerance budget and are an error.
    let grid = SpatialGrid::build(&points, None, overlap, &config.domain);
    let mut uf = UnionFind::new(n);
    let mut degenerate: Option<(usize, usize, f64)> = None;
    for i in 0..n {
        grid.for_neighbors(points[i], |j| {
            let j = j as usize;
            if j <= i || degenerate.is_some() {
                return;
            }
            let d = dist(points[i], points[j]);
            if (d - overlap).abs() < TIE_TOLERANCE {
                degenerate = Some((i, j, d));
            } else if d < overlap {
                uf.union(i as u32, j as u32);
            }
        });
    }
    if let Some((i, j, d)) = degenerate {
        return Err(Error::DegenerateConfiguration { i, j, dist: d });
    }

    // Compact labels.
    let mut label_of_root: HashMap<u32, u32> = HashMap::new();
    let mut labels = vec![0u32; n];
    for i in 0..n {
        let root = uf.find(i as u32);
        let next = label_of_root.len() as u32;
        labels[i] = *label_of_root.entry(root).or_insert(next);
    }
    let n_components = label_of_root.len();

    let (selected, crossing) = select_component(
        &points,
        &labels,
        n_components,
        radii,
        &config.domain,
        config.seed,
    );

    let index_set: Vec<u32> = (0..n as u32)
        .filter(|&i| labels[i as usize] == selected)
        .collect();
    let query_grid = SpatialGrid::build(&points, Some(&index_set), radii.rho_prime, &config.domain);

    Ok(ClusterDecomposition {
        domain: config.domain,
        points,
        radii,
        labels,
        n_components,
        selected,
        crossing,
        index_set,
        jittered,
        query_grid,
        tol_geom: 1e-10 * radii.rho_prime,
        max_reflections: 64,
    })
}

/// All-faces crossing proxy for the unbounded component; falls back to the
/// component with the largest Monte-Carlo ball-union volume estimate.
fn select_component<const D: usize>(
    points: &[Vector<D>],
    labels: &[u32],
    n_components: usize,
    radii: RadiusPair,
    domain: &SimBox<D>,
    seed: u64,
) -> (u32, bool) {
    let rho = radii.rho;
    // face touch flags: [component][axis][side]
    let mut touches = vec![[[false; 2]; D]; n_components];
    let mut counts = vec![0usize; n_components];
    for (p, &l) in points.iter().zip(labels.iter()) {
        counts[l as usize] += 1;
        for i in 0..D {
            if p[i] - rho <= domain.lower[i] {
                touches[l as usize][i][0] = true;
            }
            if p[i] + rho >= domain.upper[i] {
                touches[l as usize][i][1] = true;
            }
        }
    }
    let mut best_crossing: Option<u32> = None;
    for (l, t) in touches.iter().enumerate() {
        if t.iter().all(|sides| sides[0] && sides[1]) {
            match best_crossing {
                Some(prev) if counts[prev as usize] >= counts[l] => {}
                _ => best_crossing = Some(l as u32),
            }
        }
    }
    if let Some(l) = best_crossing {
        return (l, true);
    }

    // Volume estimate by uniform probing; disjointness of distinct components'
    // ball unions (centers ≥ 2ρ apart) makes the attribution unambiguous.
    let grid = SpatialGrid::build(points, None, rho, domain);
    let mut rng = RngStream::new(seed ^ 0x5EC7, 0).rng();
    let mut hits = vec![0usize; n_components];
    let probes = 4096;
    for _ in 0..probes {
        let q: Vector<D> =
            std::array::from_fn(|i| domain.lower[i] + domain.side(i) * rng.random::<f64>());
        let mut found: Option<u32> = None;
        grid.for_neighbors(q, |id| {
            if found.is_none() && dist_sq(points[id as usize], q) < rho * rho {
                found = Some(labels[id as usize]);
            }
        });
        if let Some(l) = found {
            hits[l as usize] += 1;
        }
    }
    let best = (0..n_components)
        .max_by_key(|&l| (hits[l], counts[l]))
        .unwrap_or(0);
    (best as u32, false)
}

impl<const D: usize> ClusterDecomposition<D> {
    pub fn rho_prime(&self) -> f64 {
        self.radii.rho_prime
    }

    /// Nearest selected-component ball center to `p`, if within ρ′.
    pub fn nearest_ball(&self, p: Vector<D>) -> Option<(usize, f64)> {
        let rp2 = self.radii.rho_prime * self.radii.rho_prime;
        let mut best: Option<(usize, f64)> = None;
        self.query_grid.for_neighbors(p, |id| {
            let d2 = dist_sq(self.points[id as usize], p);
            if d2 < rp2 && best.map_or(true, |(_, bd)| d2 < bd) {
                best = Some((id as usize, d2));
            }
        });
        best.map(|(id, d2)| (id, d2.sqrt()))
    }

    /// Membership in the enlarged cluster W′.
    pub fn contains(&self, p: Vector<D>) -> bool {
        let rp2 = self.radii.rho_prime * self.radii.rho_prime;
        let mut found = false;
        self.query_grid.for_neighbors(p, |id| {
            if !found && dist_sq(self.points[id as usize], p) < rp2 {
                found = true;
            }
        });
        found
    }

    /// Number of selected-component balls covering `p`.
    pub fn covering_count(&self, p: Vector<D>) -> usize {
        let rp2 = self.radii.rho_prime * self.radii.rho_prime;
        let mut count = 0;
        self.query_grid.for_neighbors(p, |id| {
            if dist_sq(self.points[id as usize], p) < rp2 {
                count += 1;
            }
        });
        count
    }

    /// Lower bound on the distance from `p` to the cluster boundary:
    /// the largest ρ′ − |p − xᵢ| over covering balls, so B(p, depth) ⊆ W′.
    pub fn depth(&self, p: Vector<D>) -> Result<f64> {
        match self.nearest_ball(p) {
            Some((_, d)) => Ok(self.radii.rho_prime - d),
            None => Err(Error::domain("depth: point lies outside the cluster")),
        }
    }

    /// Move from `p` toward `q`, reflecting specularly off ball boundaries.
    /// Returns the final interior point and the reflection log.
    pub fn reflect_segment(
        &self,
        p: Vector<D>,
        q: Vector<D>,
    ) -> Result<(Vector<D>, Vec<ReflectionEvent<D>>)> {
        if !self.contains(p) {
            return Err(Error::domain(
                "reflect_segment: start point outside the cluster",
            ));
        }
        if self.contains(q) {
            return Ok((q, Vec::new()));
        }
        let mut events = Vec::new();
        let mut cur_p = p;
        let mut cur_q = q;
        for _ in 0..self.max_reflections {
            if self.contains(cur_q) {
                return Ok((cur_q, events));
            }
            let seg = sub(cur_q, cur_p);
            let seg_len = norm(seg);
            if seg_len == 0.0 {
                return Ok((cur_p, events));
            }
            // first-exit parameter by bisection; lo stays verified-inside
            let t_tol = (self.tol_geom / seg_len).min(0.25);
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            while hi - lo > t_tol {
                let mid = 0.5 * (lo + hi);
                if self.contains(add(cur_p, scale(seg, mid))) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let exit = add(cur_p, scale(seg, lo));
            let (ball, d) = self
                .nearest_ball(exit)
                .ok_or_else(|| Error::domain("reflect_segment: exit point left the cluster"))?;
            if d == 0.0 {
                // exit at a ball center: no meaningful normal, treat as rejected
                return Err(Error::StepRejected {
                    reflections: events.len(),
                });
            }
            let normal = scale(sub(exit, self.points[ball]), 1.0 / d);
            let remaining = sub(cur_q, exit);
            let reflected = sub(
                remaining,
                scale(normal, 2.0 * crate::linalg::dot(remaining, normal)),
            );
            events.push(ReflectionEvent {
                position: exit,
                ball,
            });
            cur_p = exit;
            cur_q = add(exit, reflected);
        }
        Err(Error::StepRejected {
            reflections: self.max_reflections,
        })
    }

    /// Connected component of W′ ∩ B(x, R) containing x, witnessed by a BFS
    /// over a grid of spacing `delta` (cells entirely inside a single ball).
    pub fn local_component(&self, x: Vector<D>, r: f64, delta: f64) -> Result<LocalRegion<D>> {
        if !self.contains(x) {
            return Err(Error::domain("local_component: center outside the cluster"));
        }
        if !(delta > 0.0) {
            return Err(Error::invalid("local_component: delta must be positive"));
        }
        let site_of =
            |v: Vector<D>| -> [i64; D] { std::array::from_fn(|i| (v[i] / delta).round() as i64) };
        let pos_of = |s: [i64; D]| -> Vector<D> { std::array::from_fn(|i| s[i] as f64 * delta) };
        let open = |s: [i64; D]| -> bool {
            let c = pos_of(s);
            if dist_sq(c, x) >= r * r {
                return false;
            }
            self.cube_in_single_ball(c, delta)
        };

        let mut visited: HashSet<[i64; D]> = HashSet::new();
        let mut queue: VecDeque<[i64; D]> = VecDeque::new();
        // Seed: the site at x, or its immediate neighborhood when that cube
        // straddles the boundary.
        let s0 = site_of(x);
        let mut seeds = vec![s0];
        for axis in 0..D {
            for dir in [-1i64, 1] {
                let mut s = s0;
                s[axis] += dir;
                seeds.push(s);
            }
        }
        for s in seeds {
            if open(s) && visited.insert(s) {
                queue.push_back(s);
            }
        }
        let mut member: HashSet<u32> = HashSet::new();
        // balls covering x always belong to the region
        self.query_grid.for_neighbors(x, |id| {
            if dist_sq(self.points[id as usize], x) < self.radii.rho_prime.powi(2) {
                member.insert(id);
            }
        });
        let mut site_count = 0usize;
        while let Some(s) = queue.pop_front() {
            site_count += 1;
            let c = pos_of(s);
            let rp2 = self.radii.rho_prime * self.radii.rho_prime;
            self.query_grid.for_neighbors(c, |id| {
                if dist_sq(self.points[id as usize], c) < rp2 {
                    member.insert(id);
                }
            });
            for axis in 0..D {
                for dir in [-1i64, 1] {
                    let mut t = s;
                    t[axis] += dir;
                    if !visited.contains(&t) && open(t) {
                        visited.insert(t);
                        queue.push_back(t);
                    }
                }
            }
        }
        let mut member_balls: Vec<u32> = member.into_iter().collect();
        member_balls.sort_unstable();
        Ok(LocalRegion {
            center: x,
            radius: r,
            member_balls,
            site_count,
            delta,
        })
    }

    /// True iff the cube of side `delta` centered at `c` lies inside a single
    /// selected ball. The farthest cube point from a ball center is a corner,
    /// with distance² Σᵢ (|cᵢ − xᵢ| + δ/2)².
    pub fn cube_in_single_ball(&self, c: Vector<D>, delta: f64) -> bool {
        let rp2 = self.radii.rho_prime * self.radii.rho_prime;
        let half = 0.5 * delta;
        let mut found = false;
        self.query_grid.for_neighbors(c, |id| {
            if found {
                return;
            }
            let x = self.points[id as usize];
            let mut d2 = 0.0;
            for i in 0..D {
                let v = (c[i] - x[i]).abs() + half;
                d2 += v * v;
            }
            if d2 < rp2 {
                found = true;
            }
        });
        found
    }
}
