//! Crossing clusters and the renormalization events R₀(Q), R(Q).

use std::collections::{HashMap, VecDeque};

use serde::Serialize;

use crate::cluster::{build_clusters, RadiusPair};
use crate::config::{sample_poisson, RngStream, SimBox};
use crate::error::{Error, Result};
use crate::stats::wilson_interval;

use super::{LatticeGraph, OpennessSource};

/// Lattice-aligned cube: sites k with cornerᵢ ≤ kᵢ < cornerᵢ + side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CubeSpec<const D: usize> {
    pub corner: [i64; D],
    pub side: usize,
}

impl<const D: usize> CubeSpec<D> {
    pub fn new(corner: [i64; D], side: usize) -> Self {
        CubeSpec { corner, side }
    }

    /// Concentric enlargement with side 3/2·n; requires n divisible by 4.
    pub fn plus_region(&self) -> Result<CubeSpec<D>> {
        if self.side % 4 != 0 {
            return Err(Error::invalid(
                "cube side must be divisible by 4 to form the enlarged cube",
            ));
        }
        let quarter = (self.side / 4) as i64;
        Ok(CubeSpec {
            corner: std::array::from_fn(|i| self.corner[i] - quarter),
            side: self.side + self.side / 2,
        })
    }

    pub fn contains_coord(&self, c: [i64; D]) -> bool {
        (0..D).all(|i| c[i] >= self.corner[i] && c[i] < self.corner[i] + self.side as i64)
    }

    fn in_graph<const E: usize>(&self, graph: &LatticeGraph<E>) -> bool {
        (0..D).all(|i| {
            self.corner[i] >= graph.min[i]
                && self.corner[i] + self.side as i64 <= graph.min[i] + graph.dims[i] as i64
        })
    }
}

/// Component labels of `keep ∩ cube` (connectivity restricted to the cube).
/// Returns (site → local component, number of components).
fn cube_components<const D: usize>(
    graph: &LatticeGraph<D>,
    keep: impl Fn(usize) -> bool,
    cube: &CubeSpec<D>,
) -> (HashMap<usize, u32>, usize) {
    let mut label: HashMap<usize, u32> = HashMap::new();
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    let mut corner_iter = [0i64; D];
    for i in 0..D {
        corner_iter[i] = cube.corner[i];
    }
    let side = cube.side as i64;
    let mut k = corner_iter;
    'outer: loop {
        if let Some(idx) = graph.index_of_coord(k) {
            if graph.is_open(idx) && keep(idx) && !label.contains_key(&idx) {
                label.insert(idx, next);
                queue.push_back(idx);
                while let Some(s) = queue.pop_front() {
                    for axis in 0..D {
                        for dir in [-1i64, 1] {
                            // in-cube connectivity only, no periodic wrap
                            let mut c = graph.coord_of(s);
                            c[axis] += dir;
                            if !cube.contains_coord(c) {
                                continue;
                            }
                            if let Some(nb) = graph.index_of_coord(c) {
                                if graph.is_open(nb) && keep(nb) && !label.contains_key(&nb) {
                                    label.insert(nb, next);
                                    queue.push_back(nb);
                                }
                            }
                        }
                    }
                }
                next += 1;
            }
        }
        for axis in (0..D).rev() {
            k[axis] += 1;
            if k[axis] < cube.corner[axis] + side {
                continue 'outer;
            }
            k[axis] = cube.corner[axis];
            if axis == 0 {
                break 'outer;
            }
        }
    }
    let n = next as usize;
    (label, n)
}

/// Does a component set cross the cube in every axis direction? A direction
/// crosses when some restricted component touches both opposing faces.
fn components_crossing<const D: usize>(
    graph: &LatticeGraph<D>,
    label: &HashMap<usize, u32>,
    n_comp: usize,
    cube: &CubeSpec<D>,
) -> Vec<bool> {
    // face flags per component: [axis][side]
    let mut low = vec![[false; D]; n_comp];
    let mut high = vec![[false; D]; n_comp];
    for (&idx, &l) in label.iter() {
        let c = graph.coord_of(idx);
        for i in 0..D {
            if c[i] == cube.corner[i] {
                low[l as usize][i] = true;
            }
            if c[i] == cube.corner[i] + cube.side as i64 - 1 {
                high[l as usize][i] = true;
            }
        }
    }
    (0..n_comp)
        .map(|l| (0..D).all(|i| low[l][i] && high[l][i]))
        .collect()
}

/// True iff `cluster_sites` contains, for every axis, a path inside the cube
/// joining its two opposing faces.
pub fn is_crossing<const D: usize>(
    graph: &LatticeGraph<D>,
    cluster_sites: impl Fn(usize) -> bool,
    cube: &CubeSpec<D>,
) -> bool {
    let (label, n) = cube_components(graph, cluster_sites, cube);
    if n == 0 {
        return false;
    }
    // per-direction: some restricted component touches both faces
    let mut low = vec![[false; D]; n];
    let mut high = vec![[false; D]; n];
    for (&idx, &l) in label.iter() {
        let c = graph.coord_of(idx);
        for i in 0..D {
            if c[i] == cube.corner[i] {
                low[l as usize][i] = true;
            }
            if c[i] == cube.corner[i] + cube.side as i64 - 1 {
                high[l as usize][i] = true;
            }
        }
    }
    (0..D).all(|i| (0..n).any(|l| low[l][i] && high[l][i]))
}

/// Squared Euclidean diameter of a site set in units of δ², exact integer
/// arithmetic with bounding-box short circuits.
fn diameter_sq_exceeds<const D: usize>(
    graph: &LatticeGraph<D>,
    sites: &[usize],
    thr_sq_times_64: i64,
    n_side: i64,
) -> bool {
    // threshold is (n/8)² in δ² units: compare 64·diam² > n²·... callers pass
    // thr_sq_times_64 = n_side² and we test 64·d² > n².
    let mut lo = [i64::MAX; D];
    let mut hi = [i64::MIN; D];
    for &s in sites {
        let c = graph.coord_of(s);
        for i in 0..D {
            lo[i] = lo[i].min(c[i]);
            hi[i] = hi[i].max(c[i]);
        }
    }
    let mut bbox_diag_sq = 0i64;
    let mut max_extent_sq = 0i64;
    for i in 0..D {
        let e = hi[i] - lo[i];
        bbox_diag_sq += e * e;
        max_extent_sq = max_extent_sq.max(e * e);
    }
    let _ = n_side;
    if 64 * max_extent_sq > thr_sq_times_64 {
        return true;
    }
    if 64 * bbox_diag_sq <= thr_sq_times_64 {
        return false;
    }
    // ambiguous band: exact pairwise
    let mut best = 0i64;
    for (a, &sa) in sites.iter().enumerate() {
        let ca = graph.coord_of(sa);
        for &sb in sites.iter().skip(a + 1) {
            let cb = graph.coord_of(sb);
            let mut d2 = 0i64;
            for i in 0..D {
                let e = ca[i] - cb[i];
                d2 += e * e;
            }
            best = best.max(d2);
        }
    }
    64 * best > thr_sq_times_64
}

/// The event R₀(Q): a unique crossing cluster in Q⁺, every other open path of
/// Euclidean diameter > nδ/8 connected to it, and the cluster crossing every
/// lattice-aligned sub-cube of Q with side ≥ nδ/8.
pub fn event_r0<const D: usize>(graph: &LatticeGraph<D>, q: &CubeSpec<D>) -> Result<bool> {
    if q.side < 8 {
        return Err(Error::invalid(
            "crossing events require cube side >= 8 sites",
        ));
    }
    let qp = q.plus_region()?;
    if !q.in_graph(graph) || !qp.in_graph(graph) {
        return Err(Error::OutOfDomain(
            "cube or its enlargement exceeds the graph box".into(),
        ));
    }
    let (label, n_comp) = cube_components(graph, |_| true, &qp);
    if n_comp == 0 {
        return Ok(false);
    }
    let crossing = components_crossing(graph, &label, n_comp, &qp);
    let crossing_ids: Vec<u32> = (0..n_comp as u32)
        .filter(|&l| crossing[l as usize])
        .collect();
    if crossing_ids.len() != 1 {
        return Ok(false);
    }
    let main = crossing_ids[0];

    // (ii) other components must have small diameter
    let mut comp_sites: HashMap<u32, Vec<usize>> = HashMap::new();
    for (&idx, &l) in label.iter() {
        comp_sites.entry(l).or_default().push(idx);
    }
    let n = q.side as i64;
    for (&l, sites) in comp_sites.iter() {
        if l == main {
            continue;
        }
        if diameter_sq_exceeds(graph, sites, n * n, n) {
            return Ok(false);
        }
    }

    // (iii) the crossing cluster crosses every sub-cube of Q with side ≥ n/8
    let in_main = |idx: usize| label.get(&idx) == Some(&main);
    let s_min = q.side.div_ceil(8);
    let stride = (q.side / 16).max(1);
    for s in s_min..=q.side {
        let max_off = q.side - s;
        let mut offsets: Vec<usize> = (0..=max_off).step_by(stride).collect();
        if offsets.last() != Some(&max_off) {
            offsets.push(max_off);
        }
        let mut off = vec![0usize; D];
        let mut cursor = vec![0usize; D];
        'cubes: loop {
            for i in 0..D {
                off[i] = offsets[cursor[i]];
            }
            let sub = CubeSpec::<D> {
                corner: std::array::from_fn(|i| q.corner[i] + off[i] as i64),
                side: s,
            };
            if !is_crossing(graph, in_main, &sub) {
                return Ok(false);
            }
            for axis in (0..D).rev() {
                cursor[axis] += 1;
                if cursor[axis] < offsets.len() {
                    continue 'cubes;
                }
                cursor[axis] = 0;
                if axis == 0 {
                    break 'cubes;
                }
            }
        }
    }
    Ok(true)
}

/// Largest (by site count) component of the open sites inside a cube.
fn largest_cluster_sites<const D: usize>(
    graph: &LatticeGraph<D>,
    cube: &CubeSpec<D>,
) -> Vec<usize> {
    let (label, n) = cube_components(graph, |_| true, cube);
    if n == 0 {
        return Vec::new();
    }
    let mut counts = vec![0usize; n];
    for &l in label.values() {
        counts[l as usize] += 1;
    }
    let best = (0..n).max_by_key(|&l| counts[l]).unwrap() as u32;
    label
        .into_iter()
        .filter_map(|(idx, l)| (l == best).then_some(idx))
        .collect()
}

/// The event R(Q) = R₀(Q) ∧ {largest cluster of Q crossing for Q}
/// ∧ {largest cluster of Q⁺ crossing for Q⁺}.
pub fn event_r<const D: usize>(graph: &LatticeGraph<D>, q: &CubeSpec<D>) -> Result<bool> {
    if !event_r0(graph, q)? {
        return Ok(false);
    }
    let qp = q.plus_region()?;
    for cube in [q, &qp] {
        let sites = largest_cluster_sites(graph, cube);
        let set: std::collections::HashSet<usize> = sites.into_iter().collect();
        if !is_crossing(graph, |idx| set.contains(&idx), cube) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossingScanRow {
    pub k: usize,
    pub n_configs: usize,
    pub failures: usize,
    pub failure_rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

/// Empirical failure rate of R(G(z, kδ)) over independent Poisson
/// configurations, one row per cube scale k. The openness uses every ball of
/// the configuration: at these desk scales the percolation proxy would
/// otherwise select a single component and trivialize the uniqueness clause.
pub fn crossing_failure_scan<const D: usize>(
    intensity: f64,
    radii: RadiusPair,
    delta: f64,
    ks: &[usize],
    n_configs: usize,
    base_seed: u64,
) -> Result<Vec<CrossingScanRow>> {
    let k_max = *ks
        .iter()
        .max()
        .ok_or_else(|| Error::invalid("empty k ladder"))?;
    // box holds Q⁺ of the largest cube plus a ball-radius margin
    let extent = 1.5 * k_max as f64 * delta + 4.0 * radii.rho_prime;
    let side = (extent / delta).ceil() * delta;
    let domain = SimBox::<D>::unit(side);
    let mut failures = vec![0usize; ks.len()];
    for rep in 0..n_configs {
        let cfg = sample_poisson(intensity, domain, RngStream::new(base_seed, rep as u64))?;
        if cfg.is_empty() {
            for f in failures.iter_mut() {
                *f += 1;
            }
            continue;
        }
        let decomp = build_clusters(&cfg, radii)?;
        let graph = LatticeGraph::build(&decomp, delta, OpennessSource::AllBalls)?;
        let center: [i64; D] = std::array::from_fn(|i| graph.min[i] + graph.dims[i] as i64 / 2);
        for (ki, &k) in ks.iter().enumerate() {
            let q = CubeSpec::<D> {
                corner: std::array::from_fn(|i| center[i] - k as i64 / 2),
                side: k,
            };
            if !event_r(&graph, &q)? {
                failures[ki] += 1;
            }
        }
    }
    Ok(ks
        .iter()
        .zip(failures)
        .map(|(&k, f)| {
            let (lo, hi) = wilson_interval(f, n_configs);
            CrossingScanRow {
                k,
                n_configs,
                failures: f,
                failure_rate: f as f64 / n_configs as f64,
                wilson_low: lo,
                wilson_high: hi,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{build_clusters, RadiusPair};
    use crate::config::{Configuration, SimBox};
    use crate::lattice::build_delta_graph;

    /// Full coverage: every site open.
    fn full_graph(side_sites: usize) -> LatticeGraph<2> {
        let side = side_sites as f64 * 0.5;
        let mut pts = Vec::new();
        let n = side.ceil() as usize;
        for i in 0..n {
            for j in 0..n {
                pts.push([0.5 + i as f64, 0.5 + j as f64]);
            }
        }
        let c = Configuration::explicit(SimBox::unit(side), pts, 1).unwrap();
        let d = build_clusters(&c, RadiusPair::new(0.9, 1.4).unwrap()).unwrap();
        build_delta_graph(&d, 0.5).unwrap()
    }

    /// Graph with a closed vertical slab (nothing open for x in the band).
    fn slab_graph() -> LatticeGraph<2> {
        let mut pts = Vec::new();
        for i in 0..24 {
            for j in 0..24 {
                let x = 0.5 + i as f64;
                if (10.0..=13.0).contains(&x) {
                    continue;
                }
                pts.push([x, 0.5 + j as f64]);
            }
        }
        let c = Configuration::explicit(SimBox::unit(24.0), pts, 1).unwrap();
        let d = build_clusters(&c, RadiusPair::new(0.9, 1.4).unwrap()).unwrap();
        // force both slabs into the graph regardless of which side is selected
        LatticeGraph::build(&d, 0.5, OpennessSource::AllBalls).unwrap()
    }

    #[test]
    fn full_cube_is_crossing() {
        let g = full_graph(40);
        let q = CubeSpec::new([10, 10], 16);
        assert!(is_crossing(&g, |_| true, &q));
    }

    #[test]
    fn closed_slab_blocks_one_direction() {
        let g = slab_graph();
        // cube spanning the slab: x-direction blocked
        let q = CubeSpec::new([6, 10], 24);
        assert!(!is_crossing(&g, |_| true, &q));
        // cube inside the left block crosses fine
        let q2 = CubeSpec::new([4, 10], 12);
        assert!(is_crossing(&g, |_| true, &q2));
    }

    #[test]
    fn crossing_agrees_with_exhaustive_path_search_on_small_cubes() {
        // brute-force oracle: recursive DFS over explicit site lists
        fn brute(g: &LatticeGraph<2>, cube: &CubeSpec<2>) -> bool {
            let mut sites = Vec::new();
            for x in 0..cube.side as i64 {
                for y in 0..cube.side as i64 {
                    let c = [cube.corner[0] + x, cube.corner[1] + y];
                    if let Some(idx) = g.index_of_coord(c) {
                        if g.is_open(idx) {
                            sites.push(c);
                        }
                    }
                }
            }
            'dir: for dir in 0..2usize {
                let lo = cube.corner[dir];
                let hi = cube.corner[dir] + cube.side as i64 - 1;
                let starts: Vec<[i64; 2]> =
                    sites.iter().copied().filter(|c| c[dir] == lo).collect();
                let mut stack = starts.clone();
                let mut seen: std::collections::HashSet<[i64; 2]> = starts.into_iter().collect();
                while let Some(c) = stack.pop() {
                    if c[dir] == hi {
                        continue 'dir;
                    }
                    for (dx, dy) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
                        let n = [c[0] + dx, c[1] + dy];
                        if sites.contains(&n) && !seen.contains(&n) {
                            seen.insert(n);
                            stack.push(n);
                        }
                    }
                }
                return false;
            }
            true
        }

        let b = SimBox::<2>::unit(12.0);
        for seed in 0..12 {
            let cfg = crate::config::sample_poisson(0.9, b, crate::config::RngStream::new(seed, 0))
                .unwrap();
            if cfg.is_empty() {
                continue;
            }
            let d = build_clusters(&cfg, RadiusPair::new(0.7, 0.9).unwrap()).unwrap();
            let g = LatticeGraph::build(&d, 0.45, OpennessSource::AllBalls).unwrap();
            let q = CubeSpec::new([g.min[0] + 4, g.min[1] + 4], 8);
            if !q.in_graph(&g) {
                continue;
            }
            assert_eq!(is_crossing(&g, |_| true, &q), brute(&g, &q), "seed {seed}");
        }
    }

    #[test]
    fn fully_open_cube_satisfies_r0_and_r() {
        let g = full_graph(64);
        let q = CubeSpec::new([g.min[0] + 14, g.min[1] + 14], 16);
        assert!(event_r0(&g, &q).unwrap());
        assert!(event_r(&g, &q).unwrap());
    }

    #[test]
    fn split_enlarged_cube_fails_uniqueness() {
        let g = slab_graph();
        // Q⁺ spans the slab: two crossing-in-y clusters, none crossing in x
        let q = CubeSpec::new([8, 18], 12);
        assert!(!event_r0(&g, &q).unwrap());
        assert!(!event_r(&g, &q).unwrap());
    }

    #[test]
    fn events_error_outside_the_graph() {
        let g = full_graph(32);
        let q = CubeSpec::new([g.min[0], g.min[1]], 16); // Q⁺ would stick out
        assert!(matches!(event_r0(&g, &q), Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn event_r_implies_event_r0_on_random_geometry() {
        let b = SimBox::<2>::unit(18.0);
        for seed in 100..110 {
            let cfg = crate::config::sample_poisson(1.1, b, crate::config::RngStream::new(seed, 0))
                .unwrap();
            if cfg.is_empty() {
                continue;
            }
            let d = build_clusters(&cfg, RadiusPair::new(0.8, 1.0).unwrap()).unwrap();
            let g = LatticeGraph::build(&d, 0.25, OpennessSource::AllBalls).unwrap();
            let center = [
                g.min[0] + g.dims[0] as i64 / 2,
                g.min[1] + g.dims[1] as i64 / 2,
            ];
            let q = CubeSpec::new([center[0] - 8, center[1] - 8], 16);
            if event_r(&g, &q).unwrap() {
                assert!(event_r0(&g, &q).unwrap());
            }
        }
    }
}
