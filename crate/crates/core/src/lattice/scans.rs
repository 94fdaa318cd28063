//! Volume-regularity and isoperimetric diagnostics.
//!
//! The isoperimetric infima range over all open sets and are uncomputable;
//! the scan evaluates the boundary-to-volume ratio over a candidate family
//! (graph balls, box truncations, biased lattice animals, Euclidean balls)
//! and reports the family minimum, which upper-bounds the true infimum.
//!
//! Surface areas of cell-union candidates are exact face counts (their
//! boundary is axis-aligned); smooth ball candidates instead sample the
//! sphere against the continuum membership test, since face counts
//! overestimate curved boundaries by the ℓ¹/ℓ² factor.

use std::collections::HashSet;

use rand::Rng;
use serde::Serialize;

use crate::cluster::ClusterDecomposition;
use crate::config::RngStream;
use crate::error::{Error, Result};
use crate::linalg::{dist, dist_sq, unit_ball_volume, Vector};

use super::LatticeGraph;

/// δ^{d−1} · number of faces between open cells of the region and cells
/// outside it (out-of-graph neighbors count as outside).
pub fn surface_measure<const D: usize>(graph: &LatticeGraph<D>, cells: &HashSet<usize>) -> f64 {
    let mut faces = 0usize;
    for &idx in cells {
        if !graph.is_open(idx) {
            continue;
        }
        for axis in 0..D {
            for dir in [-1i64, 1] {
                match graph.neighbor(idx, axis, dir) {
                    Some(nb) if cells.contains(&nb) => {}
                    _ => faces += 1,
                }
            }
        }
    }
    graph.delta.powi(D as i32 - 1) * faces as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct VolumeScanRow {
    pub r: f64,
    /// min over centers of |W′(ω,x,R)| / Rᵈ
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VolumeScan {
    pub rows: Vec<VolumeScanRow>,
    pub c_v_hat: f64,
    pub r_v_hat: f64,
}

/// Traced-component volume against Rᵈ for each ladder radius, minimized over
/// centers. `c_v_hat` is the running minimum past the fitted onset `r_v_hat`.
pub fn volume_regularity_scan<const D: usize>(
    graph: &LatticeGraph<D>,
    centers: &[Vector<D>],
    r_ladder: &[f64],
) -> Result<VolumeScan> {
    if centers.is_empty() || r_ladder.is_empty() {
        return Err(Error::invalid(
            "volume scan needs centers and a radius ladder",
        ));
    }
    let mut sorted = r_ladder.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let r_max = *sorted.last().unwrap();
    let mut min_ratio = vec![f64::INFINITY; sorted.len()];
    for &x in centers {
        let trace = graph.euclidean_trace(x, r_max)?;
        let mut dists: Vec<f64> = trace.iter().map(|&s| dist(graph.position(s), x)).collect();
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (i, &r) in sorted.iter().enumerate() {
            let count = dists.partition_point(|&d| d < r);
            let vol = graph.delta.powi(D as i32) * count as f64;
            let ratio = vol / r.powi(D as i32);
            min_ratio[i] = min_ratio[i].min(ratio);
        }
    }
    let rows: Vec<VolumeScanRow> = sorted
        .iter()
        .zip(&min_ratio)
        .map(|(&r, &ratio)| VolumeScanRow { r, ratio })
        .collect();
    let plateau = min_ratio.last().copied().unwrap_or(0.0);
    let onset = rows
        .iter()
        .find(|row| row.ratio >= 0.5 * plateau)
        .map(|row| row.r)
        .unwrap_or(r_max);
    let c_v_hat = rows
        .iter()
        .filter(|row| row.r >= onset)
        .map(|row| row.ratio)
        .fold(f64::INFINITY, f64::min);
    Ok(VolumeScan {
        rows,
        c_v_hat,
        r_v_hat: onset,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IsoSample {
    pub witness_id: String,
    /// 𝓗_{d−1}(W′ ∩ ∂O) estimate
    pub surface: f64,
    /// |W′ ∩ O| estimate
    pub w_volume: f64,
    /// |O|
    pub o_volume: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IsoScan {
    pub c_il_hat: f64,
    pub c_is_hat: f64,
    pub c_h: f64,
    pub il_witness: String,
    pub is_witness: String,
    pub samples: Vec<IsoSample>,
}

#[derive(Debug, Clone)]
pub struct IsoKnobs {
    pub theta: f64,
    /// Override for the small-boundary threshold c_H; derived from the
    /// minimal exposed spherical-cap area when absent.
    pub c_h: Option<f64>,
    pub n_anchors: usize,
    pub n_animals: usize,
    pub sphere_samples: usize,
    pub seed: u64,
}

impl Default for IsoKnobs {
    fn default() -> Self {
        IsoKnobs {
            theta: 0.9,
            c_h: None,
            n_anchors: 4,
            n_animals: 8,
            sphere_samples: 4096,
            seed: 0x150,
        }
    }
}

/// Equally distributed points on the unit sphere (circle / Fibonacci sphere).
fn unit_sphere_points<const D: usize>(m: usize) -> Vec<Vector<D>> {
    let mut out = Vec::with_capacity(m);
    match D {
        2 => {
            for k in 0..m {
                let ang = std::f64::consts::TAU * k as f64 / m as f64;
                let mut v = [0.0; D];
                v[0] = ang.cos();
                v[1] = ang.sin();
                out.push(v);
            }
        }
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
            for k in 0..m {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / m as f64;
                let r = (1.0 - z * z).sqrt();
                let ang = golden * k as f64;
                let mut v = [0.0; D];
                v[0] = r * ang.cos();
                v[1] = r * ang.sin();
                v[2] = z;
                out.push(v);
            }
        }
        _ => panic!("sphere sampling implemented for d = 2, 3"),
    }
    out
}

/// Boundary-to-volume ratio of a Euclidean ball candidate: the sphere is
/// sampled against the continuum membership test, the volume comes from the
/// grid trace.
pub fn euclidean_ball_ratio<const D: usize>(
    decomp: &ClusterDecomposition<D>,
    graph: &LatticeGraph<D>,
    center: Vector<D>,
    radius: f64,
    sphere_samples: usize,
) -> IsoSample {
    let dirs = unit_sphere_points::<D>(sphere_samples);
    let mut inside = 0usize;
    for dir in &dirs {
        let q: Vector<D> = std::array::from_fn(|i| center[i] + radius * dir[i]);
        if decomp.contains(q) {
            inside += 1;
        }
    }
    let d = D as f64;
    let sphere_area = d * unit_ball_volume(D) * radius.powi(D as i32 - 1);
    let surface = sphere_area * inside as f64 / sphere_samples as f64;
    let mut open_count = 0usize;
    // sites with center in the ball
    let r2 = radius * radius;
    let lo: [i64; D] = std::array::from_fn(|i| ((center[i] - radius) / graph.delta).floor() as i64);
    let hi: [i64; D] = std::array::from_fn(|i| ((center[i] + radius) / graph.delta).ceil() as i64);
    let mut k = lo;
    'iter: loop {
        if let Some(idx) = graph.index_of_coord(k) {
            if graph.is_open(idx) && dist_sq(graph.position(idx), center) < r2 {
                open_count += 1;
            }
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
    let w_volume = graph.delta.powi(D as i32) * open_count as f64;
    let ratio = if w_volume > 0.0 {
        surface / w_volume.powf((d - 1.0) / d)
    } else {
        f64::INFINITY
    };
    IsoSample {
        witness_id: format!("ball(r={radius:.4})"),
        surface,
        w_volume,
        o_volume: unit_ball_volume(D) * radius.powi(D as i32),
        ratio,
    }
}

fn cell_union_sample<const D: usize>(
    graph: &LatticeGraph<D>,
    cells: &HashSet<usize>,
    witness_id: String,
    o_volume_cells: usize,
) -> IsoSample {
    let open_count = cells.iter().filter(|&&c| graph.is_open(c)).count();
    let surface = surface_measure(graph, cells);
    let w_volume = graph.delta.powi(D as i32) * open_count as f64;
    let d = D as f64;
    let ratio = if w_volume > 0.0 && surface > 0.0 {
        surface / w_volume.powf((d - 1.0) / d)
    } else {
        f64::INFINITY
    };
    IsoSample {
        witness_id,
        surface,
        w_volume,
        o_volume: graph.delta.powi(D as i32) * o_volume_cells as f64,
        ratio,
    }
}

/// Minimal exposed spherical-cap area over overlapping selected ball pairs.
fn min_cap_area<const D: usize>(decomp: &ClusterDecomposition<D>) -> f64 {
    let rp = decomp.radii.rho_prime;
    let d = D as f64;
    let full_sphere = d * unit_ball_volume(D) * rp.powi(D as i32 - 1);
    let mut best = full_sphere;
    for (a, &i) in decomp.index_set.iter().enumerate() {
        for &j in decomp.index_set.iter().skip(a + 1) {
            let t = dist(decomp.points[i as usize], decomp.points[j as usize]);
            if t >= 2.0 * rp || t == 0.0 {
                continue;
            }
            let cos_alpha = t / (2.0 * rp);
            let alpha = cos_alpha.clamp(-1.0, 1.0).acos();
            let cap = match D {
                2 => 2.0 * alpha * rp,
                3 => std::f64::consts::TAU * rp * rp * (1.0 - cos_alpha),
                _ => full_sphere,
            };
            best = best.min(cap);
        }
    }
    best
}

/// Evaluate the candidate family inside B(center, r) and report the filtered
/// minima: `c_il_hat` over candidates with |O| ≥ R^θ, `c_is_hat` over
/// candidates with surface < c_H.
pub fn isoperimetric_scan<const D: usize>(
    decomp: &ClusterDecomposition<D>,
    graph: &LatticeGraph<D>,
    center: Vector<D>,
    r: f64,
    knobs: &IsoKnobs,
) -> Result<IsoScan> {
    if !(knobs.theta > 0.0 && knobs.theta < 1.0) {
        return Err(Error::invalid("theta must lie in (0,1)"));
    }
    let delta = graph.delta;
    let mut rng = RngStream::new(knobs.seed, 0).rng();
    let mut samples: Vec<IsoSample> = Vec::new();

    // anchors: open sites near the center
    let mut anchors = Vec::new();
    for _ in 0..(knobs.n_anchors * 20) {
        if anchors.len() >= knobs.n_anchors {
            break;
        }
        let p: Vector<D> = std::array::from_fn(|i| center[i] + (rng.random::<f64>() - 0.5) * r);
        if let Some(site) = graph.nearest_open_site(p, 2) {
            if dist(graph.position(site), center) < 0.5 * r {
                anchors.push(site);
            }
        }
    }
    if anchors.is_empty() {
        return Err(Error::invalid(
            "no open anchor sites inside the scan window",
        ));
    }

    // (a) graph balls
    for (ai, &anchor) in anchors.iter().enumerate() {
        let head = r - dist(graph.position(anchor), center);
        for frac in [0.25, 0.5, 0.9] {
            let rg = ((head * frac) / delta).floor() as usize;
            if rg == 0 {
                continue;
            }
            let cells: HashSet<usize> = graph.graph_ball(anchor, rg)?.into_iter().collect();
            let n = cells.len();
            samples.push(cell_union_sample(
                graph,
                &cells,
                format!("graph_ball(a{ai},r={rg})"),
                n,
            ));
        }
    }

    // (b) box truncations of the inscribed window
    let w = 0.9 * 2.0 * r / (D as f64).sqrt();
    let half_cells = (0.5 * w / delta).floor() as i64;
    if half_cells >= 2 {
        let c0: [i64; D] = std::array::from_fn(|i| (center[i] / delta).round() as i64);
        for cut_num in [1i64, 2, 3] {
            // box occupying a fraction of the window along axis 0
            let cut = -half_cells + (2 * half_cells * cut_num) / 4;
            let mut cells = HashSet::new();
            let lo: [i64; D] = std::array::from_fn(|i| c0[i] - half_cells);
            let hi: [i64; D] = std::array::from_fn(|i| {
                if i == 0 {
                    c0[i] + cut
                } else {
                    c0[i] + half_cells
                }
            });
            let mut k = lo;
            let mut count = 0usize;
            'boxiter: loop {
                if let Some(idx) = graph.index_of_coord(k) {
                    cells.insert(idx);
                    count += 1;
                }
                for axis in (0..D).rev() {
                    k[axis] += 1;
                    if k[axis] < hi[axis] {
                        continue 'boxiter;
                    }
                    k[axis] = lo[axis];
                    if axis == 0 {
                        break 'boxiter;
                    }
                }
            }
            samples.push(cell_union_sample(
                graph,
                &cells,
                format!("half_space(cut={cut_num}/4)"),
                count,
            ));
        }
    }

    // (c) biased lattice animals grown over open sites
    for t in 0..knobs.n_animals {
        let anchor = anchors[t % anchors.len()];
        let bias: Vector<D> = std::array::from_fn(|_| rng.random::<f64>() * 2.0 - 1.0);
        let target = ((0.3 * r / delta).powi(D as i32) as usize).clamp(8, 4000);
        let mut cells: HashSet<usize> = HashSet::new();
        let mut frontier: Vec<usize> = vec![anchor];
        cells.insert(anchor);
        while cells.len() < target && !frontier.is_empty() {
            // pick the frontier site best aligned with the bias, with noise
            let (fi, _) = frontier
                .iter()
                .enumerate()
                .map(|(i, &s)| {
                    let p = graph.position(s);
                    let score = (0..D).map(|a| bias[a] * p[a]).sum::<f64>()
                        + 0.3 * delta * rng.random::<f64>();
                    (i, score)
                })
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            let s = frontier.swap_remove(fi);
            for axis in 0..D {
                for dir in [-1i64, 1] {
                    if let Some(nb) = graph.neighbor(s, axis, dir) {
                        if graph.is_open(nb)
                            && !cells.contains(&nb)
                            && dist(graph.position(nb), center) < r
                        {
                            cells.insert(nb);
                            frontier.push(nb);
                        }
                    }
                }
            }
        }
        let n = cells.len();
        samples.push(cell_union_sample(
            graph,
            &cells,
            format!("animal(t={t})"),
            n,
        ));
    }

    // (d) Euclidean balls
    for (ai, &anchor) in anchors.iter().enumerate() {
        let p = graph.position(anchor);
        let head = r - dist(p, center);
        for frac in [0.3, 0.6, 0.9] {
            let rb = head * frac;
            if rb < 2.0 * delta {
                continue;
            }
            let mut s = euclidean_ball_ratio(decomp, graph, p, rb, knobs.sphere_samples);
            s.witness_id = format!("ball(a{ai},r={rb:.4})");
            samples.push(s);
        }
    }

    let c_h = knobs.c_h.unwrap_or_else(|| 0.5 * min_cap_area(decomp));
    let r_theta = r.powf(knobs.theta);
    let mut c_il = f64::INFINITY;
    let mut il_witness = String::from("none");
    let mut c_is = f64::INFINITY;
    let mut is_witness = String::from("none");
    for s in &samples {
        if !s.ratio.is_finite() {
            continue;
        }
        if s.o_volume >= r_theta && s.ratio < c_il {
            c_il = s.ratio;
            il_witness = s.witness_id.clone();
        }
        if s.surface < c_h && s.ratio < c_is {
            c_is = s.ratio;
            is_witness = s.witness_id.clone();
        }
    }
    Ok(IsoScan {
        c_il_hat: c_il,
        c_is_hat: c_is,
        c_h,
        il_witness,
        is_witness,
        samples,
    })
}

/// Aggregate report of the geometry diagnostics, serialized by the CLI.
#[derive(Debug, Clone, Serialize)]
pub struct GeometryReport {
    pub c_v_hat: f64,
    pub r_v_hat: f64,
    pub c_il_hat: f64,
    pub c_is_hat: f64,
    pub theta: f64,
    pub zeta: f64,
    pub samples: Vec<GeometrySample>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeometrySample {
    pub r: f64,
    pub ratio: f64,
    pub witness_id: String,
}

pub fn zeta_of(theta: f64, d: usize) -> f64 {
    (1.0 - theta) / (1.0 - theta / d as f64)
}

impl GeometryReport {
    pub fn assemble(volume: &VolumeScan, iso: &IsoScan, theta: f64, d: usize) -> GeometryReport {
        let mut samples: Vec<GeometrySample> = volume
            .rows
            .iter()
            .map(|row| GeometrySample {
                r: row.r,
                ratio: row.ratio,
                witness_id: "volume_min".into(),
            })
            .collect();
        for s in &iso.samples {
            samples.push(GeometrySample {
                r: s.o_volume.powf(1.0 / d as f64),
                ratio: s.ratio,
                witness_id: s.witness_id.clone(),
            });
        }
        GeometryReport {
            c_v_hat: volume.c_v_hat,
            r_v_hat: volume.r_v_hat,
            c_il_hat: iso.c_il_hat,
            c_is_hat: iso.c_is_hat,
            theta,
            zeta: zeta_of(theta, d),
            samples,
        }
    }
}
