//! Discrete Sobolev-inequality diagnostic on a traced region.

use serde::Serialize;

use crate::error::{Error, Result};

use super::scans::zeta_of;
use super::LatticeGraph;

/// A node region of the lattice graph with its artificial (killed) boundary
/// marked. Node order is the order of `sites`.
#[derive(Debug, Clone)]
pub struct GraphRegion {
    pub sites: Vec<usize>,
    pub killed: Vec<bool>,
    /// Dense site → node map (u32::MAX outside the region); sized by the
    /// largest site index so lookups stay on the hot path.
    node_of_site: Vec<u32>,
}

impl GraphRegion {
    pub fn new(sites: Vec<usize>, killed: Vec<bool>) -> Self {
        assert_eq!(sites.len(), killed.len());
        let cap = sites.iter().copied().max().map_or(0, |m| m + 1);
        let mut node_of_site = vec![u32::MAX; cap];
        for (n, &s) in sites.iter().enumerate() {
            node_of_site[s] = n as u32;
        }
        GraphRegion {
            sites,
            killed,
            node_of_site,
        }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn node_of(&self, site: usize) -> Option<u32> {
        match self.node_of_site.get(site) {
            Some(&n) if n != u32::MAX => Some(n),
            _ => None,
        }
    }

    pub fn n_killed(&self) -> usize {
        self.killed.iter().filter(|&&k| k).count()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SobolevParams {
    pub p: f64,
    pub q: f64,
    pub theta: f64,
    /// Configured pass bound on the empirical constant.
    pub bound: f64,
}

impl Default for SobolevParams {
    fn default() -> Self {
        SobolevParams {
            p: 20.0,
            q: 20.0,
            theta: 0.9,
            bound: 10.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SobolevReport {
    pub zeta: f64,
    pub rho_exp: f64,
    pub q_sharp: f64,
    pub u_norm: f64,
    pub volume_factor: f64,
    pub grad_norm: f64,
    /// ‖u‖ / (|W_R|^{(1−ζ)/d} ‖∇u‖); zero when u ≡ 0.
    pub constant: f64,
    pub bound: f64,
    pub pass: bool,
    pub boundary_vanishes: bool,
}

/// Evaluate the discrete norms of the Sobolev inequality for a node function
/// that vanishes on the killed boundary, and compare the empirical constant
/// against the configured bound.
pub fn sobolev_check<const D: usize>(
    graph: &LatticeGraph<D>,
    region: &GraphRegion,
    u: &[f64],
    params: &SobolevParams,
) -> Result<SobolevReport> {
    if u.len() != region.len() {
        return Err(Error::invalid(
            "node function length does not match the region",
        ));
    }
    if !(params.theta > 0.0 && params.theta < 1.0) {
        return Err(Error::invalid("theta must lie in (0,1)"));
    }
    let d = D as f64;
    let zeta = zeta_of(params.theta, D);
    if 1.0 / params.p + 1.0 / params.q >= 2.0 * zeta / d {
        return Err(Error::invalid(format!(
            "exponent constraint violated: 1/p + 1/q = {} must be < 2ζ/d = {}",
            1.0 / params.p + 1.0 / params.q,
            2.0 * zeta / d
        )));
    }
    let q = params.q;
    let rho_exp = 2.0 * q * d / (q * (d - 2.0 * zeta) + d);
    let q_sharp = 2.0 * q / (q + 1.0);

    let delta = graph.delta;
    let cell = delta.powi(D as i32);
    let u_norm = (u.iter().map(|v| v.abs().powf(rho_exp)).sum::<f64>() * cell).powf(1.0 / rho_exp);
    let volume = cell * region.len() as f64;
    let volume_factor = volume.powf((1.0 - zeta) / d);

    let mut grad_sum = 0.0;
    for (n, &site) in region.sites.iter().enumerate() {
        let mut g2 = 0.0;
        for axis in 0..D {
            if let Some(nb) = graph.neighbor(site, axis, 1) {
                if let Some(m) = region.node_of(nb) {
                    let g = (u[m as usize] - u[n]) / delta;
                    g2 += g * g;
                }
            }
        }
        grad_sum += g2.sqrt().powf(q_sharp);
    }
    let grad_norm = (grad_sum * cell).powf(1.0 / q_sharp);

    let constant = if u_norm == 0.0 {
        0.0
    } else {
        u_norm / (volume_factor * grad_norm)
    };

    let umax = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let boundary_vanishes = region
        .sites
        .iter()
        .enumerate()
        .filter(|(n, _)| region.killed[*n])
        .all(|(n, _)| u[n].abs() <= 1e-12 * umax);

    Ok(SobolevReport {
        zeta,
        rho_exp,
        q_sharp,
        u_norm,
        volume_factor,
        grad_norm,
        constant,
        bound: params.bound,
        pass: constant.is_finite() && constant <= params.bound,
        boundary_vanishes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{build_clusters, RadiusPair};
    use crate::config::{Configuration, SimBox};
    use crate::lattice::build_delta_graph;

    fn full_region(side: f64, delta: f64) -> (LatticeGraph<2>, GraphRegion) {
        let mut pts = Vec::new();
        let n = side.ceil() as usize;
        for i in 0..n {
            for j in 0..n {
                pts.push([0.5 + i as f64, 0.5 + j as f64]);
            }
        }
        let c = Configuration::explicit(SimBox::unit(side), pts, 1).unwrap();
        let d = build_clusters(&c, RadiusPair::new(0.9, 1.4).unwrap()).unwrap();
        let g = build_delta_graph(&d, delta).unwrap();
        let sites: Vec<usize> = (0..g.num_sites()).filter(|&s| g.is_open(s)).collect();
        let killed: Vec<bool> = sites
            .iter()
            .map(|&s| {
                (0..2).any(|axis| {
                    [-1i64, 1].iter().any(|&dir| {
                        g.neighbor(s, axis, dir)
                            .map(|nb| !g.is_open(nb))
                            .unwrap_or(true)
                    })
                })
            })
            .collect();
        let region = GraphRegion::new(sites, killed);
        (g, region)
    }

    fn tent(g: &LatticeGraph<2>, region: &GraphRegion, side: f64) -> Vec<f64> {
        region
            .sites
            .iter()
            .map(|&s| {
                let p = g.position(s);
                let dx = (p[0].min(side - p[0])).max(0.0);
                let dy = (p[1].min(side - p[1])).max(0.0);
                dx.min(dy)
            })
            .collect()
    }

    #[test]
    fn zero_function_passes_with_zero_constant() {
        let (g, region) = full_region(8.0, 0.25);
        let u = vec![0.0; region.len()];
        let rep = sobolev_check(&g, &region, &u, &SobolevParams::default()).unwrap();
        assert_eq!(rep.constant, 0.0);
        assert!(rep.pass);
        assert!(rep.boundary_vanishes);
    }

    #[test]
    fn tent_constant_is_stable_under_refinement() {
        let mut constants = Vec::new();
        for delta in [0.25, 0.125] {
            let (g, region) = full_region(8.0, delta);
            let u = tent(&g, &region, 8.0);
            let rep = sobolev_check(&g, &region, &u, &SobolevParams::default()).unwrap();
            assert!(rep.constant.is_finite() && rep.constant > 0.0);
            constants.push(rep.constant);
        }
        let rel = (constants[0] - constants[1]).abs() / constants[1];
        assert!(rel < 0.10, "constants {constants:?} differ by {rel}");
    }

    #[test]
    fn constant_is_invariant_under_rescaling() {
        let (g, region) = full_region(8.0, 0.25);
        let u = tent(&g, &region, 8.0);
        let scaled: Vec<f64> = u.iter().map(|v| 7.3 * v).collect();
        let a = sobolev_check(&g, &region, &u, &SobolevParams::default()).unwrap();
        let b = sobolev_check(&g, &region, &scaled, &SobolevParams::default()).unwrap();
        assert!((a.constant - b.constant).abs() <= 1e-12 * a.constant);
    }

    #[test]
    fn exponent_constraint_is_enforced() {
        let (g, region) = full_region(8.0, 0.5);
        let u = vec![0.0; region.len()];
        let bad = SobolevParams {
            p: 2.0,
            q: 2.0,
            theta: 0.9,
            bound: 10.0,
        };
        assert!(sobolev_check(&g, &region, &u, &bad).is_err());
    }
}
