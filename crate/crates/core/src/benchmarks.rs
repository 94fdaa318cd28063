//! Shipped test geometries used by the verification suites and the docs.
//!
//! All are two-dimensional. The covered boxes place centers on a grid dense
//! enough that every lattice cube is inside a single ball, so the traced set
//! is the whole box ("free space"); holes are carved by removing centers.

use crate::cluster::{build_clusters, ClusterDecomposition, RadiusPair};
use crate::config::{sample_poisson, Configuration, RngStream, SimBox};
use crate::error::Result;

pub const COVER_SPACING: f64 = 0.5;
pub const COVER_RADII: (f64, f64) = (0.6, 1.2);

fn cover_points(side: f64, keep: impl Fn([f64; 2]) -> bool) -> Vec<[f64; 2]> {
    let n = (side / COVER_SPACING).round() as usize;
    let mut pts = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let p = [
                0.5 * COVER_SPACING + COVER_SPACING * i as f64,
                0.5 * COVER_SPACING + COVER_SPACING * j as f64,
            ];
            if keep(p) {
                pts.push(p);
            }
        }
    }
    pts
}

pub fn cover_radii() -> RadiusPair {
    RadiusPair::new(COVER_RADII.0, COVER_RADII.1).unwrap()
}

/// Fully covered box: the traced cluster is the whole box, correctors vanish.
pub fn free_space(side: f64, periodic: bool) -> Result<Configuration<2>> {
    let b = SimBox::new([0.0, 0.0], [side, side], periodic)?;
    Configuration::explicit(b, cover_points(side, |_| true), 1)
}

/// Covered box with one disk-shaped hole.
pub fn one_hole(
    side: f64,
    hole: [f64; 2],
    hole_radius: f64,
    periodic: bool,
) -> Result<Configuration<2>> {
    let b = SimBox::new([0.0, 0.0], [side, side], periodic)?;
    let pts = cover_points(side, |p| {
        let dx = p[0] - hole[0];
        let dy = p[1] - hole[1];
        dx * dx + dy * dy > hole_radius * hole_radius
    });
    Configuration::explicit(b, pts, 1)
}

/// Horizontal chain of overlapping balls: percolates in x only. The
/// effective matrix degenerates in y, which the audit must flag.
pub fn sausage(length: f64, height: f64) -> Result<Configuration<2>> {
    let b = SimBox::new([0.0, 0.0], [length, height], false)?;
    let y = height / 2.0;
    let n = (length / 0.8).floor() as usize;
    let pts: Vec<[f64; 2]> = (0..n).map(|i| [0.4 + 0.8 * i as f64, y]).collect();
    Configuration::explicit(b, pts, 1)
}

/// Degenerate counterexample: a chain of balls whose δ = ρ′ lattice trace is
/// a single row of sites. The trace has no vertical edges, so the effective
/// matrix has an exactly zero eigenvalue and the audit must flag it.
pub fn degenerate_line() -> Result<Configuration<2>> {
    let b = SimBox::new([0.0, 0.0], [20.0, 4.0], false)?;
    let pts: Vec<[f64; 2]> = (1..20).map(|i| [i as f64, 2.0]).collect();
    Configuration::explicit(b, pts, 1)
}

pub fn degenerate_line_radii() -> RadiusPair {
    RadiusPair::new(0.6, 1.0).unwrap()
}

/// Supercritical Poisson geometry: λρ² comfortably above the continuum
/// percolation threshold (≈ 0.36 for unit disks).
pub struct PoissonBenchmark {
    pub intensity: f64,
    pub radii: RadiusPair,
    pub side: f64,
    pub seed: u64,
}

impl Default for PoissonBenchmark {
    fn default() -> Self {
        // dense enough that diffusive scaling homogenizes within desk-scale
        // horizons, and a box large enough that 1024-unit paths started at
        // the center essentially never reach the walls
        PoissonBenchmark {
            intensity: 1.3,
            radii: RadiusPair::new(1.0, 1.2).unwrap(),
            side: 240.0,
            seed: 20_240_915,
        }
    }
}

impl PoissonBenchmark {
    pub fn sample(&self) -> Result<Configuration<2>> {
        let b = SimBox::new([0.0, 0.0], [self.side, self.side], false)?;
        sample_poisson(self.intensity, b, RngStream::new(self.seed, 0))
    }

    pub fn decompose(&self) -> Result<ClusterDecomposition<2>> {
        build_clusters(&self.sample()?, self.radii)
    }
}
