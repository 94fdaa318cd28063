//! Diffusive-scaling experiments: scale paths, estimate limiting covariance,
//! test Gaussianity, and track the corrector along paths.
//!
//! The protocol is quenched: one fixed environment per experiment, all
//! randomness in the paths. Paths fan out over independent RNG streams, so
//! results are independent of the thread layout.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::cluster::ClusterDecomposition;
use crate::config::RngStream;
use crate::corrector::{CorrectorSolution, DiscreteForm, EffectiveMatrix, NodeInterpolant};
use crate::diffusion::{
    simulate_lattice_walk, simulate_reflected_euler, DiffusionPath, Scheme, SimParams,
};
use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::lattice::LatticeGraph;
use crate::linalg::{cholesky, forward_solve, sub, symmetric_eigenvalues, Matrix, Vector};
use crate::stats::{
    excess_kurtosis, jackknife_se, ks_critical_95, ks_statistic, normal_cdf, wilson_interval,
};

/// Diffusive rescaling: positions by ε, times by ε².
pub fn scale_path<const D: usize>(path: &DiffusionPath<D>, epsilon: f64) -> DiffusionPath<D> {
    DiffusionPath {
        times: path.times.iter().map(|t| t * epsilon * epsilon).collect(),
        positions: path
            .positions
            .iter()
            .map(|p| std::array::from_fn(|i| p[i] * epsilon))
            .collect(),
        reflections: path
            .reflections
            .iter()
            .map(|r| crate::diffusion::TimedReflection {
                time: r.time * epsilon * epsilon,
                event: crate::cluster::ReflectionEvent {
                    position: std::array::from_fn(|i| r.event.position[i] * epsilon),
                    ball: r.event.ball,
                },
            })
            .collect(),
    }
}

#[derive(Debug, Clone)]
pub struct CovarianceEstimate<const D: usize> {
    pub matrix: Matrix<D>,
    /// 1.96 × delete-one jackknife SE per entry.
    pub ci_radius: Matrix<D>,
    pub mean: Vector<D>,
    pub n: usize,
}

/// Empirical covariance of path displacements at time `t` across scaled
/// paths, with jackknife confidence radii. Needs at least 100 paths.
pub fn estimate_covariance<const D: usize>(
    paths: &[DiffusionPath<D>],
    t: f64,
) -> Result<CovarianceEstimate<D>> {
    let endpoints: Vec<Vector<D>> = paths
        .iter()
        .map(|p| p.position_at(t).map(|x| sub(x, p.start())))
        .collect::<Result<_>>()?;
    covariance_of_samples(&endpoints)
}

/// Covariance of displacement samples with jackknife radii.
pub fn covariance_of_samples<const D: usize>(
    samples: &[Vector<D>],
) -> Result<CovarianceEstimate<D>> {
    let n = samples.len();
    if n < 100 {
        return Err(Error::invalid(format!(
            "covariance estimation needs at least 100 paths, got {n}"
        )));
    }
    let nf = n as f64;
    let mut mean = [0.0; D];
    for x in samples {
        for i in 0..D {
            mean[i] += x[i];
        }
    }
    for m in mean.iter_mut() {
        *m /= nf;
    }
    let mut cov = [[0.0; D]; D];
    for x in samples {
        for i in 0..D {
            for j in 0..D {
                cov[i][j] += (x[i] - mean[i]) * (x[j] - mean[j]);
            }
        }
    }
    for row in cov.iter_mut() {
        for v in row.iter_mut() {
            *v /= nf - 1.0;
        }
    }
    // delete-one replicates per entry
    let mut ci = [[0.0; D]; D];
    for i in 0..D {
        for j in 0..D {
            let reps: Vec<f64> = (0..n)
                .map(|k| {
                    let mut m_i = 0.0;
                    let mut m_j = 0.0;
                    for (l, x) in samples.iter().enumerate() {
                        if l != k {
                            m_i += x[i];
                            m_j += x[j];
                        }
                    }
                    m_i /= nf - 1.0;
                    m_j /= nf - 1.0;
                    let mut c = 0.0;
                    for (l, x) in samples.iter().enumerate() {
                        if l != k {
                            c += (x[i] - m_i) * (x[j] - m_j);
                        }
                    }
                    c / (nf - 2.0)
                })
                .collect();
            ci[i][j] = 1.96 * jackknife_se(&reps);
        }
    }
    Ok(CovarianceEstimate {
        matrix: cov,
        ci_radius: ci,
        mean,
        n,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GaussianityReport {
    /// Per-coordinate KS distance of the whitened samples to N(0,1).
    pub ks: Vec<f64>,
    pub ks_critical_95: f64,
    pub ks_pass: bool,
    pub kurtosis: Vec<f64>,
    /// |ρ| per off-diagonal pair of whitened coordinates.
    pub cross_correlation: Vec<f64>,
    pub cross_correlation_bound: f64,
    pub n: usize,
}

/// Whiten displacement samples by D_ref·t and test per-coordinate normality.
pub fn gaussianity_test<const D: usize>(
    samples: &[Vector<D>],
    d_ref: &Matrix<D>,
    t: f64,
) -> Result<GaussianityReport> {
    let mut scaled = *d_ref;
    for row in scaled.iter_mut() {
        for v in row.iter_mut() {
            *v *= t;
        }
    }
    let l = cholesky(&scaled)
        .ok_or_else(|| Error::invalid("reference covariance is not positive-definite"))?;
    let whitened: Vec<Vector<D>> = samples.iter().map(|x| forward_solve(&l, *x)).collect();
    let n = samples.len();
    let mut ks = Vec::with_capacity(D);
    let mut kurtosis = Vec::with_capacity(D);
    for k in 0..D {
        let coords: Vec<f64> = whitened.iter().map(|w| w[k]).collect();
        ks.push(ks_statistic(&coords, normal_cdf));
        kurtosis.push(excess_kurtosis(&coords));
    }
    let mut cross = Vec::new();
    for k in 0..D {
        for l2 in (k + 1)..D {
            let xs: Vec<f64> = whitened.iter().map(|w| w[k]).collect();
            let ys: Vec<f64> = whitened.iter().map(|w| w[l2]).collect();
            let mx = crate::stats::mean(&xs);
            let my = crate::stats::mean(&ys);
            let mut sxy = 0.0;
            let mut sxx = 0.0;
            let mut syy = 0.0;
            for i in 0..n {
                sxy += (xs[i] - mx) * (ys[i] - my);
                sxx += (xs[i] - mx) * (xs[i] - mx);
                syy += (ys[i] - my) * (ys[i] - my);
            }
            cross.push((sxy / (sxx * syy).sqrt()).abs());
        }
    }
    let crit = ks_critical_95(n);
    Ok(GaussianityReport {
        ks_pass: ks.iter().all(|&d| d < crit),
        ks,
        ks_critical_95: crit,
        kurtosis,
        cross_correlation: cross,
        cross_correlation_bound: 4.0 / (n as f64).sqrt(),
        n,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PdAudit {
    pub eigenvalues: Vec<f64>,
    pub min_eigenvalue: f64,
    pub condition_number: f64,
    pub condition_bound: f64,
    pub positive_definite: bool,
    pub pass: bool,
}

/// Eigenvalue audit of an effective matrix: flags a non-positive spectrum or
/// a condition number beyond the bound.
pub fn positive_definiteness_audit<const D: usize>(
    matrix: &Matrix<D>,
    condition_bound: f64,
) -> PdAudit {
    let ev = symmetric_eigenvalues(matrix);
    let min = ev[0];
    let max = ev[D - 1];
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    let pd = min > 0.0;
    PdAudit {
        eigenvalues: ev.to_vec(),
        min_eigenvalue: min,
        condition_number: cond,
        condition_bound,
        positive_definite: pd,
        pass: pd && cond <= condition_bound,
    }
}

/// Per-path summary extracted while the full path is still in memory.
#[derive(Debug, Clone)]
struct PathSummary<const D: usize> {
    /// ε·(X_{T/ε²} − X₀)
    scaled_endpoint: Vector<D>,
    /// ε·(y(X_{T/ε²}) − y(X₀)): endpoint of the martingale part
    scaled_y_endpoint: Vector<D>,
    /// sup_t |χ(X_t)| (unscaled)
    sup_chi: f64,
    /// sup_t |X_t − X₀|
    sup_disp: f64,
    /// sup_t |y(X_t) − y(X₀)|
    sup_y_disp: f64,
    interpolation_misses: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExitSplit {
    pub r: f64,
    /// P(sup |ε(X−X₀)| ≥ R)
    pub lhs: f64,
    /// P(sup |ε(y(X)−y(X₀))| > R−1)
    pub rhs_martingale: f64,
    /// P(sup |εχ(X)| ≥ 1)
    pub rhs_corrector: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsilonBlock {
    pub epsilon: f64,
    pub n_paths: usize,
    pub cov: Vec<Vec<f64>>,
    pub cov_ci: Vec<Vec<f64>>,
    pub ks: Vec<f64>,
    pub ks_critical_95: f64,
    pub ks_pass: bool,
    pub kurtosis: Vec<f64>,
    pub cross_correlation: Vec<f64>,
    /// threshold (as printed) → empirical exceedance of sup |εχ| over it
    pub exceedance: BTreeMap<String, f64>,
    pub exceedance_wilson: BTreeMap<String, (f64, f64)>,
    pub exit_split: ExitSplit,
    /// max relative gap of diagonal cov entries against D_ref·t
    pub cov_rel_gap: f64,
    /// covariance of the harmonic image against D_ref·t (martingale part)
    pub y_cov_rel_gap: f64,
    pub interpolation_misses: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResults {
    pub t: f64,
    pub d_reference: Vec<Vec<f64>>,
    pub blocks: Vec<EpsilonBlock>,
}

/// One quenched scaling experiment: a fixed environment with its solved
/// corrector, a ladder of ε, and per-ε path ensembles.
pub struct ScalingExperiment<'a, const D: usize> {
    pub decomp: &'a ClusterDecomposition<D>,
    pub graph: &'a LatticeGraph<D>,
    pub form: &'a DiscreteForm<'a, D>,
    pub solutions: &'a [CorrectorSolution],
    pub field: &'a FieldSpec,
    pub effective: &'a EffectiveMatrix<D>,
    pub scheme: Scheme,
    pub epsilon_ladder: Vec<f64>,
    pub t: f64,
    pub n_paths: usize,
    pub dt: f64,
    pub thresholds: Vec<f64>,
    pub exit_split_r: f64,
    pub rng: RngStream,
    pub start: Vector<D>,
}

impl<'a, const D: usize> ScalingExperiment<'a, D> {
    fn simulate_one(&self, horizon: f64, stream: RngStream) -> Result<DiffusionPath<D>> {
        let params = SimParams {
            dt: self.dt,
            t_horizon: horizon,
            scheme: self.scheme,
            rng: stream,
            start: self.start,
            store_stride: 1,
            diffusion_coeff: self.field.constant_scalar().unwrap_or(0.5),
        };
        match self.scheme {
            Scheme::ReflectedEuler => {
                if self.field.constant_scalar().is_none() {
                    return Err(Error::invalid(
                        "reflected Euler requires a constant scalar field",
                    ));
                }
                simulate_reflected_euler(self.decomp, &params)
            }
            Scheme::LatticeWalk => {
                simulate_lattice_walk(self.graph, self.decomp, self.field, &params)
            }
        }
    }

    fn summarize(&self, path: &DiffusionPath<D>, epsilon: f64) -> PathSummary<D> {
        let chi_interps: Vec<NodeInterpolant<D>> = self
            .solutions
            .iter()
            .map(|s| NodeInterpolant::new(self.form, &s.chi))
            .collect();
        let y_interps: Vec<NodeInterpolant<D>> = self
            .solutions
            .iter()
            .map(|s| NodeInterpolant::new(self.form, &s.harmonic))
            .collect();
        let x0 = path.start();
        let y0: Vec<f64> = (0..D)
            .map(|k| y_interps[k].value(x0).unwrap_or(x0[k]))
            .collect();
        let mut sup_chi = 0.0f64;
        let mut sup_disp = 0.0f64;
        let mut sup_y = 0.0f64;
        let mut misses = 0usize;
        for &x in &path.positions {
            let mut chi2 = 0.0;
            let mut y2 = 0.0;
            for k in 0..D {
                match chi_interps[k].value(x) {
                    Some(c) => chi2 += c * c,
                    None => misses += 1,
                }
                match y_interps[k].value(x) {
                    Some(y) => {
                        let dy = y - y0[k];
                        y2 += dy * dy;
                    }
                    None => {}
                }
            }
            sup_chi = sup_chi.max(chi2.sqrt());
            sup_y = sup_y.max(y2.sqrt());
            sup_disp = sup_disp.max(crate::linalg::dist(x, x0));
        }
        let end = *path.positions.last().unwrap();
        let y_end: Vec<f64> = (0..D)
            .map(|k| y_interps[k].value(end).unwrap_or(end[k]))
            .collect();
        PathSummary {
            scaled_endpoint: std::array::from_fn(|i| epsilon * (end[i] - x0[i])),
            scaled_y_endpoint: std::array::from_fn(|i| epsilon * (y_end[i] - y0[i])),
            sup_chi: epsilon * sup_chi,
            sup_disp: epsilon * sup_disp,
            sup_y_disp: epsilon * sup_y,
            interpolation_misses: misses,
        }
    }

    pub fn run(&self) -> Result<ExperimentResults> {
        if self.n_paths < 100 {
            return Err(Error::invalid(
                "scaling experiments need at least 100 paths",
            ));
        }
        let mut sorted = self.epsilon_ladder.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if sorted.is_empty() || sorted.iter().any(|&e| !(0.0 < e && e <= 1.0)) {
            return Err(Error::invalid("epsilon ladder must lie in (0, 1]"));
        }
        let d_ref = self.effective.matrix;
        let mut blocks = Vec::new();
        for (eps_idx, &epsilon) in sorted.iter().enumerate() {
            let horizon = self.t / (epsilon * epsilon);
            let summaries: Vec<PathSummary<D>> = (0..self.n_paths)
                .into_par_iter()
                .map(|i| {
                    let stream = self.rng.substream(((eps_idx as u64) << 32) | i as u64);
                    self.simulate_one(horizon, stream)
                        .map(|p| self.summarize(&p, epsilon))
                })
                .collect::<Result<_>>()?;

            let endpoints: Vec<Vector<D>> = summaries.iter().map(|s| s.scaled_endpoint).collect();
            let cov = covariance_of_samples(&endpoints)?;
            let gauss = gaussianity_test(&endpoints, &d_ref, self.t)?;

            let mut exceedance = BTreeMap::new();
            let mut exceedance_wilson = BTreeMap::new();
            for &thr in &self.thresholds {
                let k = summaries.iter().filter(|s| s.sup_chi > thr).count();
                let p = k as f64 / self.n_paths as f64;
                let key = format!("{thr}");
                exceedance.insert(key.clone(), p);
                exceedance_wilson.insert(key, wilson_interval(k, self.n_paths));
            }

            let r = self.exit_split_r;
            let lhs =
                summaries.iter().filter(|s| s.sup_disp >= r).count() as f64 / self.n_paths as f64;
            let rhs_m = summaries.iter().filter(|s| s.sup_y_disp > r - 1.0).count() as f64
                / self.n_paths as f64;
            let rhs_c =
                summaries.iter().filter(|s| s.sup_chi >= 1.0).count() as f64 / self.n_paths as f64;
            let exit_split = ExitSplit {
                r,
                lhs,
                rhs_martingale: rhs_m,
                rhs_corrector: rhs_c,
                holds: lhs <= rhs_m + rhs_c + 1e-12,
            };

            let mut cov_rel_gap = 0.0f64;
            for k in 0..D {
                let want = d_ref[k][k] * self.t;
                cov_rel_gap = cov_rel_gap.max((cov.matrix[k][k] - want).abs() / want);
            }
            let y_endpoints: Vec<Vector<D>> =
                summaries.iter().map(|s| s.scaled_y_endpoint).collect();
            let y_cov = covariance_of_samples(&y_endpoints)?;
            let mut y_cov_rel_gap = 0.0f64;
            for k in 0..D {
                let want = d_ref[k][k] * self.t;
                y_cov_rel_gap = y_cov_rel_gap.max((y_cov.matrix[k][k] - want).abs() / want);
            }

            blocks.push(EpsilonBlock {
                epsilon,
                n_paths: self.n_paths,
                cov: cov.matrix.iter().map(|r| r.to_vec()).collect(),
                cov_ci: cov.ci_radius.iter().map(|r| r.to_vec()).collect(),
                ks: gauss.ks.clone(),
                ks_critical_95: gauss.ks_critical_95,
                ks_pass: gauss.ks_pass,
                kurtosis: gauss.kurtosis.clone(),
                cross_correlation: gauss.cross_correlation.clone(),
                exceedance,
                exceedance_wilson,
                exit_split,
                cov_rel_gap,
                y_cov_rel_gap,
                interpolation_misses: summaries.iter().map(|s| s.interpolation_misses).sum(),
            });
        }
        Ok(ExperimentResults {
            t: self.t,
            d_reference: d_ref.iter().map(|r| r.to_vec()).collect(),
            blocks,
        })
    }
}

/// Is a sequence strictly decreasing on point estimates?
pub fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn synthetic_bm_path(stream: RngStream, horizon: f64, dt: f64) -> DiffusionPath<2> {
        let mut rng = stream.rng();
        let n = (horizon / dt).round() as usize;
        let mut times = vec![0.0];
        let mut positions = vec![[0.0, 0.0]];
        let mut p = [0.0, 0.0];
        for i in 1..=n {
            for v in p.iter_mut() {
                let xi: f64 = StandardNormal.sample(&mut rng);
                *v += dt.sqrt() * xi;
            }
            times.push(i as f64 * dt);
            positions.push(p);
        }
        DiffusionPath {
            times,
            positions,
            reflections: vec![],
        }
    }

    #[test]
    fn scaling_by_one_is_the_identity() {
        let p = synthetic_bm_path(RngStream::new(1, 0), 1.0, 0.01);
        let s = scale_path(&p, 1.0);
        assert_eq!(p.times, s.times);
        assert_eq!(p.positions, s.positions);
    }

    #[test]
    fn dyadic_scalings_compose_exactly() {
        let p = synthetic_bm_path(RngStream::new(2, 0), 1.0, 0.01);
        let twice = scale_path(&scale_path(&p, 0.5), 0.25);
        let once = scale_path(&p, 0.125);
        assert_eq!(twice.times, once.times);
        assert_eq!(twice.positions, once.positions);
    }

    #[test]
    fn scaled_bm_covariance_is_epsilon_free() {
        // self-similarity: the time-t covariance of the scaled process is tI
        for eps in [1.0f64, 0.5, 0.25] {
            let horizon = 1.0 / (eps * eps);
            let paths: Vec<DiffusionPath<2>> = (0..400)
                .map(|i| synthetic_bm_path(RngStream::new(33, i), horizon, 0.01 * horizon))
                .collect();
            let scaled: Vec<DiffusionPath<2>> = paths.iter().map(|p| scale_path(p, eps)).collect();
            let est = estimate_covariance(&scaled, 1.0).unwrap();
            for k in 0..2 {
                for l in 0..2 {
                    let want = if k == l { 1.0 } else { 0.0 };
                    assert!(
                        (est.matrix[k][l] - want).abs() < 3.0 * est.ci_radius[k][l] + 0.02,
                        "eps {eps}: cov[{k}][{l}] = {} ± {}",
                        est.matrix[k][l],
                        est.ci_radius[k][l]
                    );
                }
            }
        }
    }

    #[test]
    fn covariance_requires_enough_paths() {
        let paths: Vec<DiffusionPath<2>> = (0..10)
            .map(|i| synthetic_bm_path(RngStream::new(4, i), 1.0, 0.1))
            .collect();
        assert!(estimate_covariance(&paths, 1.0).is_err());
    }

    #[test]
    fn covariance_is_symmetric_psd_by_construction() {
        let paths: Vec<DiffusionPath<2>> = (0..150)
            .map(|i| synthetic_bm_path(RngStream::new(5, i), 1.0, 0.05))
            .collect();
        let est = estimate_covariance(&paths, 1.0).unwrap();
        assert_eq!(est.matrix[0][1], est.matrix[1][0]);
        let ev = symmetric_eigenvalues(&est.matrix);
        assert!(ev[0] >= 0.0);
    }

    #[test]
    fn gaussian_samples_pass_and_constants_fail() {
        let mut rng = RngStream::new(6, 0).rng();
        let samples: Vec<[f64; 2]> = (0..800)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                [a, b]
            })
            .collect();
        let id = [[1.0, 0.0], [0.0, 1.0]];
        let rep = gaussianity_test(&samples, &id, 1.0).unwrap();
        assert!(rep.ks_pass, "ks = {:?} crit {}", rep.ks, rep.ks_critical_95);
        assert!(rep.cross_correlation[0] < rep.cross_correlation_bound);
        assert!(rep.kurtosis.iter().all(|k| k.abs() < 0.6));

        let constants: Vec<[f64; 2]> = vec![[0.7, -0.3]; 800];
        let bad = gaussianity_test(&constants, &id, 1.0).unwrap();
        assert!(!bad.ks_pass);
    }

    #[test]
    fn whitening_with_the_true_covariance_decorrelates() {
        // correlated Gaussians whitened by their true covariance
        let mut rng = RngStream::new(7, 0).rng();
        let true_cov = [[2.0, 0.8], [0.8, 1.0]];
        let l = cholesky(&true_cov).unwrap();
        let samples: Vec<[f64; 2]> = (0..2000)
            .map(|_| {
                let z: [f64; 2] = [
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                ];
                [l[0][0] * z[0], l[1][0] * z[0] + l[1][1] * z[1]]
            })
            .collect();
        let rep = gaussianity_test(&samples, &true_cov, 1.0).unwrap();
        assert!(rep.ks_pass);
        assert!(rep.cross_correlation[0] < rep.cross_correlation_bound);
    }

    #[test]
    fn singular_reference_is_rejected() {
        let samples: Vec<[f64; 2]> = vec![[0.0, 0.0]; 200];
        let singular = [[1.0, 1.0], [1.0, 1.0]];
        assert!(gaussianity_test(&samples, &singular, 1.0).is_err());
    }

    #[test]
    fn pd_audit_flags_degenerate_matrices() {
        let id = [[1.0, 0.0], [0.0, 1.0]];
        let a = positive_definiteness_audit(&id, 1e6);
        assert!(a.pass && a.positive_definite);
        assert!((a.condition_number - 1.0).abs() < 1e-12);

        let zero_eig = [[1.0, 1.0], [1.0, 1.0]];
        let b = positive_definiteness_audit(&zero_eig, 1e6);
        assert!(!b.pass);

        let ill = [[1.0, 0.0], [0.0, 1e-9]];
        let c = positive_definiteness_audit(&ill, 1e6);
        assert!(c.positive_definite && !c.pass);
    }

    #[test]
    fn exceedance_rows_are_probabilities_and_monotone_in_threshold() {
        // direct check of the tabulation logic on synthetic sups
        let sups = [0.05, 0.12, 0.3, 0.01, 0.2];
        let thresholds = [0.05, 0.1, 0.2];
        let mut prev = 1.0f64;
        for &thr in &thresholds {
            let p = sups.iter().filter(|&&s| s > thr).count() as f64 / sups.len() as f64;
            assert!((0.0..=1.0).contains(&p));
            assert!(p <= prev);
            prev = p;
        }
        assert!(strictly_decreasing(&[0.5, 0.3, 0.1]));
        assert!(!strictly_decreasing(&[0.5, 0.5, 0.1]));
    }
}
