//! Path simulation: reflected Euler in the continuum and the conductance
//! walk on the lattice.
//!
//! The Euler scheme is only offered for constant scalar fields c·I, where the
//! form's generator carries no interface drift; the conductance walk is the
//! form-side discretization that handles every shipped field. Both schemes
//! are conservative: no recorded position ever leaves the cluster.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cluster::{ClusterDecomposition, ReflectionEvent};
use crate::config::{Configuration, RngStream};
use crate::corrector::{CorrectorSolution, DiscreteForm, NodeInterpolant};
use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::lattice::LatticeGraph;
use crate::linalg::{add, sub, Vector};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ReflectedEuler,
    LatticeWalk,
}

#[derive(Debug, Clone)]
pub struct SimParams<const D: usize> {
    pub dt: f64,
    pub t_horizon: f64,
    pub scheme: Scheme,
    pub rng: RngStream,
    pub start: Vector<D>,
    /// Record every n-th step; reflection events are always complete.
    pub store_stride: usize,
    /// Diffusion coefficient c of the constant field c·I (Euler scheme).
    pub diffusion_coeff: f64,
}

impl<const D: usize> SimParams<D> {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_horizon >= 0.0) {
            return Err(Error::invalid("need dt > 0 and t_horizon >= 0"));
        }
        if self.store_stride == 0 {
            return Err(Error::invalid("store_stride must be at least 1"));
        }
        if !(self.diffusion_coeff > 0.0) {
            return Err(Error::invalid("diffusion coefficient must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TimedReflection<const D: usize> {
    pub time: f64,
    pub event: ReflectionEvent<D>,
}

#[derive(Debug, Clone)]
pub struct DiffusionPath<const D: usize> {
    pub times: Vec<f64>,
    pub positions: Vec<Vector<D>>,
    pub reflections: Vec<TimedReflection<D>>,
}

impl<const D: usize> DiffusionPath<D> {
    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn start(&self) -> Vector<D> {
        self.positions[0]
    }

    /// Position at time t by linear interpolation of the recorded samples.
    pub fn position_at(&self, t: f64) -> Result<Vector<D>> {
        if t < 0.0 || t > self.horizon() + 1e-9 {
            return Err(Error::invalid(format!(
                "time {t} outside the recorded horizon {}",
                self.horizon()
            )));
        }
        let idx = self.times.partition_point(|&s| s <= t);
        if idx == 0 {
            return Ok(self.positions[0]);
        }
        if idx >= self.times.len() {
            return Ok(*self.positions.last().unwrap());
        }
        let (t0, t1) = (self.times[idx - 1], self.times[idx]);
        let (p0, p1) = (self.positions[idx - 1], self.positions[idx]);
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        Ok(std::array::from_fn(|i| p0[i] + w * (p1[i] - p0[i])))
    }

    /// Recorded sample at the largest time ≤ t.
    pub fn sample_at_or_before(&self, t: f64) -> (f64, Vector<D>) {
        let idx = self.times.partition_point(|&s| s <= t);
        let i = idx.saturating_sub(1);
        (self.times[i], self.positions[i])
    }
}

#[allow(clippy::too_many_arguments)]
fn euler_advance<const D: usize>(
    decomp: &ClusterDecomposition<D>,
    rng: &mut rand_chacha::ChaCha8Rng,
    pos_w: &mut Vector<D>,
    pos_u: &mut Vector<D>,
    t: &mut f64,
    dt: f64,
    dt_floor: f64,
    c: f64,
    wrap: bool,
    reflections: &mut Vec<TimedReflection<D>>,
) -> Result<()> {
    let sigma = (2.0 * c * dt).sqrt();
    let near = decomp.depth(*pos_w)? < 3.0 * sigma;
    if near && dt > dt_floor {
        euler_advance(
            decomp,
            rng,
            pos_w,
            pos_u,
            t,
            dt / 2.0,
            dt_floor,
            c,
            wrap,
            reflections,
        )?;
        return euler_advance(
            decomp,
            rng,
            pos_w,
            pos_u,
            t,
            dt / 2.0,
            dt_floor,
            c,
            wrap,
            reflections,
        );
    }
    let step: Vector<D> = std::array::from_fn(|_| {
        let xi: f64 = StandardNormal.sample(rng);
        sigma * xi
    });
    let q = add(*pos_w, step);
    let q_query = if wrap { decomp.domain.wrap(q) } else { q };
    if decomp.contains(q_query) {
        *pos_u = add(*pos_u, step);
        *pos_w = q_query;
        *t += dt;
        return Ok(());
    }
    match decomp.reflect_segment(*pos_w, q) {
        Ok((end, events)) => {
            let disp = sub(end, *pos_w);
            *pos_u = add(*pos_u, disp);
            *pos_w = if wrap { decomp.domain.wrap(end) } else { end };
            *t += dt;
            for e in events {
                reflections.push(TimedReflection { time: *t, event: e });
            }
            Ok(())
        }
        Err(Error::StepRejected { .. }) if dt > dt_floor => {
            euler_advance(
                decomp,
                rng,
                pos_w,
                pos_u,
                t,
                dt / 2.0,
                dt_floor,
                c,
                wrap,
                reflections,
            )?;
            euler_advance(
                decomp,
                rng,
                pos_w,
                pos_u,
                t,
                dt / 2.0,
                dt_floor,
                c,
                wrap,
                reflections,
            )
        }
        Err(Error::StepRejected { reflections: n }) => Err(Error::SimulationFailure {
            t: *t,
            message: format!("step rejected after {n} reflections at the dt floor"),
        }),
        Err(e) => Err(e),
    }
}

/// Reflected Euler–Maruyama for the constant field c·I: proposals
/// p + √(2c·dt)·ξ pushed through specular reflection, with local halving of
/// the step when the boundary is within 3 proposal standard deviations.
/// On a periodic box, membership queries wrap while the recorded positions
/// stay unwrapped.
pub fn simulate_reflected_euler<const D: usize>(
    decomp: &ClusterDecomposition<D>,
    params: &SimParams<D>,
) -> Result<DiffusionPath<D>> {
    params.validate()?;
    let domain = decomp.domain;
    let wrap = domain.periodic;
    let start_w = if wrap {
        domain.wrap(params.start)
    } else {
        params.start
    };
    if !decomp.contains(start_w) {
        return Err(Error::domain(
            "simulate_reflected_euler: start outside the cluster",
        ));
    }
    let mut rng = params.rng.rng();
    let c = params.diffusion_coeff;
    let dt_floor = params.dt / 1024.0;

    let mut times = vec![0.0];
    let mut positions = vec![params.start];
    let mut reflections = Vec::new();

    let mut pos_w = start_w;
    let mut pos_u = params.start;
    let mut t = 0.0;
    let mut step_index = 0usize;

    while t < params.t_horizon - 1e-12 {
        let dt = params.dt.min(params.t_horizon - t);
        euler_advance(
            decomp,
            &mut rng,
            &mut pos_w,
            &mut pos_u,
            &mut t,
            dt,
            dt_floor,
            c,
            wrap,
            &mut reflections,
        )?;
        step_index += 1;
        if step_index % params.store_stride == 0 || t >= params.t_horizon - 1e-12 {
            times.push(t);
            positions.push(pos_u);
        }
    }
    Ok(DiffusionPath {
        times,
        positions,
        reflections,
    })
}

/// Continuous-time conductance walk on the open sites: jump rate a(mid)/δ²
/// per incident edge, missing edges reflect by simply not firing. Positions
/// are unwrapped when the graph is periodic.
pub fn simulate_lattice_walk<const D: usize>(
    graph: &LatticeGraph<D>,
    decomp: &ClusterDecomposition<D>,
    field: &FieldSpec,
    params: &SimParams<D>,
) -> Result<DiffusionPath<D>> {
    params.validate()?;
    let site0 = graph
        .nearest_open_site(params.start, 2)
        .ok_or_else(|| Error::domain("simulate_lattice_walk: start region is closed"))?;
    let mut rng = params.rng.rng();
    let delta = graph.delta;
    let inv_d2 = 1.0 / (delta * delta);

    let mut site = site0;
    let mut pos_u = graph.position(site0);
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut positions = vec![pos_u];
    let mut jumps = 0usize;

    loop {
        let mut moves: [(usize, f64, usize, i64); 8] = [(0, 0.0, 0, 0); 8];
        let mut n_moves = 0usize;
        let mut total = 0.0;
        for axis in 0..D {
            for dir in [-1i64, 1] {
                if let Some(nb) = graph.neighbor(site, axis, dir) {
                    if !graph.is_open(nb) {
                        continue;
                    }
                    let mut mid = graph.position(site);
                    mid[axis] += 0.5 * dir as f64 * delta;
                    let a = field.evaluate(decomp, mid);
                    let rate = a[axis][axis] * inv_d2;
                    moves[n_moves] = (nb, rate, axis, dir);
                    n_moves += 1;
                    total += rate;
                }
            }
        }
        if total == 0.0 {
            times.push(params.t_horizon);
            positions.push(pos_u);
            break;
        }
        let u: f64 = rng.random();
        let hold = -(1.0 - u).ln() / total;
        if t + hold >= params.t_horizon {
            times.push(params.t_horizon);
            positions.push(pos_u);
            break;
        }
        t += hold;
        let mut pick = rng.random::<f64>() * total;
        let mut chosen = n_moves - 1;
        for (i, m) in moves[..n_moves].iter().enumerate() {
            if pick < m.1 {
                chosen = i;
                break;
            }
            pick -= m.1;
        }
        let (nb, _, axis, dir) = moves[chosen];
        site = nb;
        pos_u[axis] += dir as f64 * delta;
        jumps += 1;
        if jumps % params.store_stride == 0 {
            times.push(t);
            positions.push(pos_u);
        }
    }
    Ok(DiffusionPath {
        times,
        positions,
        reflections: Vec::new(),
    })
}

/// Points of the configuration within `window_radius` of the path position at
/// time t, re-centered at that position: the finite shadow of the shifted
/// environment.
pub fn environment_window<const D: usize>(
    config: &Configuration<D>,
    path: &DiffusionPath<D>,
    t: f64,
    window_radius: f64,
) -> Vec<Vector<D>> {
    let (_, x) = path.sample_at_or_before(t);
    config
        .points
        .iter()
        .filter_map(|&p| {
            let q = sub(p, x);
            if crate::linalg::norm(q) <= window_radius {
                Some(q)
            } else {
                None
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct QvReport {
    /// Mean realized quadratic covariation per direction pair.
    pub realized: Vec<Vec<f64>>,
    /// Mean ∫ 2⟨a∇yᵏ, ∇yˡ⟩(X_s) ds along the paths.
    pub integrated: Vec<Vec<f64>>,
    /// Worst relative gap between the two over diagonal entries.
    pub rel_discrepancy: f64,
    /// |mean increment| / SE per direction: a martingale should sit near 0.
    pub martingale_z: Vec<f64>,
    pub n_increments: usize,
}

/// Compare realized quadratic covariation of the harmonic images y(X) against
/// the time integral of 2⟨a∇yᵏ,∇yˡ⟩ along the recorded path partition.
pub fn qv_check<const D: usize>(
    form: &DiscreteForm<D>,
    solutions: &[CorrectorSolution],
    field: &FieldSpec,
    decomp: &ClusterDecomposition<D>,
    paths: &[DiffusionPath<D>],
) -> Result<QvReport> {
    if solutions.len() != D {
        return Err(Error::invalid("need one solution per direction"));
    }
    let interps: Vec<NodeInterpolant<D>> = solutions
        .iter()
        .map(|s| NodeInterpolant::new(form, &s.harmonic))
        .collect();
    let mut realized = vec![vec![0.0; D]; D];
    let mut integrated = vec![vec![0.0; D]; D];
    let mut sum_inc = vec![0.0; D];
    let mut sum_inc2 = vec![0.0; D];
    let mut n_increments = 0usize;

    for path in paths {
        let n = path.times.len();
        if n < 2 {
            continue;
        }
        let mut y_prev: Vec<f64> = (0..D)
            .map(|k| {
                interps[k]
                    .value(path.positions[0])
                    .ok_or_else(|| Error::invalid("path leaves the solved window"))
            })
            .collect::<Result<_>>()?;
        for i in 1..n {
            let x = path.positions[i];
            let x_prev = path.positions[i - 1];
            let dt = path.times[i] - path.times[i - 1];
            let y: Vec<f64> = (0..D)
                .map(|k| {
                    interps[k]
                        .value(x)
                        .ok_or_else(|| Error::invalid("path leaves the solved window"))
                })
                .collect::<Result<_>>()?;
            let a = field.evaluate(decomp, x_prev);
            let grads: Vec<Vector<D>> = (0..D)
                .map(|k| interps[k].gradient(x_prev).unwrap_or([0.0; D]))
                .collect();
            for k in 0..D {
                let dk = y[k] - y_prev[k];
                sum_inc[k] += dk;
                sum_inc2[k] += dk * dk;
                for l in 0..D {
                    realized[k][l] += dk * (y[l] - y_prev[l]);
                    let mut f = 0.0;
                    for i1 in 0..D {
                        for j1 in 0..D {
                            f += a[i1][j1] * grads[k][i1] * grads[l][j1];
                        }
                    }
                    integrated[k][l] += 2.0 * f * dt;
                }
            }
            n_increments += 1;
            y_prev = y;
        }
    }
    if n_increments == 0 {
        return Err(Error::invalid("no increments to analyze"));
    }
    let np = paths.len().max(1) as f64;
    for k in 0..D {
        for l in 0..D {
            realized[k][l] /= np;
            integrated[k][l] /= np;
        }
    }
    let mut rel = 0.0f64;
    for k in 0..D {
        if integrated[k][k].abs() > 0.0 {
            rel = rel.max((realized[k][k] - integrated[k][k]).abs() / integrated[k][k].abs());
        }
    }
    let martingale_z = (0..D)
        .map(|k| {
            let n = n_increments as f64;
            let mean = sum_inc[k] / n;
            let var = (sum_inc2[k] / n - mean * mean).max(1e-300);
            mean.abs() / (var / n).sqrt()
        })
        .collect();
    Ok(QvReport {
        realized,
        integrated,
        rel_discrepancy: rel,
        martingale_z,
        n_increments,
    })
}
