//! The six subcommands, generic over the spatial dimension.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use percohom::cluster::{build_clusters, ClusterDecomposition, RadiusPair};
use percohom::config::{
    load_config, sample_perturbed_lattice, sample_poisson, save_config_as, Configuration,
    RngStream, SimBox,
};
use percohom::corrector::{
    assemble, assemble_periodic, default_max_iter, effective_matrix, solve_all_directions,
    sublinearity_profile, DiscreteForm,
};
use percohom::diffusion::{simulate_lattice_walk, simulate_reflected_euler, Scheme, SimParams};
use percohom::field::FieldSpec;
use percohom::lattice::{
    build_delta_graph, crossing_failure_scan, isoperimetric_scan, volume_regularity_scan,
    GeometryReport, IsoKnobs, LatticeGraph,
};
use percohom::linalg::{dist, Vector};
use percohom::qip::{positive_definiteness_audit, ScalingExperiment};
use percohom::Error;

use crate::artifacts::{json_with_meta, write_atomic, write_json, ArtifactMeta};
use crate::runconfig::{BoundaryKind, ProcessKind, RunConfig, SchemeKind, StartMode, StartSpec};

pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub meta: ArtifactMeta,
    pub out_dir: PathBuf,
    pub check: bool,
}

/// Outcome of a command: `check_failures` lists acceptance-style gates that
/// failed when running under `--check`.
pub struct Outcome {
    pub check_failures: Vec<String>,
}

impl Outcome {
    fn ok() -> Self {
        Outcome {
            check_failures: Vec::new(),
        }
    }
}

type CmdResult = Result<Outcome, Error>;

fn vec_to_array<const D: usize>(v: &[f64]) -> Vector<D> {
    std::array::from_fn(|i| v[i])
}

fn build_domain<const D: usize>(cfg: &RunConfig) -> Result<SimBox<D>, Error> {
    SimBox::new(
        vec_to_array::<D>(&cfg.process.box_lower),
        vec_to_array::<D>(&cfg.process.box_upper),
        cfg.process.periodic,
    )
}

pub fn build_configuration<const D: usize>(cfg: &RunConfig) -> Result<Configuration<D>, Error> {
    let domain = build_domain::<D>(cfg)?;
    let stream = RngStream::new(cfg.process.seed, 0);
    match cfg.process.kind {
        ProcessKind::Poisson => {
            sample_poisson(cfg.process.intensity.unwrap_or(0.0), domain, stream)
        }
        ProcessKind::PerturbedLattice => {
            sample_perturbed_lattice(cfg.process.keep_probability.unwrap_or(0.0), domain, stream)
        }
        ProcessKind::Explicit => {
            let path = cfg.process.points_file.clone().unwrap_or_default();
            load_config::<D>(Path::new(&path))
        }
    }
}

fn radii(cfg: &RunConfig) -> Result<RadiusPair, Error> {
    RadiusPair::new(cfg.radii.rho, cfg.radii.rho_prime)
}

/// Cluster build with the reflection-geometry knobs applied.
fn build_decomp<const D: usize>(
    cfg: &RunConfig,
    config: &Configuration<D>,
) -> Result<ClusterDecomposition<D>, Error> {
    let mut decomp = build_clusters(config, radii(cfg)?)?;
    decomp.tol_geom = cfg.radii.tol_geom_factor * cfg.radii.rho_prime;
    decomp.max_reflections = cfg.radii.max_reflections;
    Ok(decomp)
}

fn field(cfg: &RunConfig) -> Result<FieldSpec, Error> {
    let spec = cfg.field.spec();
    spec.validate(cfg.radii.rho_prime)?;
    Ok(spec)
}

fn resolve_start<const D: usize>(
    decomp: &ClusterDecomposition<D>,
    spec: &StartSpec,
) -> Result<Vector<D>, Error> {
    match spec {
        StartSpec::Point(v) => {
            if v.len() != D {
                return Err(Error::invalid("diffusion.start: wrong dimension"));
            }
            let p = vec_to_array::<D>(v);
            if !decomp.contains(p) {
                return Err(Error::domain("diffusion.start: point outside the cluster"));
            }
            Ok(p)
        }
        StartSpec::Named(name) => match name.as_str() {
            "center" => {
                let c = decomp.domain.center();
                if !decomp.contains(c) {
                    return Err(Error::domain(
                        "diffusion.start = center: box center outside the cluster",
                    ));
                }
                Ok(c)
            }
            "cluster_point" => Ok(nearest_cluster_point(decomp, decomp.domain.center())),
            other => Err(Error::invalid(format!(
                "diffusion.start: unknown mode `{other}`"
            ))),
        },
    }
}

fn nearest_cluster_point<const D: usize>(
    decomp: &ClusterDecomposition<D>,
    target: Vector<D>,
) -> Vector<D> {
    let mut best = decomp.points[decomp.index_set[0] as usize];
    let mut best_d = f64::INFINITY;
    for &i in &decomp.index_set {
        let p = decomp.points[i as usize];
        let d = dist(p, target);
        if d < best_d {
            best_d = d;
            best = p;
        }
    }
    best
}

pub fn cmd_generate<const D: usize>(ctx: &Ctx) -> CmdResult {
    let config = build_configuration::<D>(ctx.cfg)?;
    std::fs::create_dir_all(&ctx.out_dir)?;
    let path = ctx.out_dir.join("config.pcfg");
    save_config_as(&config, &path, ctx.cfg.output.binary_config)?;
    let meta_path = ctx.out_dir.join("config.pcfg.meta.json");
    write_json(
        &meta_path,
        &serde_json::json!({ "points": config.len(), "meta": ctx.meta }),
    )?;
    println!(
        "wrote {} ({} points, dim {})",
        path.display(),
        config.len(),
        D
    );
    Ok(Outcome::ok())
}

pub fn cmd_geometry<const D: usize>(ctx: &Ctx) -> CmdResult {
    let cfg = ctx.cfg;
    let config = build_configuration::<D>(cfg)?;
    let decomp = build_clusters(&config, radii(cfg)?)?;
    let delta = cfg.geometry.delta_factor * cfg.radii.rho_prime;
    let graph = build_delta_graph(&decomp, delta)?;
    std::fs::create_dir_all(&ctx.out_dir)?;

    let inradius = decomp.domain.inradius();
    let center = decomp.domain.center();
    let ladder = if cfg.geometry.volume_r_ladder.is_empty() {
        vec![
            inradius / 8.0,
            inradius / 4.0,
            3.0 * inradius / 8.0,
            inradius / 2.0,
        ]
    } else {
        cfg.geometry.volume_r_ladder.clone()
    };
    let mut centers: Vec<Vector<D>> = Vec::new();
    let mut candidates: Vec<(f64, Vector<D>)> = decomp
        .index_set
        .iter()
        .map(|&i| {
            let p = decomp.points[i as usize];
            (dist(p, center), p)
        })
        .collect();
    candidates.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    for (_, p) in candidates
        .into_iter()
        .take(cfg.geometry.volume_centers.max(1))
    {
        centers.push(p);
    }
    let volume = volume_regularity_scan(&graph, &centers, &ladder)?;

    let window = if cfg.geometry.iso_window > 0.0 {
        cfg.geometry.iso_window
    } else {
        inradius / 2.0
    };
    let knobs = IsoKnobs {
        theta: cfg.geometry.theta,
        seed: cfg.process.seed ^ 0x9e37,
        ..IsoKnobs::default()
    };
    let iso = isoperimetric_scan(&decomp, &graph, center, window, &knobs)?;

    let report = GeometryReport::assemble(&volume, &iso, cfg.geometry.theta, D);
    write_json(
        &ctx.out_dir.join("geometry_report.json"),
        &json_with_meta(&report, &ctx.meta),
    )?;

    let mut csv = ctx.meta.csv_comment();
    csv.push_str("R,ratio,witness_id\n");
    for s in &report.samples {
        let _ = writeln!(csv, "{},{},{}", s.r, s.ratio, s.witness_id);
    }
    write_atomic(&ctx.out_dir.join("geometry_samples.csv"), csv.as_bytes())?;

    if cfg.geometry.crossing_configs > 0 {
        let cdelta = cfg.geometry.crossing_delta_factor * cfg.radii.rho_prime;
        let rows = crossing_failure_scan::<D>(
            cfg.process.intensity.unwrap_or(0.5),
            radii(cfg)?,
            cdelta,
            &cfg.geometry.crossing_ks,
            cfg.geometry.crossing_configs,
            cfg.process.seed ^ 0xc805,
        )?;
        let mut csv = ctx.meta.csv_comment();
        csv.push_str("k,n_configs,failures,failure_rate,wilson_low,wilson_high\n");
        for r in &rows {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                r.k, r.n_configs, r.failures, r.failure_rate, r.wilson_low, r.wilson_high
            );
        }
        write_atomic(&ctx.out_dir.join("crossing_scan.csv"), csv.as_bytes())?;
    }

    println!(
        "geometry: C_V≈{:.4} (R_V≈{:.2}), C_IL≈{:.4}, C_IS≈{:.4}, zeta={:.4}",
        report.c_v_hat, report.r_v_hat, report.c_il_hat, report.c_is_hat, report.zeta
    );
    let mut failures = Vec::new();
    if ctx.check {
        if !(report.c_v_hat > 0.0) {
            failures.push("geometry: c_v_hat not positive".into());
        }
        if !(report.c_il_hat.is_finite() && report.c_il_hat > 0.0) {
            failures.push("geometry: c_il_hat not positive".into());
        }
    }
    Ok(Outcome {
        check_failures: failures,
    })
}

struct SolvedEnvironment<'g, const D: usize> {
    form: DiscreteForm<'g, D>,
    solutions: Vec<percohom::corrector::CorrectorSolution>,
}

fn solve_corrector<'g, const D: usize>(
    cfg: &RunConfig,
    decomp: &ClusterDecomposition<D>,
    graph: &'g LatticeGraph<D>,
    field: &FieldSpec,
) -> Result<SolvedEnvironment<'g, D>, Error> {
    let form = match cfg.corrector.boundary {
        BoundaryKind::Periodic => assemble_periodic(decomp, graph, field)?,
        BoundaryKind::Dirichlet => {
            let r = if cfg.corrector.radius > 0.0 {
                cfg.corrector.radius
            } else {
                decomp.domain.inradius() - cfg.radii.rho_prime
            };
            assemble(decomp, graph, field, decomp.domain.center(), r)?
        }
    };
    let max_iter = if cfg.corrector.max_iter > 0 {
        cfg.corrector.max_iter
    } else {
        default_max_iter(form.num_nodes())
    };
    let solutions = solve_all_directions(&form, cfg.corrector.tol, max_iter)?;
    Ok(SolvedEnvironment { form, solutions })
}

pub fn cmd_corrector<const D: usize>(ctx: &Ctx) -> CmdResult {
    let cfg = ctx.cfg;
    let config = build_configuration::<D>(cfg)?;
    let decomp = build_decomp(cfg, &config)?;
    let delta = cfg.corrector.delta_factor * cfg.radii.rho_prime;
    let graph = build_delta_graph(&decomp, delta)?;
    let field = field(cfg)?;
    std::fs::create_dir_all(&ctx.out_dir)?;

    let solved = solve_corrector(cfg, &decomp, &graph, &field)?;
    let eff = effective_matrix(&solved.solutions, &solved.form)?;
    let audit = positive_definiteness_audit(&eff.matrix, cfg.qip.condition_bound);

    for sol in &solved.solutions {
        let mut csv = ctx.meta.csv_comment();
        let mut header = String::new();
        for i in 1..=D {
            let _ = write!(header, "z_{i},");
        }
        header.push_str("y,chi\n");
        csv.push_str(&header);
        for node in 0..solved.form.num_nodes() {
            let pos = solved.form.node_position(node);
            for v in pos.iter() {
                let _ = write!(csv, "{v},");
            }
            let _ = writeln!(csv, "{},{}", sol.harmonic[node], sol.chi[node]);
        }
        write_atomic(
            &ctx.out_dir
                .join(format!("corrector_k{}.csv", sol.direction)),
            csv.as_bytes(),
        )?;
    }

    let mut value = json_with_meta(&eff.report(), &ctx.meta);
    if let serde_json::Value::Object(map) = &mut value {
        map.insert("audit".into(), serde_json::to_value(&audit).unwrap());
        map.insert(
            "residuals".into(),
            serde_json::to_value(
                solved
                    .solutions
                    .iter()
                    .map(|s| s.residual_norm)
                    .collect::<Vec<_>>(),
            )
            .unwrap(),
        );
    }
    write_json(&ctx.out_dir.join("effective_matrix.json"), &value)?;

    if cfg.corrector.sublinearity_r_ladder.len() >= 3 {
        let profile = sublinearity_profile(
            &decomp,
            &graph,
            &field,
            decomp.domain.center(),
            &cfg.corrector.sublinearity_r_ladder,
            cfg.corrector.tol,
            if cfg.corrector.max_iter > 0 {
                cfg.corrector.max_iter
            } else {
                default_max_iter(solved.form.num_nodes())
            },
        )?;
        let mut csv = ctx.meta.csv_comment();
        csv.push_str("R,sup_chi,epsilon,sup_chi_scaled\n");
        for row in &profile.rows {
            let _ = writeln!(
                csv,
                "{},{},{},{}",
                row.r, row.sup_chi, row.epsilon, row.sup_chi_scaled
            );
        }
        let _ = writeln!(
            csv,
            "# exponent={} se={} upper95={}",
            profile.exponent, profile.exponent_se, profile.exponent_upper95
        );
        write_atomic(&ctx.out_dir.join("sublinearity.csv"), csv.as_bytes())?;
        println!(
            "sublinearity: exponent {:.3} (upper95 {:.3})",
            profile.exponent, profile.exponent_upper95
        );
    }

    println!(
        "effective matrix: diag = {:?}, eigenvalues = {:?}, pd = {}",
        (0..D).map(|k| eff.matrix[k][k]).collect::<Vec<_>>(),
        eff.eigenvalues.to_vec(),
        eff.positive_definite
    );
    let mut failures = Vec::new();
    if ctx.check {
        if !audit.pass {
            failures.push("corrector: positive-definiteness audit failed".into());
        }
        if solved
            .solutions
            .iter()
            .any(|s| s.residual_norm > cfg.corrector.tol)
        {
            failures.push("corrector: residual above tolerance".into());
        }
    }
    Ok(Outcome {
        check_failures: failures,
    })
}

pub fn cmd_simulate<const D: usize>(ctx: &Ctx) -> CmdResult {
    let cfg = ctx.cfg;
    let config = build_configuration::<D>(cfg)?;
    let decomp = build_decomp(cfg, &config)?;
    let field = field(cfg)?;
    std::fs::create_dir_all(&ctx.out_dir)?;
    let start = resolve_start(&decomp, &cfg.diffusion.start)?;

    let delta = cfg.corrector.delta_factor * cfg.radii.rho_prime;
    let graph = build_delta_graph(&decomp, delta)?;

    for i in 0..cfg.diffusion.n_paths.max(1) {
        let params = SimParams {
            dt: cfg.diffusion.dt,
            t_horizon: cfg.diffusion.t_horizon,
            scheme: match cfg.diffusion.scheme {
                SchemeKind::ReflectedEuler => Scheme::ReflectedEuler,
                SchemeKind::LatticeWalk => Scheme::LatticeWalk,
            },
            rng: RngStream::new(cfg.process.seed, 1 + i as u64),
            start,
            store_stride: cfg.diffusion.store_stride,
            diffusion_coeff: field.constant_scalar().unwrap_or(0.5),
        };
        let path = match params.scheme {
            Scheme::ReflectedEuler => {
                if field.constant_scalar().is_none() {
                    return Err(Error::invalid(
                        "diffusion.scheme = reflected_euler requires a constant scalar field",
                    ));
                }
                simulate_reflected_euler(&decomp, &params)?
            }
            Scheme::LatticeWalk => simulate_lattice_walk(&graph, &decomp, &field, &params)?,
        };
        let mut csv = ctx.meta.csv_comment();
        let mut header = String::from("t");
        for k in 1..=D {
            let _ = write!(header, ",x_{k}");
        }
        header.push('\n');
        csv.push_str(&header);
        for (t, p) in path.times.iter().zip(&path.positions) {
            let _ = write!(csv, "{t}");
            for v in p.iter() {
                let _ = write!(csv, ",{v}");
            }
            csv.push('\n');
        }
        write_atomic(
            &ctx.out_dir.join(format!("path_{i:03}.csv")),
            csv.as_bytes(),
        )?;

        let mut rcsv = ctx.meta.csv_comment();
        let mut rheader = String::from("t");
        for k in 1..=D {
            let _ = write!(rheader, ",exit_{k}");
        }
        rheader.push_str(",ball_index\n");
        rcsv.push_str(&rheader);
        for r in &path.reflections {
            let _ = write!(rcsv, "{}", r.time);
            for v in r.event.position.iter() {
                let _ = write!(rcsv, ",{v}");
            }
            let _ = writeln!(rcsv, ",{}", r.event.ball);
        }
        write_atomic(
            &ctx.out_dir.join(format!("reflections_{i:03}.csv")),
            rcsv.as_bytes(),
        )?;
    }
    println!("simulated {} path(s)", cfg.diffusion.n_paths.max(1));
    Ok(Outcome::ok())
}

pub fn cmd_qip<const D: usize>(ctx: &Ctx) -> CmdResult {
    let cfg = ctx.cfg;
    let mut config = build_configuration::<D>(cfg)?;
    let mut decomp = build_decomp(cfg, &config)?;
    // start-point conditioning
    let start = match cfg.qip.start_mode {
        StartMode::RecenterClusterPoint => {
            let center = decomp.domain.center();
            let mut rng = RngStream::new(cfg.process.seed ^ 0x51a7, 0).rng();
            use percohom::linalg::norm_sq;
            let close: Vec<u32> = decomp
                .index_set
                .iter()
                .copied()
                .filter(|&i| {
                    norm_sq(percohom::linalg::sub(decomp.points[i as usize], center))
                        < (decomp.domain.inradius() / 4.0).powi(2)
                })
                .collect();
            if close.is_empty() {
                nearest_cluster_point(&decomp, center)
            } else {
                use rand::Rng;
                decomp.points[close[rng.random_range(0..close.len())] as usize]
            }
        }
        StartMode::OriginRejection => {
            let mut attempt = 0u64;
            loop {
                let center = decomp.domain.center();
                if decomp.contains(center) {
                    break center;
                }
                attempt += 1;
                if attempt > 1000 {
                    return Err(Error::domain("origin rejection failed after 1000 attempts"));
                }
                let stream = RngStream::new(cfg.process.seed, attempt);
                config = match cfg.process.kind {
                    ProcessKind::Poisson => sample_poisson(
                        cfg.process.intensity.unwrap_or(0.0),
                        build_domain::<D>(cfg)?,
                        stream,
                    )?,
                    _ => {
                        return Err(Error::invalid(
                            "origin rejection is only supported for the poisson process",
                        ))
                    }
                };
                decomp = build_decomp(cfg, &config)?;
            }
        }
    };

    let delta = cfg.corrector.delta_factor * cfg.radii.rho_prime;
    let graph = build_delta_graph(&decomp, delta)?;
    let fld = field(cfg)?;
    std::fs::create_dir_all(&ctx.out_dir)?;

    let solved = solve_corrector(cfg, &decomp, &graph, &fld)?;
    let eff = effective_matrix(&solved.solutions, &solved.form)?;
    let audit = positive_definiteness_audit(&eff.matrix, cfg.qip.condition_bound);

    let experiment = ScalingExperiment {
        decomp: &decomp,
        graph: &graph,
        form: &solved.form,
        solutions: &solved.solutions,
        field: &fld,
        effective: &eff,
        scheme: match cfg.diffusion.scheme {
            SchemeKind::ReflectedEuler => Scheme::ReflectedEuler,
            SchemeKind::LatticeWalk => Scheme::LatticeWalk,
        },
        epsilon_ladder: cfg.qip.epsilon_ladder.clone(),
        t: cfg.qip.t,
        n_paths: cfg.qip.n_paths,
        dt: cfg.qip.dt,
        thresholds: cfg.qip.thresholds.clone(),
        exit_split_r: cfg.qip.exit_split_r,
        rng: RngStream::new(cfg.process.seed, 0x9a70),
        start,
    };
    let results = experiment.run()?;

    let mut value = json_with_meta(&results, &ctx.meta);
    if let serde_json::Value::Object(map) = &mut value {
        map.insert("audit".into(), serde_json::to_value(&audit).unwrap());
    }
    write_json(&ctx.out_dir.join("qip_results.json"), &value)?;

    let mut csv = ctx.meta.csv_comment();
    csv.push_str("epsilon,threshold,exceedance,wilson_low,wilson_high\n");
    for block in &results.blocks {
        for (thr, p) in &block.exceedance {
            let (lo, hi) = block.exceedance_wilson[thr];
            let _ = writeln!(csv, "{},{},{},{},{}", block.epsilon, thr, p, lo, hi);
        }
    }
    write_atomic(&ctx.out_dir.join("eps_exceedance.csv"), csv.as_bytes())?;

    let mut ecsv = ctx.meta.csv_comment();
    ecsv.push_str("index,eigenvalue\n");
    for (i, ev) in eff.eigenvalues.iter().enumerate() {
        let _ = writeln!(ecsv, "{i},{ev}");
    }
    write_atomic(&ctx.out_dir.join("d_eigenvalues.csv"), ecsv.as_bytes())?;

    for block in &results.blocks {
        println!(
            "eps {:.5}: cov gap {:.3}, ks {:?} (crit {:.4}, pass {}), exceedance {:?}",
            block.epsilon,
            block.cov_rel_gap,
            block.ks,
            block.ks_critical_95,
            block.ks_pass,
            block.exceedance
        );
    }

    let mut failures = Vec::new();
    if ctx.check {
        if !audit.pass {
            failures.push("qip: effective matrix audit failed".into());
        }
        if let Some(last) = results.blocks.last() {
            if !last.ks_pass {
                failures.push("qip: KS test failed at the smallest epsilon".into());
            }
            for k in 0..D {
                let want = eff.matrix[k][k] * cfg.qip.t;
                let gap = (last.cov[k][k] - want).abs();
                let gate = (cfg.qip.cov_rel_tolerance * want).max(3.0 * last.cov_ci[k][k]);
                if gap > gate {
                    failures.push(format!(
                        "qip: covariance axis {k} off by {gap:.4} (gate {gate:.4})"
                    ));
                }
            }
        }
    }
    Ok(Outcome {
        check_failures: failures,
    })
}

pub fn cmd_report(ctx: &Ctx) -> CmdResult {
    let mut failures = Vec::new();
    let mut seen = 0;
    for name in [
        "geometry_report.json",
        "effective_matrix.json",
        "qip_results.json",
    ] {
        let path = ctx.out_dir.join(name);
        if !path.exists() {
            continue;
        }
        seen += 1;
        let text = std::fs::read_to_string(&path)?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::invalid(format!("{name}: bad JSON: {e}")))?;
        println!("== {name}");
        match name {
            "geometry_report.json" => {
                for key in [
                    "c_v_hat", "r_v_hat", "c_il_hat", "c_is_hat", "theta", "zeta",
                ] {
                    println!("  {key} = {}", value[key]);
                }
            }
            "effective_matrix.json" => {
                println!("  matrix = {}", value["matrix"]);
                println!("  eigenvalues = {}", value["eigenvalues"]);
                println!("  positive_definite = {}", value["positive_definite"]);
                if value["audit"]["pass"] == serde_json::Value::Bool(false) {
                    failures.push("report: effective matrix audit failed".into());
                }
            }
            "qip_results.json" => {
                if let Some(blocks) = value["blocks"].as_array() {
                    for b in blocks {
                        println!(
                            "  eps {}: ks_pass {}, cov_rel_gap {}, exceedance {}",
                            b["epsilon"], b["ks_pass"], b["cov_rel_gap"], b["exceedance"]
                        );
                        if ctx.check && b["ks_pass"] == serde_json::Value::Bool(false) {
                            failures.push("report: a qip block failed its KS test".into());
                        }
                    }
                }
            }
            _ => {}
        }
    }
    if seen == 0 {
        println!("no artifacts found in {}", ctx.out_dir.display());
    }
    if !ctx.check {
        failures.clear();
    }
    Ok(Outcome {
        check_failures: failures,
    })
}
