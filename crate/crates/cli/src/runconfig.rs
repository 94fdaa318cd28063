//! Run configuration: one TOML file with sections, unknown keys rejected.
//! Every numeric default of the toolkit can be overridden here.

use percohom::field::FieldSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub process: ProcessSection,
    pub radii: RadiiSection,
    #[serde(default)]
    pub field: FieldSection,
    #[serde(default)]
    pub geometry: GeometrySection,
    #[serde(default)]
    pub corrector: CorrectorSection,
    #[serde(default)]
    pub diffusion: DiffusionSection,
    #[serde(default)]
    pub qip: QipSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSection {
    pub kind: ProcessKind,
    pub dim: usize,
    pub box_lower: Vec<f64>,
    pub box_upper: Vec<f64>,
    #[serde(default)]
    pub periodic: bool,
    pub seed: u64,
    /// Poisson intensity (points per unit volume).
    #[serde(default)]
    pub intensity: Option<f64>,
    /// Perturbed-lattice keep probability.
    #[serde(default)]
    pub keep_probability: Option<f64>,
    /// Explicit point file (pcfg format).
    #[serde(default)]
    pub points_file: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    Poisson,
    PerturbedLattice,
    Explicit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiiSection {
    pub rho: f64,
    pub rho_prime: f64,
    /// Bisection tolerance for reflections, as a fraction of rho_prime.
    #[serde(default = "default_tol_geom_factor")]
    pub tol_geom_factor: f64,
    #[serde(default = "default_max_reflections")]
    pub max_reflections: usize,
}

fn default_tol_geom_factor() -> f64 {
    1e-10
}

fn default_max_reflections() -> usize {
    64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldSection {
    pub kind: FieldKind,
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta: f64,
    pub support: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    ConstantHalfIdentity,
    TwoPhaseByCoverage,
    SmoothBump,
}

impl Default for FieldSection {
    fn default() -> Self {
        FieldSection {
            kind: FieldKind::ConstantHalfIdentity,
            alpha1: 0.25,
            alpha2: 0.75,
            beta: 0.25,
            support: 1.0,
        }
    }
}

impl FieldSection {
    pub fn spec(&self) -> FieldSpec {
        match self.kind {
            FieldKind::ConstantHalfIdentity => FieldSpec::ConstantHalfIdentity,
            FieldKind::TwoPhaseByCoverage => FieldSpec::TwoPhaseByCoverage {
                alpha1: self.alpha1,
                alpha2: self.alpha2,
            },
            FieldKind::SmoothBump => FieldSpec::SmoothBump {
                beta: self.beta,
                support: self.support,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    /// δ_diag = delta_factor · ρ′
    pub delta_factor: f64,
    pub theta: f64,
    /// number of scan centers picked near the box center
    pub volume_centers: usize,
    /// absolute radii for the volume-regularity ladder; empty → derived
    pub volume_r_ladder: Vec<f64>,
    /// isoperimetric scan window radius; 0 → box inradius / 2
    pub iso_window: f64,
    pub crossing_ks: Vec<usize>,
    pub crossing_configs: usize,
    /// δ for the crossing scan as a fraction of ρ′
    pub crossing_delta_factor: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        GeometrySection {
            delta_factor: 1.0 / 16.0,
            theta: 0.9,
            volume_centers: 4,
            volume_r_ladder: Vec::new(),
            iso_window: 0.0,
            crossing_ks: vec![8, 16, 32],
            crossing_configs: 0,
            crossing_delta_factor: 1.0 / 16.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrectorSection {
    /// δ_solver = delta_factor · ρ′
    pub delta_factor: f64,
    /// solve radius; 0 → box inradius − ρ′
    pub radius: f64,
    pub tol: f64,
    /// 0 → 20·√(nodes)
    pub max_iter: usize,
    pub boundary: BoundaryKind,
    /// radii for the sublinearity ladder; empty → skip the profile
    pub sublinearity_r_ladder: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Dirichlet,
    Periodic,
}

impl Default for CorrectorSection {
    fn default() -> Self {
        CorrectorSection {
            delta_factor: 1.0 / 8.0,
            radius: 0.0,
            tol: 1e-8,
            max_iter: 0,
            boundary: BoundaryKind::Dirichlet,
            sublinearity_r_ladder: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionSection {
    pub scheme: SchemeKind,
    pub dt: f64,
    pub t_horizon: f64,
    pub n_paths: usize,
    pub store_stride: usize,
    pub start: StartSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    ReflectedEuler,
    LatticeWalk,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StartSpec {
    Named(String),
    Point(Vec<f64>),
}

impl Default for DiffusionSection {
    fn default() -> Self {
        DiffusionSection {
            scheme: SchemeKind::ReflectedEuler,
            dt: 5e-3,
            t_horizon: 1.0,
            n_paths: 1,
            store_stride: 1,
            start: StartSpec::Named("cluster_point".into()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QipSection {
    pub epsilon_ladder: Vec<f64>,
    pub t: f64,
    pub n_paths: usize,
    pub dt: f64,
    pub thresholds: Vec<f64>,
    pub exit_split_r: f64,
    pub start_mode: StartMode,
    pub condition_bound: f64,
    /// covariance consistency gate for --check: max(rel_tolerance, 3·CI)
    pub cov_rel_tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartMode {
    /// start at a uniformly chosen cluster point (re-centering surrogate)
    RecenterClusterPoint,
    /// resample the configuration until the box center lies in the cluster
    OriginRejection,
}

impl Default for QipSection {
    fn default() -> Self {
        QipSection {
            epsilon_ladder: vec![0.125, 0.0625, 0.03125],
            t: 1.0,
            n_paths: 500,
            dt: 5e-3,
            thresholds: vec![0.05, 0.1, 0.2],
            exit_split_r: 2.0,
            start_mode: StartMode::RecenterClusterPoint,
            condition_bound: 1e6,
            cov_rel_tolerance: 0.10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    pub binary_config: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: "out".into(),
            binary_config: false,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), String> {
        let p = &self.process;
        if p.dim != 2 && p.dim != 3 {
            return Err(format!(
                "process.dim: supported dimensions are 2 and 3, got {}",
                p.dim
            ));
        }
        if p.box_lower.len() != p.dim || p.box_upper.len() != p.dim {
            return Err("process.box_lower/box_upper: length must equal dim".into());
        }
        match p.kind {
            ProcessKind::Poisson => {
                let lam = p
                    .intensity
                    .ok_or("process.intensity: required for poisson")?;
                if !(lam > 0.0) || !lam.is_finite() {
                    return Err(format!(
                        "process.intensity: must be positive and finite, got {lam}"
                    ));
                }
            }
            ProcessKind::PerturbedLattice => {
                let kp = p
                    .keep_probability
                    .ok_or("process.keep_probability: required for perturbed_lattice")?;
                if !(kp > 0.0 && kp < 1.0) {
                    return Err(format!(
                        "process.keep_probability: must lie in (0,1), got {kp}"
                    ));
                }
            }
            ProcessKind::Explicit => {
                if p.points_file.is_none() {
                    return Err("process.points_file: required for explicit".into());
                }
            }
        }
        if !(self.radii.rho > 0.0) || self.radii.rho_prime < self.radii.rho {
            return Err("radii: need 0 < rho <= rho_prime".into());
        }
        if !(self.geometry.theta > 0.0 && self.geometry.theta < 1.0) {
            return Err("geometry.theta: must lie in (0,1)".into());
        }
        if self
            .qip
            .epsilon_ladder
            .iter()
            .any(|&e| !(0.0 < e && e <= 1.0))
        {
            return Err("qip.epsilon_ladder: entries must lie in (0,1]".into());
        }
        Ok(())
    }

    /// Echo of the fully resolved configuration (all defaults filled in).
    pub fn resolved_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[process]
kind = "poisson"
dim = 2
box_lower = [0.0, 0.0]
box_upper = [20.0, 20.0]
seed = 1
intensity = 0.5

[radii]
rho = 1.0
rho_prime = 1.2
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.process.dim, 2);
        assert_eq!(cfg.corrector.tol, 1e-8);
        assert_eq!(cfg.qip.epsilon_ladder.len(), 3);
        // resolved echo round-trips
        let echo = cfg.resolved_toml();
        let again = RunConfig::parse(&echo).unwrap();
        assert_eq!(again.resolved_toml(), echo);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = format!("{MINIMAL}\n[geometry]\nnot_a_key = 1\n");
        let err = RunConfig::parse(&bad).unwrap_err();
        assert!(err.contains("not_a_key"), "{err}");
    }

    #[test]
    fn invalid_keep_probability_names_the_key() {
        let bad = MINIMAL
            .replace("kind = \"poisson\"", "kind = \"perturbed_lattice\"")
            .replace("intensity = 0.5", "keep_probability = 1.5");
        let err = RunConfig::parse(&bad).unwrap_err();
        assert!(err.contains("keep_probability"), "{err}");
    }
}
