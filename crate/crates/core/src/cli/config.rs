//! Run configuration: one TOML file with a block per subcommand.
//!
//! Every key is optional; missing keys take the defaults below. Unknown keys
//! are rejected.
//!
//! ```toml
//! seed = 0
//! out = "out"
//!
//! [scene]
//! names = ["rooms", "clutter", "chambers"]   # bundled scenes
//! files = []                                # extra scene TOML files
//! preview_cell = 0.05                       # occupancy preview raster (m)
//!
//! [capture]
//! scene = "rooms"          # bundled name or path to a scene TOML
//! frames = 200
//! fov_deg = 120.0
//! width = 129
//! height = 1               # ignored for planar scenes
//! sigma_depth = 0.0        # per-pixel depth noise std (m)
//! sigma_pose = 0.0         # per-frame position noise std (m)
//! min_clearance = 0.3      # camera distance from obstacles (m)
//!
//! [train]
//! scene = "rooms"
//! frames = ""              # frame dataset; empty = capture with [capture]
//! embeddings = ""          # embedding table; empty = synthetic
//! embed_dim = 64
//! steps = 4000
//! batch_size = 1024
//! frames_per_batch = 8
//! samples_per_ray = 4
//! lr = 3e-4
//! lambda_r = 1.0
//! lambda_s = 1.0
//! weight_temperature = 0.5
//! weight_sign = "nearer-heavier"    # or "farther-heavier"
//! logit_scale = 10.0
//! behind_fraction = 0.2
//! behind_depth = 0.3
//! dense_surface = true
//! log_every = 100
//! bias_correction = 0.0    # additive SDF correction stored in the checkpoint
//!
//! [bias]
//! sigma_depth = 0.01
//! sigma_pose = 0.005
//! true_distance = 1.0
//! ns = [1, 2, 5, 10, 20, 50, 100, 200, 500, 1000]
//! trials = 100000
//! dim = 3
//! n_eff = 100.0            # effective sample count for the correction
//! clutter_scale = 1.0
//! sweep_sigma = [0.01, 0.02, 0.03, 0.04, 0.05]
//! sweep_n_eff = [10.0, 100.0, 1000.0, 10000.0, 100000.0]
//! sweep_trials = 1000      # trials per sweep point
//!
//! [plan]
//! scene = "rooms"
//! checkpoint = ""          # empty = <out>/<scene>.ckpt
//! embeddings = ""          # empty = <out>/<scene>_embeddings.txt
//! planner = "gradient"     # or "grid"
//! cell_size = 0.1          # grid planner only
//! start = [0.5, 0.5]
//! goal = []                # point goal; leave empty when using `query`
//! query = ""
//! d_min = 0.3
//! margin = 0.15
//! n_waypoints = 32
//! n_targets = 512
//! lambda_obstacle = 1.0
//! lambda_spacing = 1.0
//! lambda_semantic = 15.0
//! lambda_length = 25.0
//! lr = 0.01
//! max_iters = 300
//! convergence_tol = 1e-4
//! convergence_window = 10
//! check_step = 0.05
//! init_cell_size = 0.1
//!
//! [eval]
//! scenes = ["rooms", "clutter", "chambers"]
//! checkpoint_dir = ""      # empty = train each scene with [capture]/[train]
//! planners = ["gradient", "grid-10cm", "grid-20cm", "grid-40cm"]
//! pairs = 100
//! starts = 10
//! queries = []             # empty = every scene label except "wall"
//! endpoint_clearance = 0.65
//! min_separation = 1.0
//! audit_resolution = 0.01
//! audit_slack = 0.02
//! ```
//!
//! `[plan]`'s planner parameters are also used by `eval`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bias::NoiseModel;
use crate::eval::PlannerKind;
use crate::plan::PlannerParams;
use crate::scenegen::{self, CaptureConfig, NoiseParams, Scene};
use crate::train::{TrainConfig, WeightSign};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub scene: SceneSection,
    pub capture: CaptureSection,
    pub train: TrainSection,
    pub bias: BiasSection,
    pub plan: PlanSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            scene: SceneSection::default(),
            capture: CaptureSection::default(),
            train: TrainSection::default(),
            bias: BiasSection::default(),
            plan: PlanSection::default(),
            eval: EvalSection::default(),
        }
    }
}

fn bundled_names() -> Vec<String> {
    ["rooms", "clutter", "chambers"].map(String::from).to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    pub names: Vec<String>,
    pub files: Vec<PathBuf>,
    pub preview_cell: f64,
}

impl Default for SceneSection {
    fn default() -> Self {
        Self {
            names: bundled_names(),
            files: Vec::new(),
            preview_cell: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptureSection {
    pub scene: String,
    pub frames: usize,
    pub fov_deg: f64,
    pub width: u32,
    pub height: u32,
    pub sigma_depth: f64,
    pub sigma_pose: f64,
    pub min_clearance: f64,
}

impl Default for CaptureSection {
    fn default() -> Self {
        let c = CaptureConfig::default();
        Self {
            scene: "rooms".into(),
            frames: c.frames,
            fov_deg: c.fov.to_degrees(),
            width: c.width,
            height: c.height,
            sigma_depth: c.noise.sigma_depth,
            sigma_pose: c.noise.sigma_pose,
            min_clearance: c.min_clearance,
        }
    }
}

impl CaptureSection {
    pub fn to_config(&self, seed: u64) -> CaptureConfig {
        CaptureConfig {
            frames: self.frames,
            fov: self.fov_deg.to_radians(),
            width: self.width,
            height: self.height,
            noise: NoiseParams {
                sigma_depth: self.sigma_depth,
                sigma_pose: self.sigma_pose,
            },
            min_clearance: self.min_clearance,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightSignName {
    NearerHeavier,
    FartherHeavier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub scene: String,
    pub frames: PathBuf,
    pub embeddings: PathBuf,
    pub embed_dim: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub frames_per_batch: usize,
    pub samples_per_ray: usize,
    pub lr: f64,
    pub lambda_r: f64,
    pub lambda_s: f64,
    pub weight_temperature: f64,
    pub weight_sign: WeightSignName,
    pub logit_scale: f64,
    pub behind_fraction: f64,
    pub behind_depth: f64,
    pub dense_surface: bool,
    pub log_every: usize,
    pub bias_correction: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            scene: "rooms".into(),
            frames: PathBuf::new(),
            embeddings: PathBuf::new(),
            embed_dim: 64,
            steps: t.steps,
            batch_size: t.batch_size,
            frames_per_batch: t.frames_per_batch,
            samples_per_ray: t.samples_per_ray,
            lr: t.lr,
            lambda_r: t.lambda_r,
            lambda_s: t.lambda_s,
            weight_temperature: t.weight_temperature,
            weight_sign: WeightSignName::NearerHeavier,
            logit_scale: t.logit_scale,
            behind_fraction: t.behind_fraction,
            behind_depth: t.behind_depth,
            dense_surface: t.dense_surface,
            log_every: t.log_every,
            bias_correction: 0.0,
        }
    }
}

impl TrainSection {
    pub fn to_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            batch_size: self.batch_size,
            frames_per_batch: self.frames_per_batch,
            samples_per_ray: self.samples_per_ray,
            lr: self.lr,
            lambda_r: self.lambda_r,
            lambda_s: self.lambda_s,
            weight_temperature: self.weight_temperature,
            weight_sign: match self.weight_sign {
                WeightSignName::NearerHeavier => WeightSign::NearerHeavier,
                WeightSignName::FartherHeavier => WeightSign::FartherHeavier,
            },
            logit_scale: self.logit_scale,
            behind_fraction: self.behind_fraction,
            behind_depth: self.behind_depth,
            dense_surface: self.dense_surface,
            log_every: self.log_every,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasSection {
    pub sigma_depth: f64,
    pub sigma_pose: f64,
    pub true_distance: f64,
    pub ns: Vec<usize>,
    pub trials: usize,
    pub dim: usize,
    pub n_eff: f64,
    pub clutter_scale: f64,
    pub sweep_sigma: Vec<f64>,
    pub sweep_n_eff: Vec<f64>,
    pub sweep_trials: usize,
}

impl Default for BiasSection {
    fn default() -> Self {
        let noise = NoiseModel::default();
        Self {
            sigma_depth: noise.sigma_depth(),
            sigma_pose: noise.sigma_pose(),
            true_distance: 1.0,
            ns: vec![1, 2, 5, 10, 20, 50, 100, 200, 500, 1000],
            trials: 100_000,
            dim: 3,
            n_eff: 100.0,
            clutter_scale: 1.0,
            sweep_sigma: vec![0.01, 0.02, 0.03, 0.04, 0.05],
            sweep_n_eff: vec![10.0, 100.0, 1000.0, 10_000.0, 100_000.0],
            sweep_trials: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerName {
    Gradient,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSection {
    pub scene: String,
    pub checkpoint: PathBuf,
    pub embeddings: PathBuf,
    pub planner: PlannerName,
    pub cell_size: f64,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    pub query: String,
    pub d_min: f64,
    pub margin: f64,
    pub n_waypoints: usize,
    pub n_targets: usize,
    pub lambda_obstacle: f64,
    pub lambda_spacing: f64,
    pub lambda_semantic: f64,
    pub lambda_length: f64,
    pub lr: f64,
    pub max_iters: usize,
    pub convergence_tol: f64,
    pub convergence_window: usize,
    pub check_step: f64,
    pub init_cell_size: f64,
}

impl Default for PlanSection {
    fn default() -> Self {
        let p = PlannerParams::default();
        Self {
            scene: "rooms".into(),
            checkpoint: PathBuf::new(),
            embeddings: PathBuf::new(),
            planner: PlannerName::Gradient,
            cell_size: 0.1,
            start: vec![0.5, 0.5],
            goal: Vec::new(),
            query: String::new(),
            d_min: p.d_min,
            margin: p.margin,
            n_waypoints: p.n_waypoints,
            n_targets: p.n_targets,
            lambda_obstacle: p.lambda_obstacle,
            lambda_spacing: p.lambda_spacing,
            lambda_semantic: p.lambda_semantic,
            lambda_length: p.lambda_length,
            lr: p.lr,
            max_iters: p.max_iters,
            convergence_tol: p.convergence_tol,
            convergence_window: p.convergence_window,
            check_step: p.check_step,
            init_cell_size: p.init_cell_size,
        }
    }
}

impl PlanSection {
    pub fn params(&self, seed: u64) -> PlannerParams {
        PlannerParams {
            d_min: self.d_min,
            margin: self.margin,
            n_waypoints: self.n_waypoints,
            n_targets: self.n_targets,
            lambda_obstacle: self.lambda_obstacle,
            lambda_spacing: self.lambda_spacing,
            lambda_semantic: self.lambda_semantic,
            lambda_length: self.lambda_length,
            lr: self.lr,
            max_iters: self.max_iters,
            convergence_tol: self.convergence_tol,
            convergence_window: self.convergence_window,
            check_step: self.check_step,
            init_cell_size: self.init_cell_size,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub scenes: Vec<String>,
    pub checkpoint_dir: PathBuf,
    pub planners: Vec<String>,
    pub pairs: usize,
    pub starts: usize,
    pub queries: Vec<String>,
    pub endpoint_clearance: f64,
    pub min_separation: f64,
    pub audit_resolution: f64,
    pub audit_slack: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            scenes: bundled_names(),
            checkpoint_dir: PathBuf::new(),
            planners: PlannerKind::default_suite().iter().map(|p| p.name()).collect(),
            pairs: 100,
            starts: 10,
            queries: Vec::new(),
            endpoint_clearance: 0.65,
            min_separation: 1.0,
            audit_resolution: 0.01,
            audit_slack: 0.02,
        }
    }
}

/// Parses a planner name: `gradient` or `grid-<N>cm`.
pub fn parse_planner(name: &str) -> Option<PlannerKind> {
    if name == "gradient" {
        return Some(PlannerKind::Gradient);
    }
    let cm: f64 = name.strip_prefix("grid-")?.strip_suffix("cm")?.parse().ok()?;
    (cm > 0.0).then(|| PlannerKind::Grid { cell_size: cm / 100.0 })
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Resolves a scene reference: a bundled scene name, or a path to a scene
/// TOML file.
pub fn resolve_scene(name: &str) -> anyhow::Result<Scene> {
    if let Some(s) = scenegen::bundled::by_name(name) {
        return Ok(s);
    }
    let path = Path::new(name);
    if path.exists() {
        return Ok(scenegen::io::load_scene(path)?);
    }
    anyhow::bail!("unknown scene {name:?}: not a bundled scene or an existing file")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(RunConfig::from_toml("").unwrap(), c);
    }

    #[test]
    fn defaults_match_library() {
        let c = RunConfig::default();
        let p = PlannerParams {
            seed: 7,
            ..PlannerParams::default()
        };
        assert_eq!(c.plan.params(7), p);
        let t = TrainConfig {
            seed: 3,
            ..TrainConfig::default()
        };
        assert_eq!(c.train.to_config(3), t);
        assert_eq!(c.capture.to_config(0).frames, CaptureConfig::default().frames);
        assert!((c.capture.to_config(0).fov - CaptureConfig::default().fov).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("sed = 1").is_err());
        assert!(RunConfig::from_toml("[plan]\nlambda = 1.0").is_err());
        assert!(RunConfig::from_toml("[train]\nsteps = 10").is_ok());
    }

    #[test]
    fn planner_names() {
        assert_eq!(parse_planner("gradient"), Some(PlannerKind::Gradient));
        assert_eq!(parse_planner("grid-20cm"), Some(PlannerKind::Grid { cell_size: 0.2 }));
        assert_eq!(parse_planner("grid-0cm"), None);
        assert_eq!(parse_planner("astar"), None);
        for p in PlannerKind::default_suite() {
            assert_eq!(parse_planner(&p.name()), Some(p));
        }
    }
}
