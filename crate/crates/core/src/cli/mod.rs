//! The `semfield` command line: scene, capture, train, bias, plan and eval
//! subcommands driven by a [`RunConfig`] file plus flag overrides.
//!
//! Every subcommand writes its outputs under `--out`, echoes the resolved
//! configuration as `<command>.config.toml`, and refreshes `manifest.txt`
//! (SHA-256, size and path of every file in the output directory).

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::bias::{self, NoiseModel, RobotContext};
use crate::embed::EmbeddingTable;
use crate::eval::{self, Bench, PlannerKind, PlannerReport};
use crate::field::{FieldConfig, FieldModel};
use crate::plan::{self, gradient_plan, grid_plan, initial_path, occupancy_from_field, PlanError, Target};
use crate::scenegen::{self, Point, Scene};
use crate::train::{self, LabelEmbeddings};

pub use config::{parse_planner, resolve_scene, PlannerName, RunConfig};

/// Exit status when a planner finds no route.
pub const EXIT_NO_PATH: u8 = 2;
/// Exit status when the gradient planner's result fails its clearance check.
pub const EXIT_INFEASIBLE: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "semfield", version, about = "Semantic SDF fields and navigation planners")]
pub struct Cli {
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Write scene files and ground-truth occupancy previews.
    Scene(SceneArgs),
    /// Render a frame dataset from a scene.
    Capture(CaptureArgs),
    /// Train a field and write its checkpoint and loss log.
    Train(TrainArgs),
    /// Simulate the noise bias curve and the recommended SDF correction.
    Bias(BiasArgs),
    /// Plan one path with a trained field.
    Plan(PlanArgs),
    /// Run the length and semantic benchmarks.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SceneArgs {
    /// Bundled scene names (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub names: Option<Vec<String>>,
    /// Additional scene TOML files (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub files: Option<Vec<PathBuf>>,
    #[arg(long)]
    pub preview_cell: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CaptureArgs {
    #[arg(long)]
    pub scene: Option<String>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub sigma_depth: Option<f64>,
    #[arg(long)]
    pub sigma_pose: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub scene: Option<String>,
    /// Frame dataset written by `capture`.
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// Embedding table to supervise with.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lambda_r: Option<f64>,
    /// Weight of the semantic loss; 0 trains a pure SDF model.
    #[arg(long)]
    pub lambda_s: Option<f64>,
    #[arg(long)]
    pub bias_correction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BiasArgs {
    #[arg(long)]
    pub sigma_depth: Option<f64>,
    #[arg(long)]
    pub sigma_pose: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub n_eff: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub scene: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub planner: Option<PlannerArg>,
    #[arg(long)]
    pub cell_size: Option<f64>,
    /// Start position `x,y`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub start: Option<Vec<f64>>,
    /// Point goal `x,y`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, conflicts_with = "query")]
    pub goal: Option<Vec<f64>>,
    /// Label to navigate towards.
    #[arg(long)]
    pub query: Option<String>,
    #[arg(long)]
    pub d_min: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub n_waypoints: Option<usize>,
    #[arg(long)]
    pub n_targets: Option<usize>,
    #[arg(long)]
    pub lambda_obstacle: Option<f64>,
    #[arg(long)]
    pub lambda_spacing: Option<f64>,
    #[arg(long)]
    pub lambda_semantic: Option<f64>,
    #[arg(long)]
    pub lambda_length: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub convergence_tol: Option<f64>,
    #[arg(long)]
    pub convergence_window: Option<usize>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum PlannerArg {
    Gradient,
    Grid,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Scenes (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub scenes: Option<Vec<String>>,
    /// Planners, e.g. `gradient,grid-10cm` (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub planners: Option<Vec<String>>,
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub starts: Option<usize>,
    /// Directory with `<scene>.ckpt` and `<scene>_embeddings.txt`.
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
    /// Training steps when no checkpoint directory is given.
    #[arg(long)]
    pub steps: Option<usize>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl Cli {
    /// Loads the config file (if any) and applies the flag overrides.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        set(&mut c.seed, self.seed);
        set(&mut c.out, self.out.clone());
        match &self.command {
            Command::Scene(a) => {
                set(&mut c.scene.names, a.names.clone());
                set(&mut c.scene.files, a.files.clone());
                set(&mut c.scene.preview_cell, a.preview_cell);
            }
            Command::Capture(a) => {
                set(&mut c.capture.scene, a.scene.clone());
                set(&mut c.capture.frames, a.frames);
                set(&mut c.capture.sigma_depth, a.sigma_depth);
                set(&mut c.capture.sigma_pose, a.sigma_pose);
            }
            Command::Train(a) => {
                set(&mut c.train.scene, a.scene.clone());
                set(&mut c.train.frames, a.frames.clone());
                set(&mut c.train.embeddings, a.embeddings.clone());
                set(&mut c.train.steps, a.steps);
                set(&mut c.train.lr, a.lr);
                set(&mut c.train.lambda_r, a.lambda_r);
                set(&mut c.train.lambda_s, a.lambda_s);
                set(&mut c.train.bias_correction, a.bias_correction);
            }
            Command::Bias(a) => {
                set(&mut c.bias.sigma_depth, a.sigma_depth);
                set(&mut c.bias.sigma_pose, a.sigma_pose);
                set(&mut c.bias.trials, a.trials);
                set(&mut c.bias.n_eff, a.n_eff);
            }
            Command::Plan(a) => {
                let p = &mut c.plan;
                set(&mut p.scene, a.scene.clone());
                set(&mut p.checkpoint, a.checkpoint.clone());
                set(&mut p.embeddings, a.embeddings.clone());
                set(
                    &mut p.planner,
                    a.planner.map(|k| match k {
                        PlannerArg::Gradient => PlannerName::Gradient,
                        PlannerArg::Grid => PlannerName::Grid,
                    }),
                );
                set(&mut p.cell_size, a.cell_size);
                set(&mut p.start, a.start.clone());
                if let Some(g) = &a.goal {
                    p.goal = g.clone();
                    p.query.clear();
                }
                if let Some(q) = &a.query {
                    p.query = q.clone();
                    p.goal.clear();
                }
                set(&mut p.d_min, a.d_min);
                set(&mut p.margin, a.margin);
                set(&mut p.n_waypoints, a.n_waypoints);
                set(&mut p.n_targets, a.n_targets);
                set(&mut p.lambda_obstacle, a.lambda_obstacle);
                set(&mut p.lambda_spacing, a.lambda_spacing);
                set(&mut p.lambda_semantic, a.lambda_semantic);
                set(&mut p.lambda_length, a.lambda_length);
                set(&mut p.lr, a.lr);
                set(&mut p.max_iters, a.max_iters);
                set(&mut p.convergence_tol, a.convergence_tol);
                set(&mut p.convergence_window, a.convergence_window);
            }
            Command::Eval(a) => {
                set(&mut c.eval.scenes, a.scenes.clone());
                set(&mut c.eval.planners, a.planners.clone());
                set(&mut c.eval.pairs, a.pairs);
                set(&mut c.eval.starts, a.starts);
                set(&mut c.eval.checkpoint_dir, a.checkpoint_dir.clone());
                set(&mut c.train.steps, a.steps);
            }
        }
        Ok(c)
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Scene(_) => "scene",
            Self::Capture(_) => "capture",
            Self::Train(_) => "train",
            Self::Bias(_) => "bias",
            Self::Plan(_) => "plan",
            Self::Eval(_) => "eval",
        }
    }
}

/// Outcome of a subcommand, mapped onto the process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    NoPath,
    Infeasible,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Self::Ok => 0,
            Self::NoPath => EXIT_NO_PATH,
            Self::Infeasible => EXIT_INFEASIBLE,
        }
    }
}

/// Output directory writer.
pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn new(dir: &FsPath) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn path(&self, rel: impl AsRef<FsPath>) -> PathBuf {
        self.dir.join(rel)
    }

    pub fn write(&self, rel: impl AsRef<FsPath>, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    /// Rewrites `manifest.txt` to cover every file under the directory.
    pub fn write_manifest(&self) -> Result<()> {
        let mut files = Vec::new();
        collect_files(&self.dir, &mut files)?;
        files.sort();
        let mut text = String::new();
        for f in files {
            let rel = f.strip_prefix(&self.dir).expect("under output dir");
            if rel == FsPath::new("manifest.txt") {
                continue;
            }
            let bytes = fs::read(&f)?;
            let digest = Sha256::digest(&bytes);
            let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
            writeln!(text, "{hex}  {:>10}  {}", bytes.len(), rel.display()).expect("write to String");
        }
        fs::write(self.path("manifest.txt"), text)?;
        Ok(())
    }
}

fn collect_files(dir: &FsPath, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// Parses the process arguments and runs the selected subcommand.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(status) => ExitCode::from(status.code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

pub fn run(cli: &Cli) -> Result<Status> {
    let config = cli.resolve()?;
    let out = Output::new(&config.out)?;
    let name = cli.command.name();
    out.write(format!("{name}.config.toml"), config.to_toml())?;
    eprintln!("resolved config ({name}):\n{}", config.to_toml());
    let status = match &cli.command {
        Command::Scene(_) => cmd_scene(&config, &out)?,
        Command::Capture(_) => cmd_capture(&config, &out)?,
        Command::Train(_) => cmd_train(&config, &out)?,
        Command::Bias(_) => cmd_bias(&config, &out)?,
        Command::Plan(_) => cmd_plan(&config, &out)?,
        Command::Eval(_) => cmd_eval(&config, &out)?,
    };
    out.write_manifest()?;
    Ok(status)
}

/// Ground-truth occupancy raster: `ix,iy,x,y,sdf,occupied` per cell
/// center, occupied when the analytic SDF is negative.
pub fn occupancy_preview(scene: &Scene, cell: f64) -> String {
    let b = &scene.bounds;
    let nx = ((b.max.x - b.min.x) / cell).ceil() as usize;
    let ny = ((b.max.y - b.min.y) / cell).ceil() as usize;
    let mut out = String::from("ix,iy,x,y,sdf,occupied\n");
    for iy in 0..ny {
        for ix in 0..nx {
            let x = b.min.x + (ix as f64 + 0.5) * cell;
            let y = b.min.y + (iy as f64 + 0.5) * cell;
            let d = scene.sdf(&Point::new(x, y, 0.0));
            writeln!(out, "{ix},{iy},{x:.4},{y:.4},{d:.6},{}", u8::from(d < 0.0)).expect("write to String");
        }
    }
    out
}

pub fn cmd_scene(config: &RunConfig, out: &Output) -> Result<Status> {
    let c = &config.scene;
    if !(c.preview_cell > 0.0) {
        bail!("scene.preview_cell must be positive");
    }
    let mut scenes = Vec::new();
    for n in &c.names {
        scenes.push(scenegen::bundled::by_name(n).with_context(|| format!("unknown bundled scene {n:?}"))?);
    }
    for f in &c.files {
        scenes.push(scenegen::io::load_scene(f).with_context(|| format!("loading {}", f.display()))?);
    }
    for s in &scenes {
        out.write(format!("{}.toml", s.name), scenegen::io::scene_to_toml(s))?;
        if s.dimension == 2 {
            out.write(
                format!("{}_occupancy.csv", s.name),
                occupancy_preview(s, c.preview_cell),
            )?;
        }
        println!(
            "scene {}: {} obstacles, labels {:?}",
            s.name,
            s.obstacles.len(),
            s.labels()
        );
    }
    Ok(Status::Ok)
}

pub fn cmd_capture(config: &RunConfig, out: &Output) -> Result<Status> {
    let scene = resolve_scene(&config.capture.scene)?;
    let frames = scenegen::capture(&scene, &config.capture.to_config(config.seed))?;
    let path = out.path(format!("{}.frames", scene.name));
    scenegen::io::save_frames(&frames, &path)?;
    let hits: usize = frames.iter().map(|f| f.valid_pixels().count()).sum();
    println!(
        "captured {} frames ({hits} surface hits) -> {}",
        frames.len(),
        path.display()
    );
    Ok(Status::Ok)
}

fn scene_embeddings(scene: &Scene, path: &FsPath, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    if path.as_os_str().is_empty() {
        Ok(EmbeddingTable::synthetic(&scene.labels(), dim, seed)?)
    } else {
        Ok(EmbeddingTable::load(path).with_context(|| format!("loading {}", path.display()))?)
    }
}

/// Captures (or loads) frames and trains a field for `scene`.
fn train_scene(config: &RunConfig, scene: &Scene, table: &EmbeddingTable) -> Result<train::TrainOutcome> {
    let t = &config.train;
    let frames = if t.frames.as_os_str().is_empty() {
        scenegen::capture(scene, &config.capture.to_config(config.seed))?
    } else {
        scenegen::io::load_frames(&t.frames).with_context(|| format!("loading {}", t.frames.display()))?
    };
    let labels = LabelEmbeddings::new(&scene.labels(), table)?;
    let input_dim = scene.dimension;
    let model = FieldModel::new(FieldConfig::for_bounds(
        input_dim,
        &scene.bounds,
        table.dim(),
        config.seed,
    ))?;
    let mut outcome = train::train(&frames, &labels, model, &t.to_config(config.seed))?;
    outcome.model.set_bias_correction(t.bias_correction)?;
    Ok(outcome)
}

pub fn cmd_train(config: &RunConfig, out: &Output) -> Result<Status> {
    let scene = resolve_scene(&config.train.scene)?;
    let table = scene_embeddings(&scene, &config.train.embeddings, config.train.embed_dim, config.seed)?;
    let outcome = train_scene(config, &scene, &table)?;
    let ckpt = out.path(format!("{}.ckpt", scene.name));
    outcome.model.save(&ckpt)?;
    out.write(format!("{}_embeddings.txt", scene.name), table.to_text())?;
    let mut log = String::from("step,loss_r,loss_s,total\n");
    for e in &outcome.log {
        writeln!(
            log,
            "{},{:.8e},{:.8e},{:.8e}",
            e.step, e.loss_affordance, e.loss_semantic, e.total
        )
        .expect("write to String");
        println!("{e}");
    }
    out.write(format!("{}_train_log.csv", scene.name), log)?;
    println!("checkpoint -> {}", ckpt.display());
    Ok(Status::Ok)
}

pub fn cmd_bias(config: &RunConfig, out: &Output) -> Result<Status> {
    let b = &config.bias;
    let noise = NoiseModel::new(b.sigma_depth, b.sigma_pose)?;
    if b.ns.is_empty() || b.ns.contains(&0) {
        bail!("bias.ns must be a non-empty list of positive counts");
    }
    if b.trials == 0 || b.sweep_trials == 0 {
        bail!("bias.trials and bias.sweep_trials must be positive");
    }
    let curve = bias::bias_curve(&noise, b.true_distance, &b.ns, b.trials, config.seed, b.dim);
    out.write("bias_curve.csv", curve.to_csv())?;
    let ctx = RobotContext {
        reference_distance: b.true_distance,
        clutter_scale: b.clutter_scale,
        dim: b.dim,
        trials: b.trials,
        seed: config.seed,
    };
    let correction = bias::correction_from_count(&noise, b.n_eff, &ctx);
    let sweep_ctx = RobotContext {
        trials: b.sweep_trials,
        ..ctx
    };
    let mut sweep = String::from("sigma_c,n_eff,correction\n");
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &s in &b.sweep_sigma {
        let m = NoiseModel::combined(s)?;
        for &n in &b.sweep_n_eff {
            let c = bias::correction_from_count(&m, n, &sweep_ctx);
            lo = lo.min(c);
            hi = hi.max(c);
            writeln!(sweep, "{s},{n},{c:.6}").expect("write to String");
        }
    }
    out.write("bias_sweep.csv", sweep)?;
    let mut summary = String::new();
    writeln!(summary, "sigma_c = {:.6}", noise.sigma_combined()).expect("write to String");
    writeln!(summary, "n_eff = {}", b.n_eff).expect("write to String");
    writeln!(summary, "correction = {correction:.6}").expect("write to String");
    writeln!(summary, "monotone_within_3se = {}", curve.is_non_increasing_within(3.0)).expect("write to String");
    if lo <= hi {
        writeln!(summary, "sweep_range = [{lo:.6}, {hi:.6}]").expect("write to String");
    }
    out.write("bias_summary.txt", &summary)?;
    print!("{}", curve.to_csv());
    print!("{summary}");
    Ok(Status::Ok)
}

fn default_path(configured: &FsPath, fallback: PathBuf) -> PathBuf {
    if configured.as_os_str().is_empty() {
        fallback
    } else {
        configured.to_path_buf()
    }
}

fn point2(v: &[f64], what: &str) -> Result<[f64; 2]> {
    match v {
        [x, y] => Ok([*x, *y]),
        _ => bail!("{what} must have two coordinates, got {}", v.len()),
    }
}

pub fn cmd_plan(config: &RunConfig, out: &Output) -> Result<Status> {
    let p = &config.plan;
    let scene = resolve_scene(&p.scene)?;
    let ckpt = default_path(&p.checkpoint, config.out.join(format!("{}.ckpt", scene.name)));
    let field = FieldModel::load(&ckpt, None).with_context(|| format!("loading {}", ckpt.display()))?;
    let params = p.params(config.seed);
    params.validate()?;
    let start = point2(&p.start, "plan.start")?;
    let query_vec;
    let target = match (p.goal.is_empty(), p.query.is_empty()) {
        (false, true) => Target::Goal(point2(&p.goal, "plan.goal")?),
        (true, false) => {
            let path = default_path(&p.embeddings, config.out.join(format!("{}_embeddings.txt", scene.name)));
            let table = EmbeddingTable::load(&path).with_context(|| format!("loading {}", path.display()))?;
            query_vec = table.query(&p.query)?.vector;
            Target::Query(&query_vec)
        }
        _ => bail!("set exactly one of plan.goal and plan.query"),
    };

    let mut summary = String::new();
    let w = &mut summary;
    writeln!(w, "planner = {:?}", p.planner).expect("write to String");
    let (path, status) = match p.planner {
        PlannerName::Grid => {
            let grid = occupancy_from_field(&field, &scene.bounds, p.cell_size, params.clearance())?;
            match grid_plan(&grid, Some(&field), start, target) {
                Ok(path) => (Some(path), Status::Ok),
                Err(e) if e.is_no_path() => {
                    writeln!(w, "error = {e}").expect("write to String");
                    (None, Status::NoPath)
                }
                Err(e) => return Err(e.into()),
            }
        }
        PlannerName::Gradient => {
            let grid = occupancy_from_field(&field, &scene.bounds, params.init_cell_size, params.clearance())?;
            let result = initial_path(&field, &grid, start, target, &params)
                .and_then(|init| gradient_plan(&field, start, target, &params, Some(&init), &scene.bounds));
            match result {
                Ok(o) => {
                    writeln!(w, "iterations = {}", o.iterations).expect("write to String");
                    writeln!(w, "converged = {}", o.converged).expect("write to String");
                    writeln!(w, "feasible = {}", o.feasible).expect("write to String");
                    for (name, t) in [("initial", &o.initial_terms), ("final", &o.terms)] {
                        writeln!(w, "{name}_loss_obstacle = {:.8e}", t.obstacle).expect("write to String");
                        writeln!(w, "{name}_loss_spacing = {:.8e}", t.spacing).expect("write to String");
                        writeln!(w, "{name}_loss_semantic = {:.8e}", t.semantic).expect("write to String");
                        writeln!(w, "{name}_loss_length = {:.8e}", t.length).expect("write to String");
                        writeln!(w, "{name}_loss_total = {:.8e}", t.total).expect("write to String");
                    }
                    let status = if o.feasible { Status::Ok } else { Status::Infeasible };
                    (Some(o.path), status)
                }
                Err(e @ PlanError::NoPath)
                | Err(e @ PlanError::Blocked(_))
                | Err(e @ PlanError::NoFreeCell)
                | Err(e @ PlanError::OutOfGrid(_)) => {
                    writeln!(w, "error = {e}").expect("write to String");
                    (None, Status::NoPath)
                }
                Err(e) => return Err(e.into()),
            }
        }
    };
    if let Some(path) = &path {
        writeln!(w, "waypoints = {}", path.waypoints.len()).expect("write to String");
        writeln!(w, "length = {:.6}", path.length).expect("write to String");
        let min_sdf = path.sdf.iter().copied().fold(f64::INFINITY, f64::min);
        writeln!(w, "min_waypoint_sdf = {min_sdf:.6}").expect("write to String");
        if let Some(s) = path.semantic.last() {
            writeln!(w, "terminal_semantic = {s:.6}").expect("write to String");
        }
        out.write("path.csv", path.to_records())?;
    }
    writeln!(w, "status = {}", status.code()).expect("write to String");
    out.write("plan_summary.txt", &summary)?;
    print!("{summary}");
    Ok(status)
}

/// Label queries for a scene: the configured list, or every label except
/// walls.
pub fn default_queries(scene: &Scene, configured: &[String]) -> Vec<String> {
    if !configured.is_empty() {
        return configured.to_vec();
    }
    scene.labels().into_iter().filter(|l| l != "wall").collect()
}

pub fn cmd_eval(config: &RunConfig, out: &Output) -> Result<Status> {
    let e = &config.eval;
    let planners: Vec<PlannerKind> = e
        .planners
        .iter()
        .map(|n| parse_planner(n).with_context(|| format!("unknown planner {n:?}")))
        .collect::<Result<_>>()?;
    if planners.is_empty() {
        bail!("eval.planners is empty");
    }
    let params = config.plan.params(config.seed);
    let threshold = params.d_min - e.audit_slack;
    let mut length_reports: Vec<PlannerReport> = Vec::new();
    let mut semantic_reports: Vec<PlannerReport> = Vec::new();
    let mut audit = String::from("scene,benchmark,planner,paths,violating,min_clearance\n");
    for name in &e.scenes {
        let scene = resolve_scene(name)?;
        let (field, table) = if e.checkpoint_dir.as_os_str().is_empty() {
            let table = EmbeddingTable::synthetic(&scene.labels(), config.train.embed_dim, config.seed)?;
            let outcome = train_scene(config, &scene, &table)?;
            out.write(format!("checkpoints/{}_embeddings.txt", scene.name), table.to_text())?;
            outcome
                .model
                .save(&out.path(format!("checkpoints/{}.ckpt", scene.name)))?;
            (outcome.model, table)
        } else {
            let ckpt = e.checkpoint_dir.join(format!("{}.ckpt", scene.name));
            let field = FieldModel::load(&ckpt, None).with_context(|| format!("loading {}", ckpt.display()))?;
            let tp = e.checkpoint_dir.join(format!("{}_embeddings.txt", scene.name));
            let table = EmbeddingTable::load(&tp).with_context(|| format!("loading {}", tp.display()))?;
            (field, table)
        };
        let bench = Bench::new(&scene, &field, params.clone(), &planners)?;
        let trials = eval::sample_pairs(&scene, e.pairs, e.endpoint_clearance, e.min_separation, config.seed)?;
        let length = eval::run_length_benchmark(&bench, &planners, &trials)?;
        let starts = eval::sample_starts(&scene, e.starts, e.endpoint_clearance, config.seed.wrapping_add(1))?;
        let queries = default_queries(&scene, &e.queries);
        let semantic = eval::run_semantic_benchmark(&bench, &planners, &table, &queries, &starts)?;
        for (bench_name, run) in [("length", &length), ("semantic", &semantic)] {
            for (j, p) in planners.iter().enumerate() {
                let paths: Vec<&plan::Path> = run.paths.iter().filter_map(|r| r[j].as_ref()).collect();
                let a = eval::collision_audit(&paths, &scene, e.audit_resolution, threshold);
                writeln!(
                    audit,
                    "{},{bench_name},{},{},{},{:.6}",
                    scene.name,
                    p.name(),
                    paths.len(),
                    a.violating_paths(),
                    a.min_clearance()
                )
                .expect("write to String");
            }
        }
        length_reports.push(length.report);
        semantic_reports.push(semantic.report);
    }
    let tables = format!(
        "{}\n{}",
        eval::format_table("Average length multiple over the shortest path", &length_reports),
        eval::format_table(
            "Average relative semantic score of the final location",
            &semantic_reports
        )
    );
    out.write("eval_tables.txt", &tables)?;
    let csv = |reports: &[PlannerReport]| {
        let mut s = String::new();
        for (i, r) in reports.iter().enumerate() {
            let body = r.to_csv();
            s.push_str(if i == 0 {
                &body
            } else {
                body.split_once('\n').map_or("", |x| x.1)
            });
        }
        s
    };
    out.write("eval_length.csv", csv(&length_reports))?;
    out.write("eval_semantic.csv", csv(&semantic_reports))?;
    out.write("eval_audit.csv", &audit)?;
    print!("{tables}");
    print!("{audit}");
    Ok(Status::Ok)
}
