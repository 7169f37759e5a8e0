//! Benchmark harness: path-length multiples, relative semantic scores,
//! collision audits, and field fidelity checks against the analytic scene.

use std::fmt::Write as _;
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::embed::EmbeddingTable;
use crate::field::{FieldError, FieldModel};
use crate::plan::{
    gradient_plan, grid_plan, initial_path, occupancy_from_field, OccupancyGrid, Path, PlanError, PlannerParams, Target,
};
use crate::scenegen::{Point, Scene};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least {0} planners")]
    TooFewPlanners(usize),
    #[error("could not sample {0} free points")]
    Sampling(usize),
    #[error("query `{0}` is not in the embedding table")]
    UnknownQuery(String),
    #[error("scene must be planar")]
    Dimension,
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlannerKind {
    Grid { cell_size: f64 },
    Gradient,
}

impl PlannerKind {
    pub fn name(&self) -> String {
        match self {
            Self::Grid { cell_size } => format!("grid-{}cm", (cell_size * 100.0).round()),
            Self::Gradient => "gradient".into(),
        }
    }

    /// Gradient planner plus grid planners at 10, 20 and 40 cm.
    pub fn default_suite() -> Vec<PlannerKind> {
        vec![
            Self::Gradient,
            Self::Grid { cell_size: 0.1 },
            Self::Grid { cell_size: 0.2 },
            Self::Grid { cell_size: 0.4 },
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSet {
    pub scene: String,
    pub pairs: Vec<([f64; 2], [f64; 2])>,
    pub seed: u64,
}

/// Uniform point in the scene bounds with analytic clearance of at least
/// `clearance`, by rejection sampling.
fn sample_free<R: Rng>(scene: &Scene, clearance: f64, rng: &mut R) -> Option<[f64; 2]> {
    let b = &scene.bounds;
    for _ in 0..100_000 {
        let p = [rng.gen_range(b.min.x..b.max.x), rng.gen_range(b.min.y..b.max.y)];
        if scene.sdf(&Point::new(p[0], p[1], 0.0)) >= clearance {
            return Some(p);
        }
    }
    None
}

/// Random start/goal pairs with analytic clearance `clearance`, at least
/// `min_separation` apart.
pub fn sample_pairs(
    scene: &Scene,
    n: usize,
    clearance: f64,
    min_separation: f64,
    seed: u64,
) -> Result<TrialSet, EvalError> {
    if scene.dimension != 2 {
        return Err(EvalError::Dimension);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n);
    let mut attempts = 0;
    while pairs.len() < n {
        attempts += 1;
        if attempts > 1000 * n.max(1) {
            return Err(EvalError::Sampling(n));
        }
        let a = sample_free(scene, clearance, &mut rng).ok_or(EvalError::Sampling(n))?;
        let b = sample_free(scene, clearance, &mut rng).ok_or(EvalError::Sampling(n))?;
        if (a[0] - b[0]).hypot(a[1] - b[1]) >= min_separation {
            pairs.push((a, b));
        }
    }
    Ok(TrialSet {
        scene: scene.name.clone(),
        pairs,
        seed,
    })
}

pub fn sample_starts(scene: &Scene, n: usize, clearance: f64, seed: u64) -> Result<Vec<[f64; 2]>, EvalError> {
    if scene.dimension != 2 {
        return Err(EvalError::Dimension);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| sample_free(scene, clearance, &mut rng).ok_or(EvalError::Sampling(n)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Path length divided by the shortest across planners.
    LengthMultiple,
    /// Terminal similarity divided by the best across planners.
    RelativeSemantic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub label: String,
    /// Raw length or similarity per planner; `None` on failure.
    pub raw: Vec<Option<f64>>,
    /// Normalized value per planner, set only for trials where every
    /// planner succeeded.
    pub normalized: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerReport {
    pub scene: String,
    pub metric: Metric,
    pub planners: Vec<String>,
    pub trials: Vec<TrialRecord>,
    /// Mean normalized value per planner over complete trials.
    pub aggregate: Vec<f64>,
    pub failures: Vec<usize>,
    /// Trials where some but not all planners failed.
    pub partial: usize,
    /// Trials where every planner failed, or (semantic metric) the best
    /// score was not positive.
    pub excluded: usize,
}

impl PlannerReport {
    fn assemble(scene: &str, metric: Metric, planners: Vec<String>, mut trials: Vec<TrialRecord>) -> Self {
        let k = planners.len();
        let mut failures = vec![0; k];
        let (mut partial, mut excluded) = (0, 0);
        let mut sums = vec![0.0; k];
        let mut complete = 0usize;
        for t in &mut trials {
            for (f, r) in failures.iter_mut().zip(&t.raw) {
                if r.is_none() {
                    *f += 1;
                }
            }
            let ok = t.raw.iter().filter(|r| r.is_some()).count();
            if ok == 0 {
                excluded += 1;
                continue;
            }
            if ok < k {
                partial += 1;
                continue;
            }
            let vals: Vec<f64> = t.raw.iter().map(|r| r.expect("complete trial")).collect();
            let norm: Vec<f64> = match metric {
                Metric::LengthMultiple => {
                    let best = vals.iter().copied().fold(f64::INFINITY, f64::min);
                    if !(best > 0.0) {
                        excluded += 1;
                        continue;
                    }
                    vals.iter().map(|v| v / best).collect()
                }
                Metric::RelativeSemantic => {
                    let best = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    if !(best > 0.0) {
                        excluded += 1;
                        continue;
                    }
                    vals.iter().map(|v| v / best).collect()
                }
            };
            complete += 1;
            for (s, v) in sums.iter_mut().zip(&norm) {
                *s += v;
            }
            t.normalized = norm.into_iter().map(Some).collect();
        }
        let aggregate = sums
            .iter()
            .map(|s| if complete > 0 { s / complete as f64 } else { f64::NAN })
            .collect();
        Self {
            scene: scene.to_string(),
            metric,
            planners,
            trials,
            aggregate,
            failures,
            partial,
            excluded,
        }
    }

    pub fn complete_trials(&self) -> usize {
        self.trials.len() - self.partial - self.excluded
    }

    pub fn value(&self, planner: &str) -> Option<f64> {
        self.planners
            .iter()
            .position(|p| p == planner)
            .map(|i| self.aggregate[i])
    }

    /// Per-trial CSV: `scene,trial,label,planner,raw,normalized`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scene,trial,label,planner,raw,normalized\n");
        for (i, t) in self.trials.iter().enumerate() {
            for (j, p) in self.planners.iter().enumerate() {
                let raw = t.raw[j].map_or(String::new(), |v| format!("{v:.6}"));
                let norm = t
                    .normalized
                    .get(j)
                    .copied()
                    .flatten()
                    .map_or(String::new(), |v| format!("{v:.6}"));
                writeln!(out, "{},{i},{},{p},{raw},{norm}", self.scene, t.label).expect("write to String");
            }
        }
        out
    }
}

/// Planner rows by scene columns, in the layout of a results table.
pub fn format_table(title: &str, reports: &[PlannerReport]) -> String {
    let mut out = format!("{title}\n");
    let Some(first) = reports.first() else {
        return out;
    };
    write!(out, "{:<14}", "planner").expect("write to String");
    for r in reports {
        write!(out, " {:>10}", r.scene).expect("write to String");
    }
    out.push('\n');
    for (i, p) in first.planners.iter().enumerate() {
        write!(out, "{p:<14}").expect("write to String");
        for r in reports {
            write!(out, " {:>10.3}", r.aggregate.get(i).copied().unwrap_or(f64::NAN)).expect("write to String");
        }
        out.push('\n');
    }
    write!(out, "{:<14}", "complete").expect("write to String");
    for r in reports {
        write!(out, " {:>10}", format!("{}/{}", r.complete_trials(), r.trials.len())).expect("write to String");
    }
    out.push('\n');
    for (i, p) in first.planners.iter().enumerate() {
        write!(out, "{:<14}", format!("fail {p}")).expect("write to String");
        for r in reports {
            write!(out, " {:>10}", r.failures.get(i).copied().unwrap_or(0)).expect("write to String");
        }
        out.push('\n');
    }
    out
}

/// Output of a benchmark run: the report plus every returned path, indexed
/// `[trial][planner]`.
#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub report: PlannerReport,
    pub paths: Vec<Vec<Option<Path>>>,
}

/// Shared per-scene planning state: the field and one occupancy grid per
/// cell size in use.
pub struct Bench<'a> {
    pub scene: &'a Scene,
    pub field: &'a FieldModel,
    pub params: PlannerParams,
    grids: Vec<(f64, OccupancyGrid)>,
    pub threads: usize,
}

impl<'a> Bench<'a> {
    pub fn new(
        scene: &'a Scene,
        field: &'a FieldModel,
        params: PlannerParams,
        planners: &[PlannerKind],
    ) -> Result<Self, EvalError> {
        if scene.dimension != 2 {
            return Err(EvalError::Dimension);
        }
        params.validate()?;
        let mut sizes: Vec<f64> = planners
            .iter()
            .filter_map(|p| match p {
                PlannerKind::Grid { cell_size } => Some(*cell_size),
                PlannerKind::Gradient => None,
            })
            .collect();
        if planners.contains(&PlannerKind::Gradient) {
            sizes.push(params.init_cell_size);
        }
        let mut grids: Vec<(f64, OccupancyGrid)> = Vec::new();
        for c in sizes {
            if grids.iter().all(|(s, _)| *s != c) {
                grids.push((c, occupancy_from_field(field, &scene.bounds, c, params.clearance())?));
            }
        }
        let threads = thread::available_parallelism().map_or(1, |n| n.get());
        Ok(Self {
            scene,
            field,
            params,
            grids,
            threads,
        })
    }

    pub fn grid(&self, cell_size: f64) -> &OccupancyGrid {
        &self
            .grids
            .iter()
            .find(|(s, _)| *s == cell_size)
            .expect("grid prepared")
            .1
    }

    /// Runs one planner; `Ok(None)` when it finds no usable path.
    pub fn plan(&self, planner: PlannerKind, start: [f64; 2], target: Target<'_>) -> Result<Option<Path>, EvalError> {
        let result = match planner {
            PlannerKind::Grid { cell_size } => grid_plan(self.grid(cell_size), Some(self.field), start, target),
            PlannerKind::Gradient => {
                let grid = self.grid(self.params.init_cell_size);
                initial_path(self.field, grid, start, target, &self.params).and_then(|init| {
                    gradient_plan(self.field, start, target, &self.params, Some(&init), &self.scene.bounds)
                        .and_then(|o| if o.feasible { Ok(o.path) } else { Err(PlanError::NoPath) })
                })
            }
        };
        match result {
            Ok(p) => Ok(Some(p)),
            Err(e) if e.is_no_path() => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Runs `f` over `0..n` on worker threads, returning results in index
    /// order.
    fn par_map<T: Send, F>(&self, n: usize, f: F) -> Vec<T>
    where
        F: Fn(usize) -> T + Sync,
    {
        let workers = self.threads.clamp(1, n.max(1));
        let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
        thread::scope(|s| {
            let f = &f;
            let handles: Vec<_> = (0..workers)
                .map(|w| s.spawn(move || (w..n).step_by(workers).map(|i| (i, f(i))).collect::<Vec<_>>()))
                .collect();
            for h in handles {
                for (i, v) in h.join().expect("benchmark worker panicked") {
                    slots[i] = Some(v);
                }
            }
        });
        slots.into_iter().map(|v| v.expect("every index computed")).collect()
    }
}

/// Table I protocol: for each pair, every planner's length over the
/// shortest length achieved on that pair.
pub fn run_length_benchmark(
    bench: &Bench<'_>,
    planners: &[PlannerKind],
    trials: &TrialSet,
) -> Result<BenchmarkRun, EvalError> {
    if planners.len() < 2 {
        return Err(EvalError::TooFewPlanners(2));
    }
    let results = bench.par_map(trials.pairs.len(), |i| {
        let (s, g) = trials.pairs[i];
        planners
            .iter()
            .map(|&p| bench.plan(p, s, Target::Goal(g)))
            .collect::<Result<Vec<_>, _>>()
    });
    let mut records = Vec::new();
    let mut paths = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        let r = r?;
        let (s, g) = trials.pairs[i];
        records.push(TrialRecord {
            label: format!("({:.3} {:.3})->({:.3} {:.3})", s[0], s[1], g[0], g[1]),
            raw: r.iter().map(|p| p.as_ref().map(|p| p.length)).collect(),
            normalized: vec![None; planners.len()],
        });
        paths.push(r);
    }
    Ok(BenchmarkRun {
        report: PlannerReport::assemble(
            &trials.scene,
            Metric::LengthMultiple,
            planners.iter().map(PlannerKind::name).collect(),
            records,
        ),
        paths,
    })
}

/// Table II protocol: for each (query, start), every planner's terminal
/// similarity over the best achieved on that trial.
pub fn run_semantic_benchmark(
    bench: &Bench<'_>,
    planners: &[PlannerKind],
    table: &EmbeddingTable,
    queries: &[String],
    starts: &[[f64; 2]],
) -> Result<BenchmarkRun, EvalError> {
    if planners.len() < 2 {
        return Err(EvalError::TooFewPlanners(2));
    }
    let qvecs: Vec<Vec<f64>> = queries
        .iter()
        .map(|q| {
            table
                .get(q)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| EvalError::UnknownQuery(q.clone()))
        })
        .collect::<Result<_, _>>()?;
    let n = queries.len() * starts.len();
    let results = bench.par_map(n, |i| {
        let (qi, si) = (i / starts.len(), i % starts.len());
        planners
            .iter()
            .map(|&p| bench.plan(p, starts[si], Target::Query(&qvecs[qi])))
            .collect::<Result<Vec<_>, _>>()
    });
    let mut records = Vec::new();
    let mut paths = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        let r = r?;
        let (qi, si) = (i / starts.len(), i % starts.len());
        records.push(TrialRecord {
            label: format!("{}@({:.3} {:.3})", queries[qi], starts[si][0], starts[si][1]),
            raw: r
                .iter()
                .map(|p| p.as_ref().and_then(|p| p.semantic.last().copied()))
                .collect(),
            normalized: vec![None; planners.len()],
        });
        paths.push(r);
    }
    Ok(BenchmarkRun {
        report: PlannerReport::assemble(
            &bench.scene.name,
            Metric::RelativeSemantic,
            planners.iter().map(PlannerKind::name).collect(),
            records,
        ),
        paths,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathAudit {
    pub min_clearance: f64,
    pub violations: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub threshold: f64,
    pub paths: Vec<PathAudit>,
}

impl AuditReport {
    pub fn violating_paths(&self) -> usize {
        self.paths.iter().filter(|p| p.violations > 0).count()
    }

    pub fn min_clearance(&self) -> f64 {
        self.paths.iter().map(|p| p.min_clearance).fold(f64::INFINITY, f64::min)
    }
}

/// Samples every path at `resolution` spacing against the analytic SDF
/// and counts samples with clearance below `threshold`.
pub fn collision_audit(paths: &[&Path], scene: &Scene, resolution: f64, threshold: f64) -> AuditReport {
    let audits = paths
        .iter()
        .map(|p| {
            let pts = p.densify(resolution);
            let mut min = f64::INFINITY;
            let mut violations = 0;
            for q in &pts {
                let d = scene.sdf(&Point::new(q[0], q[1], 0.0));
                min = min.min(d);
                if d < threshold {
                    violations += 1;
                }
            }
            PathAudit {
                min_clearance: min,
                violations,
                samples: pts.len(),
            }
        })
        .collect();
    AuditReport {
        threshold,
        paths: audits,
    }
}

/// Mean absolute SDF error over grid points (spacing `step`) where the
/// analytic SDF is positive.
pub fn sdf_mae(field: &FieldModel, scene: &Scene, step: f64) -> Result<f64, EvalError> {
    let pts = free_grid(scene, step, 0.0);
    let flat: Vec<f64> = pts.iter().flatten().copied().collect();
    let pred = field.query_many(&flat)?.sdf;
    let total: f64 = pts
        .iter()
        .zip(&pred)
        .map(|(p, s)| (s - scene.sdf(&Point::new(p[0], p[1], 0.0))).abs())
        .sum();
    Ok(total / pts.len().max(1) as f64)
}

fn free_grid(scene: &Scene, step: f64, clearance: f64) -> Vec<[f64; 2]> {
    let b = &scene.bounds;
    let nx = ((b.max.x - b.min.x) / step).floor() as usize;
    let ny = ((b.max.y - b.min.y) / step).floor() as usize;
    let mut pts = Vec::new();
    for iy in 0..ny {
        for ix in 0..nx {
            let p = [b.min.x + (ix as f64 + 0.5) * step, b.min.y + (iy as f64 + 0.5) * step];
            if scene.sdf(&Point::new(p[0], p[1], 0.0)) > clearance {
                pts.push(p);
            }
        }
    }
    pts
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelArgmax {
    pub label: String,
    pub point: [f64; 2],
    pub score: f64,
    /// Distance from the argmax point to the nearest object carrying the
    /// label.
    pub label_distance: f64,
}

/// For each scene label, the free-space grid point (spacing `step`) whose
/// predicted semantics are most similar to the label's embedding.
pub fn semantic_argmax(
    field: &FieldModel,
    scene: &Scene,
    table: &EmbeddingTable,
    step: f64,
) -> Result<Vec<LabelArgmax>, EvalError> {
    let pts = free_grid(scene, step, 0.0);
    let flat: Vec<f64> = pts.iter().flatten().copied().collect();
    let out = field.query_many(&flat)?;
    scene
        .labels()
        .into_iter()
        .map(|label| {
            let q = table
                .get(&label)
                .ok_or_else(|| EvalError::UnknownQuery(label.clone()))?;
            let mut best = (f64::NEG_INFINITY, 0);
            for i in 0..pts.len() {
                let s: f64 = out.sem_row(i).iter().zip(q).map(|(a, b)| a * b).sum();
                if s > best.0 {
                    best = (s, i);
                }
            }
            let p = pts[best.1];
            let d = scene
                .label_sdf(&Point::new(p[0], p[1], 0.0), &label)
                .expect("label from scene");
            Ok(LabelArgmax {
                label,
                point: p,
                score: best.0,
                label_distance: d.abs(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::bundled;

    fn record(raw: &[Option<f64>]) -> TrialRecord {
        TrialRecord {
            label: String::new(),
            raw: raw.to_vec(),
            normalized: vec![None; raw.len()],
        }
    }

    #[test]
    fn length_multiples_normalize_to_best() {
        let r = PlannerReport::assemble(
            "s",
            Metric::LengthMultiple,
            vec!["a".into(), "b".into()],
            vec![record(&[Some(10.0), Some(10.22)])],
        );
        assert_eq!(r.aggregate[0], 1.0);
        assert!((r.aggregate[1] - 1.022).abs() < 1e-12);
    }

    #[test]
    fn failures_are_counted_separately() {
        let r = PlannerReport::assemble(
            "s",
            Metric::RelativeSemantic,
            vec!["a".into(), "b".into()],
            vec![
                record(&[Some(0.8), Some(0.4)]),
                record(&[Some(0.5), None]),
                record(&[None, None]),
                record(&[Some(-0.1), Some(-0.2)]),
            ],
        );
        assert_eq!((r.partial, r.excluded, r.complete_trials()), (1, 2, 1));
        assert_eq!(r.failures, vec![1, 2]);
        assert_eq!(r.aggregate, vec![1.0, 0.5]);
    }

    #[test]
    fn aggregates_ignore_trial_order() {
        let trials = vec![
            record(&[Some(3.0), Some(4.0)]),
            record(&[Some(5.0), Some(2.5)]),
            record(&[Some(1.0), Some(1.5)]),
        ];
        let names = vec!["a".to_string(), "b".to_string()];
        let a = PlannerReport::assemble("s", Metric::LengthMultiple, names.clone(), trials.clone());
        let mut rev = trials;
        rev.reverse();
        let b = PlannerReport::assemble("s", Metric::LengthMultiple, names, rev);
        for (x, y) in a.aggregate.iter().zip(&b.aggregate) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn audit_straight_and_corrupted_paths() {
        let scene = bundled::single_disk();
        let clear = Path::new(vec![[0.5, 0.5], [3.5, 0.5]]).unwrap();
        let through = Path::new(vec![[0.5, 2.0], [3.5, 2.0]]).unwrap();
        let audit = collision_audit(&[&clear, &through], &scene, 0.01, 0.28);
        assert_eq!(audit.paths[0].violations, 0);
        // Closest approach of y = 0.5 to the disk at (2, 2), r = 0.5.
        assert!((audit.paths[0].min_clearance - 1.0).abs() < 1e-12);
        assert!(audit.paths[1].violations > 0);
        assert_eq!(audit.violating_paths(), 1);
    }

    #[test]
    fn pairs_are_free_and_separated() {
        let scene = bundled::rooms();
        let t = sample_pairs(&scene, 20, 0.4, 1.0, 3).unwrap();
        for (a, b) in &t.pairs {
            assert!(scene.sdf(&Point::new(a[0], a[1], 0.0)) >= 0.4);
            assert!(scene.sdf(&Point::new(b[0], b[1], 0.0)) >= 0.4);
            assert!((a[0] - b[0]).hypot(a[1] - b[1]) >= 1.0);
        }
        assert_eq!(t, sample_pairs(&scene, 20, 0.4, 1.0, 3).unwrap());
    }
}
