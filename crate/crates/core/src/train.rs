//! Joint supervision of the field from posed depth + label frames.
//!
//! Each step draws a few frames from the replay buffer, samples points
//! along rays through random valid pixels, and labels every sample with
//! the batchwise nearest surface point: its distance (signed by whether
//! the sample lies in front of or behind the measured depth) supervises
//! the SDF head, and its label embedding supervises the semantic head.

use std::collections::HashMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autograd::{AdamConfig, AdamState, AutogradError, Graph, Tensor, Var};
use crate::embed::EmbeddingTable;
use crate::field::{FieldError, FieldModel};
use crate::scenegen::Frame;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("replay buffer has no frame with valid depth")]
    NoValidFrames,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("contrastive loss needs at least 2 samples, got {0}")]
    BatchTooSmall(usize),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("label id {0} has no embedding")]
    MissingEmbedding(u32),
    #[error("loss became non-finite at step {0}")]
    Diverged(usize),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Autograd(#[from] AutogradError),
}

/// Sign applied to the SDF inside the semantic sample weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightSign {
    /// `softmax(-sdf / tau)`: samples far from their supervising surface
    /// count less.
    NearerHeavier,
    /// `softmax(+sdf / tau)`.
    FartherHeavier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub frames_per_batch: usize,
    pub samples_per_ray: usize,
    pub lr: f64,
    pub lambda_r: f64,
    pub lambda_s: f64,
    /// Temperature of the SDF-based sample weights (meters).
    pub weight_temperature: f64,
    pub weight_sign: WeightSign,
    /// Multiplier on the cosine logits of the contrastive loss.
    pub logit_scale: f64,
    /// Fraction of samples drawn behind the measured surface.
    pub behind_fraction: f64,
    /// How far behind the surface those samples may land (meters).
    pub behind_depth: f64,
    /// Use every valid pixel of the batch's frames as nearest-neighbor
    /// surface points, rather than only the endpoints of the sampled rays.
    pub dense_surface: bool,
    pub log_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 4000,
            batch_size: 1024,
            frames_per_batch: 8,
            samples_per_ray: 4,
            lr: 3e-4,
            lambda_r: 1.0,
            lambda_s: 1.0,
            weight_temperature: 0.5,
            weight_sign: WeightSign::NearerHeavier,
            logit_scale: 10.0,
            behind_fraction: 0.2,
            behind_depth: 0.3,
            dense_surface: true,
            log_every: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let err = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size < 2 {
            return Err(TrainError::BatchTooSmall(self.batch_size));
        }
        if self.frames_per_batch == 0 || self.samples_per_ray == 0 {
            return err("frames_per_batch and samples_per_ray must be positive");
        }
        if self.batch_size < self.frames_per_batch * self.samples_per_ray {
            return err("batch_size must cover one ray per sampled frame");
        }
        if !(self.lambda_r >= 0.0 && self.lambda_s >= 0.0) || self.lambda_r + self.lambda_s == 0.0 {
            return err("loss weights must be non-negative and not both zero");
        }
        if !(self.lr > 0.0 && self.weight_temperature > 0.0 && self.logit_scale > 0.0) {
            return err("lr, weight_temperature and logit_scale must be positive");
        }
        if !(0.0..=1.0).contains(&self.behind_fraction) || self.behind_depth < 0.0 {
            return err("behind_fraction must be in [0, 1] and behind_depth >= 0");
        }
        Ok(())
    }
}

/// One batch of supervised samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub dim: usize,
    /// `N x dim`, row-major.
    pub query_points: Vec<f64>,
    pub sdf_targets: Vec<f64>,
    /// `N x sem_dim`, unit rows.
    pub target_embeddings: Vec<f64>,
    pub sem_dim: usize,
    /// Index into `surface_points` of each sample's supervising point.
    pub nn_index: Vec<usize>,
    /// `M x dim` ray endpoints of this batch.
    pub surface_points: Vec<f64>,
    pub surface_labels: Vec<u32>,
    /// `true` when the sample lies in front of the measured depth.
    pub in_front: Vec<bool>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.sdf_targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sdf_targets.is_empty()
    }

    pub fn query(&self, i: usize) -> &[f64] {
        &self.query_points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn surface(&self, j: usize) -> &[f64] {
        &self.surface_points[j * self.dim..(j + 1) * self.dim]
    }
}

/// Per-label embedding vectors, indexed by frame label id.
#[derive(Debug, Clone)]
pub struct LabelEmbeddings {
    pub dim: usize,
    vectors: Vec<Vec<f64>>,
}

impl LabelEmbeddings {
    /// Resolves each scene label (in label-id order) against `table`.
    pub fn new<S: AsRef<str>>(labels: &[S], table: &EmbeddingTable) -> Result<Self, TrainError> {
        let vectors = labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                table
                    .get(l.as_ref())
                    .map(<[f64]>::to_vec)
                    .ok_or(TrainError::MissingEmbedding(i as u32))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            dim: table.dim(),
            vectors,
        })
    }

    pub fn get(&self, id: u32) -> Result<&[f64], TrainError> {
        self.vectors
            .get(id as usize)
            .map(Vec::as_slice)
            .ok_or(TrainError::MissingEmbedding(id))
    }
}

/// Draws one training batch from the replay buffer.
pub fn sample_batch<R: Rng + ?Sized>(
    frames: &[Frame],
    labels: &LabelEmbeddings,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<SampleBatch, TrainError> {
    let usable: Vec<usize> = (0..frames.len())
        .filter(|&i| frames[i].valid_pixels().next().is_some())
        .collect();
    if usable.is_empty() {
        return Err(TrainError::NoValidFrames);
    }
    let dim = frames[usable[0]].dimension();
    let rays_per_frame = (config.batch_size / (config.frames_per_batch * config.samples_per_ray)).max(1);

    struct RaySample {
        origin: Vec<f64>,
        dir: Vec<f64>,
        depth: f64,
    }
    let mut rays = Vec::new();
    let mut surface_points = Vec::new();
    let mut surface_labels = Vec::new();
    for _ in 0..config.frames_per_batch {
        let fi = *usable.choose(rng).expect("non-empty");
        let frame = &frames[fi];
        let valid: Vec<usize> = frame.valid_pixels().collect();
        let origin = frame.pose.position();
        if config.dense_surface {
            for &px in &valid {
                let hit = origin + frame.world_ray(px) * frame.depth[px];
                surface_points.extend_from_slice(&hit.as_slice()[..dim]);
                surface_labels.push(frame.labels[px]);
            }
        }
        for _ in 0..rays_per_frame {
            let px = *valid.choose(rng).expect("frame has valid pixels");
            let dir = frame.world_ray(px);
            let depth = frame.depth[px];
            if !config.dense_surface {
                let hit = origin + dir * depth;
                surface_points.extend_from_slice(&hit.as_slice()[..dim]);
                surface_labels.push(frame.labels[px]);
            }
            rays.push(RaySample {
                origin: origin.as_slice()[..dim].to_vec(),
                dir: dir.as_slice()[..dim].to_vec(),
                depth,
            });
        }
    }

    let m = surface_labels.len();
    let mut query_points = Vec::with_capacity(rays.len() * config.samples_per_ray * dim);
    let mut in_front = Vec::new();
    for ray in &rays {
        for _ in 0..config.samples_per_ray {
            let behind = config.behind_depth > 0.0 && rng.gen_bool(config.behind_fraction);
            let t = if behind {
                ray.depth + rng.gen_range(0.0..1.0) * config.behind_depth
            } else {
                rng.gen_range(0.0..1.0) * ray.depth
            };
            query_points.extend(ray.origin.iter().zip(&ray.dir).map(|(o, d)| o + d * t));
            in_front.push(t < ray.depth);
        }
    }

    let n = in_front.len();
    if n == 0 || m == 0 {
        return Err(TrainError::EmptyBatch);
    }
    let mut sdf_targets = Vec::with_capacity(n);
    let mut nn_index = Vec::with_capacity(n);
    let mut target_embeddings = Vec::with_capacity(n * labels.dim);
    for i in 0..n {
        let q = &query_points[i * dim..(i + 1) * dim];
        let (j, d2) = (0..m)
            .map(|j| {
                let s = &surface_points[j * dim..(j + 1) * dim];
                (j, q.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            })
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        let dist = d2.sqrt();
        sdf_targets.push(if in_front[i] { dist } else { -dist });
        nn_index.push(j);
        target_embeddings.extend_from_slice(labels.get(surface_labels[j])?);
    }
    Ok(SampleBatch {
        dim,
        query_points,
        sdf_targets,
        target_embeddings,
        sem_dim: labels.dim,
        nn_index,
        surface_points,
        surface_labels,
        in_front,
    })
}

/// Mean squared error between predicted and target SDF values.
pub fn loss_affordance(g: &mut Graph, predicted: Var, targets: &[f64]) -> Result<Var, TrainError> {
    let t = g.constant(Tensor::vector(targets.to_vec()))?;
    Ok(g.mse(predicted, t)?)
}

/// `softmax(∓sdf / tau)` over the batch.
pub fn sample_weights(sdf_targets: &[f64], temperature: f64, sign: WeightSign) -> Vec<f64> {
    let s = match sign {
        WeightSign::NearerHeavier => -1.0,
        WeightSign::FartherHeavier => 1.0,
    };
    let z: Vec<f64> = sdf_targets.iter().map(|d| s * d / temperature).collect();
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// Settings for [`loss_semantic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemanticLossConfig {
    pub temperature: f64,
    pub sign: WeightSign,
    pub logit_scale: f64,
}

impl From<&TrainConfig> for SemanticLossConfig {
    fn from(c: &TrainConfig) -> Self {
        Self {
            temperature: c.weight_temperature,
            sign: c.weight_sign,
            logit_scale: c.logit_scale,
        }
    }
}

/// SDF-weighted symmetric InfoNCE over the batch.
///
/// The logit matrix is `logit_scale * ŝ sᵀ` (`N x N`). Each sample `i`
/// contributes the mean of its row cross entropy (prediction → targets)
/// and its column cross entropy (target → predictions), weighted by
/// [`sample_weights`]. Target rows repeat whenever samples share a label,
/// so the logits are evaluated against the `K` distinct targets only and
/// duplicate columns are folded in through `ln(count)`; the value is the
/// same as the full `N x N` evaluation.
pub fn loss_semantic(
    g: &mut Graph,
    predicted: Var,
    targets: &[f64],
    sdf_targets: &[f64],
    config: SemanticLossConfig,
) -> Result<Var, TrainError> {
    let (n, d) = g
        .value(predicted)
        .dims2()
        .ok_or_else(|| TrainError::Config("predicted embeddings must be N x D".into()))?;
    if n < 2 {
        return Err(TrainError::BatchTooSmall(n));
    }
    if targets.len() != n * d || sdf_targets.len() != n {
        return Err(TrainError::Config("semantic loss inputs disagree in size".into()));
    }

    let mut unique: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut rows: Vec<&[f64]> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    let mut idx = Vec::with_capacity(n);
    for row in targets.chunks(d) {
        let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
        let k = *unique.entry(key).or_insert_with(|| {
            rows.push(row);
            counts.push(0.0);
            rows.len() - 1
        });
        counts[k] += 1.0;
        idx.push(k);
    }
    let k = rows.len();
    let mut ut = vec![0.0; d * k];
    for (c, row) in rows.iter().enumerate() {
        for r in 0..d {
            ut[r * k + c] = row[r] * config.logit_scale;
        }
    }
    let ut = g.constant(Tensor::matrix(d, k, ut)?)?;
    let logits = g.matmul(predicted, ut)?;

    let log_counts = g.constant(Tensor::vector(counts.iter().map(|c| c.ln()).collect()))?;
    let shifted = g.add_row(logits, log_counts)?;
    let row_ce = g.cross_entropy(shifted, &idx)?;
    let own_count = g.constant(Tensor::vector(idx.iter().map(|&c| counts[c].ln()).collect()))?;
    let row_term = g.add(row_ce, own_count)?;

    let by_target = g.transpose(logits)?;
    let col_lse = g.logsumexp(by_target)?;
    let col_lse = g.gather(col_lse, &idx)?;
    let positive = g.pick_rows(logits, &idx)?;
    let col_term = g.sub(col_lse, positive)?;

    let per_sample = g.add(row_term, col_term)?;
    let w: Vec<f64> = sample_weights(sdf_targets, config.temperature, config.sign)
        .into_iter()
        .map(|w| 0.5 * w)
        .collect();
    let w = g.constant(Tensor::vector(w))?;
    Ok(g.dot(per_sample, w)?)
}

/// Loss nodes of one training step.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub affordance: Var,
    pub semantic: Var,
}

/// `lambda_r * L_r + lambda_s * L_s` for `batch` on an existing graph.
pub fn loss_total(
    g: &mut Graph,
    model: &FieldModel,
    params: &[Var],
    batch: &SampleBatch,
    config: &TrainConfig,
) -> Result<LossTerms, TrainError> {
    let n = batch.len();
    let x = g.constant(Tensor::matrix(n, batch.dim, batch.query_points.clone())?)?;
    let (sdf, sem) = model.forward(g, params, x)?;
    let affordance = loss_affordance(g, sdf, &batch.sdf_targets)?;
    let semantic = loss_semantic(
        g,
        sem,
        &batch.target_embeddings,
        &batch.sdf_targets,
        SemanticLossConfig::from(config),
    )?;
    let a = g.scale(affordance, config.lambda_r);
    let s = g.scale(semantic, config.lambda_s);
    let total = g.add(a, s)?;
    Ok(LossTerms {
        total,
        affordance,
        semantic,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogEntry {
    pub step: usize,
    pub loss_affordance: f64,
    pub loss_semantic: f64,
    pub total: f64,
}

impl fmt::Display for TrainLogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step={} loss_r={:.6e} loss_s={:.6e} total={:.6e}",
            self.step, self.loss_affordance, self.loss_semantic, self.total
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: FieldModel,
    /// Entries every `log_every` steps (and at the final step).
    pub log: Vec<TrainLogEntry>,
    /// Total loss of every step.
    pub curve: Vec<f64>,
}

/// Runs `config.steps` optimization steps starting from `model`.
pub fn train(
    frames: &[Frame],
    labels: &LabelEmbeddings,
    mut model: FieldModel,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if labels.dim != model.config.sem_dim {
        return Err(TrainError::Config(format!(
            "embedding dim {} does not match field sem_dim {}",
            labels.dim, model.config.sem_dim
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(AdamConfig::with_lr(config.lr));
    let mut log = Vec::new();
    let mut curve = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let batch = sample_batch(frames, labels, config, &mut rng)?;
        let mut g = Graph::new();
        let pv = model.param_vars(&mut g, true)?;
        let terms = loss_total(&mut g, &model, &pv, &batch, config)?;
        let total = g.value(terms.total).item().unwrap_or(f64::NAN);
        if !total.is_finite() {
            return Err(TrainError::Diverged(step));
        }
        g.backward(terms.total)?;
        let grads: Vec<&[f64]> = pv
            .iter()
            .map(|v| g.grad(*v).expect("every parameter reaches the loss"))
            .collect();
        adam.step(&mut model.params, &grads).map_err(|e| match e {
            AutogradError::NonFiniteGradient(_) => TrainError::Diverged(step),
            other => other.into(),
        })?;
        curve.push(total);
        if config.log_every > 0 && ((step + 1) % config.log_every == 0 || step + 1 == config.steps) {
            log.push(TrainLogEntry {
                step: step + 1,
                loss_affordance: g.value(terms.affordance).item().unwrap_or(f64::NAN),
                loss_semantic: g.value(terms.semantic).item().unwrap_or(f64::NAN),
                total,
            });
        }
    }
    Ok(TrainOutcome { model, log, curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldConfig;
    use crate::scenegen::{self, bundled, CaptureConfig, Point};
    use approx::assert_abs_diff_eq;

    fn setup() -> (scenegen::Scene, Vec<Frame>, LabelEmbeddings) {
        let scene = bundled::rooms();
        let capture = CaptureConfig {
            frames: 10,
            width: 65,
            ..CaptureConfig::default()
        };
        let frames = scenegen::capture(&scene, &capture).unwrap();
        let table = EmbeddingTable::synthetic(&scene.labels(), 16, 0).unwrap();
        let le = LabelEmbeddings::new(&scene.labels(), &table).unwrap();
        (scene, frames, le)
    }

    #[test]
    fn batch_targets_bound_the_true_distance() {
        let (scene, frames, le) = setup();
        let config = TrainConfig {
            batch_size: 256,
            ..TrainConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = sample_batch(&frames, &le, &config, &mut rng).unwrap();
        assert_eq!(b.len(), b.sdf_targets.len());
        for i in 0..b.len() {
            let q = b.query(i);
            let p = Point::new(q[0], q[1], 0.0);
            let d = b.sdf_targets[i];
            // Surface points are a subset of the true surface, so in free
            // space the nearest one is never closer than the true SDF.
            if b.in_front[i] {
                assert!(d >= scene.sdf(&p) - 1e-9, "sample {i}: {d} < {}", scene.sdf(&p));
            } else {
                assert!(d <= 0.0);
            }
            let s = b.surface(b.nn_index[i]);
            assert_abs_diff_eq!(
                d.abs(),
                ((q[0] - s[0]).powi(2) + (q[1] - s[1]).powi(2)).sqrt(),
                epsilon = 1e-12
            );
            let label = b.surface_labels[b.nn_index[i]];
            assert_eq!(&b.target_embeddings[i * 16..(i + 1) * 16], le.get(label).unwrap());
        }
    }

    #[test]
    fn sample_weights_are_a_distribution() {
        let d = [0.1, 0.5, -0.2, 1.0];
        let w = sample_weights(&d, 0.5, WeightSign::NearerHeavier);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(w[2] > w[0] && w[0] > w[1] && w[1] > w[3]);
        let f = sample_weights(&d, 0.5, WeightSign::FartherHeavier);
        assert!(f[3] > f[1]);
        assert_abs_diff_eq!(w[0] / w[1], (0.4f64 / 0.5).exp(), epsilon = 1e-12);
    }

    /// Direct `N x N` evaluation of the weighted symmetric InfoNCE.
    fn naive_semantic(pred: &[f64], targets: &[f64], sdf: &[f64], d: usize, c: SemanticLossConfig) -> f64 {
        let n = sdf.len();
        let dot =
            |i: usize, j: usize| c.logit_scale * (0..d).map(|k| pred[i * d + k] * targets[j * d + k]).sum::<f64>();
        let lse = |v: Vec<f64>| {
            let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
        };
        let w = sample_weights(sdf, c.temperature, c.sign);
        (0..n)
            .map(|i| {
                let row = lse((0..n).map(|j| dot(i, j)).collect()) - dot(i, i);
                let col = lse((0..n).map(|j| dot(j, i)).collect()) - dot(i, i);
                0.5 * w[i] * (row + col)
            })
            .sum()
    }

    #[test]
    fn deduplicated_infonce_matches_full_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (n, d) = (12, 5);
        let unit = |rng: &mut ChaCha8Rng| {
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / s).collect::<Vec<_>>()
        };
        let classes: Vec<Vec<f64>> = (0..3).map(|_| unit(&mut rng)).collect();
        let mut targets = Vec::new();
        let mut pred = Vec::new();
        for i in 0..n {
            targets.extend_from_slice(&classes[i % 3]);
            pred.extend(unit(&mut rng));
        }
        let sdf: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.2..1.0)).collect();
        let c = SemanticLossConfig {
            temperature: 0.5,
            sign: WeightSign::NearerHeavier,
            logit_scale: 10.0,
        };
        let mut g = Graph::new();
        let p = g.constant(Tensor::matrix(n, d, pred.clone()).unwrap()).unwrap();
        let l = loss_semantic(&mut g, p, &targets, &sdf, c).unwrap();
        let got = g.value(l).item().unwrap();
        assert_abs_diff_eq!(got, naive_semantic(&pred, &targets, &sdf, d, c), epsilon = 1e-10);
    }

    #[test]
    fn short_training_lowers_the_loss_and_is_reproducible() {
        let (scene, frames, le) = setup();
        let mut fc = FieldConfig::for_bounds(2, &scene.bounds, 16, 0);
        fc.width = 32;
        let config = TrainConfig {
            steps: 60,
            batch_size: 128,
            lr: 3e-3,
            log_every: 20,
            ..TrainConfig::default()
        };
        let a = train(&frames, &le, FieldModel::new(fc.clone()).unwrap(), &config).unwrap();
        let b = train(&frames, &le, FieldModel::new(fc).unwrap(), &config).unwrap();
        assert_eq!(a.model.to_bytes(), b.model.to_bytes());
        assert_eq!(a.log.len(), 3);
        let head: f64 = a.curve[..10].iter().sum();
        let tail: f64 = a.curve[50..].iter().sum();
        assert!(tail < head, "loss went from {head} to {tail}");
    }

    #[test]
    fn mismatched_embedding_dim_is_rejected() {
        let (scene, frames, le) = setup();
        let model = FieldModel::new(FieldConfig::for_bounds(2, &scene.bounds, 32, 0)).unwrap();
        let config = TrainConfig {
            steps: 1,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&frames, &le, model, &config),
            Err(TrainError::Config(_))
        ));
    }
}
