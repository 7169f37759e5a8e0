//! Systematic SDF underestimation caused by aggregating noisy points.
//!
//! A surface point observed `N` times lands at `N` independent draws of
//! `N(c, sigma_C^2 I)` with `sigma_C^2 = sigma_D^2 + sigma_P^2`. A nearest
//! neighbor query picks the closest of those draws, so the distance it
//! reports shrinks as `N` grows. The Monte Carlo routines here measure
//! that shrinkage and turn it into an additive SDF correction.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::field::{FieldError, FieldModel};
use crate::scenegen::{Bounds, Point};

/// Trials per independently seeded chunk.
const CHUNK: usize = 1000;
/// Upper clamp of the correction constant (meters).
pub const MAX_CORRECTION: f64 = 0.5;

#[derive(Debug, Error)]
pub enum BiasError {
    #[error("invalid noise model: {0}")]
    Noise(String),
    #[error("point density must be positive")]
    Density,
    #[error("the baseline has no navigable cells")]
    EmptyFreeSpace,
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    sigma_depth: f64,
    sigma_pose: f64,
    sigma_combined: f64,
}

impl NoiseModel {
    pub fn new(sigma_depth: f64, sigma_pose: f64) -> Result<Self, BiasError> {
        if !(sigma_depth >= 0.0 && sigma_pose >= 0.0) || !(sigma_depth + sigma_pose).is_finite() {
            return Err(BiasError::Noise("standard deviations must be finite and >= 0".into()));
        }
        Ok(Self {
            sigma_depth,
            sigma_pose,
            sigma_combined: sigma_depth.hypot(sigma_pose),
        })
    }

    /// Noise model with a given combined deviation, attributed entirely to
    /// depth.
    pub fn combined(sigma_c: f64) -> Result<Self, BiasError> {
        Self::new(sigma_c, 0.0)
    }

    pub fn sigma_depth(&self) -> f64 {
        self.sigma_depth
    }

    pub fn sigma_pose(&self) -> f64 {
        self.sigma_pose
    }

    pub fn sigma_combined(&self) -> f64 {
        self.sigma_combined
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::new(0.01, 0.005).expect("valid defaults")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinDistanceEstimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Monte Carlo estimate of `E[min_i |x_i|]` for `n` draws
/// `x_i ~ N(true_dist * e_1, sigma^2 I)` in `dim` dimensions.
///
/// Trials are split into chunks of 1000 with their own ChaCha stream, and
/// chunk sums are reduced in order, so the result depends only on the
/// arguments. The draws do not depend on `sigma`, which makes estimates
/// for different noise levels use common random numbers.
pub fn simulate_min_distance(
    true_dist: f64,
    sigma: f64,
    n: usize,
    trials: usize,
    seed: u64,
    dim: usize,
) -> MinDistanceEstimate {
    let n = n.max(1);
    let dim = dim.max(1);
    if sigma == 0.0 || trials == 0 {
        return MinDistanceEstimate {
            mean: true_dist,
            stderr: 0.0,
        };
    }
    let chunks = trials.div_ceil(CHUNK);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for c in 0..chunks {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let count = CHUNK.min(trials - c * CHUNK);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..count {
            let mut best = f64::INFINITY;
            for _ in 0..n {
                let z0: f64 = StandardNormal.sample(&mut rng);
                let mut d2 = (true_dist + sigma * z0).powi(2);
                for _ in 1..dim {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    d2 += (sigma * z).powi(2);
                }
                best = best.min(d2);
            }
            let m = best.sqrt();
            s += m;
            s2 += m * m;
        }
        sum += s;
        sum_sq += s2;
    }
    let t = trials as f64;
    let mean = sum / t;
    let var = ((sum_sq / t) - mean * mean).max(0.0) * t / (t - 1.0).max(1.0);
    MinDistanceEstimate {
        mean,
        stderr: (var / t).sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasCurve {
    pub ns: Vec<usize>,
    pub expected_min_dist: Vec<f64>,
    pub stderr: Vec<f64>,
    pub true_dist: f64,
    pub sigma: f64,
    pub trials: usize,
    pub seed: u64,
}

impl BiasCurve {
    /// `true_dist - E[min distance]` per sample count.
    pub fn bias(&self) -> Vec<f64> {
        self.expected_min_dist.iter().map(|m| self.true_dist - m).collect()
    }

    /// True when every step down the curve is non-increasing within
    /// `k` combined standard errors.
    pub fn is_non_increasing_within(&self, k: f64) -> bool {
        self.expected_min_dist
            .windows(2)
            .zip(self.stderr.windows(2))
            .all(|(m, s)| m[1] <= m[0] + k * (s[0] * s[0] + s[1] * s[1]).sqrt())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,mean_min_dist,stderr\n");
        for ((n, m), s) in self.ns.iter().zip(&self.expected_min_dist).zip(&self.stderr) {
            writeln!(out, "{n},{m:.9},{s:.9}").expect("writing to a String");
        }
        out
    }
}

pub fn bias_curve(noise: &NoiseModel, true_dist: f64, ns: &[usize], trials: usize, seed: u64, dim: usize) -> BiasCurve {
    let est: Vec<MinDistanceEstimate> = ns
        .iter()
        .map(|&n| simulate_min_distance(true_dist, noise.sigma_combined(), n, trials, seed, dim))
        .collect();
    BiasCurve {
        ns: ns.to_vec(),
        expected_min_dist: est.iter().map(|e| e.mean).collect(),
        stderr: est.iter().map(|e| e.stderr).collect(),
        true_dist,
        sigma: noise.sigma_combined(),
        trials,
        seed,
    }
}

/// How the correction is derived from the simulated bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotContext {
    /// Distance of the reference point from the aggregated surface point.
    pub reference_distance: f64,
    /// Multiplier for scenes where a query sees several independently
    /// aggregated surfaces at once.
    pub clutter_scale: f64,
    pub dim: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for RobotContext {
    fn default() -> Self {
        Self {
            reference_distance: 1.0,
            clutter_scale: 1.0,
            dim: 3,
            trials: 20_000,
            seed: 0,
        }
    }
}

/// Volume of a `dim`-ball of radius `r` (length in 1D, area in 2D).
pub fn ball_volume(dim: usize, r: f64) -> f64 {
    use std::f64::consts::PI;
    match dim {
        1 => 2.0 * r,
        2 => PI * r * r,
        3 => 4.0 / 3.0 * PI * r.powi(3),
        _ => panic!("ball_volume supports dimensions 1 to 3"),
    }
}

/// Expected number of cloud points within one `sigma_C` ball, given a
/// density in points per unit measure of dimension `density_dim`.
pub fn effective_sample_count(density: f64, sigma_c: f64, density_dim: usize) -> f64 {
    (density * ball_volume(density_dim, sigma_c)).max(1.0)
}

/// Mean number of cloud points within `radius` of each query's nearest
/// cloud point.
pub fn empirical_sample_count(cloud: &[Point], queries: &[Point], radius: f64) -> f64 {
    if cloud.is_empty() || queries.is_empty() {
        return 0.0;
    }
    let total: usize = queries
        .iter()
        .map(|q| {
            let nearest = cloud
                .iter()
                .min_by(|a, b| (*a - q).norm_squared().total_cmp(&(*b - q).norm_squared()))
                .expect("non-empty cloud");
            cloud.iter().filter(|c| (*c - nearest).norm() <= radius).count()
        })
        .sum();
    total as f64 / queries.len() as f64
}

/// Correction for a known effective sample count.
pub fn correction_from_count(noise: &NoiseModel, n_eff: f64, ctx: &RobotContext) -> f64 {
    if noise.sigma_combined() == 0.0 {
        return 0.0;
    }
    let n = n_eff.round().max(1.0) as usize;
    let est = simulate_min_distance(
        ctx.reference_distance,
        noise.sigma_combined(),
        n,
        ctx.trials,
        ctx.seed,
        ctx.dim,
    );
    ((ctx.reference_distance - est.mean) * ctx.clutter_scale).clamp(0.0, MAX_CORRECTION)
}

/// Additive SDF correction (meters, in `[0, 0.5]`) for a cloud of the
/// given density (points per unit length for `density_dim = 1`, per unit
/// area for 2, per unit volume for 3).
pub fn correction_constant(
    noise: &NoiseModel,
    density: f64,
    density_dim: usize,
    ctx: &RobotContext,
) -> Result<f64, BiasError> {
    if !(density > 0.0 && density.is_finite()) {
        return Err(BiasError::Density);
    }
    let n_eff = effective_sample_count(density, noise.sigma_combined(), density_dim);
    Ok(correction_from_count(noise, n_eff, ctx))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionOverlap {
    pub threshold: f64,
    pub iou: f64,
    /// Field navigable area minus baseline navigable area (square meters).
    pub area_difference: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapReport {
    pub a: RegionOverlap,
    pub b: RegionOverlap,
    pub baseline_area: f64,
}

pub fn iou(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Navigable cells of a point cloud dilated by a disk of radius
/// `robot_radius` (the Minkowski sum with the robot's footprint). The cloud
/// is first voxel filtered: each `cell_size` cell holding points is
/// represented by their centroid. A cell is navigable when no centroid lies
/// within `robot_radius` of its center.
pub fn minkowski_free_cells(
    cloud: &[Point],
    bounds: &Bounds,
    cell_size: f64,
    robot_radius: f64,
) -> (usize, usize, Vec<bool>) {
    let nx = ((bounds.max.x - bounds.min.x) / cell_size).ceil() as usize;
    let ny = ((bounds.max.y - bounds.min.y) / cell_size).ceil() as usize;
    let mut sums = vec![(0.0, 0.0, 0usize); nx * ny];
    for p in cloud {
        let ix = ((p.x - bounds.min.x) / cell_size).floor();
        let iy = ((p.y - bounds.min.y) / cell_size).floor();
        if ix >= 0.0 && iy >= 0.0 && (ix as usize) < nx && (iy as usize) < ny {
            let s = &mut sums[iy as usize * nx + ix as usize];
            s.0 += p.x;
            s.1 += p.y;
            s.2 += 1;
        }
    }
    let reach = (robot_radius / cell_size).ceil() as isize + 1;
    let mut free = vec![true; nx * ny];
    for iy in 0..ny as isize {
        for ix in 0..nx as isize {
            let (sx, sy, n) = sums[iy as usize * nx + ix as usize];
            if n == 0 {
                continue;
            }
            let (cx, cy) = (sx / n as f64, sy / n as f64);
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    let (x, y) = (ix + dx, iy + dy);
                    if x < 0 || y < 0 || x >= nx as isize || y >= ny as isize {
                        continue;
                    }
                    let px = bounds.min.x + (x as f64 + 0.5) * cell_size;
                    let py = bounds.min.y + (y as f64 + 0.5) * cell_size;
                    if (px - cx).hypot(py - cy) <= robot_radius {
                        free[y as usize * nx + x as usize] = false;
                    }
                }
            }
        }
    }
    (nx, ny, free)
}

/// Compares `{field sdf > threshold}` for two thresholds against the
/// Minkowski-dilated point-cloud free space, cell by cell (cell centers).
#[allow(clippy::too_many_arguments)]
pub fn navigable_region_compare(
    field: &FieldModel,
    cloud: &[Point],
    bounds: &Bounds,
    cell_size: f64,
    threshold_a: f64,
    threshold_b: f64,
    robot_radius: f64,
) -> Result<OverlapReport, BiasError> {
    let (nx, ny, baseline) = minkowski_free_cells(cloud, bounds, cell_size, robot_radius);
    if !baseline.iter().any(|f| *f) {
        return Err(BiasError::EmptyFreeSpace);
    }
    let mut centers = Vec::with_capacity(nx * ny * 2);
    for iy in 0..ny {
        for ix in 0..nx {
            centers.push(bounds.min.x + (ix as f64 + 0.5) * cell_size);
            centers.push(bounds.min.y + (iy as f64 + 0.5) * cell_size);
        }
    }
    let sdf = field.query_many(&centers)?.sdf;
    let cell_area = cell_size * cell_size;
    let base_count = baseline.iter().filter(|f| **f).count();
    let overlap = |threshold: f64| {
        let region: Vec<bool> = sdf.iter().map(|s| *s > threshold).collect();
        let count = region.iter().filter(|f| **f).count();
        RegionOverlap {
            threshold,
            iou: iou(&region, &baseline),
            area_difference: (count as f64 - base_count as f64) * cell_area,
        }
    };
    Ok(OverlapReport {
        a: overlap(threshold_a),
        b: overlap(threshold_b),
        baseline_area: base_count as f64 * cell_area,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_is_exact() {
        for n in [1, 10, 1000] {
            let e = simulate_min_distance(1.0, 0.0, n, 5000, 1, 3);
            assert_eq!(e.mean, 1.0);
        }
        let noise = NoiseModel::new(0.0, 0.0).unwrap();
        assert_eq!(correction_from_count(&noise, 1e4, &RobotContext::default()), 0.0);
        assert_eq!(
            correction_constant(&noise, 1e6, 2, &RobotContext::default()).unwrap(),
            0.0
        );
    }

    #[test]
    fn combined_sigma_is_quadrature_sum() {
        let m = NoiseModel::new(0.03, 0.04).unwrap();
        assert_eq!(m.sigma_combined(), 0.05);
        assert!(NoiseModel::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn single_draw_is_nearly_unbiased() {
        let e = simulate_min_distance(1.0, 0.01, 1, 100_000, 3, 3);
        // E|x| exceeds 1 only through the lateral variance: ~ sigma^2 / d.
        assert!((e.mean - 1.0).abs() < 2e-4, "{e:?}");
    }

    #[test]
    fn more_samples_lower_the_minimum() {
        let e1 = simulate_min_distance(1.0, 0.01, 1, 20_000, 5, 3);
        let e100 = simulate_min_distance(1.0, 0.01, 100, 5_000, 5, 3);
        let e1e4 = simulate_min_distance(1.0, 0.01, 10_000, 200, 5, 3);
        assert!(e1e4.mean < e100.mean && e100.mean < e1.mean);
    }

    #[test]
    fn simulation_is_seed_reproducible() {
        let a = simulate_min_distance(1.0, 0.02, 50, 3000, 9, 2);
        let b = simulate_min_distance(1.0, 0.02, 50, 3000, 9, 2);
        assert_eq!(a, b);
    }

    #[test]
    fn correction_grows_with_noise() {
        let ctx = RobotContext {
            trials: 4000,
            ..Default::default()
        };
        let mut last = 0.0;
        for s in [0.0, 0.01, 0.02, 0.03, 0.05] {
            let c = correction_from_count(&NoiseModel::combined(s).unwrap(), 500.0, &ctx);
            assert!(c >= last, "sigma {s}: {c} < {last}");
            last = c;
        }
    }

    #[test]
    fn identical_regions_have_unit_iou() {
        let a = vec![true, false, true, true];
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&[true, false], &[false, true]), 0.0);
    }

    #[test]
    fn csv_has_documented_columns() {
        let curve = bias_curve(&NoiseModel::combined(0.01).unwrap(), 1.0, &[1, 10], 2000, 0, 3);
        let csv = curve.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("N,mean_min_dist,stderr"));
        assert_eq!(lines.count(), 2);
    }
}
