//! Synthetic scenes with closed-form signed distance functions, and the
//! posed depth + label frames captured from them.

pub mod bundled;
mod frame;
pub mod io;
mod scene;

pub use frame::{
    point_cloud, render_frame, unproject, Frame, Intrinsics, NoiseParams, Pose, SurfacePoint, NO_HIT, NO_LABEL,
};
pub use scene::{raycast, Bounds, Point, Primitive, Scene, Shape};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene dimension must be 2 or 3, got {0}")]
    Dimension(usize),
    #[error("scene bounds must have positive extent on every axis")]
    DegenerateBounds,
    #[error("scene has no obstacles")]
    NoObstacles,
    #[error("obstacle {index}: {reason}")]
    InvalidPrimitive { index: usize, reason: String },
    #[error("camera pose ({x}, {y}, {z}) is inside an obstacle")]
    PoseInObstacle { x: f64, y: f64, z: f64 },
    #[error("invalid intrinsics")]
    Intrinsics,
    #[error("noise standard deviations must be finite and non-negative")]
    Noise,
    #[error("frame expects {expected} pixels, depth has {depth}, labels {labels}")]
    FrameShape {
        expected: usize,
        depth: usize,
        labels: usize,
    },
    #[error("could not place a camera with the requested clearance")]
    NoFreePose,
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parameters for a randomized capture sweep through a scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaptureConfig {
    pub frames: usize,
    pub fov: f64,
    pub width: u32,
    pub height: u32,
    pub noise: NoiseParams,
    /// Minimum distance from camera positions to any obstacle.
    pub min_clearance: f64,
    pub seed: u64,
}

impl Default for CaptureConfig {
    fn default() -> Self {
        Self {
            frames: 200,
            fov: 120f64.to_radians(),
            width: 129,
            height: 1,
            noise: NoiseParams::ZERO,
            min_clearance: 0.3,
            seed: 0,
        }
    }
}

/// Renders `config.frames` frames from uniformly drawn free poses with
/// uniform headings. Planar scenes only use yaw; spatial scenes draw a
/// random yaw with a small pitch.
pub fn capture(scene: &Scene, config: &CaptureConfig) -> Result<Vec<Frame>, SceneError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let intrinsics = Intrinsics {
        fov: config.fov,
        width: config.width,
        height: if scene.dimension == 2 { 1 } else { config.height },
    };
    let b = scene.bounds;
    let mut frames = Vec::with_capacity(config.frames);
    for _ in 0..config.frames {
        let mut placed = None;
        for _ in 0..10_000 {
            let mut p = Point::zeros();
            for i in 0..scene.dimension {
                p[i] = rng.gen_range(b.min[i]..b.max[i]);
            }
            if scene.sdf(&p) >= config.min_clearance {
                placed = Some(p);
                break;
            }
        }
        let p = placed.ok_or(SceneError::NoFreePose)?;
        let yaw = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let pose = if scene.dimension == 2 {
            Pose::planar(p.x, p.y, yaw)
        } else {
            let pitch = rng.gen_range(-0.3..0.3);
            let q = nalgebra::UnitQuaternion::from_euler_angles(0.0, pitch, yaw);
            Pose::Spatial {
                position: [p.x, p.y, p.z],
                quat: [q.w, q.i, q.j, q.k],
            }
        };
        frames.push(render_frame(scene, pose, intrinsics, config.noise, &mut rng)?);
    }
    Ok(frames)
}
