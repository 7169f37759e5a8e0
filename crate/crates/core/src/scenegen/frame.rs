use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::scene::{raycast, Point, Scene};
use super::SceneError;

/// Depth value stored for pixels whose ray hit nothing.
pub const NO_HIT: f64 = 0.0;
/// Label id stored for pixels whose ray hit nothing.
pub const NO_LABEL: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pose {
    /// Position in the plane plus heading (radians, counter-clockwise from +x).
    Planar { x: f64, y: f64, yaw: f64 },
    /// Position plus unit quaternion `(w, x, y, z)`; the camera looks along
    /// its local +x axis with +z up.
    Spatial { position: [f64; 3], quat: [f64; 4] },
}

impl Pose {
    pub fn planar(x: f64, y: f64, yaw: f64) -> Self {
        Pose::Planar { x, y, yaw }
    }

    pub fn position(&self) -> Point {
        match *self {
            Pose::Planar { x, y, .. } => Vector3::new(x, y, 0.0),
            Pose::Spatial { position, .. } => Vector3::from(position),
        }
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        match *self {
            Pose::Planar { yaw, .. } => UnitQuaternion::from_euler_angles(0.0, 0.0, yaw),
            Pose::Spatial { quat, .. } => {
                UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(quat[0], quat[1], quat[2], quat[3]))
            }
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Pose::Planar { .. } => 2,
            Pose::Spatial { .. } => 3,
        }
    }

    fn translated(&self, delta: &Point) -> Self {
        match *self {
            Pose::Planar { x, y, yaw } => Pose::Planar {
                x: x + delta.x,
                y: y + delta.y,
                yaw,
            },
            Pose::Spatial { position, quat } => Pose::Spatial {
                position: [position[0] + delta.x, position[1] + delta.y, position[2] + delta.z],
                quat,
            },
        }
    }
}

/// Horizontal field of view plus resolution. Planar cameras have
/// `height == 1` and spread their rays at equal angular steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fov: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn planar(fov: f64, width: u32) -> Self {
        Self { fov, width, height: 1 }
    }

    pub fn pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Unit ray direction in the camera frame for pixel `(u, v)`.
    pub fn ray(&self, dim: usize, u: u32, v: u32) -> Point {
        let w = self.width as f64;
        if dim == 2 {
            let a = self.fov * (0.5 - (u as f64 + 0.5) / w);
            Vector3::new(a.cos(), a.sin(), 0.0)
        } else {
            let h = self.height as f64;
            let f = 0.5 * w / (0.5 * self.fov).tan();
            Vector3::new(f, 0.5 * w - (u as f64 + 0.5), 0.5 * h - (v as f64 + 0.5)).normalize()
        }
    }
}

/// Standard deviations (meters) of per-pixel depth noise and per-frame
/// position noise.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseParams {
    pub sigma_depth: f64,
    pub sigma_pose: f64,
}

impl NoiseParams {
    pub const ZERO: NoiseParams = NoiseParams {
        sigma_depth: 0.0,
        sigma_pose: 0.0,
    };

    pub fn is_zero(&self) -> bool {
        self.sigma_depth == 0.0 && self.sigma_pose == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// Recorded pose; carries the pose noise when noise was requested.
    pub pose: Pose,
    pub intrinsics: Intrinsics,
    /// Range along each pixel ray, row-major; [`NO_HIT`] for misses.
    pub depth: Vec<f64>,
    /// Index into [`Scene::labels`], [`NO_LABEL`] for misses.
    pub labels: Vec<u32>,
    pub noise: NoiseParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePoint {
    pub position: Point,
    pub label_id: u32,
    pub source_frame: usize,
}

impl Frame {
    pub fn dimension(&self) -> usize {
        self.pose.dimension()
    }

    pub fn is_valid_pixel(&self, i: usize) -> bool {
        self.depth[i] > 0.0 && self.labels[i] != NO_LABEL
    }

    pub fn valid_pixels(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.depth.len()).filter(move |&i| self.is_valid_pixel(i))
    }

    /// World-frame unit ray through pixel index `i` (row-major).
    pub fn world_ray(&self, i: usize) -> Point {
        let w = self.intrinsics.width;
        let (u, v) = ((i as u32) % w, (i as u32) / w);
        self.pose.rotation() * self.intrinsics.ray(self.dimension(), u, v)
    }

    pub fn check(&self) -> Result<(), SceneError> {
        let n = self.intrinsics.pixels();
        if self.depth.len() != n || self.labels.len() != n {
            return Err(SceneError::FrameShape {
                expected: n,
                depth: self.depth.len(),
                labels: self.labels.len(),
            });
        }
        Ok(())
    }
}

/// Ray-casts one frame. With nonzero noise the depth of every hit pixel is
/// perturbed by `N(0, sigma_depth^2)` and the recorded position by
/// `N(0, sigma_pose^2)` per axis, so unprojection lands the points where a
/// noisy sensor and localizer would put them.
pub fn render_frame<R: Rng + ?Sized>(
    scene: &Scene,
    pose: Pose,
    intrinsics: Intrinsics,
    noise: NoiseParams,
    rng: &mut R,
) -> Result<Frame, SceneError> {
    let dim = scene.dimension;
    if pose.dimension() != dim {
        return Err(SceneError::Dimension(pose.dimension()));
    }
    if intrinsics.width == 0 || intrinsics.height == 0 || (dim == 2 && intrinsics.height != 1) {
        return Err(SceneError::Intrinsics);
    }
    if !(noise.sigma_depth >= 0.0 && noise.sigma_pose >= 0.0) {
        return Err(SceneError::Noise);
    }
    let origin = pose.position();
    let clearance = scene.sdf(&origin);
    if clearance <= 0.0 {
        return Err(SceneError::PoseInObstacle {
            x: origin.x,
            y: origin.y,
            z: origin.z,
        });
    }
    let rot = pose.rotation();
    let max_range = (scene.bounds.max - scene.bounds.min).norm() * 2.0;
    let n = intrinsics.pixels();
    let mut depth = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let labels_list = scene.labels();
    for v in 0..intrinsics.height {
        for u in 0..intrinsics.width {
            let dir = rot * intrinsics.ray(dim, u, v);
            match raycast(scene, &origin, &dir, max_range) {
                Some((t, idx)) => {
                    depth.push(t);
                    let id = labels_list
                        .iter()
                        .position(|l| *l == scene.obstacles[idx].label)
                        .expect("label of an obstacle") as u32;
                    labels.push(id);
                }
                None => {
                    depth.push(NO_HIT);
                    labels.push(NO_LABEL);
                }
            }
        }
    }

    let mut recorded = pose;
    if noise.sigma_depth > 0.0 {
        let nd = Normal::new(0.0, noise.sigma_depth).map_err(|_| SceneError::Noise)?;
        for d in depth.iter_mut().filter(|d| **d > 0.0) {
            *d = (*d + nd.sample(rng)).max(1e-6);
        }
    }
    if noise.sigma_pose > 0.0 {
        let np = Normal::new(0.0, noise.sigma_pose).map_err(|_| SceneError::Noise)?;
        let mut delta = Point::zeros();
        for i in 0..dim {
            delta[i] = np.sample(rng);
        }
        recorded = pose.translated(&delta);
    }
    Ok(Frame {
        pose: recorded,
        intrinsics,
        depth,
        labels,
        noise,
    })
}

/// World-frame points for every pixel with a valid depth.
pub fn unproject(frame: &Frame, frame_index: usize) -> Vec<SurfacePoint> {
    let origin = frame.pose.position();
    frame
        .valid_pixels()
        .map(|i| SurfacePoint {
            position: origin + frame.world_ray(i) * frame.depth[i],
            label_id: frame.labels[i],
            source_frame: frame_index,
        })
        .collect()
}

/// Aggregated cloud of all frames.
pub fn point_cloud(frames: &[Frame]) -> Vec<SurfacePoint> {
    frames.iter().enumerate().flat_map(|(i, f)| unproject(f, i)).collect()
}
