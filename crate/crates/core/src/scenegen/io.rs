//! Scene files (TOML) and frame datasets (little-endian binary).
//!
//! Frame dataset layout:
//!
//! ```text
//! magic      8 bytes   "SFFRAME1"
//! count      u32
//! per frame:
//!   dim        u8        2 or 3
//!   pose       f64 x 3   (x, y, yaw)                  when dim == 2
//!              f64 x 7   (x, y, z, qw, qx, qy, qz)    when dim == 3
//!   fov        f64       horizontal field of view, radians
//!   width      u32
//!   height     u32
//!   sigma_d    f64       depth noise std used at capture
//!   sigma_p    f64       pose noise std used at capture
//!   depth      f64 x (width * height)   row-major, 0.0 = no hit
//!   labels     u32 x (width * height)   0xFFFFFFFF = no hit
//! ```

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::frame::{Frame, Intrinsics, NoiseParams, Pose};
use super::scene::{Bounds, Point, Primitive, Scene, Shape};
use super::SceneError;

const FRAME_MAGIC: &[u8; 8] = b"SFFRAME1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    name: String,
    dimension: usize,
    bounds: BoundsFile,
    obstacles: Vec<PrimitiveFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsFile {
    min: Vec<f64>,
    max: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
enum PrimitiveFile {
    #[serde(alias = "circle")]
    Sphere {
        label: String,
        center: Vec<f64>,
        radius: f64,
    },
    Box {
        label: String,
        center: Vec<f64>,
        half_extents: Vec<f64>,
    },
    Capsule {
        label: String,
        a: Vec<f64>,
        b: Vec<f64>,
        radius: f64,
    },
}

fn to_point(v: &[f64], dim: usize, what: &str) -> Result<Point, SceneError> {
    if v.len() != dim {
        return Err(SceneError::Parse(format!(
            "{what}: expected {dim} coordinates, got {}",
            v.len()
        )));
    }
    let mut p = Point::zeros();
    p.as_mut_slice()[..dim].copy_from_slice(v);
    Ok(p)
}

fn from_point(p: &Point, dim: usize) -> Vec<f64> {
    p.as_slice()[..dim].to_vec()
}

pub fn scene_from_toml(text: &str) -> Result<Scene, SceneError> {
    let file: SceneFile = toml::from_str(text).map_err(|e| SceneError::Parse(e.to_string()))?;
    let d = file.dimension;
    if d != 2 && d != 3 {
        return Err(SceneError::Dimension(d));
    }
    let bounds = Bounds {
        min: to_point(&file.bounds.min, d, "bounds.min")?,
        max: to_point(&file.bounds.max, d, "bounds.max")?,
    };
    let obstacles = file
        .obstacles
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let ctx = |f: &str| format!("obstacles[{i}].{f}");
            Ok(match p {
                PrimitiveFile::Sphere { label, center, radius } => Primitive {
                    shape: Shape::Sphere {
                        center: to_point(&center, d, &ctx("center"))?,
                        radius,
                    },
                    label,
                },
                PrimitiveFile::Box {
                    label,
                    center,
                    half_extents,
                } => Primitive {
                    shape: Shape::Box {
                        center: to_point(&center, d, &ctx("center"))?,
                        half_extents: to_point(&half_extents, d, &ctx("half_extents"))?,
                    },
                    label,
                },
                PrimitiveFile::Capsule { label, a, b, radius } => Primitive {
                    shape: Shape::Capsule {
                        a: to_point(&a, d, &ctx("a"))?,
                        b: to_point(&b, d, &ctx("b"))?,
                        radius,
                    },
                    label,
                },
            })
        })
        .collect::<Result<Vec<_>, SceneError>>()?;
    Scene::new(file.name, d, bounds, obstacles)
}

pub fn scene_to_toml(scene: &Scene) -> String {
    let d = scene.dimension;
    let file = SceneFile {
        name: scene.name.clone(),
        dimension: d,
        bounds: BoundsFile {
            min: from_point(&scene.bounds.min, d),
            max: from_point(&scene.bounds.max, d),
        },
        obstacles: scene
            .obstacles
            .iter()
            .map(|p| match &p.shape {
                Shape::Sphere { center, radius } => PrimitiveFile::Sphere {
                    label: p.label.clone(),
                    center: from_point(center, d),
                    radius: *radius,
                },
                Shape::Box { center, half_extents } => PrimitiveFile::Box {
                    label: p.label.clone(),
                    center: from_point(center, d),
                    half_extents: from_point(half_extents, d),
                },
                Shape::Capsule { a, b, radius } => PrimitiveFile::Capsule {
                    label: p.label.clone(),
                    a: from_point(a, d),
                    b: from_point(b, d),
                    radius: *radius,
                },
            })
            .collect(),
    };
    toml::to_string(&file).expect("scene serializes")
}

pub fn load_scene(path: &Path) -> Result<Scene, SceneError> {
    scene_from_toml(&fs::read_to_string(path)?)
}

pub fn save_scene(scene: &Scene, path: &Path) -> Result<(), SceneError> {
    fs::write(path, scene_to_toml(scene))?;
    Ok(())
}

pub fn write_frames<W: Write>(mut w: W, frames: &[Frame]) -> Result<(), SceneError> {
    w.write_all(FRAME_MAGIC)?;
    w.write_u32::<LittleEndian>(frames.len() as u32)?;
    for f in frames {
        f.check()?;
        match f.pose {
            Pose::Planar { x, y, yaw } => {
                w.write_u8(2)?;
                for v in [x, y, yaw] {
                    w.write_f64::<LittleEndian>(v)?;
                }
            }
            Pose::Spatial { position, quat } => {
                w.write_u8(3)?;
                for v in position.iter().chain(quat.iter()) {
                    w.write_f64::<LittleEndian>(*v)?;
                }
            }
        }
        w.write_f64::<LittleEndian>(f.intrinsics.fov)?;
        w.write_u32::<LittleEndian>(f.intrinsics.width)?;
        w.write_u32::<LittleEndian>(f.intrinsics.height)?;
        w.write_f64::<LittleEndian>(f.noise.sigma_depth)?;
        w.write_f64::<LittleEndian>(f.noise.sigma_pose)?;
        for d in &f.depth {
            w.write_f64::<LittleEndian>(*d)?;
        }
        for l in &f.labels {
            w.write_u32::<LittleEndian>(*l)?;
        }
    }
    Ok(())
}

pub fn read_frames<R: Read>(mut r: R) -> Result<Vec<Frame>, SceneError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != FRAME_MAGIC {
        return Err(SceneError::Parse("not a frame dataset (bad magic)".into()));
    }
    let count = r.read_u32::<LittleEndian>()? as usize;
    let mut frames = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let dim = r.read_u8()?;
        let pose = match dim {
            2 => {
                let x = r.read_f64::<LittleEndian>()?;
                let y = r.read_f64::<LittleEndian>()?;
                let yaw = r.read_f64::<LittleEndian>()?;
                Pose::Planar { x, y, yaw }
            }
            3 => {
                let mut v = [0.0; 7];
                for x in v.iter_mut() {
                    *x = r.read_f64::<LittleEndian>()?;
                }
                Pose::Spatial {
                    position: [v[0], v[1], v[2]],
                    quat: [v[3], v[4], v[5], v[6]],
                }
            }
            d => return Err(SceneError::Dimension(d as usize)),
        };
        let fov = r.read_f64::<LittleEndian>()?;
        let width = r.read_u32::<LittleEndian>()?;
        let height = r.read_u32::<LittleEndian>()?;
        let sigma_depth = r.read_f64::<LittleEndian>()?;
        let sigma_pose = r.read_f64::<LittleEndian>()?;
        let n = width as usize * height as usize;
        let mut depth = vec![0.0; n];
        r.read_f64_into::<LittleEndian>(&mut depth)?;
        let mut labels = vec![0u32; n];
        r.read_u32_into::<LittleEndian>(&mut labels)?;
        frames.push(Frame {
            pose,
            intrinsics: Intrinsics { fov, width, height },
            depth,
            labels,
            noise: NoiseParams {
                sigma_depth,
                sigma_pose,
            },
        });
    }
    Ok(frames)
}

pub fn save_frames(frames: &[Frame], path: &Path) -> Result<(), SceneError> {
    let mut buf = Vec::new();
    write_frames(&mut buf, frames)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_frames(path: &Path) -> Result<Vec<Frame>, SceneError> {
    read_frames(Cursor::new(fs::read(path)?))
}
