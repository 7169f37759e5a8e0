//! The three planar scenes used by the benchmark suite. Each is an 8 m x
//! 8 m area enclosed by walls, with eight distinctly labeled objects.

use nalgebra::Vector3;

use super::scene::{Bounds, Primitive, Scene, Shape};

const SIZE: f64 = 8.0;
const WALL: f64 = 0.1;

fn rect(label: &str, cx: f64, cy: f64, hx: f64, hy: f64) -> Primitive {
    Primitive {
        shape: Shape::Box {
            center: Vector3::new(cx, cy, 0.0),
            half_extents: Vector3::new(hx, hy, 0.0),
        },
        label: label.to_string(),
    }
}

fn disk(label: &str, cx: f64, cy: f64, r: f64) -> Primitive {
    Primitive {
        shape: Shape::Sphere {
            center: Vector3::new(cx, cy, 0.0),
            radius: r,
        },
        label: label.to_string(),
    }
}

fn capsule(label: &str, a: (f64, f64), b: (f64, f64), r: f64) -> Primitive {
    Primitive {
        shape: Shape::Capsule {
            a: Vector3::new(a.0, a.1, 0.0),
            b: Vector3::new(b.0, b.1, 0.0),
            radius: r,
        },
        label: label.to_string(),
    }
}

/// Horizontal wall piece spanning `x0..x1` at height `y`.
fn hwall(x0: f64, x1: f64, y: f64, half_thickness: f64) -> Primitive {
    rect("wall", 0.5 * (x0 + x1), y, 0.5 * (x1 - x0), half_thickness)
}

/// Vertical wall piece spanning `y0..y1` at `x`.
fn vwall(y0: f64, y1: f64, x: f64, half_thickness: f64) -> Primitive {
    rect("wall", x, 0.5 * (y0 + y1), half_thickness, 0.5 * (y1 - y0))
}

fn enclosure() -> Vec<Primitive> {
    vec![
        hwall(0.0, SIZE, WALL, WALL),
        hwall(0.0, SIZE, SIZE - WALL, WALL),
        vwall(2.0 * WALL, SIZE - 2.0 * WALL, WALL, WALL),
        vwall(2.0 * WALL, SIZE - 2.0 * WALL, SIZE - WALL, WALL),
    ]
}

fn bounds() -> Bounds {
    Bounds {
        min: Vector3::zeros(),
        max: Vector3::new(SIZE, SIZE, 0.0),
    }
}

/// A large room below a wall with two doorways leading into two smaller
/// rooms.
pub fn rooms() -> Scene {
    let mut obs = enclosure();
    obs.extend([
        hwall(0.2, 1.5, 5.0, 0.15),
        hwall(3.1, 5.0, 5.0, 0.15),
        hwall(6.6, 7.8, 5.0, 0.15),
        vwall(5.15, 7.8, 4.0, 0.15),
        rect("sofa", 2.0, 1.0, 1.0, 0.4),
        rect("table", 5.5, 2.5, 0.6, 0.4),
        disk("plant", 0.8, 3.8, 0.3),
        rect("refrigerator", 7.3, 1.0, 0.35, 0.45),
        rect("bed", 6.0, 7.0, 1.0, 0.6),
        rect("desk", 1.5, 7.3, 0.8, 0.3),
        disk("chair", 2.6, 6.3, 0.25),
        disk("lamp", 7.3, 5.7, 0.2),
    ]);
    Scene::new("rooms", 2, bounds(), obs).expect("bundled scene is valid")
}

/// One open room filled with free-standing obstacles.
pub fn clutter() -> Scene {
    let mut obs = enclosure();
    obs.extend([
        disk("barrel", 1.8, 2.0, 0.4),
        disk("pillar", 4.0, 4.0, 0.35),
        rect("crate", 6.2, 1.8, 0.4, 0.4),
        capsule("bench", (1.5, 6.2), (3.0, 6.6), 0.2),
        disk("trash can", 6.4, 6.2, 0.3),
        disk("statue", 4.2, 1.5, 0.3),
        rect("cabinet", 7.45, 4.0, 0.3, 0.6),
        disk("plant", 1.0, 4.2, 0.25),
    ]);
    Scene::new("clutter", 2, bounds(), obs).expect("bundled scene is valid")
}

/// Two chambers joined by a single gap in the dividing wall.
pub fn chambers() -> Scene {
    let mut obs = enclosure();
    obs.extend([
        vwall(0.2, 3.2, 4.0, 0.15),
        vwall(4.8, 7.8, 4.0, 0.15),
        rect("sink", 0.7, 6.5, 0.4, 0.6),
        rect("stove", 2.5, 0.7, 0.6, 0.4),
        disk("kitchen table", 2.0, 4.0, 0.5),
        rect("shelf", 3.0, 7.4, 0.5, 0.3),
        rect("tv", 7.5, 4.0, 0.2, 0.7),
        rect("couch", 5.8, 1.0, 0.9, 0.4),
        disk("armchair", 6.0, 6.5, 0.4),
        rect("bookcase", 4.6, 7.4, 0.4, 0.3),
    ]);
    Scene::new("chambers", 2, bounds(), obs).expect("bundled scene is valid")
}

pub fn all() -> Vec<Scene> {
    vec![rooms(), clutter(), chambers()]
}

pub fn by_name(name: &str) -> Option<Scene> {
    all().into_iter().find(|s| s.name == name)
}

/// Single disk in an open area, without walls. Used for quick training
/// checks.
pub fn single_disk() -> Scene {
    let b = Bounds {
        min: Vector3::zeros(),
        max: Vector3::new(4.0, 4.0, 0.0),
    };
    Scene::new("disk", 2, b, vec![disk("disk", 2.0, 2.0, 0.5)]).expect("valid")
}
