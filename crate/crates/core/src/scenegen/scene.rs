use nalgebra::Vector3;

use super::SceneError;

pub type Point = Vector3<f64>;

/// Closed-form obstacle shapes. In a planar scene the `z` components are
/// ignored, so a `Sphere` is a disk and a `Box` is a rectangle.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Sphere { center: Point, radius: f64 },
    Box { center: Point, half_extents: Point },
    Capsule { a: Point, b: Point, radius: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Point,
    pub max: Point,
}

impl Bounds {
    pub fn center(&self) -> Point {
        (self.min + self.max) * 0.5
    }

    pub fn half_extent(&self) -> Point {
        (self.max - self.min) * 0.5
    }

    pub fn contains(&self, p: &Point, dim: usize) -> bool {
        (0..dim).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub name: String,
    pub dimension: usize,
    pub bounds: Bounds,
    pub obstacles: Vec<Primitive>,
}

fn masked(v: Point, dim: usize) -> Point {
    if dim == 2 {
        Vector3::new(v.x, v.y, 0.0)
    } else {
        v
    }
}

impl Primitive {
    pub fn sdf(&self, p: &Point, dim: usize) -> f64 {
        match &self.shape {
            Shape::Sphere { center, radius } => masked(p - center, dim).norm() - radius,
            Shape::Box { center, half_extents } => {
                let mut outside = 0.0;
                let mut inside = f64::NEG_INFINITY;
                for i in 0..dim {
                    let q = (p[i] - center[i]).abs() - half_extents[i];
                    outside += q.max(0.0).powi(2);
                    inside = inside.max(q);
                }
                outside.sqrt() + inside.min(0.0)
            }
            Shape::Capsule { a, b, radius } => {
                let pa = masked(p - a, dim);
                let ba = masked(b - a, dim);
                let h = (pa.dot(&ba) / ba.dot(&ba)).clamp(0.0, 1.0);
                (pa - ba * h).norm() - radius
            }
        }
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn aabb(&self) -> (Point, Point) {
        match &self.shape {
            Shape::Sphere { center, radius } => {
                let r = Vector3::repeat(*radius);
                (center - r, center + r)
            }
            Shape::Box { center, half_extents } => (center - half_extents, center + half_extents),
            Shape::Capsule { a, b, radius } => {
                let r = Vector3::repeat(*radius);
                (a.inf(b) - r, a.sup(b) + r)
            }
        }
    }

    fn validate(&self, index: usize, dim: usize) -> Result<(), SceneError> {
        let bad = |reason: &str| SceneError::InvalidPrimitive {
            index,
            reason: reason.to_string(),
        };
        if self.label.trim().is_empty() {
            return Err(bad("empty label"));
        }
        let finite = |v: &Point| v.iter().all(|x| x.is_finite());
        match &self.shape {
            Shape::Sphere { center, radius } => {
                if !finite(center) || !(radius.is_finite() && *radius > 0.0) {
                    return Err(bad("radius must be positive and finite"));
                }
            }
            Shape::Box { center, half_extents } => {
                if !finite(center) || (0..dim).any(|i| !(half_extents[i] > 0.0 && half_extents[i].is_finite())) {
                    return Err(bad("half extents must be positive and finite"));
                }
            }
            Shape::Capsule { a, b, radius } => {
                if !finite(a) || !finite(b) || !(radius.is_finite() && *radius > 0.0) {
                    return Err(bad("radius must be positive and finite"));
                }
                if masked(b - a, dim).norm() == 0.0 {
                    return Err(bad("capsule endpoints coincide"));
                }
            }
        }
        Ok(())
    }
}

impl Scene {
    pub fn new(
        name: impl Into<String>,
        dimension: usize,
        bounds: Bounds,
        obstacles: Vec<Primitive>,
    ) -> Result<Self, SceneError> {
        let scene = Self {
            name: name.into(),
            dimension,
            bounds,
            obstacles,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.dimension != 2 && self.dimension != 3 {
            return Err(SceneError::Dimension(self.dimension));
        }
        let d = self.dimension;
        if (0..d).any(|i| !(self.bounds.max[i] - self.bounds.min[i] > 0.0)) {
            return Err(SceneError::DegenerateBounds);
        }
        if self.obstacles.is_empty() {
            return Err(SceneError::NoObstacles);
        }
        for (i, prim) in self.obstacles.iter().enumerate() {
            prim.validate(i, d)?;
            let (lo, hi) = prim.aabb();
            let eps = 1e-9;
            if (0..d).any(|k| lo[k] < self.bounds.min[k] - eps || hi[k] > self.bounds.max[k] + eps) {
                return Err(SceneError::InvalidPrimitive {
                    index: i,
                    reason: "primitive extends outside scene bounds".into(),
                });
            }
        }
        Ok(())
    }

    /// Distinct labels in order of first appearance; a frame's label ids
    /// index into this list.
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for p in &self.obstacles {
            if !out.contains(&p.label) {
                out.push(p.label.clone());
            }
        }
        out
    }

    pub fn label_id(&self, label: &str) -> Option<usize> {
        self.labels().iter().position(|l| l == label)
    }

    /// Exact signed distance to the union of obstacles (negative inside).
    pub fn sdf(&self, p: &Point) -> f64 {
        self.obstacles
            .iter()
            .map(|o| o.sdf(p, self.dimension))
            .fold(f64::INFINITY, f64::min)
    }

    /// Signed distance together with the index of the closest primitive.
    pub fn sdf_with_index(&self, p: &Point) -> (f64, usize) {
        self.obstacles
            .iter()
            .enumerate()
            .map(|(i, o)| (o.sdf(p, self.dimension), i))
            .fold((f64::INFINITY, 0), |acc, x| if x.0 < acc.0 { x } else { acc })
    }

    /// Signed distance to the nearest primitive carrying `label`.
    pub fn label_sdf(&self, p: &Point, label: &str) -> Option<f64> {
        self.obstacles
            .iter()
            .filter(|o| o.label == label)
            .map(|o| o.sdf(p, self.dimension))
            .reduce(f64::min)
    }

    /// Builds a point from the first `dimension` coordinates of `coords`.
    pub fn point(&self, coords: &[f64]) -> Point {
        let mut p = Point::zeros();
        for (i, c) in coords.iter().take(self.dimension).enumerate() {
            p[i] = *c;
        }
        p
    }
}

/// Closest-hit ray cast by sphere tracing against the analytic field.
/// Returns `(range, primitive index)` or `None` when nothing is hit within
/// `max_range`.
pub fn raycast(scene: &Scene, origin: &Point, dir: &Point, max_range: f64) -> Option<(f64, usize)> {
    const HIT_EPS: f64 = 1e-10;
    const MAX_STEPS: usize = 20_000;
    let mut t = 0.0;
    for _ in 0..MAX_STEPS {
        let p = origin + dir * t;
        let (d, idx) = scene.sdf_with_index(&p);
        if d < HIT_EPS {
            return Some((t, idx));
        }
        t += d;
        if t > max_range {
            return None;
        }
    }
    None
}
