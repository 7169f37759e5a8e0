//! Planners over a trained field: the point-cloud occupancy baseline, the
//! field-derived grid planner, and the gradient waypoint optimizer.
//!
//! Planning is planar; waypoints are `[x, y]` in scene units.

mod gradient;
mod grid;

pub use gradient::{
    gradient_plan, initial_path, loss_length, loss_obstacle, loss_semantic_goal, loss_spacing, path_loss, seed_target,
    GradientOutcome, LossBreakdown,
};
pub use grid::{
    bfs_path, bresenham, dijkstra, line_of_sight, los_simplify, occupancy_from_cloud, occupancy_from_field, reachable,
    select_goal_cell, Cell, EdgeCost, OccupancyGrid,
};

use std::fmt::Write as _;

use thiserror::Error;

use crate::autograd::{AutogradError, Graph, Tensor, Var};
use crate::field::{FieldError, FieldModel, FieldOutput};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("invalid planner parameters: {0}")]
    Params(String),
    #[error("planners are planar; got a {0}-D input")]
    Dimension(usize),
    #[error("{0} lies outside the grid")]
    OutOfGrid(&'static str),
    #[error("{0} cell is occupied")]
    Blocked(&'static str),
    #[error("no free cell in the grid")]
    NoFreeCell,
    #[error("no path between start and goal")]
    NoPath,
    #[error("a semantic query needs a field")]
    NeedsField,
    #[error("query has dimension {got}, field has {expected}")]
    QueryDim { expected: usize, got: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Autograd(#[from] AutogradError),
}

impl PlanError {
    /// True for outcomes that mean "this planner found no route" rather
    /// than a usage error.
    pub fn is_no_path(&self) -> bool {
        matches!(
            self,
            Self::NoPath | Self::Blocked(_) | Self::NoFreeCell | Self::OutOfGrid(_)
        )
    }
}

/// What the planners need from a field: batched evaluation and a
/// differentiable forward pass over `N x 2` points.
pub trait PlanField {
    fn sem_dim(&self) -> usize;

    fn eval(&self, points: &[[f64; 2]]) -> Result<FieldOutput, PlanError>;

    /// Returns the SDF column (`N`) and unit semantic rows (`N x D_e`).
    fn forward(&self, g: &mut Graph, points: Var) -> Result<(Var, Var), PlanError>;

    fn sdf(&self, points: &[[f64; 2]]) -> Result<Vec<f64>, PlanError> {
        Ok(self.eval(points)?.sdf)
    }

    fn similarity(&self, points: &[[f64; 2]], query: &[f64]) -> Result<Vec<f64>, PlanError> {
        if query.len() != self.sem_dim() {
            return Err(PlanError::QueryDim {
                expected: self.sem_dim(),
                got: query.len(),
            });
        }
        let out = self.eval(points)?;
        Ok((0..out.len())
            .map(|i| out.sem_row(i).iter().zip(query).map(|(a, b)| a * b).sum())
            .collect())
    }
}

impl PlanField for FieldModel {
    fn sem_dim(&self) -> usize {
        self.config.sem_dim
    }

    fn eval(&self, points: &[[f64; 2]]) -> Result<FieldOutput, PlanError> {
        if self.config.input_dim != 2 {
            return Err(PlanError::Dimension(self.config.input_dim));
        }
        let flat: Vec<f64> = points.iter().flatten().copied().collect();
        Ok(self.query_many(&flat)?)
    }

    fn forward(&self, g: &mut Graph, points: Var) -> Result<(Var, Var), PlanError> {
        if self.config.input_dim != 2 {
            return Err(PlanError::Dimension(self.config.input_dim));
        }
        let params = self.param_vars(g, false)?;
        let (sdf, sem) = FieldModel::forward(self, g, &params, points)?;
        Ok((g.add_scalar(sdf, self.sdf_bias_correction), sem))
    }
}

/// Planning target: a fixed goal point or a query embedding.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Goal([f64; 2]),
    Query(&'a [f64]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerParams {
    /// Minimum clearance: robot radius plus buffer.
    pub d_min: f64,
    /// Extra clearance demanded of the field when building grids and when
    /// accepting gradient iterates, absorbing field error.
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
    /// Spacing of the dense feasibility check along a path.
    pub check_step: f64,
    /// Cell size of the grid used to initialize the gradient planner.
    pub init_cell_size: f64,
    pub seed: u64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            d_min: 0.3,
            margin: 0.15,
            n_waypoints: 32,
            n_targets: 512,
            lambda_obstacle: 1.0,
            lambda_spacing: 1.0,
            lambda_semantic: 15.0,
            lambda_length: 25.0,
            lr: 1e-2,
            max_iters: 300,
            convergence_tol: 1e-4,
            convergence_window: 10,
            check_step: 0.05,
            init_cell_size: 0.1,
            seed: 0,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |m: &str| Err(PlanError::Params(m.into()));
        if !(self.d_min > 0.0 && self.d_min.is_finite()) {
            return bad("d_min must be positive");
        }
        if !(self.margin >= 0.0) {
            return bad("margin must be non-negative");
        }
        if self.n_waypoints < 2 {
            return bad("need at least 2 waypoints");
        }
        if self.n_targets == 0 {
            return bad("need at least one target sample");
        }
        let weights = [
            self.lambda_obstacle,
            self.lambda_spacing,
            self.lambda_semantic,
            self.lambda_length,
        ];
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return bad("loss weights must be finite and non-negative");
        }
        if !(self.lr > 0.0) || !(self.check_step > 0.0) || !(self.init_cell_size > 0.0) {
            return bad("lr, check_step and init_cell_size must be positive");
        }
        if self.convergence_window == 0 {
            return bad("convergence window must be at least 1");
        }
        Ok(())
    }

    /// Clearance the field must show for a point to count as free.
    pub fn clearance(&self) -> f64 {
        self.d_min + self.margin
    }
}

pub fn polyline_length(points: &[[f64; 2]]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub waypoints: Vec<[f64; 2]>,
    /// Field SDF per waypoint, when annotated.
    pub sdf: Vec<f64>,
    /// Similarity to the query per waypoint, when annotated with one.
    pub semantic: Vec<f64>,
    pub length: f64,
}

impl Path {
    pub fn new(waypoints: Vec<[f64; 2]>) -> Result<Self, PlanError> {
        if waypoints.len() < 2 {
            return Err(PlanError::Params("a path needs at least 2 waypoints".into()));
        }
        if waypoints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(PlanError::Params("non-finite waypoint".into()));
        }
        Ok(Self {
            length: polyline_length(&waypoints),
            waypoints,
            sdf: Vec::new(),
            semantic: Vec::new(),
        })
    }

    pub fn start(&self) -> [f64; 2] {
        self.waypoints[0]
    }

    pub fn terminal(&self) -> [f64; 2] {
        *self.waypoints.last().expect("at least 2 waypoints")
    }

    /// Fills the per-waypoint SDF and, given a query, similarity.
    pub fn annotate(&mut self, field: &dyn PlanField, query: Option<&[f64]>) -> Result<(), PlanError> {
        let out = field.eval(&self.waypoints)?;
        self.semantic = match query {
            Some(q) => {
                if q.len() != out.sem_dim {
                    return Err(PlanError::QueryDim {
                        expected: out.sem_dim,
                        got: q.len(),
                    });
                }
                (0..out.len())
                    .map(|i| out.sem_row(i).iter().zip(q).map(|(a, b)| a * b).sum())
                    .collect()
            }
            None => Vec::new(),
        };
        self.sdf = out.sdf;
        Ok(())
    }

    /// Points spaced at most `step` apart along the path, including every
    /// waypoint.
    pub fn densify(&self, step: f64) -> Vec<[f64; 2]> {
        densify(&self.waypoints, step)
    }

    /// Resamples to `n` waypoints by arc length, keeping every existing
    /// vertex when there is room (`n >= len`). Extra points are shared
    /// among segments in proportion to their length.
    pub fn resample(&self, n: usize) -> Result<Path, PlanError> {
        if n < 2 {
            return Err(PlanError::Params("need at least 2 waypoints".into()));
        }
        let w = &self.waypoints;
        let segs: Vec<f64> = w
            .windows(2)
            .map(|s| (s[1][0] - s[0][0]).hypot(s[1][1] - s[0][1]))
            .collect();
        let total: f64 = segs.iter().sum();
        if n < w.len() || total == 0.0 {
            return Path::new(uniform_resample(w, n, total));
        }
        // Largest-remainder allocation of the interior points.
        let extra = n - w.len();
        let shares: Vec<f64> = segs.iter().map(|s| s / total * extra as f64).collect();
        let mut alloc: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
        let mut left = extra - alloc.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..segs.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = shares[a] - shares[a].floor();
            let rb = shares[b] - shares[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &i in &order {
            if left == 0 {
                break;
            }
            alloc[i] += 1;
            left -= 1;
        }
        let mut out = Vec::with_capacity(n);
        for (i, s) in w.windows(2).enumerate() {
            out.push(s[0]);
            let k = alloc[i];
            for j in 1..=k {
                let t = j as f64 / (k + 1) as f64;
                out.push([s[0][0] + t * (s[1][0] - s[0][0]), s[0][1] + t * (s[1][1] - s[0][1])]);
            }
        }
        out.push(*w.last().expect("non-empty"));
        Path::new(out)
    }

    /// Structured text: one record per waypoint, then a summary block.
    pub fn to_records(&self) -> String {
        let mut out = String::from("index,x,y,sdf,semantic\n");
        for (i, p) in self.waypoints.iter().enumerate() {
            let sdf = self.sdf.get(i).map_or(String::new(), |v| format!("{v:.6}"));
            let sem = self.semantic.get(i).map_or(String::new(), |v| format!("{v:.6}"));
            writeln!(out, "{i},{:.6},{:.6},{sdf},{sem}", p[0], p[1]).expect("write to String");
        }
        out
    }
}

fn uniform_resample(w: &[[f64; 2]], n: usize, total: f64) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    let mut acc = 0.0;
    for k in 0..n {
        let target = total * k as f64 / (n - 1) as f64;
        loop {
            let len = if seg + 1 < w.len() {
                (w[seg + 1][0] - w[seg][0]).hypot(w[seg + 1][1] - w[seg][1])
            } else {
                0.0
            };
            if seg + 2 >= w.len() || acc + len >= target {
                let t = if len > 0.0 {
                    ((target - acc) / len).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let b = w[(seg + 1).min(w.len() - 1)];
                out.push([w[seg][0] + t * (b[0] - w[seg][0]), w[seg][1] + t * (b[1] - w[seg][1])]);
                break;
            }
            acc += len;
            seg += 1;
        }
    }
    out[0] = w[0];
    out[n - 1] = *w.last().expect("non-empty");
    out
}

/// Points spaced at most `step` apart along a polyline.
pub fn densify(points: &[[f64; 2]], step: f64) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    for w in points.windows(2) {
        let len = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
        let k = (len / step).ceil().max(1.0) as usize;
        for j in 0..k {
            let t = j as f64 / k as f64;
            out.push([w[0][0] + t * (w[1][0] - w[0][0]), w[0][1] + t * (w[1][1] - w[0][1])]);
        }
    }
    if let Some(last) = points.last() {
        out.push(*last);
    }
    out
}

pub(crate) fn points_tensor(points: &[[f64; 2]]) -> Result<Tensor, PlanError> {
    Ok(Tensor::matrix(
        points.len(),
        2,
        points.iter().flatten().copied().collect(),
    )?)
}

/// Grid planner on a prepared grid.
///
/// With a [`Target::Query`] the goal is the free cell most similar to the
/// query. With a [`Target::Goal`] the search targets the goal's cell, or
/// the nearest free cell when it is occupied, and the path still ends at
/// the goal exactly. The path starts at `start` exactly; intermediate
/// waypoints are cell centers.
pub fn grid_plan(
    grid: &OccupancyGrid,
    field: Option<&dyn PlanField>,
    start: [f64; 2],
    target: Target<'_>,
) -> Result<Path, PlanError> {
    let sc = grid.cell_of(start).ok_or(PlanError::OutOfGrid("start"))?;
    if grid.is_occupied(sc) {
        return Err(PlanError::Blocked("start"));
    }
    let (gc, end) = match target {
        Target::Goal(goal) => {
            let c = grid.cell_of(goal).ok_or(PlanError::OutOfGrid("goal"))?;
            (grid.nearest_free(c).ok_or(PlanError::NoFreeCell)?, goal)
        }
        Target::Query(q) => {
            let field = field.ok_or(PlanError::NeedsField)?;
            let c = select_goal_cell(field, grid, q, Some(sc))?;
            (c, grid.center(c))
        }
    };
    let cells = bfs_path(grid, sc, gc)?.ok_or(PlanError::NoPath)?;
    let simplified = los_simplify(grid, &cells);
    let mut waypoints = vec![start];
    if simplified.len() > 2 {
        waypoints.extend(simplified[1..simplified.len() - 1].iter().map(|&c| grid.center(c)));
    }
    if grid.cell_of(end) != Some(gc) {
        // Goal cell was occupied: pass through the nearest free cell.
        waypoints.push(grid.center(gc));
    }
    waypoints.push(end);
    let mut path = Path::new(waypoints)?;
    if let Some(f) = field {
        let q = match target {
            Target::Query(q) => Some(q),
            Target::Goal(_) => None,
        };
        path.annotate(f, q)?;
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_is_sum_of_segments() {
        let p = Path::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]).unwrap();
        assert_eq!(p.length, 2.0);
        assert!(Path::new(vec![[0.0, 0.0]]).is_err());
    }

    #[test]
    fn resample_keeps_vertices_and_length() {
        let p = Path::new(vec![[0.0, 0.0], [3.0, 0.0], [3.0, 1.0]]).unwrap();
        let r = p.resample(32).unwrap();
        assert_eq!(r.waypoints.len(), 32);
        assert!(r.waypoints.contains(&[3.0, 0.0]));
        assert!((r.length - 4.0).abs() < 1e-12);
        assert_eq!(r.start(), p.start());
        assert_eq!(r.terminal(), p.terminal());

        let dense = Path::new((0..50).map(|i| [i as f64, 0.0]).collect()).unwrap();
        let r = dense.resample(5).unwrap();
        assert_eq!(
            r.waypoints,
            vec![[0.0, 0.0], [12.25, 0.0], [24.5, 0.0], [36.75, 0.0], [49.0, 0.0]]
        );
    }

    #[test]
    fn densify_respects_step() {
        let pts = densify(&[[0.0, 0.0], [1.0, 0.0], [1.0, 0.35]], 0.1);
        for w in pts.windows(2) {
            assert!((w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]) <= 0.1 + 1e-12);
        }
        assert_eq!(*pts.last().unwrap(), [1.0, 0.35]);
    }

    #[test]
    fn grid_plan_adjacent_cells() {
        let grid = OccupancyGrid::from_mask(4, 4, &[false; 16]).unwrap();
        let p = grid_plan(&grid, None, [0.5, 0.5], Target::Goal([1.5, 0.5])).unwrap();
        assert_eq!(p.waypoints, vec![[0.5, 0.5], [1.5, 0.5]]);
        assert!(matches!(
            grid_plan(&grid, None, [0.5, 0.5], Target::Query(&[1.0])),
            Err(PlanError::NeedsField)
        ));
    }

    #[test]
    fn params_validate() {
        assert!(PlannerParams::default().validate().is_ok());
        let p = PlannerParams {
            n_waypoints: 1,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }
}
