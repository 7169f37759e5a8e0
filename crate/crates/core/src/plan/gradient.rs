use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{AdamConfig, AdamState, Graph, Param, Tensor, Var};
use crate::scenegen::Bounds;

use super::{
    densify, grid_plan, occupancy_from_field, points_tensor, reachable, select_goal_cell, OccupancyGrid, Path,
    PlanError, PlanField, PlannerParams, Target,
};

/// `sum_i clamp(d_min - sdf_i, 0, inf)`.
pub fn loss_obstacle(g: &mut Graph, sdf: Var, d_min: f64) -> Var {
    let neg = g.scale(sdf, -1.0);
    let gap = g.add_scalar(neg, d_min);
    let hinge = g.clamp(gap, 0.0, f64::INFINITY);
    g.sum(hinge)
}

fn segment_lengths(g: &mut Graph, points: Var) -> Result<Option<Var>, PlanError> {
    let n = g.value(points).dims2().map_or(0, |d| d.0);
    if n < 2 {
        return Ok(None);
    }
    let a = g.slice_rows(points, 0, n - 1)?;
    let b = g.slice_rows(points, 1, n)?;
    let d = g.sub(b, a)?;
    Ok(Some(g.l2norm(d)))
}

/// Sum over interior points of `| |p_i - p_{i+1}| - |p_i - p_{i-1}| |`.
pub fn loss_spacing(g: &mut Graph, points: Var) -> Result<Var, PlanError> {
    let n = g.value(points).dims2().map_or(0, |d| d.0);
    if n < 3 {
        return Ok(g.constant(Tensor::scalar(0.0))?);
    }
    let lens = segment_lengths(g, points)?.expect("n >= 2");
    let next: Vec<usize> = (1..n - 1).collect();
    let prev: Vec<usize> = (0..n - 2).collect();
    let a = g.gather(lens, &next)?;
    let b = g.gather(lens, &prev)?;
    let d = g.sub(a, b)?;
    let d = g.abs(d);
    Ok(g.sum(d))
}

/// `-(sem_T . q)` for the terminal semantic row (`1 x D_e` or `D_e`).
pub fn loss_semantic_goal(g: &mut Graph, sem_terminal: Var, query: &[f64]) -> Result<Var, PlanError> {
    let d = g.value(sem_terminal).len();
    if d != query.len() {
        return Err(PlanError::QueryDim {
            expected: d,
            got: query.len(),
        });
    }
    let s = g.reshape(sem_terminal, &[d])?;
    let q = g.constant(Tensor::vector(query.to_vec()))?;
    let dot = g.dot(s, q)?;
    Ok(g.scale(dot, -1.0))
}

/// Total polyline length; a zero-length segment contributes a zero
/// gradient.
pub fn loss_length(g: &mut Graph, points: Var) -> Result<Var, PlanError> {
    match segment_lengths(g, points)? {
        Some(l) => Ok(g.sum(l)),
        None => Ok(g.constant(Tensor::scalar(0.0))?),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub obstacle: f64,
    pub spacing: f64,
    pub semantic: f64,
    pub length: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientOutcome {
    pub path: Path,
    pub iterations: usize,
    pub converged: bool,
    /// False when no iterate, the initial path included, passed the dense
    /// clearance check; `path` is then the initial path.
    pub feasible: bool,
    pub terms: LossBreakdown,
    pub initial_terms: LossBreakdown,
    /// Loss of every iterate that replaced the incumbent best, in order.
    pub accepted: Vec<f64>,
}

struct Layout<'a> {
    start: [f64; 2],
    pinned_goal: Option<[f64; 2]>,
    query: Option<&'a [f64]>,
}

impl Layout<'_> {
    fn assemble(&self, free: &[f64]) -> Vec<[f64; 2]> {
        let mut pts = vec![self.start];
        pts.extend(free.chunks(2).map(|c| [c[0], c[1]]));
        pts.extend(self.pinned_goal);
        pts
    }
}

/// Builds the weighted objective for the free waypoints `free` (`m x 2`).
///
/// The start is fixed. With a query the terminal point floats and only
/// the obstacle and semantic terms act on it; length and spacing see it
/// as a constant.
fn objective(
    g: &mut Graph,
    field: &dyn PlanField,
    free: Var,
    layout: &Layout<'_>,
    params: &PlannerParams,
) -> Result<(Var, [Var; 4]), PlanError> {
    let start = g.constant(points_tensor(&[layout.start])?)?;
    let moving = match layout.pinned_goal {
        Some(goal) => {
            let goal = g.constant(points_tensor(&[goal])?)?;
            g.concat_rows(&[free, goal])?
        }
        None => free,
    };
    let m = g.value(moving).dims2().expect("matrix").0;
    let (sdf, sem) = field.forward(g, moving)?;
    let l_o = loss_obstacle(g, sdf, params.clearance());

    let shape_pts = match layout.query {
        Some(_) => {
            let last = g.value(free).row(g.value(free).dims2().expect("matrix").0 - 1).to_vec();
            let terminal = g.constant(Tensor::matrix(1, 2, last)?)?;
            let rows = g.value(free).dims2().expect("matrix").0;
            if rows > 1 {
                let interior = g.slice_rows(free, 0, rows - 1)?;
                g.concat_rows(&[start, interior, terminal])?
            } else {
                g.concat_rows(&[start, terminal])?
            }
        }
        None => g.concat_rows(&[start, moving])?,
    };
    let l_n = loss_spacing(g, shape_pts)?;
    let l_d = loss_length(g, shape_pts)?;
    let l_s = match layout.query {
        Some(q) => {
            let row = g.slice_rows(sem, m - 1, m)?;
            loss_semantic_goal(g, row, q)?
        }
        None => g.constant(Tensor::scalar(0.0))?,
    };
    let terms = [l_o, l_n, l_s, l_d];
    let weights = [
        params.lambda_obstacle,
        params.lambda_spacing,
        params.lambda_semantic,
        params.lambda_length,
    ];
    let mut total = g.scale(terms[0], weights[0]);
    for (t, w) in terms.iter().zip(weights).skip(1) {
        let s = g.scale(*t, w);
        total = g.add(total, s)?;
    }
    Ok((total, terms))
}

fn breakdown(g: &Graph, total: Var, terms: &[Var; 4]) -> LossBreakdown {
    let v = |x: Var| g.value(x).data()[0];
    LossBreakdown {
        obstacle: v(terms[0]),
        spacing: v(terms[1]),
        semantic: v(terms[2]),
        length: v(terms[3]),
        total: v(total),
    }
}

fn layout_for<'a>(waypoints: &[[f64; 2]], target: Target<'a>) -> (Layout<'a>, Vec<f64>) {
    let n = waypoints.len();
    match target {
        Target::Goal(goal) => (
            Layout {
                start: waypoints[0],
                pinned_goal: Some(goal),
                query: None,
            },
            waypoints[1..n - 1].iter().flatten().copied().collect(),
        ),
        Target::Query(q) => (
            Layout {
                start: waypoints[0],
                pinned_goal: None,
                query: Some(q),
            },
            waypoints[1..].iter().flatten().copied().collect(),
        ),
    }
}

/// Objective terms of a fixed path (the first waypoint is the start; for a
/// point goal the last is the goal).
pub fn path_loss(
    field: &dyn PlanField,
    waypoints: &[[f64; 2]],
    target: Target<'_>,
    params: &PlannerParams,
) -> Result<LossBreakdown, PlanError> {
    if waypoints.len() < 2 {
        return Err(PlanError::Params("a path needs at least 2 waypoints".into()));
    }
    let target = match target {
        Target::Goal(_) => Target::Goal(*waypoints.last().expect("non-empty")),
        t => t,
    };
    let (layout, free) = layout_for(waypoints, target);
    let mut g = Graph::new();
    let rows = free.len() / 2;
    let free_var = g.constant(Tensor::matrix(rows, 2, free)?)?;
    if rows == 0 {
        // Start and pinned goal only.
        let pts = g.constant(points_tensor(waypoints)?)?;
        let end = g.constant(points_tensor(&waypoints[1..])?)?;
        let (sdf, _) = field.forward(&mut g, end)?;
        let l_o = loss_obstacle(&mut g, sdf, params.clearance());
        let l_d = loss_length(&mut g, pts)?;
        let o = g.value(l_o).data()[0];
        let d = g.value(l_d).data()[0];
        return Ok(LossBreakdown {
            obstacle: o,
            length: d,
            total: params.lambda_obstacle * o + params.lambda_length * d,
            ..Default::default()
        });
    }
    let (total, terms) = objective(&mut g, field, free_var, &layout, params)?;
    Ok(breakdown(&g, total, &terms))
}

/// Seeds the terminal point for a query: the best of `n_targets` random
/// points with field clearance whose cell is reachable from `start`, or the
/// grid's goal cell if that scores higher.
pub fn seed_target(
    field: &dyn PlanField,
    grid: &OccupancyGrid,
    start: [f64; 2],
    query: &[f64],
    params: &PlannerParams,
) -> Result<[f64; 2], PlanError> {
    let sc = grid.cell_of(start).ok_or(PlanError::OutOfGrid("start"))?;
    let reach = reachable(grid, sc);
    let goal_cell = select_goal_cell(field, grid, query, Some(sc))?;
    let mut best = grid.center(goal_cell);
    let mut best_score = field.similarity(&[best], query)?[0];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let w = grid.nx as f64 * grid.cell_size;
    let h = grid.ny as f64 * grid.cell_size;
    let candidates: Vec<[f64; 2]> = (0..params.n_targets)
        .map(|_| {
            [
                grid.origin[0] + rng.gen::<f64>() * w,
                grid.origin[1] + rng.gen::<f64>() * h,
            ]
        })
        .collect();
    let out = field.eval(&candidates)?;
    for (i, c) in candidates.iter().enumerate() {
        if out.sdf[i] < params.clearance() || grid.cell_of(*c).is_none_or(|k| !reach[grid.index(k)]) {
            continue;
        }
        let s: f64 = out.sem_row(i).iter().zip(query).map(|(a, b)| a * b).sum();
        if s > best_score {
            best_score = s;
            best = *c;
        }
    }
    Ok(best)
}

/// Grid-planner initialization for [`gradient_plan`], resampled to
/// `n_waypoints`.
pub fn initial_path(
    field: &dyn PlanField,
    grid: &OccupancyGrid,
    start: [f64; 2],
    target: Target<'_>,
    params: &PlannerParams,
) -> Result<Path, PlanError> {
    let goal = match target {
        Target::Goal(g) => g,
        Target::Query(q) => seed_target(field, grid, start, q, params)?,
    };
    let path = grid_plan(grid, Some(field), start, Target::Goal(goal))?;
    let mut r = path.resample(params.n_waypoints)?;
    if let Target::Goal(g) = target {
        *r.waypoints.last_mut().expect("non-empty") = g;
    }
    Path::new(r.waypoints)
}

fn min_sdf(field: &dyn PlanField, waypoints: &[[f64; 2]], step: f64) -> Result<f64, PlanError> {
    Ok(field
        .sdf(&densify(waypoints, step))?
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

/// Gradient planner: Adam on the waypoints of `init` (or of a grid plan
/// over `bounds` when `init` is `None`).
///
/// Each iterate is checked densely against the field; the returned path
/// is the lowest-loss iterate whose clearance is at least
/// `params.clearance()` (or the start's own clearance, if lower).
pub fn gradient_plan(
    field: &dyn PlanField,
    start: [f64; 2],
    target: Target<'_>,
    params: &PlannerParams,
    init: Option<&Path>,
    bounds: &Bounds,
) -> Result<GradientOutcome, PlanError> {
    params.validate()?;
    if let Target::Query(q) = target {
        if q.len() != field.sem_dim() {
            return Err(PlanError::QueryDim {
                expected: field.sem_dim(),
                got: q.len(),
            });
        }
    }
    let init = match init {
        Some(p) => p.clone(),
        None => {
            let grid = occupancy_from_field(field, bounds, params.init_cell_size, params.clearance())?;
            initial_path(field, &grid, start, target, params)?
        }
    };
    let mut waypoints = init.waypoints.clone();
    waypoints[0] = start;
    if let Target::Goal(goal) = target {
        *waypoints.last_mut().expect("non-empty") = goal;
    }
    if waypoints.len() < 3 && matches!(target, Target::Goal(_)) {
        waypoints = Path::new(waypoints)?.resample(params.n_waypoints.max(3))?.waypoints;
    }
    let (layout, free) = layout_for(&waypoints, target);
    let rows = free.len() / 2;
    let mut fixed = vec![start];
    fixed.extend(layout.pinned_goal);
    let threshold = field.sdf(&fixed)?.into_iter().fold(params.clearance(), f64::min);

    let mut param = vec![Param::new("waypoints", Tensor::matrix(rows, 2, free)?)];
    let mut adam = AdamState::new(AdamConfig::with_lr(params.lr));
    let mut history: Vec<f64> = Vec::new();
    let mut best: Option<(f64, Vec<[f64; 2]>, LossBreakdown)> = None;
    let mut accepted = Vec::new();
    let mut initial_terms = LossBreakdown::default();
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..=params.max_iters {
        let mut g = Graph::new();
        let x = g.param(param[0].value.clone())?;
        let (total, terms) = objective(&mut g, field, x, &layout, params)?;
        let b = breakdown(&g, total, &terms);
        if it == 0 {
            initial_terms = b;
        }
        if !b.total.is_finite() {
            break;
        }
        let current = layout.assemble(param[0].value.data());
        if best.as_ref().is_none_or(|(l, _, _)| b.total < *l)
            && min_sdf(field, &current, params.check_step)? >= threshold
        {
            best = Some((b.total, current, b));
            accepted.push(b.total);
        }
        history.push(b.total);
        let w = params.convergence_window;
        if history.len() > w {
            let recent = &history[history.len() - w - 1..];
            let hi = recent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = recent.iter().copied().fold(f64::INFINITY, f64::min);
            if hi - lo < params.convergence_tol {
                converged = true;
                break;
            }
        }
        if it == params.max_iters {
            break;
        }
        g.backward(total)?;
        let grad = g.grad(x).expect("tracked waypoint parameter").to_vec();
        if adam.step(&mut param, &[&grad]).is_err() {
            break;
        }
        iterations = it + 1;
    }
    let query = match target {
        Target::Query(q) => Some(q),
        Target::Goal(_) => None,
    };
    let (feasible, waypoints, terms) = match best {
        Some((_, w, t)) => (true, w, t),
        None => (false, waypoints, initial_terms),
    };
    let mut path = Path::new(waypoints)?;
    path.annotate(field, query)?;
    Ok(GradientOutcome {
        path,
        iterations,
        converged,
        feasible,
        terms,
        initial_terms,
        accepted,
    })
}
