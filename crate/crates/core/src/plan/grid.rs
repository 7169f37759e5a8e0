use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use crate::scenegen::{Bounds, Frame};

use super::{PlanError, PlanField};

/// Grid cell as `(ix, iy)`; row-major index is `iy * nx + ix`.
pub type Cell = (usize, usize);

const NEIGHBORS: [(isize, isize); 8] = [(1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, 1), (-1, -1), (1, -1)];

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    /// World coordinates of the lower-left corner of cell `(0, 0)`.
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major values in `[0, 1]`.
    pub occupancy: Vec<f64>,
    pub threshold: f64,
}

impl OccupancyGrid {
    /// A grid with every cell set to `fill`.
    pub fn new(
        origin: [f64; 2],
        cell_size: f64,
        nx: usize,
        ny: usize,
        fill: f64,
        threshold: f64,
    ) -> Result<Self, PlanError> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(PlanError::Params("cell size must be positive".into()));
        }
        if nx == 0 || ny == 0 {
            return Err(PlanError::Params("grid must have at least one cell".into()));
        }
        if !(0.0..=1.0).contains(&fill) {
            return Err(PlanError::Params("occupancy values must lie in [0, 1]".into()));
        }
        Ok(Self {
            origin,
            cell_size,
            nx,
            ny,
            occupancy: vec![fill; nx * ny],
            threshold,
        })
    }

    /// Grid covering `bounds` (x and y) with the given cell size.
    pub fn covering(bounds: &Bounds, cell_size: f64, fill: f64, threshold: f64) -> Result<Self, PlanError> {
        if !(cell_size > 0.0) {
            return Err(PlanError::Params("cell size must be positive".into()));
        }
        let nx = ((bounds.max.x - bounds.min.x) / cell_size - 1e-9).ceil().max(1.0) as usize;
        let ny = ((bounds.max.y - bounds.min.y) / cell_size - 1e-9).ceil().max(1.0) as usize;
        Self::new([bounds.min.x, bounds.min.y], cell_size, nx, ny, fill, threshold)
    }

    /// Binary grid from a row-major occupied mask.
    pub fn from_mask(nx: usize, ny: usize, occupied: &[bool]) -> Result<Self, PlanError> {
        if occupied.len() != nx * ny {
            return Err(PlanError::Params("mask length must be nx * ny".into()));
        }
        let mut g = Self::new([0.0, 0.0], 1.0, nx, ny, 0.0, 0.5)?;
        for (v, &o) in g.occupancy.iter_mut().zip(occupied) {
            *v = if o { 1.0 } else { 0.0 };
        }
        Ok(g)
    }

    pub fn index(&self, c: Cell) -> usize {
        c.1 * self.nx + c.0
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        (index % self.nx, index / self.nx)
    }

    pub fn is_occupied(&self, c: Cell) -> bool {
        self.occupancy[self.index(c)] >= self.threshold
    }

    pub fn is_free(&self, c: Cell) -> bool {
        !self.is_occupied(c)
    }

    pub fn free_count(&self) -> usize {
        self.occupancy.iter().filter(|v| **v < self.threshold).count()
    }

    pub fn contains_cell(&self, x: isize, y: isize) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.nx && (y as usize) < self.ny
    }

    /// Cell containing a world point, if inside the grid.
    pub fn cell_of(&self, p: [f64; 2]) -> Option<Cell> {
        let fx = ((p[0] - self.origin[0]) / self.cell_size).floor();
        let fy = ((p[1] - self.origin[1]) / self.cell_size).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.nx as f64 || fy >= self.ny as f64 {
            return None;
        }
        Some((fx as usize, fy as usize))
    }

    pub fn center(&self, c: Cell) -> [f64; 2] {
        [
            self.origin[0] + (c.0 as f64 + 0.5) * self.cell_size,
            self.origin[1] + (c.1 as f64 + 0.5) * self.cell_size,
        ]
    }

    /// Neighbors reachable in one 8-connected move. A diagonal move needs
    /// both cells it squeezes between to be free.
    fn moves(&self, c: Cell) -> impl Iterator<Item = (Cell, bool)> + '_ {
        NEIGHBORS.iter().filter_map(move |&(dx, dy)| {
            let (x, y) = (c.0 as isize + dx, c.1 as isize + dy);
            if !self.contains_cell(x, y) {
                return None;
            }
            let n = (x as usize, y as usize);
            if self.is_occupied(n) {
                return None;
            }
            let diagonal = dx != 0 && dy != 0;
            if diagonal
                && (self.is_occupied(((c.0 as isize + dx) as usize, c.1))
                    || self.is_occupied((c.0, (c.1 as isize + dy) as usize)))
            {
                return None;
            }
            Some((n, diagonal))
        })
    }

    /// Nearest free cell to `c` in 8-connected ring distance, ties broken
    /// by row-major order.
    pub fn nearest_free(&self, c: Cell) -> Option<Cell> {
        if self.is_free(c) {
            return Some(c);
        }
        let max_r = self.nx.max(self.ny) as isize;
        for r in 1..=max_r {
            let mut best: Option<(f64, usize)> = None;
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs() != r && dy.abs() != r {
                        continue;
                    }
                    let (x, y) = (c.0 as isize + dx, c.1 as isize + dy);
                    if !self.contains_cell(x, y) {
                        continue;
                    }
                    let n = (x as usize, y as usize);
                    if self.is_free(n) {
                        let d = ((dx * dx + dy * dy) as f64).sqrt();
                        let key = (d, self.index(n));
                        if best.is_none_or(|b| key.0 < b.0 || (key.0 == b.0 && key.1 < b.1)) {
                            best = Some(key);
                        }
                    }
                }
            }
            if let Some((_, i)) = best {
                return Some(self.cell_at(i));
            }
        }
        None
    }
}

/// Moving-average occupancy grid from posed planar frames.
///
/// Per frame, cells containing a measured surface point observe 1 and
/// cells crossed by a ray before its hit observe 0. The first observation
/// of a cell sets its value; later ones are folded in as
/// `v <- (1 - alpha) v + alpha * obs`. Cells never observed stay at 1.
pub fn occupancy_from_cloud(
    frames: &[Frame],
    bounds: &Bounds,
    cell_size: f64,
    alpha: f64,
    threshold: f64,
) -> Result<OccupancyGrid, PlanError> {
    if frames.is_empty() {
        return Err(PlanError::Params("need at least one frame".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(PlanError::Params("update rate must lie in (0, 1]".into()));
    }
    let mut grid = OccupancyGrid::covering(bounds, cell_size, 1.0, threshold)?;
    let mut seen = vec![false; grid.nx * grid.ny];
    let mut obs: Vec<Option<f64>> = vec![None; grid.nx * grid.ny];
    for frame in frames {
        if frame.dimension() != 2 {
            return Err(PlanError::Dimension(frame.dimension()));
        }
        obs.iter_mut().for_each(|o| *o = None);
        let origin = frame.pose.position();
        let Some(oc) = grid.cell_of([origin.x, origin.y]) else {
            continue;
        };
        let mut hits = Vec::new();
        for i in frame.valid_pixels() {
            let p = origin + frame.world_ray(i) * frame.depth[i];
            let Some(hc) = grid.cell_of([p.x, p.y]) else {
                continue;
            };
            for c in bresenham(oc, hc) {
                if c != hc {
                    let k = grid.index(c);
                    obs[k].get_or_insert(0.0);
                }
            }
            hits.push(hc);
        }
        for hc in hits {
            obs[grid.index(hc)] = Some(1.0);
        }
        for (k, o) in obs.iter().enumerate() {
            if let Some(o) = *o {
                let v = &mut grid.occupancy[k];
                if seen[k] {
                    *v = (1.0 - alpha) * *v + alpha * o;
                } else {
                    *v = o;
                    seen[k] = true;
                }
            }
        }
    }
    Ok(grid)
}

/// Occupancy from a field: a cell is occupied when any of its four
/// corners has an SDF below `d_min`.
pub fn occupancy_from_field(
    field: &dyn PlanField,
    bounds: &Bounds,
    cell_size: f64,
    d_min: f64,
) -> Result<OccupancyGrid, PlanError> {
    let mut grid = OccupancyGrid::covering(bounds, cell_size, 0.0, 0.5)?;
    let (cx, cy) = (grid.nx + 1, grid.ny + 1);
    let mut corners = Vec::with_capacity(cx * cy);
    for iy in 0..cy {
        for ix in 0..cx {
            corners.push([
                grid.origin[0] + ix as f64 * cell_size,
                grid.origin[1] + iy as f64 * cell_size,
            ]);
        }
    }
    let sdf = field.sdf(&corners)?;
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let m = [
                sdf[iy * cx + ix],
                sdf[iy * cx + ix + 1],
                sdf[(iy + 1) * cx + ix],
                sdf[(iy + 1) * cx + ix + 1],
            ]
            .into_iter()
            .fold(f64::INFINITY, f64::min);
            let k = grid.index((ix, iy));
            grid.occupancy[k] = if m < d_min { 1.0 } else { 0.0 };
        }
    }
    Ok(grid)
}

/// Free cell whose center has the highest similarity to `query`; ties go
/// to the first cell in row-major order. With `from`, only cells reachable
/// from that cell are considered.
pub fn select_goal_cell(
    field: &dyn PlanField,
    grid: &OccupancyGrid,
    query: &[f64],
    from: Option<Cell>,
) -> Result<Cell, PlanError> {
    let reach = from.map(|c| reachable(grid, c));
    let free: Vec<usize> = (0..grid.nx * grid.ny)
        .filter(|&k| grid.occupancy[k] < grid.threshold && reach.as_ref().is_none_or(|r| r[k]))
        .collect();
    if free.is_empty() {
        return Err(PlanError::NoFreeCell);
    }
    let centers: Vec<[f64; 2]> = free.iter().map(|&k| grid.center(grid.cell_at(k))).collect();
    let scores = field.similarity(&centers, query)?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok(grid.cell_at(free[best]))
}

/// Cells (by index) connected to `from` under the planner's moves. All
/// false when `from` is occupied or outside the grid.
pub fn reachable(grid: &OccupancyGrid, from: Cell) -> Vec<bool> {
    let mut seen = vec![false; grid.nx * grid.ny];
    if from.0 >= grid.nx || from.1 >= grid.ny || grid.is_occupied(from) {
        return seen;
    }
    seen[grid.index(from)] = true;
    let mut queue = VecDeque::from([from]);
    while let Some(c) = queue.pop_front() {
        for (n, _) in grid.moves(c) {
            let k = grid.index(n);
            if !seen[k] {
                seen[k] = true;
                queue.push_back(n);
            }
        }
    }
    seen
}

/// Shortest-hop 8-connected path by breadth-first search. `Ok(None)` when
/// the goal is unreachable.
pub fn bfs_path(grid: &OccupancyGrid, start: Cell, goal: Cell) -> Result<Option<Vec<Cell>>, PlanError> {
    check_endpoints(grid, start, goal)?;
    let mut parent = vec![usize::MAX; grid.nx * grid.ny];
    let s = grid.index(start);
    parent[s] = s;
    let mut queue = VecDeque::from([start]);
    while let Some(c) = queue.pop_front() {
        if c == goal {
            return Ok(Some(trace(grid, &parent, goal)));
        }
        for (n, _) in grid.moves(c) {
            let k = grid.index(n);
            if parent[k] == usize::MAX {
                parent[k] = grid.index(c);
                queue.push_back(n);
            }
        }
    }
    Ok(None)
}

fn check_endpoints(grid: &OccupancyGrid, start: Cell, goal: Cell) -> Result<(), PlanError> {
    for (c, what) in [(start, "start"), (goal, "goal")] {
        if c.0 >= grid.nx || c.1 >= grid.ny {
            return Err(PlanError::OutOfGrid(what));
        }
        if grid.is_occupied(c) {
            return Err(PlanError::Blocked(what));
        }
    }
    Ok(())
}

fn trace(grid: &OccupancyGrid, parent: &[usize], goal: Cell) -> Vec<Cell> {
    let mut path = vec![goal];
    let mut k = grid.index(goal);
    while parent[k] != k {
        k = parent[k];
        path.push(grid.cell_at(k));
    }
    path.reverse();
    path
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeCost {
    /// Every move costs 1.
    Unit,
    /// Straight moves cost 1, diagonal moves cost sqrt(2).
    Octile,
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra over the same move set as [`bfs_path`]. Returns the path and
/// its cost in cell units.
pub fn dijkstra(
    grid: &OccupancyGrid,
    start: Cell,
    goal: Cell,
    cost: EdgeCost,
) -> Result<Option<(Vec<Cell>, f64)>, PlanError> {
    check_endpoints(grid, start, goal)?;
    let n = grid.nx * grid.ny;
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let s = grid.index(start);
    dist[s] = 0.0;
    parent[s] = s;
    let mut heap = BinaryHeap::from([Entry(0.0, s)]);
    while let Some(Entry(d, k)) = heap.pop() {
        if d > dist[k] {
            continue;
        }
        let c = grid.cell_at(k);
        if c == goal {
            return Ok(Some((trace(grid, &parent, goal), d)));
        }
        for (nb, diagonal) in grid.moves(c) {
            let step = match (cost, diagonal) {
                (EdgeCost::Octile, true) => std::f64::consts::SQRT_2,
                _ => 1.0,
            };
            let j = grid.index(nb);
            if d + step < dist[j] {
                dist[j] = d + step;
                parent[j] = k;
                heap.push(Entry(d + step, j));
            }
        }
    }
    Ok(None)
}

/// Cells on the Bresenham line from `a` to `b`, both included.
pub fn bresenham(a: Cell, b: Cell) -> Vec<Cell> {
    let (mut x, mut y) = (a.0 as isize, a.1 as isize);
    let (x1, y1) = (b.0 as isize, b.1 as isize);
    let dx = (x1 - x).abs();
    let dy = -(y1 - y).abs();
    let sx = if x < x1 { 1 } else { -1 };
    let sy = if y < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx.max(-dy) + 1) as usize);
    loop {
        out.push((x as usize, y as usize));
        if x == x1 && y == y1 {
            return out;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// True when the Bresenham line from `a` to `b` crosses only free cells
/// and never squeezes diagonally between two occupied cells.
pub fn line_of_sight(grid: &OccupancyGrid, a: Cell, b: Cell) -> bool {
    let cells = bresenham(a, b);
    cells.iter().all(|&c| grid.is_free(c))
        && cells.windows(2).all(|w| {
            let (p, q) = (w[0], w[1]);
            p.0 == q.0 || p.1 == q.1 || (grid.is_free((q.0, p.1)) && grid.is_free((p.0, q.1)))
        })
}

/// Greedy farthest-visible simplification of a cell path.
pub fn los_simplify(grid: &OccupancyGrid, path: &[Cell]) -> Vec<Cell> {
    if path.len() <= 2 {
        return path.to_vec();
    }
    let mut out = vec![path[0]];
    let mut i = 0;
    while i < path.len() - 1 {
        let mut j = path.len() - 1;
        while j > i + 1 && !line_of_sight(grid, path[i], path[j]) {
            j -= 1;
        }
        out.push(path[j]);
        i = j;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty(n: usize) -> OccupancyGrid {
        OccupancyGrid::from_mask(n, n, &vec![false; n * n]).unwrap()
    }

    #[test]
    fn diagonal_bfs_on_empty_grid() {
        let g = empty(10);
        let p = bfs_path(&g, (0, 0), (9, 9)).unwrap().unwrap();
        assert_eq!(p.len(), 10);
        assert_eq!(bfs_path(&g, (3, 4), (3, 4)).unwrap().unwrap(), vec![(3, 4)]);
    }

    #[test]
    fn wall_with_gap_is_used() {
        let n = 10;
        let mut mask = vec![false; n * n];
        for y in 0..n {
            if y != 7 {
                mask[y * n + 5] = true;
            }
        }
        let g = OccupancyGrid::from_mask(n, n, &mask).unwrap();
        let p = bfs_path(&g, (0, 0), (9, 0)).unwrap().unwrap();
        assert!(p.contains(&(5, 7)));
        let d = dijkstra(&g, (0, 0), (9, 0), EdgeCost::Unit).unwrap().unwrap().1;
        assert_eq!((p.len() - 1) as f64, d);
    }

    #[test]
    fn endpoints_are_checked() {
        let g = OccupancyGrid::from_mask(2, 2, &[true, false, false, false]).unwrap();
        assert!(matches!(bfs_path(&g, (0, 0), (1, 1)), Err(PlanError::Blocked("start"))));
        let g = OccupancyGrid::from_mask(3, 1, &[false, true, false]).unwrap();
        assert_eq!(bfs_path(&g, (0, 0), (2, 0)).unwrap(), None);
    }

    #[test]
    fn no_corner_cutting() {
        // Free diagonal between two occupied cells is not a passage.
        let g = OccupancyGrid::from_mask(2, 2, &[false, true, true, false]).unwrap();
        assert_eq!(bfs_path(&g, (0, 0), (1, 1)).unwrap(), None);
        assert!(!line_of_sight(&g, (0, 0), (1, 1)));
    }

    #[test]
    fn bresenham_endpoints_and_connectivity() {
        for (a, b) in [((0, 0), (7, 3)), ((5, 9), (1, 0)), ((2, 2), (2, 8)), ((4, 4), (4, 4))] {
            let line = bresenham(a, b);
            assert_eq!(line[0], a);
            assert_eq!(*line.last().unwrap(), b);
            for w in line.windows(2) {
                let dx = (w[0].0 as isize - w[1].0 as isize).abs();
                let dy = (w[0].1 as isize - w[1].1 as isize).abs();
                assert!(dx <= 1 && dy <= 1 && dx + dy > 0);
            }
        }
    }

    #[test]
    fn simplify_corridor_and_corner() {
        let g = empty(10);
        let corridor: Vec<Cell> = (0..10).map(|x| (x, 3)).collect();
        assert_eq!(los_simplify(&g, &corridor), vec![(0, 3), (9, 3)]);

        let n = 10;
        let mut mask = vec![false; n * n];
        for y in 1..n {
            for x in 0..n - 1 {
                mask[y * n + x] = true;
            }
        }
        let g = OccupancyGrid::from_mask(n, n, &mask).unwrap();
        let mut l: Vec<Cell> = (0..n).map(|x| (x, 0)).collect();
        l.extend((1..n).map(|y| (n - 1, y)));
        let s = los_simplify(&g, &l);
        assert_eq!(s, vec![(0, 0), (9, 0), (9, 9)]);
    }

    #[test]
    fn nearest_free_prefers_row_major() {
        let g = OccupancyGrid::from_mask(3, 3, &[false, true, false, true, true, true, false, true, false]).unwrap();
        assert_eq!(g.nearest_free((1, 1)), Some((0, 0)));
    }
}
