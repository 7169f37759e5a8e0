mod common;

use common::{planner_oracle, random_grid, rng};
use rand::Rng;
use semfield::plan::{bfs_path, bresenham, dijkstra, grid_plan, line_of_sight, EdgeCost, OccupancyGrid, Target};

#[test]
fn grid_plan_matches_dijkstra_oracles() {
    let r = planner_oracle(50);
    assert_eq!(r.hop_mismatches, 0);
    assert!(r.connected >= 25, "only {} connected pairs", r.connected);
    assert!(r.worst_ratio <= 1.10, "smoothed/octile ratio {}", r.worst_ratio);
}

#[test]
fn planned_segments_stay_in_free_cells() {
    for seed in 0..20 {
        let grid = random_grid(seed);
        let mut r = rng(seed);
        let cells: Vec<_> = (0..grid.nx * grid.ny)
            .map(|k| grid.cell_at(k))
            .filter(|c| grid.is_free(*c))
            .collect();
        let s = cells[r.gen_range(0..cells.len())];
        let t = cells[r.gen_range(0..cells.len())];
        let Ok(path) = grid_plan(&grid, None, grid.center(s), Target::Goal(grid.center(t))) else {
            continue;
        };
        for w in path.waypoints.windows(2) {
            let a = grid.cell_of(w[0]).unwrap();
            let b = grid.cell_of(w[1]).unwrap();
            assert!(
                line_of_sight(&grid, a, b),
                "seed {seed}: segment {a:?} -> {b:?} crosses an obstacle"
            );
        }
    }
}

#[test]
fn disconnected_goal_is_reported_as_no_path() {
    let mut mask = vec![false; 10 * 10];
    for y in 0..10 {
        mask[y * 10 + 5] = true;
    }
    let grid = OccupancyGrid::from_mask(10, 10, &mask).unwrap();
    assert_eq!(bfs_path(&grid, (1, 1), (8, 8)).unwrap(), None);
    assert!(dijkstra(&grid, (1, 1), (8, 8), EdgeCost::Octile).unwrap().is_none());
    let err = grid_plan(&grid, None, [1.5, 1.5], Target::Goal([8.5, 8.5])).unwrap_err();
    assert!(err.is_no_path());
}

#[test]
fn bresenham_endpoints_and_connectivity() {
    let mut r = rng(3);
    for _ in 0..200 {
        let a = (r.gen_range(0..40), r.gen_range(0..40));
        let b = (r.gen_range(0..40), r.gen_range(0..40));
        let line = bresenham(a, b);
        assert_eq!(line[0], a);
        assert_eq!(*line.last().unwrap(), b);
        let dx = (a.0 as i64 - b.0 as i64).abs();
        let dy = (a.1 as i64 - b.1 as i64).abs();
        assert_eq!(line.len() as i64, dx.max(dy) + 1);
        for w in line.windows(2) {
            assert!((w[0].0 as i64 - w[1].0 as i64).abs() <= 1 && (w[0].1 as i64 - w[1].1 as i64).abs() <= 1);
        }
    }
}
