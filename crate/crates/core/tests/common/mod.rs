#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semfield::autograd::{Graph, Tensor, Var};

pub const FD_STEP: f64 = 1e-6;
pub const FD_TOL: f64 = 1e-4;

/// Norm-wise relative error `|a - n| / max(|a|, |n|)`, 0 when both
/// gradients vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied()).max(norm(&mut numeric.iter().copied()));
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}

/// Reduces `out` to a scalar with fixed pseudo-random weights so that every
/// output element contributes a distinct amount.
fn weighted_sum(g: &mut Graph, out: Var) -> Var {
    let t = g.value(out).clone();
    if t.rank() == 0 {
        return out;
    }
    let w: Vec<f64> = (0..t.len()).map(|i| 0.3 + ((i * 7919) % 13) as f64 / 10.0).collect();
    let w = g.constant(Tensor::new(t.shape().to_vec(), w).unwrap()).unwrap();
    let p = g.mul(out, w).unwrap();
    g.sum(p)
}

/// Largest relative error between backprop and central differences of
/// `f` over all of `inputs`.
pub fn gradcheck<F>(inputs: &[Tensor], f: F) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let eval = |vals: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|t| g.param(t.clone()).unwrap()).collect();
        let out = f(&mut g, &vars);
        let s = weighted_sum(&mut g, out);
        g.value(s).item().unwrap()
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone()).unwrap()).collect();
    let out = f(&mut g, &vars);
    let s = weighted_sum(&mut g, out);
    g.backward(s).unwrap();
    let mut worst: f64 = 0.0;
    for (k, v) in vars.iter().enumerate() {
        let analytic = g
            .grad(*v)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; inputs[k].len()]);
        let numeric: Vec<f64> = (0..inputs[k].len())
            .map(|i| {
                let mut plus = inputs.to_vec();
                plus[k].data_mut()[i] += FD_STEP;
                let mut minus = inputs.to_vec();
                minus[k].data_mut()[i] -= FD_STEP;
                (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP)
            })
            .collect();
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

/// Uniform entries in `[-1, 1]`, pushed at least `gap` away from zero.
pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], gap: f64) -> Tensor {
    let n = shape.iter().product::<usize>().max(1);
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(-1.0..1.0);
            v.signum() * (gap + v.abs())
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

type OpCase = (
    &'static str,
    Vec<Vec<usize>>,
    f64,
    Box<dyn Fn(&mut Graph, &[Var]) -> Var>,
);

/// One case per differentiable op: name, input shapes, minimum distance of
/// inputs from zero, and the function under test.
pub fn op_cases() -> Vec<OpCase> {
    let m = vec![3, 4];
    vec![
        (
            "matmul",
            vec![vec![3, 4], vec![4, 2]],
            0.0,
            Box::new(|g: &mut Graph, v: &[Var]| g.matmul(v[0], v[1]).unwrap()),
        ),
        (
            "add",
            vec![m.clone(), m.clone()],
            0.0,
            Box::new(|g: &mut Graph, v: &[Var]| g.add(v[0], v[1]).unwrap()),
        ),
        (
            "sub",
            vec![m.clone(), m.clone()],
            0.0,
            Box::new(|g: &mut Graph, v: &[Var]| g.sub(v[0], v[1]).unwrap()),
        ),
        (
            "mul",
            vec![m.clone(), m.clone()],
            0.0,
            Box::new(|g: &mut Graph, v: &[Var]| g.mul(v[0], v[1]).unwrap()),
        ),
        (
            "add_row",
            vec![m.clone(), vec![4]],
            0.0,
            Box::new(|g: &mut Graph, v: &[Var]| g.add_row(v[0], v[1]).unwrap()),
        ),
        (
            "mul_row",
            vec![m.clone(), vec![4]],
            0.0,
            Box::new(|g: &mut Graph, v: &[Var]| g.mul_row(v[0], v[1]).unwrap()),
        ),
        (
            "mul_col",
            vec![m.clone(), vec![3]],
            0.0,
            Box::new(|g: &mut Graph, v: &[Var]| g.mul_col(v[0], v[1]).unwrap()),
        ),
        (
            "scale",
            vec![m.clone()],
            0.0,
            Box::new(|g: &mut Graph, v: &[Var]| g.scale(v[0], -1.7)),
        ),
        (
            "add_scalar",
            vec![m.clone()],
            0.0,
            Box::new(|g: &mut Graph, v: &[Var]| g.add_scalar(v[0], 0.4)),
        ),
        (
            "relu",
            vec![m.clone()],
            0.05,
            Box::new(|g: &mut Graph, v: &[Var]| g.relu(v[0])),
        ),
        (
            "sin",
            vec![m.clone()],
            0.0,
            Box::new(|g: &mut Graph, v: &[Var]| g.sin(v[0])),
        ),
        (
            "cos",
            vec![m.clone()],
            0.0,
            Box::new(|g: &mut Graph, v: &[Var]| g.cos(v[0])),
        ),
        (
            "abs",
            vec![m.clone()],
            0.05,
            Box::new(|g: &mut Graph, v: &[Var]| g.abs(v[0])),
        ),
        (
            "recip",
            vec![m.clone()],
            0.5,
            Box::new(|g: &mut Graph, v: &[Var]| g.recip(v[0])),
        ),
        (
            "clamp",
            vec![m.clone()],
            0.05,
            Box::new(|g: &mut Graph, v: &[Var]| g.clamp(v[0], -0.8, 0.0)),
        ),
        (
            "l2norm",
            vec![m.clone()],
            0.0,
            Box::new(|g: &mut Graph, v: &[Var]| g.l2norm(v[0])),
        ),
        (
            "dot",
            vec![vec![5], vec![5]],
            0.0,
            Box::new(|g: &mut Graph, v: &[Var]| g.dot(v[0], v[1]).unwrap()),
        ),
        (
            "softmax",
            vec![m.clone()],
            0.0,
            Box::new(|g: &mut Graph, v: &[Var]| g.softmax(v[0]).unwrap()),
        ),
        (
            "logsumexp",
            vec![m.clone()],
            0.0,
            Box::new(|g: &mut Graph, v: &[Var]| g.logsumexp(v[0]).unwrap()),
        ),
        (
            "mse",
            vec![m.clone(), m.clone()],
            0.0,
            Box::new(|g: &mut Graph, v: &[Var]| g.mse(v[0], v[1]).unwrap()),
        ),
        (
            "cross_entropy",
            vec![m.clone()],
            0.0,
            Box::new(|g: &mut Graph, v: &[Var]| g.cross_entropy(v[0], &[1, 3, 0]).unwrap()),
        ),
        (
            "sum",
            vec![m.clone()],
            0.0,
            Box::new(|g: &mut Graph, v: &[Var]| g.sum(v[0])),
        ),
        (
            "mean",
            vec![m.clone()],
            0.0,
            Box::new(|g: &mut Graph, v: &[Var]| g.mean(v[0])),
        ),
        (
            "transpose",
            vec![m.clone()],
            0.0,
            Box::new(|g: &mut Graph, v: &[Var]| g.transpose(v[0]).unwrap()),
        ),
        (
            "reshape",
            vec![m.clone()],
            0.0,
            Box::new(|g: &mut Graph, v: &[Var]| g.reshape(v[0], &[2, 6]).unwrap()),
        ),
        (
            "slice_rows",
            vec![m.clone()],
            0.0,
            Box::new(|g: &mut Graph, v: &[Var]| g.slice_rows(v[0], 1, 3).unwrap()),
        ),
        (
            "concat_rows",
            vec![m.clone(), vec![2, 4]],
            0.0,
            Box::new(|g: &mut Graph, v: &[Var]| g.concat_rows(&[v[0], v[1]]).unwrap()),
        ),
        (
            "concat_cols",
            vec![m.clone(), vec![3, 2]],
            0.0,
            Box::new(|g: &mut Graph, v: &[Var]| g.concat_cols(&[v[0], v[1]]).unwrap()),
        ),
        (
            "pick_rows",
            vec![m.clone()],
            0.0,
            Box::new(|g: &mut Graph, v: &[Var]| g.pick_rows(v[0], &[2, 2, 0]).unwrap()),
        ),
        (
            "gather",
            vec![vec![6]],
            0.0,
            Box::new(|g: &mut Graph, v: &[Var]| g.gather(v[0], &[5, 0, 0, 3]).unwrap()),
        ),
    ]
}

/// Worst relative error of every op over `seeds`, as `(op, error)`.
pub fn op_errors(seeds: std::ops::Range<u64>) -> Vec<(&'static str, f64)> {
    op_cases()
        .into_iter()
        .map(|(name, shapes, gap, f)| {
            let worst = seeds
                .clone()
                .map(|seed| {
                    let mut r = rng(seed);
                    let inputs: Vec<Tensor> = shapes.iter().map(|s| random_tensor(&mut r, s, gap)).collect();
                    gradcheck(&inputs, &f)
                })
                .fold(0.0, f64::max);
            (name, worst)
        })
        .collect()
}

/// Relative error of the gradient of the full training loss with respect
/// to every parameter of a small field, on a batch drawn with `seed`.
pub fn training_loss_error(seed: u64) -> f64 {
    use semfield::field::{FieldConfig, FieldModel};
    use semfield::scenegen::{bundled, capture, CaptureConfig};
    use semfield::train::{loss_total, sample_batch, LabelEmbeddings, TrainConfig};

    let scene = bundled::rooms();
    let frames = capture(
        &scene,
        &CaptureConfig {
            frames: 4,
            width: 33,
            seed,
            ..CaptureConfig::default()
        },
    )
    .unwrap();
    let table = semfield::embed::EmbeddingTable::synthetic(&scene.labels(), 8, seed).unwrap();
    let labels = LabelEmbeddings::new(&scene.labels(), &table).unwrap();
    let mut fc = FieldConfig::for_bounds(2, &scene.bounds, 8, seed);
    fc.width = 16;
    fc.layers = 2;
    let model = FieldModel::new(fc).unwrap();
    let config = TrainConfig {
        batch_size: 32,
        frames_per_batch: 2,
        samples_per_ray: 2,
        seed,
        ..TrainConfig::default()
    };
    let batch = sample_batch(&frames, &labels, &config, &mut rng(seed)).unwrap();
    let loss_at = |params: &[semfield::autograd::Param]| -> f64 {
        let mut m = model.clone();
        m.params = params.to_vec();
        let mut g = Graph::new();
        let pv = m.param_vars(&mut g, false).unwrap();
        let t = loss_total(&mut g, &m, &pv, &batch, &config).unwrap();
        g.value(t.total).item().unwrap()
    };
    let mut g = Graph::new();
    let pv = model.param_vars(&mut g, true).unwrap();
    let t = loss_total(&mut g, &model, &pv, &batch, &config).unwrap();
    g.backward(t.total).unwrap();
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (k, v) in pv.iter().enumerate() {
        analytic.extend_from_slice(g.grad(*v).unwrap());
        for i in 0..model.params[k].value.len() {
            let mut plus = model.params.clone();
            plus[k].value.data_mut()[i] += FD_STEP;
            let mut minus = model.params.clone();
            minus[k].value.data_mut()[i] -= FD_STEP;
            numeric.push((loss_at(&plus) - loss_at(&minus)) / (2.0 * FD_STEP));
        }
    }
    relative_error(&analytic, &numeric)
}

/// Random 64 x 64 test grid: scattered single cells plus a few walls.
pub fn random_grid(seed: u64) -> semfield::plan::OccupancyGrid {
    let n = 64;
    let mut r = rng(seed);
    let mut mask: Vec<bool> = (0..n * n).map(|_| r.gen_bool(0.15)).collect();
    for _ in 0..6 {
        let (x0, y0) = (r.gen_range(0..n), r.gen_range(0..n));
        let horizontal = r.gen_bool(0.5);
        for k in 0..r.gen_range(8..40) {
            let (x, y) = if horizontal { (x0 + k, y0) } else { (x0, y0 + k) };
            if x < n && y < n {
                mask[y * n + x] = true;
            }
        }
    }
    semfield::plan::OccupancyGrid::from_mask(n, n, &mask).unwrap()
}

pub struct OracleResult {
    pub grids: usize,
    pub connected: usize,
    pub hop_mismatches: usize,
    /// Largest smoothed-path length over octile Dijkstra cost.
    pub worst_ratio: f64,
}

/// Compares `grid_plan` with unit and octile Dijkstra on random grids with
/// random free endpoints.
pub fn planner_oracle(grids: u64) -> OracleResult {
    use semfield::plan::{bfs_path, dijkstra, grid_plan, EdgeCost, Target};
    let mut out = OracleResult {
        grids: grids as usize,
        connected: 0,
        hop_mismatches: 0,
        worst_ratio: 0.0,
    };
    for seed in 0..grids {
        let grid = random_grid(seed);
        let mut r = rng(1000 + seed);
        let mut free_cell = || loop {
            let c = (r.gen_range(0..grid.nx), r.gen_range(0..grid.ny));
            if grid.is_free(c) {
                return c;
            }
        };
        let (s, t) = (free_cell(), free_cell());
        let hops = bfs_path(&grid, s, t).unwrap().map(|p| p.len() - 1);
        let unit = dijkstra(&grid, s, t, EdgeCost::Unit).unwrap().map(|(_, c)| c);
        if hops.map(|h| h as f64) != unit {
            out.hop_mismatches += 1;
        }
        let Some((_, octile)) = dijkstra(&grid, s, t, EdgeCost::Octile).unwrap() else {
            continue;
        };
        out.connected += 1;
        let path = grid_plan(&grid, None, grid.center(s), Target::Goal(grid.center(t))).unwrap();
        if octile > 0.0 {
            out.worst_ratio = out.worst_ratio.max(path.length / (octile * grid.cell_size));
        }
    }
    out
}
