//! The joint affordance + semantic coordinate network.
//!
//! `p -> encode -> [Linear, ReLU] x layers -> { sdf head, semantic head }`.
//! The semantic head output is L2-normalized so its dot product with a
//! unit query embedding is a cosine similarity.
//!
//! Checkpoint layout (little-endian):
//!
//! ```text
//! magic          8 bytes  "SFCKPT01"
//! input_dim      u32
//! fourier_bands  u32
//! layers         u32
//! width          u32
//! sem_dim        u32
//! seed           u64
//! bounds_min     f64 x input_dim
//! bounds_max     f64 x input_dim
//! sdf_bias_corr  f64
//! param_count    u64
//! params         f64 x param_count   (trunk.0.weight, trunk.0.bias, ...,
//!                                     sdf.weight, sdf.bias, sem.weight, sem.bias)
//! ```

use std::f64::consts::PI;
use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autograd::{AutogradError, Graph, Param, Tensor, Var};
use crate::scenegen::Bounds;

const MAGIC: &[u8; 8] = b"SFCKPT01";

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid field config: {0}")]
    Config(String),
    #[error("parameter `{0}` holds non-finite values")]
    NonFinite(String),
    #[error("expected points with {expected} coordinates, got {got}")]
    PointDim { expected: usize, got: usize },
    #[error("checkpoint config does not match: {0}")]
    ConfigMismatch(String),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Autograd(#[from] AutogradError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldConfig {
    pub input_dim: usize,
    pub fourier_bands: usize,
    pub layers: usize,
    pub width: usize,
    pub sem_dim: usize,
    pub seed: u64,
    /// Region mapped onto `[-1, 1]` by the encoding; first `input_dim`
    /// entries of each corner are used.
    pub bounds_min: Vec<f64>,
    pub bounds_max: Vec<f64>,
}

impl FieldConfig {
    pub fn for_bounds(input_dim: usize, bounds: &Bounds, sem_dim: usize, seed: u64) -> Self {
        Self {
            input_dim,
            fourier_bands: 4,
            layers: 3,
            width: 128,
            sem_dim,
            seed,
            bounds_min: bounds.min.as_slice()[..input_dim].to_vec(),
            bounds_max: bounds.max.as_slice()[..input_dim].to_vec(),
        }
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        let err = |m: &str| Err(FieldError::Config(m.to_string()));
        if self.input_dim != 2 && self.input_dim != 3 {
            return err("input_dim must be 2 or 3");
        }
        if self.layers < 1 {
            return err("layers must be >= 1");
        }
        if self.width < 16 {
            return err("width must be >= 16");
        }
        if self.sem_dim < crate::embed::MIN_DIM {
            return err("sem_dim below the minimum embedding dimension");
        }
        if self.bounds_min.len() != self.input_dim || self.bounds_max.len() != self.input_dim {
            return err("bounds must have input_dim coordinates");
        }
        if self
            .bounds_min
            .iter()
            .zip(&self.bounds_max)
            .any(|(lo, hi)| !(hi - lo > 0.0))
        {
            return err("bounds must have positive extent");
        }
        Ok(())
    }

    pub fn encoded_dim(&self) -> usize {
        self.input_dim * (1 + 2 * self.fourier_bands)
    }

    /// `(name, shape)` of every parameter tensor in storage order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut fan_in = self.encoded_dim();
        for i in 0..self.layers {
            out.push((format!("trunk.{i}.weight"), vec![fan_in, self.width]));
            out.push((format!("trunk.{i}.bias"), vec![self.width]));
            fan_in = self.width;
        }
        out.push(("sdf.weight".into(), vec![self.width, 1]));
        out.push(("sdf.bias".into(), vec![1]));
        out.push(("sem.weight".into(), vec![self.width, self.sem_dim]));
        out.push(("sem.bias".into(), vec![self.sem_dim]));
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }

    fn center_and_inv_half(&self) -> (Vec<f64>, Vec<f64>) {
        let c = self
            .bounds_min
            .iter()
            .zip(&self.bounds_max)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect();
        let s = self
            .bounds_min
            .iter()
            .zip(&self.bounds_max)
            .map(|(lo, hi)| 2.0 / (hi - lo))
            .collect();
        (c, s)
    }
}

/// Positional encoding of one point: the point normalized to `[-1, 1]`
/// followed by `sin(2^k pi x), cos(2^k pi x)` for each band `k`.
pub fn encode(config: &FieldConfig, p: &[f64]) -> Vec<f64> {
    let (c, s) = config.center_and_inv_half();
    let pn: Vec<f64> = p.iter().zip(c.iter().zip(&s)).map(|(x, (c, s))| (x - c) * s).collect();
    let mut out = pn.clone();
    for k in 0..config.fourier_bands {
        let f = (1u64 << k) as f64 * PI;
        out.extend(pn.iter().map(|x| (f * x).sin()));
        out.extend(pn.iter().map(|x| (f * x).cos()));
    }
    out
}

/// Graph version of [`encode`] for an `N x D` matrix of points.
pub fn encode_graph(g: &mut Graph, config: &FieldConfig, points: Var) -> Result<Var, FieldError> {
    let (c, s) = config.center_and_inv_half();
    let shift: Vec<f64> = c.iter().zip(&s).map(|(c, s)| -c * s).collect();
    let sv = g.constant(Tensor::vector(s))?;
    let shv = g.constant(Tensor::vector(shift))?;
    let scaled = g.mul_row(points, sv)?;
    let pn = g.add_row(scaled, shv)?;
    let mut parts = vec![pn];
    for k in 0..config.fourier_bands {
        let z = g.scale(pn, (1u64 << k) as f64 * PI);
        parts.push(g.sin(z));
        parts.push(g.cos(z));
    }
    if parts.len() == 1 {
        return Ok(pn);
    }
    Ok(g.concat_cols(&parts)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldModel {
    pub config: FieldConfig,
    pub params: Vec<Param>,
    /// Added to every SDF output at query time.
    pub sdf_bias_correction: f64,
}

/// Result of a batched query.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldOutput {
    pub sdf: Vec<f64>,
    /// `N x sem_dim`, row-major, unit rows.
    pub sem: Vec<f64>,
    pub sem_dim: usize,
}

impl FieldOutput {
    pub fn sem_row(&self, i: usize) -> &[f64] {
        &self.sem[i * self.sem_dim..(i + 1) * self.sem_dim]
    }

    pub fn len(&self) -> usize {
        self.sdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sdf.is_empty()
    }
}

impl FieldModel {
    pub fn new(config: FieldConfig) -> Result<Self, FieldError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = config
            .param_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let data = if name.ends_with("weight") {
                    let fan_in = shape[0] as f64;
                    // He-uniform for ReLU layers, LeCun-uniform for the heads.
                    let bound = if name.starts_with("trunk") {
                        (6.0 / fan_in).sqrt()
                    } else {
                        (3.0 / fan_in).sqrt()
                    };
                    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
                } else {
                    vec![0.0; n]
                };
                Param::new(name, Tensor::new(shape, data).expect("shape matches"))
            })
            .collect();
        Ok(Self {
            config,
            params,
            sdf_bias_correction: 0.0,
        })
    }

    pub fn check_finite(&self) -> Result<(), FieldError> {
        match self.params.iter().find(|p| !p.value.is_finite()) {
            Some(p) => Err(FieldError::NonFinite(p.name.clone())),
            None => Ok(()),
        }
    }

    /// Adds the parameters to `g`, tracked or not.
    pub fn param_vars(&self, g: &mut Graph, trainable: bool) -> Result<Vec<Var>, FieldError> {
        self.params
            .iter()
            .map(|p| {
                let t = p.value.clone();
                Ok(if trainable { g.param(t)? } else { g.constant(t)? })
            })
            .collect()
    }

    /// Forward pass on a graph. Returns the raw SDF column (`N`, without
    /// the bias correction) and the normalized semantic rows (`N x D_e`).
    pub fn forward(&self, g: &mut Graph, params: &[Var], points: Var) -> Result<(Var, Var), FieldError> {
        let n = match g.value(points).dims2() {
            Some((n, d)) if d == self.config.input_dim => n,
            Some((_, d)) => {
                return Err(FieldError::PointDim {
                    expected: self.config.input_dim,
                    got: d,
                })
            }
            None => return Err(FieldError::Config("points must be an N x D matrix".into())),
        };
        let mut h = encode_graph(g, &self.config, points)?;
        let layers = self.config.layers;
        for i in 0..layers {
            let z = g.matmul(h, params[2 * i])?;
            let z = g.add_row(z, params[2 * i + 1])?;
            h = g.relu(z);
        }
        let base = 2 * layers;
        let sdf = g.matmul(h, params[base])?;
        let sdf = g.add_row(sdf, params[base + 1])?;
        let sdf = g.reshape(sdf, &[n])?;
        let sem = g.matmul(h, params[base + 2])?;
        let sem = g.add_row(sem, params[base + 3])?;
        let norm = g.l2norm(sem);
        let inv = g.recip(norm);
        let sem = g.mul_col(sem, inv)?;
        Ok((sdf, sem))
    }

    /// Batched query of `N` points given as a flat row-major `N x D` slice.
    pub fn query_batch(&self, points: &[f64]) -> Result<FieldOutput, FieldError> {
        self.check_finite()?;
        let d = self.config.input_dim;
        if !points.len().is_multiple_of(d) {
            return Err(FieldError::PointDim {
                expected: d,
                got: points.len() % d,
            });
        }
        let n = points.len() / d;
        if n == 0 {
            return Ok(FieldOutput {
                sdf: Vec::new(),
                sem: Vec::new(),
                sem_dim: self.config.sem_dim,
            });
        }
        let mut g = Graph::new();
        let pv = self.param_vars(&mut g, false)?;
        let x = g.constant(Tensor::matrix(n, d, points.to_vec())?)?;
        let (sdf, sem) = self.forward(&mut g, &pv, x)?;
        Ok(FieldOutput {
            sdf: g
                .value(sdf)
                .data()
                .iter()
                .map(|v| v + self.sdf_bias_correction)
                .collect(),
            sem: g.value(sem).data().to_vec(),
            sem_dim: self.config.sem_dim,
        })
    }

    /// Large batches evaluated in fixed-size chunks.
    pub fn query_many(&self, points: &[f64]) -> Result<FieldOutput, FieldError> {
        const CHUNK: usize = 4096;
        let d = self.config.input_dim;
        let mut out = FieldOutput {
            sdf: Vec::with_capacity(points.len() / d),
            sem: Vec::with_capacity(points.len() / d * self.config.sem_dim),
            sem_dim: self.config.sem_dim,
        };
        for chunk in points.chunks(CHUNK * d) {
            let part = self.query_batch(chunk)?;
            out.sdf.extend(part.sdf);
            out.sem.extend(part.sem);
        }
        Ok(out)
    }

    /// SDF (meters, including the bias correction) and unit semantic vector
    /// at one point.
    pub fn query(&self, p: &[f64]) -> Result<(f64, Vec<f64>), FieldError> {
        if p.len() != self.config.input_dim {
            return Err(FieldError::PointDim {
                expected: self.config.input_dim,
                got: p.len(),
            });
        }
        let out = self.query_batch(p)?;
        Ok((out.sdf[0], out.sem))
    }

    pub fn set_bias_correction(&mut self, meters: f64) -> Result<(), FieldError> {
        if !(meters >= 0.0 && meters.is_finite()) {
            return Err(FieldError::Config(
                "sdf bias correction must be finite and non-negative".into(),
            ));
        }
        self.sdf_bias_correction = meters;
        Ok(())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), FieldError> {
        let c = &self.config;
        w.write_all(MAGIC)?;
        for v in [c.input_dim, c.fourier_bands, c.layers, c.width, c.sem_dim] {
            w.write_u32::<LittleEndian>(v as u32)?;
        }
        w.write_u64::<LittleEndian>(c.seed)?;
        for v in c.bounds_min.iter().chain(&c.bounds_max) {
            w.write_f64::<LittleEndian>(*v)?;
        }
        w.write_f64::<LittleEndian>(self.sdf_bias_correction)?;
        w.write_u64::<LittleEndian>(c.param_count() as u64)?;
        for p in &self.params {
            for v in p.value.data() {
                w.write_f64::<LittleEndian>(*v)?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Parses a checkpoint. When `expected` is given, the embedded config
    /// must match it exactly.
    pub fn from_bytes(bytes: &[u8], expected: Option<&FieldConfig>) -> Result<Self, FieldError> {
        let corrupt = |e: std::io::Error| FieldError::Corrupt(e.to_string());
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(corrupt)?;
        if &magic != MAGIC {
            return Err(FieldError::Corrupt("bad magic".into()));
        }
        let mut dims = [0usize; 5];
        for d in dims.iter_mut() {
            *d = r.read_u32::<LittleEndian>().map_err(corrupt)? as usize;
        }
        let seed = r.read_u64::<LittleEndian>().map_err(corrupt)?;
        let input_dim = dims[0];
        if input_dim != 2 && input_dim != 3 {
            return Err(FieldError::Corrupt(format!("input_dim {input_dim}")));
        }
        let mut bounds = vec![0.0; 2 * input_dim];
        r.read_f64_into::<LittleEndian>(&mut bounds).map_err(corrupt)?;
        let config = FieldConfig {
            input_dim,
            fourier_bands: dims[1],
            layers: dims[2],
            width: dims[3],
            sem_dim: dims[4],
            seed,
            bounds_min: bounds[..input_dim].to_vec(),
            bounds_max: bounds[input_dim..].to_vec(),
        };
        config.validate().map_err(|e| FieldError::Corrupt(e.to_string()))?;
        if let Some(exp) = expected {
            if exp != &config {
                return Err(FieldError::ConfigMismatch(format!(
                    "file has {config:?}, expected {exp:?}"
                )));
            }
        }
        let correction = r.read_f64::<LittleEndian>().map_err(corrupt)?;
        let count = r.read_u64::<LittleEndian>().map_err(corrupt)? as usize;
        if count != config.param_count() {
            return Err(FieldError::Corrupt(format!(
                "parameter count {count} does not match config ({})",
                config.param_count()
            )));
        }
        let remaining = bytes.len() - r.position() as usize;
        if remaining != count * 8 {
            return Err(FieldError::Corrupt(format!(
                "expected {} parameter bytes, found {remaining}",
                count * 8
            )));
        }
        let mut params = Vec::new();
        for (name, shape) in config.param_shapes() {
            let n: usize = shape.iter().product();
            let mut data = vec![0.0; n];
            r.read_f64_into::<LittleEndian>(&mut data).map_err(corrupt)?;
            params.push(Param::new(name, Tensor::new(shape, data)?));
        }
        let mut model = Self {
            config,
            params,
            sdf_bias_correction: 0.0,
        };
        model
            .set_bias_correction(correction)
            .map_err(|e| FieldError::Corrupt(e.to_string()))?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), FieldError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path, expected: Option<&FieldConfig>) -> Result<Self, FieldError> {
        Self::from_bytes(&fs::read(path)?, expected)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::bundled;
    use approx::assert_abs_diff_eq;

    fn small() -> FieldModel {
        let mut c = FieldConfig::for_bounds(2, &bundled::rooms().bounds, 16, 3);
        c.width = 16;
        c.layers = 2;
        FieldModel::new(c).unwrap()
    }

    #[test]
    fn encoding_normalizes_bounds_to_unit_box() {
        let c = FieldConfig::for_bounds(2, &bundled::rooms().bounds, 16, 0);
        let lo = encode(&c, &c.bounds_min);
        let hi = encode(&c, &c.bounds_max);
        assert_eq!(lo.len(), c.encoded_dim());
        assert_abs_diff_eq!(lo[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hi[1], 1.0, epsilon = 1e-12);
        // sin(pi * +-1) vanishes on the first band.
        assert_abs_diff_eq!(lo[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn batch_and_single_queries_agree() {
        let m = small();
        let pts = [0.5, 0.5, 3.0, 2.0, 7.5, 4.25];
        let batch = m.query_batch(&pts).unwrap();
        for i in 0..3 {
            let (d, s) = m.query(&pts[2 * i..2 * i + 2]).unwrap();
            assert_abs_diff_eq!(d, batch.sdf[i], epsilon = 1e-12);
            assert_abs_diff_eq!(s.iter().map(|v| v * v).sum::<f64>(), 1.0, epsilon = 1e-9);
            assert_eq!(s.as_slice(), batch.sem_row(i));
        }
        assert!(matches!(m.query(&[1.0]), Err(FieldError::PointDim { .. })));
    }

    #[test]
    fn bias_correction_shifts_sdf_only() {
        let mut m = small();
        let (d0, s0) = m.query(&[1.0, 1.0]).unwrap();
        m.set_bias_correction(0.1).unwrap();
        let (d1, s1) = m.query(&[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(d1 - d0, 0.1, epsilon = 1e-12);
        assert_eq!(s0, s1);
        assert!(m.set_bias_correction(-0.1).is_err());
        assert!(m.set_bias_correction(f64::NAN).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let m = small();
        let bytes = m.to_bytes();
        let back = FieldModel::from_bytes(&bytes, Some(&m.config)).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        let p = [2.0, 3.0];
        assert_eq!(m.query(&p).unwrap(), back.query(&p).unwrap());

        let mut other = m.config.clone();
        other.width = 32;
        assert!(matches!(
            FieldModel::from_bytes(&bytes, Some(&other)),
            Err(FieldError::ConfigMismatch(_))
        ));
        assert!(FieldModel::from_bytes(&bytes[..bytes.len() - 3], None).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(FieldModel::from_bytes(&bad, None).is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = FieldConfig::for_bounds(2, &bundled::rooms().bounds, 16, 0);
        let mut c = base.clone();
        c.input_dim = 4;
        assert!(FieldModel::new(c).is_err());
        let mut c = base.clone();
        c.width = 4;
        assert!(FieldModel::new(c).is_err());
        let mut c = base;
        c.bounds_max[0] = c.bounds_min[0];
        assert!(FieldModel::new(c).is_err());
    }

    #[test]
    fn same_seed_same_weights() {
        assert_eq!(small().to_bytes(), small().to_bytes());
    }
}
