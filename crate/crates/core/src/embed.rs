//! Label and query embeddings.
//!
//! Synthetic embeddings are deterministic unit vectors derived from a hash
//! of `(seed, label)`. Externally computed vectors (for example real
//! CLIP text embeddings) can be imported from a text table:
//!
//! ```text
//! dim=<N>
//! <label>\t<v1>,<v2>,...,<vN>
//! ```
//!
//! Vectors are re-normalized on load.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MIN_DIM: usize = 8;
pub const DEFAULT_DIM: usize = 64;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding dimension must be at least {MIN_DIM}, got {0}")]
    DimTooSmall(usize),
    #[error("label must be non-empty")]
    EmptyLabel,
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("label `{0}` has a zero or non-finite vector")]
    Degenerate(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Synthetic { seed: u64 },
    Imported,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: BTreeMap<String, Vec<f64>>,
    provenance: Provenance,
}

/// A text query resolved to a unit vector.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEmbedding {
    pub text: String,
    pub vector: Vec<f64>,
}

fn normalize(v: &mut [f64]) -> Option<()> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(n.is_finite() && n > 0.0) {
        return None;
    }
    // Already unit up to rounding: leave the bits alone so saved tables
    // reload exactly.
    if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
        return Some(());
    }
    v.iter_mut().for_each(|x| *x /= n);
    Some(())
}

/// Deterministic pseudo-random unit vector for `label`.
pub fn synth_embedding(label: &str, dim: usize, seed: u64) -> Result<Vec<f64>, EmbedError> {
    if dim < MIN_DIM {
        return Err(EmbedError::DimTooSmall(dim));
    }
    if label.is_empty() {
        return Err(EmbedError::EmptyLabel);
    }
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let digest: [u8; 32] = h.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(digest);
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    normalize(&mut v).ok_or_else(|| EmbedError::Degenerate(label.to_string()))?;
    Ok(v)
}

pub fn similarity(a: &[f64], b: &[f64]) -> Result<f64, EmbedError> {
    if a.len() != b.len() {
        return Err(EmbedError::DimMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

impl EmbeddingTable {
    pub fn synthetic<S: AsRef<str>>(labels: &[S], dim: usize, seed: u64) -> Result<Self, EmbedError> {
        let mut entries = BTreeMap::new();
        for l in labels {
            let l = l.as_ref();
            if entries.contains_key(l) {
                return Err(EmbedError::DuplicateLabel(l.to_string()));
            }
            entries.insert(l.to_string(), synth_embedding(l, dim, seed)?);
        }
        Ok(Self {
            dim,
            entries,
            provenance: Provenance::Synthetic { seed },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn get(&self, label: &str) -> Option<&[f64]> {
        self.entries.get(label).map(Vec::as_slice)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Queries are restricted to the table's vocabulary.
    pub fn query(&self, text: &str) -> Result<QueryEmbedding, EmbedError> {
        let v = self
            .get(text)
            .ok_or_else(|| EmbedError::UnknownLabel(text.to_string()))?;
        Ok(QueryEmbedding {
            text: text.to_string(),
            vector: v.to_vec(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("dim={}\n", self.dim);
        for (label, v) in &self.entries {
            let vals: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
            out.push_str(label);
            out.push('\t');
            out.push_str(&vals.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, EmbedError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(EmbedError::Parse {
            line: 1,
            msg: "missing `dim=<N>` header".into(),
        })?;
        let dim: usize = header
            .trim()
            .strip_prefix("dim=")
            .and_then(|d| d.trim().parse().ok())
            .ok_or(EmbedError::Parse {
                line: 1,
                msg: "expected `dim=<N>`".into(),
            })?;
        if dim < MIN_DIM {
            return Err(EmbedError::DimTooSmall(dim));
        }
        let mut entries = BTreeMap::new();
        for (i, line) in lines {
            let line_no = i + 1;
            let (label, values) = line.split_once('\t').ok_or(EmbedError::Parse {
                line: line_no,
                msg: "expected `label<TAB>values`".into(),
            })?;
            if label.is_empty() {
                return Err(EmbedError::EmptyLabel);
            }
            let mut v = values
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| EmbedError::Parse {
                    line: line_no,
                    msg: e.to_string(),
                })?;
            if v.len() != dim {
                return Err(EmbedError::DimMismatch(dim, v.len()));
            }
            normalize(&mut v).ok_or_else(|| EmbedError::Degenerate(label.to_string()))?;
            if entries.insert(label.to_string(), v).is_some() {
                return Err(EmbedError::DuplicateLabel(label.to_string()));
            }
        }
        Ok(Self {
            dim,
            entries,
            provenance: Provenance::Imported,
        })
    }

    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        Self::from_text(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbedError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Loads an embedding table from disk.
pub fn load_table(path: &Path) -> Result<EmbeddingTable, EmbedError> {
    EmbeddingTable::load(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_deterministic_and_unit() {
        let a = synth_embedding("refrigerator", 64, 7).unwrap();
        let b = synth_embedding("refrigerator", 64, 7).unwrap();
        assert_eq!(a, b);
        let n: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
        assert_ne!(a, synth_embedding("refrigerator", 64, 8).unwrap());
    }

    #[test]
    fn small_dim_rejected() {
        assert!(matches!(synth_embedding("x", 4, 0), Err(EmbedError::DimTooSmall(4))));
        assert!(matches!(synth_embedding("", 16, 0), Err(EmbedError::EmptyLabel)));
    }

    #[test]
    fn distinct_labels_are_nearly_orthogonal() {
        let n = 1000;
        let mut total = 0.0;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let a = synth_embedding(&format!("label-a-{i}"), 64, 3).unwrap();
            let b = synth_embedding(&format!("label-b-{i}"), 64, 3).unwrap();
            let c = similarity(&a, &b).unwrap().abs();
            total += c;
            worst = worst.max(c);
        }
        // E|cos| for random 64-d directions is about sqrt(2 / (pi * 64)) ~ 0.1.
        assert!(total / n as f64 <= 0.15, "mean |cos| = {}", total / n as f64);
        assert!(worst < 0.5);
    }

    #[test]
    fn similarity_matches_naive_loop() {
        let a = synth_embedding("a", 32, 1).unwrap();
        let b = synth_embedding("b", 32, 1).unwrap();
        let mut naive = 0.0;
        for i in 0..32 {
            naive += a[i] * b[i];
        }
        assert!((similarity(&a, &b).unwrap() - naive).abs() < 1e-12);
        assert!((similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let mut e0 = vec![0.0; 8];
        let mut e1 = vec![0.0; 8];
        e0[0] = 1.0;
        e1[1] = 1.0;
        assert_eq!(similarity(&e0, &e1).unwrap(), 0.0);
        assert!(similarity(&e0, &a).is_err());
    }

    #[test]
    fn table_round_trip_is_bit_exact() {
        let t = EmbeddingTable::synthetic(&["sofa", "lamp", "wall"], 64, 11).unwrap();
        let back = EmbeddingTable::from_text(&t.to_text()).unwrap();
        assert_eq!(back.dim(), 64);
        for l in t.labels() {
            assert_eq!(t.get(l).unwrap(), back.get(l).unwrap());
        }
        assert_eq!(back.provenance(), Provenance::Imported);
    }

    #[test]
    fn load_rejects_bad_tables() {
        let row = |l: &str, v: f64| {
            let vals: Vec<String> = (0..512)
                .map(|i| if i == 0 { v.to_string() } else { "0.5".into() })
                .collect();
            format!("{l}\t{}\n", vals.join(","))
        };
        let ok = format!("dim=512\n{}{}{}", row("a", 1.0), row("b", 2.0), row("c", 3.0));
        let t = EmbeddingTable::from_text(&ok).unwrap();
        assert_eq!((t.dim(), t.len()), (512, 3));

        let dup = format!("dim=512\n{}{}", row("a", 1.0), row("a", 2.0));
        assert!(matches!(
            EmbeddingTable::from_text(&dup),
            Err(EmbedError::DuplicateLabel(_))
        ));

        let short = "dim=512\na\t1,2,3\n";
        assert!(matches!(
            EmbeddingTable::from_text(short),
            Err(EmbedError::DimMismatch(512, 3))
        ));

        let zeros: Vec<&str> = vec!["0"; 8];
        let zero = format!("dim=8\nz\t{}\n", zeros.join(","));
        assert!(matches!(
            EmbeddingTable::from_text(&zero),
            Err(EmbedError::Degenerate(_))
        ));
    }
}
