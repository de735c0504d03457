//! Feature extraction, pair scoring and the feature file formats.
//!
//! CSV: header `id,label,f0,...,f{D-1}`, one sample per line, floats in
//! shortest round-trip form.
//!
//! Binary, little-endian: magic `ADMLFEAT`, u32 rows, u32 dim, `rows` u32
//! labels, then `rows·dim` f64 values row-major. Ids are the row numbers.

use std::fmt::Write as _;
use std::path::Path;

use crate::dataio::{hflip, Dataset, PairList};
use crate::error::{Error, Result};
use crate::netopt::NetworkState;
use crate::numcore::matrix::{dot, norm};
use crate::numcore::{Matrix, NORM_EPS};

pub const FEATURE_MAGIC: &[u8; 8] = b"ADMLFEAT";

/// Embeds every sample of `ds`; with `flip_merge` the embedding of the
/// mirrored image is added to it.
pub fn extract_features(net: &NetworkState, ds: &Dataset, flip_merge: bool) -> Result<Matrix> {
    let (mut features, _) = net.forward(&ds.samples)?;
    if flip_merge {
        let shape = ds
            .image_shape
            .ok_or_else(|| Error::contract("flip-merge needs an image dataset"))?;
        let (mirrored, _) = net.forward(&hflip(&ds.samples, shape)?)?;
        features.axpy(1.0, &mirrored)?;
    }
    Ok(features)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let denom = norm(a).max(NORM_EPS) * norm(b).max(NORM_EPS);
    (dot(a, b) / denom).clamp(-1.0, 1.0)
}

/// Cosine similarity of every listed pair of feature rows.
pub fn pair_scores(features: &Matrix, pairs: &PairList) -> Result<Vec<f64>> {
    pairs
        .entries
        .iter()
        .enumerate()
        .map(|(k, p)| {
            if p.a >= features.rows() || p.b >= features.rows() {
                return Err(Error::contract(format!(
                    "pair {k} ({}, {}) out of range for {} samples",
                    p.a,
                    p.b,
                    features.rows()
                )));
            }
            Ok(cosine(features.row(p.a), features.row(p.b)))
        })
        .collect()
}

/// Features with their sample ids and labels, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub ids: Vec<u64>,
    pub labels: Vec<usize>,
    pub features: Matrix,
}

impl FeatureTable {
    pub fn new(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::shape(
                "FeatureTable::new",
                format!("{} labels for {} rows", labels.len(), features.rows()),
            ));
        }
        Ok(FeatureTable {
            ids: (0..features.rows() as u64).collect(),
            labels,
            features,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,label");
        for j in 0..self.features.cols() {
            let _ = write!(out, ",f{j}");
        }
        out.push('\n');
        for r in 0..self.features.rows() {
            let _ = write!(out, "{},{}", self.ids[r], self.labels[r]);
            for v in self.features.row(r) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::ParseLine { line, msg };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
        let cols: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
        if cols.len() < 2 || cols[0] != "id" || cols[1] != "label" {
            return Err(bad(1, "header must start with id,label".into()));
        }
        for (j, c) in cols[2..].iter().enumerate() {
            if *c != format!("f{j}") {
                return Err(bad(1, format!("expected column f{j}, found {c:?}")));
            }
        }
        let dim = cols.len() - 2;
        let (mut ids, mut labels, mut values) = (Vec::new(), Vec::new(), Vec::new());
        for (line, raw) in lines {
            let raw = raw.trim_end_matches('\r');
            if raw.is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.split(',').collect();
            if fields.len() != dim + 2 {
                return Err(bad(line, format!("expected {} fields, found {}", dim + 2, fields.len())));
            }
            ids.push(fields[0].parse().map_err(|_| bad(line, format!("invalid id {:?}", fields[0])))?);
            labels.push(fields[1].parse().map_err(|_| bad(line, format!("invalid label {:?}", fields[1])))?);
            for f in &fields[2..] {
                let v: f64 = f.parse().map_err(|_| bad(line, format!("invalid value {f:?}")))?;
                if !v.is_finite() {
                    return Err(bad(line, format!("non-finite value {f:?}")));
                }
                values.push(v);
            }
        }
        let features = Matrix::new(ids.len(), dim, values)?;
        Ok(FeatureTable {
            ids,
            labels,
            features,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (rows, dim) = self.features.shape();
        let mut out = Vec::with_capacity(16 + 4 * rows + 8 * rows * dim);
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&(rows as u32).to_le_bytes());
        out.extend_from_slice(&(dim as u32).to_le_bytes());
        for &l in &self.labels {
            out.extend_from_slice(&(l as u32).to_le_bytes());
        }
        for v in self.features.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |offset: usize, msg: &str| Error::ParseBytes {
            offset,
            msg: msg.to_string(),
        };
        if bytes.len() < 16 {
            return Err(err(bytes.len(), "truncated header"));
        }
        if &bytes[..8] != FEATURE_MAGIC {
            return Err(err(0, "not a feature file (bad magic)"));
        }
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        let (rows, dim) = (u32_at(8), u32_at(12));
        let body = rows
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(8))
            .and_then(|n| n.checked_add(rows.checked_mul(4)?))
            .ok_or_else(|| err(8, "dimensions overflow"))?;
        let available = bytes.len() - 16;
        if available < body {
            return Err(err(bytes.len(), "truncated payload"));
        }
        if available > body {
            return Err(err(16 + body, "trailing bytes after payload"));
        }
        let labels: Vec<usize> = (0..rows).map(|r| u32_at(16 + 4 * r)).collect();
        let start = 16 + 4 * rows;
        let mut values = Vec::with_capacity(rows * dim);
        for (k, c) in bytes[start..].chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(c.try_into().unwrap());
            if !v.is_finite() {
                return Err(err(start + 8 * k, "non-finite value"));
            }
            values.push(v);
        }
        FeatureTable::new(Matrix::new(rows, dim, values)?, labels)
    }

    /// Writes CSV, or the binary form when the extension is `bin`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = if is_binary(path) {
            self.to_bytes()
        } else {
            self.to_csv().into_bytes()
        };
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if is_binary(path) {
            FeatureTable::from_bytes(&bytes)
        } else {
            let text = String::from_utf8(bytes).map_err(|e| Error::ParseBytes {
                offset: e.utf8_error().valid_up_to(),
                msg: "feature CSV is not UTF-8".into(),
            })?;
            FeatureTable::from_csv(&text)
        }
    }
}

fn is_binary(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "bin")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{ImageShape, Pair};
    use crate::netopt::{Activation, NetworkSpec};
    use crate::numcore::Rng;
    use proptest::prelude::*;

    fn net(input_dim: usize) -> NetworkState {
        NetworkState::init(&NetworkSpec {
            input_dim,
            hidden_dims: vec![5],
            feature_dim: 3,
            activation: Activation::Prelu,
            init_seed: 8,
        })
        .unwrap()
    }

    fn images(rows: Vec<Vec<f64>>) -> Dataset {
        let n = rows.len();
        Dataset::new(
            Matrix::from_rows(&rows).unwrap(),
            vec![0; n],
            1,
            Some(ImageShape { height: 2, width: 2, channels: 1 }),
        )
        .unwrap()
    }

    #[test]
    fn symmetric_image_doubles() {
        let net = net(4);
        let ds = images(vec![vec![0.5, 0.5, -1.0, -1.0]]);
        let plain = extract_features(&net, &ds, false).unwrap();
        let merged = extract_features(&net, &ds, true).unwrap();
        let doubled = plain.scaled(2.0);
        assert_eq!(merged, doubled);
    }

    #[test]
    fn flip_merge_needs_images() {
        let mut ds = images(vec![vec![0.1, 0.2, 0.3, 0.4]]);
        ds.image_shape = None;
        assert!(extract_features(&net(4), &ds, true).is_err());
        assert!(extract_features(&net(4), &ds, false).is_ok());
    }

    #[test]
    fn scores_of_simple_pairs() {
        let f = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![-2.0, 1.0]]).unwrap();
        let pairs = PairList {
            entries: vec![Pair { a: 0, b: 1, same: true }, Pair { a: 0, b: 2, same: false }],
        };
        let s = pair_scores(&f, &pairs).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-15);
        assert_eq!(s[1], 0.0);
        let bad = PairList { entries: vec![Pair { a: 0, b: 3, same: true }] };
        assert!(pair_scores(&f, &bad).is_err());
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = FeatureTable::new(Matrix::zeros(0, 2), Vec::new()).unwrap();
        assert_eq!(t.to_csv(), "id,label,f0,f1\n");
        assert_eq!(FeatureTable::from_csv(&t.to_csv()).unwrap(), t);
        assert_eq!(FeatureTable::from_bytes(&t.to_bytes()).unwrap(), t);
    }

    #[test]
    fn malformed_csv() {
        assert!(FeatureTable::from_csv("").is_err());
        assert!(FeatureTable::from_csv("id,lbl,f0\n").is_err());
        assert!(matches!(
            FeatureTable::from_csv("id,label,f0\n0,1,0.5\n1,2\n"),
            Err(Error::ParseLine { line: 3, .. })
        ));
        assert!(FeatureTable::from_csv("id,label,f0\n0,1,NaN\n").is_err());
    }

    #[test]
    fn malformed_binary() {
        let t = FeatureTable::new(Matrix::from_fn(3, 2, |r, c| (r * 2 + c) as f64), vec![1, 0, 2]).unwrap();
        let b = t.to_bytes();
        assert_eq!(b.len(), 16 + 12 + 48);
        assert!(FeatureTable::from_bytes(&b[..b.len() - 1]).is_err());
        let mut extra = b.clone();
        extra.push(1);
        assert!(FeatureTable::from_bytes(&extra).is_err());
        let mut huge = b[..16].to_vec();
        huge[8..16].copy_from_slice(&[0xff; 8]);
        assert!(FeatureTable::from_bytes(&huge).is_err());
    }

    proptest! {
        #[test]
        fn tables_round_trip(seed in any::<u64>(), rows in 0usize..6, dim in 0usize..5) {
            let mut rng = Rng::new(seed);
            let f = Matrix::from_fn(rows, dim, |_, _| rng.normal() * 1e3);
            let labels = (0..rows).map(|_| rng.below(10)).collect();
            let t = FeatureTable::new(f, labels).unwrap();
            prop_assert_eq!(FeatureTable::from_csv(&t.to_csv()).unwrap(), t.clone());
            prop_assert_eq!(FeatureTable::from_bytes(&t.to_bytes()).unwrap(), t);
        }

        #[test]
        fn arbitrary_input_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..80)) {
            let _ = FeatureTable::from_bytes(&bytes);
            let mut prefixed = FEATURE_MAGIC.to_vec();
            prefixed.extend_from_slice(&bytes);
            let _ = FeatureTable::from_bytes(&prefixed);
            let _ = FeatureTable::from_csv(&String::from_utf8_lossy(&bytes));
        }

        #[test]
        fn scores_ignore_positive_rescaling(seed in any::<u64>(), k in 0.01f64..100.0) {
            let mut rng = Rng::new(seed);
            let f = Matrix::from_fn(4, 3, |_, _| rng.normal());
            let pairs = PairList { entries: vec![Pair { a: 0, b: 1, same: true }, Pair { a: 2, b: 3, same: false }] };
            let a = pair_scores(&f, &pairs).unwrap();
            let b = pair_scores(&f.scaled(k), &pairs).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
