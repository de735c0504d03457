//! Binary checkpoint of a trained network and its class head.
//!
//! All integers and floats little-endian:
//!
//! ```text
//! 0   8 bytes  magic "ADMLCKPT"
//! 8   u32      format version (1)
//! 12  u32      input_dim
//!     u32      hidden layer count H, then H x u32 hidden dims
//!     u32      feature_dim
//!     u32      activation (0 = relu, 1 = prelu)
//!     u64      init_seed
//!     u32      class count N
//!     f64...   per layer: weights (fan_in x fan_out, row-major), bias (fan_out),
//!              PReLU slopes (fan_out, hidden layers of prelu networks only)
//!     f64...   head weights (feature_dim x N, row-major), margins (N), scale
//! ```
//!
//! Nothing may follow the last block. Momentum buffers are not stored.

use std::path::Path;

use super::network::{Activation, DenseLayer, NetworkSpec, NetworkState};
use crate::error::{Error, Result};
use crate::losses::ClassHead;
use crate::numcore::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ADMLCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: NetworkState,
    pub head: ClassHead,
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let spec = &self.net.spec;
        let mut out = Vec::with_capacity(64 + 8 * self.net.param_count());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        let put_u32 = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
        put_u32(&mut out, CHECKPOINT_VERSION as usize);
        put_u32(&mut out, spec.input_dim);
        put_u32(&mut out, spec.hidden_dims.len());
        for &h in &spec.hidden_dims {
            put_u32(&mut out, h);
        }
        put_u32(&mut out, spec.feature_dim);
        put_u32(
            &mut out,
            match spec.activation {
                Activation::Relu => 0,
                Activation::Prelu => 1,
            },
        );
        out.extend_from_slice(&spec.init_seed.to_le_bytes());
        put_u32(&mut out, self.head.classes());

        let mut put = |vals: &[f64]| {
            for v in vals {
                out.extend_from_slice(&v.to_le_bytes());
            }
        };
        for p in self.net.params() {
            put(p.as_slice());
        }
        put(self.head.weights.as_slice());
        put(&self.head.margins);
        put(&[self.head.scale]);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(8, "magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::ParseBytes {
                offset: 0,
                msg: "not a checkpoint (bad magic)".into(),
            });
        }
        let version_at = r.pos;
        let version = r.u32("format version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::ParseBytes {
                offset: version_at,
                msg: format!("unsupported checkpoint version {version}"),
            });
        }
        let input_dim = r.dim("input_dim")?;
        let hidden_count = r.u32("hidden layer count")? as usize;
        // each hidden dim needs 4 bytes; reject absurd counts before allocating
        if hidden_count > r.remaining() / 4 {
            return Err(r.error("hidden layer count exceeds file size"));
        }
        let hidden_dims = (0..hidden_count)
            .map(|_| r.dim("hidden dim"))
            .collect::<Result<Vec<_>>>()?;
        let feature_dim = r.dim("feature_dim")?;
        let act_at = r.pos;
        let activation = match r.u32("activation")? {
            0 => Activation::Relu,
            1 => Activation::Prelu,
            other => {
                return Err(Error::ParseBytes {
                    offset: act_at,
                    msg: format!("unknown activation code {other}"),
                })
            }
        };
        let init_seed = u64::from_le_bytes(r.take(8, "init_seed")?.try_into().unwrap());
        let classes = r.dim("class count")?;
        let spec = NetworkSpec {
            input_dim,
            hidden_dims,
            feature_dim,
            activation,
            init_seed,
        };

        let dims = spec.layer_dims();
        let last = dims.len() - 1;
        let mut layers = Vec::with_capacity(dims.len());
        for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let weights = r.matrix(fan_in, fan_out, "layer weights")?;
            let bias = r.matrix(1, fan_out, "layer bias")?;
            let slope = if l != last && activation == Activation::Prelu {
                Some(r.matrix(1, fan_out, "prelu slopes")?)
            } else {
                None
            };
            layers.push(DenseLayer {
                weights,
                bias,
                slope,
            });
        }
        let head_weights = r.matrix(feature_dim, classes, "head weights")?;
        let margins = r.matrix(1, classes, "margins")?.into_vec();
        let scale_at = r.pos;
        let scale = r.matrix(1, 1, "scale")?.as_slice()[0];
        if r.remaining() != 0 {
            return Err(r.error(format!("{} trailing bytes", r.remaining())));
        }
        if !(scale > 0.0) {
            return Err(Error::ParseBytes {
                offset: scale_at,
                msg: format!("scale must be positive, got {scale}"),
            });
        }
        let head = ClassHead::new(head_weights, margins, scale)?;
        Ok(Checkpoint {
            net: NetworkState::from_layers(spec, layers),
            head,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::decode(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn error(&self, msg: impl Into<String>) -> Error {
        Error::ParseBytes {
            offset: self.pos,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.error(format!("truncated while reading {what}")));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn dim(&mut self, what: &str) -> Result<usize> {
        let at = self.pos;
        match self.u32(what)? {
            0 => Err(Error::ParseBytes {
                offset: at,
                msg: format!("{what} must be >= 1"),
            }),
            v => Ok(v as usize),
        }
    }

    fn matrix(&mut self, rows: usize, cols: usize, what: &str) -> Result<Matrix> {
        let count = rows
            .checked_mul(cols)
            .filter(|&c| c <= self.remaining() / 8)
            .ok_or_else(|| self.error(format!("truncated while reading {what}")))?;
        let start = self.pos;
        let raw = self.take(count * 8, what)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::ParseBytes {
                offset: start + 8 * k,
                msg: format!("non-finite value in {what}"),
            });
        }
        Matrix::new(rows, cols, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;
    use proptest::prelude::*;

    fn sample(act: Activation) -> Checkpoint {
        let spec = NetworkSpec {
            input_dim: 4,
            hidden_dims: vec![5, 3],
            feature_dim: 2,
            activation: act,
            init_seed: 77,
        };
        let net = NetworkState::init(&spec).unwrap();
        let head = ClassHead::init(2, 3, 0.2, 4.0, &mut Rng::new(1));
        Checkpoint { net, head }
    }

    #[test]
    fn round_trip() {
        for act in [Activation::Relu, Activation::Prelu] {
            let ck = sample(act);
            let bytes = ck.encode();
            assert_eq!(&bytes[..8], b"ADMLCKPT");
            assert_eq!(Checkpoint::decode(&bytes).unwrap(), ck);
        }
    }

    #[test]
    fn header_layout() {
        let bytes = sample(Activation::Prelu).encode();
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 2);
        // 4·5 + 5 + 5, 5·3 + 3 + 3, 3·2 + 2, head 2·3 + 3 + 1
        let floats = 30 + 21 + 8 + 10;
        let header = 8 + 4 * 8 + 8;
        assert_eq!(bytes.len(), header + 8 * floats);
    }

    #[test]
    fn corrupt_inputs() {
        let bytes = sample(Activation::Relu).encode();
        assert!(Checkpoint::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::decode(&extra).is_err());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(Checkpoint::decode(&bad_magic), Err(Error::ParseBytes { offset: 0, .. })));
        let mut bad_version = bytes.clone();
        bad_version[8] = 9;
        assert!(matches!(Checkpoint::decode(&bad_version), Err(Error::ParseBytes { offset: 8, .. })));
        let mut nan = bytes.clone();
        let at = nan.len() - 8;
        nan[at..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(Checkpoint::decode(&nan).is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_bytes_never_panic(tail in proptest::collection::vec(any::<u8>(), 0..200)) {
            let _ = Checkpoint::decode(&tail);
            let mut prefixed = b"ADMLCKPT\x01\x00\x00\x00".to_vec();
            prefixed.extend_from_slice(&tail);
            let _ = Checkpoint::decode(&prefixed);
        }
    }
}
