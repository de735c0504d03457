//! IDX files (big-endian header, unsigned-byte payload), as used by MNIST.

use std::path::Path;

use super::{Dataset, ImageShape};
use crate::error::{Error, Result};
use crate::numcore::Matrix;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Raw image payload of an IDX image file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn u32_be(&mut self, what: &str) -> Result<u32> {
        let end = self.pos + 4;
        let raw = self.bytes.get(self.pos..end).ok_or_else(|| Error::ParseBytes {
            offset: self.pos,
            msg: format!("truncated header: missing {what}"),
        })?;
        self.pos = end;
        Ok(u32::from_be_bytes(raw.try_into().unwrap()))
    }

    fn payload(&mut self, len: usize) -> Result<&'a [u8]> {
        let remaining = self.bytes.len() - self.pos;
        if remaining < len {
            return Err(Error::ParseBytes {
                offset: self.bytes.len(),
                msg: format!("truncated payload: expected {len} bytes, found {remaining}"),
            });
        }
        if remaining > len {
            return Err(Error::ParseBytes {
                offset: self.pos + len,
                msg: format!("{} trailing bytes after payload", remaining - len),
            });
        }
        let out = &self.bytes[self.pos..];
        self.pos = self.bytes.len();
        Ok(out)
    }
}

fn expect_magic(cur: &mut Cursor<'_>, want: u32) -> Result<()> {
    let magic = cur.u32_be("magic")?;
    if magic != want {
        return Err(Error::ParseBytes {
            offset: 0,
            msg: format!("bad magic 0x{magic:08x}, expected 0x{want:08x}"),
        });
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let mut cur = Cursor { bytes, pos: 0 };
    expect_magic(&mut cur, IMAGES_MAGIC)?;
    let count = cur.u32_be("image count")? as usize;
    let rows = cur.u32_be("row count")? as usize;
    let cols = cur.u32_be("column count")? as usize;
    let len = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::ParseBytes {
            offset: 4,
            msg: "image dimensions overflow".into(),
        })?;
    let pixels = cur.payload(len)?.to_vec();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut cur = Cursor { bytes, pos: 0 };
    expect_magic(&mut cur, LABELS_MAGIC)?;
    let count = cur.u32_be("label count")? as usize;
    Ok(cur.payload(count)?.to_vec())
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [
        IMAGES_MAGIC,
        images.count as u32,
        images.rows as u32,
        images.cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Pixel `v` maps to `(v − 127.5) / 128`.
pub(crate) fn scale_pixel(v: u8) -> f64 {
    (f64::from(v) - 127.5) / 128.0
}

impl Dataset {
    /// Builds a single-channel image dataset from parsed IDX payloads.
    pub fn from_idx(images: &IdxImages, labels: &[u8]) -> Result<Dataset> {
        if images.count != labels.len() {
            return Err(Error::contract(format!(
                "{} images but {} labels",
                images.count,
                labels.len()
            )));
        }
        let dim = images.rows * images.cols;
        let samples = Matrix::new(
            images.count,
            dim,
            images.pixels.iter().map(|&p| scale_pixel(p)).collect(),
        )?;
        let labels: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
        let class_count = labels.iter().max().map_or(0, |m| m + 1);
        Dataset::new(
            samples,
            labels,
            class_count,
            Some(ImageShape {
                height: images.rows,
                width: images.cols,
                channels: 1,
            }),
        )
    }
}

/// Reads an IDX image file and its matching label file.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| Error::io(p, e));
    let images = parse_idx_images(&read(images_path.as_ref())?)?;
    let labels = parse_idx_labels(&read(labels_path.as_ref())?)?;
    Dataset::from_idx(&images, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny() -> (IdxImages, Vec<u8>) {
        (
            IdxImages {
                count: 2,
                rows: 2,
                cols: 3,
                pixels: vec![0, 255, 128, 127, 1, 2, 3, 4, 5, 6, 7, 8],
            },
            vec![3, 1],
        )
    }

    #[test]
    fn pixel_scaling() {
        assert_eq!(scale_pixel(255), 0.99609375);
        assert_eq!(scale_pixel(0), -0.99609375);
        assert_eq!((127.5 - 127.5) / 128.0, 0.0);
    }

    #[test]
    fn round_trip_through_bytes() {
        let (images, labels) = tiny();
        let parsed = parse_idx_images(&encode_idx_images(&images)).unwrap();
        assert_eq!(parsed, images);
        assert_eq!(parse_idx_labels(&encode_idx_labels(&labels)).unwrap(), labels);

        let ds = Dataset::from_idx(&parsed, &labels).unwrap();
        assert_eq!(ds.samples.shape(), (2, 6));
        assert_eq!(ds.class_count, 4);
        assert_eq!(ds.samples.get(0, 1), 0.99609375);
        assert_eq!(ds.image_shape.unwrap().width, 3);
    }

    #[test]
    fn bad_magic_reports_offset() {
        let (images, _) = tiny();
        let mut bytes = encode_idx_images(&images);
        bytes[3] = 0x01;
        match parse_idx_images(&bytes) {
            Err(Error::ParseBytes { offset, msg }) => {
                assert_eq!(offset, 0);
                assert!(msg.contains("magic"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncation_reports_offset() {
        let (images, labels) = tiny();
        let bytes = encode_idx_images(&images);
        match parse_idx_images(&bytes[..bytes.len() - 1]) {
            Err(Error::ParseBytes { offset, .. }) => assert_eq!(offset, bytes.len() - 1),
            other => panic!("unexpected {other:?}"),
        }
        match parse_idx_images(&bytes[..10]) {
            Err(Error::ParseBytes { offset, .. }) => assert_eq!(offset, 8),
            other => panic!("unexpected {other:?}"),
        }
        let lb = encode_idx_labels(&labels);
        assert!(parse_idx_labels(&lb[..lb.len() - 1]).is_err());
        let mut extra = lb.clone();
        extra.push(0);
        assert!(matches!(parse_idx_labels(&extra), Err(Error::ParseBytes { offset: 10, .. })));
    }

    #[test]
    fn count_mismatch() {
        let (images, _) = tiny();
        assert!(Dataset::from_idx(&images, &[1]).is_err());
    }

    #[test]
    fn huge_header_does_not_allocate() {
        let mut bytes = IMAGES_MAGIC.to_be_bytes().to_vec();
        for _ in 0..3 {
            bytes.extend_from_slice(&u32::MAX.to_be_bytes());
        }
        assert!(parse_idx_images(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = parse_idx_images(&bytes);
            let _ = parse_idx_labels(&bytes);
        }

        #[test]
        fn pixels_stay_in_range(p in any::<u8>()) {
            let v = scale_pixel(p);
            prop_assert!((-0.99609375..=0.99609375).contains(&v));
        }
    }
}
