use super::{Dataset, ImageShape};
use crate::error::{Error, Result};
use crate::numcore::{Matrix, Rng};

/// One sample of a mini-batch, optionally horizontally flipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SampleRef {
    pub index: usize,
    pub flipped: bool,
}

/// Shuffled mini-batches covering the dataset exactly once; the last batch
/// may be short. With `augment` set on an image dataset every sample also
/// appears once flipped.
pub fn batches(ds: &Dataset, batch_size: usize, epoch_seed: u64, augment: bool) -> Result<Vec<Vec<SampleRef>>> {
    if batch_size == 0 {
        return Err(Error::contract("batch size must be >= 1"));
    }
    let flips: &[bool] = if augment && ds.image_shape.is_some() {
        &[false, true]
    } else {
        &[false]
    };
    let mut order: Vec<SampleRef> = flips
        .iter()
        .flat_map(|&flipped| (0..ds.len()).map(move |index| SampleRef { index, flipped }))
        .collect();
    Rng::new(epoch_seed).shuffle(&mut order);
    Ok(order.chunks(batch_size).map(<[SampleRef]>::to_vec).collect())
}

/// Mirrors every row (an `height x width x channels` image stored row-major,
/// channels innermost) along the width axis.
pub fn hflip(images: &Matrix, shape: ImageShape) -> Result<Matrix> {
    if shape.len() != images.cols() {
        return Err(Error::shape(
            "hflip",
            format!(
                "{}x{}x{} image vs row length {}",
                shape.height,
                shape.width,
                shape.channels,
                images.cols()
            ),
        ));
    }
    let (w, c) = (shape.width, shape.channels);
    let mut out = images.clone();
    for r in 0..images.rows() {
        let src = images.row(r);
        let dst = out.row_mut(r);
        for y in 0..shape.height {
            for x in 0..w {
                for ch in 0..c {
                    dst[(y * w + x) * c + ch] = src[(y * w + (w - 1 - x)) * c + ch];
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain(n: usize) -> Dataset {
        Dataset::new(Matrix::from_fn(n, 1, |i, _| i as f64), vec![0; n], 1, None).unwrap()
    }

    #[test]
    fn batch_sizes_keep_short_tail() {
        let b = batches(&plain(10), 4, 1, false).unwrap();
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
    }

    #[test]
    fn batches_partition_and_are_seeded() {
        let ds = plain(37);
        let a = batches(&ds, 5, 9, false).unwrap();
        assert_eq!(a, batches(&ds, 5, 9, false).unwrap());
        assert_ne!(a, batches(&ds, 5, 10, false).unwrap());
        let mut idx: Vec<usize> = a.iter().flatten().map(|r| r.index).collect();
        idx.sort_unstable();
        assert_eq!(idx, (0..37).collect::<Vec<_>>());
        assert!(batches(&ds, 0, 1, false).is_err());
    }

    #[test]
    fn augmentation_doubles_image_data_only() {
        let shape = ImageShape { height: 1, width: 2, channels: 1 };
        let img = Dataset::new(Matrix::zeros(3, 2), vec![0; 3], 1, Some(shape)).unwrap();
        let b = batches(&img, 4, 0, true).unwrap();
        assert_eq!(b.iter().map(Vec::len).sum::<usize>(), 6);
        assert_eq!(b.iter().flatten().filter(|r| r.flipped).count(), 3);
        assert_eq!(batches(&plain(3), 4, 0, true).unwrap().concat().len(), 3);
    }

    #[test]
    fn flip_hand_case_and_involution() {
        let shape = ImageShape { height: 2, width: 3, channels: 1 };
        let m = Matrix::new(1, 6, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let f = hflip(&m, shape).unwrap();
        assert_eq!(f.as_slice(), &[3.0, 2.0, 1.0, 6.0, 5.0, 4.0]);
        assert_eq!(hflip(&f, shape).unwrap(), m);

        let symmetric = Matrix::new(1, 6, vec![1.0, 2.0, 1.0, 7.0, 0.0, 7.0]).unwrap();
        assert_eq!(hflip(&symmetric, shape).unwrap(), symmetric);
    }

    #[test]
    fn flip_keeps_channels_together() {
        let shape = ImageShape { height: 1, width: 2, channels: 2 };
        let m = Matrix::new(1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(hflip(&m, shape).unwrap().as_slice(), &[3.0, 4.0, 1.0, 2.0]);
        assert!(hflip(&Matrix::zeros(1, 3), shape).is_err());
    }

    #[test]
    fn gather_applies_flips() {
        let shape = ImageShape { height: 1, width: 2, channels: 1 };
        let ds = Dataset::new(Matrix::new(1, 2, vec![1.0, 2.0]).unwrap(), vec![0], 1, Some(shape)).unwrap();
        let (x, y) = ds
            .gather(&[SampleRef { index: 0, flipped: true }, SampleRef { index: 0, flipped: false }])
            .unwrap();
        assert_eq!(x.as_slice(), &[2.0, 1.0, 1.0, 2.0]);
        assert_eq!(y, vec![0, 0]);
    }
}
