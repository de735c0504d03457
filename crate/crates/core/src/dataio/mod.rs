//! Datasets, batching and the plain-text list formats used by evaluation.

mod batch;
mod blobs;
mod idx;
mod lists;

pub use batch::{batches, hflip, SampleRef};
pub use blobs::synth_blobs;
pub use idx::{encode_idx_images, encode_idx_labels, load_idx, parse_idx_images, parse_idx_labels, IdxImages};
pub use lists::{
    load_pairs, load_templates, parse_pairs, parse_templates, sample_pairs, templates_by_class,
    write_pairs, write_templates, Pair, PairList, Template, TemplateSet,
};

use crate::error::{Error, Result};
use crate::numcore::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Preprocessed samples, one per row, with labels in `[0, class_count)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Matrix,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub image_shape: Option<ImageShape>,
}

impl Dataset {
    pub fn new(
        samples: Matrix,
        labels: Vec<usize>,
        class_count: usize,
        image_shape: Option<ImageShape>,
    ) -> Result<Self> {
        if samples.rows() != labels.len() {
            return Err(Error::shape(
                "Dataset::new",
                format!("{} rows, {} labels", samples.rows(), labels.len()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::contract(format!(
                "label {bad} outside [0, {class_count})"
            )));
        }
        if let Some(shape) = image_shape {
            if shape.len() != samples.cols() {
                return Err(Error::shape(
                    "Dataset::new",
                    format!(
                        "image shape {}x{}x{} does not match row length {}",
                        shape.height,
                        shape.width,
                        shape.channels,
                        samples.cols()
                    ),
                ));
            }
        }
        Ok(Dataset {
            samples,
            labels,
            class_count,
            image_shape,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: self.samples.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            image_shape: self.image_shape,
        }
    }

    /// First `per_class` samples of every class (in dataset order) versus the rest.
    pub fn split_per_class(&self, per_class: usize) -> (Dataset, Dataset) {
        let mut seen = vec![0usize; self.class_count];
        let (mut head, mut tail) = (Vec::new(), Vec::new());
        for (i, &y) in self.labels.iter().enumerate() {
            if seen[y] < per_class {
                head.push(i);
            } else {
                tail.push(i);
            }
            seen[y] += 1;
        }
        (self.subset(&head), self.subset(&tail))
    }

    /// Inputs and labels for a batch, applying horizontal flips where requested.
    pub fn gather(&self, refs: &[SampleRef]) -> Result<(Matrix, Vec<usize>)> {
        let indices: Vec<usize> = refs.iter().map(|r| r.index).collect();
        let mut inputs = self.samples.select_rows(&indices);
        if refs.iter().any(|r| r.flipped) {
            let shape = self.image_shape.ok_or_else(|| {
                Error::contract("flipped samples requested from a non-image dataset")
            })?;
            let flipped = hflip(&inputs, shape)?;
            for (row, r) in refs.iter().enumerate() {
                if r.flipped {
                    inputs.row_mut(row).copy_from_slice(flipped.row(row));
                }
            }
        }
        Ok((inputs, refs.iter().map(|r| self.labels[r.index]).collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_keeps_class_order() {
        let ds = Dataset::new(
            Matrix::from_fn(6, 1, |i, _| i as f64),
            vec![0, 1, 0, 1, 0, 1],
            2,
            None,
        )
        .unwrap();
        let (a, b) = ds.split_per_class(2);
        assert_eq!(a.labels, vec![0, 1, 0, 1]);
        assert_eq!(a.samples.column(0), vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(b.samples.column(0), vec![4.0, 5.0]);
    }

    #[test]
    fn rejects_bad_labels_and_shapes() {
        assert!(Dataset::new(Matrix::zeros(2, 1), vec![0, 3], 2, None).is_err());
        assert!(Dataset::new(Matrix::zeros(2, 1), vec![0], 2, None).is_err());
        let shape = ImageShape { height: 2, width: 2, channels: 1 };
        assert!(Dataset::new(Matrix::zeros(1, 3), vec![0], 1, Some(shape)).is_err());
    }
}
