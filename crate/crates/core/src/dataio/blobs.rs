use super::Dataset;
use crate::error::{Error, Result};
use crate::numcore::{Matrix, Rng};

/// Gaussian blobs around class centers drawn uniformly on the unit sphere.
///
/// Samples are stored class by class: rows `c·per_class .. (c+1)·per_class`
/// belong to class `c`.
pub fn synth_blobs(
    class_count: usize,
    dim: usize,
    per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if class_count == 0 || dim == 0 || per_class == 0 {
        return Err(Error::contract("blob counts and dimension must be >= 1"));
    }
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(Error::contract(format!("blob spread must be positive, got {spread}")));
    }
    let mut rng = Rng::derived(seed, 0);
    let centers: Vec<Vec<f64>> = (0..class_count)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if n > 1e-6 {
                break v.into_iter().map(|a| a / n).collect();
            }
        })
        .collect();

    let mut noise = Rng::derived(seed, 1);
    let rows = class_count * per_class;
    let mut labels = Vec::with_capacity(rows);
    let samples = Matrix::from_fn(rows, dim, |r, c| {
        let class = r / per_class;
        centers[class][c] + spread * noise.normal()
    });
    for class in 0..class_count {
        labels.extend(std::iter::repeat_n(class, per_class));
    }
    Dataset::new(samples, labels, class_count, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nearest_center_accuracy(ds: &Dataset) -> f64 {
        // centers estimated from the noiseless generator with the same seed
        let clean = synth_blobs(ds.class_count, ds.dim(), 1, 1e-300, 7).unwrap();
        let mut correct = 0;
        for i in 0..ds.len() {
            let row = ds.samples.row(i);
            let best = (0..ds.class_count)
                .min_by(|&a, &b| {
                    let da: f64 = row.iter().zip(clean.samples.row(a)).map(|(x, c)| (x - c).powi(2)).sum();
                    let db: f64 = row.iter().zip(clean.samples.row(b)).map(|(x, c)| (x - c).powi(2)).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            correct += usize::from(best == ds.labels[i]);
        }
        correct as f64 / ds.len() as f64
    }

    #[test]
    fn vanishing_spread_collapses_to_centers() {
        let ds = synth_blobs(3, 4, 5, 1e-12, 7).unwrap();
        for c in 0..3 {
            let first = ds.samples.row(c * 5).to_vec();
            for k in 1..5 {
                for (a, b) in ds.samples.row(c * 5 + k).iter().zip(&first) {
                    assert!((a - b).abs() < 1e-10);
                }
            }
            let n: f64 = first.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(synth_blobs(4, 8, 10, 0.1, 3).unwrap(), synth_blobs(4, 8, 10, 0.1, 3).unwrap());
        assert_ne!(synth_blobs(4, 8, 10, 0.1, 3).unwrap(), synth_blobs(4, 8, 10, 0.1, 4).unwrap());
    }

    #[test]
    fn tight_blobs_are_nearest_center_separable() {
        let ds = synth_blobs(4, 8, 50, 0.05, 7).unwrap();
        assert_eq!(nearest_center_accuracy(&ds), 1.0);
    }

    #[test]
    fn invalid_arguments() {
        assert!(synth_blobs(0, 2, 2, 0.1, 0).is_err());
        assert!(synth_blobs(2, 2, 2, 0.0, 0).is_err());
        assert!(synth_blobs(2, 2, 2, f64::NAN, 0).is_err());
    }
}
