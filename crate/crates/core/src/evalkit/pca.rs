//! Principal component analysis of a feature matrix.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::numcore::{matmul, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `dim x out_dim`, one principal direction per column, by descending
    /// eigenvalue. The largest-magnitude entry of each column is positive.
    pub basis: Matrix,
    /// Every covariance eigenvalue, descending.
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn out_dim(&self) -> usize {
        self.basis.cols()
    }

    pub fn project(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.mean.len() {
            return Err(Error::shape(
                "PcaModel::project",
                format!("features have {} columns, model expects {}", features.cols(), self.mean.len()),
            ));
        }
        let centered = Matrix::from_fn(features.rows(), features.cols(), |r, c| {
            features.get(r, c) - self.mean[c]
        });
        matmul(&centered, &self.basis)
    }

    /// Share of the total variance captured by the kept directions.
    pub fn explained_variance(&self) -> f64 {
        let total: f64 = self.eigenvalues.iter().map(|v| v.max(0.0)).sum();
        if total == 0.0 {
            return 1.0;
        }
        let kept: f64 = self.eigenvalues[..self.out_dim()].iter().map(|v| v.max(0.0)).sum();
        kept / total
    }
}

/// Fits a PCA model on `features` and projects them onto the top `out_dim`
/// principal directions.
pub fn pca(features: &Matrix, out_dim: usize) -> Result<(Matrix, PcaModel)> {
    let (n, dim) = features.shape();
    if n < 2 {
        return Err(Error::contract(format!("PCA needs at least 2 samples, got {n}")));
    }
    if out_dim == 0 || out_dim > dim {
        return Err(Error::contract(format!(
            "PCA output dimension must lie in 1..={dim}, got {out_dim}"
        )));
    }
    let mean: Vec<f64> = (0..dim)
        .map(|c| (0..n).map(|r| features.get(r, c)).sum::<f64>() / n as f64)
        .collect();
    let centered = DMatrix::from_fn(n, dim, |r, c| features.get(r, c) - mean[c]);
    let cov = (centered.transpose() * &centered) / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();

    let mut basis = Matrix::zeros(dim, out_dim);
    for (col, &k) in order[..out_dim].iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let lead = (0..dim).fold(0, |best, i| if v[i].abs() > v[best].abs() { i } else { best });
        let sign = if v[lead] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..dim {
            basis.set(i, col, sign * v[i]);
        }
    }
    let model = PcaModel {
        mean,
        basis,
        eigenvalues,
    };
    let projected = model.project(features)?;
    Ok((projected, model))
}
