use crate::error::Result;
use crate::numcore::{cosine_matrix, l2_normalize_rows, Matrix, NORM_EPS};

/// Cosines between batch features and class-weight columns, with what is
/// needed to push a gradient on the cosines back to features and weights.
pub(crate) struct CosineGeometry {
    pub cos: Matrix,
    unit_x: Matrix,
    x_norm: Vec<f64>,
    // one row per class
    unit_w: Matrix,
    w_norm: Vec<f64>,
}

impl CosineGeometry {
    pub fn new(features: &Matrix, weights: &Matrix) -> Result<Self> {
        let cos = cosine_matrix(features, weights)?;
        let wt = weights.transpose();
        Ok(CosineGeometry {
            cos,
            unit_x: l2_normalize_rows(features, NORM_EPS),
            x_norm: features.row_norms(),
            unit_w: l2_normalize_rows(&wt, NORM_EPS),
            w_norm: wt.row_norms(),
        })
    }

    /// Chain rule through `cos(u, v) = u·v / (‖u‖‖v‖)`:
    /// `∂cos/∂u = (v̂ − cos·û) / ‖u‖`. Below the norm guard the normalization
    /// is a plain division by the guard and the projection term drops out.
    pub fn backward(&self, grad_cos: &Matrix) -> (Matrix, Matrix) {
        let (m, n) = grad_cos.shape();
        let d = self.unit_x.cols();
        let mut gx = Matrix::zeros(m, d);
        let mut gw = Matrix::zeros(d, n);

        for i in 0..m {
            let xi = self.unit_x.row(i);
            let denom = self.x_norm[i].max(NORM_EPS);
            let projected = self.x_norm[i] >= NORM_EPS;
            let mut acc = vec![0.0; d];
            for j in 0..n {
                let g = grad_cos.get(i, j);
                if g == 0.0 {
                    continue;
                }
                let c = self.cos.get(i, j);
                let wj = self.unit_w.row(j);
                for k in 0..d {
                    let radial = if projected { c * xi[k] } else { 0.0 };
                    acc[k] += g * (wj[k] - radial);
                }
                let wdenom = self.w_norm[j].max(NORM_EPS);
                let wprojected = self.w_norm[j] >= NORM_EPS;
                for k in 0..d {
                    let radial = if wprojected { c * wj[k] } else { 0.0 };
                    gw.add_at(k, j, g * (xi[k] - radial) / wdenom);
                }
            }
            for (o, a) in gx.row_mut(i).iter_mut().zip(acc) {
                *o = a / denom;
            }
        }
        (gx, gw)
    }
}
