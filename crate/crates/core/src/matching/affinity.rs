use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const INSTANCE_NORM_EPS: f64 = 1e-5;

/// Dot-product affinity `H1 · H2ᵀ` (A-graph rows, S-graph columns).
pub fn affinity(h1: &Matrix, h2: &Matrix) -> Result<Matrix> {
    if h1.cols() != h2.cols() {
        return Err(Error::Shape(format!(
            "embedding widths differ: {} vs {}",
            h1.cols(),
            h2.cols()
        )));
    }
    if h2.rows() > h1.rows() {
        return Err(Error::SizeMismatch {
            a_nodes: h1.rows(),
            s_nodes: h2.rows(),
        });
    }
    Ok(h1.matmul_t(h2))
}

/// Gradients of the affinity with respect to both embedding matrices.
pub fn affinity_backward(h1: &Matrix, h2: &Matrix, d_aff: &Matrix) -> (Matrix, Matrix) {
    (d_aff.matmul(h2), d_aff.t_matmul(h1))
}

/// Standardizes all entries jointly: `(A − mean) / sqrt(var + eps)` with the
/// population variance.
pub fn instance_normalize(a: &Matrix, eps: f64) -> Matrix {
    instance_normalize_with_scale(a, eps).0
}

/// Also returns `sqrt(var + eps)` for the backward pass.
pub fn instance_normalize_with_scale(a: &Matrix, eps: f64) -> (Matrix, f64) {
    let n = a.len() as f64;
    let mean = a.as_slice().iter().sum::<f64>() / n;
    let var = a.as_slice().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sigma = (var + eps).sqrt();
    let mut out = a.clone();
    out.as_mut_slice().iter_mut().for_each(|x| *x = (*x - mean) / sigma);
    (out, sigma)
}

/// `dA = (dY − mean(dY) − Y·mean(dY ⊙ Y)) / σ`
pub fn instance_normalize_backward(normalized: &Matrix, sigma: f64, d_out: &Matrix) -> Matrix {
    let n = normalized.len() as f64;
    let y = normalized.as_slice();
    let dy = d_out.as_slice();
    let mean_dy = dy.iter().sum::<f64>() / n;
    let mean_dyy = dy.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / n;
    let mut out = d_out.clone();
    for (o, &yi) in out.as_mut_slice().iter_mut().zip(y) {
        *o = (*o - mean_dy - yi * mean_dyy) / sigma;
    }
    out
}

/// Appends `N1 − N2` zero columns, giving an `N1 × N1` matrix whose real
/// columns keep indices `0..N2`.
pub fn pad_dummy_columns(a: &Matrix) -> Result<Matrix> {
    let (n1, n2) = a.shape();
    if n2 > n1 {
        return Err(Error::SizeMismatch {
            a_nodes: n1,
            s_nodes: n2,
        });
    }
    Ok(Matrix::from_fn(n1, n1, |i, j| if j < n2 { a[(i, j)] } else { 0.0 }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthonormal_rows_give_identity() {
        let h = Matrix::from_rows(&[[0.6, 0.8, 0.0], [-0.8, 0.6, 0.0], [0.0, 0.0, 1.0]]);
        let a = affinity(&h, &h).unwrap();
        assert!(a.max_abs_diff(&Matrix::identity(3)) < 1e-15);
    }

    #[test]
    fn hand_dot_product() {
        let a = affinity(&Matrix::from_rows(&[[1.0, 2.0]]), &Matrix::from_rows(&[[3.0, 4.0]])).unwrap();
        assert_eq!(a, Matrix::from_rows(&[[11.0]]));
        let z = affinity(&Matrix::filled(3, 2, 1.5), &Matrix::zeros(2, 2)).unwrap();
        assert_eq!(z, Matrix::zeros(3, 2));
    }

    #[test]
    fn larger_s_graph_rejected() {
        let r = affinity(&Matrix::zeros(2, 4), &Matrix::zeros(3, 4));
        assert!(matches!(r, Err(Error::SizeMismatch { a_nodes: 2, s_nodes: 3 })));
        assert!(matches!(affinity(&Matrix::zeros(3, 4), &Matrix::zeros(2, 5)), Err(Error::Shape(_))));
    }

    #[test]
    fn normalize_cases() {
        assert_eq!(instance_normalize(&Matrix::filled(3, 3, 4.2), 1e-5), Matrix::zeros(3, 3));
        let y = instance_normalize(&Matrix::from_rows(&[[1.0, -1.0]]), 1e-5);
        let expected = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((y[(0, 0)] - expected).abs() < 1e-15);
        assert!((y[(0, 1)] + expected).abs() < 1e-15);
        assert_eq!(instance_normalize(&Matrix::from_rows(&[[7.0]]), 1e-5), Matrix::zeros(1, 1));
    }

    #[test]
    fn normalized_moments() {
        let a = Matrix::from_fn(5, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.3 - 1.0);
        let y = instance_normalize(&a, INSTANCE_NORM_EPS);
        let n = y.len() as f64;
        let mean = y.as_slice().iter().sum::<f64>() / n;
        let var = y.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-12);
        assert!((1.0 - 1e-3..=1.0).contains(&var), "{var}");
    }

    #[test]
    fn padding() {
        let sq = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(pad_dummy_columns(&sq).unwrap(), sq);
        let rect = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        let p = pad_dummy_columns(&rect).unwrap();
        assert_eq!(p.shape(), (3, 3));
        assert_eq!(p.col_sums()[2], 0.0);
        assert_eq!(p[(2, 1)], 6.0);
        assert!(pad_dummy_columns(&Matrix::zeros(2, 3)).is_err());
    }
}
