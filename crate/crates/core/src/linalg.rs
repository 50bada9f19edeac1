//! Small dense kernels on slices and column-major designs.

use nalgebra::{DMatrix, DVectorView};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `y += alpha * x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `X^T w`.
pub fn xt_mul(x: &DMatrix<f64>, w: &[f64]) -> Vec<f64> {
    let view = DVectorView::from_slice(w, x.nrows());
    x.tr_mul(&view).data.into()
}

/// `X beta`, touching only the columns where `beta` is nonzero.
pub fn x_mul_sparse(x: &DMatrix<f64>, beta: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.nrows()];
    for (j, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            axpy(b, x.column(j).as_slice(), &mut out);
        }
    }
    out
}

/// `X_cols^T d` for a subset of columns.
pub fn cols_t_mul(x: &DMatrix<f64>, cols: &[usize], d: &[f64]) -> Vec<f64> {
    cols.iter().map(|&j| dot(x.column(j).as_slice(), d)).collect()
}

/// `out += X_cols c`.
pub fn cols_mul_add(x: &DMatrix<f64>, cols: &[usize], c: &[f64], out: &mut [f64]) {
    for (&j, &cj) in cols.iter().zip(c) {
        if cj != 0.0 {
            axpy(cj, x.column(j).as_slice(), out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_agree_with_nalgebra() {
        let x = DMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64 - 5.0);
        let w = [1.0, -2.0, 0.5, 3.0];
        let beta = [0.0, 2.0, -1.0];
        let xt = xt_mul(&x, &w);
        let expect = x.transpose() * nalgebra::DVector::from_row_slice(&w);
        assert_eq!(xt, expect.as_slice());
        let xb = x_mul_sparse(&x, &beta);
        let expect = &x * nalgebra::DVector::from_row_slice(&beta);
        assert_eq!(xb, expect.as_slice());
        assert_eq!(cols_t_mul(&x, &[2, 0], &w), vec![xt[2], xt[0]]);
        let mut out = vec![0.0; 4];
        cols_mul_add(&x, &[1, 2], &[2.0, -1.0], &mut out);
        assert_eq!(out, xb);
    }
}
