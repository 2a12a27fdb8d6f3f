//! Symmetric linear operators acting on node signals.

use ndarray::{Array2, ArrayView2};

use crate::sparse::SparseMatrix;

/// A square linear map applied to vectors and to blocks of column vectors.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    /// `y = M x`.
    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// `M X` for a `dim × d` block. The default applies [`apply`](Self::apply) column by column.
    fn apply_block(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.dim(), "operator block dimension");
        let mut out = Array2::zeros(x.raw_dim());
        let mut col_in = vec![0.0; self.dim()];
        let mut col_out = vec![0.0; self.dim()];
        for j in 0..x.ncols() {
            col_in.iter_mut().zip(x.column(j)).for_each(|(a, &b)| *a = b);
            self.apply(&col_in, &mut col_out);
            out.column_mut(j).iter_mut().zip(&col_out).for_each(|(a, &b)| *a = b);
        }
        out
    }
}

impl LinearOperator for SparseMatrix {
    fn dim(&self) -> usize {
        assert_eq!(self.rows(), self.cols(), "operator must be square");
        self.rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y);
    }

    fn apply_block(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        self.spmm(x).expect("operator block dimension")
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }

    fn apply_block(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        (**self).apply_block(x)
    }
}

/// A dense matrix viewed as an operator. Used for small fixtures and oracles.
#[derive(Debug, Clone)]
pub struct DenseOperator(pub Array2<f64>);

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            *out = self.0.row(r).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn apply_block(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        self.0.dot(&x)
    }
}

/// The identity on `n`-dimensional signals.
#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }

    fn apply_block(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.to_owned()
    }
}

/// `I − M`, applied lazily as `x − M x`.
#[derive(Debug, Clone, Copy)]
pub struct IdentityMinus<O>(pub O);

impl<O: LinearOperator> LinearOperator for IdentityMinus<O> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.0.apply(x, y);
        y.iter_mut().zip(x).for_each(|(yi, &xi)| *yi = xi - *yi);
    }

    fn apply_block(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mx = self.0.apply_block(x);
        &x - &mx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn default_block_apply_agrees_with_override() {
        struct ByColumn(DenseOperator);
        impl LinearOperator for ByColumn {
            fn dim(&self) -> usize {
                self.0.dim()
            }
            fn apply(&self, x: &[f64], y: &mut [f64]) {
                self.0.apply(x, y)
            }
        }
        let m = array![[1.0, 2.0], [2.0, -1.0]];
        let x = array![[1.0, 0.5, 3.0], [-2.0, 1.0, 0.0]];
        let a = ByColumn(DenseOperator(m.clone())).apply_block(x.view());
        assert_eq!(a, m.dot(&x));
    }

    #[test]
    fn identity_minus_is_lazy_complement() {
        let m = SparseMatrix::from_triplets(2, 2, [(0, 1, 0.5), (1, 0, 0.5)]).unwrap();
        let mut y = [0.0; 2];
        IdentityMinus(&m).apply(&[2.0, 4.0], &mut y);
        assert_eq!(y, [0.0, 3.0]);
    }
}
