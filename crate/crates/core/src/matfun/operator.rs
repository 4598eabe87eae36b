use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut1};

use crate::grid::StencilMatrix;

/// A square linear map available through matrix-vector products.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    fn apply_into(&self, x: ArrayView1<f64>, y: ArrayViewMut1<f64>);

    fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut y = Array1::zeros(self.dim());
        self.apply_into(x, y.view_mut());
        y
    }

    /// Explicit matrix, built column by column unless overridden.
    fn to_dense(&self) -> Array2<f64> {
        let n = self.dim();
        let mut m = Array2::zeros((n, n));
        let mut e = Array1::zeros(n);
        for j in 0..n {
            e[j] = 1.0;
            let col = self.apply(e.view());
            m.column_mut(j).assign(&col);
            e[j] = 0.0;
        }
        m
    }
}

impl LinearOperator for StencilMatrix {
    fn dim(&self) -> usize {
        StencilMatrix::dim(self)
    }

    fn apply_into(&self, x: ArrayView1<f64>, y: ArrayViewMut1<f64>) {
        StencilMatrix::apply_into(self, x, y)
    }

    fn to_dense(&self) -> Array2<f64> {
        StencilMatrix::to_dense(self)
    }
}

impl LinearOperator for Array2<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply_into(&self, x: ArrayView1<f64>, mut y: ArrayViewMut1<f64>) {
        y.assign(&self.dot(&x));
    }

    fn to_dense(&self) -> Array2<f64> {
        self.clone()
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply_into(&self, x: ArrayView1<f64>, y: ArrayViewMut1<f64>) {
        (**self).apply_into(x, y)
    }

    fn to_dense(&self) -> Array2<f64> {
        (**self).to_dense()
    }
}

/// The zero map on `R^n`.
#[derive(Clone, Copy, Debug)]
pub struct ZeroOperator(pub usize);

impl LinearOperator for ZeroOperator {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply_into(&self, _x: ArrayView1<f64>, mut y: ArrayViewMut1<f64>) {
        y.fill(0.0);
    }
}
