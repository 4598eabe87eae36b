//! Uniform node-based 1D mesh, second-order finite-difference stencils and
//! trapezoidal quadrature.
//!
//! Every operator built here shares one three-point sparsity pattern:
//! row 0 touches columns 0..3, interior row i touches i-1..i+2 and the last
//! row touches n-3..n. Linear combinations and diagonal scalings of these
//! operators therefore stay in the same [`StencilMatrix`] representation.

use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut1};

use crate::error::{Error, Result};

/// Uniform grid on `[a, b]` including both endpoints.
#[derive(Clone, Debug)]
pub struct Grid1D {
    a: f64,
    b: f64,
    h: f64,
    nodes: Array1<f64>,
}

impl Grid1D {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(b > a) || n < 3 || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidDomain { a, b, n });
        }
        let h = (b - a) / (n - 1) as f64;
        let mut nodes = Array1::from_shape_fn(n, |i| a + i as f64 * h);
        // pin the right endpoint exactly
        nodes[n - 1] = b;
        Ok(Self { a, b, h, nodes })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    pub fn nodes(&self) -> &Array1<f64> {
        &self.nodes
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Array1<f64> {
        self.nodes.mapv(f)
    }

    pub fn trapezoid_weights(&self) -> QuadratureWeights {
        let n = self.len();
        let mut w = Array1::from_elem(n, self.h);
        w[0] = 0.5 * self.h;
        w[n - 1] = 0.5 * self.h;
        QuadratureWeights { w }
    }
}

/// Trapezoidal quadrature weights on a [`Grid1D`].
#[derive(Clone, Debug)]
pub struct QuadratureWeights {
    w: Array1<f64>,
}

impl QuadratureWeights {
    pub fn as_array(&self) -> &Array1<f64> {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// Trapezoidal integral of a grid function.
    pub fn integrate(&self, f: ArrayView1<f64>) -> f64 {
        self.w.dot(&f)
    }
}

/// Position of the diagonal entry inside a row's three-entry stencil.
#[inline]
fn diag_slot(i: usize, n: usize) -> usize {
    if i == 0 {
        0
    } else if i == n - 1 {
        2
    } else {
        1
    }
}

/// First column touched by row `i`.
#[inline]
fn first_col(i: usize, n: usize) -> usize {
    if i == 0 {
        0
    } else if i == n - 1 {
        n - 3
    } else {
        i - 1
    }
}

/// Banded n-by-n operator with three entries per row (see module docs).
#[derive(Clone, Debug, PartialEq)]
pub struct StencilMatrix {
    vals: Vec<[f64; 3]>,
}

impl StencilMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 3, "stencil operators need at least 3 nodes");
        Self {
            vals: vec![[0.0; 3]; n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        m.add_diagonal(ArrayView1::from(&vec![1.0; n]));
        m
    }

    pub fn dim(&self) -> usize {
        self.vals.len()
    }

    /// Row `i` as `(first column, three coefficients)`.
    pub fn row(&self, i: usize) -> (usize, [f64; 3]) {
        (first_col(i, self.dim()), self.vals[i])
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64; 3] {
        &mut self.vals[i]
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.vals[i][diag_slot(i, self.dim())]
    }

    pub fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut y = Array1::zeros(self.dim());
        self.apply_into(x, y.view_mut());
        y
    }

    pub fn apply_into(&self, x: ArrayView1<f64>, mut y: ArrayViewMut1<f64>) {
        let n = self.dim();
        assert_eq!(x.len(), n);
        assert_eq!(y.len(), n);
        for (i, r) in self.vals.iter().enumerate() {
            let c = first_col(i, n);
            y[i] = r[0] * x[c] + r[1] * x[c + 1] + r[2] * x[c + 2];
        }
    }

    pub fn scaled(mut self, alpha: f64) -> Self {
        for r in &mut self.vals {
            for v in r.iter_mut() {
                *v *= alpha;
            }
        }
        self
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &StencilMatrix) {
        assert_eq!(self.dim(), other.dim());
        for (r, o) in self.vals.iter_mut().zip(&other.vals) {
            for k in 0..3 {
                r[k] += alpha * o[k];
            }
        }
    }

    /// `self += alpha * diag(d) * other` (row scaling of `other`).
    pub fn add_row_scaled(&mut self, alpha: f64, d: ArrayView1<f64>, other: &StencilMatrix) {
        assert_eq!(self.dim(), other.dim());
        assert_eq!(d.len(), self.dim());
        for ((r, o), &di) in self.vals.iter_mut().zip(&other.vals).zip(d.iter()) {
            let s = alpha * di;
            for k in 0..3 {
                r[k] += s * o[k];
            }
        }
    }

    pub fn add_diagonal(&mut self, d: ArrayView1<f64>) {
        let n = self.dim();
        assert_eq!(d.len(), n);
        for i in 0..n {
            self.vals[i][diag_slot(i, n)] += d[i];
        }
    }

    pub fn add_to_diagonal(&mut self, i: usize, value: f64) {
        let n = self.dim();
        self.vals[i][diag_slot(i, n)] += value;
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.dim();
        let mut m = Array2::zeros((n, n));
        for (i, r) in self.vals.iter().enumerate() {
            let c = first_col(i, n);
            for k in 0..3 {
                m[[i, c + k]] += r[k];
            }
        }
        m
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        self.vals
            .iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Centered first derivative with second-order one-sided closing rows.
pub fn first_derivative_matrix(g: &Grid1D) -> StencilMatrix {
    let n = g.len();
    let s = 0.5 / g.h();
    let mut d = StencilMatrix::zeros(n);
    *d.row_mut(0) = [-3.0 * s, 4.0 * s, -s];
    for i in 1..n - 1 {
        *d.row_mut(i) = [-s, 0.0, s];
    }
    *d.row_mut(n - 1) = [s, -4.0 * s, 3.0 * s];
    d
}

/// Centered second derivative. The two boundary rows hold only the
/// in-domain part of the centered stencil, `(-2 y_1 + y_2) / h^2`; the ghost
/// contribution is added by [`apply_robin_rows`].
pub fn second_derivative_matrix(g: &Grid1D) -> StencilMatrix {
    let n = g.len();
    let s = 1.0 / (g.h() * g.h());
    let mut d = StencilMatrix::zeros(n);
    *d.row_mut(0) = [-2.0 * s, s, 0.0];
    for i in 1..n - 1 {
        *d.row_mut(i) = [s, -2.0 * s, s];
    }
    *d.row_mut(n - 1) = [0.0, s, -2.0 * s];
    d
}

/// Eliminates the ghost values of a ghost-ready second-derivative operator
/// under Robin conditions `y'(a) = c_a y(a)` and `y'(b) = c_b y(b)`.
///
/// With centered ghost formulas `y_0 = y_2 - 2h c_a y_1` and
/// `y_{n+1} = y_{n-1} + 2h c_b y_n` the closing rows become
/// `(2 y_2 - 2 y_1 - 2h c_a y_1) / h^2` and
/// `(2 y_{n-1} - 2 y_n + 2h c_b y_n) / h^2`.
pub fn apply_robin_rows(d2: &mut StencilMatrix, h: f64, c_a: f64, c_b: f64) {
    let n = d2.dim();
    let s = 1.0 / (h * h);
    let r0 = d2.row_mut(0);
    r0[1] += s;
    r0[0] -= 2.0 * h * c_a * s;
    let rn = d2.row_mut(n - 1);
    rn[1] += s;
    rn[2] += 2.0 * h * c_b * s;
}

/// `d^2/dx^2` closed with Robin rows.
pub fn robin_laplacian(g: &Grid1D, c_a: f64, c_b: f64) -> StencilMatrix {
    let mut d2 = second_derivative_matrix(g);
    apply_robin_rows(&mut d2, g.h(), c_a, c_b);
    d2
}
