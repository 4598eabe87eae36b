//! Quadrature discretizations of the interaction drift
//! `P(rho)(x) = \int p(x,y) (y - x) rho(y) dy` and of its adjoint-side
//! counterpart `Q(z)(x) = \int p(y,x) (x - y) z(y) dy`.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::grid::{Grid1D, QuadratureWeights};

/// Relative slack used when testing `|x - y| <= radius` on mesh nodes, so
/// node pairs lying exactly on the radius are not lost to rounding.
const RADIUS_SLACK: f64 = 1e-12;

/// Pairwise interaction weight `p(x, y)`.
#[derive(Clone)]
pub enum InteractionKernel {
    Zero,
    Constant(f64),
    /// `p(x, y) = scale * (x^2 - 1)`.
    Sznajd {
        scale: f64,
    },
    /// `p(x, y) = 1` if `|x - y| <= radius`, else 0 (closed ball).
    BoundedConfidence {
        radius: f64,
    },
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for InteractionKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Sznajd { scale } => write!(f, "Sznajd {{ scale: {scale} }}"),
            Self::BoundedConfidence { radius } => {
                write!(f, "BoundedConfidence {{ radius: {radius} }}")
            }
            Self::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl InteractionKernel {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Constant(c) => *c,
            Self::Sznajd { scale } => scale * (x * x - 1.0),
            Self::BoundedConfidence { radius } => {
                if (x - y).abs() <= radius * (1.0 + RADIUS_SLACK) {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Custom(p) => p(x, y),
        }
    }

    /// `Some(f)` when `p(x, y) = f(x)` does not depend on `y`.
    pub fn first_argument_only(&self) -> Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>> {
        match *self {
            Self::Zero => Some(Arc::new(|_| 0.0)),
            Self::Constant(c) => Some(Arc::new(move |_| c)),
            Self::Sznajd { scale } => Some(Arc::new(move |x| scale * (x * x - 1.0))),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Zero => true,
            Self::Constant(c) => *c == 0.0,
            Self::Sznajd { scale } => *scale == 0.0,
            _ => false,
        }
    }
}

/// How a [`NonlocalMatrix`] is applied. The dense matrix is always kept;
/// the structured forms give the same product in fewer operations.
#[derive(Clone, Debug)]
enum Structure {
    Dense,
    /// Nonzero columns of row i lie in `ranges[i].0 .. ranges[i].1`.
    Banded(Vec<(usize, usize)>),
    /// `(M z)_i = sum_r left[r]_i * <right[r], z>`.
    LowRank {
        left: Vec<Array1<f64>>,
        right: Vec<Array1<f64>>,
    },
}

/// Dense n-by-n quadrature matrix with the trapezoid weights folded in.
#[derive(Clone, Debug)]
pub struct NonlocalMatrix {
    dense: Array2<f64>,
    structure: Structure,
}

impl NonlocalMatrix {
    pub fn dense(&self) -> &Array2<f64> {
        &self.dense
    }

    pub fn dim(&self) -> usize {
        self.dense.nrows()
    }

    pub fn is_zero(&self) -> bool {
        match &self.structure {
            Structure::LowRank { left, .. } => left.iter().all(|l| l.iter().all(|&v| v == 0.0)),
            Structure::Banded(r) => r.iter().all(|(lo, hi)| lo >= hi),
            Structure::Dense => self.dense.iter().all(|&v| v == 0.0),
        }
    }

    pub fn apply(&self, z: ArrayView1<f64>) -> Array1<f64> {
        assert_eq!(z.len(), self.dim());
        match &self.structure {
            Structure::Dense => self.dense.dot(&z),
            Structure::Banded(ranges) => Array1::from_shape_fn(self.dim(), |i| {
                let (lo, hi) = ranges[i];
                let row = self.dense.row(i);
                let mut acc = 0.0;
                for j in lo..hi {
                    acc += row[j] * z[j];
                }
                acc
            }),
            Structure::LowRank { left, right } => {
                let mut y = Array1::zeros(self.dim());
                for (l, r) in left.iter().zip(right) {
                    let c = r.dot(&z);
                    y.scaled_add(c, l);
                }
                y
            }
        }
    }

    /// Assembles from entry formula, checking finiteness and picking a
    /// banded apply when rows have compact support.
    fn assemble(n: usize, entry: impl Fn(usize, usize) -> f64) -> Result<Array2<f64>> {
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let v = entry(i, j);
                if !v.is_finite() {
                    return Err(Error::KernelNotFinite { i, j });
                }
                m[[i, j]] = v;
            }
        }
        Ok(m)
    }

    fn detect_band(dense: &Array2<f64>) -> Structure {
        let n = dense.nrows();
        let mut ranges = Vec::with_capacity(n);
        let mut touched = 0usize;
        for row in dense.rows() {
            let lo = row.iter().position(|&v| v != 0.0);
            let hi = row.iter().rposition(|&v| v != 0.0);
            match (lo, hi) {
                (Some(lo), Some(hi)) => {
                    touched += hi + 1 - lo;
                    ranges.push((lo, hi + 1));
                }
                _ => ranges.push((0, 0)),
            }
        }
        if touched * 2 < n * n {
            Structure::Banded(ranges)
        } else {
            Structure::Dense
        }
    }
}

/// `(P rho)_i = sum_j w_j p(x_i, x_j) (x_j - x_i) rho_j`.
pub fn interaction_matrix(
    g: &Grid1D,
    w: &QuadratureWeights,
    kernel: &InteractionKernel,
) -> Result<NonlocalMatrix> {
    let x = g.nodes();
    let wt = w.as_array();
    let dense = NonlocalMatrix::assemble(g.len(), |i, j| {
        wt[j] * kernel.eval(x[i], x[j]) * (x[j] - x[i])
    })?;
    let structure = match kernel.first_argument_only() {
        Some(f) => {
            let fx = x.mapv(|v| f(v));
            Structure::LowRank {
                left: vec![fx.clone(), -&fx * x],
                right: vec![wt * x, wt.clone()],
            }
        }
        None => NonlocalMatrix::detect_band(&dense),
    };
    Ok(NonlocalMatrix { dense, structure })
}

/// `(Q z)_i = sum_j w_j p(x_j, x_i) (x_i - x_j) z_j`: kernel arguments
/// transposed and displacement sign flipped relative to
/// [`interaction_matrix`].
pub fn adjoint_interaction_matrix(
    g: &Grid1D,
    w: &QuadratureWeights,
    kernel: &InteractionKernel,
) -> Result<NonlocalMatrix> {
    let x = g.nodes();
    let wt = w.as_array();
    let dense = NonlocalMatrix::assemble(g.len(), |i, j| {
        wt[j] * kernel.eval(x[j], x[i]) * (x[i] - x[j])
    })?;
    let structure = match kernel.first_argument_only() {
        Some(f) => {
            let wf = wt * &x.mapv(|v| f(v));
            Structure::LowRank {
                left: vec![x.clone(), Array1::from_elem(g.len(), -1.0)],
                right: vec![wf.clone(), wf * x],
            }
        }
        None => NonlocalMatrix::detect_band(&dense),
    };
    Ok(NonlocalMatrix { dense, structure })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn setup(n: usize) -> (Grid1D, QuadratureWeights) {
        let g = Grid1D::new(-1.0, 1.0, n).unwrap();
        let w = g.trapezoid_weights();
        (g, w)
    }

    #[test]
    fn constant_kernel_hand_values() {
        let (g, w) = setup(3);
        let p = interaction_matrix(&g, &w, &InteractionKernel::Constant(1.0)).unwrap();
        let rho = Array1::from_elem(3, 1.0);
        let r = p.apply(rho.view());
        let d = p.dense().dot(&rho);
        for (k, &e) in [2.0, 0.0, -2.0].iter().enumerate() {
            assert_abs_diff_eq!(r[k], e, epsilon = 1e-14);
            assert_abs_diff_eq!(d[k], e, epsilon = 1e-14);
        }
        let zero = p.apply(Array1::zeros(3).view());
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sznajd_symmetric_density_has_zero_drift_at_center() {
        let (g, w) = setup(101);
        let p = interaction_matrix(&g, &w, &InteractionKernel::Sznajd { scale: 1.0 }).unwrap();
        let rho = g.sample(|x| (-(x * x) * 8.0).exp());
        let r = p.apply(rho.view());
        assert_abs_diff_eq!(r[50], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn symmetric_kernel_q_is_minus_p() {
        let (g, w) = setup(41);
        for k in [
            InteractionKernel::Constant(1.0),
            InteractionKernel::BoundedConfidence { radius: 0.15 },
            InteractionKernel::Custom(Arc::new(|x, y| (-(x - y) * (x - y)).exp())),
        ] {
            let p = interaction_matrix(&g, &w, &k).unwrap();
            let q = adjoint_interaction_matrix(&g, &w, &k).unwrap();
            for (a, b) in p.dense().iter().zip(q.dense().iter()) {
                assert_abs_diff_eq!(*a, -*b, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn asymmetric_kernel_single_term() {
        let (g, w) = setup(3);
        let k = InteractionKernel::Custom(Arc::new(|_x, y| y));
        let q = adjoint_interaction_matrix(&g, &w, &k).unwrap();
        let r = q.apply(Array1::from(vec![0.0, 1.0, 0.0]).view());
        for (k, &e) in [1.0, 0.0, 1.0].iter().enumerate() {
            assert_abs_diff_eq!(r[k], e, epsilon = 1e-15);
        }
        assert!(q.apply(Array1::zeros(3).view()).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_density_reverts_to_centroid() {
        let (g, w) = setup(201);
        let p = interaction_matrix(&g, &w, &InteractionKernel::Constant(1.0)).unwrap();
        let rho = Array1::from_elem(201, 0.5);
        let r = p.apply(rho.view());
        for (ri, xi) in r.iter().zip(g.nodes().iter()) {
            assert_abs_diff_eq!(*ri, -xi, epsilon = 1e-12);
        }
    }

    #[test]
    fn quadrature_converges_second_order() {
        // p = 1, rho = exp(y): exact P(x) = int (y - x) e^y dy over [-1, 1]
        let exact = |x: f64| {
            let e = std::f64::consts::E;
            // int y e^y = [(y-1)e^y] = 0 - (-2/e) = 2/e ; int e^y = e - 1/e
            2.0 / e - x * (e - 1.0 / e)
        };
        let mut errs = Vec::new();
        for &n in &[41, 81, 161] {
            let (g, w) = setup(n);
            let p = interaction_matrix(&g, &w, &InteractionKernel::Constant(1.0)).unwrap();
            let r = p.apply(g.sample(f64::exp).view());
            let e = r
                .iter()
                .zip(g.nodes().iter())
                .map(|(ri, &xi)| (ri - exact(xi)).abs())
                .fold(0.0, f64::max);
            errs.push(e);
        }
        for w in errs.windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!(rate > 1.9 && rate < 2.1, "rate {rate}");
        }
    }

    #[test]
    fn kernel_nan_reported() {
        let (g, w) = setup(5);
        let k =
            InteractionKernel::Custom(Arc::new(
                |x, y| if x > 0.9 && y < -0.9 { f64::NAN } else { 1.0 },
            ));
        match interaction_matrix(&g, &w, &k) {
            Err(Error::KernelNotFinite { i, j }) => assert_eq!((i, j), (4, 0)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn closed_ball_includes_radius() {
        let k = InteractionKernel::BoundedConfidence { radius: 0.15 };
        assert_eq!(k.eval(0.0, 0.15), 1.0);
        assert_eq!(k.eval(-0.5, -0.35), 1.0);
        assert_eq!(k.eval(0.0, 0.1501), 0.0);
    }

    proptest! {
        #[test]
        fn structured_apply_matches_dense(
            seed in proptest::collection::vec(-1.0f64..1.0, 31),
            which in 0usize..4,
        ) {
            let (g, w) = setup(31);
            let k = match which {
                0 => InteractionKernel::Sznajd { scale: 1.0 },
                1 => InteractionKernel::Sznajd { scale: 0.05 },
                2 => InteractionKernel::BoundedConfidence { radius: 0.15 },
                _ => InteractionKernel::Constant(-0.7),
            };
            let z = Array1::from(seed);
            for m in [
                interaction_matrix(&g, &w, &k).unwrap(),
                adjoint_interaction_matrix(&g, &w, &k).unwrap(),
            ] {
                let fast = m.apply(z.view());
                let slow = m.dense().dot(&z);
                for (a, b) in fast.iter().zip(slow.iter()) {
                    prop_assert!((a - b).abs() <= 1e-13);
                }
            }
        }
    }
}
