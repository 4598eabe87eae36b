//! Evaluation of the exponential-integrator kernel
//! `e^{tau X} v + tau phi_1(tau X) w`, with `phi_1(z) = (e^z - 1) / z`.
//!
//! Two routes are provided. The dense route exponentiates the augmented
//! matrix `tau [[X, w], [0, 0]]` and reads off the first n rows of its action
//! on `[v; 1]`; for a fixed `X` and step the pair `e^{tau X}`,
//! `tau phi_1(tau X)` can also be formed once and reused ([`DensePhiPair`]).
//! The Krylov route ([`phi1_combined_krylov`]) only needs products with `X`.

mod expm;
mod krylov;
mod operator;

use ndarray::{s, Array1, Array2, ArrayView1};

pub use self::expm::{expm, norm1};
pub use self::krylov::{phi1_combined_krylov, KrylovOptions};
pub use self::operator::{LinearOperator, ZeroOperator};
use crate::error::{Error, Result};

/// Inputs of one kernel evaluation.
pub struct PhiActionRequest<'a> {
    pub tau: f64,
    pub op: &'a dyn LinearOperator,
    pub v: ArrayView1<'a, f64>,
    pub w: ArrayView1<'a, f64>,
    pub tol: f64,
}

impl PhiActionRequest<'_> {
    fn validate(&self) -> Result<()> {
        let n = self.op.dim();
        if self.v.len() != n || self.w.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "operator is {n}x{n} but v has {} and w has {} entries",
                self.v.len(),
                self.w.len()
            )));
        }
        if !(self.tau > 0.0) || !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tau = {} and tol = {} must be positive",
                self.tau, self.tol
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PhiStats {
    /// Largest Krylov subspace used (0 on the dense route).
    pub krylov_dim: usize,
    pub substeps: usize,
    pub matvecs: usize,
}

#[derive(Clone, Debug)]
pub struct PhiActionResult {
    pub y: Array1<f64>,
    pub stats: PhiStats,
}

/// `exp(tau [[X, w], [0, 0]]) [v; 1]`, first n rows.
pub fn phi1_combined_dense(req: &PhiActionRequest) -> Result<PhiActionResult> {
    req.validate()?;
    let n = req.op.dim();
    let x = req.op.to_dense();
    let mut aug = Array2::zeros((n + 1, n + 1));
    aug.slice_mut(s![..n, ..n]).assign(&(&x * req.tau));
    aug.slice_mut(s![..n, n]).assign(&(&req.w * req.tau));
    let e = expm(&aug)?;
    let mut y = e.slice(s![..n, ..n]).dot(&req.v);
    y += &e.slice(s![..n, n]);
    Ok(PhiActionResult {
        y,
        stats: PhiStats::default(),
    })
}

pub fn phi1_combined_krylov_request(
    req: &PhiActionRequest,
    max_dim: usize,
    max_substeps: usize,
) -> Result<PhiActionResult> {
    req.validate()?;
    phi1_combined_krylov(
        req.op,
        req.tau,
        req.v,
        req.w,
        &KrylovOptions {
            tol: req.tol,
            max_dim,
            max_substeps,
        },
    )
}

/// Precomputed `e^{tau X}` and `tau phi_1(tau X)` for a fixed `X` and step.
#[derive(Clone, Debug)]
pub struct DensePhiPair {
    tau: f64,
    exp: Array2<f64>,
    tau_phi1: Array2<f64>,
}

impl DensePhiPair {
    /// Both blocks come from one exponential of `[[tau X, tau I], [0, 0]]`.
    pub fn new(op: &dyn LinearOperator, tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau = {tau}")));
        }
        let n = op.dim();
        let x = op.to_dense();
        let mut big = Array2::zeros((2 * n, 2 * n));
        big.slice_mut(s![..n, ..n]).assign(&(&x * tau));
        for i in 0..n {
            big[[i, n + i]] = tau;
        }
        let e = expm(&big)?;
        Ok(Self {
            tau,
            exp: e.slice(s![..n, ..n]).to_owned(),
            tau_phi1: e.slice(s![..n, n..]).to_owned(),
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn dim(&self) -> usize {
        self.exp.nrows()
    }

    pub fn apply(&self, v: ArrayView1<f64>, w: ArrayView1<f64>) -> Result<Array1<f64>> {
        if v.len() != self.dim() || w.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "cached pair is {} but v has {} and w has {}",
                self.dim(),
                v.len(),
                w.len()
            )));
        }
        Ok(self.exp.dot(&v) + self.tau_phi1.dot(&w))
    }
}

/// How [`PhiSolver`] evaluates a single kernel request.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhiMethod {
    /// Krylov per request; dense cached pairs for constant operators up to
    /// the dense threshold.
    Auto,
    Dense,
    Krylov,
}

/// Kernel evaluator shared by the steppers.
#[derive(Clone, Copy, Debug)]
pub struct PhiSolver {
    pub method: PhiMethod,
    pub krylov: KrylovOptions,
    /// Largest dimension for which a constant operator gets a dense cache.
    pub dense_threshold: usize,
}

impl Default for PhiSolver {
    fn default() -> Self {
        Self {
            method: PhiMethod::Auto,
            krylov: KrylovOptions::default(),
            dense_threshold: 400,
        }
    }
}

impl PhiSolver {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.krylov.tol = tol;
        self
    }

    pub fn combined(
        &self,
        tau: f64,
        op: &dyn LinearOperator,
        v: ArrayView1<f64>,
        w: ArrayView1<f64>,
    ) -> Result<PhiActionResult> {
        let req = PhiActionRequest {
            tau,
            op,
            v,
            w,
            tol: self.krylov.tol,
        };
        match self.method {
            PhiMethod::Dense => phi1_combined_dense(&req),
            PhiMethod::Auto | PhiMethod::Krylov => {
                phi1_combined_krylov_request(&req, self.krylov.max_dim, self.krylov.max_substeps)
            }
        }
    }

    /// Whether a constant operator of dimension `n` should be cached densely.
    pub fn caches_constant(&self, n: usize) -> bool {
        match self.method {
            PhiMethod::Dense => true,
            PhiMethod::Auto => n <= self.dense_threshold,
            PhiMethod::Krylov => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn phi1(z: f64) -> f64 {
        if z.abs() < 1e-8 {
            1.0 + z / 2.0
        } else {
            z.exp_m1() / z
        }
    }

    fn request<'a>(
        tau: f64,
        op: &'a dyn LinearOperator,
        v: &'a Array1<f64>,
        w: &'a Array1<f64>,
        tol: f64,
    ) -> PhiActionRequest<'a> {
        PhiActionRequest {
            tau,
            op,
            v: v.view(),
            w: w.view(),
            tol,
        }
    }

    #[test]
    fn dense_zero_operator() {
        let x = Array2::<f64>::zeros((3, 3));
        let v = array![1.0, -2.0, 0.5];
        let w = array![0.25, 1.0, -1.0];
        let r = phi1_combined_dense(&request(0.7, &x, &v, &w, 1e-10)).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(r.y[i], v[i] + 0.7 * w[i], epsilon = 1e-15);
        }
        let x = Array2::<f64>::zeros((1, 1));
        let r = phi1_combined_dense(&request(1.0, &x, &array![3.0], &array![2.0], 1e-10)).unwrap();
        assert_abs_diff_eq!(r.y[0], 5.0, epsilon = 1e-15);
    }

    #[test]
    fn dense_diagonal_closed_form() {
        let x = array![[-1.0, 0.0], [0.0, -2.0]];
        let v = array![1.0, 0.0];
        let w = array![0.0, 1.0];
        let r = phi1_combined_dense(&request(1.0, &x, &v, &w, 1e-10)).unwrap();
        assert_abs_diff_eq!(r.y[0], (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(r.y[1], (1.0 - (-2.0f64).exp()) / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.y[0], 0.367879, epsilon = 1e-6);
        assert_abs_diff_eq!(r.y[1], 0.432332, epsilon = 1e-6);
    }

    #[test]
    fn dimension_mismatch() {
        let x = Array2::<f64>::zeros((3, 3));
        let v = array![1.0, 2.0];
        let w = array![1.0, 2.0, 3.0];
        assert!(matches!(
            phi1_combined_dense(&request(1.0, &x, &v, &w, 1e-10)),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(phi1_combined_krylov_request(&request(1.0, &x, &v, &w, 1e-10), 128, 100).is_err());
    }

    #[test]
    fn krylov_zero_operator_and_null_input() {
        let op = ZeroOperator(5);
        let v = Array1::from_shape_fn(5, |i| i as f64 - 2.0);
        let w = Array1::from_shape_fn(5, |i| (i as f64).sin());
        for tol in [1e-2, 1e-12] {
            let r =
                phi1_combined_krylov_request(&request(2.0, &op, &v, &w, tol), 128, 100).unwrap();
            for i in 0..5 {
                assert_abs_diff_eq!(r.y[i], v[i] + 2.0 * w[i], epsilon = 1e-14);
            }
        }
        let z = Array1::zeros(5);
        let r = phi1_combined_krylov_request(&request(2.0, &op, &z, &z, 1e-10), 128, 100).unwrap();
        assert!(r.y.iter().all(|&v| v == 0.0));
        assert_eq!(r.stats.substeps, 0);
    }

    fn random_dissipative(n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        // nonnormal: symmetric negative part plus a skew perturbation
        let mut b = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
        b /= (n as f64).sqrt();
        let sym = b.t().dot(&b);
        let skew = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0)) * 0.5;
        let skew = &skew - &skew.t();
        let lam = norm1(&sym.view()).max(1e-12);
        -(sym * (50.0 / lam)) + skew
    }

    #[test]
    fn krylov_matches_dense_on_random_dissipative() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100;
        let x = random_dissipative(n, &mut rng);
        let v = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
        let w = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
        let d = phi1_combined_dense(&request(1.0, &x, &v, &w, 1e-10)).unwrap();
        let k = phi1_combined_krylov_request(&request(1.0, &x, &v, &w, 1e-10), 128, 1000).unwrap();
        let err = (&d.y - &k.y).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err <= 1e-9, "err {err}");
    }

    #[test]
    fn krylov_substeps_when_subspace_is_capped() {
        // 1D heat operator with a large step forces substepping at a small cap
        let n = 200;
        let h = 1.0 / (n - 1) as f64;
        let mut x = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            x[[i, i]] = -2.0 / (h * h);
            if i > 0 {
                x[[i, i - 1]] = 1.0 / (h * h);
            }
            if i + 1 < n {
                x[[i, i + 1]] = 1.0 / (h * h);
            }
        }
        let v = Array1::from_shape_fn(n, |i| ((i * 7919) % 13) as f64 / 13.0);
        let w = Array1::from_elem(n, 1.0);
        let tau = 0.01;
        let d = phi1_combined_dense(&request(tau, &x, &v, &w, 1e-10)).unwrap();
        let k = phi1_combined_krylov_request(&request(tau, &x, &v, &w, 1e-10), 24, 10_000).unwrap();
        assert!(k.stats.substeps > 1);
        let scale = 1.0 + tau;
        let err = (&d.y - &k.y).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err <= 10.0 * 1e-10 * scale, "err {err}");
    }

    #[test]
    fn krylov_nonconvergence_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 60;
        let x = random_dissipative(n, &mut rng) * 100.0;
        let v = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
        let w = Array1::zeros(n);
        let r = phi1_combined_krylov_request(&request(1.0, &x, &v, &w, 1e-12), 3, 2);
        assert!(matches!(r, Err(Error::KrylovNonConvergence { .. })));
    }

    #[test]
    fn dense_pair_matches_augmented() {
        let x = array![[-3.0, 1.0, 0.0], [0.5, -2.0, 0.2], [0.0, 0.3, -1.0]];
        let v = array![1.0, -1.0, 2.0];
        let w = array![0.3, 0.0, -0.7];
        let pair = DensePhiPair::new(&x, 0.4).unwrap();
        let a = pair.apply(v.view(), w.view()).unwrap();
        let b = phi1_combined_dense(&request(0.4, &x, &v, &w, 1e-10)).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(a[i], b.y[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn phi1_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 40;
        let x = random_dissipative(n, &mut rng);
        let v = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
        let z = Array1::zeros(n);
        let tau = 0.3;
        // w = 0 is the plain exponential action
        let r = phi1_combined_krylov_request(&request(tau, &x, &v, &z, 1e-12), 128, 1000).unwrap();
        let e = expm(&(&x * tau)).unwrap().dot(&v);
        for i in 0..n {
            assert_abs_diff_eq!(r.y[i], e[i], epsilon = 1e-11);
        }
        // v = 0 gives tau phi_1(tau X) w
        let pair = DensePhiPair::new(&x, tau).unwrap();
        let r = phi1_combined_krylov_request(&request(tau, &x, &z, &v, 1e-12), 128, 1000).unwrap();
        let p = pair.apply(z.view(), v.view()).unwrap();
        for i in 0..n {
            assert_abs_diff_eq!(r.y[i], p[i], epsilon = 1e-11);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn eigenvector_inputs_are_exact(lam in -40.0f64..5.0, mu in -40.0f64..5.0, tau in 0.01f64..2.0) {
            // block-diagonal X with eigenvectors e_0 (lam) and e_1 (mu)
            let n = 6;
            let mut x = Array2::<f64>::zeros((n, n));
            x[[0, 0]] = lam;
            x[[1, 1]] = mu;
            for i in 2..n {
                x[[i, i]] = -1.0;
                x[[i, (i + 1).min(n - 1)]] += 0.5;
            }
            let mut v = Array1::zeros(n);
            v[0] = 1.3;
            let mut w = Array1::zeros(n);
            w[0] = -0.4;
            let expect = (tau * lam).exp() * 1.3 + tau * phi1(tau * lam) * -0.4;
            for r in [
                phi1_combined_dense(&request(tau, &x, &v, &w, 1e-12)).unwrap(),
                phi1_combined_krylov_request(&request(tau, &x, &v, &w, 1e-12), 128, 1000).unwrap(),
            ] {
                prop_assert!((r.y[0] - expect).abs() <= 1e-12 * expect.abs().max(1e-300) + 1e-15);
                prop_assert!(r.y.iter().skip(1).all(|v| v.abs() < 1e-14));
            }
        }

        #[test]
        fn krylov_agrees_with_dense(seed in 0u64..1000, n in 2usize..60, tau in 0.05f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_dissipative(n, &mut rng);
            let v = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
            let w = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
            let tol = 1e-10;
            let d = phi1_combined_dense(&request(tau, &x, &v, &w, tol)).unwrap();
            let k = phi1_combined_krylov_request(&request(tau, &x, &v, &w, tol), 128, 1000).unwrap();
            let scale = v.iter().fold(0.0f64, |m, a| m.max(a.abs())) + tau * w.iter().fold(0.0f64, |m, a| m.max(a.abs()));
            let err = (&d.y - &k.y).iter().fold(0.0f64, |m, a| m.max(a.abs()));
            prop_assert!(err <= 10.0 * tol * scale, "err {} scale {}", err, scale);
        }
    }
}
