//! One-step exponential integrators for `y' = A(t) y + g(t, y)`.
//!
//! Exponential Euler advances with `e^{tau A} y + tau phi_1(tau A) g(t_k, y_k)`
//! for a constant `A`; the Euler-Magnus variant freezes a time-dependent `A`
//! at the step's anchor instant. Backward-in-time problems
//! `-y' = A(t) y + g(t, y)` are marched by wrapping them in [`TimeReversed`].

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::matfun::{DensePhiPair, LinearOperator, PhiSolver};

/// Instants `0 = t_0 < t_1 < ... < t_m = T`.
#[derive(Clone, Debug)]
pub struct TimeGrid {
    t: Array1<f64>,
}

impl TimeGrid {
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() || steps == 0 {
            return Err(Error::InvalidParameter(format!(
                "time grid needs T > 0 and m >= 1 (T = {horizon}, m = {steps})"
            )));
        }
        let tau = horizon / steps as f64;
        let mut t = Array1::from_shape_fn(steps + 1, |k| k as f64 * tau);
        t[steps] = horizon;
        Ok(Self { t })
    }

    pub fn from_instants(t: Vec<f64>) -> Result<Self> {
        if t.len() < 2 || t[0] != 0.0 || t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "time instants must start at 0 and increase strictly".into(),
            ));
        }
        Ok(Self { t: Array1::from(t) })
    }

    /// Number of steps `m`.
    pub fn steps(&self) -> usize {
        self.t.len() - 1
    }

    pub fn instant(&self, k: usize) -> f64 {
        self.t[k]
    }

    pub fn instants(&self) -> &Array1<f64> {
        &self.t
    }

    /// `tau_{k+1} = t_{k+1} - t_k`.
    pub fn step(&self, k: usize) -> f64 {
        self.t[k + 1] - self.t[k]
    }

    pub fn horizon(&self) -> f64 {
        self.t[self.steps()]
    }

    pub fn is_uniform(&self) -> bool {
        let tau = self.horizon() / self.steps() as f64;
        (0..self.steps()).all(|k| (self.step(k) - tau).abs() <= 1e-12 * tau)
    }

    /// Index of the instant equal to `t` up to rounding.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let m = self.steps();
        let slack = 1e-9 * self.horizon() / m as f64;
        // instants are sorted, so a binary search finds the nearest candidate
        let pos = self
            .t
            .as_slice()
            .expect("contiguous")
            .partition_point(|&x| x < t);
        for k in [pos.saturating_sub(1), pos.min(m)] {
            if (self.t[k] - t).abs() <= slack {
                return Ok(k);
            }
        }
        Err(Error::OffGrid { t })
    }

    /// The grid of `s = T - t`, listed increasingly.
    pub fn reversed(&self) -> Self {
        let horizon = self.horizon();
        let m = self.steps();
        let mut s = Array1::from_shape_fn(m + 1, |j| horizon - self.t[m - j]);
        s[0] = 0.0;
        s[m] = horizon;
        Self { t: s }
    }
}

/// Right-hand side split into a linear operator and a remainder.
pub trait SemilinearSystem {
    type Linear: LinearOperator;

    fn dim(&self) -> usize;

    fn linear_part(&self, t: f64) -> Result<Self::Linear>;

    fn nonlinear_part(&self, t: f64, y: ArrayView1<f64>) -> Result<Array1<f64>>;

    /// True when `linear_part` does not depend on `t`.
    fn has_constant_linear_part(&self) -> bool {
        false
    }
}

/// `dy/ds = A(T - s) y + g(T - s, y)`, the forward-in-`s` form of
/// `-y' = A(t) y + g(t, y)`.
pub struct TimeReversed<'a, S> {
    inner: &'a S,
    horizon: f64,
}

impl<'a, S> TimeReversed<'a, S> {
    pub fn new(inner: &'a S, horizon: f64) -> Self {
        Self { inner, horizon }
    }
}

impl<S: SemilinearSystem> SemilinearSystem for TimeReversed<'_, S> {
    type Linear = S::Linear;

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn linear_part(&self, s: f64) -> Result<Self::Linear> {
        self.inner.linear_part(self.horizon - s)
    }

    fn nonlinear_part(&self, s: f64, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.inner.nonlinear_part(self.horizon - s, y)
    }

    fn has_constant_linear_part(&self) -> bool {
        self.inner.has_constant_linear_part()
    }
}

fn check_state<S: SemilinearSystem>(sys: &S, tau: f64, y: ArrayView1<f64>) -> Result<()> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "step {tau} must be positive"
        )));
    }
    if y.len() != sys.dim() {
        return Err(Error::DimensionMismatch(format!(
            "state has {} entries, system has {}",
            y.len(),
            sys.dim()
        )));
    }
    Ok(())
}

/// Exponential Euler step for a system with a constant linear part.
pub fn exp_euler_step<S: SemilinearSystem>(
    sys: &S,
    phi: &PhiSolver,
    t_k: f64,
    tau: f64,
    y_k: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    if !sys.has_constant_linear_part() {
        return Err(Error::InvalidParameter(
            "exponential Euler needs a constant linear part; use the Euler-Magnus step".into(),
        ));
    }
    exp_euler_magnus_step(sys, phi, t_k, tau, y_k)
}

/// Exponential Euler-Magnus step: linear part and remainder frozen at
/// `t_anchor`.
pub fn exp_euler_magnus_step<S: SemilinearSystem>(
    sys: &S,
    phi: &PhiSolver,
    t_anchor: f64,
    tau: f64,
    y_in: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    check_state(sys, tau, y_in)?;
    let a = sys.linear_part(t_anchor)?;
    let g = sys.nonlinear_part(t_anchor, y_in)?;
    Ok(phi.combined(tau, &a, y_in, g.view())?.y)
}

/// Marches `y_0` across the whole grid and returns every slice `y_0 .. y_m`.
///
/// A constant linear part on a uniform grid is exponentiated once
/// (dense pair) when the solver allows it; otherwise every step goes
/// through [`exp_euler_magnus_step`].
pub fn march<S: SemilinearSystem>(
    sys: &S,
    phi: &PhiSolver,
    tg: &TimeGrid,
    y0: ArrayView1<f64>,
) -> Result<Vec<Array1<f64>>> {
    let m = tg.steps();
    check_state(sys, tg.step(0), y0)?;
    let mut out = Vec::with_capacity(m + 1);
    out.push(y0.to_owned());

    let cached =
        if sys.has_constant_linear_part() && tg.is_uniform() && phi.caches_constant(sys.dim()) {
            let a = sys.linear_part(0.0)?;
            Some(DensePhiPair::new(&a, tg.step(0))?)
        } else {
            None
        };

    for k in 0..m {
        let t_k = tg.instant(k);
        let y_k = out[k].view();
        let next = match &cached {
            Some(pair) => sys
                .nonlinear_part(t_k, y_k)
                .and_then(|g| pair.apply(y_k, g.view())),
            None => exp_euler_magnus_step(sys, phi, t_k, tg.step(k), y_k),
        }
        .map_err(|e| Error::at_step(k, e))?;
        if let Some(i) = next.iter().position(|v| !v.is_finite()) {
            return Err(Error::at_step(
                k,
                Error::NotFinite {
                    what: "time step",
                    index: i,
                },
            ));
        }
        out.push(next);
    }
    Ok(out)
}

/// Solves `-y' = A(t) y + g(t, y)`, `y(T) = y_T` backward:
/// `y_k = e^{tau A(t_{k+1})} y_{k+1} + tau phi_1(tau A(t_{k+1})) g(t_{k+1}, y_{k+1})`.
/// Slices are returned in forward order `y_0 .. y_m`.
pub fn march_backward<S: SemilinearSystem>(
    sys: &S,
    phi: &PhiSolver,
    tg: &TimeGrid,
    y_terminal: ArrayView1<f64>,
) -> Result<Vec<Array1<f64>>> {
    let reversed = TimeReversed::new(sys, tg.horizon());
    let m = tg.steps();
    let mut out = march(&reversed, phi, &tg.reversed(), y_terminal).map_err(|e| match e {
        // report the step in the original (forward) numbering
        Error::StepFailed { step, source } => Error::StepFailed {
            step: m - 1 - step,
            source,
        },
        other => other,
    })?;
    out.reverse();
    Ok(out)
}
