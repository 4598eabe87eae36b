//! Model description and its discretization on a grid.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, Zip};

use crate::error::{Error, Result};
use crate::grid::{
    first_derivative_matrix, robin_laplacian, Grid1D, QuadratureWeights, StencilMatrix,
};
use crate::nonlocal::{
    adjoint_interaction_matrix, interaction_matrix, InteractionKernel, NonlocalMatrix,
};
use crate::steppers::TimeGrid;

pub type Profile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// `(t, x, rho) -> value`.
pub type PointwiseFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Selective function `s(t, x, rho)` with its density derivative.
#[derive(Clone)]
pub enum Selective {
    Constant(f64),
    /// `s = 1 - rho`.
    Mobility,
    Custom {
        s: PointwiseFn,
        s_rho: PointwiseFn,
        density_independent: bool,
    },
}

impl Selective {
    pub fn value(&self, t: f64, x: f64, rho: f64) -> f64 {
        match self {
            Selective::Constant(c) => *c,
            Selective::Mobility => 1.0 - rho,
            Selective::Custom { s, .. } => s(t, x, rho),
        }
    }

    pub fn derivative(&self, t: f64, x: f64, rho: f64) -> f64 {
        match self {
            Selective::Constant(_) => 0.0,
            Selective::Mobility => -1.0,
            Selective::Custom { s_rho, .. } => s_rho(t, x, rho),
        }
    }

    pub fn is_density_independent(&self) -> bool {
        match self {
            Selective::Constant(_) => true,
            Selective::Mobility => false,
            Selective::Custom {
                density_independent,
                ..
            } => *density_independent,
        }
    }
}

impl fmt::Debug for Selective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selective::Constant(c) => write!(f, "Constant({c})"),
            Selective::Mobility => write!(f, "Mobility"),
            Selective::Custom {
                density_independent,
                ..
            } => write!(f, "Custom {{ density_independent: {density_independent} }}"),
        }
    }
}

/// Running cost `e(t, x, rho)`.
#[derive(Clone)]
pub enum RunningCost {
    Zero,
    /// `|x - x_d|^2 rho`.
    TargetPoint {
        x_d: f64,
    },
    /// `weight * rho`: penalizes the mass still inside the domain.
    Mass {
        weight: f64,
    },
    /// `|rho - target|^2`.
    TargetDensity,
    Custom {
        e: PointwiseFn,
        e_rho: PointwiseFn,
    },
}

impl fmt::Debug for RunningCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunningCost::Zero => write!(f, "Zero"),
            RunningCost::TargetPoint { x_d } => write!(f, "TargetPoint {{ x_d: {x_d} }}"),
            RunningCost::Mass { weight } => write!(f, "Mass {{ weight: {weight} }}"),
            RunningCost::TargetDensity => write!(f, "TargetDensity"),
            RunningCost::Custom { .. } => write!(f, "Custom"),
        }
    }
}

/// Terminal cost `c(x, rho_T)`.
#[derive(Clone)]
pub enum TerminalCost {
    Zero,
    /// `|rho_T - target|^2`.
    TargetDensity,
    /// `(x, rho) -> value` and its density derivative.
    Custom {
        c: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
        c_rho: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for TerminalCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TerminalCost::Zero => write!(f, "Zero"),
            TerminalCost::TargetDensity => write!(f, "TargetDensity"),
            TerminalCost::Custom { .. } => write!(f, "Custom"),
        }
    }
}

/// Everything that defines a control problem, independent of the mesh.
#[derive(Clone)]
pub struct ModelSpec {
    pub name: String,
    pub a: f64,
    pub b: f64,
    pub kernel: InteractionKernel,
    pub selective: Selective,
    pub running: RunningCost,
    pub terminal: TerminalCost,
    pub sigma: f64,
    pub gamma: f64,
    /// Total flux at `a` equals `beta_a * rho(a)`; negative values drain mass.
    pub beta_a: f64,
    pub beta_b: f64,
    pub horizon: f64,
    pub initial: Profile,
    /// Rescale the sampled initial density to unit mass.
    pub normalize_initial: bool,
    /// Target density, always rescaled to unit mass on the grid.
    pub target: Option<Profile>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("domain", &(self.a, self.b))
            .field("kernel", &self.kernel)
            .field("selective", &self.selective)
            .field("running", &self.running)
            .field("terminal", &self.terminal)
            .field("sigma", &self.sigma)
            .field("gamma", &self.gamma)
            .field("beta", &(self.beta_a, self.beta_b))
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return bad(format!("gamma must be nonnegative, got {}", self.gamma));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return bad(format!("T must be positive, got {}", self.horizon));
        }
        if !self.beta_a.is_finite() || !self.beta_b.is_finite() {
            return bad("boundary flux coefficients must be finite".into());
        }
        let needs_target = matches!(self.running, RunningCost::TargetDensity)
            || matches!(self.terminal, TerminalCost::TargetDensity);
        if needs_target && self.target.is_none() {
            return bad("target-density cost without a target profile".into());
        }
        Ok(())
    }

    pub fn zero_flux(&self) -> bool {
        self.beta_a == 0.0 && self.beta_b == 0.0
    }
}

/// Rescales a nonnegative grid function to unit trapezoidal mass.
pub fn normalize_density(w: &QuadratureWeights, raw: ArrayView1<f64>) -> Result<Array1<f64>> {
    if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
        return Err(Error::NotFinite {
            what: "density",
            index: i,
        });
    }
    if raw.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidParameter(
            "density has negative values".into(),
        ));
    }
    let mass = w.integrate(raw);
    if !(mass > 0.0) {
        return Err(Error::ZeroMass { mass });
    }
    Ok(raw.mapv(|v| v / mass))
}

/// Values of a field on every node at every instant, stored as
/// `(m + 1) x n` in time-major order.
#[derive(Clone, Debug)]
pub struct TrajectoryField {
    values: Array2<f64>,
    grid: Grid1D,
    time: TimeGrid,
}

impl TrajectoryField {
    pub fn new(grid: &Grid1D, time: &TimeGrid, values: Array2<f64>) -> Result<Self> {
        let shape = (time.steps() + 1, grid.len());
        if values.dim() != shape {
            return Err(Error::DimensionMismatch(format!(
                "field is {:?}, mesh needs {shape:?}",
                values.dim()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NotFinite {
                what: "trajectory",
                index: i,
            });
        }
        Ok(Self {
            values,
            grid: grid.clone(),
            time: time.clone(),
        })
    }

    pub fn zeros(grid: &Grid1D, time: &TimeGrid) -> Self {
        Self {
            values: Array2::zeros((time.steps() + 1, grid.len())),
            grid: grid.clone(),
            time: time.clone(),
        }
    }

    pub fn from_slices(grid: &Grid1D, time: &TimeGrid, slices: &[Array1<f64>]) -> Result<Self> {
        if slices.len() != time.steps() + 1 || slices.iter().any(|s| s.len() != grid.len()) {
            return Err(Error::DimensionMismatch(format!(
                "{} slices for {} instants",
                slices.len(),
                time.steps() + 1
            )));
        }
        let mut values = Array2::zeros((slices.len(), grid.len()));
        for (mut row, s) in values.rows_mut().into_iter().zip(slices) {
            row.assign(s);
        }
        Self::new(grid, time, values)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn slice(&self, k: usize) -> ArrayView1<'_, f64> {
        self.values.row(k)
    }

    pub fn last(&self) -> ArrayView1<'_, f64> {
        self.values.row(self.time.steps())
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &TrajectoryField) -> Result<Self> {
        if other.values.dim() != self.values.dim() {
            return Err(Error::DimensionMismatch(
                "fields on different meshes".into(),
            ));
        }
        let mut values = self.values.clone();
        values.scaled_add(alpha, &other.values);
        Ok(Self {
            values,
            grid: self.grid.clone(),
            time: self.time.clone(),
        })
    }

    /// Space-time trapezoidal integral of `f(k, i, self, other)`.
    pub fn space_time_integral(
        &self,
        w: &QuadratureWeights,
        f: impl Fn(usize, usize) -> f64,
    ) -> f64 {
        let m = self.time.steps();
        let wx = w.as_array();
        (0..=m)
            .map(|k| {
                let wt = time_weight(&self.time, k);
                wt * (0..self.grid.len()).map(|i| wx[i] * f(k, i)).sum::<f64>()
            })
            .sum()
    }
}

/// Trapezoidal weight of instant `k` on a (possibly nonuniform) time grid.
pub fn time_weight(tg: &TimeGrid, k: usize) -> f64 {
    let m = tg.steps();
    let left = if k > 0 { tg.step(k - 1) } else { 0.0 };
    let right = if k < m { tg.step(k) } else { 0.0 };
    0.5 * (left + right)
}

/// A model bound to a spatial grid: operators, initial and target densities.
#[derive(Clone, Debug)]
pub struct Problem {
    pub model: ModelSpec,
    grid: Grid1D,
    weights: QuadratureWeights,
    d1: StencilMatrix,
    /// `(sigma^2 / 2) D2` with the constant flux terms folded into the
    /// boundary rows.
    diffusion: StencilMatrix,
    p: NonlocalMatrix,
    q: NonlocalMatrix,
    rho0: Array1<f64>,
    target: Option<Array1<f64>>,
}

impl Problem {
    pub fn new(model: ModelSpec, n: usize) -> Result<Self> {
        model.validate()?;
        let grid = Grid1D::new(model.a, model.b, n)?;
        let weights = grid.trapezoid_weights();
        let d1 = first_derivative_matrix(&grid);
        let s2 = model.sigma * model.sigma;
        let diffusion = robin_laplacian(&grid, -2.0 * model.beta_a / s2, -2.0 * model.beta_b / s2)
            .scaled(0.5 * s2);
        let p = interaction_matrix(&grid, &weights, &model.kernel)?;
        let q = adjoint_interaction_matrix(&grid, &weights, &model.kernel)?;

        let raw0 = grid.sample(|x| (model.initial)(x));
        let rho0 = if model.normalize_initial {
            normalize_density(&weights, raw0.view())?
        } else {
            if let Some(i) = raw0.iter().position(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::NotFinite {
                    what: "initial density",
                    index: i,
                });
            }
            raw0
        };
        let target = match &model.target {
            Some(f) => Some(normalize_density(&weights, grid.sample(|x| f(x)).view())?),
            None => None,
        };
        Ok(Self {
            model,
            grid,
            weights,
            d1,
            diffusion,
            p,
            q,
            rho0,
            target,
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn weights(&self) -> &QuadratureWeights {
        &self.weights
    }

    pub fn d1(&self) -> &StencilMatrix {
        &self.d1
    }

    pub fn diffusion(&self) -> &StencilMatrix {
        &self.diffusion
    }

    pub fn p(&self) -> &NonlocalMatrix {
        &self.p
    }

    pub fn q(&self) -> &NonlocalMatrix {
        &self.q
    }

    pub fn rho0(&self) -> &Array1<f64> {
        &self.rho0
    }

    pub fn target(&self) -> Option<&Array1<f64>> {
        self.target.as_ref()
    }

    pub fn time_grid(&self, m: usize) -> Result<TimeGrid> {
        TimeGrid::uniform(self.model.horizon, m)
    }

    pub fn mass(&self, rho: ArrayView1<f64>) -> f64 {
        self.weights.integrate(rho)
    }

    fn target_or_zero(&self) -> Array1<f64> {
        self.target
            .clone()
            .unwrap_or_else(|| Array1::zeros(self.grid.len()))
    }

    /// `s(t, x_i, rho_i)`.
    pub fn selective(&self, t: f64, rho: ArrayView1<f64>) -> Array1<f64> {
        let s = &self.model.selective;
        Zip::from(self.grid.nodes())
            .and(rho)
            .map_collect(|&x, &r| s.value(t, x, r))
    }

    /// `s + rho s_rho`, the coefficient of the control in the adjoint drift.
    pub fn selective_adjoint(&self, t: f64, rho: ArrayView1<f64>) -> Array1<f64> {
        let s = &self.model.selective;
        Zip::from(self.grid.nodes())
            .and(rho)
            .map_collect(|&x, &r| s.value(t, x, r) + r * s.derivative(t, x, r))
    }

    /// `e(t, x_i, rho_i)`.
    pub fn running_cost(&self, t: f64, rho: ArrayView1<f64>) -> Array1<f64> {
        let x = self.grid.nodes();
        match &self.model.running {
            RunningCost::Zero => Array1::zeros(rho.len()),
            RunningCost::TargetPoint { x_d } => Zip::from(x)
                .and(rho)
                .map_collect(|&x, &r| (x - x_d) * (x - x_d) * r),
            RunningCost::Mass { weight } => rho.mapv(|r| weight * r),
            RunningCost::TargetDensity => {
                let bar = self.target_or_zero();
                Zip::from(rho)
                    .and(&bar)
                    .map_collect(|&r, &b| (r - b) * (r - b))
            }
            RunningCost::Custom { e, .. } => Zip::from(x).and(rho).map_collect(|&x, &r| e(t, x, r)),
        }
    }

    /// `e_rho(t, x_i, rho_i)`.
    pub fn running_cost_derivative(&self, t: f64, rho: ArrayView1<f64>) -> Array1<f64> {
        let x = self.grid.nodes();
        match &self.model.running {
            RunningCost::Zero => Array1::zeros(rho.len()),
            RunningCost::TargetPoint { x_d } => x.mapv(|x| (x - x_d) * (x - x_d)),
            RunningCost::Mass { weight } => Array1::from_elem(rho.len(), *weight),
            RunningCost::TargetDensity => {
                let bar = self.target_or_zero();
                Zip::from(rho).and(&bar).map_collect(|&r, &b| 2.0 * (r - b))
            }
            RunningCost::Custom { e_rho, .. } => {
                Zip::from(x).and(rho).map_collect(|&x, &r| e_rho(t, x, r))
            }
        }
    }

    /// `c(x_i, rho_T,i)`.
    pub fn terminal_cost(&self, rho_t: ArrayView1<f64>) -> Array1<f64> {
        match &self.model.terminal {
            TerminalCost::Zero => Array1::zeros(rho_t.len()),
            TerminalCost::TargetDensity => {
                let bar = self.target_or_zero();
                Zip::from(rho_t)
                    .and(&bar)
                    .map_collect(|&r, &b| (r - b) * (r - b))
            }
            TerminalCost::Custom { c, .. } => Zip::from(self.grid.nodes())
                .and(rho_t)
                .map_collect(|&x, &r| c(x, r)),
        }
    }

    /// `c_rho(x_i, rho_T,i)`.
    pub fn terminal_cost_derivative(&self, rho_t: ArrayView1<f64>) -> Array1<f64> {
        match &self.model.terminal {
            TerminalCost::Zero => Array1::zeros(rho_t.len()),
            TerminalCost::TargetDensity => {
                let bar = self.target_or_zero();
                Zip::from(rho_t)
                    .and(&bar)
                    .map_collect(|&r, &b| 2.0 * (r - b))
            }
            TerminalCost::Custom { c_rho, .. } => Zip::from(self.grid.nodes())
                .and(rho_t)
                .map_collect(|&x, &r| c_rho(x, r)),
        }
    }
}
