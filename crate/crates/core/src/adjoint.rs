//! Semidiscrete adjoint equation `-psi' = A_B(t) psi + g_B(t)`, marched
//! backward from `psi_T`.

use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut1, Zip};

use crate::error::{Error, Result};
use crate::grid::StencilMatrix;
use crate::matfun::{LinearOperator, PhiSolver};
use crate::nonlocal::NonlocalMatrix;
use crate::problem::{Problem, TrajectoryField};
use crate::steppers::{march_backward, SemilinearSystem};

/// `A_B psi = (sigma^2/2) D2 psi + c * D1 psi + Q (rho * D1 psi)`
/// with `c = P rho + (s + rho s_rho) u`.
#[derive(Clone, Debug)]
pub struct AdjointOperator<'a> {
    diffusion: &'a StencilMatrix,
    d1: &'a StencilMatrix,
    q: Option<&'a NonlocalMatrix>,
    advection: Array1<f64>,
    rho: Array1<f64>,
}

impl AdjointOperator<'_> {
    pub fn advection(&self) -> &Array1<f64> {
        &self.advection
    }
}

impl LinearOperator for AdjointOperator<'_> {
    fn dim(&self) -> usize {
        self.rho.len()
    }

    fn apply_into(&self, x: ArrayView1<f64>, mut y: ArrayViewMut1<f64>) {
        let dx = self.d1.apply(x);
        self.diffusion.apply_into(x, y.view_mut());
        Zip::from(&mut y)
            .and(&self.advection)
            .and(&dx)
            .for_each(|y, &c, &d| *y += c * d);
        if let Some(q) = self.q {
            let z = &self.rho * &dx;
            y += &q.apply(z.view());
        }
    }

    fn to_dense(&self) -> Array2<f64> {
        let d1 = self.d1.to_dense();
        let mut m = self.diffusion.to_dense();
        for (i, &c) in self.advection.iter().enumerate() {
            let mut row = m.row_mut(i);
            row.scaled_add(c, &d1.row(i));
        }
        if let Some(q) = self.q {
            let mut rd1 = d1;
            for (mut row, &r) in rd1.rows_mut().into_iter().zip(&self.rho) {
                row *= r;
            }
            m += &q.dense().dot(&rd1);
        }
        m
    }
}

/// Adjoint operator and source at one instant.
#[derive(Clone, Debug)]
pub struct AdjointAssembly<'a> {
    pub operator: AdjointOperator<'a>,
    pub source: Array1<f64>,
}

/// `A_B(t)` and `g_B(t) = e_rho / 2 + (gamma / 2) u^2` from `rho(t)` and `u(t)`.
pub fn assemble_adjoint<'a>(
    problem: &'a Problem,
    t: f64,
    rho_t: ArrayView1<f64>,
    u_t: ArrayView1<f64>,
) -> Result<AdjointAssembly<'a>> {
    let n = problem.grid().len();
    if rho_t.len() != n || u_t.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "grid has {n} nodes, got slices of {} and {}",
            rho_t.len(),
            u_t.len()
        )));
    }
    let mut advection = &problem.selective_adjoint(t, rho_t) * &u_t;
    let q = if problem.p().is_zero() {
        None
    } else {
        advection += &problem.p().apply(rho_t);
        Some(problem.q())
    };
    let half_gamma = 0.5 * problem.model.gamma;
    let source = Zip::from(&problem.running_cost_derivative(t, rho_t))
        .and(u_t)
        .map_collect(|&e, &u| 0.5 * e + half_gamma * u * u);
    for (what, v) in [
        ("adjoint advection", &advection),
        ("adjoint source", &source),
    ] {
        if let Some(index) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NotFinite { what, index });
        }
    }
    Ok(AdjointAssembly {
        operator: AdjointOperator {
            diffusion: problem.diffusion(),
            d1: problem.d1(),
            q,
            advection,
            rho: rho_t.to_owned(),
        },
        source,
    })
}

/// `psi_T = c_rho(x, rho_T) / 2`.
pub fn terminal_condition(problem: &Problem, rho_t: ArrayView1<f64>) -> Array1<f64> {
    problem.terminal_cost_derivative(rho_t) * 0.5
}

struct BackwardSystem<'a> {
    problem: &'a Problem,
    rho: &'a TrajectoryField,
    u: &'a TrajectoryField,
}

impl<'a> BackwardSystem<'a> {
    fn assembly(&self, t: f64) -> Result<AdjointAssembly<'a>> {
        let k = self.rho.time().index_of(t)?;
        assemble_adjoint(self.problem, t, self.rho.slice(k), self.u.slice(k))
    }
}

impl<'a> SemilinearSystem for BackwardSystem<'a> {
    type Linear = AdjointOperator<'a>;

    fn dim(&self) -> usize {
        self.problem.grid().len()
    }

    fn linear_part(&self, t: f64) -> Result<AdjointOperator<'a>> {
        Ok(self.assembly(t)?.operator)
    }

    fn nonlinear_part(&self, t: f64, _y: ArrayView1<f64>) -> Result<Array1<f64>> {
        Ok(self.assembly(t)?.source)
    }
}

/// Marches the adjoint from `psi_T` down to `t = 0` along the stored
/// density trajectory; slices are returned in forward time order.
pub fn solve_backward(
    problem: &Problem,
    phi: &PhiSolver,
    rho: &TrajectoryField,
    u: &TrajectoryField,
) -> Result<TrajectoryField> {
    if rho.values().dim() != u.values().dim() {
        return Err(Error::DimensionMismatch(
            "density and control live on different meshes".into(),
        ));
    }
    let psi_t = terminal_condition(problem, rho.last());
    let sys = BackwardSystem { problem, rho, u };
    let slices = march_backward(&sys, phi, rho.time(), psi_t.view())?;
    TrajectoryField::from_slices(problem.grid(), rho.time(), &slices)
}
