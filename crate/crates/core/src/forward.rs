//! Semidiscrete forward density equation
//! `rho' = (sigma^2/2) D2 rho - D1((P rho + s u) rho)` with flux boundary
//! conditions.
//!
//! The boundary closure eliminates the ghost nodes of the diffusion stencil
//! with the flux condition `(V rho - (sigma^2/2) rho_x) = beta rho`. The
//! constant `beta` part stays in the linear operator; the drift part leaves
//! a remainder `-(2/h) V_1 rho_1` at the left node and `+(2/h) V_n rho_n` at
//! the right node, which goes wherever the drift itself is assembled.

use ndarray::{Array1, ArrayView1, Zip};

use crate::error::{Error, Result};
use crate::grid::StencilMatrix;
use crate::matfun::PhiSolver;
use crate::problem::{Problem, TrajectoryField};
use crate::steppers::{march, SemilinearSystem};

/// Linear operator and nonlinear remainder of the forward system at one instant.
#[derive(Clone, Debug)]
pub struct ForwardAssembly {
    pub linear: StencilMatrix,
    pub nonlinear: Array1<f64>,
}

fn check_finite(what: &'static str, v: &Array1<f64>) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NotFinite { what, index }),
        None => Ok(()),
    }
}

/// Adds the ghost-node remainder of a drift `v` to a diagonal-like vector.
fn add_boundary_drift(out: &mut Array1<f64>, h: f64, v: &Array1<f64>, rho: ArrayView1<f64>) {
    let n = out.len();
    out[0] -= 2.0 / h * v[0] * rho[0];
    out[n - 1] += 2.0 / h * v[n - 1] * rho[n - 1];
}

/// Linear part at time `t`. When the selective function ignores the
/// density, the control transport `-D1(s u rho)` is linear in `rho` and is
/// assembled here; otherwise the operator is the diffusion alone.
pub fn forward_linear(problem: &Problem, t: f64, u_t: ArrayView1<f64>) -> Result<StencilMatrix> {
    let mut a = problem.diffusion().clone();
    if !problem.model.selective.is_density_independent() {
        return Ok(a);
    }
    let n = problem.grid().len();
    let h = problem.grid().h();
    let d1 = problem.d1();
    let s = problem.selective(t, Array1::zeros(n).view());
    let su = &s * &u_t;
    check_finite("selective drift", &su)?;
    if su.iter().all(|&v| v == 0.0) {
        return Ok(a);
    }
    let diag = -(&d1.apply(s.view()) * &u_t + &s * &d1.apply(u_t));
    a.add_diagonal(diag.view());
    a.add_row_scaled(-1.0, su.view(), d1);
    a.add_to_diagonal(0, -2.0 / h * su[0]);
    a.add_to_diagonal(n - 1, 2.0 / h * su[n - 1]);
    Ok(a)
}

/// Nonlinear remainder at time `t`: the interaction transport, plus the
/// control transport when the selective function depends on the density.
pub fn forward_nonlinear(
    problem: &Problem,
    t: f64,
    rho: ArrayView1<f64>,
    u_t: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    let n = rho.len();
    let h = problem.grid().h();
    let d1 = problem.d1();
    let mut g = Array1::zeros(n);
    let mut drift = Array1::zeros(n);
    let d_rho = d1.apply(rho);

    if !problem.p().is_zero() {
        let vp = problem.p().apply(rho);
        let dvp = d1.apply(vp.view());
        Zip::from(&mut g)
            .and(&dvp)
            .and(&vp)
            .and(rho)
            .and(&d_rho)
            .for_each(|g, &dv, &v, &r, &dr| *g -= dv * r + v * dr);
        drift += &vp;
    }

    if !problem.model.selective.is_density_independent() {
        let s = problem.selective(t, rho);
        let ds = d1.apply(s.view());
        let du = d1.apply(u_t);
        Zip::from(&mut g)
            .and(&s)
            .and(&ds)
            .and(u_t)
            .and(&du)
            .and(rho)
            .for_each(|g, &s, &ds, &u, &du, &r| *g -= (ds * u + s * du) * r);
        Zip::from(&mut g)
            .and(&s)
            .and(u_t)
            .and(&d_rho)
            .for_each(|g, &s, &u, &dr| *g -= s * u * dr);
        drift += &(&s * &u_t);
    }

    add_boundary_drift(&mut g, h, &drift, rho);
    check_finite("forward drift", &g)?;
    Ok(g)
}

/// Both parts of the forward system at `(t, rho, u_t)`.
pub fn assemble_forward(
    problem: &Problem,
    t: f64,
    rho: ArrayView1<f64>,
    u_t: ArrayView1<f64>,
) -> Result<ForwardAssembly> {
    check_dims(problem, rho.len(), u_t.len())?;
    Ok(ForwardAssembly {
        linear: forward_linear(problem, t, u_t)?,
        nonlinear: forward_nonlinear(problem, t, rho, u_t)?,
    })
}

fn check_dims(problem: &Problem, a: usize, b: usize) -> Result<()> {
    let n = problem.grid().len();
    if a != n || b != n {
        return Err(Error::DimensionMismatch(format!(
            "grid has {n} nodes, got slices of {a} and {b}"
        )));
    }
    Ok(())
}

/// Forward system driven by a fixed control trajectory.
pub struct ForwardSystem<'a> {
    problem: &'a Problem,
    u: &'a TrajectoryField,
}

impl<'a> ForwardSystem<'a> {
    pub fn new(problem: &'a Problem, u: &'a TrajectoryField) -> Self {
        Self { problem, u }
    }

    fn control_at(&self, t: f64) -> Result<ArrayView1<'a, f64>> {
        Ok(self.u.slice(self.u.time().index_of(t)?))
    }
}

impl SemilinearSystem for ForwardSystem<'_> {
    type Linear = StencilMatrix;

    fn dim(&self) -> usize {
        self.problem.grid().len()
    }

    fn linear_part(&self, t: f64) -> Result<StencilMatrix> {
        if !self.problem.model.selective.is_density_independent() {
            return Ok(self.problem.diffusion().clone());
        }
        forward_linear(self.problem, t, self.control_at(t)?)
    }

    fn nonlinear_part(&self, t: f64, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        forward_nonlinear(self.problem, t, y, self.control_at(t)?)
    }

    fn has_constant_linear_part(&self) -> bool {
        !self.problem.model.selective.is_density_independent()
            || self.u.values().iter().all(|&v| v == 0.0)
    }
}

/// Marches `rho0` over the control's time grid and keeps every slice.
pub fn solve_forward(
    problem: &Problem,
    phi: &PhiSolver,
    u: &TrajectoryField,
    rho0: ArrayView1<f64>,
) -> Result<TrajectoryField> {
    check_dims(problem, rho0.len(), u.grid().len())?;
    let sys = ForwardSystem::new(problem, u);
    let slices = march(&sys, phi, u.time(), rho0)?;
    TrajectoryField::from_slices(problem.grid(), u.time(), &slices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlocal::InteractionKernel;
    use crate::problem::tests::plain_model;
    use crate::problem::Selective;
    use crate::steppers::TimeGrid;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use std::sync::Arc;

    #[test]
    fn pure_diffusion_has_no_remainder() {
        let mut m = plain_model();
        m.selective = Selective::Constant(0.0);
        let p = Problem::new(m, 21).unwrap();
        let rho = p.rho0().clone();
        let asm = assemble_forward(&p, 0.0, rho.view(), Array1::zeros(21).view()).unwrap();
        assert!(asm.nonlinear.iter().all(|&v| v == 0.0));
        // Neumann-corrected first row: (sigma^2 / 2) (2 y2 - 2 y1) / h^2
        let h = p.grid().h();
        let c = 0.5 * p.model.sigma.powi(2) / (h * h);
        let (_, row) = asm.linear.row(0);
        assert_abs_diff_eq!(row[0], -2.0 * c, epsilon = 1e-9);
        assert_abs_diff_eq!(row[1], 2.0 * c, epsilon = 1e-9);
    }

    #[test]
    fn zero_density_gives_zero_remainder() {
        let mut m = plain_model();
        m.kernel = InteractionKernel::Sznajd { scale: 1.0 };
        m.selective = Selective::Mobility;
        let p = Problem::new(m, 31).unwrap();
        let u = p.grid().sample(|x| x.sin());
        let g = forward_nonlinear(&p, 0.0, Array1::zeros(31).view(), u.view()).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn three_node_composition() {
        let mut m = plain_model();
        m.kernel = InteractionKernel::Constant(1.0);
        m.selective = Selective::Constant(0.0);
        m.initial = Arc::new(|_| 1.0);
        m.normalize_initial = false;
        let p = Problem::new(m, 3).unwrap();
        let rho = array![1.0, 1.0, 1.0];
        assert_eq!(p.p().apply(rho.view()), array![2.0, 0.0, -2.0]);
        let g = forward_nonlinear(&p, 0.0, rho.view(), Array1::zeros(3).view()).unwrap();
        assert_abs_diff_eq!(g[1], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn linear_selective_transport_matches_nonlinear_form() {
        // the same drift assembled in the linear operator or in the remainder
        let mut m = plain_model();
        m.kernel = InteractionKernel::Zero;
        let dep = Selective::Custom {
            s: Arc::new(|_, x, _| 1.0 + 0.3 * x),
            s_rho: Arc::new(|_, _, _| 0.0),
            density_independent: false,
        };
        let ind = Selective::Custom {
            s: Arc::new(|_, x, _| 1.0 + 0.3 * x),
            s_rho: Arc::new(|_, _, _| 0.0),
            density_independent: true,
        };
        m.selective = dep;
        let p_dep = Problem::new(m.clone(), 41).unwrap();
        m.selective = ind;
        let p_ind = Problem::new(m, 41).unwrap();
        let rho = p_dep.rho0().clone();
        let u = p_dep.grid().sample(|x| (2.0 * x).cos());
        let a = assemble_forward(&p_dep, 0.0, rho.view(), u.view()).unwrap();
        let b = assemble_forward(&p_ind, 0.0, rho.view(), u.view()).unwrap();
        let ra = a.linear.apply(rho.view()) + &a.nonlinear;
        let rb = b.linear.apply(rho.view()) + &b.nonlinear;
        for i in 0..41 {
            assert_abs_diff_eq!(ra[i], rb[i], epsilon = 1e-9 * ra[i].abs().max(1.0));
        }
    }

    #[test]
    fn rejects_mismatched_slices() {
        let p = Problem::new(plain_model(), 11).unwrap();
        assert!(
            assemble_forward(&p, 0.0, Array1::zeros(10).view(), Array1::zeros(11).view()).is_err()
        );
    }

    fn uncontrolled(p: &Problem, m: usize) -> TrajectoryField {
        let tg = p.time_grid(m).unwrap();
        let u = TrajectoryField::zeros(p.grid(), &tg);
        solve_forward(p, &PhiSolver::default(), &u, p.rho0().view()).unwrap()
    }

    #[test]
    fn zero_flux_conserves_mass() {
        let mut m = plain_model();
        m.sigma = 0.02f64.sqrt();
        m.horizon = 4.0;
        let p = Problem::new(m, 200).unwrap();
        let rho = uncontrolled(&p, 200);
        let m0 = p.mass(rho.slice(0));
        for k in 0..=200 {
            assert!((p.mass(rho.slice(k)) - m0).abs() <= 1e-3 * m0);
        }
    }

    #[test]
    fn diffusion_relaxes_to_uniform() {
        let mut m = plain_model();
        m.sigma = 0.02f64.sqrt();
        // slowest Neumann mode decays like exp(-(sigma^2/2)(pi/2)^2 t)
        m.horizon = 400.0;
        m.initial = Arc::new(|x: f64| (-(x + 0.4) * (x + 0.4) / 0.01).exp());
        let p = Problem::new(m, 200).unwrap();
        let rho = uncontrolled(&p, 200);
        let err = rho
            .last()
            .iter()
            .fold(0.0f64, |a, v| a.max((v - 0.5).abs()));
        assert!(err <= 1e-2, "{err}");
    }

    #[test]
    fn outflux_drains_mass() {
        let mut m = plain_model();
        m.beta_a = -10.0;
        m.beta_b = 10.0;
        m.selective = Selective::Mobility;
        let p = Problem::new(m, 101).unwrap();
        let rho = uncontrolled(&p, 50);
        for k in 0..50 {
            assert!(p.mass(rho.slice(k + 1)) < p.mass(rho.slice(k)));
        }
    }

    /// Max-norm gap between the density-independent fast path and the
    /// general path for a constant selective function.
    fn path_gap(amplitude: f64, steps: usize) -> f64 {
        let mut m = plain_model();
        m.sigma = 0.02f64.sqrt();
        m.kernel = InteractionKernel::Sznajd { scale: 1.0 };
        let p_fast = Problem::new(m.clone(), 101).unwrap();
        m.selective = Selective::Custom {
            s: Arc::new(|_, _, _| 1.0),
            s_rho: Arc::new(|_, _, _| 0.0),
            density_independent: false,
        };
        let p_gen = Problem::new(m, 101).unwrap();
        let tg = TimeGrid::uniform(1.0, steps).unwrap();
        let u = TrajectoryField::new(
            p_fast.grid(),
            &tg,
            ndarray::Array2::from_shape_fn((steps + 1, 101), |(k, i)| {
                let x = p_fast.grid().nodes()[i];
                amplitude * (3.0 * x).sin() * (1.0 + tg.instant(k))
            }),
        )
        .unwrap();
        let phi = PhiSolver::default();
        let a = solve_forward(&p_fast, &phi, &u, p_fast.rho0().view()).unwrap();
        let b = solve_forward(&p_gen, &phi, &u, p_gen.rho0().view()).unwrap();
        (a.values() - b.values())
            .iter()
            .fold(0.0f64, |x, v| x.max(v.abs()))
    }

    #[test]
    fn fast_path_agrees_with_general_path() {
        assert!(path_gap(0.1, 800) <= 1e-3);
        // the gap is a first-order splitting difference
        let g1 = path_gap(0.5, 400);
        let g2 = path_gap(0.5, 800);
        assert!((1.8..=2.2).contains(&(g1 / g2)), "{g1} {g2}");
    }

    #[test]
    fn temporal_order_one() {
        let mut m = plain_model();
        m.sigma = 0.02f64.sqrt();
        m.kernel = InteractionKernel::Sznajd { scale: 1.0 };
        let p = Problem::new(m, 101).unwrap();
        let control = |tg: &TimeGrid| {
            TrajectoryField::new(
                p.grid(),
                tg,
                ndarray::Array2::from_shape_fn((tg.steps() + 1, 101), |(k, i)| {
                    (p.grid().nodes()[i] * 2.0).cos() * (tg.instant(k)).sin()
                }),
            )
            .unwrap()
        };
        let phi = PhiSolver::default().with_tol(1e-12);
        let solve = |mm: usize| {
            let tg = p.time_grid(mm).unwrap();
            solve_forward(&p, &phi, &control(&tg), p.rho0().view())
                .unwrap()
                .last()
                .to_owned()
        };
        let reference = solve(3200);
        let errs: Vec<f64> = [100usize, 400]
            .iter()
            .map(|&mm| {
                (&solve(mm) - &reference)
                    .iter()
                    .fold(0.0f64, |a, v| a.max(v.abs()))
            })
            .collect();
        let slope = (errs[1] / errs[0]).ln() / (4.0f64).ln();
        assert!((0.85..=1.15).contains(&-slope), "{errs:?}");
    }
}
