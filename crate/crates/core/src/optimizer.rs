//! Reduced-gradient (steepest descent) loop on the control.

use std::time::{Duration, Instant};

use ndarray::Array2;

use crate::adjoint::solve_backward;
use crate::error::{Error, Result};
use crate::forward::solve_forward;
use crate::matfun::PhiSolver;
use crate::problem::{time_weight, Problem, TrajectoryField};

/// How the step length `lambda` is chosen each iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepRule {
    /// Backtracking from `lambda0` until sufficient decrease.
    Armijo,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug)]
pub struct DescentConfig {
    /// Stop when `|J^{l+1} - J^l| < tol`.
    pub tol: f64,
    pub max_iters: usize,
    pub lambda0: f64,
    pub backtrack: f64,
    pub min_lambda: f64,
    /// Sufficient-decrease constant. Small values let the search accept
    /// steps that only just decrease `J` while exciting oscillatory control
    /// modes.
    pub armijo_c: f64,
    pub rule: StepRule,
    pub phi: PhiSolver,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            tol: 2e-3,
            max_iters: 200,
            lambda0: 1.0,
            backtrack: 0.5,
            min_lambda: 1e-8,
            armijo_c: 0.1,
            rule: StepRule::Armijo,
            phi: PhiSolver::default(),
        }
    }
}

impl DescentConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.tol > 0.0
            && self.max_iters > 0
            && self.lambda0 > 0.0
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.min_lambda > 0.0
            && (0.0..1.0).contains(&self.armijo_c)
            && match self.rule {
                StepRule::Fixed(l) => l > 0.0 && l.is_finite(),
                StepRule::Armijo => true,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "invalid descent settings {self:?}"
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Termination {
    /// The functional changed by less than the tolerance.
    Stabilized,
    /// The gradient vanished identically.
    Stationary,
    /// No step above `min_lambda` decreased the functional.
    LineSearchFailed,
    MaxIterations,
}

#[derive(Clone, Debug)]
pub struct OptimizationResult {
    pub u: TrajectoryField,
    pub rho: TrajectoryField,
    pub psi: TrajectoryField,
    /// `J(u^0), J(u^1), ...` for every accepted control.
    pub j_trace: Vec<f64>,
    /// `rho`-weighted squared norm of the gradient at each accepted control
    /// where it was computed.
    pub gradient_norms: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// Number of controls evaluated, `u^0` included.
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    pub elapsed: Duration,
}

impl OptimizationResult {
    pub fn final_cost(&self) -> f64 {
        *self.j_trace.last().expect("trace holds J(u^0)")
    }
}

/// `J = 1/2 \int\int (e + gamma u^2 rho) + 1/2 \int c(rho_T)`, trapezoidal in
/// space and time.
pub fn evaluate_cost(problem: &Problem, rho: &TrajectoryField, u: &TrajectoryField) -> f64 {
    let tg = rho.time();
    let w = problem.weights();
    let gamma = problem.model.gamma;
    let mut running = 0.0;
    for k in 0..=tg.steps() {
        let r = rho.slice(k);
        let e = problem.running_cost(tg.instant(k), r);
        let uk = u.slice(k);
        let integrand = ndarray::Zip::from(&e)
            .and(r)
            .and(uk)
            .map_collect(|&e, &r, &u| e + gamma * u * u * r);
        running += time_weight(tg, k) * w.integrate(integrand.view());
    }
    let terminal = w.integrate(problem.terminal_cost(rho.last()).view());
    0.5 * running + 0.5 * terminal
}

/// `G = gamma u + s(t, x, rho) D1 psi` on every slice.
pub fn gradient_direction(
    problem: &Problem,
    rho: &TrajectoryField,
    psi: &TrajectoryField,
    u: &TrajectoryField,
) -> Result<TrajectoryField> {
    let tg = rho.time();
    let n = problem.grid().len();
    let gamma = problem.model.gamma;
    let mut g = Array2::zeros((tg.steps() + 1, n));
    for (k, mut row) in g.rows_mut().into_iter().enumerate() {
        let s = problem.selective(tg.instant(k), rho.slice(k));
        let dpsi = problem.d1().apply(psi.slice(k));
        ndarray::Zip::from(&mut row)
            .and(&s)
            .and(&dpsi)
            .and(u.slice(k))
            .for_each(|g, &s, &d, &u| *g = gamma * u + s * d);
    }
    TrajectoryField::new(problem.grid(), tg, g)
}

/// `\int\int weight * a * b` with the space-time trapezoid rule.
pub fn inner_product(
    problem: &Problem,
    a: &TrajectoryField,
    b: &TrajectoryField,
    weight: Option<&TrajectoryField>,
) -> f64 {
    let (av, bv) = (a.values(), b.values());
    match weight {
        Some(r) => {
            let rv = r.values();
            a.space_time_integral(problem.weights(), |k, i| {
                rv[[k, i]] * av[[k, i]] * bv[[k, i]]
            })
        }
        None => a.space_time_integral(problem.weights(), |k, i| av[[k, i]] * bv[[k, i]]),
    }
}

/// Density trajectory and cost of a control.
pub fn evaluate_control(
    problem: &Problem,
    phi: &PhiSolver,
    u: &TrajectoryField,
) -> Result<(TrajectoryField, f64)> {
    let rho = solve_forward(problem, phi, u, problem.rho0().view())?;
    let j = evaluate_cost(problem, &rho, u);
    if !j.is_finite() {
        return Err(Error::NotFinite {
            what: "functional",
            index: 0,
        });
    }
    Ok((rho, j))
}

/// Steepest descent `u <- u - lambda (gamma u + s D1 psi)` until the
/// functional stabilizes.
pub fn optimize(
    problem: &Problem,
    cfg: &DescentConfig,
    u0: TrajectoryField,
) -> Result<OptimizationResult> {
    optimize_with_observer(problem, cfg, u0, |_, _| {})
}

/// [`optimize`] with a callback receiving `(iteration, J)` after every
/// accepted control.
pub fn optimize_with_observer(
    problem: &Problem,
    cfg: &DescentConfig,
    u0: TrajectoryField,
    mut observe: impl FnMut(usize, f64),
) -> Result<OptimizationResult> {
    cfg.validate()?;
    let start = Instant::now();
    let phi = &cfg.phi;
    let mut u = u0;
    let (mut rho, mut j) = evaluate_control(problem, phi, &u)?;
    let mut j_trace = vec![j];
    let mut gradient_norms = Vec::new();
    let mut lambdas = Vec::new();
    observe(0, j);

    let mut termination = Termination::MaxIterations;
    let mut psi;
    loop {
        psi = solve_backward(problem, phi, &rho, &u)?;
        if j_trace.len() >= cfg.max_iters {
            break;
        }
        let g = gradient_direction(problem, &rho, &psi, &u)?;
        let slope = inner_product(problem, &g, &g, Some(&rho));
        gradient_norms.push(slope);
        if g.values().iter().all(|&v| v == 0.0) {
            termination = Termination::Stationary;
            break;
        }

        // backtracking restarts one expansion above the last accepted step
        let mut lambda = match cfg.rule {
            StepRule::Fixed(l) => l,
            StepRule::Armijo => lambdas
                .last()
                .map_or(cfg.lambda0, |&l: &f64| cfg.lambda0.min(l / cfg.backtrack)),
        };
        let accepted = loop {
            let u_try = u.add_scaled(-lambda, &g)?;
            let trial = match (evaluate_control(problem, phi, &u_try), cfg.rule) {
                (Err(e), StepRule::Fixed(_)) => return Err(e),
                (t, _) => t,
            };
            let ok = match (&trial, cfg.rule) {
                (Ok(_), StepRule::Fixed(_)) => true,
                (Ok((_, j_try)), StepRule::Armijo) => {
                    *j_try <= j - cfg.armijo_c * lambda * slope.max(0.0)
                }
                // an overshooting step can blow the solve up; shrink it
                (Err(_), _) => false,
            };
            if ok {
                let (rho_try, j_try) = trial.expect("accepted trial");
                break Some((u_try, rho_try, j_try));
            }
            lambda *= cfg.backtrack;
            if lambda < cfg.min_lambda {
                break None;
            }
        };
        let Some((u_new, rho_new, j_new)) = accepted else {
            termination = Termination::LineSearchFailed;
            break;
        };
        lambdas.push(lambda);
        let change = (j_new - j).abs();
        u = u_new;
        rho = rho_new;
        j = j_new;
        j_trace.push(j);
        observe(j_trace.len() - 1, j);
        if change < cfg.tol {
            termination = Termination::Stabilized;
            psi = solve_backward(problem, phi, &rho, &u)?;
            break;
        }
    }

    let converged = matches!(
        termination,
        Termination::Stabilized | Termination::Stationary
    );
    Ok(OptimizationResult {
        iterations: j_trace.len(),
        u,
        rho,
        psi,
        j_trace,
        gradient_norms,
        lambdas,
        converged,
        termination,
        elapsed: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlocal::InteractionKernel;
    use crate::problem::tests::plain_model;
    use crate::problem::{RunningCost, Selective};
    use approx::assert_abs_diff_eq;

    fn zero_control(p: &Problem, m: usize) -> TrajectoryField {
        TrajectoryField::zeros(p.grid(), &p.time_grid(m).unwrap())
    }

    #[test]
    fn zero_cost() {
        let p = Problem::new(plain_model(), 21).unwrap();
        let u = zero_control(&p, 10);
        let (rho, j) = evaluate_control(&p, &PhiSolver::default(), &u).unwrap();
        assert_eq!(j, 0.0);
        assert_eq!(evaluate_cost(&p, &rho, &u), 0.0);
    }

    #[test]
    fn control_penalty_closed_form() {
        // gamma = 2, u = 1, unit mass constant in time, T = 1 -> J = 1
        let mut m = plain_model();
        m.gamma = 2.0;
        m.initial = std::sync::Arc::new(|_| 1.0);
        let p = Problem::new(m, 41).unwrap();
        let tg = p.time_grid(20).unwrap();
        let rho = TrajectoryField::new(p.grid(), &tg, Array2::from_elem((21, 41), 0.5)).unwrap();
        let u = TrajectoryField::new(p.grid(), &tg, Array2::ones((21, 41))).unwrap();
        assert_abs_diff_eq!(evaluate_cost(&p, &rho, &u), 1.0, epsilon = 1e-13);
    }

    #[test]
    fn gradient_examples() {
        let mut m = plain_model();
        m.gamma = 0.0;
        let p = Problem::new(m, 11).unwrap();
        let tg = p.time_grid(4).unwrap();
        let rho = TrajectoryField::zeros(p.grid(), &tg);
        let x = p.grid().nodes().clone();
        let psi =
            TrajectoryField::new(p.grid(), &tg, Array2::from_shape_fn((5, 11), |(_, i)| x[i]))
                .unwrap();
        let u = TrajectoryField::zeros(p.grid(), &tg);
        let g = gradient_direction(&p, &rho, &psi, &u).unwrap();
        for v in g.values() {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-12);
        }
        // constant adjoint leaves gamma u
        let mut m = plain_model();
        m.gamma = 0.5;
        let p = Problem::new(m, 11).unwrap();
        let psi = TrajectoryField::new(p.grid(), &tg, Array2::from_elem((5, 11), 3.0)).unwrap();
        let u = TrajectoryField::new(p.grid(), &tg, Array2::from_elem((5, 11), 2.0)).unwrap();
        let g = gradient_direction(&p, &rho, &psi, &u).unwrap();
        for v in g.values() {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn stationary_start() {
        let p = Problem::new(plain_model(), 21).unwrap();
        let r = optimize(&p, &DescentConfig::default(), zero_control(&p, 10)).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.j_trace, vec![0.0]);
        assert!(r.converged);
        assert_eq!(r.termination, Termination::Stationary);
    }

    fn steering_problem() -> Problem {
        let mut m = plain_model();
        m.sigma = 0.1f64.sqrt();
        m.kernel = InteractionKernel::Sznajd { scale: 0.5 };
        m.running = RunningCost::TargetPoint { x_d: 0.3 };
        m.gamma = 0.5;
        Problem::new(m, 81).unwrap()
    }

    #[test]
    fn descent_is_monotone() {
        let p = steering_problem();
        let cfg = DescentConfig {
            tol: 1e-4,
            ..Default::default()
        };
        let r = optimize(&p, &cfg, zero_control(&p, 40)).unwrap();
        assert!(r.converged, "{:?}", r.termination);
        for w in r.j_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(r.final_cost() < 0.8 * r.j_trace[0]);
        let last = *r.gradient_norms.last().unwrap();
        assert!(last < r.gradient_norms[0]);
    }

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        for sel in [Selective::Constant(1.0), Selective::Mobility] {
            let mut p = steering_problem();
            p.model.selective = sel;
            let phi = PhiSolver::default().with_tol(1e-12);
            let u = TrajectoryField::new(
                p.grid(),
                &p.time_grid(40).unwrap(),
                Array2::from_shape_fn((41, 81), |(k, i)| 0.2 * ((k + i) as f64 * 0.1).sin()),
            )
            .unwrap();
            let (rho, _) = evaluate_control(&p, &phi, &u).unwrap();
            let psi = solve_backward(&p, &phi, &rho, &u).unwrap();
            let g = gradient_direction(&p, &rho, &psi, &u).unwrap();
            let eps = 1e-5;
            let jp = evaluate_control(&p, &phi, &u.add_scaled(eps, &g).unwrap())
                .unwrap()
                .1;
            let jm = evaluate_control(&p, &phi, &u.add_scaled(-eps, &g).unwrap())
                .unwrap()
                .1;
            let fd = (jp - jm) / (2.0 * eps);
            let predicted = inner_product(&p, &g, &g, Some(&rho));
            assert!((fd / predicted - 1.0).abs() < 0.05, "{fd} vs {predicted}");
        }
    }

    #[test]
    fn fixed_step() {
        let p = steering_problem();
        let cfg = DescentConfig {
            rule: StepRule::Fixed(0.5),
            max_iters: 4,
            ..Default::default()
        };
        let r = optimize(&p, &cfg, zero_control(&p, 20)).unwrap();
        assert_eq!(r.lambdas, vec![0.5; r.iterations - 1]);
        assert!(r.iterations <= 4);
    }

    #[test]
    fn rejects_bad_settings() {
        let cfg = DescentConfig {
            backtrack: 1.5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
