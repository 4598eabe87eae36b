//! Temporal convergence of the complete optimisation: each step count is
//! optimised to stabilisation and compared with a self-reference run on a
//! finer time grid.

use ndarray::ArrayView1;

use crate::error::{Error, Result};
use crate::optimizer::{optimize, DescentConfig, OptimizationResult};
use crate::problem::{Problem, TrajectoryField};

#[derive(Clone, Debug)]
pub struct StudyConfig {
    /// Step counts, strictly increasing.
    pub steps: Vec<usize>,
    /// The reference run uses `reference_factor * max(steps)` steps.
    pub reference_factor: usize,
    pub descent: DescentConfig,
}

impl StudyConfig {
    pub fn new(steps: Vec<usize>) -> Self {
        Self {
            steps,
            reference_factor: 4,
            descent: DescentConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::InvalidParameter("empty step list".into()));
        }
        if self.steps[0] == 0 || self.steps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(format!(
                "step list must be positive and strictly increasing, got {:?}",
                self.steps
            )));
        }
        if self.reference_factor < 2 {
            return Err(Error::InvalidParameter(format!(
                "reference factor must be at least 2, got {}",
                self.reference_factor
            )));
        }
        self.descent.validate()
    }

    pub fn reference_steps(&self) -> usize {
        self.reference_factor * self.steps.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub steps: usize,
    /// Relative max-norm error of the density at the final time.
    pub err_rho: f64,
    /// Relative max-norm error of the adjoint at the initial time.
    pub err_psi: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub reference_steps: usize,
    /// Observed orders `-d log(err) / d log(m)`; `None` with fewer than two rows.
    pub order_rho: Option<f64>,
    pub order_psi: Option<f64>,
}

/// Least-squares order of decay of `errors` against `steps` on log-log axes.
pub fn observed_order(steps: &[usize], errors: &[f64]) -> Option<f64> {
    if steps.len() != errors.len() || steps.len() < 2 || errors.iter().any(|&e| !(e > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = steps.iter().map(|&m| (m as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Some(-sxy / sxx)
}

fn relative_max_error(approx: ArrayView1<f64>, reference: ArrayView1<f64>) -> f64 {
    let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = approx
        .iter()
        .zip(reference)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

fn solve(problem: &Problem, cfg: &DescentConfig, steps: usize) -> Result<OptimizationResult> {
    let tg = problem.time_grid(steps)?;
    optimize(problem, cfg, TrajectoryField::zeros(problem.grid(), &tg))
}

pub fn convergence_study(problem: &Problem, cfg: &StudyConfig) -> Result<ConvergenceReport> {
    convergence_study_with_observer(problem, cfg, |_, _| {})
}

/// As [`convergence_study`]; `observe` sees every finished run, the
/// reference first.
pub fn convergence_study_with_observer(
    problem: &Problem,
    cfg: &StudyConfig,
    mut observe: impl FnMut(usize, &OptimizationResult),
) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let reference_steps = cfg.reference_steps();
    let reference = solve(problem, &cfg.descent, reference_steps)?;
    observe(reference_steps, &reference);

    let mut rows = Vec::with_capacity(cfg.steps.len());
    for &m in &cfg.steps {
        let run = solve(problem, &cfg.descent, m)?;
        observe(m, &run);
        rows.push(ConvergenceRow {
            steps: m,
            err_rho: relative_max_error(run.rho.last(), reference.rho.last()),
            err_psi: relative_max_error(run.psi.slice(0), reference.psi.slice(0)),
            iterations: run.iterations,
        });
    }

    let steps: Vec<usize> = rows.iter().map(|r| r.steps).collect();
    let order_rho = observed_order(&steps, &rows.iter().map(|r| r.err_rho).collect::<Vec<_>>());
    let order_psi = observed_order(&steps, &rows.iter().map(|r| r.err_psi).collect::<Vec<_>>());
    Ok(ConvergenceReport {
        rows,
        reference_steps,
        order_rho,
        order_psi,
    })
}
