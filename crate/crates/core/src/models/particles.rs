//! Monte Carlo agent system for the uncontrolled dynamics
//! `dX_i = N^{-1} sum_j p(X_i, X_j)(X_j - X_i) dt + sigma dW_i`,
//! reflected at the domain ends.

use ndarray::{Array1, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::nonlocal::InteractionKernel;
use crate::problem::ModelSpec;

#[derive(Clone, Debug)]
pub struct ParticleConfig {
    pub count: usize,
    pub steps: usize,
    pub horizon: f64,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct ParticleEnsemble {
    pub positions: Vec<f64>,
    pub seed: u64,
}

/// Empirical density on the dual cells of a grid: node `i` owns
/// `[x_i - h/2, x_i + h/2]` clipped to the domain. The cell widths are the
/// trapezoid weights, so the histogram has unit trapezoidal mass.
pub fn histogram(grid: &Grid1D, positions: &[f64]) -> Array1<f64> {
    let n = grid.len();
    let h = grid.h();
    let mut counts = Array1::<f64>::zeros(n);
    for &x in positions {
        let i = (((x - grid.a()) / h).round().max(0.0) as usize).min(n - 1);
        counts[i] += 1.0;
    }
    let w = grid.trapezoid_weights();
    let total = positions.len().max(1) as f64;
    counts / (w.as_array() * total)
}

/// Trapezoidal L1 distance between two nodal densities.
pub fn l1_distance(grid: &Grid1D, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let diff: Array1<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    grid.trapezoid_weights().integrate(diff.view())
}

fn reflect(mut x: f64, a: f64, b: f64) -> f64 {
    if (a..=b).contains(&x) {
        return x;
    }
    let width = b - a;
    // fold into [a, a + 2 width) then mirror the upper half
    let mut r = (x - a) % (2.0 * width);
    if r < 0.0 {
        r += 2.0 * width;
    }
    x = if r > width {
        a + 2.0 * width - r
    } else {
        a + r
    };
    x.clamp(a, b)
}

/// Rejection sampling from an unnormalized profile on `[a, b]`.
fn sample_initial(model: &ModelSpec, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let probe = Grid1D::new(model.a, model.b, 4001)?;
    let peak = probe
        .nodes()
        .iter()
        .map(|&x| (model.initial)(x))
        .fold(0.0f64, f64::max);
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(Error::ZeroMass { mass: peak });
    }
    let bound = 1.05 * peak;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x = rng.random_range(model.a..=model.b);
        if rng.random::<f64>() * bound <= (model.initial)(x) {
            out.push(x);
        }
    }
    Ok(out)
}

/// Interaction drift for every particle.
fn drift(kernel: &InteractionKernel, xs: &[f64], out: &mut [f64]) {
    let n = xs.len() as f64;
    if kernel.is_zero() {
        out.fill(0.0);
        return;
    }
    if let Some(f) = kernel.first_argument_only() {
        let mean = xs.iter().sum::<f64>() / n;
        for (o, &x) in out.iter_mut().zip(xs) {
            *o = f(x) * (mean - x);
        }
        return;
    }
    if let InteractionKernel::BoundedConfidence { radius } = *kernel {
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut prefix = Vec::with_capacity(sorted.len() + 1);
        prefix.push(0.0);
        for &y in &sorted {
            prefix.push(prefix.last().unwrap() + y);
        }
        let r = radius * (1.0 + 1e-12);
        for (o, &x) in out.iter_mut().zip(xs) {
            let lo = sorted.partition_point(|&y| y < x - r);
            let hi = sorted.partition_point(|&y| y <= x + r);
            let count = (hi - lo) as f64;
            let sum = prefix[hi] - prefix[lo];
            *o = (sum - count * x) / n;
        }
        return;
    }
    for (o, &x) in out.iter_mut().zip(xs) {
        *o = xs.iter().map(|&y| kernel.eval(x, y) * (y - x)).sum::<f64>() / n;
    }
}

/// Euler–Maruyama run of the uncontrolled agent system.
pub fn simulate_particles(model: &ModelSpec, cfg: &ParticleConfig) -> Result<ParticleEnsemble> {
    if cfg.count == 0 {
        return Err(Error::InvalidParameter(
            "particle count must be positive".into(),
        ));
    }
    if cfg.steps == 0 || !(cfg.horizon > 0.0) {
        return Err(Error::InvalidParameter(
            "particle run needs m >= 1 and T > 0".into(),
        ));
    }
    if !model.zero_flux() {
        return Err(Error::InvalidParameter(format!(
            "particle validation needs zero-flux boundaries; '{}' has exits",
            model.name
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut xs = sample_initial(model, cfg.count, &mut rng)?;
    let tau = cfg.horizon / cfg.steps as f64;
    let noise = model.sigma * tau.sqrt();
    let mut v = vec![0.0; xs.len()];
    for _ in 0..cfg.steps {
        drift(&model.kernel, &xs, &mut v);
        for (x, &d) in xs.iter_mut().zip(&v) {
            let z: f64 = rng.sample(StandardNormal);
            *x = reflect(*x + tau * d + noise * z, model.a, model.b);
        }
    }
    Ok(ParticleEnsemble {
        positions: xs,
        seed: cfg.seed,
    })
}
