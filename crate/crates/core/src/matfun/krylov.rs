//! Adaptive Krylov evaluation of `e^{tau X} v + tau phi_1(tau X) w`.
//!
//! The combination is the top block of `exp(tau A) [v; zeta]` for the
//! augmented operator `A = [[X, w / zeta], [0, 0]]`. The action is computed
//! with Arnoldi (full modified Gram-Schmidt) and substepping: the subspace
//! grows until a corrected a-posteriori estimate meets the local tolerance,
//! and the substep is shortened when the subspace cap is reached. Shortening
//! reuses the basis already built, since the basis does not depend on the
//! substep length.

use ndarray::{s, Array1, Array2, ArrayView1};

use super::expm::expm;
use super::operator::LinearOperator;
use super::{PhiActionResult, PhiStats};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct KrylovOptions {
    /// Absolute accuracy requested, relative to `|v|_inf + tau |w|_inf`.
    pub tol: f64,
    pub max_dim: usize,
    pub max_substeps: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_dim: 128,
            max_substeps: 10_000,
        }
    }
}

struct Augmented<'a> {
    op: &'a dyn LinearOperator,
    w: Array1<f64>,
    n: usize,
}

impl Augmented<'_> {
    fn apply(&self, z: &Array1<f64>) -> Array1<f64> {
        let mut y = Array1::zeros(self.n + 1);
        self.op
            .apply_into(z.slice(s![..self.n]), y.slice_mut(s![..self.n]));
        let last = z[self.n];
        if last != 0.0 {
            y.slice_mut(s![..self.n]).scaled_add(last, &self.w);
        }
        y
    }
}

fn norm2(x: &Array1<f64>) -> f64 {
    x.dot(x).sqrt()
}

fn norm_inf(x: ArrayView1<f64>) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn next_checkpoint(k: usize) -> usize {
    (k + 1).max((k as f64 * 1.2).ceil() as usize)
}

/// Rough flop count of a substep that ends at dimension `k`: products,
/// Gram-Schmidt, and the small exponentials of the error checks.
fn substep_cost(k: usize, n: usize) -> f64 {
    let (k, n) = (k as f64, n as f64);
    8.0 * n * k + 2.0 * n * k * k + 70.0 * k * k * k
}

/// Whether shortening the substep at dimension `k` is cheaper per unit time
/// than growing the subspace further. Future errors are extrapolated
/// log-linearly from the last two checks; the error of a shortened substep
/// is modelled as `delta^k`.
fn cheaper_to_shrink(
    k: usize,
    err: f64,
    prev: Option<(usize, f64)>,
    target: f64,
    n: usize,
    cap: usize,
) -> bool {
    const MIN_DIM: usize = 16;
    if k < MIN_DIM {
        return false;
    }
    let rate = match prev {
        Some((kp, ep)) if ep > 0.0 && err > 0.0 => {
            ((err.ln() - ep.ln()) / (k - kp) as f64).min(0.0)
        }
        _ => 0.0,
    };
    let per_time = |kk: usize| {
        let e = err * (rate * (kk - k) as f64).exp();
        let fac = if e <= target {
            1.0
        } else {
            0.9 * (target / e).powf(1.0 / kk as f64)
        };
        substep_cost(kk, n) / fac
    };
    let here = per_time(k);
    let mut kk = next_checkpoint(k).min(cap);
    loop {
        if per_time(kk) < here {
            return false;
        }
        if kk == cap {
            return true;
        }
        kk = next_checkpoint(kk).min(cap);
    }
}

struct Estimate {
    err: f64,
    coeffs: Array1<f64>,
}

/// Corrected estimate with the (k+2)-square extended Hessenberg matrix.
fn estimate(h: &Array2<f64>, k: usize, delta: f64, beta: f64, avnorm: f64) -> Result<Estimate> {
    let mut hb = Array2::zeros((k + 2, k + 2));
    hb.slice_mut(s![..k, ..k]).assign(&h.slice(s![..k, ..k]));
    hb[[k, k - 1]] = h[[k, k - 1]];
    hb[[k + 1, k]] = 1.0;
    hb *= delta;
    let f = expm(&hb)?;
    let err1 = beta * f[[k, 0]].abs();
    let err2 = beta * f[[k + 1, 0]].abs() * avnorm;
    let err = if err1 > 10.0 * err2 {
        err2
    } else if err1 > err2 {
        err1 * err2 / (err1 - err2)
    } else {
        err1
    };
    Ok(Estimate {
        err,
        coeffs: f.slice(s![..k + 1, 0]).to_owned() * beta,
    })
}

fn combine(basis: &[Array1<f64>], coeffs: &Array1<f64>) -> Array1<f64> {
    let mut y = Array1::zeros(basis[0].len());
    for (b, &c) in basis.iter().zip(coeffs.iter()) {
        y.scaled_add(c, b);
    }
    y
}

/// Krylov evaluation of `e^{tau X} v + tau phi_1(tau X) w` with `X` given
/// only through products.
pub fn phi1_combined_krylov(
    op: &dyn LinearOperator,
    tau: f64,
    v: ArrayView1<f64>,
    w: ArrayView1<f64>,
    opts: &KrylovOptions,
) -> Result<PhiActionResult> {
    let n = op.dim();
    if v.len() != n || w.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "operator {n}, v {}, w {}",
            v.len(),
            w.len()
        )));
    }
    if !(tau > 0.0) || !(opts.tol > 0.0) || opts.max_dim < 2 {
        return Err(Error::InvalidParameter(format!(
            "tau = {tau}, tol = {}, max_dim = {}",
            opts.tol, opts.max_dim
        )));
    }

    let scale = norm_inf(v) + tau * norm_inf(w);
    let mut stats = PhiStats::default();
    if !scale.is_finite() {
        return Err(Error::NotFinite {
            what: "Krylov input vector",
            index: 0,
        });
    }
    if scale == 0.0 {
        return Ok(PhiActionResult {
            y: Array1::zeros(n),
            stats,
        });
    }
    let tol_abs = opts.tol * scale;

    let w_own = w.to_owned();
    let wn = norm2(&w_own);
    let (zeta, w_unit) = if wn > 0.0 {
        (wn, w_own / wn)
    } else {
        (0.0, Array1::zeros(n))
    };
    let aug = Augmented { op, w: w_unit, n };

    let mut y = Array1::zeros(n + 1);
    y.slice_mut(s![..n]).assign(&v);
    y[n] = zeta;

    let mut t_done = 0.0;
    let mut delta = tau;
    let max_dim = opts.max_dim;

    while t_done < tau {
        if stats.substeps >= opts.max_substeps {
            return Err(Error::KrylovNonConvergence {
                tau,
                reached: t_done,
                substeps: stats.substeps,
                dim: max_dim,
                estimate: f64::NAN,
            });
        }
        let remaining = tau - t_done;
        if delta >= remaining * (1.0 - 1e-12) {
            delta = remaining;
        }
        let beta = norm2(&y);
        if beta == 0.0 {
            break;
        }

        let mut basis: Vec<Array1<f64>> = Vec::with_capacity(max_dim + 1);
        basis.push(&y / beta);
        let mut h = Array2::<f64>::zeros((max_dim + 1, max_dim));
        let mut pending: Option<Array1<f64>> = None;
        let mut checkpoint = 2usize;
        let mut anorm = 0.0f64;
        let mut accepted: Option<(Array1<f64>, f64, usize)> = None;
        let mut prev_check: Option<(usize, f64)> = None;

        for j in 0..max_dim {
            let mut p = match pending.take() {
                Some(p) => p,
                None => {
                    stats.matvecs += 1;
                    aug.apply(&basis[j])
                }
            };
            anorm = anorm.max(norm2(&p));
            for (i, b) in basis.iter().enumerate() {
                let hij = b.dot(&p);
                h[[i, j]] = hij;
                p.scaled_add(-hij, b);
            }
            let hn = norm2(&p);
            h[[j + 1, j]] = hn;
            let k = j + 1;

            if hn <= 1e-12 * anorm.max(f64::MIN_POSITIVE) {
                // invariant subspace: the projection is exact
                delta = remaining;
                let f = expm(&(h.slice(s![..k, ..k]).to_owned() * delta))?;
                let coeffs = f.slice(s![.., 0]).to_owned() * beta;
                accepted = Some((combine(&basis[..k], &coeffs), 0.0, k));
                break;
            }
            basis.push(p / hn);

            if k == checkpoint || k == max_dim {
                checkpoint = next_checkpoint(k);
                stats.matvecs += 1;
                let pn = aug.apply(&basis[k]);
                let avnorm = norm2(&pn);
                pending = Some(pn);
                let mut first = true;
                loop {
                    let est = estimate(&h, k, delta, beta, avnorm)?;
                    let target = tol_abs * delta / tau;
                    if !est.err.is_finite() {
                        return Err(Error::NotFinite {
                            what: "Krylov error estimate",
                            index: k,
                        });
                    }
                    if est.err <= target {
                        accepted = Some((combine(&basis, &est.coeffs), est.err / target, k));
                        break;
                    }
                    if first {
                        first = false;
                        let stop = k == max_dim
                            || cheaper_to_shrink(k, est.err, prev_check, target, n, max_dim);
                        prev_check = Some((k, est.err));
                        if !stop {
                            break;
                        }
                    }
                    let fac = (0.9 * (target / est.err).powf(1.0 / k as f64)).clamp(0.01, 0.9);
                    delta *= fac;
                    if delta <= 1e-14 * tau {
                        return Err(Error::KrylovNonConvergence {
                            tau,
                            reached: t_done,
                            substeps: stats.substeps,
                            dim: k,
                            estimate: est.err,
                        });
                    }
                }
                if accepted.is_some() {
                    break;
                }
            }
        }

        let (sol, ratio, k) = accepted.ok_or(Error::KrylovNonConvergence {
            tau,
            reached: t_done,
            substeps: stats.substeps,
            dim: max_dim,
            estimate: f64::NAN,
        })?;
        stats.krylov_dim = stats.krylov_dim.max(k);
        stats.substeps += 1;
        t_done += delta;
        y = sol;

        // grow the next substep when this one was comfortably accurate
        let grow = if ratio > 0.0 {
            (0.9 * ratio.powf(-1.0 / k as f64)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        delta *= grow.max(1.0);
    }

    let out = y.slice(s![..n]).to_owned();
    if let Some(i) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::NotFinite {
            what: "Krylov phi-action",
            index: i,
        });
    }
    Ok(PhiActionResult { y: out, stats })
}
