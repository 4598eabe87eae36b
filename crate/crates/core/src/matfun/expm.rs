//! Dense matrix exponential by Padé approximation with scaling and squaring
//! (degree and scaling chosen from the 1-norm thresholds of Higham, 2005).

use ndarray::{s, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539398330063230e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068e0;
const THETA_13: f64 = 5.371920351148152e0;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Maximum absolute column sum.
pub fn norm1(a: &ArrayView2<f64>) -> f64 {
    a.axis_iter(Axis(1))
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(a)` for a square matrix with finite entries.
pub fn expm(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "expm needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if n == 0 {
        return Ok(Array2::zeros((0, 0)));
    }
    let nrm = norm1(&a.view());
    if !nrm.is_finite() {
        return Err(Error::Overflow { norm: nrm });
    }
    let eye = Array2::<f64>::eye(n);
    if nrm == 0.0 {
        return Ok(eye);
    }

    let a2 = a.dot(a);
    let result = if nrm <= THETA_3 {
        pade_low(a, &a2, &B3)?
    } else if nrm <= THETA_5 {
        pade_low(a, &a2, &B5)?
    } else if nrm <= THETA_7 {
        pade_low(a, &a2, &B7)?
    } else if nrm <= THETA_9 {
        pade_low(a, &a2, &B9)?
    } else {
        let sq = (nrm / THETA_13).log2().ceil().max(0.0) as i32;
        if sq > 1000 {
            return Err(Error::Overflow { norm: nrm });
        }
        let scale = 2f64.powi(-sq);
        let (a_s, a2_s) = if sq > 0 {
            (a * scale, &a2 * (scale * scale))
        } else {
            (a.clone(), a2)
        };
        let mut r = pade13(&a_s, &a2_s)?;
        for _ in 0..sq {
            r = r.dot(&r);
        }
        r
    };
    if result.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow { norm: nrm });
    }
    Ok(result)
}

fn pade_low(a: &Array2<f64>, a2: &Array2<f64>, b: &[f64]) -> Result<Array2<f64>> {
    let n = a.nrows();
    let eye = Array2::<f64>::eye(n);
    // powers A^0, A^2, A^4, ...
    let mut u_inner = &eye * b[1];
    let mut v = &eye * b[0];
    let mut pk = eye;
    let mut k = 2;
    while k < b.len() {
        pk = pk.dot(a2);
        v.scaled_add(b[k], &pk);
        if k + 1 < b.len() {
            u_inner.scaled_add(b[k + 1], &pk);
        }
        k += 2;
    }
    let u = a.dot(&u_inner);
    solve_pade(&u, &v)
}

fn pade13(a: &Array2<f64>, a2: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let eye = Array2::<f64>::eye(n);
    let a4 = a2.dot(a2);
    let a6 = a4.dot(a2);
    let b = &B13;

    let mut t = &a6 * b[13];
    t.scaled_add(b[11], &a4);
    t.scaled_add(b[9], a2);
    let mut u_inner = a6.dot(&t);
    u_inner.scaled_add(b[7], &a6);
    u_inner.scaled_add(b[5], &a4);
    u_inner.scaled_add(b[3], a2);
    u_inner.scaled_add(b[1], &eye);
    let u = a.dot(&u_inner);

    let mut t = &a6 * b[12];
    t.scaled_add(b[10], &a4);
    t.scaled_add(b[8], a2);
    let mut v = a6.dot(&t);
    v.scaled_add(b[6], &a6);
    v.scaled_add(b[4], &a4);
    v.scaled_add(b[2], a2);
    v.scaled_add(b[0], &eye);
    solve_pade(&u, &v)
}

/// Solves `(V - U) R = (V + U)`.
fn solve_pade(u: &Array2<f64>, v: &Array2<f64>) -> Result<Array2<f64>> {
    let mut q = v - u;
    let mut p = v + u;
    lu_solve_in_place(&mut q, &mut p)?;
    Ok(p)
}

/// Gaussian elimination with partial pivoting: overwrites `rhs` with
/// `a^{-1} rhs` (and `a` with its LU factors).
pub(crate) fn lu_solve_in_place(a: &mut Array2<f64>, rhs: &mut Array2<f64>) -> Result<()> {
    let n = a.nrows();
    for k in 0..n {
        let (piv, pmax) = (k..n)
            .map(|i| (i, a[[i, k]].abs()))
            .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if pmax == 0.0 || !pmax.is_finite() {
            return Err(Error::SingularPade);
        }
        if piv != k {
            swap_rows(a, k, piv);
            swap_rows(rhs, k, piv);
        }
        let pivot = a[[k, k]];
        let (top, mut bottom) = a.view_mut().split_at(Axis(0), k + 1);
        let arow = top.row(k);
        let (rtop, mut rbottom) = rhs.view_mut().split_at(Axis(0), k + 1);
        let rrow = rtop.row(k);
        for (mut row, mut rrow_i) in bottom.rows_mut().into_iter().zip(rbottom.rows_mut()) {
            let f = row[k] / pivot;
            if f == 0.0 {
                continue;
            }
            row[k] = f;
            row.slice_mut(s![k + 1..])
                .scaled_add(-f, &arow.slice(s![k + 1..]));
            rrow_i.scaled_add(-f, &rrow);
        }
    }
    // back substitution, row oriented
    for k in (0..n).rev() {
        let pivot = a[[k, k]];
        let (mut top, bottom) = rhs.view_mut().split_at(Axis(0), k + 1);
        let mut row = top.row_mut(k);
        for (j, brow) in bottom.rows().into_iter().enumerate() {
            let c = a[[k, k + 1 + j]];
            if c != 0.0 {
                row.scaled_add(-c, &brow);
            }
        }
        row.mapv_inplace(|v| v / pivot);
    }
    Ok(())
}

fn swap_rows(m: &mut Array2<f64>, i: usize, j: usize) {
    if i == j {
        return;
    }
    let ncols = m.ncols();
    for c in 0..ncols {
        m.swap([i, c], [j, c]);
    }
}
