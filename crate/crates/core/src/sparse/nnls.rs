use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Unconstrained least squares on the listed columns of `a`: Householder QR
/// when the columns are independent, a truncated SVD otherwise.
fn solve_on(a: &DMatrix<f64>, b: &DVector<f64>, cols: &[usize]) -> Result<Vec<f64>> {
    let sub = a.select_columns(cols);
    if sub.nrows() >= sub.ncols() {
        let qr = sub.clone().qr();
        let r = qr.r();
        let diag = r.diagonal().amax();
        if r.diagonal().iter().all(|d| d.abs() > 1e-12 * diag) {
            if let Some(x) = r.solve_upper_triangular(&qr.q().tr_mul(b)) {
                return Ok(x.iter().copied().collect());
            }
        }
    }
    let svd = sub.svd(true, true);
    let s = svd
        .solve(b, 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Invariant(alloc::format!("least-squares solve failed: {e}")))?;
    Ok(s.iter().copied().collect())
}

/// `argmin ‖A x − b‖₂` subject to `x ≥ 0`, by the Lawson–Hanson active-set
/// method. Returns the solution and the number of outer iterations.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(Vec<f64>, usize)> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::dim("nnls", &[m, n], &[b.len()]));
    }
    let scale = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs())) * b.amax().max(1.0);
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE) * (m.max(n) as f64);
    let mut x = vec![0.0; n];
    let mut passive = vec![false; n];
    // atoms whose entry immediately fell back out; retried only after progress
    let mut blocked = vec![false; n];
    let max_outer = 3 * n.max(1) + 10;
    let mut outer = 0;
    loop {
        let r = b - a * DVector::from_column_slice(&x);
        let w = a.tr_mul(&r);
        let next = (0..n)
            .filter(|&j| !passive[j] && !blocked[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]).then(j.cmp(&i)));
        let Some(j) = next else { break };
        if outer == max_outer {
            return Err(Error::Invariant("nnls did not terminate".into()));
        }
        outer += 1;
        passive[j] = true;
        loop {
            let cols: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let s = solve_on(a, b, &cols)?;
            if s.iter().all(|&v| v > 0.0) {
                x.iter_mut().for_each(|v| *v = 0.0);
                for (&c, &v) in cols.iter().zip(&s) {
                    x[c] = v;
                }
                break;
            }
            // step from x towards s until the first passive weight hits zero
            let mut alpha = f64::INFINITY;
            for (&c, &v) in cols.iter().zip(&s) {
                if v <= 0.0 {
                    let denom = x[c] - v;
                    alpha = alpha.min(if denom > 0.0 { x[c] / denom } else { 0.0 });
                }
            }
            for (&c, &v) in cols.iter().zip(&s) {
                x[c] += alpha * (v - x[c]);
                if x[c] <= tol {
                    x[c] = 0.0;
                    passive[c] = false;
                }
            }
            if cols.iter().all(|&c| !passive[c]) {
                break;
            }
        }
        if passive[j] {
            blocked.iter_mut().for_each(|b| *b = false);
        } else {
            blocked[j] = true;
        }
    }
    Ok((x, outer))
}
