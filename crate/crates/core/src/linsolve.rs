//! Preconditioned conjugate gradients on matrix-free operators.

use crate::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Stop {
    /// `‖r‖₂ ≤ tol · ‖b‖₂`.
    Relative(f64),
    /// `max |rᵢ| ≤ tol`.
    MaxAbs(f64),
}

impl Stop {
    fn reached(&self, r: &[f64], b_norm: f64) -> bool {
        match *self {
            Stop::Relative(tol) => norm2(r) <= tol * b_norm,
            Stop::MaxAbs(tol) => r.iter().all(|v| v.abs() <= tol),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct CgReport {
    pub iterations: usize,
    /// Max-norm of the final residual.
    pub residual: f64,
    pub converged: bool,
}

/// Solve `A x = b` for symmetric positive (semi)definite `A`, starting from the
/// contents of `x`. `precond` applies the inverse of a positive diagonal.
pub(crate) fn pcg(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    precond: impl Fn(usize) -> f64,
    b: &[f64],
    x: &mut [f64],
    stop: Stop,
    max_iter: usize,
) -> CgReport {
    let n = b.len();
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    apply(x, &mut ap);
    for i in 0..n {
        r[i] = b[i] - ap[i];
    }
    let b_norm = norm2(b);
    let mut z: Vec<f64> = (0..n).map(|i| precond(i) * r[i]).collect();
    let mut p = z.clone();
    let mut rz: f64 = dot(&r, &z);
    let mut iterations = 0;
    let mut converged = stop.reached(&r, b_norm);
    while !converged && iterations < max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        // periodically refresh the recursive residual against drift
        if iterations % 50 == 0 {
            apply(x, &mut ap);
            for i in 0..n {
                r[i] = b[i] - ap[i];
            }
        }
        converged = stop.reached(&r, b_norm);
        if converged {
            break;
        }
        for i in 0..n {
            z[i] = precond(i) * r[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    apply(x, &mut ap);
    let residual = b.iter().zip(&ap).fold(0.0f64, |m, (bi, ai)| m.max((bi - ai).abs()));
    if let Stop::MaxAbs(tol) = stop {
        converged = residual <= tol;
    }
    CgReport { iterations, residual, converged }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
