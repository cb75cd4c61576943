//! Jacobi-preconditioned conjugate gradients.

use alloc::vec::Vec;

use crate::sparse::CsrMatrix;
use crate::{Error, Result};

/// When to stop iterating.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    /// `||b - A x||_2 <= tol ||b||_2`.
    RelativeL2(f64),
    /// `max_i |(b - A x)_i| <= tol`.
    AbsoluteMax(f64),
}

#[derive(Clone, Debug)]
pub struct CgOptions {
    pub stop: StopRule,
    pub max_iter: usize,
    /// Remove the mean of the residual every `project_every` iterations and of
    /// the final iterate; used for singular periodic systems whose kernel is
    /// the constants.
    pub project_every: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final residual measured by the stop rule's norm (relative for
    /// [`StopRule::RelativeL2`]).
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Default iteration cap for a system of size `n`.
pub fn default_max_iter(n: usize) -> usize {
    20 * n + 1000
}

pub fn pcg(a: &CsrMatrix, b: &[f64], opts: &CgOptions) -> Result<CgOutcome> {
    let n = a.nrows();
    if b.len() != n {
        return Err(Error::Dimension { expected: n, found: b.len() });
    }
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let b_norm = libm::sqrt(dot(b, b));
    let measure = |r: &[f64]| -> f64 {
        match opts.stop {
            StopRule::RelativeL2(_) => {
                let rn = libm::sqrt(dot(r, r));
                if b_norm > 0.0 {
                    rn / b_norm
                } else {
                    rn
                }
            }
            StopRule::AbsoluteMax(_) => r.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        }
    };
    let tol = match opts.stop {
        StopRule::RelativeL2(t) | StopRule::AbsoluteMax(t) => t,
    };
    if !(tol > 0.0) {
        return Err(Error::param("solver tolerance must be > 0"));
    }
    let project = opts.project_every.is_some();
    let every = opts.project_every.unwrap_or(usize::MAX).max(1);

    let mut x = alloc::vec![0.0; n];
    let mut r = b.to_vec();
    if project {
        remove_mean(&mut r);
    }
    let mut q = alloc::vec![0.0; n];
    let mut iterations = 0usize;
    'restart: loop {
        let mut res = measure(&r);
        if res <= tol || b_norm == 0.0 {
            if project {
                remove_mean(&mut x);
            }
            return Ok(CgOutcome { x, iterations, residual: res });
        }
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        while iterations < opts.max_iter {
            iterations += 1;
            a.mul_vec_into(&p, &mut q);
            let pq = dot(&p, &q);
            if !(pq > 0.0) {
                break;
            }
            let alpha = rz / pq;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            if project && iterations.is_multiple_of(every) {
                remove_mean(&mut r);
            }
            res = measure(&r);
            if res <= tol {
                // confirm against the true residual before accepting
                a.mul_vec_into(&x, &mut q);
                r.iter_mut().zip(b.iter().zip(&q)).for_each(|(ri, (bi, qi))| *ri = bi - qi);
                if project {
                    remove_mean(&mut r);
                }
                continue 'restart;
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        a.mul_vec_into(&x, &mut q);
        r.iter_mut().zip(b.iter().zip(&q)).for_each(|(ri, (bi, qi))| *ri = bi - qi);
        return Err(Error::NonConvergence { iterations, residual: measure(&r) });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::CsrBuilder;

    fn tridiag(n: usize) -> CsrMatrix {
        let mut b = CsrBuilder::new(n);
        for i in 0..n {
            if i > 0 {
                b.push(i - 1, -1.0);
            }
            b.push(i, 2.0);
            if i + 1 < n {
                b.push(i + 1, -1.0);
            }
            b.finish_row();
        }
        b.build()
    }

    #[test]
    fn solves_tridiagonal_system() {
        let a = tridiag(50);
        let b: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let out = pcg(&a, &b, &CgOptions { stop: StopRule::RelativeL2(1e-12), max_iter: 1000, project_every: None }).unwrap();
        let r: Vec<f64> = a.mul_vec(&out.x).iter().zip(&b).map(|(x, y)| x - y).collect();
        assert!(libm::sqrt(dot(&r, &r)) <= 1e-12 * libm::sqrt(dot(&b, &b)));
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = tridiag(10);
        let out = pcg(&a, &[0.0; 10], &CgOptions { stop: StopRule::RelativeL2(1e-10), max_iter: 10, project_every: None }).unwrap();
        assert!(out.x.iter().all(|&v| v == 0.0));
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let a = tridiag(200);
        let b = alloc::vec![1.0; 200];
        let err = pcg(&a, &b, &CgOptions { stop: StopRule::RelativeL2(1e-14), max_iter: 3, project_every: None }).unwrap_err();
        match err {
            Error::NonConvergence { iterations, residual } => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-14);
            }
            e => panic!("unexpected {e:?}"),
        }
    }
}
