//! Smallest eigenpairs of sparse symmetric positive definite matrices.
//!
//! Small problems go to a dense symmetric eigendecomposition; larger ones to
//! a block LOBPCG iteration. The preconditioner is a fixed number of
//! Jacobi-PCG steps on `A w = r`; each outer step does Rayleigh–Ritz over
//! the orthonormalized span of `[X, W, P]` (iterates, preconditioned
//! residuals, search directions).

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::hash::{open_unit, KeyedHasher};
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

/// Problems with at most this many unknowns are solved densely under
/// [`EigenMethod::Auto`].
pub const DENSE_LIMIT: usize = 1000;

/// Default relative eigen-residual tolerance.
pub const DEFAULT_EIGEN_TOL: f64 = 1e-8;

const MAX_ITER: usize = 20_000;
const INNER_STEPS: usize = 25;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EigenMethod {
    /// Dense below [`DENSE_LIMIT`] unknowns, iterative above.
    #[default]
    Auto,
    Dense,
    Iterative,
}

/// Eigenpairs of a plain matrix: ascending values, euclidean-unit vectors
/// (largest-magnitude entry positive), and relative residuals
/// `||A v - λ v||_2 / |λ|`.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    /// Outer iterations used (0 for the dense route).
    pub iterations: usize,
}

pub fn sym_eigs_smallest(a: &CsrMatrix, k: usize, tol: f64, method: EigenMethod) -> Result<SymEigen> {
    let n = a.nrows();
    if k == 0 || k >= n {
        return Err(Error::param(alloc::format!("need 1 <= k < {n}, got k = {k}")));
    }
    if !(tol > 0.0) {
        return Err(Error::param("eigen tolerance must be > 0"));
    }
    let dense = match method {
        EigenMethod::Auto => n <= DENSE_LIMIT,
        EigenMethod::Dense => true,
        EigenMethod::Iterative => false,
    };
    let (values, vectors, iterations) = if dense { dense_smallest(a, k) } else { lobpcg(a, k, tol)? };
    let mut out = SymEigen { values: Vec::with_capacity(k), vectors: Vec::with_capacity(k), residuals: Vec::with_capacity(k), iterations };
    for (lambda, mut v) in values.into_iter().zip(vectors) {
        fix_sign(&mut v);
        out.residuals.push(relative_residual(a, &v, lambda));
        out.values.push(lambda);
        out.vectors.push(v);
    }
    // A backward-stable dense decomposition cannot beat `eps ||A|| / |lambda|`
    // in relative residual; below that floor the request is unattainable.
    let norm_inf = (0..n).map(|i| a.row(i).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let floor = |lambda: f64| 64.0 * f64::EPSILON * norm_inf / lambda.abs();
    if dense && out.residuals.iter().zip(&out.values).any(|(&r, &l)| !(r <= tol.max(floor(l)))) {
        return Err(Error::EigenNonConvergence { iterations: 0, residuals: out.residuals });
    }
    Ok(out)
}

fn relative_residual(a: &CsrMatrix, v: &[f64], lambda: f64) -> f64 {
    let av = a.mul_vec(v);
    let r: f64 = av.iter().zip(v).map(|(x, y)| (x - lambda * y) * (x - lambda * y)).sum();
    let vn: f64 = v.iter().map(|x| x * x).sum();
    libm::sqrt(r / vn) / lambda.abs().max(f64::MIN_POSITIVE)
}

fn fix_sign(v: &mut [f64]) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = if x < 0.0 { -1.0 } else { 1.0 };
        }
    }
    if sign < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn sorted_eigen(g: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

fn dense_smallest(a: &CsrMatrix, k: usize) -> (Vec<f64>, Vec<Vec<f64>>, usize) {
    let (values, vectors) = sorted_eigen(a.to_dense());
    let vecs = (0..k).map(|j| vectors.column(j).iter().copied().collect()).collect();
    (values[..k].to_vec(), vecs, 0)
}

fn apply_block(a: &CsrMatrix, x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut out = DMatrix::zeros(n, x.ncols());
    let (xs, os) = (x.as_slice(), out.as_mut_slice());
    for j in 0..x.ncols() {
        a.mul_vec_into(&xs[j * n..(j + 1) * n], &mut os[j * n..(j + 1) * n]);
    }
    out
}

/// Orthonormalizes the columns of `w` against the orthonormal columns of
/// every matrix in `basis` and against each other (two Gram–Schmidt passes),
/// dropping columns that become numerically dependent.
fn orthonormalize(basis: &[&DMatrix<f64>], w: &DMatrix<f64>) -> DMatrix<f64> {
    let mut kept: Vec<DVector<f64>> = Vec::new();
    for j in 0..w.ncols() {
        let mut v = w.column(j).into_owned();
        let norm0 = v.norm();
        if !(norm0 > 0.0) || !norm0.is_finite() {
            continue;
        }
        for _ in 0..2 {
            for b in basis {
                if b.ncols() > 0 {
                    let c = b.tr_mul(&v);
                    v.gemv(-1.0, b, &c, 1.0);
                }
            }
            for q in &kept {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let nv = v.norm();
        if nv > 1e-10 * norm0 {
            kept.push(v / nv);
        }
    }
    if kept.is_empty() {
        DMatrix::zeros(w.nrows(), 0)
    } else {
        DMatrix::from_columns(&kept)
    }
}

fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let n = blocks[0].nrows();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut data = Vec::with_capacity(n * cols);
    for b in blocks {
        data.extend_from_slice(b.as_slice());
    }
    DMatrix::from_vec(n, cols, data)
}

/// Rayleigh–Ritz on the orthonormal basis `s` (with `as_ = A s`): returns the
/// lowest `m` Ritz values and coefficient columns.
fn rayleigh_ritz(s: &DMatrix<f64>, as_: &DMatrix<f64>, m: usize) -> (Vec<f64>, DMatrix<f64>) {
    let g = s.tr_mul(as_);
    let g = (&g + g.transpose()) * 0.5;
    let (values, vectors) = sorted_eigen(g);
    (values[..m].to_vec(), vectors.columns(0, m).into_owned())
}

/// Approximate `A^{-1} r` by a fixed number of Jacobi-PCG steps from zero,
/// overwriting `r`.
fn inner_cg(a: &CsrMatrix, inv_diag: &[f64], r: &mut [f64]) {
    let n = r.len();
    let mut res = r.to_vec();
    let mut x = alloc::vec![0.0; n];
    let mut z: Vec<f64> = res.iter().zip(inv_diag).map(|(v, d)| v * d).collect();
    let mut p = z.clone();
    let mut q = alloc::vec![0.0; n];
    let mut rz: f64 = res.iter().zip(&z).map(|(a, b)| a * b).sum();
    for _ in 0..INNER_STEPS {
        if !(rz > 0.0) {
            break;
        }
        a.mul_vec_into(&p, &mut q);
        let pq: f64 = p.iter().zip(&q).map(|(a, b)| a * b).sum();
        if !(pq > 0.0) {
            break;
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            res[i] -= alpha * q[i];
            z[i] = res[i] * inv_diag[i];
        }
        let rz_new: f64 = res.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    r.copy_from_slice(&x);
}

fn lobpcg(a: &CsrMatrix, k: usize, tol: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>, usize)> {
    let n = a.nrows();
    let m = (k + 4).min(n);
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();

    let hasher = KeyedHasher::new(0x6c6f_6270_6367);
    let start = DMatrix::from_fn(n, m, |i, j| open_unit(hasher.word(i as u64).word(j as u64).finish()) - 0.5);
    let mut x = orthonormalize(&[], &start);
    let mut ax = apply_block(a, &x);
    let (mut lambda, c) = rayleigh_ritz(&x, &ax, x.ncols());
    x = &x * &c;
    ax = &ax * &c;
    let mut p: Option<DMatrix<f64>> = None;
    let mut residuals = alloc::vec![f64::INFINITY; k];

    for iter in 0..MAX_ITER {
        // refresh A X now and then to keep rounding drift out of the residuals
        if iter % 20 == 0 {
            ax = apply_block(a, &x);
        }
        let r = &ax - &x * DMatrix::from_diagonal(&DVector::from_row_slice(&lambda));
        let mut active = Vec::new();
        for j in 0..x.ncols() {
            let rel = r.column(j).norm() / lambda[j].abs().max(f64::MIN_POSITIVE);
            if j < k {
                residuals[j] = rel;
            }
            if rel > tol {
                active.push(j);
            }
        }
        if residuals.iter().all(|&res| res <= tol) {
            let vectors = (0..k).map(|j| x.column(j).iter().copied().collect()).collect();
            return Ok((lambda[..k].to_vec(), vectors, iter));
        }
        let mut w_raw = r.select_columns(active.iter());
        for j in 0..w_raw.ncols() {
            let col = &mut w_raw.as_mut_slice()[j * n..(j + 1) * n];
            inner_cg(a, &inv_diag, col);
        }
        let w = orthonormalize(&[&x], &w_raw);
        let pp = match &p {
            Some(p) => orthonormalize(&[&x, &w], p),
            None => DMatrix::zeros(n, 0),
        };
        let s = hstack(&[&x, &w, &pp]);
        let as_ = hstack(&[&ax, &apply_block(a, &w), &apply_block(a, &pp)]);
        let (vals, c) = rayleigh_ritz(&s, &as_, m);
        let mx = x.ncols();
        let tail_s = s.columns(mx, s.ncols() - mx);
        let tail_c = c.rows(mx, c.nrows() - mx);
        p = Some(tail_s * tail_c);
        x = &s * &c;
        ax = &as_ * &c;
        lambda = vals;
    }
    Err(Error::EigenNonConvergence { iterations: MAX_ITER, residuals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::CsrBuilder;

    fn laplacian_1d(n: usize) -> CsrMatrix {
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

    fn exact(n: usize, j: usize) -> f64 {
        let s = libm::sin(j as f64 * core::f64::consts::PI / (2.0 * (n + 1) as f64));
        4.0 * s * s
    }

    #[test]
    fn iterative_matches_closed_form() {
        let n = 400;
        let a = laplacian_1d(n);
        let e = sym_eigs_smallest(&a, 3, 1e-9, EigenMethod::Iterative).unwrap();
        for j in 0..3 {
            assert!((e.values[j] - exact(n, j + 1)).abs() < 1e-12, "{} vs {}", e.values[j], exact(n, j + 1));
            assert!(e.residuals[j] <= 1e-9);
        }
        // principal vector is positive after sign fixing
        assert!(e.vectors[0].iter().all(|&v| v > 0.0));
    }

    #[test]
    fn dense_and_iterative_agree() {
        let a = laplacian_1d(60);
        let d = sym_eigs_smallest(&a, 2, 1e-10, EigenMethod::Dense).unwrap();
        let i = sym_eigs_smallest(&a, 2, 1e-10, EigenMethod::Iterative).unwrap();
        for j in 0..2 {
            assert!((d.values[j] - i.values[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn k_must_be_in_range() {
        let a = laplacian_1d(5);
        assert!(sym_eigs_smallest(&a, 0, 1e-8, EigenMethod::Auto).is_err());
        assert!(sym_eigs_smallest(&a, 5, 1e-8, EigenMethod::Auto).is_err());
    }

    #[test]
    fn tiny_iterative_problem_spans_everything() {
        let a = laplacian_1d(4);
        let e = sym_eigs_smallest(&a, 3, 1e-10, EigenMethod::Iterative).unwrap();
        for j in 0..3 {
            assert!((e.values[j] - exact(4, j + 1)).abs() < 1e-12);
        }
    }
}
