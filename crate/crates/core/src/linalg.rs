//! Matrix-free iterative solvers and the few direct factorizations used by
//! the elliptic and least-squares layers. Everything works on flat slices so
//! grid unknowns can be packed without copies of the domain logic.

use crate::error::{Error, Result};
use crate::scalar::{c_zero, Scalar, C};

fn dot<S: Scalar>(a: &[C<S>], b: &[C<S>]) -> C<S> {
    a.iter().zip(b).fold(c_zero::<S>(), |acc, (x, y)| acc + x.conj() * *y)
}

fn norm<S: Scalar>(a: &[C<S>]) -> S {
    a.iter().fold(S::zero(), |acc, x| acc + x.norm_sqr()).sqrt()
}

/// BiCGStab for general (possibly nonsymmetric) systems; `apply` computes
/// y = A·x. Returns the solution with its relative residual and iteration
/// count, or `SolverStall` when the tolerance is out of reach.
pub fn bicgstab<S: Scalar>(
    n: usize,
    apply: impl Fn(&[C<S>], &mut [C<S>]),
    b: &[C<S>],
    tol: S,
    max_iter: usize,
) -> Result<(Vec<C<S>>, S, usize)> {
    let nb = norm(b);
    if nb == S::zero() {
        return Ok((vec![c_zero(); n], S::zero(), 0));
    }
    let mut x = vec![c_zero::<S>(); n];
    let mut r = b.to_vec();
    let r0 = r.clone();
    let mut rho = C::new(S::one(), S::zero());
    let mut alpha = C::new(S::one(), S::zero());
    let mut omega = C::new(S::one(), S::zero());
    let mut p = vec![c_zero::<S>(); n];
    let mut v = vec![c_zero::<S>(); n];
    let mut s = vec![c_zero::<S>(); n];
    let mut t = vec![c_zero::<S>(); n];
    let tiny = S::of(1e-300);
    for it in 1..=max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new.norm() < tiny {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        for i in 0..n {
            p[i] = r[i] + (p[i] - v[i] * omega) * beta;
        }
        apply(&p, &mut v);
        alpha = rho_new / dot(&r0, &v);
        for i in 0..n {
            s[i] = r[i] - v[i] * alpha;
        }
        if norm(&s) / nb < tol {
            for i in 0..n {
                x[i] = x[i] + p[i] * alpha;
            }
            return Ok((x, norm(&s) / nb, it));
        }
        apply(&s, &mut t);
        let tt = dot(&t, &t);
        if tt.norm() < tiny {
            break;
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] = x[i] + p[i] * alpha + s[i] * omega;
            r[i] = s[i] - t[i] * omega;
        }
        let rel = norm(&r) / nb;
        if rel < tol {
            return Ok((x, rel, it));
        }
        rho = rho_new;
    }
    Err(Error::SolverStall(format!(
        "bicgstab at {:.3e} after {} iterations (target {:.1e})",
        (norm(&r) / nb).to_f64(),
        max_iter,
        tol.to_f64()
    )))
}

/// Conjugate gradients for Hermitian positive definite operators.
pub fn conjugate_gradient<S: Scalar>(
    n: usize,
    apply: impl Fn(&[C<S>], &mut [C<S>]),
    b: &[C<S>],
    tol: S,
    max_iter: usize,
) -> Result<(Vec<C<S>>, S, usize)> {
    let nb = norm(b);
    if nb == S::zero() {
        return Ok((vec![c_zero(); n], S::zero(), 0));
    }
    let mut x = vec![c_zero::<S>(); n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![c_zero::<S>(); n];
    let mut rs = dot(&r, &r);
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let alpha = rs / dot(&p, &ap);
        for i in 0..n {
            x[i] = x[i] + p[i] * alpha;
            r[i] = r[i] - ap[i] * alpha;
        }
        let rs_new = dot(&r, &r);
        let rel = rs_new.re.sqrt() / nb;
        if rel < tol {
            return Ok((x, rel, it));
        }
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + p[i] * beta;
        }
        rs = rs_new;
    }
    Err(Error::SolverStall(format!(
        "cg at {:.3e} after {} iterations (target {:.1e})",
        (rs.re.sqrt() / nb).to_f64(),
        max_iter,
        tol.to_f64()
    )))
}

/// Thomas elimination for a tridiagonal system with real bands and complex
/// right side; assumes the usual diagonal dominance (no pivoting).
pub fn thomas_tridiagonal<S: Scalar>(
    lower: &[S],
    diag: &[S],
    upper: &[S],
    rhs: &[C<S>],
) -> Vec<C<S>> {
    let n = diag.len();
    let mut c_star = vec![S::zero(); n];
    let mut d_star = vec![c_zero::<S>(); n];
    c_star[0] = upper[0] / diag[0];
    d_star[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i - 1] * c_star[i - 1];
        if i < n - 1 {
            c_star[i] = upper[i] / m;
        }
        d_star[i] = (rhs[i] - d_star[i - 1] * lower[i - 1]) / m;
    }
    let mut x = vec![c_zero::<S>(); n];
    x[n - 1] = d_star[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d_star[i] - x[i + 1] * c_star[i];
    }
    x
}

/// In-place lower Cholesky factor of a symmetric positive definite matrix in
/// row-major order; fails on a non-positive pivot.
pub fn cholesky_factor<S: Scalar>(a: &mut [S], n: usize) -> Result<()> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= S::zero() {
            return Err(Error::SolverStall(format!(
                "cholesky pivot {:.3e} at column {}",
                d.to_f64(),
                j
            )));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Ok(())
}

/// Solves L Lᵀ x = b given the factor from [`cholesky_factor`].
pub fn cholesky_solve<S: Scalar>(l: &[S], n: usize, b: &[S]) -> Vec<S> {
    let mut y = vec![S::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![S::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Compressed sparse rows with complex entries; rows are built in order and
/// the adjoint product uses the conjugated entries, so `mul` and
/// `mul_adjoint` form an exact dual pair.
#[derive(Clone, Debug)]
pub struct Csr<S: Scalar> {
    pub rows: usize,
    pub cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<C<S>>,
}

impl<S: Scalar> Csr<S> {
    pub fn builder(rows: usize, cols: usize) -> CsrBuilder<S> {
        CsrBuilder {
            rows,
            cols,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn mul_into(&self, x: &[C<S>], out: &mut [C<S>]) {
        for r in 0..self.rows {
            let mut acc = c_zero::<S>();
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc = acc + self.values[k] * x[self.indices[k] as usize];
            }
            out[r] = acc;
        }
    }

    pub fn mul_adjoint_into(&self, x: &[C<S>], out: &mut [C<S>]) {
        for v in out.iter_mut() {
            *v = c_zero();
        }
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[k] as usize;
                out[c] = out[c] + self.values[k].conj() * x[r];
            }
        }
    }
}

pub struct CsrBuilder<S: Scalar> {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<C<S>>,
}

impl<S: Scalar> CsrBuilder<S> {
    /// Appends the next row's entries; call once per row, in row order.
    pub fn push_row(&mut self, entries: &[(u32, C<S>)]) {
        for &(c, v) in entries {
            debug_assert!((c as usize) < self.cols);
            self.indices.push(c);
            self.values.push(v);
        }
        self.indptr.push(self.indices.len());
    }

    pub fn finish(self) -> Csr<S> {
        assert_eq!(self.indptr.len(), self.rows + 1, "row count mismatch");
        Csr {
            rows: self.rows,
            cols: self.cols,
            indptr: self.indptr,
            indices: self.indices,
            values: self.values,
        }
    }
}
