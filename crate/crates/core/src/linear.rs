//! Sparse linear algebra for the Newton steps: a CSR matrix, ILU(0) and
//! Jacobi preconditioners with an optional Galerkin coarse correction,
//! restarted GMRES, and a direct sparse LU.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinearError {
    #[error("zero pivot in row {0}")]
    ZeroPivot(usize),
    #[error("GMRES did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("sparse LU failed: {0}")]
    Direct(String),
    #[error("non-finite value in the linear system")]
    NonFinite,
}

/// Compressed sparse row matrix with sorted, unique column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

/// Row-by-row construction of a [`CsrMatrix`].
#[derive(Debug)]
pub struct CsrBuilder {
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrBuilder {
    /// Appends the next row; entries may repeat and are summed. The buffer
    /// is sorted in place.
    pub fn push_row(&mut self, entries: &mut [(usize, f64)]) {
        entries.sort_unstable_by_key(|e| e.0);
        let mut last = usize::MAX;
        for &(c, v) in entries.iter() {
            debug_assert!(c < self.ncols);
            if c == last {
                *self.vals.last_mut().expect("previous entry") += v;
            } else {
                self.cols.push(c);
                self.vals.push(v);
                last = c;
            }
        }
        self.row_ptr.push(self.cols.len());
    }

    pub fn finish(self) -> CsrMatrix {
        CsrMatrix {
            nrows: self.row_ptr.len() - 1,
            ncols: self.ncols,
            row_ptr: self.row_ptr,
            cols: self.cols,
            vals: self.vals,
        }
    }
}

impl CsrMatrix {
    pub fn builder(ncols: usize, capacity: usize) -> CsrBuilder {
        CsrBuilder {
            ncols,
            row_ptr: vec![0],
            cols: Vec::with_capacity(capacity),
            vals: Vec::with_capacity(capacity),
        }
    }

    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(r, c, v) in triplets {
            rows[r].push((c, v));
        }
        let mut b = Self::builder(ncols, triplets.len());
        for mut row in rows {
            b.push_row(&mut row);
        }
        b.finish()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.binary_search(&j).map(|p| v[p]).unwrap_or(0.0)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            *yi = c.iter().zip(v).map(|(&j, a)| a * x[j]).sum();
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, i)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                trip.push((j, i, a));
            }
        }
        Self::from_triplets(self.ncols, self.nrows, &trip)
    }
}

/// Preconditioner choice for GMRES.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    Jacobi,
    Ilu0,
}

/// Strategy for the Newton linear systems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinearSolver {
    /// Sparse LU.
    Direct,
    /// Restarted, right-preconditioned GMRES.
    Iterative {
        tol: f64,
        restart: usize,
        max_iter: usize,
        preconditioner: Preconditioner,
    },
    /// Direct for small systems, GMRES with ILU(0) otherwise (falling back
    /// to direct when GMRES stalls and the system is small enough).
    Auto,
}

impl Default for LinearSolver {
    fn default() -> Self {
        Self::Auto
    }
}

/// Largest system solved directly by [`LinearSolver::Auto`].
pub const AUTO_DIRECT_LIMIT: usize = 1500;
/// Largest system for which [`LinearSolver::Auto`] falls back to direct.
pub const AUTO_FALLBACK_LIMIT: usize = 20_000;

pub const DEFAULT_GMRES: LinearSolver = LinearSolver::Iterative {
    tol: 1e-10,
    restart: 60,
    max_iter: 3000,
    preconditioner: Preconditioner::Ilu0,
};

/// Outcome of a linear solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearStats {
    pub method: String,
    pub iterations: usize,
    pub relative_residual: f64,
}

impl LinearSolver {
    pub fn solve(&self, a: &CsrMatrix, b: &[f64]) -> Result<(Vec<f64>, LinearStats), LinearError> {
        self.solve_with(a, b, None, 0.0)
    }

    /// As [`solve`](Self::solve); GMRES additionally uses `coarse` as a
    /// two-level correction and stops at the relative tolerance
    /// `max(tol, forcing)` (inexact Newton).
    pub fn solve_with(
        &self,
        a: &CsrMatrix,
        b: &[f64],
        coarse: Option<&CoarseSpace>,
        forcing: f64,
    ) -> Result<(Vec<f64>, LinearStats), LinearError> {
        if b.iter().any(|x| !x.is_finite()) {
            return Err(LinearError::NonFinite);
        }
        match *self {
            Self::Direct => solve_direct(a, b),
            Self::Iterative {
                tol,
                restart,
                max_iter,
                preconditioner,
            } => gmres_solve_with(a, b, tol.max(forcing), restart, max_iter, preconditioner, coarse),
            Self::Auto => {
                if a.nrows() <= AUTO_DIRECT_LIMIT {
                    return solve_direct(a, b);
                }
                let LinearSolver::Iterative {
                    tol,
                    restart,
                    max_iter,
                    preconditioner,
                } = DEFAULT_GMRES
                else {
                    unreachable!()
                };
                match gmres_solve_with(a, b, tol.max(forcing), restart, max_iter, preconditioner, coarse) {
                    Ok(out) => Ok(out),
                    Err(e) if a.nrows() > AUTO_FALLBACK_LIMIT => Err(e),
                    Err(_) => solve_direct(a, b),
                }
            }
        }
    }
}

pub fn solve_direct(a: &CsrMatrix, b: &[f64]) -> Result<(Vec<f64>, LinearStats), LinearError> {
    let n = a.nrows();
    let mut trip = Vec::with_capacity(a.nnz());
    for i in 0..n {
        let (c, v) = a.row(i);
        for (&j, &x) in c.iter().zip(v) {
            trip.push(Triplet::new(i, j, x));
        }
    }
    let m = SparseColMat::<usize, f64>::try_new_from_triplets(n, a.ncols(), &trip)
        .map_err(|e| LinearError::Direct(format!("{e:?}")))?;
    let lu = m.sp_lu().map_err(|e| LinearError::Direct(format!("{e:?}")))?;
    let rhs = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
    let sol = lu.solve(&rhs);
    let x: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LinearError::Direct("singular matrix".into()));
    }
    let rel = relative_residual(a, &x, b);
    Ok((
        x,
        LinearStats {
            method: "direct".into(),
            iterations: 1,
            relative_residual: rel,
        },
    ))
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
    let nb = norm(b);
    if nb == 0.0 {
        norm(&r)
    } else {
        norm(&r) / nb
    }
}

/// Incomplete LU factorisation with the sparsity pattern of `A`.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self, LinearError> {
        let n = a.nrows();
        let mut lu = a.clone();
        let mut diag = vec![usize::MAX; n];
        for (i, d) in diag.iter_mut().enumerate() {
            let (c, _) = lu.row(i);
            *d = lu.row_ptr[i] + c.binary_search(&i).map_err(|_| LinearError::ZeroPivot(i))?;
        }
        let mut marker = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for p in start..end {
                marker[lu.cols[p]] = p;
            }
            for p in start..end {
                let k = lu.cols[p];
                if k >= i {
                    break;
                }
                let pivot = lu.vals[diag[k]];
                if pivot == 0.0 {
                    return Err(LinearError::ZeroPivot(k));
                }
                let lik = lu.vals[p] / pivot;
                lu.vals[p] = lik;
                for q in diag[k] + 1..lu.row_ptr[k + 1] {
                    let j = lu.cols[q];
                    let m = marker[j];
                    if m != usize::MAX && m >= start && m < end {
                        lu.vals[m] -= lik * lu.vals[q];
                    }
                }
            }
            for p in start..end {
                marker[lu.cols[p]] = usize::MAX;
            }
            if lu.vals[diag[i]] == 0.0 {
                return Err(LinearError::ZeroPivot(i));
            }
        }
        Ok(Self { lu, diag })
    }

    /// Solves `LU x = b` in place.
    pub fn apply(&self, x: &mut [f64]) {
        let n = self.diag.len();
        for i in 0..n {
            let mut s = x[i];
            for p in self.lu.row_ptr[i]..self.diag[i] {
                s -= self.lu.vals[p] * x[self.lu.cols[p]];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for p in self.diag[i] + 1..self.lu.row_ptr[i + 1] {
                s -= self.lu.vals[p] * x[self.lu.cols[p]];
            }
            x[i] = s / self.lu.vals[self.diag[i]];
        }
    }
}

enum Precond {
    Jacobi(Vec<f64>),
    Ilu(Ilu0),
}

impl Precond {
    fn apply(&self, x: &mut [f64]) {
        match self {
            Self::Jacobi(inv) => x.iter_mut().zip(inv).for_each(|(v, d)| *v *= d),
            Self::Ilu(ilu) => ilu.apply(x),
        }
    }
}

/// Orthonormal basis of a small subspace used for a Galerkin coarse
/// correction `Z (Zᵀ A Z)⁻¹ Zᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseSpace {
    cols: Vec<Vec<f64>>,
}

impl CoarseSpace {
    /// Orthonormalises `columns` (modified Gram–Schmidt, twice), dropping
    /// numerically dependent ones.
    pub fn new(columns: Vec<Vec<f64>>) -> Self {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(columns.len());
        for mut c in columns {
            let n0 = norm(&c);
            if n0 == 0.0 {
                continue;
            }
            for _ in 0..2 {
                for q in &cols {
                    let d = dot(&c, q);
                    c.iter_mut().zip(q).for_each(|(x, y)| *x -= d * y);
                }
            }
            let n1 = norm(&c);
            if n1 > 1e-10 * n0 {
                c.iter_mut().for_each(|x| *x /= n1);
                cols.push(c);
            }
        }
        Self { cols }
    }

    pub fn dim(&self) -> usize {
        self.cols.len()
    }

    pub fn len(&self) -> usize {
        self.cols.first().map_or(0, |c| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }
}

struct CoarseSolver<'a> {
    space: &'a CoarseSpace,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl<'a> CoarseSolver<'a> {
    fn new(a: &CsrMatrix, space: &'a CoarseSpace) -> Option<Self> {
        let m = space.dim();
        if m == 0 || space.len() != a.nrows() {
            return None;
        }
        let az: Vec<Vec<f64>> = space.cols.iter().map(|z| a.mul_vec(z)).collect();
        let e = nalgebra::DMatrix::from_fn(m, m, |i, j| dot(&space.cols[i], &az[j]));
        let lu = e.lu();
        if lu.determinant().abs() < f64::MIN_POSITIVE || !lu.determinant().is_finite() {
            return None;
        }
        Some(Self { space, lu })
    }

    /// `Z (Zᵀ A Z)⁻¹ Zᵀ r`.
    fn correction(&self, r: &[f64]) -> Vec<f64> {
        let c = nalgebra::DVector::from_iterator(self.space.dim(), self.space.cols.iter().map(|z| dot(z, r)));
        let y = self.lu.solve(&c).unwrap_or_else(|| nalgebra::DVector::zeros(self.space.dim()));
        let mut out = vec![0.0; r.len()];
        for (z, yk) in self.space.cols.iter().zip(y.iter()) {
            out.iter_mut().zip(z).for_each(|(o, v)| *o += yk * v);
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `P r = Q r + M⁻¹ (r - A Q r)` with `Q` the coarse correction and `M`
/// the one-level preconditioner.
struct TwoLevel<'a> {
    a: &'a CsrMatrix,
    fine: Precond,
    coarse: Option<CoarseSolver<'a>>,
    scratch: std::cell::RefCell<Vec<f64>>,
}

impl TwoLevel<'_> {
    fn apply(&self, x: &mut [f64]) {
        let Some(coarse) = &self.coarse else {
            self.fine.apply(x);
            return;
        };
        let q = coarse.correction(x);
        let mut aq = self.scratch.borrow_mut();
        self.a.mul_vec_into(&q, &mut aq);
        x.iter_mut().zip(aq.iter()).for_each(|(v, w)| *v -= w);
        self.fine.apply(x);
        x.iter_mut().zip(&q).for_each(|(v, w)| *v += w);
    }
}

/// Restarted GMRES with right preconditioning; converged when
/// `‖b - Ax‖ <= tol ‖b‖`.
pub fn gmres_solve(
    a: &CsrMatrix,
    b: &[f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
    preconditioner: Preconditioner,
) -> Result<(Vec<f64>, LinearStats), LinearError> {
    gmres_solve_with(a, b, tol, restart, max_iter, preconditioner, None)
}

/// GMRES with an optional coarse space: the initial guess is the coarse
/// solution and the preconditioner is two-level.
pub fn gmres_solve_with(
    a: &CsrMatrix,
    b: &[f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
    preconditioner: Preconditioner,
    coarse: Option<&CoarseSpace>,
) -> Result<(Vec<f64>, LinearStats), LinearError> {
    let n = a.nrows();
    let coarse = coarse.and_then(|c| CoarseSolver::new(a, c));
    let method = match (preconditioner, coarse.is_some()) {
        (Preconditioner::Jacobi, false) => "gmres-jacobi",
        (Preconditioner::Ilu0, false) => "gmres-ilu0",
        (Preconditioner::Jacobi, true) => "gmres-jacobi-coarse",
        (Preconditioner::Ilu0, true) => "gmres-ilu0-coarse",
    };
    let stats = |iterations, relative_residual| LinearStats {
        method: method.into(),
        iterations,
        relative_residual,
    };
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, stats(0, 0.0)));
    }
    let m = restart.max(1);
    let mut total = 0;
    let mut w = vec![0.0; n];
    let mut r = b.to_vec();
    if let Some(c) = &coarse {
        x = c.correction(b);
        a.mul_vec_into(&x, &mut w);
        r.iter_mut().zip(&w).for_each(|(ri, wi)| *ri -= wi);
        let rn = norm(&r);
        // the coarse space may already contain the solution
        if rn <= tol * bnorm {
            return Ok((x, stats(0, rn / bnorm)));
        }
    }
    let fine = match preconditioner {
        Preconditioner::Jacobi => Precond::Jacobi(
            a.diagonal()
                .iter()
                .map(|d| if *d != 0.0 { 1.0 / d } else { 1.0 })
                .collect(),
        ),
        Preconditioner::Ilu0 => Precond::Ilu(Ilu0::new(a)?),
    };
    let precond = TwoLevel {
        a,
        fine,
        coarse,
        scratch: std::cell::RefCell::new(vec![0.0; n]),
    };
    let mut z = vec![0.0; n];
    loop {
        let beta = norm(&r);
        if beta <= tol * bnorm {
            return Ok((x, stats(total, beta / bnorm)));
        }
        if total >= max_iter {
            return Err(LinearError::NotConverged {
                iterations: total,
                residual: beta / bnorm,
            });
        }
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..m {
            z.copy_from_slice(&basis[j]);
            precond.apply(&mut z);
            a.mul_vec_into(&z, &mut w);
            for (i, vi) in basis.iter().enumerate() {
                let hij: f64 = w.iter().zip(vi).map(|(p, q)| p * q).sum();
                h[i][j] = hij;
                w.iter_mut().zip(vi).for_each(|(p, q)| *p -= hij * q);
            }
            let hn = norm(&w);
            h[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let denom = (h[j][j] * h[j][j] + h[j + 1][j] * h[j + 1][j]).sqrt();
            if denom == 0.0 {
                used = j;
                break;
            }
            cs[j] = h[j][j] / denom;
            sn[j] = h[j + 1][j] / denom;
            h[j][j] = denom;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            total += 1;
            if g[j + 1].abs() <= tol * bnorm || total >= max_iter || hn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        if used == 0 {
            return Err(LinearError::NotConverged {
                iterations: total,
                residual: beta / bnorm,
            });
        }
        // back substitution for the least-squares coefficients
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for k in i + 1..used {
                s -= h[i][k] * y[k];
            }
            y[i] = s / h[i][i];
        }
        let mut update = vec![0.0; n];
        for (k, yk) in y.iter().enumerate() {
            update.iter_mut().zip(&basis[k]).for_each(|(u, v)| *u += yk * v);
        }
        precond.apply(&mut update);
        x.iter_mut().zip(&update).for_each(|(p, q)| *p += q);
        a.mul_vec_into(&x, &mut w);
        r.iter_mut().zip(b.iter().zip(&w)).for_each(|(ri, (bi, wi))| *ri = bi - wi);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(LinearError::NonFinite);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn convection_diffusion(m: usize) -> CsrMatrix {
        // 2-D periodic operator with a first-order term, nonsymmetric
        let idx = |i: usize, j: usize| (i % m) * m + (j % m);
        let mut trip = Vec::new();
        for i in 0..m {
            for j in 0..m {
                let r = idx(i, j);
                trip.push((r, r, -4.2));
                trip.push((r, idx(i + 1, j), 1.3));
                trip.push((r, idx(i + m - 1, j), 0.7));
                trip.push((r, idx(i, j + 1), 1.0));
                trip.push((r, idx(i, j + m - 1), 1.0));
            }
        }
        CsrMatrix::from_triplets(m * m, m * m, &trip)
    }

    #[test]
    fn builder_merges_duplicates() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, -1.0), (0, 0, 4.0)]);
        assert_eq!(a.get(0, 1), 3.0);
        assert_eq!(a.get(0, 0), 4.0);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.mul_vec(&[1.0, 1.0]), vec![7.0, -1.0]);
        assert_eq!(a.transpose().get(1, 0), 3.0);
    }

    #[test]
    fn ilu0_is_exact_for_tridiagonal() {
        let n = 30;
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, 3.0 + i as f64 * 0.01));
            if i > 0 {
                trip.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                trip.push((i, i + 1, -0.5));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &trip);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let ilu = Ilu0::new(&a).unwrap();
        let mut x = b.clone();
        ilu.apply(&mut x);
        let ax = a.mul_vec(&x);
        for (p, q) in ax.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn gmres_matches_direct() {
        let a = convection_diffusion(20);
        let b: Vec<f64> = (0..400).map(|i| ((i * 7) % 13) as f64 - 6.0).collect();
        let (xd, _) = solve_direct(&a, &b).unwrap();
        for pc in [Preconditioner::Ilu0, Preconditioner::Jacobi] {
            let (xg, stats) = gmres_solve(&a, &b, 1e-12, 30, 2000, pc).unwrap();
            assert!(stats.relative_residual <= 1e-12);
            for (p, q) in xg.iter().zip(&xd) {
                assert!((p - q).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gmres_zero_rhs() {
        let a = convection_diffusion(5);
        let (x, s) = gmres_solve(&a, &[0.0; 25], 1e-10, 10, 10, Preconditioner::Ilu0).unwrap();
        assert!(x.iter().all(|v| *v == 0.0));
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn gmres_reports_nonconvergence() {
        let a = convection_diffusion(20);
        let b: Vec<f64> = (0..400).map(|i| ((i * 31) % 17) as f64).collect();
        let err = gmres_solve(&a, &b, 1e-14, 2, 2, Preconditioner::Jacobi).unwrap_err();
        assert!(matches!(err, LinearError::NotConverged { iterations: 2, .. }));
    }
}
