//! The p-th exterior power of a symmetric matrix and the operator
//! `F = σ_k/σ_l(Λ)` built on it.
//!
//! Multi-indices are 0-based, strictly increasing and ordered
//! lexicographically. The derivation matrix `W` of `A` acts on
//! `Λ^p R^n` in the basis `e_I`; its eigenvalues are the p-fold sums of the
//! eigenvalues of `A`, so `σ_k(Λ)` can be evaluated from the `n` eigenvalues
//! of `A` without ever forming `W`. `W` itself is still built for
//! cross-checks and for callers who need the matrix.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::symfun::{self, binomial, ConeCheck, SymfunError};

/// Largest ambient dimension accepted by [`MultiIndexTable::new`].
pub const MAX_DIMENSION: usize = 12;

/// Gap below which divided differences switch to their analytic limit.
pub const DEGENERATE_GAP: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExteriorError {
    #[error("need 1 <= p <= n <= {MAX_DIMENSION}, got n = {n}, p = {p}")]
    BadDimensions { n: usize, p: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("need 0 <= l < k <= N = {big_n}, got k = {k}, l = {l}")]
    BadOrders { k: usize, l: usize, big_n: usize },
    #[error("Lambda(kappa) is outside Gamma_k: sigma_{failing} <= 0")]
    ConeViolation { failing: usize },
    #[error(transparent)]
    Symfun(#[from] SymfunError),
}

/// A pair of multi-indices `I = K + i`, `J = K + j` sharing `p - 1` entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Adjacency {
    /// Position of `I` in the table.
    pub row: usize,
    /// Position of `J` in the table.
    pub col: usize,
    pub i: usize,
    pub j: usize,
    /// `σ(i, I-i) σ(j, J-j)`.
    pub sign: i8,
}

/// The ordered set of p-multi-indices of `{0, …, n-1}` with complements,
/// adjacency and permutation signs.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiIndexTable {
    n: usize,
    p: usize,
    indices: Vec<Vec<usize>>,
    complements: Vec<Vec<usize>>,
    adjacency: Vec<Adjacency>,
    containing: Vec<Vec<usize>>,
}

/// Sign of the permutation sorting `(i, rest)` where `rest` is increasing.
pub fn reorder_sign(i: usize, rest: &[usize]) -> i8 {
    let inversions = rest.iter().filter(|&&r| r < i).count();
    if inversions % 2 == 0 {
        1
    } else {
        -1
    }
}

fn combinations(n: usize, p: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..p).collect();
    if p == 0 {
        return vec![Vec::new()];
    }
    loop {
        out.push(current.clone());
        let mut pos = p;
        while pos > 0 {
            pos -= 1;
            if current[pos] < n - p + pos {
                current[pos] += 1;
                for q in pos + 1..p {
                    current[q] = current[q - 1] + 1;
                }
                break;
            }
            if pos == 0 {
                return out;
            }
        }
    }
}

impl MultiIndexTable {
    pub fn new(n: usize, p: usize) -> Result<Self, ExteriorError> {
        if p == 0 || p > n || n > MAX_DIMENSION {
            return Err(ExteriorError::BadDimensions { n, p });
        }
        let indices = combinations(n, p);
        let complements = indices
            .iter()
            .map(|idx| (0..n).filter(|x| !idx.contains(x)).collect())
            .collect();
        let mut containing = vec![Vec::new(); n];
        for (pos, idx) in indices.iter().enumerate() {
            for &i in idx {
                containing[i].push(pos);
            }
        }
        let mut adjacency = Vec::new();
        for (row, big_i) in indices.iter().enumerate() {
            for (col, big_j) in indices.iter().enumerate() {
                if row == col {
                    continue;
                }
                let only_i: Vec<usize> = big_i.iter().copied().filter(|x| !big_j.contains(x)).collect();
                if only_i.len() != 1 {
                    continue;
                }
                let only_j: Vec<usize> = big_j.iter().copied().filter(|x| !big_i.contains(x)).collect();
                let (i, j) = (only_i[0], only_j[0]);
                let k_part: Vec<usize> = big_i.iter().copied().filter(|&x| x != i).collect();
                let sign = reorder_sign(i, &k_part) * reorder_sign(j, &k_part);
                adjacency.push(Adjacency { row, col, i, j, sign });
            }
        }
        Ok(Self {
            n,
            p,
            indices,
            complements,
            adjacency,
            containing,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// `N = C(n, p)`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[Vec<usize>] {
        &self.indices
    }

    pub fn complements(&self) -> &[Vec<usize>] {
        &self.complements
    }

    pub fn adjacency(&self) -> &[Adjacency] {
        &self.adjacency
    }

    /// Positions of the multi-indices containing `i`.
    pub fn containing(&self, i: usize) -> &[usize] {
        &self.containing[i]
    }

    /// Position of a multi-index, if present.
    pub fn position(&self, index: &[usize]) -> Option<usize> {
        self.indices.iter().position(|x| x == index)
    }
}

/// Symmetric `n × n` matrix with packed upper-triangular storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    upper: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            upper: vec![0.0; n * (n + 1) / 2],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &x) in d.iter().enumerate() {
            m.set(i, i, x);
        }
        m
    }

    /// Symmetric part of a dense matrix.
    pub fn from_dmatrix(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, 0.5 * (a[(i, j)] + a[(j, i)]));
            }
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        r * self.n - r * (r + 1) / 2 + c
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[self.slot(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let s = self.slot(i, j);
        self.upper[s] = value;
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &SymMatrix) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            acc += self.get(i, i) * other.get(i, i);
            for j in i + 1..self.n {
                acc += 2.0 * self.get(i, j) * other.get(i, j);
            }
        }
        acc
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            n: self.n,
            upper: self.upper.iter().map(|x| x * s).collect(),
        }
    }

    pub fn add_scaled(&self, other: &SymMatrix, s: f64) -> Self {
        Self {
            n: self.n,
            upper: self
                .upper
                .iter()
                .zip(&other.upper)
                .map(|(a, b)| a + s * b)
                .collect(),
        }
    }
}

/// The matrix of the derivation `D_A` on `Λ^p R^n`.
#[derive(Debug, Clone)]
pub struct DerivationMatrix {
    pub entries: DMatrix<f64>,
}

pub fn derivation_matrix(a: &SymMatrix, table: &MultiIndexTable) -> Result<DerivationMatrix, ExteriorError> {
    if a.dim() != table.n() {
        return Err(ExteriorError::DimensionMismatch {
            expected: table.n(),
            got: a.dim(),
        });
    }
    let big_n = table.len();
    let mut w = DMatrix::zeros(big_n, big_n);
    for (pos, idx) in table.indices().iter().enumerate() {
        w[(pos, pos)] = idx.iter().map(|&i| a.get(i, i)).sum();
    }
    for adj in table.adjacency() {
        w[(adj.row, adj.col)] = f64::from(adj.sign) * a.get(adj.i, adj.j);
    }
    Ok(DerivationMatrix { entries: w })
}

/// `Λ_I(κ) = Σ_{i∈I} κ_i` in table order.
pub fn lambda_of(kappa: &[f64], table: &MultiIndexTable) -> Result<Vec<f64>, ExteriorError> {
    if kappa.len() != table.n() {
        return Err(ExteriorError::DimensionMismatch {
            expected: table.n(),
            got: kappa.len(),
        });
    }
    Ok(table
        .indices()
        .iter()
        .map(|idx| idx.iter().map(|&i| kappa[i]).sum())
        .collect())
}

/// Membership of `κ` in the (p,k)-cone: `σ_j(Λ(κ)) > 0` for `j <= k`.
pub fn in_pk_cone(kappa: &[f64], k: usize, table: &MultiIndexTable) -> Result<ConeCheck, ExteriorError> {
    let lambda = lambda_of(kappa, table)?;
    Ok(symfun::in_gamma_cone(k, &lambda))
}

/// Validates `0 <= l < k <= N`.
pub fn check_orders(k: usize, l: usize, table: &MultiIndexTable) -> Result<(), ExteriorError> {
    let big_n = table.len();
    if l >= k || k > big_n {
        return Err(ExteriorError::BadOrders { k, l, big_n });
    }
    Ok(())
}

/// `F` and its derivatives at a symmetric matrix.
#[derive(Debug, Clone)]
pub struct CurvaturePoint {
    pub a: SymMatrix,
    /// Eigenvalues of `a`, ascending.
    pub kappa: Vec<f64>,
    /// Orthonormal eigenvectors of `a`, one per column, matching `kappa`.
    pub basis: DMatrix<f64>,
    pub lambda: Vec<f64>,
    pub value: f64,
    /// `F^{ij} = ∂F/∂a_ij` (entries treated as independent).
    pub gradient: SymMatrix,
    /// `∂F/∂κ_i`.
    pub kappa_gradient: Vec<f64>,
    pub cone_ok: bool,
    pub cone_margin: f64,
}

/// Sorted eigen-decomposition of a symmetric matrix.
pub fn eigen_sorted(a: &SymMatrix) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.dim();
    let eig = SymmetricEigen::new(a.to_dmatrix());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let basis = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, basis)
}

/// `Q diag(d) Qᵀ`.
pub fn rotate_diagonal(basis: &DMatrix<f64>, d: &[f64]) -> SymMatrix {
    let n = d.len();
    SymMatrix::from_fn(n, |i, j| (0..n).map(|c| basis[(i, c)] * d[c] * basis[(j, c)]).sum())
}

/// `Qᵀ ξ Q` as a dense matrix.
pub fn to_eigenbasis(basis: &DMatrix<f64>, xi: &SymMatrix) -> DMatrix<f64> {
    basis.transpose() * xi.to_dmatrix() * basis
}

/// Derivatives of `κ ↦ F(Λ(κ))` from the derivatives of `σ_k/σ_l` in `Λ`.
pub fn kappa_derivatives(
    kappa: &[f64],
    k: usize,
    l: usize,
    table: &MultiIndexTable,
    with_hessian: bool,
) -> Result<(f64, Vec<f64>, Vec<Vec<f64>>), ExteriorError> {
    let lambda = lambda_of(kappa, table)?;
    let q = symfun::quotient_derivatives(k, l, &lambda, with_hessian)?;
    let n = table.n();
    let grad: Vec<f64> = (0..n)
        .map(|i| table.containing(i).iter().map(|&big| q.gradient[big]).sum())
        .collect();
    let mut hess = Vec::new();
    if with_hessian {
        hess = vec![vec![0.0; n]; n];
        for (i, row) in hess.iter_mut().enumerate() {
            for (j, entry) in row.iter_mut().enumerate() {
                *entry = table
                    .containing(i)
                    .iter()
                    .map(|&bi| table.containing(j).iter().map(|&bj| q.hessian[bi][bj]).sum::<f64>())
                    .sum();
            }
        }
    }
    Ok((q.value, grad, hess))
}

/// Evaluates `F` and `F^{ij}` without failing on cone violation; the
/// returned point carries `cone_ok`.
pub fn evaluate_point(
    a: &SymMatrix,
    k: usize,
    l: usize,
    table: &MultiIndexTable,
) -> Result<CurvaturePoint, ExteriorError> {
    if a.dim() != table.n() {
        return Err(ExteriorError::DimensionMismatch {
            expected: table.n(),
            got: a.dim(),
        });
    }
    check_orders(k, l, table)?;
    let (kappa, basis) = eigen_sorted(a);
    evaluate_spectral(a, kappa, basis, k, l, table)
}

/// [`evaluate_point`] with the ascending eigenpairs of `a` already known.
pub fn evaluate_spectral(
    a: &SymMatrix,
    kappa: Vec<f64>,
    basis: DMatrix<f64>,
    k: usize,
    l: usize,
    table: &MultiIndexTable,
) -> Result<CurvaturePoint, ExteriorError> {
    let lambda = lambda_of(&kappa, table)?;
    let cone = symfun::in_gamma_cone(k, &lambda);
    let cone_margin = symfun::cone_margin(k, &lambda);
    let (value, kappa_gradient, _) = kappa_derivatives(&kappa, k, l, table, false)?;
    let gradient = rotate_diagonal(&basis, &kappa_gradient);
    Ok(CurvaturePoint {
        a: a.clone(),
        kappa,
        basis,
        lambda,
        value,
        gradient,
        kappa_gradient,
        cone_ok: cone.inside,
        cone_margin,
    })
}

/// `F = σ_k/σ_l(Λ(W(a)))` and `F^{ij}`, requiring `Λ ∈ Γ_k`.
pub fn f_and_gradient(
    a: &SymMatrix,
    k: usize,
    l: usize,
    table: &MultiIndexTable,
) -> Result<CurvaturePoint, ExteriorError> {
    let point = evaluate_point(a, k, l, table)?;
    if !point.cone_ok {
        let failing = symfun::in_gamma_cone(k, &point.lambda).first_failure.unwrap_or(1);
        return Err(ExteriorError::ConeViolation { failing });
    }
    Ok(point)
}

/// Second derivative of a spectral function `a ↦ g(eig(a))` along `ξ`,
/// given the gradient and Hessian of `g` in the eigenvalues.
pub fn spectral_quadratic_form(
    kappa: &[f64],
    basis: &DMatrix<f64>,
    grad: &[f64],
    hess: &[Vec<f64>],
    xi: &SymMatrix,
) -> f64 {
    let n = kappa.len();
    let x = to_eigenbasis(basis, xi);
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += hess[i][j] * x[(i, i)] * x[(j, j)];
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let gap = kappa[i] - kappa[j];
            let dd = if gap.abs() < DEGENERATE_GAP {
                hess[i][i] - hess[i][j]
            } else {
                (grad[i] - grad[j]) / gap
            };
            total += dd * x[(i, j)] * x[(i, j)];
        }
    }
    total
}

/// `Σ F^{ij,rs} ξ_ij ξ_rs` through the divided-difference formula.
pub fn f_hessian_quadratic_form(
    a: &SymMatrix,
    xi: &SymMatrix,
    k: usize,
    l: usize,
    table: &MultiIndexTable,
) -> Result<f64, ExteriorError> {
    if xi.dim() != a.dim() {
        return Err(ExteriorError::DimensionMismatch {
            expected: a.dim(),
            got: xi.dim(),
        });
    }
    let point = f_and_gradient(a, k, l, table)?;
    let (_, grad, hess) = kappa_derivatives(&point.kappa, k, l, table, true)?;
    Ok(spectral_quadratic_form(&point.kappa, &point.basis, &grad, &hess, xi))
}

/// The quadratic form whose non-negativity expresses the inverse convexity
/// of `G = -F^{-1/(k-l)}` in `a`:
/// `Σ (G^{ij,rs} + 2 G^{ir} a^{js}) ξ_ij ξ_rs`. Requires `a` positive definite.
pub fn inverse_convexity_form(
    a: &SymMatrix,
    xi: &SymMatrix,
    k: usize,
    l: usize,
    table: &MultiIndexTable,
) -> Result<f64, ExteriorError> {
    let point = f_and_gradient(a, k, l, table)?;
    let n = a.dim();
    let (f, fg, fh) = kappa_derivatives(&point.kappa, k, l, table, true)?;
    let m = (k - l) as f64;
    let e = -1.0 / m;
    // G = -F^e, G_i = -e F^{e-1} F_i, G_ij = -e F^{e-1} F_ij - e(e-1) F^{e-2} F_i F_j
    let g1 = -e * f.powf(e - 1.0);
    let g2 = -e * (e - 1.0) * f.powf(e - 2.0);
    let gg: Vec<f64> = fg.iter().map(|x| g1 * x).collect();
    let gh: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| g1 * fh[i][j] + g2 * fg[i] * fg[j]).collect())
        .collect();
    let second = spectral_quadratic_form(&point.kappa, &point.basis, &gg, &gh, xi);
    let x = to_eigenbasis(&point.basis, xi);
    let mut extra = 0.0;
    for i in 0..n {
        for j in 0..n {
            extra += gg[i] * x[(i, j)] * x[(i, j)] / point.kappa[j];
        }
    }
    Ok(second + 2.0 * extra)
}

/// `∂F/∂W_IJ` contracted with `∂W_IJ/∂a_ij`: the gradient assembled on the
/// exterior power instead of in the eigenbasis of `a`.
pub fn gradient_via_derivation(
    a: &SymMatrix,
    k: usize,
    l: usize,
    table: &MultiIndexTable,
) -> Result<SymMatrix, ExteriorError> {
    check_orders(k, l, table)?;
    let w = derivation_matrix(a, table)?;
    let w_sym = SymMatrix::from_dmatrix(&w.entries);
    let (lam, basis) = eigen_sorted(&w_sym);
    let q = symfun::quotient_derivatives(k, l, &lam, false)?;
    let dw = rotate_diagonal(&basis, &q.gradient);
    let n = table.n();
    let mut g = SymMatrix::zeros(n);
    for (pos, idx) in table.indices().iter().enumerate() {
        for &i in idx {
            g.set(i, i, g.get(i, i) + dw.get(pos, pos));
        }
    }
    for adj in table.adjacency() {
        if adj.i < adj.j {
            let v = g.get(adj.i, adj.j) + f64::from(adj.sign) * dw.get(adj.row, adj.col);
            g.set(adj.i, adj.j, v);
        }
    }
    Ok(g)
}

/// Number of multi-indices containing a fixed element: `C(n-1, p-1)`.
pub fn incidence(n: usize, p: usize) -> f64 {
    binomial(n - 1, p - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_n3_p2() {
        let t = MultiIndexTable::new(3, 2).unwrap();
        assert_eq!(t.indices(), &[vec![0, 1], vec![0, 2], vec![1, 2]]);
        assert_eq!(t.complements(), &[vec![2], vec![1], vec![0]]);
        let adj = t
            .adjacency()
            .iter()
            .find(|a| a.row == 0 && a.col == 1)
            .unwrap();
        assert_eq!((adj.i, adj.j, adj.sign), (1, 2, 1));
        for a in t.adjacency() {
            assert!(a.sign == 1 || a.sign == -1);
        }
    }

    #[test]
    fn table_p_equals_n() {
        let t = MultiIndexTable::new(2, 2).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.indices()[0], vec![0, 1]);
        assert!(t.adjacency().is_empty());
    }

    #[test]
    fn table_rejects_bad_dimensions() {
        assert!(MultiIndexTable::new(3, 0).is_err());
        assert!(MultiIndexTable::new(3, 4).is_err());
        assert!(MultiIndexTable::new(13, 2).is_err());
    }

    #[test]
    fn table_sizes() {
        for n in 1..=8 {
            for p in 1..=n {
                let t = MultiIndexTable::new(n, p).unwrap();
                assert_eq!(t.len() as f64, binomial(n, p));
                for (idx, comp) in t.indices().iter().zip(t.complements()) {
                    assert!(idx.windows(2).all(|w| w[0] < w[1]));
                    assert_eq!(comp.len(), n - p);
                    assert!(comp.iter().all(|c| !idx.contains(c)));
                }
            }
        }
    }

    #[test]
    fn derivation_matrix_diagonal_case() {
        let t = MultiIndexTable::new(3, 2).unwrap();
        let a = SymMatrix::from_diagonal(&[1.0, 2.0, 3.0]);
        let w = derivation_matrix(&a, &t).unwrap().entries;
        let expected = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 4.0, 5.0]));
        assert_eq!(w, expected);
    }

    #[test]
    fn derivation_matrix_off_diagonal_sign() {
        let t = MultiIndexTable::new(3, 2).unwrap();
        let mut a = SymMatrix::zeros(3);
        a.set(0, 2, 0.7);
        let w = derivation_matrix(&a, &t).unwrap().entries;
        let r = t.position(&[0, 1]).unwrap();
        let c = t.position(&[1, 2]).unwrap();
        assert_eq!(w[(r, c)], -0.7);
        assert_eq!(w[(c, r)], -0.7);
    }

    #[test]
    fn derivation_matrix_p_equals_n_is_trace() {
        let t = MultiIndexTable::new(3, 3).unwrap();
        let a = SymMatrix::from_fn(3, |i, j| (i + 2 * j) as f64 * 0.3 + 1.0);
        let w = derivation_matrix(&a, &t).unwrap().entries;
        assert_eq!(w.nrows(), 1);
        assert!((w[(0, 0)] - a.trace()).abs() < 1e-14);
    }

    #[test]
    fn lambda_examples() {
        let t = MultiIndexTable::new(3, 2).unwrap();
        assert_eq!(lambda_of(&[1.0, 2.0, 3.0], &t).unwrap(), vec![3.0, 4.0, 5.0]);
        let t4 = MultiIndexTable::new(4, 3).unwrap();
        assert!(lambda_of(&[1.0; 4], &t4).unwrap().iter().all(|&x| x == 3.0));
        assert!(lambda_of(&[1.0; 2], &t).is_err());
    }

    #[test]
    fn pk_cone_examples() {
        let t = MultiIndexTable::new(3, 2).unwrap();
        assert!(in_pk_cone(&[-0.4, 1.0, 1.0], 3, &t).unwrap().inside);
        assert!(!in_pk_cone(&[-1.0, -1.0, -1.0], 1, &t).unwrap().inside);
        let t1 = MultiIndexTable::new(3, 1).unwrap();
        let kappa = [1.0, 1.0, -0.1];
        assert_eq!(
            in_pk_cone(&kappa, 3, &t1).unwrap(),
            symfun::in_gamma_cone(3, &kappa)
        );
    }

    #[test]
    fn f_at_identity() {
        let t = MultiIndexTable::new(3, 2).unwrap();
        let p = f_and_gradient(&SymMatrix::identity(3), 2, 0, &t).unwrap();
        assert!((p.value - 12.0).abs() < 1e-12);
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 8.0 } else { 0.0 };
                assert!((p.gradient.get(i, j) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn f_linear_case() {
        let t = MultiIndexTable::new(4, 2).unwrap();
        let a = SymMatrix::from_fn(4, |i, j| if i == j { 1.0 + i as f64 } else { 0.1 * (i + j) as f64 });
        let p = f_and_gradient(&a, 1, 0, &t).unwrap();
        assert!((p.value - 3.0 * a.trace()).abs() < 1e-12);
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 3.0 } else { 0.0 };
                assert!((p.gradient.get(i, j) - expected).abs() < 1e-12);
            }
        }
        let xi = SymMatrix::from_fn(4, |i, j| (i * j) as f64 - 0.5);
        assert!(f_hessian_quadratic_form(&a, &xi, 1, 0, &t).unwrap().abs() < 1e-10);
    }

    #[test]
    fn hessian_form_euler_identity() {
        let t = MultiIndexTable::new(4, 2).unwrap();
        let a = SymMatrix::from_fn(4, |i, j| if i == j { 1.0 + 0.2 * i as f64 } else { 0.05 * (1 + i + j) as f64 });
        for (k, l) in [(2, 0), (3, 1), (4, 2), (5, 1)] {
            let f = f_and_gradient(&a, k, l, &t).unwrap().value;
            let q = f_hessian_quadratic_form(&a, &a, k, l, &t).unwrap();
            let d = (k - l) as f64;
            let expected = d * (d - 1.0) * f;
            assert!((q - expected).abs() < 1e-9 * (1.0 + expected.abs()), "k={k} l={l}: {q} vs {expected}");
        }
    }

    #[test]
    fn cone_violation_is_reported() {
        let t = MultiIndexTable::new(3, 2).unwrap();
        let a = SymMatrix::from_diagonal(&[-1.0, -1.0, -1.0]);
        assert!(matches!(
            f_and_gradient(&a, 2, 0, &t),
            Err(ExteriorError::ConeViolation { failing: 1 })
        ));
    }

    #[test]
    fn bad_orders_rejected() {
        let t = MultiIndexTable::new(3, 2).unwrap();
        let a = SymMatrix::identity(3);
        assert!(matches!(f_and_gradient(&a, 2, 2, &t), Err(ExteriorError::BadOrders { .. })));
        assert!(matches!(f_and_gradient(&a, 4, 0, &t), Err(ExteriorError::BadOrders { .. })));
    }
}
