//! Elementary symmetric functions and Gårding cones.
//!
//! `σ_k(λ)` is evaluated through the coefficients of `Π (1 + t λ_i)`, one
//! multiply-add per entry and order. Subset enumeration is kept in the test
//! oracle only. Indices in this module are 0-based.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymfunError {
    #[error("order {k} out of range for a vector of length {m}")]
    OrderOutOfRange { k: usize, m: usize },
    #[error("empty eigenvalue vector")]
    Empty,
    #[error("non-finite entry at index {0}")]
    NonFinite(usize),
    #[error("excluded index {index} out of range for length {m}")]
    IndexOutOfRange { index: usize, m: usize },
    #[error("excluded index {0} listed twice")]
    DuplicateIndex(usize),
    #[error("at most two excluded indices are supported, got {0}")]
    TooManyExcluded(usize),
    #[error("quotient requires l < k, got k = {k}, l = {l}")]
    BadQuotientOrders { k: usize, l: usize },
    #[error("vector not in the Gårding cone: sigma_{failing} <= 0")]
    ConeViolation { failing: usize },
}

/// A finite, non-empty vector of eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenVector(Vec<f64>);

impl EigenVector {
    pub fn new(values: Vec<f64>) -> Result<Self, SymfunError> {
        if values.is_empty() {
            return Err(SymfunError::Empty);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SymfunError::NonFinite(i));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for EigenVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Result of a Gårding cone membership test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConeCheck {
    pub inside: bool,
    /// Smallest `j` with `σ_j <= 0`, if any.
    pub first_failure: Option<usize>,
}

/// Binomial coefficient as a float. Exact for the sizes used here.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// All `σ_0, …, σ_kmax` of `lam` (entries beyond `lam.len()` are zero).
pub fn elementary_all(lam: &[f64], kmax: usize) -> Vec<f64> {
    let mut e = vec![0.0; kmax + 1];
    e[0] = 1.0;
    for (count, &x) in lam.iter().enumerate() {
        let top = (count + 1).min(kmax);
        for j in (1..=top).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e
}

fn check_order(k: usize, m: usize) -> Result<(), SymfunError> {
    if k > m {
        Err(SymfunError::OrderOutOfRange { k, m })
    } else {
        Ok(())
    }
}

/// `σ_k(λ)`, with `σ_0 = 1`.
pub fn sigma(k: usize, lam: &[f64]) -> Result<f64, SymfunError> {
    check_order(k, lam.len())?;
    Ok(elementary_all(lam, k)[k])
}

/// `σ_k` of `lam` with the entries at `excluded` removed.
pub fn sigma_minor(k: usize, lam: &[f64], excluded: &[usize]) -> Result<f64, SymfunError> {
    let m = lam.len();
    if excluded.len() > 2 {
        return Err(SymfunError::TooManyExcluded(excluded.len()));
    }
    for (pos, &i) in excluded.iter().enumerate() {
        if i >= m {
            return Err(SymfunError::IndexOutOfRange { index: i, m });
        }
        if excluded[..pos].contains(&i) {
            return Err(SymfunError::DuplicateIndex(i));
        }
    }
    if k == 0 {
        return Ok(1.0);
    }
    check_order(k, m - excluded.len())?;
    let rest: Vec<f64> = lam
        .iter()
        .enumerate()
        .filter(|(i, _)| !excluded.contains(i))
        .map(|(_, &x)| x)
        .collect();
    Ok(elementary_all(&rest, k)[k])
}

/// Membership in the open cone `Γ_k = {σ_j > 0, 1 <= j <= k}`.
///
/// Strict inequality, no tolerance. Orders above `lam.len()` fail at the
/// first `j` exceeding the length since `σ_j` vanishes there.
pub fn in_gamma_cone(k: usize, lam: &[f64]) -> ConeCheck {
    let e = elementary_all(lam, k);
    let first_failure = (1..=k).find(|&j| !(e[j] > 0.0));
    ConeCheck {
        inside: first_failure.is_none(),
        first_failure,
    }
}

/// `min_{1<=j<=k} σ_j(λ)`.
pub fn cone_margin(k: usize, lam: &[f64]) -> f64 {
    let e = elementary_all(lam, k);
    e[1..=k].iter().copied().fold(f64::INFINITY, f64::min)
}

/// `(σ_k/σ_l)^{1/(k-l)}` on `Γ_k`.
pub fn quotient_root(k: usize, l: usize, lam: &[f64]) -> Result<f64, SymfunError> {
    if l >= k {
        return Err(SymfunError::BadQuotientOrders { k, l });
    }
    check_order(k, lam.len())?;
    let cone = in_gamma_cone(k, lam);
    if let Some(failing) = cone.first_failure {
        return Err(SymfunError::ConeViolation { failing });
    }
    let e = elementary_all(lam, k);
    Ok((e[k] / e[l]).powf(1.0 / (k - l) as f64))
}

/// For every `i`, the coefficients `σ_0(λ|i), …, σ_kmax(λ|i)`.
///
/// Built from prefix and suffix products so no subtraction is involved.
pub fn minors_all(lam: &[f64], kmax: usize) -> Vec<Vec<f64>> {
    let m = lam.len();
    let mut prefix = Vec::with_capacity(m + 1);
    prefix.push(unit_poly(kmax));
    for &x in lam {
        let next = mul_linear(prefix.last().unwrap(), x);
        prefix.push(next);
    }
    let mut suffix = vec![unit_poly(kmax); m + 1];
    for i in (0..m).rev() {
        suffix[i] = mul_linear(&suffix[i + 1], lam[i]);
    }
    (0..m)
        .map(|i| truncated_product(&prefix[i], &suffix[i + 1], kmax))
        .collect()
}

fn unit_poly(kmax: usize) -> Vec<f64> {
    let mut p = vec![0.0; kmax + 1];
    p[0] = 1.0;
    p
}

fn mul_linear(p: &[f64], x: f64) -> Vec<f64> {
    let mut out = p.to_vec();
    for j in (1..p.len()).rev() {
        out[j] += x * p[j - 1];
    }
    out
}

fn truncated_product(a: &[f64], b: &[f64], kmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate().take(kmax + 1 - i) {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Gradient of `σ_k`: component `i` is `σ_{k-1}(λ|i)`.
pub fn sigma_gradient(k: usize, lam: &[f64]) -> Result<Vec<f64>, SymfunError> {
    let m = lam.len();
    if k == 0 || k > m {
        return Err(SymfunError::OrderOutOfRange { k, m });
    }
    Ok(minors_all(lam, k - 1).into_iter().map(|c| c[k - 1]).collect())
}

/// `σ_j(λ|i,r)` for all pairs, `j = 0..=kmax`. The diagonal is left zero.
pub fn pair_minors_all(lam: &[f64], kmax: usize) -> Vec<Vec<Vec<f64>>> {
    let m = lam.len();
    let mut out = vec![vec![vec![0.0; kmax + 1]; m]; m];
    for i in 0..m {
        let rest: Vec<f64> = lam
            .iter()
            .enumerate()
            .filter(|&(r, _)| r != i)
            .map(|(_, &x)| x)
            .collect();
        let inner = minors_all(&rest, kmax);
        for (pos, coeffs) in inner.into_iter().enumerate() {
            let r = if pos < i { pos } else { pos + 1 };
            out[i][r] = coeffs;
        }
    }
    out
}

/// Value, gradient and Hessian of `σ_k/σ_l` with respect to `λ`.
///
/// `σ_{l-1}(λ|i)` is taken as zero when `l = 0`.
#[derive(Debug, Clone)]
pub struct QuotientDerivatives {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
}

pub fn quotient_derivatives(
    k: usize,
    l: usize,
    lam: &[f64],
    with_hessian: bool,
) -> Result<QuotientDerivatives, SymfunError> {
    if l >= k {
        return Err(SymfunError::BadQuotientOrders { k, l });
    }
    let m = lam.len();
    check_order(k, m)?;
    let e = elementary_all(lam, k);
    let (sk, sl) = (e[k], e[l]);
    let minors = minors_all(lam, k);
    let dk: Vec<f64> = minors.iter().map(|c| c[k - 1]).collect();
    let dl: Vec<f64> = minors
        .iter()
        .map(|c| if l == 0 { 0.0 } else { c[l - 1] })
        .collect();
    let gradient: Vec<f64> = (0..m)
        .map(|i| dk[i] / sl - sk * dl[i] / (sl * sl))
        .collect();
    let mut hessian = Vec::new();
    if with_hessian {
        let pairs = pair_minors_all(lam, k);
        hessian = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..m {
                let (ddk, ddl) = if i == j {
                    (0.0, 0.0)
                } else {
                    let c = &pairs[i][j];
                    (
                        if k >= 2 { c[k - 2] } else { 0.0 },
                        if l >= 2 { c[l - 2] } else { 0.0 },
                    )
                };
                hessian[i][j] = ddk / sl
                    - (dk[i] * dl[j] + dk[j] * dl[i]) / (sl * sl)
                    - sk * ddl / (sl * sl)
                    + 2.0 * sk * dl[i] * dl[j] / (sl * sl * sl);
            }
        }
    }
    Ok(QuotientDerivatives {
        value: sk / sl,
        gradient,
        hessian,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_sigma(k: usize, lam: &[f64]) -> f64 {
        let m = lam.len();
        let mut total = 0.0;
        for mask in 0u32..(1 << m) {
            if mask.count_ones() as usize == k {
                total += (0..m)
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| lam[i])
                    .product::<f64>();
            }
        }
        total
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma(2, &[1.0, 2.0, 3.0]).unwrap(), 11.0);
        assert_eq!(sigma(0, &[5.0, -1.0]).unwrap(), 1.0);
        assert_eq!(sigma(3, &[1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert!(matches!(
            sigma(4, &[1.0, 2.0, 3.0]),
            Err(SymfunError::OrderOutOfRange { k: 4, m: 3 })
        ));
    }

    #[test]
    fn sigma_matches_subset_enumeration() {
        let lam = [0.7, -1.3, 2.2, 0.1, -0.4, 1.9, 3.1, -2.5];
        for k in 0..=lam.len() {
            let a = sigma(k, &lam).unwrap();
            let b = brute_sigma(k, &lam);
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "k={k}: {a} vs {b}");
        }
    }

    #[test]
    fn minor_examples() {
        let lam = [1.0, 2.0, 3.0];
        assert_eq!(sigma_minor(1, &lam, &[0]).unwrap(), 5.0);
        assert_eq!(sigma_minor(1, &lam, &[0, 1]).unwrap(), 3.0);
        assert_eq!(sigma_minor(0, &lam, &[2, 1]).unwrap(), 1.0);
        assert_eq!(
            sigma_minor(1, &lam, &[1, 1]),
            Err(SymfunError::DuplicateIndex(1))
        );
        assert_eq!(
            sigma_minor(1, &lam, &[3]),
            Err(SymfunError::IndexOutOfRange { index: 3, m: 3 })
        );
    }

    #[test]
    fn quotient_root_examples() {
        let r = quotient_root(2, 0, &[1.0, 1.0, 1.0]).unwrap();
        assert!((r - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(quotient_root(1, 0, &[2.0, 3.0]).unwrap(), 5.0);
        let r = quotient_root(2, 1, &[1.0, 2.0, 3.0]).unwrap();
        assert!((r - 11.0 / 6.0).abs() < 1e-15);
        assert_eq!(
            quotient_root(3, 1, &[1.0, 1.0, -0.1]),
            Err(SymfunError::ConeViolation { failing: 3 })
        );
    }

    #[test]
    fn cone_examples() {
        assert!(in_gamma_cone(2, &[1.0, 1.0, -0.1]).inside);
        let c = in_gamma_cone(3, &[1.0, 1.0, -0.1]);
        assert_eq!(c.first_failure, Some(3));
        let c = in_gamma_cone(1, &[0.0, 0.0]);
        assert_eq!(c, ConeCheck { inside: false, first_failure: Some(1) });
    }

    #[test]
    fn gradient_examples() {
        assert_eq!(sigma_gradient(2, &[1.0, 2.0, 3.0]).unwrap(), vec![5.0, 4.0, 3.0]);
        assert_eq!(sigma_gradient(1, &[4.0, -2.0]).unwrap(), vec![1.0, 1.0]);
        let g = sigma_gradient(3, &[2.0, 0.0, 5.0]).unwrap();
        assert_eq!(g[1], 10.0);
    }

    #[test]
    fn quotient_hessian_matches_finite_differences() {
        let lam = [1.2, 0.8, 1.1, 0.5, 0.9];
        let (k, l) = (3, 1);
        let d = quotient_derivatives(k, l, &lam, true).unwrap();
        let h = 1e-5;
        for i in 0..lam.len() {
            let mut up = lam;
            up[i] += h;
            let mut dn = lam;
            dn[i] -= h;
            let gu = quotient_derivatives(k, l, &up, false).unwrap().gradient;
            let gd = quotient_derivatives(k, l, &dn, false).unwrap().gradient;
            for j in 0..lam.len() {
                let fd = (gu[j] - gd[j]) / (2.0 * h);
                assert!((fd - d.hessian[i][j]).abs() < 1e-7 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(12, 6), 924.0);
        assert_eq!(binomial(3, 0), 1.0);
        assert_eq!(binomial(2, 3), 0.0);
    }
}
