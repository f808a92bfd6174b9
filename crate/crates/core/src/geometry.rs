//! Radial graphs `X = ρ(x) x` over a structured grid on `S^n`.
//!
//! The grid uses hyperspherical coordinates `x_0, …, x_{n-1}`: the first
//! `n - 1` angles live in `(0, π)` on a cell-centred lattice, the last one is
//! periodic. Finite-difference stencils that leave the chart are wrapped
//! back through the poles, so every stencil is a plain centred difference
//! of the smooth function `u ∘ y` where `y` is the (globally smooth)
//! parametrisation of the sphere. No node sits on a pole.
//!
//! Tensors are expressed in the orthonormal frame `e_a = h_a^{-1} ∂_a` of the
//! round metric with `h_a = Π_{c<a} sin x_c`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exterior::{eigen_sorted, SymMatrix};

/// Offsets used by the axial stencils (the centre is handled implicitly).
pub const AXIAL_OFFSETS: [isize; 4] = [-2, -1, 1, 2];
/// Fourth-order first-derivative weights for [`AXIAL_OFFSETS`], over `12 d`.
pub const FIRST_WEIGHTS: [f64; 4] = [1.0, -8.0, 8.0, -1.0];
/// Fourth-order second-derivative weights for [`AXIAL_OFFSETS`], over `12 d²`.
/// The centre weight `-30` is implied because stencils act on differences.
pub const SECOND_WEIGHTS: [f64; 4] = [-1.0, 16.0, 16.0, -1.0];

const MAX_NODES: usize = 4_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("grid dimension must be at least 1, got {0}")]
    BadDimension(usize),
    #[error("resolution must be even and at least 4, got {0}")]
    BadResolution(usize),
    #[error("grid with {0} nodes exceeds the supported size")]
    TooLarge(usize),
    #[error("field has {got} values, grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("field value at node {0} is not finite")]
    NonFinite(usize),
}

/// Surface area of the unit `S^n`.
pub fn sphere_area(n: usize) -> f64 {
    match n {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (n as f64 - 1.0) * sphere_area(n - 2),
    }
}

/// `∫_a^b sin^m(x) dx`.
fn sin_power_integral(m: usize, a: f64, b: f64) -> f64 {
    match m {
        0 => b - a,
        1 => a.cos() - b.cos(),
        _ => {
            let mf = m as f64;
            let boundary = |x: f64| -x.sin().powi(m as i32 - 1) * x.cos() / mf;
            boundary(b) - boundary(a) + (mf - 1.0) / mf * sin_power_integral(m - 2, a, b)
        }
    }
}

/// Structured latitude–longitude grid on `S^n` with `res` points per angle.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    n: usize,
    res: usize,
    nodes: usize,
    spacing: Vec<f64>,
    coords: Vec<f64>,
    scale: Vec<f64>,
    cot: Vec<f64>,
    weights: Vec<f64>,
    pole: Vec<bool>,
    neighbors: Vec<u32>,
    stride: usize,
}

impl SphereGrid {
    pub fn new(n: usize, res: usize) -> Result<Self, GeometryError> {
        if n == 0 {
            return Err(GeometryError::BadDimension(n));
        }
        if res < 4 || res % 2 != 0 {
            return Err(GeometryError::BadResolution(res));
        }
        let nodes = res
            .checked_pow(n as u32)
            .filter(|&m| m <= MAX_NODES)
            .ok_or(GeometryError::TooLarge(usize::MAX))?;
        let mut spacing = vec![PI / res as f64; n];
        spacing[n - 1] = 2.0 * PI / res as f64;

        let pairs = n * (n - 1) / 2;
        let stride = 4 * n + 16 * pairs;
        let mut grid = Self {
            n,
            res,
            nodes,
            spacing,
            coords: Vec::with_capacity(nodes * n),
            scale: Vec::with_capacity(nodes * n),
            cot: Vec::with_capacity(nodes * n),
            weights: Vec::with_capacity(nodes),
            pole: Vec::with_capacity(nodes),
            neighbors: Vec::with_capacity(nodes * stride),
            stride,
        };

        let mut idx = vec![0usize; n];
        for node in 0..nodes {
            grid.unravel_into(node, &mut idx);
            let x: Vec<f64> = (0..n).map(|c| grid.coordinate(c, idx[c])).collect();
            let mut h = 1.0;
            let mut w = 1.0;
            for c in 0..n {
                grid.scale.push(h);
                if c + 1 < n {
                    grid.cot.push(x[c].cos() / x[c].sin());
                    h *= x[c].sin();
                    let lo = idx[c] as f64 * grid.spacing[c];
                    w *= sin_power_integral(n - 1 - c, lo, lo + grid.spacing[c]);
                } else {
                    grid.cot.push(0.0);
                    w *= grid.spacing[c];
                }
            }
            grid.coords.extend_from_slice(&x);
            grid.weights.push(w);
            grid.pole
                .push((0..n.saturating_sub(1)).any(|c| idx[c] == 0 || idx[c] == res - 1));

            let mut probe = vec![0isize; n];
            for a in 0..n {
                for &o in &AXIAL_OFFSETS {
                    probe.iter_mut().zip(&idx).for_each(|(p, &i)| *p = i as isize);
                    probe[a] += o;
                    let nb = grid.resolve(&mut probe);
                    grid.neighbors.push(nb as u32);
                }
            }
            for a in 0..n {
                for b in a + 1..n {
                    for &oa in &AXIAL_OFFSETS {
                        for &ob in &AXIAL_OFFSETS {
                            probe.iter_mut().zip(&idx).for_each(|(p, &i)| *p = i as isize);
                            probe[a] += oa;
                            probe[b] += ob;
                            let nb = grid.resolve(&mut probe);
                            grid.neighbors.push(nb as u32);
                        }
                    }
                }
            }
        }
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn resolution(&self) -> usize {
        self.res
    }

    pub fn len(&self) -> usize {
        self.nodes
    }

    pub fn is_empty(&self) -> bool {
        self.nodes == 0
    }

    /// Chart spacing of coordinate `c`.
    pub fn spacing(&self, c: usize) -> f64 {
        self.spacing[c]
    }

    fn coordinate(&self, c: usize, i: usize) -> f64 {
        if c + 1 < self.n {
            (i as f64 + 0.5) * self.spacing[c]
        } else {
            i as f64 * self.spacing[c]
        }
    }

    fn unravel_into(&self, mut node: usize, idx: &mut [usize]) {
        for c in (0..self.n).rev() {
            idx[c] = node % self.res;
            node /= self.res;
        }
    }

    /// Per-angle indices of a node (last angle fastest).
    pub fn unravel(&self, node: usize) -> Vec<usize> {
        let mut idx = vec![0; self.n];
        self.unravel_into(node, &mut idx);
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.res + i)
    }

    /// Maps a possibly out-of-chart index tuple to the node representing
    /// the same point of the sphere.
    pub fn resolve(&self, idx: &mut [isize]) -> usize {
        let r = self.res as isize;
        for c in 0..self.n {
            if c + 1 == self.n {
                idx[c] = idx[c].rem_euclid(r);
                continue;
            }
            let crossed = if idx[c] < 0 {
                idx[c] = -1 - idx[c];
                true
            } else if idx[c] >= r {
                idx[c] = 2 * r - 1 - idx[c];
                true
            } else {
                false
            };
            if crossed {
                for d in c + 1..self.n {
                    if d + 1 == self.n {
                        idx[d] += r / 2;
                    } else {
                        idx[d] = r - 1 - idx[d];
                    }
                }
            }
        }
        idx.iter().fold(0usize, |acc, &i| acc * self.res + i as usize)
    }

    pub fn coords(&self, node: usize) -> &[f64] {
        &self.coords[node * self.n..(node + 1) * self.n]
    }

    /// Scale factors `h_a` of the round metric at a node.
    pub fn scale(&self, node: usize) -> &[f64] {
        &self.scale[node * self.n..(node + 1) * self.n]
    }

    /// `cot x_c` at a node (zero for the periodic angle).
    pub fn cot(&self, node: usize) -> &[f64] {
        &self.cot[node * self.n..(node + 1) * self.n]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_pole_row(&self, node: usize) -> bool {
        self.pole[node]
    }

    /// `Σ w_i v_i`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Unit vector `y(x) ∈ S^n ⊂ R^{n+1}` of a node.
    pub fn position(&self, node: usize) -> Vec<f64> {
        embedding(self.coords(node))
    }

    /// Node values of every monomial `y^α`, `|α| <= degree`, in the ambient
    /// coordinates (linearly dependent on the sphere once `degree >= 2`).
    pub fn polynomial_basis(&self, degree: usize) -> Vec<Vec<f64>> {
        let dim = self.n + 1;
        let mut exps: Vec<Vec<usize>> = vec![vec![0; dim]];
        let mut last = exps.clone();
        for _ in 0..degree {
            let mut next = Vec::new();
            for e in &last {
                let start = e.iter().rposition(|&p| p > 0).unwrap_or(0);
                for c in start..dim {
                    let mut f = e.clone();
                    f[c] += 1;
                    next.push(f);
                }
            }
            exps.extend(next.iter().cloned());
            last = next;
        }
        let pos: Vec<Vec<f64>> = (0..self.len()).map(|i| self.position(i)).collect();
        exps.iter()
            .map(|e| {
                pos.iter()
                    .map(|y| y.iter().zip(e).map(|(v, &p)| v.powi(p as i32)).product())
                    .collect()
            })
            .collect()
    }

    /// Orthonormal tangent frame `e_a = h_a^{-1} ∂y/∂x_a` as rows.
    pub fn frame(&self, node: usize) -> Vec<Vec<f64>> {
        tangent_frame(self.coords(node))
    }

    fn axial(&self, node: usize, a: usize) -> &[u32] {
        let s = node * self.stride + 4 * a;
        &self.neighbors[s..s + 4]
    }

    fn pair_offset(&self, a: usize, b: usize) -> usize {
        // pairs (a, b), a < b, enumerated row by row
        let before: usize = (0..a).map(|r| self.n - 1 - r).sum();
        4 * self.n + 16 * (before + (b - a - 1))
    }

    fn mixed(&self, node: usize, a: usize, b: usize) -> &[u32] {
        let s = node * self.stride + self.pair_offset(a, b);
        &self.neighbors[s..s + 16]
    }

    /// Chart partials `∂_a U` and `∂_a∂_b U` of a nodal field.
    pub fn chart_partials(&self, u: &[f64], node: usize) -> (Vec<f64>, SymMatrix) {
        let n = self.n;
        let u0 = u[node];
        let mut first = vec![0.0; n];
        let mut second = SymMatrix::zeros(n);
        for a in 0..n {
            let d = self.spacing[a];
            let nb = self.axial(node, a);
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for t in 0..4 {
                let du = u[nb[t] as usize] - u0;
                s1 += FIRST_WEIGHTS[t] * du;
                s2 += SECOND_WEIGHTS[t] * du;
            }
            first[a] = s1 / (12.0 * d);
            second.set(a, a, s2 / (12.0 * d * d));
            for b in a + 1..n {
                let nb = self.mixed(node, a, b);
                let mut s = 0.0;
                for ta in 0..4 {
                    for tb in 0..4 {
                        s += FIRST_WEIGHTS[ta] * FIRST_WEIGHTS[tb] * (u[nb[4 * ta + tb] as usize] - u0);
                    }
                }
                second.set(a, b, s / (144.0 * d * self.spacing[b]));
            }
        }
        (first, second)
    }

    /// Orthonormal-frame gradient and covariant Hessian of a nodal field.
    pub fn frame_derivatives(&self, u: &[f64], node: usize) -> (Vec<f64>, SymMatrix) {
        let (first, second) = self.chart_partials(u, node);
        self.chart_to_frame(node, &first, &second)
    }

    /// Converts chart partials to frame components, adding the Christoffel
    /// terms of the round metric.
    pub fn chart_to_frame(&self, node: usize, first: &[f64], second: &SymMatrix) -> (Vec<f64>, SymMatrix) {
        let n = self.n;
        let h = self.scale(node);
        let cot = self.cot(node);
        let grad: Vec<f64> = (0..n).map(|a| first[a] / h[a]).collect();
        let mut hess = SymMatrix::zeros(n);
        for a in 0..n {
            let mut haa = second.get(a, a);
            for c in 0..a {
                haa += (h[a] * h[a]) / (h[c] * h[c]) * cot[c] * first[c];
            }
            hess.set(a, a, haa / (h[a] * h[a]));
            for b in 0..a {
                let hab = second.get(a, b) - cot[b] * first[a];
                hess.set(a, b, hab / (h[a] * h[b]));
            }
        }
        (grad, hess)
    }

    /// Pulls frame coefficients of a linear differential expression
    /// `Σ M_ab D_aD_b δ + Σ c_a D_a δ` back to chart partials: returns the
    /// weights of `∂_c δ` and of `∂_a∂_b δ` (off-diagonal pairs counted once,
    /// stored at `(a, b)`).
    pub fn frame_to_chart_coefficients(
        &self,
        node: usize,
        m: &SymMatrix,
        c: &[f64],
    ) -> (Vec<f64>, SymMatrix) {
        let n = self.n;
        let h = self.scale(node);
        let cot = self.cot(node);
        let mut first = vec![0.0; n];
        let mut second = SymMatrix::zeros(n);
        for a in 0..n {
            second.set(a, a, m.get(a, a) / (h[a] * h[a]));
            for b in 0..a {
                second.set(a, b, 2.0 * m.get(a, b) / (h[a] * h[b]));
            }
        }
        for t in 0..n {
            let mut w = c[t] / h[t];
            for a in t + 1..n {
                w += cot[t] / (h[t] * h[t]) * m.get(a, a);
            }
            for b in 0..t {
                w -= 2.0 * m.get(t, b) * cot[b] / (h[t] * h[b]);
            }
            first[t] = w;
        }
        (first, second)
    }

    /// Visits the stencil taps (excluding the centre) of the expression
    /// `Σ first_c ∂_c + Σ second_ab ∂_a∂_b`. Each tap contributes `w·(δ_col - δ_node)`.
    pub fn for_each_tap(&self, node: usize, first: &[f64], second: &SymMatrix, mut visit: impl FnMut(usize, f64)) {
        let n = self.n;
        for a in 0..n {
            let d = self.spacing[a];
            let nb = self.axial(node, a);
            let w1 = first[a] / (12.0 * d);
            let w2 = second.get(a, a) / (12.0 * d * d);
            for t in 0..4 {
                visit(nb[t] as usize, w1 * FIRST_WEIGHTS[t] + w2 * SECOND_WEIGHTS[t]);
            }
            for b in a + 1..n {
                let wab = second.get(a, b) / (144.0 * d * self.spacing[b]);
                if wab == 0.0 {
                    continue;
                }
                let nb = self.mixed(node, a, b);
                for ta in 0..4 {
                    for tb in 0..4 {
                        visit(nb[4 * ta + tb] as usize, wab * FIRST_WEIGHTS[ta] * FIRST_WEIGHTS[tb]);
                    }
                }
            }
        }
    }

    /// Number of stencil taps per node (with repetitions).
    pub fn taps_per_node(&self) -> usize {
        self.stride
    }
}

/// `y_m = (Π_{c<m} sin x_c) cos x_m` for `m < n`, `y_n = Π sin x_c`.
pub fn embedding(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut y = Vec::with_capacity(n + 1);
    let mut prod = 1.0;
    for &xc in x {
        y.push(prod * xc.cos());
        prod *= xc.sin();
    }
    y.push(prod);
    y
}

/// Orthonormal tangent vectors of `S^n` at `y(x)`, one per angle.
pub fn tangent_frame(x: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    (0..n)
        .map(|a| {
            // ∂y/∂x_a / h_a: the factor Π_{c<a} sin x_c cancels
            let mut e = vec![0.0; n + 1];
            e[a] = -x[a].sin();
            let mut prod = x[a].cos();
            for m in a + 1..=n {
                e[m] = if m < n { prod * x[m].cos() } else { prod };
                if m < n {
                    prod *= x[m].sin();
                }
            }
            e
        })
        .collect()
}

/// A nodal field `u = -log ρ` on a grid.
#[derive(Debug, Clone)]
pub struct RadialField {
    grid: Arc<SphereGrid>,
    values: Vec<f64>,
}

impl RadialField {
    pub fn new(grid: Arc<SphereGrid>, values: Vec<f64>) -> Result<Self, GeometryError> {
        if values.len() != grid.len() {
            return Err(GeometryError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite(bad));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Arc<SphereGrid>, value: f64) -> Self {
        let values = vec![value; grid.len()];
        Self { grid, values }
    }

    /// Samples `u` from a function of the unit position vector.
    pub fn from_fn(grid: Arc<SphereGrid>, mut f: impl FnMut(&[f64]) -> f64) -> Result<Self, GeometryError> {
        let values = (0..grid.len()).map(|i| f(&grid.position(i))).collect();
        Self::new(grid, values)
    }

    /// Field of `u = -log ρ` for a radius function of the position.
    pub fn from_radius(grid: Arc<SphereGrid>, mut rho: impl FnMut(&[f64]) -> f64) -> Result<Self, GeometryError> {
        Self::from_fn(grid, |y| -rho(y).ln())
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn rho(&self) -> Vec<f64> {
        self.values.iter().map(|u| (-u).exp()).collect()
    }

    pub fn min_rho(&self) -> f64 {
        (-self.max_u()).exp()
    }

    pub fn max_rho(&self) -> f64 {
        (-self.min_u()).exp()
    }

    pub fn max_u(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_u(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `u + c` (a dilation of the hypersurface by `e^{-c}`).
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|u| u + c).collect(),
        }
    }

    pub fn frame_derivatives(&self, node: usize) -> (Vec<f64>, SymMatrix) {
        self.grid.frame_derivatives(&self.values, node)
    }

    pub fn point(&self, node: usize) -> GeometryPoint {
        let (grad, hess) = self.frame_derivatives(node);
        GeometryPoint::new(self.values[node], grad, hess)
    }

    pub fn embed(&self, node: usize) -> EmbeddedPoint {
        let (grad, hess) = self.frame_derivatives(node);
        embed_point(&self.grid.position(node), &self.grid.frame(node), self.values[node], &grad, &hess)
    }
}

/// Geometry of the radial graph at one node.
#[derive(Debug, Clone)]
pub struct GeometryPoint {
    pub u: f64,
    pub rho: f64,
    pub grad_u: Vec<f64>,
    pub hess_u: SymMatrix,
    pub v: f64,
    /// Scale-invariant shape matrix `a = ḡ (I + ∇u⊗∇u + ∇²u) ḡ`.
    pub a: SymMatrix,
    /// Eigenvalues of `a`, ascending.
    pub kappa_a: Vec<f64>,
    /// Matching orthonormal eigenvectors (columns).
    pub basis: DMatrix<f64>,
    pub support: f64,
}

impl GeometryPoint {
    pub fn new(u: f64, grad_u: Vec<f64>, hess_u: SymMatrix) -> Self {
        let rho = (-u).exp();
        let v = (1.0 + dot(&grad_u, &grad_u)).sqrt();
        let a = shape_matrix(&grad_u, &hess_u);
        let (kappa_a, basis) = eigen_sorted(&a);
        Self {
            basis,
            u,
            rho,
            support: rho / v,
            grad_u,
            hess_u,
            v,
            a,
            kappa_a,
        }
    }

    /// Principal curvatures `e^u v^{-1} κ(a)`.
    pub fn principal_curvatures(&self) -> Vec<f64> {
        let s = 1.0 / (self.rho * self.v);
        self.kappa_a.iter().map(|k| k * s).collect()
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `ḡ^{ij} = δ_ij - u_i u_j / (v(1+v))`.
pub fn inverse_sqrt_metric(grad_u: &[f64]) -> SymMatrix {
    let v = (1.0 + dot(grad_u, grad_u)).sqrt();
    let c = 1.0 / (v * (1.0 + v));
    SymMatrix::from_fn(grad_u.len(), |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - c * grad_u[i] * grad_u[j]
    })
}

/// `a = ḡ h̄ ḡ` with `h̄ = I + ∇u⊗∇u + ∇²u`.
pub fn shape_matrix(grad_u: &[f64], hess_u: &SymMatrix) -> SymMatrix {
    let n = grad_u.len();
    let g = inverse_sqrt_metric(grad_u).to_dmatrix();
    let hbar = DMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta + grad_u[i] * grad_u[j] + hess_u.get(i, j)
    });
    SymMatrix::from_dmatrix(&(&g * hbar * &g))
}

/// `⟨X,ν⟩ = ρ² (ρ² + |∇ρ|²)^{-1/2}`.
pub fn support_function(rho: f64, grad_rho: &[f64]) -> f64 {
    rho * rho / (rho * rho + dot(grad_rho, grad_rho)).sqrt()
}

/// Frame components of the metric and second fundamental form of a radial
/// graph from `ρ` and its frame derivatives.
pub fn fundamental_forms(rho: f64, grad_rho: &[f64], hess_rho: &SymMatrix) -> (SymMatrix, SymMatrix) {
    let n = grad_rho.len();
    let w = (rho * rho + dot(grad_rho, grad_rho)).sqrt();
    let g = SymMatrix::from_fn(n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        rho * rho * delta + grad_rho[i] * grad_rho[j]
    });
    let h = SymMatrix::from_fn(n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        (rho * rho * delta + 2.0 * grad_rho[i] * grad_rho[j] - rho * hess_rho.get(i, j)) / w
    });
    (g, h)
}

/// Eigenvalues of `h` relative to `g` (the principal curvatures), ascending.
pub fn relative_eigenvalues(g: &SymMatrix, h: &SymMatrix) -> Vec<f64> {
    let chol = nalgebra::Cholesky::new(g.to_dmatrix()).expect("metric must be positive definite");
    let l_inv = chol.l().try_inverse().expect("invertible Cholesky factor");
    let s = &l_inv * h.to_dmatrix() * l_inv.transpose();
    eigen_sorted(&SymMatrix::from_dmatrix(&s)).0
}

/// Embedded data of the hypersurface at one node.
#[derive(Debug, Clone)]
pub struct EmbeddedPoint {
    pub x: Vec<f64>,
    pub normal: Vec<f64>,
    pub metric: SymMatrix,
    pub second_form: SymMatrix,
    pub support: f64,
    pub principal_curvatures: Vec<f64>,
}

/// Builds position, normal and fundamental forms from `u` and its frame
/// derivatives, going through `ρ = e^{-u}`.
pub fn embed_point(y: &[f64], frame: &[Vec<f64>], u: f64, grad_u: &[f64], hess_u: &SymMatrix) -> EmbeddedPoint {
    let n = grad_u.len();
    let rho = (-u).exp();
    let grad_rho: Vec<f64> = grad_u.iter().map(|g| -rho * g).collect();
    let hess_rho = SymMatrix::from_fn(n, |i, j| rho * (grad_u[i] * grad_u[j] - hess_u.get(i, j)));
    let (metric, second_form) = fundamental_forms(rho, &grad_rho, &hess_rho);
    let w = (rho * rho + dot(&grad_rho, &grad_rho)).sqrt();
    let x: Vec<f64> = y.iter().map(|c| rho * c).collect();
    let normal: Vec<f64> = (0..y.len())
        .map(|m| {
            let tangential: f64 = (0..n).map(|a| grad_rho[a] * frame[a][m]).sum();
            (rho * y[m] - tangential) / w
        })
        .collect();
    let support = dot(&x, &normal);
    let principal_curvatures = relative_eigenvalues(&metric, &second_form);
    EmbeddedPoint {
        x,
        normal,
        metric,
        second_form,
        support,
        principal_curvatures,
    }
}

/// Largest Codazzi defect `|∇_c h_ab - ∇_b h_ac|`, relative to `max |h|`,
/// over nodes whose stencils stay inside the chart. Chart components are
/// differentiated with the same fourth-order stencils as `u`.
pub fn codazzi_residual(field: &RadialField) -> f64 {
    let grid = field.grid();
    let n = grid.dim();
    if n < 2 {
        return 0.0;
    }
    let len = grid.len();
    // chart components G_ab = h_a h_b g_ab, H_ab likewise
    let mut gc = vec![vec![0.0; len]; n * n];
    let mut hc = vec![vec![0.0; len]; n * n];
    let mut hmax: f64 = 0.0;
    for node in 0..len {
        let e = field.embed(node);
        let s = grid.scale(node);
        for a in 0..n {
            for b in 0..n {
                gc[a * n + b][node] = s[a] * s[b] * e.metric.get(a, b);
                hc[a * n + b][node] = s[a] * s[b] * e.second_form.get(a, b);
                hmax = hmax.max(e.second_form.get(a, b).abs());
            }
        }
    }
    let res = grid.resolution() as isize;
    let mut worst: f64 = 0.0;
    for node in 0..len {
        let idx = grid.unravel(node);
        let interior = (0..n - 1).all(|c| idx[c] >= 2 && (idx[c] as isize) < res - 2);
        if !interior {
            continue;
        }
        let dg: Vec<Vec<f64>> = gc.iter().map(|comp| grid.chart_partials(comp, node).0).collect();
        let dh: Vec<Vec<f64>> = hc.iter().map(|comp| grid.chart_partials(comp, node).0).collect();
        let gmat = DMatrix::from_fn(n, n, |a, b| gc[a * n + b][node]);
        let ginv = match gmat.try_inverse() {
            Some(m) => m,
            None => continue,
        };
        // Γ^d_ab = ½ G^{de}(∂_a G_eb + ∂_b G_ea - ∂_e G_ab)
        let gamma = |d: usize, a: usize, b: usize| -> f64 {
            (0..n)
                .map(|e| 0.5 * ginv[(d, e)] * (dg[e * n + b][a] + dg[e * n + a][b] - dg[a * n + b][e]))
                .sum()
        };
        let scale = grid.scale(node);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if b == c {
                        continue;
                    }
                    let mut defect = dh[a * n + b][c] - dh[a * n + c][b];
                    for d in 0..n {
                        defect -= gamma(d, c, a) * hc[d * n + b][node];
                        defect += gamma(d, b, a) * hc[d * n + c][node];
                    }
                    worst = worst.max((defect / (scale[a] * scale[b] * scale[c])).abs());
                }
            }
        }
    }
    if hmax > 0.0 {
        worst / hmax
    } else {
        worst
    }
}

/// Grid and field metadata for export.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GridMeta {
    pub n: usize,
    pub resolution: usize,
    pub nodes: usize,
}

impl From<&SphereGrid> for GridMeta {
    fn from(grid: &SphereGrid) -> Self {
        Self {
            n: grid.dim(),
            resolution: grid.resolution(),
            nodes: grid.len(),
        }
    }
}
