//! The curvature equation in the gauge `u = -log ρ`:
//!
//! `F(Λ(a)) = γ f(x) e^{αu} v^β`, `α = -b-q-k+l+ε`, `β = k-l-q`,
//! `v = √(1+|∇u|²)`,
//!
//! where `a` is the scale-invariant shape matrix of [`crate::geometry`] and
//! `γ` is an optional constant (1 unless solving the homogeneous problem).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exterior::{evaluate_point, evaluate_spectral, ExteriorError, MultiIndexTable, SymMatrix};
use crate::geometry::{inverse_sqrt_metric, GeometryError, GeometryPoint, RadialField, SphereGrid};
use crate::linear::CsrMatrix;
use crate::symfun::{self, binomial};

/// Exponents with `|α| <= REGIME_TOL` count as homogeneous.
pub const REGIME_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PdeError {
    #[error("invalid problem: {0}")]
    InvalidSpec(String),
    #[error("right-hand side f is not positive at node {node} (value {value})")]
    NonPositiveRhs { node: usize, value: f64 },
    #[error("{count} node(s) outside the (p,k)-cone; worst node {node} fails sigma_{failing}")]
    ConeViolation { node: usize, failing: usize, count: usize },
    #[error("could not read tabulated f from {path}: {message}")]
    Table { path: PathBuf, message: String },
    #[error(transparent)]
    Exterior(#[from] ExteriorError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// The prescribed function `f` on `S^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RhsFunction {
    Constant { c: f64 },
    /// `max(c0 + c1⟨x,d⟩, floor)`.
    Linear {
        c0: f64,
        c1: f64,
        direction: Vec<f64>,
        #[serde(default = "default_floor")]
        floor: f64,
    },
    /// `max(amplitude · exp(Σ_m coeffs_m x_m), floor)`.
    Harmonic {
        coeffs: Vec<f64>,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        floor: f64,
    },
    /// A CSV file with an `f` column, one row per grid node.
    Table { path: PathBuf },
    /// Per-node values, the loaded form of `Table`.
    Tabulated { values: Vec<f64> },
}

fn default_floor() -> f64 {
    1e-3
}

fn one() -> f64 {
    1.0
}

impl RhsFunction {
    /// Value at the unit position `y`; `node` is only used by tabulated data.
    pub fn eval(&self, y: &[f64], node: usize) -> f64 {
        match self {
            Self::Constant { c } => *c,
            Self::Linear { c0, c1, direction, floor } => {
                let proj: f64 = y.iter().zip(direction).map(|(a, b)| a * b).sum();
                (c0 + c1 * proj).max(*floor)
            }
            Self::Harmonic { coeffs, amplitude, floor } => {
                let s: f64 = y.iter().zip(coeffs).map(|(a, b)| a * b).sum();
                (amplitude * s.exp()).max(*floor)
            }
            Self::Tabulated { values } => values.get(node).copied().unwrap_or(f64::NAN),
            Self::Table { .. } => f64::NAN,
        }
    }

    /// Loads `Table` data, resolving relative paths against `base`.
    pub fn resolve_table(&self, base: &Path) -> Result<Self, PdeError> {
        let Self::Table { path } = self else {
            return Ok(self.clone());
        };
        let full = if path.is_absolute() { path.clone() } else { base.join(path) };
        let err = |message: String| PdeError::Table {
            path: full.clone(),
            message,
        };
        let mut reader = csv::Reader::from_path(&full).map_err(|e| err(e.to_string()))?;
        let headers = reader.headers().map_err(|e| err(e.to_string()))?.clone();
        let col = headers
            .iter()
            .position(|h| h.trim() == "f")
            .ok_or_else(|| err("missing column `f`".into()))?;
        let mut values = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| err(e.to_string()))?;
            let v: f64 = record
                .get(col)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|e: std::num::ParseFloatError| err(e.to_string()))?;
            values.push(v);
        }
        Ok(Self::Tabulated { values })
    }

    /// `s·f` for `s > 0`.
    pub fn scaled(&self, s: f64) -> Self {
        match self {
            Self::Constant { c } => Self::Constant { c: s * c },
            Self::Linear { c0, c1, direction, floor } => Self::Linear {
                c0: s * c0,
                c1: s * c1,
                direction: direction.clone(),
                floor: s * floor,
            },
            Self::Harmonic { coeffs, amplitude, floor } => Self::Harmonic {
                coeffs: coeffs.clone(),
                amplitude: s * amplitude,
                floor: s * floor,
            },
            Self::Tabulated { values } => Self::Tabulated {
                values: values.iter().map(|v| s * v).collect(),
            },
            Self::Table { .. } => self.clone(),
        }
    }
}

/// Sign of the exponent `-b-q-k+l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Nonhomogeneous,
    Homogeneous,
}

/// An instance of the prescribed curvature equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub l: usize,
    pub b: f64,
    pub q: f64,
    pub f: RhsFunction,
    /// Regularisation exponent; replaces `b` by `b - ε`.
    #[serde(default)]
    pub epsilon: f64,
}

impl ProblemSpec {
    /// `N = C(n, p)`.
    pub fn big_n(&self) -> usize {
        binomial(self.n, self.p).round() as usize
    }

    /// `-b-q-k+l` without regularisation.
    pub fn base_exponent(&self) -> f64 {
        -self.b - self.q - self.k as f64 + self.l as f64
    }

    /// `α = -b-q-k+l+ε`, the exponent of `e^u` on the right-hand side.
    pub fn alpha(&self) -> f64 {
        self.base_exponent() + self.epsilon
    }

    /// `β = k-l-q`, twice the exponent of `1+|∇u|²`.
    pub fn beta(&self) -> f64 {
        (self.k - self.l) as f64 - self.q
    }

    pub fn regime(&self) -> Regime {
        if self.base_exponent().abs() <= REGIME_TOL {
            Regime::Homogeneous
        } else {
            Regime::Nonhomogeneous
        }
    }

    /// `F(Λ(I)) = C_N^k p^{k-l} / C_N^l`, the value of the operator on the unit sphere.
    pub fn sphere_value(&self) -> f64 {
        let big_n = self.big_n();
        binomial(big_n, self.k) / binomial(big_n, self.l) * (self.p as f64).powi((self.k - self.l) as i32)
    }

    pub fn validate(&self) -> Result<(), PdeError> {
        let bad = |m: String| Err(PdeError::InvalidSpec(m));
        if self.n == 0 || self.p == 0 || self.p > self.n || self.n > crate::exterior::MAX_DIMENSION {
            return bad(format!("need 1 <= p <= n <= 12, got n = {}, p = {}", self.n, self.p));
        }
        let big_n = self.big_n();
        if self.l >= self.k || self.k > big_n {
            return bad(format!(
                "need 0 <= l < k <= N = C(n,p) = {big_n}, got k = {}, l = {}",
                self.k, self.l
            ));
        }
        if !self.b.is_finite() || !self.q.is_finite() || !self.epsilon.is_finite() {
            return bad("b, q and epsilon must be finite".into());
        }
        if self.epsilon < 0.0 {
            return bad(format!("epsilon must be >= 0, got {}", self.epsilon));
        }
        if self.base_exponent() < -REGIME_TOL {
            return bad(format!(
                "exponent -b-q-k+l = {} is negative; only the nonhomogeneous (> 0) and homogeneous (= 0) cases are supported",
                self.base_exponent()
            ));
        }
        match &self.f {
            RhsFunction::Constant { c } if !(*c > 0.0) => bad(format!("constant f must be positive, got {c}")),
            RhsFunction::Linear { floor, direction, .. } => {
                if !(*floor > 0.0) {
                    return bad("linear f needs a positive floor".into());
                }
                if direction.len() != self.n + 1 {
                    return bad(format!("direction must have n+1 = {} entries", self.n + 1));
                }
                Ok(())
            }
            RhsFunction::Harmonic { coeffs, amplitude, .. } => {
                if coeffs.len() != self.n + 1 {
                    return bad(format!("harmonic coeffs must have n+1 = {} entries", self.n + 1));
                }
                if !(*amplitude > 0.0) {
                    return bad("harmonic amplitude must be positive".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Non-fatal notes about hypotheses of the existence theory.
    pub fn hypothesis_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let m = binomial(self.n - 1, self.p - 1).round() as usize;
        if self.l == 0 {
            if self.q > 1.0 {
                out.push(format!("q = {} > 1: outside the range covered for sigma_k equations", self.q));
            }
        } else if !(self.k > 2 && self.k <= m + 1 && self.l < m.min(self.k)) {
            out.push(format!(
                "(k, l) = ({}, {}) outside the window 2 < k <= C(n-1,p-1)+1 = {}, l < min(C(n-1,p-1), k); estimates are not guaranteed",
                self.k,
                self.l,
                m + 1
            ));
        }
        if self.regime() == Regime::Homogeneous && self.q < 0.0 {
            out.push("homogeneous case with q < 0 is not covered".into());
        }
        out
    }

    /// Named problems used by the CLI, the tests and the benchmarks.
    pub fn catalog(name: &str) -> Option<Self> {
        let harmonic = |n: usize, c: f64| RhsFunction::Harmonic {
            coeffs: {
                let mut v = vec![0.0; n + 1];
                v[0] = c;
                v
            },
            amplitude: 1.0,
            floor: 0.0,
        };
        let spec = match name {
            "sphere_const" => Self {
                n: 3,
                p: 2,
                k: 2,
                l: 0,
                b: -3.0,
                q: 0.0,
                f: RhsFunction::Constant { c: 1.0 },
                epsilon: 0.0,
            },
            "sphere_harmonic" => Self {
                f: harmonic(3, 0.2),
                ..Self::catalog("sphere_const")?
            },
            "surface_harmonic" => Self {
                n: 2,
                p: 1,
                k: 2,
                l: 0,
                b: -3.0,
                q: 0.0,
                f: harmonic(2, 0.2),
                epsilon: 0.0,
            },
            "surface_linear" => Self {
                n: 2,
                p: 2,
                k: 1,
                l: 0,
                b: -2.0,
                q: 0.0,
                f: RhsFunction::Linear {
                    c0: 1.0,
                    c1: 0.2,
                    direction: vec![0.0, 0.0, 1.0],
                    floor: 1e-3,
                },
                epsilon: 0.0,
            },
            "surface_support" => Self {
                n: 2,
                p: 1,
                k: 2,
                l: 1,
                b: -2.5,
                q: 0.5,
                f: harmonic(2, 0.15),
                epsilon: 0.0,
            },
            "homogeneous_const" => Self {
                n: 3,
                p: 2,
                k: 2,
                l: 0,
                b: -2.0,
                q: 0.0,
                f: RhsFunction::Constant { c: 1.0 },
                epsilon: 0.0,
            },
            "homogeneous_harmonic" => Self {
                n: 2,
                p: 2,
                k: 1,
                l: 0,
                b: -1.0,
                q: 0.0,
                f: harmonic(2, 0.1),
                epsilon: 0.0,
            },
            _ => return None,
        };
        Some(spec)
    }

    pub fn catalog_names() -> &'static [&'static str] {
        &[
            "sphere_const",
            "sphere_harmonic",
            "surface_harmonic",
            "surface_linear",
            "surface_support",
            "homogeneous_const",
            "homogeneous_harmonic",
        ]
    }
}

/// How the Jacobian treats the gradient dependence of `a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Jacobian {
    /// Full Fréchet derivative.
    Exact,
    /// Drops `∂a/∂∇u`; keeps the principal part and the right-hand side terms.
    Frozen,
}

/// Per-node residual data.
#[derive(Debug, Clone)]
pub struct Residual {
    pub r: Vec<f64>,
    /// `F(Λ(a))` per node.
    pub f_vals: Vec<f64>,
    pub rhs: Vec<f64>,
    pub cone_ok: Vec<bool>,
    /// `min_{j<=k} σ_j(Λ)` per node.
    pub cone_margin: Vec<f64>,
    /// First failing `σ_j` per node (0 when inside).
    pub failing: Vec<usize>,
    /// `∂F/∂a` per node, kept for the linearisation.
    pub gradients: Vec<SymMatrix>,
    /// Geometry per node, kept for the linearisation.
    pub points: Vec<GeometryPoint>,
}

impl Residual {
    pub fn sup_norm(&self) -> f64 {
        self.r.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn admissible(&self) -> bool {
        self.cone_ok.iter().all(|&c| c)
    }

    pub fn min_cone_margin(&self) -> f64 {
        self.cone_margin.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// The structured error for an inadmissible field, if any.
    pub fn cone_error(&self) -> Option<PdeError> {
        let count = self.cone_ok.iter().filter(|c| !**c).count();
        if count == 0 {
            return None;
        }
        let node = (0..self.cone_ok.len())
            .filter(|&i| !self.cone_ok[i])
            .min_by(|&a, &b| self.cone_margin[a].total_cmp(&self.cone_margin[b]))
            .unwrap_or(0);
        Some(PdeError::ConeViolation {
            node,
            failing: self.failing[node],
            count,
        })
    }
}

/// Coefficients of the linearised operator at one node, in the orthonormal
/// frame: `Lδ = Σ m_ab D_aD_b δ + Σ c_a D_a δ + c0 δ`.
#[derive(Debug, Clone)]
pub struct NodeCoefficients {
    pub m: SymMatrix,
    pub c: Vec<f64>,
    pub c0: f64,
}

/// The linearised operator: frame coefficients and the assembled matrix.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub coefficients: Vec<NodeCoefficients>,
    pub matrix: CsrMatrix,
    grid: Arc<SphereGrid>,
}

impl Linearization {
    /// `Lδ` evaluated from the frame derivatives of `δ`, without the matrix.
    pub fn apply_matrix_free(&self, delta: &[f64]) -> Vec<f64> {
        (0..self.grid.len())
            .map(|node| {
                let co = &self.coefficients[node];
                let (grad, hess) = self.grid.frame_derivatives(delta, node);
                let second = co.m.dot(&hess);
                let first: f64 = co.c.iter().zip(&grad).map(|(a, b)| a * b).sum();
                second + first + co.c0 * delta[node]
            })
            .collect()
    }

    pub fn apply(&self, delta: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(delta)
    }
}

/// A problem bound to a grid, with `f` sampled at the nodes.
#[derive(Debug, Clone)]
pub struct Discretization {
    spec: ProblemSpec,
    grid: Arc<SphereGrid>,
    table: MultiIndexTable,
    f_nodes: Vec<f64>,
    gamma: f64,
}

impl Discretization {
    pub fn new(spec: ProblemSpec, grid: Arc<SphereGrid>) -> Result<Self, PdeError> {
        spec.validate()?;
        if grid.dim() != spec.n {
            return Err(PdeError::InvalidSpec(format!(
                "grid dimension {} does not match n = {}",
                grid.dim(),
                spec.n
            )));
        }
        if let RhsFunction::Tabulated { values } = &spec.f {
            if values.len() != grid.len() {
                return Err(PdeError::InvalidSpec(format!(
                    "tabulated f has {} values, grid has {} nodes",
                    values.len(),
                    grid.len()
                )));
            }
        }
        if matches!(spec.f, RhsFunction::Table { .. }) {
            return Err(PdeError::InvalidSpec("tabulated f must be loaded before use".into()));
        }
        let table = MultiIndexTable::new(spec.n, spec.p)?;
        let f_nodes: Vec<f64> = (0..grid.len()).map(|i| spec.f.eval(&grid.position(i), i)).collect();
        if let Some((node, &value)) = f_nodes.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return Err(PdeError::NonPositiveRhs { node, value });
        }
        Ok(Self {
            spec,
            grid,
            table,
            f_nodes,
            gamma: 1.0,
        })
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn table(&self) -> &MultiIndexTable {
        &self.table
    }

    /// `f` at the nodes.
    pub fn f_nodes(&self) -> &[f64] {
        &self.f_nodes
    }

    /// Constant multiplying the right-hand side.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.spec.epsilon = epsilon;
        self
    }

    /// Replaces the nodal values of `f` (used by continuation).
    pub fn with_f_nodes(mut self, f_nodes: Vec<f64>) -> Self {
        assert_eq!(f_nodes.len(), self.grid.len());
        self.f_nodes = f_nodes;
        self
    }

    fn rhs_at(&self, node: usize, u: f64, v: f64) -> f64 {
        self.gamma * self.f_nodes[node] * (self.spec.alpha() * u).exp() * v.powf(self.spec.beta())
    }

    /// Residual data for every node; never fails on cone violation.
    pub fn evaluate(&self, u: &RadialField) -> Result<Residual, PdeError> {
        self.check_field(u)?;
        let len = self.grid.len();
        let mut out = Residual {
            r: Vec::with_capacity(len),
            f_vals: Vec::with_capacity(len),
            rhs: Vec::with_capacity(len),
            cone_ok: Vec::with_capacity(len),
            cone_margin: Vec::with_capacity(len),
            failing: Vec::with_capacity(len),
            gradients: Vec::with_capacity(len),
            points: Vec::with_capacity(len),
        };
        for node in 0..len {
            let gp = u.point(node);
            let cp = evaluate_spectral(&gp.a, gp.kappa_a.clone(), gp.basis.clone(), self.spec.k, self.spec.l, &self.table)?;
            let rhs = self.rhs_at(node, gp.u, gp.v);
            out.r.push(cp.value - rhs);
            out.f_vals.push(cp.value);
            out.rhs.push(rhs);
            out.cone_ok.push(cp.cone_ok);
            out.cone_margin.push(cp.cone_margin);
            out.failing.push(if cp.cone_ok {
                0
            } else {
                symfun::in_gamma_cone(self.spec.k, &cp.lambda).first_failure.unwrap_or(1)
            });
            out.gradients.push(cp.gradient);
            out.points.push(gp);
        }
        Ok(out)
    }

    /// Residual of an admissible field.
    pub fn residual(&self, u: &RadialField) -> Result<Residual, PdeError> {
        let res = self.evaluate(u)?;
        match res.cone_error() {
            Some(e) => Err(e),
            None => Ok(res),
        }
    }

    fn check_field(&self, u: &RadialField) -> Result<(), PdeError> {
        if !Arc::ptr_eq(u.grid(), &self.grid) && u.grid().len() != self.grid.len() {
            return Err(GeometryError::LengthMismatch {
                expected: self.grid.len(),
                got: u.values().len(),
            }
            .into());
        }
        Ok(())
    }

    /// Frame coefficients of the linearisation at one node.
    pub fn node_coefficients(&self, u: &RadialField, node: usize, jacobian: Jacobian) -> Result<NodeCoefficients, PdeError> {
        let gp = u.point(node);
        let cp = evaluate_point(&gp.a, self.spec.k, self.spec.l, &self.table)?;
        if !cp.cone_ok {
            let failing = symfun::in_gamma_cone(self.spec.k, &cp.lambda).first_failure.unwrap_or(1);
            return Err(PdeError::ConeViolation { node, failing, count: 1 });
        }
        Ok(self.coefficients_from(node, &gp, &cp.gradient, jacobian))
    }

    fn coefficients_from(&self, node: usize, gp: &GeometryPoint, fgrad: &SymMatrix, jacobian: Jacobian) -> NodeCoefficients {
        let n = self.spec.n;
        let w = &gp.grad_u;
        let v = gp.v;
        let gbar = inverse_sqrt_metric(w).to_dmatrix();
        let g = fgrad.to_dmatrix();
        let m = SymMatrix::from_dmatrix(&(&gbar * &g * &gbar));
        let rhs = self.rhs_at(node, gp.u, v);
        let beta = self.spec.beta();
        let mut c: Vec<f64> = w.iter().map(|wt| -rhs * beta * wt / (v * v)).collect();
        if jacobian == Jacobian::Exact {
            // ∂a/∂w_t = dḡ h̄ ḡ + ḡ (e_t wᵀ + w e_tᵀ) ḡ + ḡ h̄ dḡ with
            // dḡ = -2 w_t c' wwᵀ - c (e_t wᵀ + w e_tᵀ), c = 1/(v + v²);
            // contracted with G this needs P = h̄ ḡ G only
            let hbar = DMatrix::from_fn(n, n, |i, j| {
                let delta = if i == j { 1.0 } else { 0.0 };
                delta + w[i] * w[j] + gp.hess_u.get(i, j)
            });
            let cs = 1.0 / (v + v * v);
            let dcs = -(1.0 + 2.0 * v) / (2.0 * v * (v + v * v).powi(2));
            let wv = nalgebra::DVector::from_column_slice(w);
            let pm = &hbar * &gbar * &g;
            let pw = &pm * &wv;
            let ptw = pm.transpose() * &wv;
            let wpw = wv.dot(&pw);
            let mw = m.to_dmatrix() * &wv;
            for t in 0..n {
                c[t] += 2.0 * (-2.0 * w[t] * dcs * wpw - cs * (pw[t] + ptw[t])) + 2.0 * mw[t];
            }
        }
        NodeCoefficients {
            m,
            c,
            c0: -self.spec.alpha() * rhs,
        }
    }

    /// Linearisation of the residual at an admissible field.
    pub fn linearize(&self, u: &RadialField, jacobian: Jacobian) -> Result<Linearization, PdeError> {
        let res = self.evaluate(u)?;
        self.linearize_with(u, &res, jacobian)
    }

    /// As [`linearize`](Self::linearize), reusing `res = self.evaluate(u)`.
    pub fn linearize_with(&self, u: &RadialField, res: &Residual, jacobian: Jacobian) -> Result<Linearization, PdeError> {
        self.check_field(u)?;
        if res.gradients.len() != self.grid.len() || res.points.len() != self.grid.len() {
            return Err(GeometryError::LengthMismatch {
                expected: self.grid.len(),
                got: res.gradients.len().min(res.points.len()),
            }
            .into());
        }
        if let Some(e) = res.cone_error() {
            return Err(e);
        }
        let coefficients: Vec<NodeCoefficients> = (0..self.grid.len())
            .map(|node| self.coefficients_from(node, &res.points[node], &res.gradients[node], jacobian))
            .collect();
        let matrix = self.assemble(&coefficients);
        Ok(Linearization {
            coefficients,
            matrix,
            grid: self.grid.clone(),
        })
    }

    fn assemble(&self, coefficients: &[NodeCoefficients]) -> CsrMatrix {
        let len = self.grid.len();
        let mut builder = CsrMatrix::builder(len, len * (self.grid.taps_per_node() + 1));
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(self.grid.taps_per_node() + 1);
        for (node, co) in coefficients.iter().enumerate() {
            row.clear();
            let (first, second) = self.grid.frame_to_chart_coefficients(node, &co.m, &co.c);
            let mut centre = co.c0;
            self.grid.for_each_tap(node, &first, &second, |col, w| {
                row.push((col, w));
                centre -= w;
            });
            row.push((node, centre));
            builder.push_row(&mut row);
        }
        builder.finish()
    }

    /// Bound audits for a field.
    pub fn audit(&self, u: &RadialField) -> Result<BoundReport, PdeError> {
        audit_bounds(self, u)
    }
}

/// A pass/fail check with the slack that decided it (`slack >= 0` passes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub slack: f64,
    pub pass: bool,
}

/// Runtime audit of the a priori bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub min_rho: f64,
    pub max_rho: f64,
    /// `[ρ_lo, ρ_hi]` from the maximum principle at the extrema of `ρ`
    /// (absent in the strictly homogeneous case).
    pub c0_interval: Option<(f64, f64)>,
    /// `min(min ρ - ρ_lo, ρ_hi - max ρ)` relative to `ρ_hi`.
    pub c0_slack: Option<f64>,
    pub c0_inside: Option<bool>,
    /// `max |∇ log ρ|`.
    pub max_grad_log_rho: f64,
    pub max_abs_curvature: f64,
    pub min_curvature: f64,
    pub residual_sup: f64,
    pub min_cone_margin: f64,
    pub admissible: bool,
    /// `max |∇f|/f` against `2(k-l)√((p-1)/p)` (homogeneous, `q = 0`).
    pub gradient_hypothesis: Option<BoundCheck>,
    pub gradient_finite: bool,
}

/// Relative tolerance used by the C⁰ containment flag.
pub const C0_TOL: f64 = 1e-6;

/// The interval `[(min γf / C)^{1/α}, (max γf / C)^{1/α}]` with `C = F(Λ(I))`.
pub fn c0_interval(spec: &ProblemSpec, f_min: f64, f_max: f64, gamma: f64) -> Option<(f64, f64)> {
    let alpha = spec.alpha();
    if alpha <= REGIME_TOL {
        return None;
    }
    let c = spec.sphere_value();
    Some(((gamma * f_min / c).powf(1.0 / alpha), (gamma * f_max / c).powf(1.0 / alpha)))
}

/// `max |∇f| / f` over the grid, from the nodal values of `log f`.
pub fn max_log_gradient(grid: &SphereGrid, f_nodes: &[f64]) -> f64 {
    let logs: Vec<f64> = f_nodes.iter().map(|f| f.ln()).collect();
    (0..grid.len())
        .map(|node| {
            let (g, _) = grid.frame_derivatives(&logs, node);
            g.iter().map(|x| x * x).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max)
}

pub fn audit_bounds(disc: &Discretization, u: &RadialField) -> Result<BoundReport, PdeError> {
    let spec = disc.spec();
    let res = disc.evaluate(u)?;
    let min_rho = u.min_rho();
    let max_rho = u.max_rho();
    let f_min = disc.f_nodes().iter().copied().fold(f64::INFINITY, f64::min);
    let f_max = disc.f_nodes().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let c0 = c0_interval(spec, f_min, f_max, disc.gamma());
    let c0_slack = c0.map(|(lo, hi)| ((min_rho - lo).min(hi - max_rho)) / hi);
    let mut max_grad: f64 = 0.0;
    let mut max_k: f64 = 0.0;
    let mut min_k = f64::INFINITY;
    for node in 0..u.grid().len() {
        let gp = u.point(node);
        let g = gp.grad_u.iter().map(|x| x * x).sum::<f64>().sqrt();
        max_grad = max_grad.max(g);
        for kappa in gp.principal_curvatures() {
            max_k = max_k.max(kappa.abs());
            min_k = min_k.min(kappa);
        }
    }
    let gradient_hypothesis = (spec.regime() == Regime::Homogeneous && spec.q == 0.0).then(|| {
        let ratio = max_log_gradient(disc.grid(), disc.f_nodes());
        let limit = 2.0 * (spec.k - spec.l) as f64 * ((spec.p as f64 - 1.0) / spec.p as f64).sqrt();
        BoundCheck {
            name: "max|grad f|/f < 2(k-l)sqrt((p-1)/p)".into(),
            value: ratio,
            limit,
            slack: limit - ratio,
            pass: ratio < limit,
        }
    });
    Ok(BoundReport {
        min_rho,
        max_rho,
        c0_interval: c0,
        c0_slack,
        c0_inside: c0_slack.map(|s| s >= -C0_TOL),
        max_grad_log_rho: max_grad,
        max_abs_curvature: max_k,
        min_curvature: min_k,
        residual_sup: res.sup_norm(),
        min_cone_margin: res.min_cone_margin(),
        admissible: res.admissible(),
        gradient_hypothesis,
        gradient_finite: max_grad.is_finite(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::kappa_derivatives;

    fn grid(n: usize, res: usize) -> Arc<SphereGrid> {
        Arc::new(SphereGrid::new(n, res).unwrap())
    }

    #[test]
    fn json_round_trip() {
        let spec = ProblemSpec::catalog("sphere_harmonic").unwrap();
        let s = serde_json::to_string(&spec).unwrap();
        let back: ProblemSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(spec, back);
        let parsed: ProblemSpec = serde_json::from_str(
            r#"{"n":2,"p":1,"k":2,"l":0,"b":-3,"q":0,"f":{"type":"constant","c":2.0}}"#,
        )
        .unwrap();
        assert_eq!(parsed.epsilon, 0.0);
        assert_eq!(parsed.f, RhsFunction::Constant { c: 2.0 });
    }

    #[test]
    fn validation() {
        let mut spec = ProblemSpec::catalog("sphere_const").unwrap();
        assert!(spec.validate().is_ok());
        spec.l = 2;
        assert!(spec.validate().unwrap_err().to_string().contains("0 <= l < k"));
        let mut spec = ProblemSpec::catalog("sphere_const").unwrap();
        spec.b = 0.0;
        assert!(spec.validate().is_err());
        for name in ProblemSpec::catalog_names() {
            ProblemSpec::catalog(name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn regimes() {
        assert_eq!(ProblemSpec::catalog("sphere_const").unwrap().regime(), Regime::Nonhomogeneous);
        assert_eq!(ProblemSpec::catalog("homogeneous_const").unwrap().regime(), Regime::Homogeneous);
        assert_eq!(ProblemSpec::catalog("sphere_const").unwrap().sphere_value(), 12.0);
    }

    #[test]
    fn round_sphere_residual() {
        let spec = ProblemSpec::catalog("sphere_const").unwrap();
        let disc = Discretization::new(spec, grid(3, 8)).unwrap();
        let exact = RadialField::constant(disc.grid().clone(), (12.0f64).ln());
        assert!(disc.residual(&exact).unwrap().sup_norm() < 1e-12);
        // r = C - c·r^{b+q+k-l} for other radii
        let r = 0.3f64;
        let res = disc.residual(&RadialField::constant(disc.grid().clone(), -r.ln())).unwrap();
        let expected = 12.0 - r.powf(-3.0 + 2.0);
        assert!(res.r.iter().all(|x| (x - expected).abs() < 1e-12));
    }

    #[test]
    fn homogeneous_shift_invariance() {
        let spec = ProblemSpec::catalog("homogeneous_const").unwrap();
        let disc = Discretization::new(spec, grid(3, 8)).unwrap();
        let u = RadialField::from_fn(disc.grid().clone(), |y| 0.05 * y[0] + 0.03 * y[2] * y[3]).unwrap();
        let r1 = disc.residual(&u).unwrap();
        let r2 = disc.residual(&u.shifted(0.7)).unwrap();
        for (a, b) in r1.r.iter().zip(&r2.r) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gauge_homogeneity() {
        let spec = ProblemSpec::catalog("sphere_harmonic").unwrap();
        let disc = Discretization::new(spec.clone(), grid(3, 8)).unwrap();
        let u = RadialField::from_fn(disc.grid().clone(), |y| 0.1 * y[1]).unwrap();
        let c = 0.4;
        let shifted = disc.evaluate(&u.shifted(c)).unwrap();
        let base = disc.evaluate(&u).unwrap();
        let factor = (spec.alpha() * c).exp();
        for i in 0..base.r.len() {
            assert!((shifted.f_vals[i] - base.f_vals[i]).abs() < 1e-12);
            assert!((shifted.rhs[i] - factor * base.rhs[i]).abs() < 1e-12 * shifted.rhs[i]);
        }
    }

    #[test]
    fn p_one_matches_kappa_quotient() {
        let spec = ProblemSpec {
            n: 2,
            p: 1,
            k: 2,
            l: 1,
            b: -3.0,
            q: 0.5,
            f: RhsFunction::Constant { c: 1.3 },
            epsilon: 0.0,
        };
        let disc = Discretization::new(spec.clone(), grid(2, 16)).unwrap();
        let u = RadialField::from_fn(disc.grid().clone(), |y| 0.1 * y[0] - 0.05 * y[1] * y[2]).unwrap();
        let res = disc.residual(&u).unwrap();
        for node in (0..disc.grid().len()).step_by(7) {
            let gp = u.point(node);
            let k = &gp.kappa_a;
            let direct = (k[0] * k[1]) / (k[0] + k[1]);
            let rhs = 1.3 * (spec.alpha() * gp.u).exp() * gp.v.powf(spec.beta());
            assert!((res.r[node] - (direct - rhs)).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_mode_of_linearization() {
        let spec = ProblemSpec::catalog("sphere_const").unwrap();
        let disc = Discretization::new(spec.clone(), grid(3, 8)).unwrap();
        let exact = RadialField::constant(disc.grid().clone(), (12.0f64).ln());
        let lin = disc.linearize(&exact, Jacobian::Exact).unwrap();
        let ones = vec![1.0; disc.grid().len()];
        let out = lin.apply(&ones);
        let expected = -spec.alpha() * 12.0;
        assert!(expected < 0.0);
        assert!(out.iter().all(|x| (x - expected).abs() < 1e-9));
    }

    #[test]
    fn frozen_and_exact_agree_at_round_sphere() {
        let spec = ProblemSpec::catalog("sphere_const").unwrap();
        let disc = Discretization::new(spec, grid(2 + 1, 8)).unwrap();
        let u = RadialField::constant(disc.grid().clone(), 0.3);
        let a = disc.node_coefficients(&u, 5, Jacobian::Exact).unwrap();
        let b = disc.node_coefficients(&u, 5, Jacobian::Frozen).unwrap();
        assert_eq!(a.c, b.c);
        assert_eq!(a.m, b.m);
    }

    #[test]
    fn exact_gradient_coefficients_match_fd() {
        // c_t is the derivative of the pointwise residual in w_t
        let spec = ProblemSpec::catalog("sphere_harmonic").unwrap();
        let disc = Discretization::new(spec.clone(), grid(3, 8)).unwrap();
        let u = RadialField::from_fn(disc.grid().clone(), |y| 0.2 * y[1] + 0.1 * y[0] * y[3]).unwrap();
        let node = 77;
        let gp = u.point(node);
        let co = disc.node_coefficients(&u, node, Jacobian::Exact).unwrap();
        let pointwise = |w: &[f64]| {
            let p = GeometryPoint::new(gp.u, w.to_vec(), gp.hess_u.clone());
            let (f, _, _) = kappa_derivatives(&p.kappa_a, spec.k, spec.l, disc.table(), false).unwrap();
            f - disc.rhs_at(node, p.u, p.v)
        };
        for t in 0..3 {
            let h = 1e-6;
            let mut wp = gp.grad_u.clone();
            let mut wm = gp.grad_u.clone();
            wp[t] += h;
            wm[t] -= h;
            let fd = (pointwise(&wp) - pointwise(&wm)) / (2.0 * h);
            assert!((fd - co.c[t]).abs() < 1e-6 * (1.0 + fd.abs()), "t={t}: {fd} vs {}", co.c[t]);
        }
    }

    #[test]
    fn matrix_free_matches_assembled() {
        let spec = ProblemSpec::catalog("sphere_harmonic").unwrap();
        let disc = Discretization::new(spec, grid(3, 8)).unwrap();
        let u = RadialField::from_fn(disc.grid().clone(), |y| 0.1 * y[1] + 0.05 * y[0] * y[2]).unwrap();
        let lin = disc.linearize(&u, Jacobian::Exact).unwrap();
        let delta: Vec<f64> = (0..disc.grid().len())
            .map(|i| {
                let y = disc.grid().position(i);
                y[0] * y[3] + 0.5 * y[2]
            })
            .collect();
        let a = lin.apply(&delta);
        let b = lin.apply_matrix_free(&delta);
        let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-8 * scale.max(1.0));
        }
    }

    #[test]
    fn principal_symbol_sign() {
        let spec = ProblemSpec::catalog("sphere_harmonic").unwrap();
        let disc = Discretization::new(spec, grid(3, 8)).unwrap();
        let u = RadialField::from_fn(disc.grid().clone(), |y| 0.1 * y[1]).unwrap();
        let lin = disc.linearize(&u, Jacobian::Exact).unwrap();
        for node in 0..disc.grid().len() {
            let (k, _) = crate::exterior::eigen_sorted(&lin.coefficients[node].m);
            assert!(k[0] > 0.0);
            assert!(lin.matrix.get(node, node) < 0.0);
        }
    }

    #[test]
    fn audit_constant_sphere() {
        let spec = ProblemSpec::catalog("sphere_const").unwrap();
        let disc = Discretization::new(spec, grid(3, 8)).unwrap();
        let exact = RadialField::constant(disc.grid().clone(), (12.0f64).ln());
        let rep = disc.audit(&exact).unwrap();
        let (lo, hi) = rep.c0_interval.unwrap();
        assert!((lo - 1.0 / 12.0).abs() < 1e-15 && (hi - 1.0 / 12.0).abs() < 1e-15);
        assert!(rep.c0_slack.unwrap().abs() < 1e-8);
        assert_eq!(rep.c0_inside, Some(true));
        assert_eq!(rep.max_grad_log_rho, 0.0);
        assert!(rep.gradient_finite);
    }

    #[test]
    fn cone_violation_reported() {
        let spec = ProblemSpec::catalog("sphere_const").unwrap();
        let disc = Discretization::new(spec, grid(3, 8)).unwrap();
        // a strongly oscillating field makes the shape matrix indefinite
        let u = RadialField::from_fn(disc.grid().clone(), |y| 3.0 * (4.0 * y[0]).sin()).unwrap();
        assert!(matches!(disc.residual(&u), Err(PdeError::ConeViolation { .. })));
        assert!(!disc.evaluate(&u).unwrap().admissible());
    }

    #[test]
    fn nonpositive_f_rejected() {
        let mut spec = ProblemSpec::catalog("sphere_const").unwrap();
        spec.f = RhsFunction::Tabulated { values: vec![-1.0; 512] };
        let err = Discretization::new(spec, grid(3, 8)).unwrap_err();
        assert!(matches!(err, PdeError::NonPositiveRhs { node: 0, .. }));
    }
}
