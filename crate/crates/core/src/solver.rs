//! Damped Newton iteration, the continuity path in `t`, and the `ε → 0⁺`
//! path for the homogeneous problem.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GridMeta, RadialField, SphereGrid};
use crate::linear::{CoarseSpace, LinearError, LinearSolver};
use crate::pde::{audit_bounds, max_log_gradient, BoundReport, Discretization, Jacobian, PdeError, ProblemSpec, Regime};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    WrongRegime(String),
    #[error("initial field is not admissible: {0}")]
    Inadmissible(PdeError),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Linear(#[from] LinearError),
}

/// Jacobian policy of the Newton iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    Exact,
    Frozen,
    /// Frozen while the residual is large, exact near convergence; if a
    /// line search fails the other Jacobian is tried before giving up.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Absolute tolerance on the residual sup-norm.
    pub newton_tol: f64,
    /// Tolerance for intermediate continuation parameters `t < 1`, whose
    /// solutions only seed the next step.
    pub path_tol: f64,
    pub max_newton: usize,
    /// Backtracking ratio.
    pub damping: f64,
    /// Smallest step length tried by the line search.
    pub min_step: f64,
    /// Increasing continuation parameters in `(0, 1]`, ending at 1.
    pub t_steps: Vec<f64>,
    /// Smallest admissible continuation increment.
    pub min_t_step: f64,
    /// Decreasing positive regularisation exponents.
    pub eps_schedule: Vec<f64>,
    pub linear_solver: LinearSolver,
    pub jacobian: JacobianMode,
    /// `Auto` uses the frozen Jacobian while `‖r‖_∞ > auto_switch · max|rhs|`.
    pub auto_switch: f64,
    /// Degree of the polynomial coarse space added to the GMRES
    /// preconditioner (`None` disables it).
    pub coarse_degree: Option<usize>,
    /// After the `ε` path, solve the limit problem for `(ū, γ)` directly,
    /// starting from the extrapolated `γ`.
    pub eigen_polish: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            path_tol: 1e-8,
            max_newton: 40,
            damping: 0.5,
            min_step: 1.0 / 1024.0,
            t_steps: uniform_steps(10),
            min_t_step: 1e-6,
            eps_schedule: vec![0.2, 0.1, 0.05, 0.025],
            linear_solver: LinearSolver::Auto,
            jacobian: JacobianMode::Auto,
            auto_switch: 0.25,
            coarse_degree: Some(2),
            eigen_polish: true,
        }
    }
}

/// `[1/m, 2/m, …, 1]`; with the starting point `t = 0` these are `m + 1`
/// uniform parameters.
pub fn uniform_steps(m: usize) -> Vec<f64> {
    (1..=m).map(|i| i as f64 / m as f64).collect()
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::InvalidConfig(m.to_string()));
        if !(self.newton_tol > 0.0) {
            return bad("newton_tol must be positive");
        }
        if !(self.path_tol >= self.newton_tol) {
            return bad("path_tol must be at least newton_tol");
        }
        if self.max_newton == 0 {
            return bad("max_newton must be at least 1");
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return bad("damping must lie in (0, 1)");
        }
        if !(self.min_step > 0.0 && self.min_step <= 1.0) {
            return bad("min_step must lie in (0, 1]");
        }
        if self.t_steps.is_empty()
            || self.t_steps.windows(2).any(|w| w[1] <= w[0])
            || self.t_steps[0] <= 0.0
            || (self.t_steps.last().copied().unwrap_or(0.0) - 1.0).abs() > 1e-15
        {
            return bad("t_steps must increase strictly within (0, 1] and end at 1");
        }
        if !(self.min_t_step > 0.0) {
            return bad("min_t_step must be positive");
        }
        if self.eps_schedule.is_empty()
            || self.eps_schedule.iter().any(|e| !(*e > 0.0))
            || self.eps_schedule.windows(2).any(|w| w[1] >= w[0])
        {
            return bad("eps_schedule must be positive and strictly decreasing");
        }
        Ok(())
    }
}

/// Result of one Newton solve.
#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub field: RadialField,
    pub iterations: usize,
    pub converged: bool,
    /// Residual sup-norm before the first and after every accepted step.
    pub residual_history: Vec<f64>,
    /// Accepted step lengths.
    pub step_lengths: Vec<f64>,
    pub min_cone_margin: f64,
    pub message: String,
}

impl NewtonOutcome {
    pub fn residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// Damped Newton iteration from an admissible field.
///
/// Every accepted step strictly decreases the residual sup-norm (Armijo
/// condition) and keeps all nodes inside the cone.
pub fn newton_solve(disc: &Discretization, u0: &RadialField, config: &SolverConfig) -> Result<NewtonOutcome, SolverError> {
    config.validate()?;
    let mut u = u0.clone();
    let mut res = disc.evaluate(&u)?;
    if let Some(e) = res.cone_error() {
        return Err(SolverError::Inadmissible(e));
    }
    let mut sup = res.sup_norm();
    let mut history = vec![sup];
    let coarse = config
        .coarse_degree
        .map(|d| CoarseSpace::new(disc.grid().polynomial_basis(d)));
    let mut steps = Vec::new();
    let mut iterations = 0;
    let done = |u: RadialField, history, steps, iterations, margin, converged: bool, message: String| NewtonOutcome {
        field: u,
        iterations,
        converged,
        residual_history: history,
        step_lengths: steps,
        min_cone_margin: margin,
        message,
    };
    loop {
        if sup <= config.newton_tol {
            let margin = res.min_cone_margin();
            return Ok(done(u, history, steps, iterations, margin, true, "converged".into()));
        }
        if iterations >= config.max_newton {
            let margin = res.min_cone_margin();
            let msg = format!("no convergence after {iterations} iterations (residual {sup:.3e})");
            return Ok(done(u, history, steps, iterations, margin, false, msg));
        }
        let rhs_scale = res.rhs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let first = match config.jacobian {
            JacobianMode::Exact => Jacobian::Exact,
            JacobianMode::Frozen => Jacobian::Frozen,
            JacobianMode::Auto => {
                if sup > config.auto_switch * rhs_scale {
                    Jacobian::Frozen
                } else {
                    Jacobian::Exact
                }
            }
        };
        let mut candidates = vec![first];
        if config.jacobian == JacobianMode::Auto {
            candidates.push(match first {
                Jacobian::Exact => Jacobian::Frozen,
                Jacobian::Frozen => Jacobian::Exact,
            });
        }
        // inexact Newton: the linear residual only has to stay well below
        // both the current nonlinear residual and the target tolerance
        let forcing = (sup / rhs_scale.max(1.0)).min(1e-4).max(0.1 * config.newton_tol / sup).min(1e-2);
        let mut accepted = None;
        for jac in candidates {
            let lin = disc.linearize_with(&u, &res, jac)?;
            let minus_r: Vec<f64> = res.r.iter().map(|x| -x).collect();
            let delta = match config.linear_solver.solve_with(&lin.matrix, &minus_r, coarse.as_ref(), forcing) {
                Ok((d, _)) => d,
                Err(_) => continue,
            };
            let mut s = 1.0;
            while s >= config.min_step {
                let mut trial = u.clone();
                trial
                    .values_mut()
                    .iter_mut()
                    .zip(&delta)
                    .for_each(|(v, d)| *v += s * d);
                if trial.values().iter().all(|v| v.is_finite()) {
                    let tr = disc.evaluate(&trial)?;
                    let tsup = tr.sup_norm();
                    if tr.admissible() && tsup < (1.0 - 1e-4 * s) * sup {
                        accepted = Some((trial, tr, tsup, s));
                        break;
                    }
                }
                s *= config.damping;
            }
            if accepted.is_some() {
                break;
            }
        }
        match accepted {
            Some((trial, tr, tsup, s)) => {
                u = trial;
                res = tr;
                sup = tsup;
                history.push(sup);
                steps.push(s);
                iterations += 1;
            }
            None => {
                let margin = res.min_cone_margin();
                let msg = format!("line search failed at iteration {iterations} (residual {sup:.3e})");
                return Ok(done(u, history, steps, iterations, margin, false, msg));
            }
        }
    }
}

/// One accepted step of a continuation path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// `"t"` or `"epsilon"`.
    pub kind: String,
    pub parameter: f64,
    pub newton_iterations: usize,
    pub residual_initial: f64,
    pub residual_final: f64,
    pub min_rho: f64,
    pub max_rho: f64,
    /// `min` over nodes and `j <= k` of `σ_j(Λ)`.
    pub cone_margin: f64,
    /// Smallest principal curvature over the grid.
    pub min_curvature: f64,
    pub min_step_length: f64,
    /// `γ_ε = (min ρ_ε)^{-ε}` on the `ε` path.
    pub gamma: Option<f64>,
}

fn trace_entry(kind: &str, parameter: f64, outcome: &NewtonOutcome, gamma: Option<f64>) -> TraceEntry {
    let u = &outcome.field;
    let min_curvature = (0..u.grid().len())
        .map(|i| u.point(i).principal_curvatures()[0])
        .fold(f64::INFINITY, f64::min);
    TraceEntry {
        kind: kind.into(),
        parameter,
        newton_iterations: outcome.iterations,
        residual_initial: outcome.residual_history.first().copied().unwrap_or(f64::NAN),
        residual_final: outcome.residual(),
        min_rho: u.min_rho(),
        max_rho: u.max_rho(),
        cone_margin: outcome.min_cone_margin,
        min_curvature,
        min_step_length: outcome.step_lengths.iter().copied().fold(1.0, f64::min),
        gamma,
    }
}

/// Everything a solve produces.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub spec: ProblemSpec,
    pub field: RadialField,
    /// Eigenvalue of the homogeneous problem.
    pub gamma: Option<f64>,
    /// Richardson limit of `γ_ε` (equal to `gamma` unless the limit problem
    /// was polished).
    pub gamma_extrapolated: Option<f64>,
    /// `(ε, γ_ε)` along the regularisation path.
    pub gamma_path: Vec<(f64, f64)>,
    /// `false` when the last three `γ_ε` spread by more than [`CAUCHY_TOL`].
    pub gamma_cauchy: Option<bool>,
    pub trace: Vec<TraceEntry>,
    pub audits: BoundReport,
    pub converged: bool,
    pub residual: f64,
    pub newton_iterations: usize,
    pub warnings: Vec<String>,
    pub message: String,
}

/// Relative spread of the last three `γ_ε` above which the path is flagged.
pub const CAUCHY_TOL: f64 = 1e-3;

/// Serializable summary of a [`SolveReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub spec: ProblemSpec,
    pub grid: GridMeta,
    pub converged: bool,
    pub message: String,
    pub residual: f64,
    pub newton_iterations: usize,
    pub min_rho: f64,
    pub max_rho: f64,
    pub mean_rho: f64,
    pub gamma: Option<f64>,
    pub gamma_extrapolated: Option<f64>,
    pub gamma_path: Vec<(f64, f64)>,
    pub gamma_cauchy: Option<bool>,
    pub audits: BoundReport,
    pub warnings: Vec<String>,
}

impl SolveReport {
    pub fn summary(&self) -> ReportSummary {
        let rho = self.field.rho();
        let grid = self.field.grid();
        let area: f64 = grid.weights().iter().sum();
        ReportSummary {
            spec: self.spec.clone(),
            grid: GridMeta::from(grid.as_ref()),
            converged: self.converged,
            message: self.message.clone(),
            residual: self.residual,
            newton_iterations: self.newton_iterations,
            min_rho: self.field.min_rho(),
            max_rho: self.field.max_rho(),
            mean_rho: grid.integrate(&rho) / area,
            gamma: self.gamma,
            gamma_extrapolated: self.gamma_extrapolated,
            gamma_path: self.gamma_path.clone(),
            gamma_cauchy: self.gamma_cauchy,
            audits: self.audits.clone(),
            warnings: self.warnings.clone(),
        }
    }
}

/// `[t f^{1/m} + (1-t) C^{1/m}]^m`, `m = k-l`, `C = F(Λ(I))`, at the nodes.
pub fn continuation_rhs(spec: &ProblemSpec, f_nodes: &[f64], t: f64) -> Vec<f64> {
    let m = (spec.k - spec.l) as f64;
    let c = spec.sphere_value().powf(1.0 / m);
    f_nodes
        .iter()
        .map(|f| (t * f.powf(1.0 / m) + (1.0 - t) * c).powf(m))
        .collect()
}

/// Continuity path from the unit sphere (`t = 0`) to the target problem.
pub fn continuation_solve(disc: &Discretization, config: &SolverConfig) -> Result<SolveReport, SolverError> {
    config.validate()?;
    if disc.spec().alpha() <= 0.0 {
        return Err(SolverError::WrongRegime(format!(
            "continuation needs -b-q-k+l+epsilon > 0, got {}",
            disc.spec().alpha()
        )));
    }
    let grid = disc.grid().clone();
    let target_f = disc.f_nodes().to_vec();
    let mut u = RadialField::constant(grid, 0.0);
    let mut t_done = 0.0;
    let mut trace = Vec::new();
    let mut queue: Vec<f64> = config.t_steps.iter().rev().copied().collect();
    let mut total_iterations = 0;
    let mut last_outcome: Option<NewtonOutcome> = None;
    let mut failure = None;
    while let Some(t) = queue.pop() {
        let step_disc = disc.clone().with_f_nodes(continuation_rhs(disc.spec(), &target_f, t));
        let outcome = if t < 1.0 {
            let loose = SolverConfig {
                newton_tol: config.path_tol,
                ..config.clone()
            };
            newton_solve(&step_disc, &u, &loose)?
        } else {
            newton_solve(&step_disc, &u, config)?
        };
        total_iterations += outcome.iterations;
        if outcome.converged {
            trace.push(trace_entry("t", t, &outcome, None));
            u = outcome.field.clone();
            t_done = t;
            last_outcome = Some(outcome);
            continue;
        }
        let mid = 0.5 * (t_done + t);
        if mid - t_done < config.min_t_step {
            failure = Some(format!("continuation step underflow at t = {t_done} ({})", outcome.message));
            break;
        }
        queue.push(t);
        queue.push(mid);
    }
    let final_disc = if t_done == 1.0 {
        disc.clone()
    } else {
        disc.clone().with_f_nodes(continuation_rhs(disc.spec(), &target_f, t_done))
    };
    let audits = audit_bounds(&final_disc, &u)?;
    let converged = failure.is_none();
    let residual = last_outcome.as_ref().map(|o| o.residual()).unwrap_or(audits.residual_sup);
    Ok(SolveReport {
        spec: disc.spec().clone(),
        field: u,
        gamma: None,
        gamma_extrapolated: None,
        gamma_path: Vec::new(),
        gamma_cauchy: None,
        trace,
        audits,
        converged,
        residual,
        newton_iterations: total_iterations,
        warnings: disc.spec().hypothesis_warnings(),
        message: failure.unwrap_or_else(|| "converged".into()),
    })
}

/// Newton directly on the target problem from the constant field at the
/// midpoint of the C⁰ interval.
pub fn solve_from_midpoint(disc: &Discretization, config: &SolverConfig) -> Result<NewtonOutcome, SolverError> {
    let f = disc.f_nodes();
    let lo = f.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (r0, r1) = crate::pde::c0_interval(disc.spec(), lo, hi, disc.gamma())
        .ok_or_else(|| SolverError::WrongRegime("no C0 interval in the homogeneous case".into()))?;
    let start = RadialField::constant(disc.grid().clone(), -(0.5 * (r0 + r1)).ln());
    newton_solve(disc, &start, config)
}

/// Richardson extrapolation of the last three `(ε, γ_ε)` to `ε = 0`: the
/// interpolating polynomial (Neville's scheme), which removes the `cε` and
/// `c'ε²` terms of `γ_ε = γ + cε + c'ε² + …`.
pub fn extrapolate_gamma(path: &[(f64, f64)]) -> f64 {
    let tail = &path[path.len().saturating_sub(3)..];
    if tail.is_empty() {
        return f64::NAN;
    }
    let mut p: Vec<f64> = tail.iter().map(|q| q.1).collect();
    for level in 1..tail.len() {
        for i in 0..tail.len() - level {
            let (xi, xj) = (tail[i].0, tail[i + level].0);
            p[i] = (xi * p[i + 1] - xj * p[i]) / (xi - xj);
        }
    }
    p[0]
}

/// Relative spread `(max - min)/|mean|` of the last three `γ_ε`.
pub fn gamma_spread(path: &[(f64, f64)]) -> f64 {
    let tail = &path[path.len().saturating_sub(3)..];
    let lo = tail.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = tail.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let mean = tail.iter().map(|p| p.1).sum::<f64>() / tail.len() as f64;
    (hi - lo) / mean.abs()
}

/// Warnings for the hypotheses of the homogeneous existence theory.
pub fn homogeneous_warnings(disc: &Discretization) -> Vec<String> {
    let spec = disc.spec();
    let mut out = spec.hypothesis_warnings();
    if spec.q == 0.0 {
        let ratio = max_log_gradient(disc.grid(), disc.f_nodes());
        let limit = 2.0 * (spec.k - spec.l) as f64 * ((spec.p as f64 - 1.0) / spec.p as f64).sqrt();
        if !(ratio < limit) && ratio > 0.0 {
            out.push(format!(
                "q = 0 and max|grad f|/f = {ratio:.4} is not below 2(k-l)sqrt((p-1)/p) = {limit:.4}"
            ));
        }
    }
    out
}

/// The `ε → 0⁺` path: solves the regularised problems, records
/// `γ_ε = (min ρ_ε)^{-ε}`, extrapolates `γ` and returns the normalised
/// solution with `min ρ̄ = 1`.
pub fn homogeneous_solve(disc: &Discretization, config: &SolverConfig) -> Result<SolveReport, SolverError> {
    config.validate()?;
    if disc.spec().regime() != Regime::Homogeneous {
        return Err(SolverError::WrongRegime(format!(
            "the eigenvalue path needs -b-q-k+l = 0, got {}",
            disc.spec().base_exponent()
        )));
    }
    let base = disc.clone().with_epsilon(0.0).with_gamma(1.0);
    let warnings = homogeneous_warnings(&base);
    let mut trace = Vec::new();
    let mut path: Vec<(f64, f64)> = Vec::new();
    let mut normalized: Option<RadialField> = None;
    let mut total_iterations = 0;
    let mut failure = None;
    let mut last_residual = f64::NAN;
    for &eps in &config.eps_schedule {
        let reg = base.clone().with_epsilon(eps);
        let mut solved = None;
        if let (Some(bar), Some(&(_, g_prev))) = (&normalized, path.last()) {
            let start = bar.shifted(g_prev.ln() / eps);
            if let Ok(o) = newton_solve(&reg, &start, config) {
                total_iterations += o.iterations;
                if o.converged {
                    solved = Some(o);
                }
            }
        }
        let outcome = match solved {
            Some(o) => o,
            None => {
                let rep = continuation_solve(&reg, config)?;
                total_iterations += rep.newton_iterations;
                if !rep.converged {
                    failure = Some(format!("epsilon = {eps}: {}", rep.message));
                    break;
                }
                NewtonOutcome {
                    iterations: rep.newton_iterations,
                    converged: true,
                    residual_history: vec![rep.residual],
                    step_lengths: Vec::new(),
                    min_cone_margin: rep.audits.min_cone_margin,
                    message: rep.message,
                    field: rep.field,
                }
            }
        };
        let max_u = outcome.field.max_u();
        let gamma_eps = (eps * max_u).exp();
        path.push((eps, gamma_eps));
        trace.push(trace_entry("epsilon", eps, &outcome, Some(gamma_eps)));
        last_residual = outcome.residual();
        normalized = Some(outcome.field.shifted(-max_u));
    }
    let Some(field) = normalized else {
        return Err(SolverError::WrongRegime(failure.unwrap_or_else(|| "empty epsilon schedule".into())));
    };
    let extrapolated = extrapolate_gamma(&path);
    let spread = gamma_spread(&path);
    let cauchy = spread <= CAUCHY_TOL;
    let mut warnings = warnings;
    let (mut field, mut gamma) = (field, extrapolated);
    if config.eigen_polish && failure.is_none() {
        match eigen_newton(&base, &field, extrapolated, config) {
            Ok((o, g)) if o.converged => {
                total_iterations += o.iterations;
                trace.push(trace_entry("eigen", 0.0, &o, Some(g)));
                last_residual = o.residual();
                let max_u = o.field.max_u();
                field = o.field.shifted(-max_u);
                gamma = g;
            }
            Ok((o, _)) => warnings.push(format!("limit problem not solved ({}); reporting the extrapolated gamma", o.message)),
            Err(e) => warnings.push(format!("limit problem not solved ({e}); reporting the extrapolated gamma")),
        }
    }
    let audit_disc = base.clone().with_gamma(gamma);
    let audits = audit_bounds(&audit_disc, &field)?;
    let mut message = failure.clone().unwrap_or_else(|| "converged".into());
    if failure.is_none() && !cauchy {
        message = format!("gamma_eps not Cauchy: relative spread {spread:.3e} > {CAUCHY_TOL:e}");
    }
    Ok(SolveReport {
        spec: base.spec().clone(),
        field,
        gamma: Some(gamma),
        gamma_extrapolated: Some(extrapolated),
        gamma_path: path,
        gamma_cauchy: Some(cauchy),
        trace,
        audits,
        converged: failure.is_none(),
        residual: last_residual,
        newton_iterations: total_iterations,
        warnings,
        message,
    })
}

/// Damped Newton on the `ε = 0` problem with unknowns `(u, log γ)`.
///
/// The operator annihilates constants there, so `u` is pinned at its maximum
/// node and that column carries the `log γ` direction instead.
pub fn eigen_newton(
    base: &Discretization,
    u0: &RadialField,
    gamma0: f64,
    config: &SolverConfig,
) -> Result<(NewtonOutcome, f64), SolverError> {
    config.validate()?;
    if !(gamma0 > 0.0 && gamma0.is_finite()) {
        return Err(SolverError::InvalidConfig(format!("gamma must be positive, got {gamma0}")));
    }
    let base = base.clone().with_epsilon(0.0);
    let pin = (0..u0.values().len())
        .max_by(|&a, &b| u0.values()[a].total_cmp(&u0.values()[b]))
        .unwrap_or(0);
    let mut u = u0.clone();
    let mut log_g = gamma0.ln();
    let mut disc = base.clone().with_gamma(gamma0);
    let mut res = disc.evaluate(&u)?;
    if let Some(e) = res.cone_error() {
        return Err(SolverError::Inadmissible(e));
    }
    let mut sup = res.sup_norm();
    let mut history = vec![sup];
    let mut steps = Vec::new();
    let mut iterations = 0;
    let mut message = "converged".to_string();
    while sup > config.newton_tol {
        if iterations >= config.max_newton {
            message = format!("no convergence after {iterations} iterations (residual {sup:.3e})");
            break;
        }
        let lin = disc.linearize_with(&u, &res, Jacobian::Exact)?;
        let n = res.r.len();
        let mut builder = crate::linear::CsrMatrix::builder(n, lin.matrix.nnz() + n);
        let mut row = Vec::new();
        for i in 0..n {
            row.clear();
            let (cols, vals) = lin.matrix.row(i);
            row.extend(cols.iter().zip(vals).filter(|(c, _)| **c != pin).map(|(c, v)| (*c, *v)));
            // ∂r/∂log γ = -γ f v^β
            row.push((pin, -res.rhs[i]));
            builder.push_row(&mut row);
        }
        let matrix = builder.finish();
        let minus_r: Vec<f64> = res.r.iter().map(|x| -x).collect();
        let forcing = (0.1 * config.newton_tol / sup).min(1e-4);
        let (x, _) = config.linear_solver.solve_with(&matrix, &minus_r, None, forcing)?;
        let mut accepted = None;
        let mut s = 1.0;
        while s >= config.min_step {
            let mut trial = u.clone();
            for (i, v) in trial.values_mut().iter_mut().enumerate() {
                if i != pin {
                    *v += s * x[i];
                }
            }
            let g = log_g + s * x[pin];
            if g.is_finite() && trial.values().iter().all(|v| v.is_finite()) {
                let d = base.clone().with_gamma(g.exp());
                let tr = d.evaluate(&trial)?;
                let tsup = tr.sup_norm();
                if tr.admissible() && tsup < (1.0 - 1e-4 * s) * sup {
                    accepted = Some((trial, g, d, tr, tsup));
                    break;
                }
            }
            s *= config.damping;
        }
        let Some((trial, g, d, tr, tsup)) = accepted else {
            message = format!("line search failed at iteration {iterations} (residual {sup:.3e})");
            break;
        };
        u = trial;
        log_g = g;
        disc = d;
        res = tr;
        sup = tsup;
        history.push(sup);
        steps.push(s);
        iterations += 1;
    }
    let outcome = NewtonOutcome {
        field: u,
        iterations,
        converged: sup <= config.newton_tol,
        residual_history: history,
        step_lengths: steps,
        min_cone_margin: res.min_cone_margin(),
        message,
    };
    Ok((outcome, log_g.exp()))
}

/// Numerical concavity check of `x ↦ f(x/|x|)^{1/(k-l)} |x|^{b/(k-l)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcavityCheck {
    pub samples: usize,
    /// Largest Hessian eigenvalue, divided by `φ/|x|²` at the sample.
    pub max_scaled_eigenvalue: f64,
    pub tolerance: f64,
    pub holds: bool,
}

/// Convexity diagnostics of a solved hypersurface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    /// Smallest principal curvature over the grid.
    pub min_curvature: f64,
    pub min_node: usize,
    pub max_abs_curvature: f64,
    /// `rank_histogram[r]` = number of nodes where the second fundamental
    /// form has rank `r` (eigenvalues below `1e-8 · max|κ|` count as zero).
    pub rank_histogram: Vec<usize>,
    pub full_rank: bool,
    pub positive_definite: bool,
    pub q_nonnegative: bool,
    /// Absent when `f` is only known at the nodes.
    pub concavity: Option<ConcavityCheck>,
    pub hypotheses_hold: bool,
}

/// Relative rank threshold of the certificate.
pub const RANK_TOL: f64 = 1e-8;

/// Minimum eigenvalues and rank profile of the second fundamental form, and
/// a check of the concavity hypothesis on a shell around the solution.
pub fn convexity_certificate(disc: &Discretization, u: &RadialField) -> CertificateReport {
    let grid = u.grid();
    let n = grid.dim();
    let mut per_node = Vec::with_capacity(grid.len());
    let mut max_abs: f64 = 0.0;
    for node in 0..grid.len() {
        let k = u.embed(node).principal_curvatures;
        max_abs = k.iter().fold(max_abs, |m, x| m.max(x.abs()));
        per_node.push(k);
    }
    let mut hist = vec![0; n + 1];
    let mut min_curvature = f64::INFINITY;
    let mut min_node = 0;
    for (node, k) in per_node.iter().enumerate() {
        let rank = k.iter().filter(|x| x.abs() > RANK_TOL * max_abs).count();
        hist[rank] += 1;
        if k[0] < min_curvature {
            min_curvature = k[0];
            min_node = node;
        }
    }
    let spec = disc.spec();
    let concavity = concavity_check(spec, u.min_rho(), u.max_rho(), grid);
    let q_nonnegative = spec.q >= 0.0;
    CertificateReport {
        min_curvature,
        min_node,
        max_abs_curvature: max_abs,
        full_rank: hist[n] == grid.len(),
        rank_histogram: hist,
        positive_definite: min_curvature > 0.0,
        q_nonnegative,
        hypotheses_hold: q_nonnegative && concavity.as_ref().map(|c| c.holds).unwrap_or(false),
        concavity,
    }
}

fn concavity_check(spec: &ProblemSpec, r_min: f64, r_max: f64, grid: &Arc<SphereGrid>) -> Option<ConcavityCheck> {
    if matches!(spec.f, crate::pde::RhsFunction::Tabulated { .. } | crate::pde::RhsFunction::Table { .. }) {
        return None;
    }
    let m = (spec.k - spec.l) as f64;
    let dim = spec.n + 1;
    let phi = |x: &[f64]| {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let y: Vec<f64> = x.iter().map(|v| v / r).collect();
        spec.f.eval(&y, 0).powf(1.0 / m) * r.powf(spec.b / m)
    };
    let stride = (grid.len() / 200).max(1);
    let radii = [r_min, 0.5 * (r_min + r_max), r_max];
    let tolerance = 1e-6;
    let mut worst = f64::NEG_INFINITY;
    let mut samples = 0;
    for node in (0..grid.len()).step_by(stride) {
        let y = grid.position(node);
        for &r in &radii {
            let x: Vec<f64> = y.iter().map(|c| c * r).collect();
            let h = 1e-3 * r;
            let f0 = phi(&x);
            let mut hess = nalgebra::DMatrix::zeros(dim, dim);
            for i in 0..dim {
                for j in i..dim {
                    let at = |si: f64, sj: f64| {
                        let mut z = x.clone();
                        z[i] += si * h;
                        z[j] += sj * h;
                        phi(&z)
                    };
                    let v = if i == j {
                        (at(1.0, 0.0) - 2.0 * f0 + at(-1.0, 0.0)) / (h * h)
                    } else {
                        (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h * h)
                    };
                    hess[(i, j)] = v;
                    hess[(j, i)] = v;
                }
            }
            let top = nalgebra::SymmetricEigen::new(hess)
                .eigenvalues
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            worst = worst.max(top * r * r / f0);
            samples += 1;
        }
    }
    Some(ConcavityCheck {
        samples,
        max_scaled_eigenvalue: worst,
        tolerance,
        holds: worst <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::RhsFunction;

    fn disc(name: &str, res: usize) -> Discretization {
        let spec = ProblemSpec::catalog(name).unwrap();
        let grid = Arc::new(SphereGrid::new(spec.n, res).unwrap());
        Discretization::new(spec, grid).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let mut c = SolverConfig::default();
        c.t_steps = vec![0.5, 0.4, 1.0];
        assert!(c.validate().is_err());
        let mut c = SolverConfig::default();
        c.eps_schedule = vec![0.1, 0.2];
        assert!(c.validate().is_err());
        let mut c = SolverConfig::default();
        c.damping = 1.0;
        assert!(c.validate().is_err());
        assert_eq!(uniform_steps(10).len(), 10);
    }

    #[test]
    fn continuation_rhs_endpoints() {
        let spec = ProblemSpec::catalog("sphere_harmonic").unwrap();
        let f = [0.5, 1.0, 2.0];
        assert!(continuation_rhs(&spec, &f, 0.0).iter().all(|v| (v - 12.0).abs() < 1e-12));
        let one = continuation_rhs(&spec, &f, 1.0);
        for (a, b) in one.iter().zip(&f) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn newton_fixed_point() {
        let d = disc("sphere_const", 8);
        let exact = RadialField::constant(d.grid().clone(), (12.0f64).ln());
        let out = newton_solve(&d, &exact, &SolverConfig::default()).unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 1);
    }

    #[test]
    fn newton_quadratic_from_scaled_radius() {
        let d = disc("sphere_const", 8);
        let start = RadialField::constant(d.grid().clone(), -(1.2f64 / 12.0).ln());
        let mut cfg = SolverConfig::default();
        cfg.jacobian = JacobianMode::Exact;
        let out = newton_solve(&d, &start, &cfg).unwrap();
        assert!(out.converged, "{}", out.message);
        assert!(out.iterations <= 6, "{:?}", out.residual_history);
        let h = &out.residual_history;
        for w in h.windows(2) {
            if w[0] > 1e-6 {
                assert!(w[1] / (w[0] * w[0]) < 10.0, "{h:?}");
            }
        }
    }

    #[test]
    fn extrapolation_is_exact_for_quadratics() {
        let g = |e: f64| 11.0 - 2.0 * e + 5.0 * e * e;
        let path: Vec<(f64, f64)> = [0.4, 0.2, 0.1, 0.05].iter().map(|&e| (e, g(e))).collect();
        assert!((extrapolate_gamma(&path) - 11.0).abs() < 1e-12);
        assert!((extrapolate_gamma(&path[..2]) - (g(0.2) - 0.2 * (g(0.4) - g(0.2)) / 0.2)).abs() < 1e-12);
        assert_eq!(extrapolate_gamma(&path[..1]), g(0.4));
        assert!(gamma_spread(&[(0.1, 1.0), (0.05, 1.0)]) == 0.0);
    }

    #[test]
    fn wrong_regime_rejected() {
        let d = disc("homogeneous_const", 8);
        assert!(matches!(continuation_solve(&d, &SolverConfig::default()), Err(SolverError::WrongRegime(_))));
        let d = disc("sphere_const", 8);
        assert!(matches!(homogeneous_solve(&d, &SolverConfig::default()), Err(SolverError::WrongRegime(_))));
    }

    #[test]
    fn eigen_newton_recovers_sphere_eigenvalue() {
        // ε = 0, f ≡ 1: any round sphere solves with γ = σ_2(Λ(I)) = 12
        let d = disc("homogeneous_const", 8);
        let u0 = RadialField::from_fn(d.grid().clone(), |y| 0.3 + 0.02 * y[0].cos()).unwrap();
        let (o, g) = eigen_newton(&d, &u0, 10.0, &SolverConfig::default()).unwrap();
        assert!(o.converged, "{}", o.message);
        assert!((g - 12.0).abs() < 1e-9, "{g}");
        let spread = o.field.max_u() - o.field.min_u();
        assert!(spread < 1e-9, "{spread}");
    }

    #[test]
    fn inadmissible_start_rejected() {
        let d = disc("sphere_const", 8);
        let bad = RadialField::from_fn(d.grid().clone(), |y| 3.0 * (4.0 * y[0]).sin()).unwrap();
        assert!(matches!(
            newton_solve(&d, &bad, &SolverConfig::default()),
            Err(SolverError::Inadmissible(_))
        ));
    }

    #[test]
    fn certificate_of_round_sphere() {
        let d = disc("sphere_const", 8);
        let u = RadialField::constant(d.grid().clone(), (12.0f64).ln());
        let cert = convexity_certificate(&d, &u);
        assert!((cert.min_curvature - 12.0).abs() < 1e-10);
        assert!(cert.full_rank && cert.positive_definite && cert.q_nonnegative);
        let c = cert.concavity.unwrap();
        // |x|^{-3/2} is not concave: the radial second derivative is positive
        assert!(!c.holds);
    }

    #[test]
    fn concavity_of_homogeneous_degree_one() {
        // f ≡ c, b = k - l gives φ = c^{1/m}|x| which is convex; b ∈ (0, m) gives
        // |x|^β with β ∈ (0,1): concave radially but convex tangentially
        let mut spec = ProblemSpec::catalog("surface_linear").unwrap();
        spec.f = RhsFunction::Constant { c: 1.0 };
        let grid = Arc::new(SphereGrid::new(2, 8).unwrap());
        let c = concavity_check(&spec, 0.5, 1.0, &grid).unwrap();
        assert!(c.samples > 0);
        assert!(!c.holds);
    }
}
