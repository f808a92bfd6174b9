//! Report and field files: `report.json`, `solution.csv`, `trace.csv`,
//! `audits.json`. Floats are written with Rust's shortest round-trip
//! formatting, so reading a file back reproduces the exact values.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{RadialField, SphereGrid};
use crate::pde::{Discretization, PdeError};
use crate::solver::{SolveReport, TraceEntry};
use crate::verify::AuditSummary;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("refusing to write a field that leaves the cone: {0}")]
    Inadmissible(PdeError),
}

/// Shortest round-trip text; exponent form for very small or large values.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// One row per node: angular coordinates, `u`, `ρ`, the principal
/// curvatures and the cone margin `min_{j<=k} σ_j(Λ)`.
pub fn write_solution_csv(path: &Path, disc: &Discretization, field: &RadialField) -> Result<(), IoError> {
    let res = disc.evaluate(field).map_err(IoError::Inadmissible)?;
    if let Some(e) = res.cone_error() {
        return Err(IoError::Inadmissible(e));
    }
    let grid = field.grid();
    let n = grid.dim();
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["node".to_string()];
    header.extend((0..n).map(|c| format!("x{c}")));
    header.extend(["u".to_string(), "rho".to_string()]);
    header.extend((0..n).map(|c| format!("kappa{c}")));
    header.push("cone_margin".into());
    w.write_record(&header).map_err(csv_err(path))?;
    for node in 0..grid.len() {
        let u = field.values()[node];
        let mut row = vec![node.to_string()];
        row.extend(grid.coords(node).iter().copied().map(num));
        row.push(num(u));
        row.push(num((-u).exp()));
        row.extend(field.point(node).principal_curvatures().iter().copied().map(num));
        row.push(num(res.cone_margin[node]));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a field written by [`write_solution_csv`] (or any CSV with a `u`
/// column and `x*` coordinate columns) onto `grid`.
pub fn read_field_csv(path: &Path, grid: Arc<SphereGrid>) -> Result<RadialField, IoError> {
    let format = |message: String| IoError::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = reader.headers().map_err(csv_err(path))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let u_col = col("u").ok_or_else(|| format("missing column `u`".into()))?;
    let x_cols: Vec<Option<usize>> = (0..grid.dim()).map(|c| col(&format!("x{c}"))).collect();
    let mut values = Vec::with_capacity(grid.len());
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        let parse = |c: usize| -> Result<f64, IoError> {
            record
                .get(c)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|e| format(format!("row {}: {e}", row + 1)))
        };
        if row < grid.len() {
            for (c, x) in x_cols.iter().enumerate() {
                if let Some(x) = x {
                    let got = parse(*x)?;
                    if (got - grid.coords(row)[c]).abs() > 1e-9 {
                        return Err(format(format!("row {}: coordinates do not match the grid", row + 1)));
                    }
                }
            }
        }
        values.push(parse(u_col)?);
    }
    if values.len() != grid.len() {
        return Err(format(format!("{} rows for a grid of {} nodes", values.len(), grid.len())));
    }
    RadialField::new(grid, values).map_err(|e| format(e.to_string()))
}

pub fn write_trace_csv(path: &Path, trace: &[TraceEntry]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record([
        "kind",
        "parameter",
        "newton_iterations",
        "residual_initial",
        "residual_final",
        "min_rho",
        "max_rho",
        "cone_margin",
        "min_curvature",
        "min_step_length",
        "gamma",
    ])
    .map_err(csv_err(path))?;
    for e in trace {
        w.write_record([
            e.kind.clone(),
            num(e.parameter),
            e.newton_iterations.to_string(),
            num(e.residual_initial),
            num(e.residual_final),
            num(e.min_rho),
            num(e.max_rho),
            num(e.cone_margin),
            num(e.min_curvature),
            num(e.min_step_length),
            e.gamma.map(num).unwrap_or_default(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes all four output files into `dir`, creating it if needed.
///
/// Nothing is written unless every node of the final field is admissible.
pub fn write_outputs(dir: &Path, disc: &Discretization, report: &SolveReport, audits: &AuditSummary) -> Result<(), IoError> {
    let res = disc.evaluate(&report.field).map_err(IoError::Inadmissible)?;
    if let Some(e) = res.cone_error() {
        return Err(IoError::Inadmissible(e));
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_solution_csv(&dir.join("solution.csv"), disc, &report.field)?;
    write_trace_csv(&dir.join("trace.csv"), &report.trace)?;
    write_json(&dir.join("report.json"), &report.summary())?;
    write_json(&dir.join("audits.json"), audits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::ProblemSpec;

    #[test]
    fn field_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Arc::new(SphereGrid::new(2, 8).unwrap());
        let spec = ProblemSpec::catalog("surface_harmonic").unwrap();
        let disc = Discretization::new(spec, grid.clone()).unwrap();
        let field = RadialField::from_fn(grid.clone(), |x| 1.0 + 0.1 * x[0].cos() + 1.0 / 3.0).unwrap();
        let path = dir.path().join("solution.csv");
        write_solution_csv(&path, &disc, &field).unwrap();
        let back = read_field_csv(&path, grid.clone()).unwrap();
        assert_eq!(back.values(), field.values());
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("node,x0,x1,u,rho,kappa0,kappa1,cone_margin\n"));
        assert_eq!(text.lines().count(), grid.len() + 1);
    }

    #[test]
    fn wrong_grid_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Arc::new(SphereGrid::new(2, 8).unwrap());
        let spec = ProblemSpec::catalog("surface_harmonic").unwrap();
        let disc = Discretization::new(spec, grid.clone()).unwrap();
        let path = dir.path().join("s.csv");
        write_solution_csv(&path, &disc, &RadialField::constant(grid, 0.5)).unwrap();
        let other = Arc::new(SphereGrid::new(2, 10).unwrap());
        assert!(read_field_csv(&path, other).is_err());
    }

    #[test]
    fn inadmissible_field_is_not_written() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Arc::new(SphereGrid::new(2, 8).unwrap());
        let spec = ProblemSpec::catalog("surface_harmonic").unwrap();
        let disc = Discretization::new(spec, grid.clone()).unwrap();
        // a strongly oscillating radius makes the surface non-convex somewhere
        let field = RadialField::from_fn(grid, |x| 0.8 * (5.0 * x[1]).cos()).unwrap();
        let path = dir.path().join("s.csv");
        assert!(matches!(write_solution_csv(&path, &disc, &field), Err(IoError::Inadmissible(_))));
        assert!(!path.exists());
    }

    #[test]
    fn trace_has_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let e = TraceEntry {
            kind: "t".into(),
            parameter: 0.1,
            newton_iterations: 3,
            residual_initial: 1.0,
            residual_final: 1e-11,
            min_rho: 0.5,
            max_rho: 0.6,
            cone_margin: 1.0,
            min_curvature: 1.5,
            min_step_length: 1.0,
            gamma: None,
        };
        write_trace_csv(&path, &[e]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "t,0.1,3,1.0,1e-11,0.5,0.6,1.0,1.5,1.0,");
    }
}
