//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use pkconvex::{Discretization, ProblemSpec, RadialField, SphereGrid, SymMatrix};

/// A catalog problem on a grid with a smooth, admissible non-round field.
pub fn problem(name: &str, res: usize) -> (Discretization, RadialField) {
    let spec = ProblemSpec::catalog(name).expect("catalog problem");
    let grid = Arc::new(SphereGrid::new(spec.n, res).expect("grid"));
    let field = RadialField::from_fn(grid.clone(), |y| 2.4 + 0.05 * y[0] - 0.03 * y[1] * y[1]).expect("field");
    (Discretization::new(spec, grid).expect("discretization"), field)
}

/// A positive-definite symmetric matrix with spread eigenvalues.
pub fn sample_matrix(n: usize) -> SymMatrix {
    SymMatrix::from_fn(n, |i, j| if i == j { 1.0 + 0.2 * i as f64 } else { 0.05 / (1 + i + j) as f64 })
}
