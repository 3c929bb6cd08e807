//! Fixed-step classical Runge–Kutta for matrix-valued ODEs on a [`TimeGrid`],
//! and the node-sampled paths it produces.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::{all_finite_mat, symmetrize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Boundary value at `t = 0`, march towards `T`.
    Forward,
    /// Boundary value at `t = T`, march towards `0`.
    Backward,
}

/// One p×q matrix per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPath {
    pub grid: TimeGrid,
    pub values: Vec<DMatrix<f64>>,
}

/// One p-vector per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorPath {
    pub grid: TimeGrid,
    pub values: Vec<DVector<f64>>,
}

impl MatrixPath {
    pub fn from_fn(grid: TimeGrid, f: impl FnMut(f64) -> DMatrix<f64>) -> Self {
        Self {
            values: grid.nodes().map(f).collect(),
            grid,
        }
    }

    pub fn constant(grid: TimeGrid, value: DMatrix<f64>) -> Self {
        Self::from_fn(grid, |_| value.clone())
    }

    pub fn at_node(&self, i: usize) -> &DMatrix<f64> {
        &self.values[i]
    }

    pub fn first(&self) -> &DMatrix<f64> {
        &self.values[0]
    }

    pub fn last(&self) -> &DMatrix<f64> {
        &self.values[self.grid.steps()]
    }

    /// Largest entrywise distance to `other` over all nodes.
    pub fn max_abs_diff(&self, other: &MatrixPath) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
    }

    /// Piecewise-linear value at `t`.
    pub fn interpolate(&self, t: f64) -> Result<DMatrix<f64>> {
        let (i, w) = self.grid.locate(t)?;
        Ok(crate::linalg::lerp_mat(
            &self.values[i],
            &self.values[(i + 1).min(self.grid.steps())],
            w,
        ))
    }

    /// Turns an n×1 matrix path into a vector path.
    pub fn into_vector_path(self) -> VectorPath {
        VectorPath {
            grid: self.grid,
            values: self
                .values
                .into_iter()
                .map(|m| DVector::from_column_slice(m.as_slice()))
                .collect(),
        }
    }
}

impl VectorPath {
    pub fn from_fn(grid: TimeGrid, f: impl FnMut(f64) -> DVector<f64>) -> Self {
        Self {
            values: grid.nodes().map(f).collect(),
            grid,
        }
    }

    pub fn constant(grid: TimeGrid, value: DVector<f64>) -> Self {
        Self::from_fn(grid, |_| value.clone())
    }

    pub fn at_node(&self, i: usize) -> &DVector<f64> {
        &self.values[i]
    }

    pub fn first(&self) -> &DVector<f64> {
        &self.values[0]
    }

    pub fn last(&self) -> &DVector<f64> {
        &self.values[self.grid.steps()]
    }

    /// Piecewise-linear value at `t`.
    pub fn interpolate(&self, t: f64) -> Result<DVector<f64>> {
        let (i, w) = self.grid.locate(t)?;
        Ok(crate::linalg::lerp_vec(
            &self.values[i],
            &self.values[(i + 1).min(self.grid.steps())],
            w,
        ))
    }

    /// Linear interpolation onto the nodes of another grid with the same
    /// horizon.
    pub fn resample(&self, grid: TimeGrid) -> Result<VectorPath> {
        if grid.horizon() != self.grid.horizon() {
            return Err(Error::InvalidArgument(format!(
                "cannot resample a path on [0, {}] onto [0, {}]",
                self.grid.horizon(),
                grid.horizon()
            )));
        }
        let values = grid
            .nodes()
            .map(|t| self.interpolate(t))
            .collect::<Result<_>>()?;
        Ok(VectorPath { grid, values })
    }
}

/// A matrix-valued function of time that RK4 stages can evaluate anywhere
/// on `[0, T]`.
pub trait TimeMatrix {
    fn at(&self, t: f64) -> Result<DMatrix<f64>>;
}

impl<F> TimeMatrix for F
where
    F: Fn(f64) -> DMatrix<f64>,
{
    fn at(&self, t: f64) -> Result<DMatrix<f64>> {
        Ok(self(t))
    }
}

/// Cubic Hermite interpolant through node values and node derivatives.
///
/// Used to feed one ODE solution into the stages of another without
/// dropping below fourth order.
#[derive(Debug, Clone)]
pub struct HermitePath {
    pub path: MatrixPath,
    pub derivatives: Vec<DMatrix<f64>>,
}

impl HermitePath {
    /// Builds the interpolant, evaluating `rhs` at every node for the
    /// derivatives.
    pub fn from_rhs<F>(path: MatrixPath, rhs: F) -> Result<Self>
    where
        F: Fn(f64, &DMatrix<f64>) -> Result<DMatrix<f64>>,
    {
        let derivatives = path
            .grid
            .nodes()
            .zip(&path.values)
            .map(|(t, y)| rhs(t, y))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { path, derivatives })
    }
}

impl TimeMatrix for HermitePath {
    fn at(&self, t: f64) -> Result<DMatrix<f64>> {
        let grid = &self.path.grid;
        let (i, s) = grid.locate(t)?;
        if s == 0.0 {
            return Ok(self.path.values[i].clone());
        }
        let h = grid.node(i + 1) - grid.node(i);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        Ok(&self.path.values[i] * h00
            + &self.derivatives[i] * (h10 * h)
            + &self.path.values[i + 1] * h01
            + &self.derivatives[i + 1] * (h11 * h))
    }
}

/// Integrates `y' = rhs(t, y)` with classical RK4 at fixed step `T/steps`.
///
/// The boundary value is stored verbatim at its endpoint node. With
/// `symmetric = true` every new node is replaced by its symmetric part
/// before the next step is taken.
pub fn integrate_matrix_ode<F>(
    rhs: F,
    boundary: &DMatrix<f64>,
    grid: &TimeGrid,
    direction: Direction,
    symmetric: bool,
) -> Result<MatrixPath>
where
    F: Fn(f64, &DMatrix<f64>) -> Result<DMatrix<f64>>,
{
    let steps = grid.steps();
    let start = match direction {
        Direction::Forward => 0,
        Direction::Backward => steps,
    };
    if !all_finite_mat(boundary) {
        return Err(Error::NonFinite { node: start });
    }

    let mut values: Vec<Option<DMatrix<f64>>> = vec![None; steps + 1];
    values[start] = Some(boundary.clone());
    let mut y = boundary.clone();

    for j in 0..steps {
        let (from, to) = match direction {
            Direction::Forward => (j, j + 1),
            Direction::Backward => (steps - j, steps - j - 1),
        };
        let t0 = grid.node(from);
        let t1 = grid.node(to);
        let h = t1 - t0;
        let tm = t0 + 0.5 * h;

        let k1 = rhs(t0, &y)?;
        let k2 = rhs(tm, &(&y + &k1 * (0.5 * h)))?;
        let k3 = rhs(tm, &(&y + &k2 * (0.5 * h)))?;
        let k4 = rhs(t1, &(&y + &k3 * h))?;
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if symmetric {
            symmetrize(&mut y);
        }
        if !all_finite_mat(&y) {
            return Err(Error::NonFinite { node: to });
        }
        values[to] = Some(y.clone());
    }

    Ok(MatrixPath {
        grid: *grid,
        values: values
            .into_iter()
            .map(|v| v.expect("every node visited"))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    #[test]
    fn zero_dynamics_keep_boundary() {
        let grid = TimeGrid::new(1.0, 7).unwrap();
        let id = DMatrix::<f64>::identity(2, 2);
        for dir in [Direction::Forward, Direction::Backward] {
            let path = integrate_matrix_ode(
                |_, y| Ok(DMatrix::zeros(y.nrows(), y.ncols())),
                &id,
                &grid,
                dir,
                false,
            )
            .unwrap();
            assert!(path.values.iter().all(|v| *v == id));
        }
    }

    #[test]
    fn exponential_growth_forward() {
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let path = integrate_matrix_ode(
            |_, y| Ok(y.clone()),
            &scalar(1.0),
            &grid,
            Direction::Forward,
            false,
        )
        .unwrap();
        assert!((path.last()[(0, 0)] - std::f64::consts::E).abs() < 1e-8);
    }

    #[test]
    fn quadratic_growth_backward() {
        // y' = y², y(1) = 1  =>  y(t) = 1 / (2 - t)
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let path = integrate_matrix_ode(
            |_, y| Ok(y.component_mul(y)),
            &scalar(1.0),
            &grid,
            Direction::Backward,
            false,
        )
        .unwrap();
        assert_eq!(path.last()[(0, 0)], 1.0);
        assert!((path.first()[(0, 0)] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn blow_up_reports_node() {
        // y' = y², y(0) = 1 blows up at t = 1
        let grid = TimeGrid::new(2.0, 20).unwrap();
        let err = integrate_matrix_ode(
            |_, y| Ok(y.component_mul(y)),
            &scalar(1.0),
            &grid,
            Direction::Forward,
            false,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let grid = TimeGrid::new(1.0, 3).unwrap();
        let f = |t: f64| scalar(t * t * t - 2.0 * t);
        let path = MatrixPath::from_fn(grid, f);
        let herm = HermitePath::from_rhs(path, |t, _| Ok(scalar(3.0 * t * t - 2.0))).unwrap();
        for t in [0.0, 0.1, 0.5, 0.9, 1.0] {
            assert!((herm.at(t).unwrap()[(0, 0)] - f(t)[(0, 0)]).abs() < 1e-14);
        }
    }
}
