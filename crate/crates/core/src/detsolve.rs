//! The deterministic half of the problem: the control Riccati equation and
//! its affine companion, the filter error covariance, and the linear
//! equations that price the estimation error.
//!
//! Backward equations (terminal data at `T`):
//!
//! ```text
//! P' = -PA - AᵀP - Q + (PB + Sᵀ) R⁻¹ (BᵀP + S),        P(T) = G
//! φ' = -(A + BΘ)ᵀφ - Θᵀr - P a - q,                   φ(T) = g
//! Π' = -Π𝒜 - 𝒜ᵀΠ - Q,                                 Π(T) = G
//! π' = -𝒜ᵀπ - q,                                      π(T) = g
//! ```
//!
//! with `Θ = -R⁻¹(BᵀP + S)`. Forward equation (initial data at 0):
//!
//! ```text
//! Σ' = (A - CK⁻¹H)Σ + Σ(A - CK⁻¹H)ᵀ - ΣHᵀN⁻¹HΣ + DDᵀ,  Σ(0) = 0
//! ```
//!
//! with `𝒜 = A - (ΣHᵀ + CKᵀ)N⁻¹H` and `Δ = Σ(K⁻¹H)ᵀ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::{min_eigenvalue, solve, solve_vec};
use crate::model::{CoefficientSample, CostSample, ModelSpec};
use crate::ode::{
    integrate_matrix_ode, Direction, HermitePath, MatrixPath, TimeMatrix, VectorPath,
};

/// Every deterministic path the filter, the controller and the value
/// formula need, on one shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicSolution {
    pub grid: TimeGrid,
    /// `P`, n×n.
    pub control_riccati: MatrixPath,
    /// `Θ`, m×n.
    pub feedback_gain: MatrixPath,
    /// `φ`, n.
    pub control_offset: VectorPath,
    /// `Σ`, n×n.
    pub error_covariance: MatrixPath,
    /// `Δ`, n×d.
    pub error_loading: MatrixPath,
    /// `𝒜`, n×n.
    pub error_dynamics: MatrixPath,
    /// `Π`, n×n.
    pub error_riccati: MatrixPath,
    /// `π`, n.
    pub error_offset: VectorPath,
}

fn singular(what: &'static str, t: f64) -> Error {
    Error::Singular { what, t }
}

fn check_psd(path: &MatrixPath, what: &'static str, model: &ModelSpec) -> Result<()> {
    for (node, v) in path.values.iter().enumerate() {
        let min = min_eigenvalue(v);
        if min < model.tol.psd_floor(v) {
            return Err(Error::PsdViolation {
                what,
                node,
                min_eigenvalue: min,
            });
        }
    }
    Ok(())
}

/// Right-hand side of the control Riccati equation, `P' = f(t, P)`.
pub fn control_riccati_rhs(
    model: &ModelSpec,
) -> impl Fn(f64, &DMatrix<f64>) -> Result<DMatrix<f64>> + '_ {
    move |t, p| {
        let c = model.coefficients_at(t)?;
        let w = model.cost_at(t)?;
        let pb_s = p * &c.input + w.cross.transpose();
        let rinv = solve(&w.control, &pb_s.transpose()).ok_or(singular("R", t))?;
        Ok(-(p * &c.dynamics) - c.dynamics.transpose() * p - &w.state + pb_s * rinv)
    }
}

/// Backward RK4 solve of the control Riccati equation with `P(T) = G`.
pub fn solve_control_riccati(model: &ModelSpec, grid: &TimeGrid) -> Result<MatrixPath> {
    let path = integrate_matrix_ode(
        control_riccati_rhs(model),
        &model.cost.terminal,
        grid,
        Direction::Backward,
        true,
    )?;
    check_psd(&path, "P", model)?;
    Ok(path)
}

fn gain_from(
    c: &CoefficientSample,
    w: &CostSample,
    p: &DMatrix<f64>,
    t: f64,
) -> Result<DMatrix<f64>> {
    let rhs = c.input.transpose() * p + &w.cross;
    solve(&w.control, &rhs).map(|x| -x).ok_or(singular("R", t))
}

/// `Θ(t) = -R(t)⁻¹ (B(t)ᵀ P(t) + S(t))` at every node of `riccati`.
pub fn feedback_gain(riccati: &MatrixPath, model: &ModelSpec) -> Result<MatrixPath> {
    let grid = riccati.grid;
    let values = grid
        .nodes()
        .zip(&riccati.values)
        .map(|(t, p)| gain_from(&model.coefficients_at(t)?, &model.cost_at(t)?, p, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(MatrixPath { grid, values })
}

/// Backward solve of the affine equation for `φ`, `φ(T) = g`.
///
/// `riccati` must be the output of [`solve_control_riccati`] on the same
/// grid; RK4 stages between nodes read `P` from its Hermite interpolant and
/// recompute `Θ` there.
pub fn solve_control_offset(model: &ModelSpec, riccati: &MatrixPath) -> Result<VectorPath> {
    let grid = riccati.grid;
    let p_of_t = HermitePath::from_rhs(riccati.clone(), control_riccati_rhs(model))?;
    let rhs = |t: f64, phi: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let c = model.coefficients_at(t)?;
        let w = model.cost_at(t)?;
        let p = p_of_t.at(t)?;
        let theta = gain_from(&c, &w, &p, t)?;
        let closed = &c.dynamics + &c.input * &theta;
        let forcing = theta.transpose() * &w.control_linear + &p * &c.drift + &w.state_linear;
        Ok(-(closed.transpose() * phi)
            - DMatrix::from_column_slice(forcing.len(), 1, forcing.as_slice()))
    };
    let boundary =
        DMatrix::from_column_slice(model.dims.n, 1, model.cost.terminal_linear.as_slice());
    Ok(integrate_matrix_ode(rhs, &boundary, &grid, Direction::Backward, false)?.into_vector_path())
}

/// Right-hand side of the forward error-covariance Riccati equation.
pub fn error_covariance_rhs(
    model: &ModelSpec,
) -> impl Fn(f64, &DMatrix<f64>) -> Result<DMatrix<f64>> + '_ {
    move |t, sigma| {
        let c = model.coefficients_at(t)?;
        let kinv_h = solve(&c.observation_noise, &c.observation).ok_or(singular("K", t))?;
        let ninv_h = solve(&c.observation_noise_cov(), &c.observation).ok_or(singular("N", t))?;
        let a_tilde = &c.dynamics - &c.shared_noise * kinv_h;
        let info = c.observation.transpose() * ninv_h;
        Ok(
            &a_tilde * sigma + sigma * a_tilde.transpose() - sigma * info * sigma
                + c.state_noise_cov(),
        )
    }
}

/// Forward RK4 solve of the error-covariance equation with `Σ(0) = 0`.
pub fn solve_error_covariance(model: &ModelSpec, grid: &TimeGrid) -> Result<MatrixPath> {
    let n = model.dims.n;
    let path = integrate_matrix_ode(
        error_covariance_rhs(model),
        &DMatrix::zeros(n, n),
        grid,
        Direction::Forward,
        true,
    )?;
    check_psd(&path, "Sigma", model)?;
    Ok(path)
}

/// Filter gain `(ΣHᵀ + CKᵀ) N⁻¹`, the weight on innovation increments.
pub fn filter_gain(c: &CoefficientSample, sigma: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let cross =
        sigma * c.observation.transpose() + &c.shared_noise * c.observation_noise.transpose();
    // N is symmetric, so (X N⁻¹)ᵀ = N⁻¹ Xᵀ
    solve(&c.observation_noise_cov(), &cross.transpose())
        .map(|x| x.transpose())
        .ok_or(singular("N", t))
}

/// `Δ = Σ (K⁻¹H)ᵀ` at every node; column `i` is `Δᵢ`.
pub fn error_loading(sigma: &MatrixPath, model: &ModelSpec) -> Result<MatrixPath> {
    let grid = sigma.grid;
    let values = grid
        .nodes()
        .zip(&sigma.values)
        .map(|(t, s)| {
            let c = model.coefficients_at(t)?;
            let kinv_h = solve(&c.observation_noise, &c.observation).ok_or(singular("K", t))?;
            Ok(s * kinv_h.transpose())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MatrixPath { grid, values })
}

fn error_dynamics_at(model: &ModelSpec, sigma: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let c = model.coefficients_at(t)?;
    let gain = filter_gain(&c, sigma, t)?;
    Ok(&c.dynamics - gain * &c.observation)
}

/// `𝒜 = A - (ΣHᵀ + CKᵀ) N⁻¹ H` at every node of `sigma`.
pub fn error_dynamics(model: &ModelSpec, sigma: &MatrixPath) -> Result<MatrixPath> {
    let grid = sigma.grid;
    let values = grid
        .nodes()
        .zip(&sigma.values)
        .map(|(t, s)| error_dynamics_at(model, s, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(MatrixPath { grid, values })
}

/// `𝒜(t)` evaluable between nodes, through the Hermite interpolant of `Σ`.
pub struct ErrorDynamics<'a> {
    model: &'a ModelSpec,
    sigma: HermitePath,
}

impl<'a> ErrorDynamics<'a> {
    pub fn new(model: &'a ModelSpec, sigma: &MatrixPath) -> Result<Self> {
        let sigma = HermitePath::from_rhs(sigma.clone(), error_covariance_rhs(model))?;
        Ok(Self { model, sigma })
    }
}

impl TimeMatrix for ErrorDynamics<'_> {
    fn at(&self, t: f64) -> Result<DMatrix<f64>> {
        error_dynamics_at(self.model, &self.sigma.at(t)?, t)
    }
}

/// Backward solve of `Π' = -Π𝒜 - 𝒜ᵀΠ - Q`, `Π(T) = G`.
pub fn solve_error_riccati(
    model: &ModelSpec,
    curly_a: &impl TimeMatrix,
    grid: &TimeGrid,
) -> Result<MatrixPath> {
    let rhs = |t: f64, pi: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let a = curly_a.at(t)?;
        let q = model.cost_at(t)?.state;
        Ok(-(pi * &a) - a.transpose() * pi - q)
    };
    let path = integrate_matrix_ode(rhs, &model.cost.terminal, grid, Direction::Backward, true)?;
    check_psd(&path, "Pi", model)?;
    Ok(path)
}

/// Backward solve of `π' = -𝒜ᵀπ - q`, `π(T) = g`.
pub fn solve_error_offset(
    model: &ModelSpec,
    curly_a: &impl TimeMatrix,
    grid: &TimeGrid,
) -> Result<VectorPath> {
    let rhs = |t: f64, v: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let a = curly_a.at(t)?;
        let q = model.cost_at(t)?.state_linear;
        Ok(-(a.transpose() * v) - DMatrix::from_column_slice(q.len(), 1, q.as_slice()))
    };
    let boundary =
        DMatrix::from_column_slice(model.dims.n, 1, model.cost.terminal_linear.as_slice());
    Ok(integrate_matrix_ode(rhs, &boundary, grid, Direction::Backward, false)?.into_vector_path())
}

/// Solves everything in dependency order. The control chain `P → Θ → φ`
/// and the filter chain `Σ → Δ, 𝒜 → Π, π` run concurrently.
pub fn solve_all(model: &ModelSpec, grid: &TimeGrid) -> Result<DeterministicSolution> {
    let (control, filter) = rayon::join(
        || -> Result<_> {
            let p = solve_control_riccati(model, grid)?;
            let theta = feedback_gain(&p, model)?;
            let phi = solve_control_offset(model, &p)?;
            Ok((p, theta, phi))
        },
        || -> Result<_> {
            let sigma = solve_error_covariance(model, grid)?;
            let delta = error_loading(&sigma, model)?;
            let curly = error_dynamics(model, &sigma)?;
            let curly_fn = ErrorDynamics::new(model, &sigma)?;
            let pi_mat = solve_error_riccati(model, &curly_fn, grid)?;
            let pi_vec = solve_error_offset(model, &curly_fn, grid)?;
            Ok((sigma, delta, curly, pi_mat, pi_vec))
        },
    );
    let (p, theta, phi) = control?;
    let (sigma, delta, curly, pi_mat, pi_vec) = filter?;
    Ok(DeterministicSolution {
        grid: *grid,
        control_riccati: p,
        feedback_gain: theta,
        control_offset: phi,
        error_covariance: sigma,
        error_loading: delta,
        error_dynamics: curly,
        error_riccati: pi_mat,
        error_offset: pi_vec,
    })
}

impl DeterministicSolution {
    /// Feedforward term `-R⁻¹(Bᵀφ + r)` of the optimal control at node `i`.
    pub fn feedforward(&self, model: &ModelSpec, i: usize) -> Result<DVector<f64>> {
        let t = self.grid.node(i);
        let c = model.coefficients_at(t)?;
        let w = model.cost_at(t)?;
        let rhs = c.input.transpose() * &self.control_offset.values[i] + &w.control_linear;
        solve_vec(&w.control, &rhs)
            .map(|x| -x)
            .ok_or(singular("R", t))
    }
}
