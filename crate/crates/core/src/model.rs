//! Problem data: state/observation coefficients, quadratic cost weights,
//! dimensions and horizon, plus the standing-assumption checks.
//!
//! Every time-varying coefficient is stored as a table of samples on a
//! uniform grid over `[0, T]` and read back by piecewise-linear
//! interpolation. A constant coefficient is a two-node table.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::{
    all_finite_mat, all_finite_vec, asymmetry, condition_number, lerp_mat, lerp_vec,
    min_eigenvalue, solve,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dimensions {
    /// State.
    pub n: usize,
    /// Control.
    pub m: usize,
    /// Observation, and the Brownian motion shared by state and observation.
    pub d: usize,
    /// Brownian motion driving the state only.
    pub k: usize,
}

impl Dimensions {
    pub fn new(n: usize, m: usize, d: usize, k: usize) -> Result<Self> {
        let dims = Self { n, m, d, k };
        dims.check()?;
        Ok(dims)
    }

    pub fn scalar() -> Self {
        Self {
            n: 1,
            m: 1,
            d: 1,
            k: 1,
        }
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.d == 0 || self.k == 0 {
            return Err(Error::InvalidArgument(format!(
                "all dimensions must be positive, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Tolerances used by [`validate`] and by the PSD checks of the solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceConfig {
    /// Relative eigenvalue floor: a matrix `M` counts as PSD when
    /// `λ_min(M) >= -psd_tol * (1 + |M|)`.
    pub psd_tol: f64,
    /// Absolute bound on `|M - Mᵀ|` for matrices that must be symmetric.
    pub sym_tol: f64,
    /// Largest admissible condition number of `K(t)`.
    pub k_cond_max: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            psd_tol: 1e-9,
            sym_tol: 1e-12,
            k_cond_max: 1e8,
        }
    }
}

impl ToleranceConfig {
    pub(crate) fn psd_floor(&self, m: &DMatrix<f64>) -> f64 {
        -self.psd_tol * (1.0 + m.norm())
    }
}

/// State and observation coefficients sampled at the nodes of `grid`.
///
/// ```text
/// dX = (A X + B u + a) dt + C dW + D dW'
/// dY = (H X + h) dt + K dW
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    pub grid: TimeGrid,
    /// `A`, n×n.
    pub dynamics: Vec<DMatrix<f64>>,
    /// `B`, n×m.
    pub input: Vec<DMatrix<f64>>,
    /// `a`, n.
    pub drift: Vec<DVector<f64>>,
    /// `C`, n×d.
    pub shared_noise: Vec<DMatrix<f64>>,
    /// `D`, n×k.
    pub state_noise: Vec<DMatrix<f64>>,
    /// `H`, d×n.
    pub observation: Vec<DMatrix<f64>>,
    /// `h`, d.
    pub observation_drift: Vec<DVector<f64>>,
    /// `K`, d×d.
    pub observation_noise: Vec<DMatrix<f64>>,
}

/// All coefficients at a single time.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSample {
    pub dynamics: DMatrix<f64>,
    pub input: DMatrix<f64>,
    pub drift: DVector<f64>,
    pub shared_noise: DMatrix<f64>,
    pub state_noise: DMatrix<f64>,
    pub observation: DMatrix<f64>,
    pub observation_drift: DVector<f64>,
    pub observation_noise: DMatrix<f64>,
}

impl CoefficientSample {
    /// `M = D Dᵀ`.
    pub fn state_noise_cov(&self) -> DMatrix<f64> {
        &self.state_noise * self.state_noise.transpose()
    }

    /// `N = K Kᵀ`.
    pub fn observation_noise_cov(&self) -> DMatrix<f64> {
        &self.observation_noise * self.observation_noise.transpose()
    }
}

fn interp_mats(values: &[DMatrix<f64>], i: usize, w: f64) -> DMatrix<f64> {
    if w == 0.0 {
        values[i].clone()
    } else {
        lerp_mat(&values[i], &values[i + 1], w)
    }
}

fn interp_vecs(values: &[DVector<f64>], i: usize, w: f64) -> DVector<f64> {
    if w == 0.0 {
        values[i].clone()
    } else {
        lerp_vec(&values[i], &values[i + 1], w)
    }
}

impl CoefficientTable {
    /// Coefficients at `t` by linear interpolation between the bracketing
    /// nodes. Exact at nodes.
    pub fn sample(&self, t: f64) -> Result<CoefficientSample> {
        let (i, w) = self.grid.locate(t)?;
        Ok(CoefficientSample {
            dynamics: interp_mats(&self.dynamics, i, w),
            input: interp_mats(&self.input, i, w),
            drift: interp_vecs(&self.drift, i, w),
            shared_noise: interp_mats(&self.shared_noise, i, w),
            state_noise: interp_mats(&self.state_noise, i, w),
            observation: interp_mats(&self.observation, i, w),
            observation_drift: interp_vecs(&self.observation_drift, i, w),
            observation_noise: interp_mats(&self.observation_noise, i, w),
        })
    }

    /// Node-sampled table holding `sample` at every node.
    pub fn constant(horizon: f64, sample: CoefficientSample) -> Result<Self> {
        let grid = TimeGrid::new(horizon, 1)?;
        let two = |m: &DMatrix<f64>| vec![m.clone(), m.clone()];
        let two_v = |v: &DVector<f64>| vec![v.clone(), v.clone()];
        Ok(Self {
            grid,
            dynamics: two(&sample.dynamics),
            input: two(&sample.input),
            drift: two_v(&sample.drift),
            shared_noise: two(&sample.shared_noise),
            state_noise: two(&sample.state_noise),
            observation: two(&sample.observation),
            observation_drift: two_v(&sample.observation_drift),
            observation_noise: two(&sample.observation_noise),
        })
    }

    fn check_shapes(&self, dims: &Dimensions) -> Result<()> {
        let len = self.grid.len();
        let Dimensions { n, m, d, k } = *dims;
        check_mats("A", &self.dynamics, len, (n, n))?;
        check_mats("B", &self.input, len, (n, m))?;
        check_vecs("a", &self.drift, len, n)?;
        check_mats("C", &self.shared_noise, len, (n, d))?;
        check_mats("D", &self.state_noise, len, (n, k))?;
        check_mats("H", &self.observation, len, (d, n))?;
        check_vecs("h", &self.observation_drift, len, d)?;
        check_mats("K", &self.observation_noise, len, (d, d))?;
        Ok(())
    }

    fn first_non_finite(&self) -> Option<usize> {
        (0..self.grid.len()).find(|&i| {
            ![
                &self.dynamics[i],
                &self.input[i],
                &self.shared_noise[i],
                &self.state_noise[i],
                &self.observation[i],
                &self.observation_noise[i],
            ]
            .into_iter()
            .all(all_finite_mat)
                || !all_finite_vec(&self.drift[i])
                || !all_finite_vec(&self.observation_drift[i])
        })
    }
}

/// Quadratic cost
///
/// ```text
/// E{ <G X(T), X(T)> + 2<g, X(T)>
///    + ∫ <Q X, X> + 2<S X, u> + <R u, u> + 2<q, X> + 2<r, u> dt }
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    /// `G`, n×n.
    pub terminal: DMatrix<f64>,
    /// `g`, n.
    pub terminal_linear: DVector<f64>,
    pub grid: TimeGrid,
    /// `Q`, n×n.
    pub state: Vec<DMatrix<f64>>,
    /// `S`, m×n.
    pub cross: Vec<DMatrix<f64>>,
    /// `R`, m×m.
    pub control: Vec<DMatrix<f64>>,
    /// `q`, n.
    pub state_linear: Vec<DVector<f64>>,
    /// `r`, m.
    pub control_linear: Vec<DVector<f64>>,
    /// Uniform lower bound required of `R(t)`.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostSample {
    pub state: DMatrix<f64>,
    pub cross: DMatrix<f64>,
    pub control: DMatrix<f64>,
    pub state_linear: DVector<f64>,
    pub control_linear: DVector<f64>,
}

impl CostWeights {
    pub fn sample(&self, t: f64) -> Result<CostSample> {
        let (i, w) = self.grid.locate(t)?;
        Ok(CostSample {
            state: interp_mats(&self.state, i, w),
            cross: interp_mats(&self.cross, i, w),
            control: interp_mats(&self.control, i, w),
            state_linear: interp_vecs(&self.state_linear, i, w),
            control_linear: interp_vecs(&self.control_linear, i, w),
        })
    }

    pub fn constant(
        horizon: f64,
        terminal: DMatrix<f64>,
        terminal_linear: DVector<f64>,
        sample: CostSample,
        delta: f64,
    ) -> Result<Self> {
        let grid = TimeGrid::new(horizon, 1)?;
        Ok(Self {
            terminal,
            terminal_linear,
            grid,
            state: vec![sample.state.clone(), sample.state],
            cross: vec![sample.cross.clone(), sample.cross],
            control: vec![sample.control.clone(), sample.control],
            state_linear: vec![sample.state_linear.clone(), sample.state_linear],
            control_linear: vec![sample.control_linear.clone(), sample.control_linear],
            delta,
        })
    }

    fn check_shapes(&self, dims: &Dimensions) -> Result<()> {
        let len = self.grid.len();
        let Dimensions { n, m, .. } = *dims;
        check_mats("G", std::slice::from_ref(&self.terminal), 1, (n, n))?;
        check_vecs("g", std::slice::from_ref(&self.terminal_linear), 1, n)?;
        check_mats("Q", &self.state, len, (n, n))?;
        check_mats("S", &self.cross, len, (m, n))?;
        check_mats("R", &self.control, len, (m, m))?;
        check_vecs("q", &self.state_linear, len, n)?;
        check_vecs("r", &self.control_linear, len, m)?;
        Ok(())
    }

    fn first_non_finite(&self) -> Option<usize> {
        (0..self.grid.len()).find(|&i| {
            !(all_finite_mat(&self.state[i])
                && all_finite_mat(&self.cross[i])
                && all_finite_mat(&self.control[i])
                && all_finite_vec(&self.state_linear[i])
                && all_finite_vec(&self.control_linear[i]))
        })
    }
}

fn check_mats(
    what: &str,
    values: &[DMatrix<f64>],
    len: usize,
    shape: (usize, usize),
) -> Result<()> {
    if values.len() != len {
        return Err(Error::ShapeMismatch {
            what: format!("{what} table"),
            expected: format!("{len} samples"),
            found: format!("{} samples", values.len()),
        });
    }
    for (i, v) in values.iter().enumerate() {
        if v.shape() != shape {
            return Err(Error::shape(
                format!("{what} at node {i}"),
                shape,
                v.shape(),
            ));
        }
    }
    Ok(())
}

fn check_vecs(what: &str, values: &[DVector<f64>], len: usize, dim: usize) -> Result<()> {
    if values.len() != len {
        return Err(Error::ShapeMismatch {
            what: format!("{what} table"),
            expected: format!("{len} samples"),
            found: format!("{} samples", values.len()),
        });
    }
    for (i, v) in values.iter().enumerate() {
        if v.len() != dim {
            return Err(Error::shape(
                format!("{what} at node {i}"),
                (dim, 1),
                (v.len(), 1),
            ));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub dims: Dimensions,
    pub horizon: f64,
    pub coeffs: CoefficientTable,
    pub cost: CostWeights,
    /// Deterministic initial state.
    pub x0: DVector<f64>,
    pub tol: ToleranceConfig,
}

impl ModelSpec {
    pub fn new(
        dims: Dimensions,
        horizon: f64,
        coeffs: CoefficientTable,
        cost: CostWeights,
        x0: DVector<f64>,
        tol: ToleranceConfig,
    ) -> Result<Self> {
        let model = Self {
            dims,
            horizon,
            coeffs,
            cost,
            x0,
            tol,
        };
        model.check_shapes()?;
        Ok(model)
    }

    pub fn check_shapes(&self) -> Result<()> {
        self.dims.check()?;
        for (what, grid) in [
            ("coefficient", &self.coeffs.grid),
            ("cost", &self.cost.grid),
        ] {
            if grid.horizon() != self.horizon {
                return Err(Error::InvalidArgument(format!(
                    "{what} table spans [0, {}] but the horizon is {}",
                    grid.horizon(),
                    self.horizon
                )));
            }
        }
        self.coeffs.check_shapes(&self.dims)?;
        self.cost.check_shapes(&self.dims)?;
        check_vecs("x0", std::slice::from_ref(&self.x0), 1, self.dims.n)
    }

    pub fn coefficients_at(&self, t: f64) -> Result<CoefficientSample> {
        self.coeffs.sample(t)
    }

    pub fn cost_at(&self, t: f64) -> Result<CostSample> {
        self.cost.sample(t)
    }

    /// Grid with `steps` intervals over this model's horizon.
    pub fn grid(&self, steps: usize) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, steps)
    }
}

/// Coefficient-table interpolation; see [`CoefficientTable::sample`].
pub fn sample(coeffs: &CoefficientTable, t: f64) -> Result<CoefficientSample> {
    coeffs.sample(t)
}

/// Constant-in-time model data, the quickest way to build a [`ModelSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantModel {
    pub coeffs: CoefficientSample,
    pub cost: CostSample,
    pub terminal: DMatrix<f64>,
    pub terminal_linear: DVector<f64>,
    pub x0: DVector<f64>,
    pub delta: f64,
}

impl ConstantModel {
    /// Everything zero except `K = I` and `R = I`.
    pub fn zeros(dims: Dimensions) -> Self {
        let Dimensions { n, m, d, k } = dims;
        Self {
            coeffs: CoefficientSample {
                dynamics: DMatrix::zeros(n, n),
                input: DMatrix::zeros(n, m),
                drift: DVector::zeros(n),
                shared_noise: DMatrix::zeros(n, d),
                state_noise: DMatrix::zeros(n, k),
                observation: DMatrix::zeros(d, n),
                observation_drift: DVector::zeros(d),
                observation_noise: DMatrix::identity(d, d),
            },
            cost: CostSample {
                state: DMatrix::zeros(n, n),
                cross: DMatrix::zeros(m, n),
                control: DMatrix::identity(m, m),
                state_linear: DVector::zeros(n),
                control_linear: DVector::zeros(m),
            },
            terminal: DMatrix::zeros(n, n),
            terminal_linear: DVector::zeros(n),
            x0: DVector::zeros(n),
            delta: 1e-6,
        }
    }

    /// Scalar model with `A = 0, B = 1, D = 1, H = 1, K = 1, Q = 1, R = 1`,
    /// everything else zero and `x0 = 1`. Its Riccati solutions are
    /// `P(t) = tanh(T - t)` and `Σ(t) = tanh(t)`.
    pub fn scalar_benchmark() -> Self {
        let one = || DMatrix::from_element(1, 1, 1.0);
        let mut m = Self::zeros(Dimensions::scalar());
        m.coeffs.input = one();
        m.coeffs.state_noise = one();
        m.coeffs.observation = one();
        m.cost.state = one();
        m.x0 = DVector::from_element(1, 1.0);
        m
    }

    pub fn dims(&self) -> Dimensions {
        Dimensions {
            n: self.coeffs.dynamics.nrows(),
            m: self.coeffs.input.ncols(),
            d: self.coeffs.observation.nrows(),
            k: self.coeffs.state_noise.ncols(),
        }
    }

    pub fn build(&self, horizon: f64) -> Result<ModelSpec> {
        self.build_with(horizon, ToleranceConfig::default())
    }

    pub fn build_with(&self, horizon: f64, tol: ToleranceConfig) -> Result<ModelSpec> {
        ModelSpec::new(
            self.dims(),
            horizon,
            CoefficientTable::constant(horizon, self.coeffs.clone())?,
            CostWeights::constant(
                horizon,
                self.terminal.clone(),
                self.terminal_linear.clone(),
                self.cost.clone(),
                self.delta,
            )?,
            self.x0.clone(),
            tol,
        )
    }
}

/// Outcome of one assumption check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Node (of the table the check ran over) with the smallest margin.
    pub worst_node: Option<usize>,
    /// Signed slack of the worst node; negative when the check fails.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AssumptionCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            write!(
                f,
                "  [{}] {}",
                if c.passed { "pass" } else { "FAIL" },
                c.name
            )?;
            if let Some(node) = c.worst_node {
                write!(f, " (worst node {node}, margin {:.6e})", c.margin)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

pub const CHECK_FINITE: &str = "(A1) coefficients finite";
pub const CHECK_K_INVERTIBLE: &str = "(A2) K invertible and well conditioned";
pub const CHECK_DELTA: &str = "(A3) delta positive";
pub const CHECK_R_LOWER: &str = "(A3) R >= delta I";
pub const CHECK_Q_SCHUR: &str = "(A3) Q - S'R^-1 S >= 0";
pub const CHECK_G_PSD: &str = "(A3) G >= 0";
pub const CHECK_G_SYM: &str = "symmetry of G";
pub const CHECK_Q_SYM: &str = "symmetry of Q";
pub const CHECK_R_SYM: &str = "symmetry of R";

/// Keeps the node with the smallest margin.
struct Worst {
    node: Option<usize>,
    margin: f64,
}

impl Worst {
    fn new() -> Self {
        Self {
            node: None,
            margin: f64::INFINITY,
        }
    }

    fn offer(&mut self, node: usize, margin: f64) {
        // NaN margins count as the worst possible
        let margin = if margin.is_nan() {
            f64::NEG_INFINITY
        } else {
            margin
        };
        if self.node.is_none() || margin < self.margin {
            self.node = Some(node);
            self.margin = margin;
        }
    }

    fn into_check(self, name: &'static str) -> AssumptionCheck {
        AssumptionCheck {
            name,
            passed: self.margin >= 0.0,
            worst_node: self.node,
            margin: self.margin,
        }
    }
}

/// Checks boundedness (finite samples), invertibility of `K`, the
/// coercivity bound `R >= δI`, nonnegativity of `Q - SᵀR⁻¹S` and `G`, and
/// symmetry of `G`, `Q`, `R`.
///
/// Shape inconsistencies are errors rather than report entries.
pub fn validate(model: &ModelSpec, tol: &ToleranceConfig) -> Result<ValidationReport> {
    model.check_shapes()?;
    let mut checks = Vec::new();

    let bad_coeff = model.coeffs.first_non_finite();
    let bad_cost = model.cost.first_non_finite();
    let terminal_ok =
        all_finite_mat(&model.cost.terminal) && all_finite_vec(&model.cost.terminal_linear);
    let finite = bad_coeff.is_none() && bad_cost.is_none() && terminal_ok;
    checks.push(AssumptionCheck {
        name: CHECK_FINITE,
        passed: finite,
        worst_node: bad_coeff.or(bad_cost),
        margin: if finite { 0.0 } else { f64::NEG_INFINITY },
    });

    let mut worst = Worst::new();
    for (i, k) in model.coeffs.observation_noise.iter().enumerate() {
        let cond = condition_number(k);
        worst.offer(i, tol.k_cond_max.log10() - cond.log10());
    }
    checks.push(worst.into_check(CHECK_K_INVERTIBLE));

    let delta_ok = model.cost.delta > 0.0 && model.cost.delta.is_finite();
    checks.push(AssumptionCheck {
        name: CHECK_DELTA,
        passed: delta_ok,
        worst_node: None,
        margin: model.cost.delta,
    });

    let mut r_worst = Worst::new();
    let mut schur_worst = Worst::new();
    let mut q_sym = Worst::new();
    let mut r_sym = Worst::new();
    for i in 0..model.cost.grid.len() {
        let r = &model.cost.control[i];
        let q = &model.cost.state[i];
        let s = &model.cost.cross[i];
        let r_margin = min_eigenvalue(r) - model.cost.delta;
        r_worst.offer(i, r_margin - tol.psd_floor(r));
        let schur = solve(r, s).map(|rinv_s| q - s.transpose() * rinv_s);
        match schur {
            Some(schur) => schur_worst.offer(i, min_eigenvalue(&schur) - tol.psd_floor(&schur)),
            None => schur_worst.offer(i, f64::NEG_INFINITY),
        }
        q_sym.offer(i, tol.sym_tol - asymmetry(q));
        r_sym.offer(i, tol.sym_tol - asymmetry(r));
    }
    checks.push(r_worst.into_check(CHECK_R_LOWER));
    checks.push(schur_worst.into_check(CHECK_Q_SCHUR));

    let g = &model.cost.terminal;
    let g_margin = min_eigenvalue(g) - tol.psd_floor(g);
    checks.push(AssumptionCheck {
        name: CHECK_G_PSD,
        passed: g_margin >= 0.0,
        worst_node: None,
        margin: g_margin,
    });
    let g_sym = tol.sym_tol - asymmetry(g);
    checks.push(AssumptionCheck {
        name: CHECK_G_SYM,
        passed: g_sym >= 0.0,
        worst_node: None,
        margin: g_sym,
    });
    checks.push(q_sym.into_check(CHECK_Q_SYM));
    checks.push(r_sym.into_check(CHECK_R_SYM));

    Ok(ValidationReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    fn scalar_ok() -> ConstantModel {
        let mut m = ConstantModel::zeros(Dimensions::scalar());
        m.cost.state = m1(1.0);
        m
    }

    #[test]
    fn constant_scalar_model_passes() {
        let model = scalar_ok().build(1.0).unwrap();
        let report = validate(&model, &model.tol).unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn singular_k_at_one_node_fails_a2() {
        let mut model = scalar_ok().build(1.0).unwrap();
        model.coeffs.observation_noise[1] = m1(0.0);
        let report = validate(&model, &model.tol).unwrap();
        assert!(!report.passed());
        let check = report.check(CHECK_K_INVERTIBLE).unwrap();
        assert!(!check.passed);
        assert_eq!(check.worst_node, Some(1));
        assert_eq!(report.failures().count(), 1);
    }

    #[test]
    fn schur_complement_violation_fails_a3() {
        // Q - S R^-1 S = 1 - 4 = -3
        let mut m = scalar_ok();
        m.cost.cross = m1(2.0);
        let model = m.build(1.0).unwrap();
        let report = validate(&model, &model.tol).unwrap();
        let check = report.check(CHECK_Q_SCHUR).unwrap();
        assert!(!check.passed);
        assert!((check.margin + 3.0).abs() < 1e-6, "{}", check.margin);
    }

    #[test]
    fn asymmetric_g_fails_symmetry() {
        let mut m = ConstantModel::zeros(Dimensions::new(2, 1, 1, 1).unwrap());
        m.terminal = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        let model = m.build(1.0).unwrap();
        let report = validate(&model, &model.tol).unwrap();
        assert!(!report.check(CHECK_G_SYM).unwrap().passed);
    }

    #[test]
    fn r_below_delta_fails() {
        let mut m = scalar_ok();
        m.cost.control = m1(0.5);
        m.delta = 1.0;
        let model = m.build(1.0).unwrap();
        let report = validate(&model, &model.tol).unwrap();
        assert!(!report.check(CHECK_R_LOWER).unwrap().passed);
    }

    #[test]
    fn non_finite_coefficient_fails_a1() {
        let mut model = scalar_ok().build(1.0).unwrap();
        model.coeffs.dynamics[0] = m1(f64::NAN);
        let report = validate(&model, &model.tol).unwrap();
        let c = report.check(CHECK_FINITE).unwrap();
        assert!(!c.passed);
        assert_eq!(c.worst_node, Some(0));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut model = scalar_ok().build(1.0).unwrap();
        model.coeffs.input[0] = DMatrix::zeros(2, 1);
        assert!(matches!(
            validate(&model, &model.tol),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn validate_is_deterministic() {
        let model = ConstantModel::scalar_benchmark().build(1.0).unwrap();
        assert_eq!(
            validate(&model, &model.tol).unwrap(),
            validate(&model, &model.tol).unwrap()
        );
    }

    #[test]
    fn sample_constant_ramp_and_endpoint() {
        let model = scalar_ok().build(1.0).unwrap();
        for t in [0.0, 0.3, 0.77, 1.0] {
            assert_eq!(model.coefficients_at(t).unwrap().observation_noise, m1(1.0));
        }

        let mut ramp = model.clone();
        ramp.coeffs.dynamics = vec![m1(0.0), m1(2.0)];
        assert_eq!(ramp.coefficients_at(0.5).unwrap().dynamics, m1(1.0));
        assert_eq!(ramp.coefficients_at(1.0).unwrap().dynamics, m1(2.0));
        assert!(matches!(
            ramp.coefficients_at(1.5),
            Err(Error::OutOfRange { .. })
        ));
        assert!(ramp.coefficients_at(-0.1).is_err());
    }

    #[test]
    fn noise_covariances_are_psd() {
        let mut m = ConstantModel::zeros(Dimensions::new(2, 1, 2, 2).unwrap());
        m.coeffs.state_noise = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -0.5, 0.3]);
        m.coeffs.observation_noise = DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.0, 1.0]);
        let s = m.build(1.0).unwrap().coefficients_at(0.2).unwrap();
        assert!(min_eigenvalue(&s.state_noise_cov()) >= -1e-12);
        assert!(min_eigenvalue(&s.observation_noise_cov()) > 0.0);
        assert_eq!(asymmetry(&s.state_noise_cov()), 0.0);
    }
}
