//! Euler–Maruyama simulation of the state, the observation, the filter and
//! the innovation under a control policy that only sees the filter.
//!
//! For `i = 0 .. steps-1`, with every coefficient taken at `tᵢ`:
//!
//! ```text
//! uᵢ    = policy(tᵢ, X̂ᵢ)
//! Xᵢ₊₁  = Xᵢ + (A Xᵢ + B uᵢ + a) h + C ΔWᵢ + D ΔW'ᵢ
//! Yᵢ₊₁  = Yᵢ + (H Xᵢ + h_obs) h + K ΔWᵢ
//! ΔVᵢ   = (Yᵢ₊₁ - Yᵢ) - (H X̂ᵢ + h_obs) h       (from the increment, not the difference)
//! X̂ᵢ₊₁  = X̂ᵢ + (A X̂ᵢ + B uᵢ + a) h + L ΔVᵢ,     L = (Σ Hᵀ + C Kᵀ) N⁻¹
//! V̌ᵢ₊₁  = V̌ᵢ + K⁻¹ ΔVᵢ
//! ```

use nalgebra::{DMatrix, DVector};

use crate::detsolve::{filter_gain, DeterministicSolution};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::{all_finite_vec, inverse};
use crate::model::{CoefficientSample, CostSample, ModelSpec};
use crate::noise::NoiseDraw;
use crate::ode::VectorPath;
use crate::value::running_cost_sample;

/// How the control is chosen from the filter state.
///
/// Policies see only the node index and `X̂`, never the true state, so
/// every policy here is admissible.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlPolicy {
    /// `u = Θ X̂ - R⁻¹(Bᵀφ + r)`.
    FilterFeedback,
    ZeroControl,
    /// Deterministic control table, one m-vector per grid node.
    OpenLoop(VectorPath),
    /// Optimal feedback plus a deterministic offset table `ε(t)`.
    PerturbedFeedback(VectorPath),
}

impl ControlPolicy {
    /// Perturbed feedback with a constant offset on `grid`.
    pub fn perturbed_constant(grid: TimeGrid, offset: DVector<f64>) -> Self {
        ControlPolicy::PerturbedFeedback(VectorPath::constant(grid, offset))
    }

    /// The same policy with its tables moved onto `grid`.
    pub fn on_grid(&self, grid: TimeGrid) -> Result<Self> {
        Ok(match self {
            ControlPolicy::OpenLoop(t) => ControlPolicy::OpenLoop(t.resample(grid)?),
            ControlPolicy::PerturbedFeedback(t) => {
                ControlPolicy::PerturbedFeedback(t.resample(grid)?)
            }
            other => other.clone(),
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            ControlPolicy::FilterFeedback => "filter_feedback",
            ControlPolicy::ZeroControl => "zero_control",
            ControlPolicy::OpenLoop(_) => "open_loop",
            ControlPolicy::PerturbedFeedback(_) => "perturbed_feedback",
        }
    }

    fn check(&self, grid: &TimeGrid, m: usize) -> Result<()> {
        let table = match self {
            ControlPolicy::OpenLoop(t) | ControlPolicy::PerturbedFeedback(t) => t,
            _ => return Ok(()),
        };
        if table.grid != *grid {
            return Err(Error::InvalidArgument(format!(
                "{} table has {} steps, simulation grid has {}",
                self.label(),
                table.grid.steps(),
                grid.steps()
            )));
        }
        for (i, v) in table.values.iter().enumerate() {
            if v.len() != m {
                return Err(Error::shape(
                    format!("{} at node {i}", self.label()),
                    (m, 1),
                    (v.len(), 1),
                ));
            }
            if !all_finite_vec(v) {
                return Err(Error::NonFinite { node: i });
            }
        }
        Ok(())
    }

    /// Control at node `i` given the filter state.
    pub fn control(&self, plan: &SimulationPlan, i: usize, xhat: &DVector<f64>) -> DVector<f64> {
        let mut u = DVector::zeros(plan.dims_m);
        self.control_into(plan, i, xhat, &mut u);
        u
    }

    fn control_into(
        &self,
        plan: &SimulationPlan,
        i: usize,
        xhat: &DVector<f64>,
        out: &mut DVector<f64>,
    ) {
        match self {
            ControlPolicy::FilterFeedback => plan.optimal_control_into(i, xhat, out),
            ControlPolicy::ZeroControl => out.fill(0.0),
            ControlPolicy::OpenLoop(table) => out.copy_from(&table.values[i]),
            ControlPolicy::PerturbedFeedback(offset) => {
                plan.optimal_control_into(i, xhat, out);
                *out += &offset.values[i];
            }
        }
    }
}

/// Per-node data the stepping loop needs.
#[derive(Debug, Clone)]
pub struct NodeData {
    pub coeffs: CoefficientSample,
    pub cost: CostSample,
    /// `(ΣHᵀ + CKᵀ) N⁻¹`
    pub filter_gain: DMatrix<f64>,
    pub kinv: DMatrix<f64>,
    pub feedback_gain: DMatrix<f64>,
    pub feedforward: DVector<f64>,
    pub error_dynamics: DMatrix<f64>,
    pub error_loading: DMatrix<f64>,
}

/// Model coefficients and solution paths sampled once at every grid node,
/// shared read-only by all simulated paths.
#[derive(Debug, Clone)]
pub struct SimulationPlan {
    pub grid: TimeGrid,
    pub x0: DVector<f64>,
    pub terminal: DMatrix<f64>,
    pub terminal_linear: DVector<f64>,
    pub nodes: Vec<NodeData>,
    dims_m: usize,
}

impl SimulationPlan {
    pub fn new(model: &ModelSpec, sol: &DeterministicSolution) -> Result<Self> {
        let grid = sol.grid;
        let nodes = (0..=grid.steps())
            .map(|i| {
                let t = grid.node(i);
                let coeffs = model.coefficients_at(t)?;
                let cost = model.cost_at(t)?;
                let sigma = &sol.error_covariance.values[i];
                Ok(NodeData {
                    filter_gain: filter_gain(&coeffs, sigma, t)?,
                    kinv: inverse(&coeffs.observation_noise)
                        .ok_or(Error::Singular { what: "K", t })?,
                    feedback_gain: sol.feedback_gain.values[i].clone(),
                    feedforward: sol.feedforward(model, i)?,
                    error_dynamics: sol.error_dynamics.values[i].clone(),
                    error_loading: sol.error_loading.values[i].clone(),
                    coeffs,
                    cost,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            x0: model.x0.clone(),
            terminal: model.cost.terminal.clone(),
            terminal_linear: model.cost.terminal_linear.clone(),
            nodes,
            dims_m: model.dims.m,
        })
    }

    pub fn optimal_control(&self, i: usize, xhat: &DVector<f64>) -> DVector<f64> {
        let mut u = DVector::zeros(self.dims_m);
        self.optimal_control_into(i, xhat, &mut u);
        u
    }

    fn optimal_control_into(&self, i: usize, xhat: &DVector<f64>, out: &mut DVector<f64>) {
        let node = &self.nodes[i];
        out.copy_from(&node.feedforward);
        out.gemv(1.0, &node.feedback_gain, xhat, 1.0);
    }

    pub fn terminal_cost(&self, x: &DVector<f64>) -> f64 {
        crate::linalg::bilinear(&self.terminal, x, x) + 2.0 * self.terminal_linear.dot(x)
    }

    fn check_noise(&self, noise: &NoiseDraw) -> Result<()> {
        if noise.grid != self.grid {
            return Err(Error::InvalidArgument(format!(
                "noise drawn on {} steps, solution grid has {}",
                noise.grid.steps(),
                self.grid.steps()
            )));
        }
        let d = self.nodes[0].coeffs.shared_noise.ncols();
        let k = self.nodes[0].coeffs.state_noise.ncols();
        if noise.dw.ncols() != d || noise.dwp.ncols() != k {
            return Err(Error::shape(
                "noise columns",
                (d, k),
                (noise.dw.ncols(), noise.dwp.ncols()),
            ));
        }
        Ok(())
    }

    /// Runs the closed loop for one noise draw.
    pub fn simulate(&self, policy: &ControlPolicy, noise: &NoiseDraw) -> Result<PathBundle> {
        self.check_noise(noise)?;
        policy.check(&self.grid, self.dims_m)?;
        let steps = self.grid.steps();
        let h = self.grid.step_size();
        let n = self.x0.len();
        let d = noise.dw.ncols();

        let mut xs = DMatrix::zeros(n, steps + 1);
        let mut ys = DMatrix::zeros(d, steps + 1);
        let mut xhats = DMatrix::zeros(n, steps + 1);
        let mut vs = DMatrix::zeros(d, steps + 1);
        let mut vchecks = DMatrix::zeros(d, steps + 1);
        let mut us = DMatrix::zeros(self.dims_m, steps);

        let mut x = self.x0.clone();
        let mut y = DVector::zeros(d);
        let mut xhat = self.x0.clone();
        let mut v = DVector::zeros(d);
        let mut vcheck = DVector::zeros(d);
        xs.set_column(0, &x);
        xhats.set_column(0, &xhat);

        // scratch buffers, reused every step
        let k = noise.dwp.ncols();
        let mut u = DVector::zeros(self.dims_m);
        let mut dw = DVector::zeros(d);
        let mut dwp = DVector::zeros(k);
        let mut fx = DVector::zeros(n);
        let mut fxhat = DVector::zeros(n);
        let mut obs = DVector::zeros(d);
        let mut obs_hat = DVector::zeros(d);
        let mut dy = DVector::zeros(d);
        let mut dv = DVector::zeros(d);

        let mut cost = 0.0;
        for i in 0..steps {
            let node = &self.nodes[i];
            let c = &node.coeffs;
            policy.control_into(self, i, &xhat, &mut u);
            for j in 0..d {
                dw[j] = noise.dw[(i, j)];
            }
            for j in 0..k {
                dwp[j] = noise.dwp[(i, j)];
            }

            cost += running_cost_sample(&node.cost, &x, &u) * h;

            // X and X̂ go through identical arithmetic so that a noiseless
            // run keeps them bitwise equal
            drift_into(&mut fx, c, &x, &u);
            drift_into(&mut fxhat, c, &xhat, &u);
            observe_into(&mut obs, c, &x);
            observe_into(&mut obs_hat, c, &xhat);

            dy.copy_from(&obs);
            dy *= h;
            dy.gemv(1.0, &c.observation_noise, &dw, 1.0);
            dv.copy_from(&dy);
            dv.axpy(-h, &obs_hat, 1.0);

            x.axpy(h, &fx, 1.0);
            x.gemv(1.0, &c.shared_noise, &dw, 1.0);
            x.gemv(1.0, &c.state_noise, &dwp, 1.0);
            y += &dy;
            xhat.axpy(h, &fxhat, 1.0);
            xhat.gemv(1.0, &node.filter_gain, &dv, 1.0);
            v += &dv;
            vcheck.gemv(1.0, &node.kinv, &dv, 1.0);

            if !(all_finite_vec(&x) && all_finite_vec(&xhat) && all_finite_vec(&y)) {
                return Err(Error::NonFinite { node: i + 1 });
            }
            us.set_column(i, &u);
            xs.set_column(i + 1, &x);
            ys.set_column(i + 1, &y);
            xhats.set_column(i + 1, &xhat);
            vs.set_column(i + 1, &v);
            vchecks.set_column(i + 1, &vcheck);
        }
        cost += self.terminal_cost(&x);

        let xtil = &xs - &xhats;
        Ok(PathBundle {
            grid: self.grid,
            x: xs,
            y: ys,
            xhat: xhats,
            xtil,
            v: vs,
            vcheck: vchecks,
            u: us,
            cost,
        })
    }

    /// Euler–Maruyama of the error equation
    /// `dX̃ = 𝒜 X̃ dt - Δ dW + D dW'`, `X̃(0) = 0`; one column per node.
    pub fn simulate_error(&self, noise: &NoiseDraw) -> Result<DMatrix<f64>> {
        self.check_noise(noise)?;
        let steps = self.grid.steps();
        let h = self.grid.step_size();
        let n = self.x0.len();
        let mut out = DMatrix::zeros(n, steps + 1);
        let mut e = DVector::zeros(n);
        let mut fe = DVector::zeros(n);
        for i in 0..steps {
            let node = &self.nodes[i];
            fe.gemv(1.0, &node.error_dynamics, &e, 0.0);
            e.axpy(h, &fe, 1.0);
            e.gemv(-1.0, &node.error_loading, &noise.dw_at(i), 1.0);
            e.gemv(1.0, &node.coeffs.state_noise, &noise.dwp_at(i), 1.0);
            if !all_finite_vec(&e) {
                return Err(Error::NonFinite { node: i + 1 });
            }
            out.set_column(i + 1, &e);
        }
        Ok(out)
    }
}

/// `A x + B u + a`.
fn drift_into(out: &mut DVector<f64>, c: &CoefficientSample, x: &DVector<f64>, u: &DVector<f64>) {
    out.copy_from(&c.drift);
    out.gemv(1.0, &c.dynamics, x, 1.0);
    out.gemv(1.0, &c.input, u, 1.0);
}

/// `H x + h`.
fn observe_into(out: &mut DVector<f64>, c: &CoefficientSample, x: &DVector<f64>) {
    out.copy_from(&c.observation_drift);
    out.gemv(1.0, &c.observation, x, 1.0);
}

/// One simulated trajectory. Path matrices hold one column per node;
/// `u` has one column per interval.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub grid: TimeGrid,
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub xhat: DMatrix<f64>,
    /// `X - X̂`.
    pub xtil: DMatrix<f64>,
    /// Innovation.
    pub v: DMatrix<f64>,
    /// Innovation normalized by `K⁻¹`.
    pub vcheck: DMatrix<f64>,
    pub u: DMatrix<f64>,
    /// Realized cost: left Riemann running cost plus terminal cost.
    pub cost: f64,
}

/// Simulates the closed loop; see the module docs for the scheme.
pub fn simulate_closed_loop(
    model: &ModelSpec,
    sol: &DeterministicSolution,
    policy: &ControlPolicy,
    noise: &NoiseDraw,
) -> Result<PathBundle> {
    SimulationPlan::new(model, sol)?.simulate(policy, noise)
}

/// Simulates the estimation error directly from its own SDE.
pub fn simulate_error_direct(
    model: &ModelSpec,
    sol: &DeterministicSolution,
    noise: &NoiseDraw,
) -> Result<DMatrix<f64>> {
    SimulationPlan::new(model, sol)?.simulate_error(noise)
}

/// Optimal control `Θ(t)x̂ - R(t)⁻¹(B(t)ᵀφ(t) + r(t))` at a grid time `t`.
pub fn policy_feedback(
    t: f64,
    xhat: &DVector<f64>,
    sol: &DeterministicSolution,
    model: &ModelSpec,
) -> Result<DVector<f64>> {
    let (i, w) = sol.grid.locate(t)?;
    let node = match w {
        0.0 => i,
        1.0 => i + 1,
        _ => {
            return Err(Error::InvalidArgument(format!(
                "t = {t} is not a node of the solution grid"
            )))
        }
    };
    Ok(&sol.feedback_gain.values[node] * xhat + sol.feedforward(model, node)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detsolve::solve_all;
    use crate::model::{ConstantModel, Dimensions};
    use crate::noise::draw_noise;
    use crate::value::square_residual;

    fn m1(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    fn v1(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    fn benchmark(steps: usize) -> (ModelSpec, DeterministicSolution) {
        let model = ConstantModel::scalar_benchmark().build(1.0).unwrap();
        let sol = solve_all(&model, &model.grid(steps).unwrap()).unwrap();
        (model, sol)
    }

    #[test]
    fn noiseless_system_is_tracked_exactly() {
        let mut m = ConstantModel::zeros(Dimensions::new(2, 1, 1, 1).unwrap());
        m.coeffs.dynamics = DMatrix::from_row_slice(2, 2, &[-0.5, 1.0, 0.0, -0.2]);
        m.coeffs.observation = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        m.x0 = DVector::from_row_slice(&[1.0, -2.0]);
        let model = m.build(1.0).unwrap();
        let grid = model.grid(100).unwrap();
        let sol = solve_all(&model, &grid).unwrap();
        let noise = NoiseDraw::zeros(&grid, &model.dims);
        let b = simulate_closed_loop(&model, &sol, &ControlPolicy::ZeroControl, &noise).unwrap();
        assert_eq!(b.x, b.xhat);
        assert!(b.v.iter().all(|&v| v == 0.0));
        // Euler flow of the linear system
        let mut x = model.x0.clone();
        let a = &model.coeffs.dynamics[0];
        for i in 0..100 {
            x = &x + a * &x * grid.step_size();
            assert_eq!(b.x.column(i + 1), x.column(0));
        }
    }

    #[test]
    fn initial_conditions() {
        let (model, sol) = benchmark(50);
        let noise = draw_noise(1, 0, &sol.grid, &model.dims);
        let b = simulate_closed_loop(&model, &sol, &ControlPolicy::FilterFeedback, &noise).unwrap();
        assert_eq!(b.x.column(0), model.x0.column(0));
        assert_eq!(b.xhat.column(0), model.x0.column(0));
        assert_eq!(b.y[(0, 0)], 0.0);
        assert_eq!(b.v[(0, 0)], 0.0);
        assert_eq!(b.xtil[(0, 0)], 0.0);
        assert_eq!(b.xtil, &b.x - &b.xhat);
    }

    #[test]
    fn zero_path_costs_nothing() {
        let mut m = ConstantModel::scalar_benchmark();
        m.x0 = v1(0.0);
        m.coeffs.state_noise = m1(0.0);
        let model = m.build(1.0).unwrap();
        let sol = solve_all(&model, &model.grid(40).unwrap()).unwrap();
        let noise = NoiseDraw::zeros(&sol.grid, &model.dims);
        let b = simulate_closed_loop(&model, &sol, &ControlPolicy::ZeroControl, &noise).unwrap();
        assert_eq!(b.cost, 0.0);
    }

    #[test]
    fn error_matches_direct_recursion() {
        let (model, sol) = benchmark(400);
        let plan = SimulationPlan::new(&model, &sol).unwrap();
        for p in 0..5 {
            let noise = draw_noise(3, p, &sol.grid, &model.dims);
            let b = plan
                .simulate(&ControlPolicy::FilterFeedback, &noise)
                .unwrap();
            let direct = plan.simulate_error(&noise).unwrap();
            let scale = 1.0 + b.x.amax();
            assert!((&b.xtil - &direct).amax() <= 1e-10 * scale);
        }
        let noise = NoiseDraw::zeros(&sol.grid, &model.dims);
        assert!(plan
            .simulate_error(&noise)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn no_state_noise_means_no_error() {
        let mut m = ConstantModel::scalar_benchmark();
        m.coeffs.state_noise = m1(0.0);
        let model = m.build(1.0).unwrap();
        let sol = solve_all(&model, &model.grid(100).unwrap()).unwrap();
        let noise = draw_noise(8, 8, &sol.grid, &model.dims);
        let e = simulate_error_direct(&model, &sol, &noise).unwrap();
        assert!(e.iter().all(|&v| v == 0.0));
        let b = simulate_closed_loop(&model, &sol, &ControlPolicy::FilterFeedback, &noise).unwrap();
        assert_eq!(b.x, b.xhat);
    }

    #[test]
    fn innovation_increment_identity() {
        // ΔV = H X̃ h + K ΔW
        let (model, sol) = benchmark(200);
        let noise = draw_noise(11, 2, &sol.grid, &model.dims);
        let b = simulate_closed_loop(&model, &sol, &ControlPolicy::FilterFeedback, &noise).unwrap();
        let h = sol.grid.step_size();
        for i in 0..200 {
            let dv = b.v[(0, i + 1)] - b.v[(0, i)];
            let expected = b.xtil[(0, i)] * h + noise.dw[(i, 0)];
            assert!((dv - expected).abs() < 1e-12, "{i}: {dv} vs {expected}");
        }
    }

    #[test]
    fn feedback_has_zero_square_residual() {
        let (model, sol) = benchmark(100);
        let noise = draw_noise(4, 0, &sol.grid, &model.dims);
        let b = simulate_closed_loop(&model, &sol, &ControlPolicy::FilterFeedback, &noise).unwrap();
        for i in 0..100 {
            let t = sol.grid.node(i);
            let r = square_residual(
                t,
                &b.xhat.column(i).into(),
                &b.u.column(i).into(),
                &sol,
                &model,
            )
            .unwrap();
            assert!(r.abs() < 1e-24, "{r}");
        }
    }

    #[test]
    fn policy_feedback_cases() {
        let (model, sol) = benchmark(100);
        let u = policy_feedback(0.0, &v1(1.0), &sol, &model).unwrap();
        assert!((u[0] + 1f64.tanh()).abs() < 1e-8);
        assert_eq!(
            policy_feedback(0.5, &v1(0.0), &sol, &model).unwrap()[0],
            0.0
        );
        assert!(policy_feedback(0.005, &v1(0.0), &sol, &model).is_err());

        // Θ = 0, B = 0, r = 2, R = 1  =>  u = -2
        let mut m = ConstantModel::zeros(Dimensions::scalar());
        m.cost.control_linear = v1(2.0);
        let model = m.build(1.0).unwrap();
        let sol = solve_all(&model, &model.grid(10).unwrap()).unwrap();
        assert_eq!(
            policy_feedback(0.3, &v1(5.0), &sol, &model).unwrap()[0],
            -2.0
        );
    }

    #[test]
    fn zero_perturbation_equals_feedback() {
        let (model, sol) = benchmark(100);
        let noise = draw_noise(5, 5, &sol.grid, &model.dims);
        let a = simulate_closed_loop(&model, &sol, &ControlPolicy::FilterFeedback, &noise).unwrap();
        let p = ControlPolicy::perturbed_constant(sol.grid, v1(0.0));
        let b = simulate_closed_loop(&model, &sol, &p, &noise).unwrap();
        assert_eq!(a.cost.to_bits(), b.cost.to_bits());
    }

    #[test]
    fn mismatched_tables_are_rejected() {
        let (model, sol) = benchmark(100);
        let noise = draw_noise(5, 5, &sol.grid, &model.dims);
        let bad = ControlPolicy::OpenLoop(VectorPath::constant(
            TimeGrid::new(1.0, 10).unwrap(),
            v1(0.0),
        ));
        assert!(simulate_closed_loop(&model, &sol, &bad, &noise).is_err());
        let short = draw_noise(5, 5, &TimeGrid::new(1.0, 10).unwrap(), &model.dims);
        assert!(simulate_closed_loop(&model, &sol, &ControlPolicy::ZeroControl, &short).is_err());
    }
}
