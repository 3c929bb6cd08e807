//! Closed-form cost quantities: the running and terminal cost, the optimal
//! value and its split into a filter part and an estimation-error part.
//!
//! All time integrals are composite trapezoid sums on the solution grid.

use nalgebra::DVector;
use serde::Serialize;

use crate::detsolve::DeterministicSolution;
use crate::error::{Error, Result};
use crate::linalg::{bilinear, solve_vec};
use crate::model::{CostSample, ModelSpec};

/// The optimal value broken into its individual terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueBreakdown {
    /// `<P(0)x, x>`
    pub quadratic_term: f64,
    /// `2<φ(0), x>`
    pub linear_term: f64,
    /// `∫ Σᵢ <Π Dᵢ, Dᵢ>`, i over the columns of `D`.
    pub pi_d_integral: f64,
    /// `∫ Σᵢ <Π Δᵢ, Δᵢ>`
    pub pi_delta_integral: f64,
    /// `∫ Σᵢ <P (Δᵢ + Cᵢ), Δᵢ + Cᵢ>`
    pub p_delta_c_integral: f64,
    /// `-∫ <R⁻¹(Bᵀφ + r), Bᵀφ + r>`, stored with its sign.
    pub rinv_integral: f64,
    /// `∫ 2<φ, a>`
    pub phi_a_integral: f64,
    pub total: f64,
}

impl ValueBreakdown {
    /// `(key, value)` pairs in a fixed order, for flat result documents.
    pub fn entries(&self) -> [(&'static str, f64); 8] {
        [
            ("quadratic_term", self.quadratic_term),
            ("linear_term", self.linear_term),
            ("pi_d_integral", self.pi_d_integral),
            ("pi_delta_integral", self.pi_delta_integral),
            ("p_delta_c_integral", self.p_delta_c_integral),
            ("rinv_integral", self.rinv_integral),
            ("phi_a_integral", self.phi_a_integral),
            ("total", self.total),
        ]
    }
}

/// `<Qx,x> + 2<Sx,u> + <Ru,u> + 2<q,x> + 2<r,u>` with weights at `t`.
pub fn running_cost(t: f64, x: &DVector<f64>, u: &DVector<f64>, model: &ModelSpec) -> Result<f64> {
    Ok(running_cost_sample(&model.cost_at(t)?, x, u))
}

pub(crate) fn running_cost_sample(w: &CostSample, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
    bilinear(&w.state, x, x)
        + 2.0 * bilinear(&w.cross, u, x)
        + bilinear(&w.control, u, u)
        + 2.0 * w.state_linear.dot(x)
        + 2.0 * w.control_linear.dot(u)
}

/// `<G x, x> + 2<g, x>`.
pub fn terminal_cost(x_terminal: &DVector<f64>, model: &ModelSpec) -> f64 {
    bilinear(&model.cost.terminal, x_terminal, x_terminal)
        + 2.0 * model.cost.terminal_linear.dot(x_terminal)
}

/// Integrands of the five time integrals at node `i`, in
/// [`ValueBreakdown`] order.
fn integrands(sol: &DeterministicSolution, model: &ModelSpec, i: usize) -> Result<[f64; 5]> {
    let t = sol.grid.node(i);
    let c = model.coefficients_at(t)?;
    let w = model.cost_at(t)?;
    let p = &sol.control_riccati.values[i];
    let pi = &sol.error_riccati.values[i];
    let delta = &sol.error_loading.values[i];
    let phi = &sol.control_offset.values[i];

    let pi_d: f64 = c
        .state_noise
        .column_iter()
        .map(|col| col.dot(&(pi * col)))
        .sum();
    let pi_delta: f64 = delta.column_iter().map(|col| col.dot(&(pi * col))).sum();
    let p_delta_c: f64 = delta
        .column_iter()
        .zip(c.shared_noise.column_iter())
        .map(|(dl, cc)| {
            let v = dl + cc;
            v.dot(&(p * &v))
        })
        .sum();
    let bphi_r = c.input.transpose() * phi + &w.control_linear;
    let rinv = solve_vec(&w.control, &bphi_r).ok_or(Error::Singular { what: "R", t })?;
    let rinv_term = -rinv.dot(&bphi_r);
    let phi_a = 2.0 * phi.dot(&c.drift);
    Ok([pi_d, pi_delta, p_delta_c, rinv_term, phi_a])
}

fn trapezoid_integrals(sol: &DeterministicSolution, model: &ModelSpec) -> Result<[f64; 5]> {
    let h = sol.grid.step_size();
    let steps = sol.grid.steps();
    let mut acc = [0.0; 5];
    for i in 0..=steps {
        let weight = if i == 0 || i == steps { 0.5 * h } else { h };
        let f = integrands(sol, model, i)?;
        for (a, v) in acc.iter_mut().zip(f) {
            *a += weight * v;
        }
    }
    Ok(acc)
}

/// Optimal value at initial state `x`, term by term.
pub fn optimal_value(
    x: &DVector<f64>,
    sol: &DeterministicSolution,
    model: &ModelSpec,
) -> Result<ValueBreakdown> {
    let [pi_d, pi_delta, p_delta_c, rinv, phi_a] = trapezoid_integrals(sol, model)?;
    let quadratic = x.dot(&(sol.control_riccati.first() * x));
    let linear = 2.0 * sol.control_offset.first().dot(x);
    Ok(ValueBreakdown {
        quadratic_term: quadratic,
        linear_term: linear,
        pi_d_integral: pi_d,
        pi_delta_integral: pi_delta,
        p_delta_c_integral: p_delta_c,
        rinv_integral: rinv,
        phi_a_integral: phi_a,
        total: quadratic + linear + pi_d + pi_delta + p_delta_c + rinv + phi_a,
    })
}

/// Cost of the estimation error, which no admissible control can change:
/// `∫ Σᵢ<ΠDᵢ,Dᵢ> + Σᵢ<ΠΔᵢ,Δᵢ> dt`.
pub fn estimation_cost(sol: &DeterministicSolution, model: &ModelSpec) -> Result<f64> {
    let [pi_d, pi_delta, ..] = trapezoid_integrals(sol, model)?;
    Ok(pi_d + pi_delta)
}

/// Infimum over admissible controls of the cost evaluated on the filter
/// (the completed square set to zero).
pub fn filtered_cost_floor(
    x: &DVector<f64>,
    sol: &DeterministicSolution,
    model: &ModelSpec,
) -> Result<f64> {
    let [_, _, p_delta_c, rinv, phi_a] = trapezoid_integrals(sol, model)?;
    let quadratic = x.dot(&(sol.control_riccati.first() * x));
    let linear = 2.0 * sol.control_offset.first().dot(x);
    Ok(quadratic + linear + p_delta_c + rinv + phi_a)
}

/// `<R w, w>` with `w = Θ x̂ - R⁻¹(Bᵀφ + r) - u`, the penalty a control pays
/// for deviating from the optimal feedback.
pub fn square_residual(
    t: f64,
    xhat: &DVector<f64>,
    u: &DVector<f64>,
    sol: &DeterministicSolution,
    model: &ModelSpec,
) -> Result<f64> {
    let c = model.coefficients_at(t)?;
    let w = model.cost_at(t)?;
    let theta = sol.feedback_gain.interpolate(t)?;
    let phi = {
        let (i, wt) = sol.grid.locate(t)?;
        let next = (i + 1).min(sol.grid.steps());
        crate::linalg::lerp_vec(
            &sol.control_offset.values[i],
            &sol.control_offset.values[next],
            wt,
        )
    };
    let bphi_r = c.input.transpose() * phi + &w.control_linear;
    let rinv = solve_vec(&w.control, &bphi_r).ok_or(Error::Singular { what: "R", t })?;
    let dev = theta * xhat - rinv - u;
    Ok(dev.dot(&(&w.control * &dev)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detsolve::solve_all;
    use crate::model::{ConstantModel, Dimensions};
    use nalgebra::DMatrix;

    fn v1(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    fn m1(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    #[test]
    fn running_cost_cases() {
        let model = ConstantModel::scalar_benchmark().build(1.0).unwrap();
        assert_eq!(running_cost(0.3, &v1(0.0), &v1(0.0), &model).unwrap(), 0.0);
        assert_eq!(running_cost(0.3, &v1(2.0), &v1(3.0), &model).unwrap(), 13.0);

        let mut m = ConstantModel::zeros(Dimensions::scalar());
        m.cost.control = m1(0.0);
        m.cost.cross = m1(1.0);
        let model = m.build(1.0).unwrap();
        assert_eq!(running_cost(0.0, &v1(1.0), &v1(1.0), &model).unwrap(), 2.0);
        assert!(running_cost(1.5, &v1(1.0), &v1(1.0), &model).is_err());
    }

    #[test]
    fn terminal_cost_cases() {
        let mut m = ConstantModel::zeros(Dimensions::scalar());
        m.terminal = m1(2.0);
        m.terminal_linear = v1(1.0);
        let model = m.build(1.0).unwrap();
        assert_eq!(terminal_cost(&v1(0.0), &model), 0.0);
        assert_eq!(terminal_cost(&v1(3.0), &model), 24.0);
        let zero = ConstantModel::zeros(Dimensions::scalar())
            .build(1.0)
            .unwrap();
        assert_eq!(terminal_cost(&v1(-7.0), &zero), 0.0);
    }

    #[test]
    fn zero_cost_data_has_zero_value() {
        let mut m = ConstantModel::scalar_benchmark();
        m.cost.state = m1(0.0);
        let model = m.build(1.0).unwrap();
        let sol = solve_all(&model, &model.grid(100).unwrap()).unwrap();
        let v = optimal_value(&v1(1.0), &sol, &model).unwrap();
        assert_eq!(v.total, 0.0);
        assert_eq!(estimation_cost(&sol, &model).unwrap(), 0.0);
        assert_eq!(filtered_cost_floor(&v1(1.0), &sol, &model).unwrap(), 0.0);
    }

    #[test]
    fn noise_free_value_is_deterministic_lqr() {
        let mut m = ConstantModel::scalar_benchmark();
        m.coeffs.state_noise = m1(0.0);
        let model = m.build(1.0).unwrap();
        let sol = solve_all(&model, &model.grid(1000).unwrap()).unwrap();
        let v = optimal_value(&v1(1.0), &sol, &model).unwrap();
        assert!((v.total - 1f64.tanh()).abs() < 1e-10);
        assert_eq!(estimation_cost(&sol, &model).unwrap(), 0.0);
    }

    #[test]
    fn breakdown_sums_to_total() {
        let model = ConstantModel::scalar_benchmark().build(1.0).unwrap();
        let sol = solve_all(&model, &model.grid(100).unwrap()).unwrap();
        let v = optimal_value(&v1(0.7), &sol, &model).unwrap();
        let sum: f64 = v.entries()[..7].iter().map(|(_, x)| x).sum();
        assert!((sum - v.total).abs() <= 1e-12 * v.total.abs());
    }

    #[test]
    fn square_residual_cases() {
        let model = ConstantModel::scalar_benchmark().build(1.0).unwrap();
        let grid = model.grid(100).unwrap();
        let sol = solve_all(&model, &grid).unwrap();
        let t = grid.node(30);
        let xhat = v1(0.8);
        let u_opt = &sol.feedback_gain.values[30] * &xhat + sol.feedforward(&model, 30).unwrap();
        assert_eq!(
            square_residual(t, &xhat, &u_opt, &sol, &model).unwrap(),
            0.0
        );
        let u = &u_opt - v1(2.0);
        assert!((square_residual(t, &xhat, &u, &sol, &model).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn more_noise_costs_more() {
        let base = ConstantModel::scalar_benchmark();
        let mut noisy = base.clone();
        noisy.coeffs.state_noise = m1(2.0);
        let value = |m: &ConstantModel| {
            let model = m.build(1.0).unwrap();
            let sol = solve_all(&model, &model.grid(200).unwrap()).unwrap();
            optimal_value(&v1(1.0), &sol, &model).unwrap().total
        };
        assert!(value(&noisy) > value(&base));
    }
}
