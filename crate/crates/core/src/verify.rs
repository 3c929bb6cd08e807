//! Monte Carlo batches and the statistical checks run against the closed
//! forms: optimal value, error covariance, orthogonality of error and
//! filter, Brownianity of the normalized innovation, the cost split and
//! strict suboptimality of perturbed controls.
//!
//! Paths are simulated in parallel, each from its own noise stream, and
//! summarized; all reductions then run sequentially in path-index order,
//! so every report is bitwise reproducible.
//!
//! Every check compares with a 3 standard-error band. Where Euler bias
//! matters the band is widened by an allowance measured by step halving:
//! three times the change in the estimate between `h` and `h/2`. That is
//! the first-order (Richardson) bias estimate `2|c_h - c_{h/2}|` plus half
//! again for the second-order remainder.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::detsolve::{solve_all, DeterministicSolution};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::noise::{draw_noise, NoiseDraw};
use crate::simulate::{ControlPolicy, PathBundle, SimulationPlan};
use crate::value::{estimation_cost, optimal_value, running_cost_sample};

/// Multiplier turning a step-halving difference into an allowance.
pub const HALVING_ALLOWANCE_FACTOR: f64 = 3.0;

/// A sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    /// Two-pass mean and `std / √n` with the `n - 1` variance.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Self { mean: 0.0, se: 0.0 };
        }
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Self { mean, se: 0.0 };
        }
        let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
        Self {
            mean,
            se: (ss / (n - 1.0) / n).sqrt(),
        }
    }

    /// From a count, a sum and a sum of squares.
    pub fn from_sums(count: f64, sum: f64, sum_sq: f64) -> Self {
        if count < 1.0 {
            return Self { mean: 0.0, se: 0.0 };
        }
        let mean = sum / count;
        if count < 2.0 {
            return Self { mean, se: 0.0 };
        }
        let var = ((sum_sq - count * mean * mean) / (count - 1.0)).max(0.0);
        Self {
            mean,
            se: (var / count).sqrt(),
        }
    }
}

fn require_paths(n_paths: usize) -> Result<()> {
    if n_paths < 2 {
        return Err(Error::InsufficientPaths(n_paths));
    }
    Ok(())
}

fn paired(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> MeanSe {
    let xs: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect();
    MeanSe::from_samples(&xs)
}

/// Running sums of normalized-innovation increments for one component.
#[derive(Debug, Clone, Copy, Default)]
struct IncrementSums {
    count: f64,
    sum: f64,
    sum_sq: f64,
    sum_4: f64,
    lag_pairs: f64,
    lag_sum: f64,
}

impl IncrementSums {
    fn add(&mut self, other: &IncrementSums) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.sum_4 += other.sum_4;
        self.lag_pairs += other.lag_pairs;
        self.lag_sum += other.lag_sum;
    }
}

fn increment_sums(vcheck: &DMatrix<f64>) -> Vec<IncrementSums> {
    (0..vcheck.nrows())
        .map(|j| {
            let row = vcheck.row(j);
            let mut s = IncrementSums::default();
            let mut prev: Option<f64> = None;
            for i in 0..vcheck.ncols().saturating_sub(1) {
                let dv = row[i + 1] - row[i];
                s.count += 1.0;
                s.sum += dv;
                s.sum_sq += dv * dv;
                s.sum_4 += dv * dv * dv * dv;
                if let Some(p) = prev {
                    s.lag_pairs += 1.0;
                    s.lag_sum += p * dv;
                }
                prev = Some(dv);
            }
            s
        })
        .collect()
}

/// Statistics of one component of the normalized innovation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComponentStats {
    /// Expect 0.
    pub increment_mean: MeanSe,
    /// Mean of the squared increments; expect `h`.
    pub increment_variance: MeanSe,
    /// Pooled lag-1 autocorrelation of increments; expect 0.
    pub lag1_autocorrelation: f64,
    /// `3 / √(paths · steps)`.
    pub lag1_band: f64,
    /// Mean of `V̌(T)²`; expect `T`.
    pub terminal_variance: MeanSe,
}

/// Brownian-motion statistics of the normalized innovation over a batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BrownianityStats {
    pub n_paths: usize,
    pub steps: usize,
    pub horizon: f64,
    pub components: Vec<ComponentStats>,
    /// Realized quadratic variation divided by `d · T`; expect 1.
    pub quadratic_variation_ratio: f64,
}

fn brownianity_from(
    sums: &[Vec<IncrementSums>],
    terminals: &[DVector<f64>],
    steps: usize,
    horizon: f64,
) -> BrownianityStats {
    let n_paths = sums.len();
    let d = sums.first().map_or(0, Vec::len);
    let mut qv = 0.0;
    let components = (0..d)
        .map(|j| {
            let mut total = IncrementSums::default();
            for path in sums {
                total.add(&path[j]);
            }
            qv += total.sum_sq;
            let lag_mean = if total.lag_pairs > 0.0 {
                total.lag_sum / total.lag_pairs
            } else {
                0.0
            };
            let var_mean = if total.count > 0.0 {
                total.sum_sq / total.count
            } else {
                0.0
            };
            let squares: Vec<f64> = terminals.iter().map(|v| v[j] * v[j]).collect();
            ComponentStats {
                increment_mean: MeanSe::from_sums(total.count, total.sum, total.sum_sq),
                increment_variance: MeanSe::from_sums(total.count, total.sum_sq, total.sum_4),
                lag1_autocorrelation: if var_mean > 0.0 {
                    lag_mean / var_mean
                } else {
                    0.0
                },
                lag1_band: 3.0 / ((n_paths * steps) as f64).sqrt(),
                terminal_variance: MeanSe::from_samples(&squares),
            }
        })
        .collect();
    let denom = n_paths as f64 * d as f64 * horizon;
    BrownianityStats {
        n_paths,
        steps,
        horizon,
        components,
        quadratic_variation_ratio: if denom > 0.0 { qv / denom } else { 0.0 },
    }
}

/// Brownianity statistics of the normalized innovation of `bundles`.
pub fn brownianity_report(bundles: &[PathBundle]) -> Result<BrownianityStats> {
    let first = bundles.first().ok_or_else(|| {
        Error::InvalidArgument("brownianity report needs at least one path".into())
    })?;
    let sums: Vec<_> = bundles.iter().map(|b| increment_sums(&b.vcheck)).collect();
    let terminals: Vec<_> = bundles
        .iter()
        .map(|b| b.vcheck.column(b.vcheck.ncols() - 1).into_owned())
        .collect();
    Ok(brownianity_from(
        &sums,
        &terminals,
        first.grid.steps(),
        first.grid.horizon(),
    ))
}

/// What a batch keeps from each path.
struct PathSummary {
    cost: f64,
    /// Cost functional evaluated on `(X̂, u)`.
    filtered_cost: f64,
    /// Quadratic state cost of `X̃` alone.
    error_cost: f64,
    probes: Vec<(DVector<f64>, DVector<f64>)>,
    increments: Vec<IncrementSums>,
    vcheck_terminal: DVector<f64>,
}

fn summarize(plan: &SimulationPlan, b: &PathBundle, probe_nodes: &[usize]) -> PathSummary {
    let steps = plan.grid.steps();
    let h = plan.grid.step_size();
    let mut filtered = 0.0;
    let mut error = 0.0;
    for i in 0..steps {
        let node = &plan.nodes[i];
        let xhat = b.xhat.column(i).into_owned();
        let xtil = b.xtil.column(i).into_owned();
        let u = b.u.column(i).into_owned();
        filtered += running_cost_sample(&node.cost, &xhat, &u) * h;
        error += xtil.dot(&(&node.cost.state * &xtil)) * h;
    }
    let xhat_t = b.xhat.column(steps).into_owned();
    let xtil_t = b.xtil.column(steps).into_owned();
    filtered += plan.terminal_cost(&xhat_t);
    error += xtil_t.dot(&(&plan.terminal * &xtil_t));
    PathSummary {
        cost: b.cost,
        filtered_cost: filtered,
        error_cost: error,
        probes: probe_nodes
            .iter()
            .map(|&i| (b.xtil.column(i).into_owned(), b.xhat.column(i).into_owned()))
            .collect(),
        increments: increment_sums(&b.vcheck),
        vcheck_terminal: b.vcheck.column(steps).into_owned(),
    }
}

/// Error statistics at one probe node.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeStats {
    pub node: usize,
    pub t: f64,
    /// `(1/n) Σ X̃ X̃ᵀ`.
    pub emp_error_cov: DMatrix<f64>,
    pub emp_error_cov_se: DMatrix<f64>,
    /// Σ from the deterministic solution.
    pub sigma: DMatrix<f64>,
    /// Mean of `<X̃, X̂>` over paths.
    pub orthogonality: MeanSe,
}

/// Per-path split `J = Ĵ + J̃ + cross`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecompositionStats {
    pub total_cost: MeanSe,
    pub filtered_cost: MeanSe,
    pub error_cost: MeanSe,
    /// `J - Ĵ - J̃`, expect 0.
    pub cross_term: MeanSe,
    /// Closed-form estimation cost.
    pub estimation_cost: f64,
}

/// Cost of one policy in a batch or comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyCost {
    pub label: String,
    pub cost: MeanSe,
    /// Paired difference to the optimal feedback; zero for the feedback
    /// itself.
    pub excess: MeanSe,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchReport {
    pub n_paths: usize,
    pub steps: usize,
    pub policy: String,
    pub cost_mean: f64,
    pub cost_se: f64,
    /// Closed-form optimal value at the model's `x0`.
    pub analytic_value: f64,
    pub probes: Vec<ProbeStats>,
    pub innovation: BrownianityStats,
    pub decomposition: DecompositionStats,
    pub per_policy_costs: Vec<PolicyCost>,
}

impl BatchReport {
    pub fn innovation_increment_mean(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.innovation.components.len(),
            self.innovation
                .components
                .iter()
                .map(|c| c.increment_mean.mean),
        )
    }

    pub fn innovation_qv_ratio(&self) -> f64 {
        self.innovation.quadratic_variation_ratio
    }
}

fn simulate_summaries(
    plan: &SimulationPlan,
    policy: &ControlPolicy,
    n_paths: usize,
    seed: u64,
    probe_nodes: &[usize],
    dims: &crate::model::Dimensions,
) -> Result<Vec<PathSummary>> {
    (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let noise = draw_noise(seed, p as u64, &plan.grid, dims);
            let bundle = plan.simulate(policy, &noise)?;
            Ok(summarize(plan, &bundle, probe_nodes))
        })
        .collect()
}

/// Simulates `n_paths` independent paths of `policy` and collects every
/// batch statistic, with error statistics at each of `probe_nodes`.
pub fn run_batch(
    model: &ModelSpec,
    sol: &DeterministicSolution,
    policy: &ControlPolicy,
    n_paths: usize,
    seed: u64,
    probe_nodes: &[usize],
) -> Result<BatchReport> {
    require_paths(n_paths)?;
    let grid = sol.grid;
    if let Some(&bad) = probe_nodes.iter().find(|&&i| i > grid.steps()) {
        return Err(Error::InvalidArgument(format!(
            "probe node {bad} outside a grid of {} steps",
            grid.steps()
        )));
    }
    let plan = SimulationPlan::new(model, sol)?;
    let summaries = simulate_summaries(&plan, policy, n_paths, seed, probe_nodes, &model.dims)?;

    let costs: Vec<f64> = summaries.iter().map(|s| s.cost).collect();
    let filtered: Vec<f64> = summaries.iter().map(|s| s.filtered_cost).collect();
    let errors: Vec<f64> = summaries.iter().map(|s| s.error_cost).collect();
    let cross: Vec<f64> = summaries
        .iter()
        .map(|s| s.cost - s.filtered_cost - s.error_cost)
        .collect();
    let cost = MeanSe::from_samples(&costs);

    let n = model.dims.n;
    let probes = probe_nodes
        .iter()
        .enumerate()
        .map(|(k, &node)| {
            let mut cov = DMatrix::zeros(n, n);
            let mut cov_se = DMatrix::zeros(n, n);
            for a in 0..n {
                for b in 0..n {
                    let xs: Vec<f64> = summaries
                        .iter()
                        .map(|s| s.probes[k].0[a] * s.probes[k].0[b])
                        .collect();
                    let m = MeanSe::from_samples(&xs);
                    cov[(a, b)] = m.mean;
                    cov_se[(a, b)] = m.se;
                }
            }
            let orth: Vec<f64> = summaries
                .iter()
                .map(|s| s.probes[k].0.dot(&s.probes[k].1))
                .collect();
            ProbeStats {
                node,
                t: grid.node(node),
                emp_error_cov: cov,
                emp_error_cov_se: cov_se,
                sigma: sol.error_covariance.values[node].clone(),
                orthogonality: MeanSe::from_samples(&orth),
            }
        })
        .collect();

    let sums: Vec<_> = summaries.iter().map(|s| s.increments.clone()).collect();
    let terminals: Vec<_> = summaries
        .iter()
        .map(|s| s.vcheck_terminal.clone())
        .collect();

    Ok(BatchReport {
        n_paths,
        steps: grid.steps(),
        policy: policy.label().to_string(),
        cost_mean: cost.mean,
        cost_se: cost.se,
        analytic_value: optimal_value(&model.x0, sol, model)?.total,
        probes,
        innovation: brownianity_from(&sums, &terminals, grid.steps(), grid.horizon()),
        decomposition: DecompositionStats {
            total_cost: cost,
            filtered_cost: MeanSe::from_samples(&filtered),
            error_cost: MeanSe::from_samples(&errors),
            cross_term: MeanSe::from_samples(&cross),
            estimation_cost: estimation_cost(sol, model)?,
        },
        per_policy_costs: vec![PolicyCost {
            label: policy.label().to_string(),
            cost,
            excess: MeanSe { mean: 0.0, se: 0.0 },
        }],
    })
}

/// Realized costs of each policy on each path, with path `p` of every
/// policy driven by the same noise.
fn common_noise_costs(
    plans: &[(&SimulationPlan, Vec<ControlPolicy>)],
    n_paths: usize,
    noise_for: impl Fn(u64) -> Vec<NoiseDraw> + Sync,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let per_path: Vec<Vec<Vec<f64>>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let draws = noise_for(p as u64);
            plans
                .iter()
                .zip(&draws)
                .map(|((plan, policies), noise)| {
                    policies
                        .iter()
                        .map(|pol| plan.simulate(pol, noise).map(|b| b.cost))
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    // transpose to [plan][policy][path]
    Ok((0..plans.len())
        .map(|g| {
            (0..plans[g].1.len())
                .map(|k| per_path.iter().map(|path| path[g][k]).collect())
                .collect()
        })
        .collect())
}

/// Policy costs under common random numbers, sorted by mean ascending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyComparison {
    pub n_paths: usize,
    pub rows: Vec<PolicyCost>,
}

impl PolicyComparison {
    pub fn get(&self, label: &str) -> Option<&PolicyCost> {
        self.rows.iter().find(|r| r.label == label)
    }
}

fn feedback_index(policies: &[ControlPolicy]) -> Result<usize> {
    policies
        .iter()
        .position(|p| *p == ControlPolicy::FilterFeedback)
        .ok_or_else(|| {
            Error::InvalidArgument("policy comparison needs the optimal feedback".into())
        })
}

/// Runs every policy on the same noise paths and reports per-policy costs
/// and paired excess over the optimal feedback.
pub fn compare_policies(
    model: &ModelSpec,
    sol: &DeterministicSolution,
    policies: &[ControlPolicy],
    n_paths: usize,
    seed: u64,
) -> Result<PolicyComparison> {
    require_paths(n_paths)?;
    let base = feedback_index(policies)?;
    let plan = SimulationPlan::new(model, sol)?;
    let grid = sol.grid;
    let dims = model.dims;
    let costs = common_noise_costs(&[(&plan, policies.to_vec())], n_paths, |p| {
        vec![draw_noise(seed, p, &grid, &dims)]
    })?
    .remove(0);
    let mut rows: Vec<PolicyCost> = policies
        .iter()
        .zip(&costs)
        .map(|(pol, c)| PolicyCost {
            label: pol.label().to_string(),
            cost: MeanSe::from_samples(c),
            excess: paired(c, &costs[base], |a, b| a - b),
        })
        .collect();
    rows.sort_by(|a, b| a.cost.mean.total_cmp(&b.cost.mean));
    Ok(PolicyComparison { n_paths, rows })
}

/// Runs the optimal feedback and reports the empirical split
/// `J = Ĵ + J̃ + cross` next to the closed-form estimation cost.
pub fn decomposition_check(
    model: &ModelSpec,
    sol: &DeterministicSolution,
    n_paths: usize,
    seed: u64,
) -> Result<DecompositionStats> {
    Ok(run_batch(
        model,
        sol,
        &ControlPolicy::FilterFeedback,
        n_paths,
        seed,
        &[],
    )?
    .decomposition)
}

/// Step-halving results for one policy: grid `h` against `h/2`, with the
/// coarse noise obtained by summing pairs of fine increments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HalvingRow {
    pub label: String,
    pub coarse: MeanSe,
    pub fine: MeanSe,
    /// `c_h - c_{h/2}` per path.
    pub difference: MeanSe,
    /// `2c_{h/2} - c_h` per path.
    pub extrapolated: MeanSe,
    /// Paired excess over the first policy, at `h`.
    pub excess_coarse: MeanSe,
    /// Change of that excess between `h` and `h/2`.
    pub excess_difference: MeanSe,
}

impl HalvingRow {
    pub fn cost_allowance(&self) -> f64 {
        HALVING_ALLOWANCE_FACTOR * self.difference.mean.abs()
    }

    pub fn excess_allowance(&self) -> f64 {
        HALVING_ALLOWANCE_FACTOR * self.excess_difference.mean.abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HalvingStudy {
    pub n_paths: usize,
    pub coarse_steps: usize,
    pub fine_steps: usize,
    pub rows: Vec<HalvingRow>,
}

/// Simulates `policies` on `sol.grid` and on `fine.grid` (twice as many
/// steps) with coupled noise.
pub fn step_halving(
    model: &ModelSpec,
    sol: &DeterministicSolution,
    fine: &DeterministicSolution,
    policies: &[ControlPolicy],
    n_paths: usize,
    seed: u64,
) -> Result<HalvingStudy> {
    require_paths(n_paths)?;
    if fine.grid.steps() != 2 * sol.grid.steps() || fine.grid.horizon() != sol.grid.horizon() {
        return Err(Error::InvalidArgument(
            "the fine solution must have twice the steps of the coarse one".into(),
        ));
    }
    if policies.is_empty() {
        return Err(Error::InvalidArgument(
            "step halving needs at least one policy".into(),
        ));
    }
    let coarse_plan = SimulationPlan::new(model, sol)?;
    let fine_plan = SimulationPlan::new(model, fine)?;
    let fine_policies = policies
        .iter()
        .map(|p| p.on_grid(fine.grid))
        .collect::<Result<Vec<_>>>()?;
    let fine_grid = fine.grid;
    let dims = model.dims;
    let costs = common_noise_costs(
        &[
            (&coarse_plan, policies.to_vec()),
            (&fine_plan, fine_policies),
        ],
        n_paths,
        |p| {
            let f = draw_noise(seed, p, &fine_grid, &dims);
            let c = f.coarsen(2).expect("even number of fine steps");
            vec![c, f]
        },
    )?;
    let (coarse, finer) = (&costs[0], &costs[1]);
    let rows = policies
        .iter()
        .enumerate()
        .map(|(k, pol)| {
            let e_coarse: Vec<f64> = coarse[k]
                .iter()
                .zip(&coarse[0])
                .map(|(a, b)| a - b)
                .collect();
            let e_fine: Vec<f64> = finer[k].iter().zip(&finer[0]).map(|(a, b)| a - b).collect();
            HalvingRow {
                label: pol.label().to_string(),
                coarse: MeanSe::from_samples(&coarse[k]),
                fine: MeanSe::from_samples(&finer[k]),
                difference: paired(&coarse[k], &finer[k], |a, b| a - b),
                extrapolated: paired(&coarse[k], &finer[k], |a, b| 2.0 * b - a),
                excess_coarse: MeanSe::from_samples(&e_coarse),
                excess_difference: paired(&e_coarse, &e_fine, |a, b| a - b),
            }
        })
        .collect();
    Ok(HalvingStudy {
        n_paths,
        coarse_steps: sol.grid.steps(),
        fine_steps: fine.grid.steps(),
        rows,
    })
}

/// Exact covariance of the Euler error recursion
/// `X̃ᵢ₊₁ = (I + (A - LH)h) X̃ᵢ + (C - LK) ΔWᵢ + D ΔW'ᵢ`, one matrix per node.
pub fn euler_error_covariance(plan: &SimulationPlan) -> Vec<DMatrix<f64>> {
    let h = plan.grid.step_size();
    let n = plan.x0.len();
    let mut out = Vec::with_capacity(plan.grid.len());
    let mut s = DMatrix::zeros(n, n);
    out.push(s.clone());
    for node in &plan.nodes[..plan.grid.steps()] {
        let c = &node.coeffs;
        let m = DMatrix::identity(n, n) + (&c.dynamics - &node.filter_gain * &c.observation) * h;
        let g = &c.shared_noise - &node.filter_gain * &c.observation_noise;
        s = &m * &s * m.transpose() + (&g * g.transpose() + c.state_noise_cov()) * h;
        out.push(s.clone());
    }
    out
}

/// Expected error cost `Σ h tr(Q Sᵢ) + tr(G S_N)` under the Euler
/// covariance `S`.
pub fn euler_error_cost(plan: &SimulationPlan, cov: &[DMatrix<f64>]) -> f64 {
    let h = plan.grid.step_size();
    let steps = plan.grid.steps();
    let running: f64 = (0..steps)
        .map(|i| (&plan.nodes[i].cost.state * &cov[i]).trace() * h)
        .sum();
    running + (&plan.terminal * &cov[steps]).trace()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// Pass iff `|estimate - target| <= tolerance`.
    Band,
    /// Pass iff `estimate - target >= tolerance`.
    LowerBound,
}

/// One pass/fail line of a verification run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub target: f64,
    pub tolerance: f64,
    pub kind: CheckKind,
    pub pass: bool,
}

impl Check {
    fn slack(target: f64) -> f64 {
        1e-12 * (1.0 + target.abs())
    }

    pub fn band(
        name: impl Into<String>,
        estimate: f64,
        se: f64,
        target: f64,
        tolerance: f64,
    ) -> Self {
        let pass = (estimate - target).abs() <= tolerance + Self::slack(target);
        Self {
            name: name.into(),
            estimate,
            se,
            target,
            tolerance,
            kind: CheckKind::Band,
            pass,
        }
    }

    pub fn lower_bound(
        name: impl Into<String>,
        estimate: f64,
        se: f64,
        target: f64,
        tolerance: f64,
    ) -> Self {
        let pass = estimate - target >= tolerance - Self::slack(target);
        Self {
            name: name.into(),
            estimate,
            se,
            target,
            tolerance,
            kind: CheckKind::LowerBound,
            pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub probe_nodes: Vec<usize>,
    /// Constant offset added to every control component for the
    /// suboptimality check.
    pub perturbation: f64,
    /// Multiplies Σ after solving. Only for demonstrating that the checks
    /// catch a wrong covariance; 1 in normal use.
    pub sigma_scale: f64,
}

impl SuiteConfig {
    /// Probes at `T/4, T/2, 3T/4, T` (nearest nodes).
    pub fn new(n_paths: usize, seed: u64, grid: &crate::grid::TimeGrid) -> Self {
        let t = grid.horizon();
        Self {
            n_paths,
            seed,
            probe_nodes: [0.25, 0.5, 0.75, 1.0]
                .iter()
                .map(|f| grid.nearest_node(f * t))
                .collect(),
            perturbation: 0.5,
            sigma_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub batch: BatchReport,
    pub comparison: PolicyComparison,
    pub halving: HalvingStudy,
    /// Allowance on each probe covariance entry, from Euler covariances at
    /// `h` and `h/2`.
    pub covariance_allowance: Vec<DMatrix<f64>>,
    pub estimation_allowance: f64,
    /// `∫ <Rε, ε> dt`.
    pub predicted_excess: f64,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Scales Σ in place; the filter gain built from it changes accordingly.
pub fn scale_error_covariance(sol: &mut DeterministicSolution, factor: f64) {
    for s in &mut sol.error_covariance.values {
        *s *= factor;
    }
}

/// The full verification run on `steps` intervals.
pub fn run_suite(model: &ModelSpec, steps: usize, config: &SuiteConfig) -> Result<SuiteReport> {
    require_paths(config.n_paths)?;
    let grid = model.grid(steps)?;
    let (sol, fine) = rayon::join(
        || solve_all(model, &grid),
        || solve_all(model, &grid.refined(2)),
    );
    let (mut sol, mut fine) = (sol?, fine?);
    if config.sigma_scale != 1.0 {
        scale_error_covariance(&mut sol, config.sigma_scale);
        scale_error_covariance(&mut fine, config.sigma_scale);
    }
    let (n_paths, seed) = (config.n_paths, config.seed);
    let m = model.dims.m;
    let epsilon = DVector::from_element(m, config.perturbation);
    let perturbed = ControlPolicy::perturbed_constant(grid, epsilon.clone());

    let batch = run_batch(
        model,
        &sol,
        &ControlPolicy::FilterFeedback,
        n_paths,
        seed,
        &config.probe_nodes,
    )?;
    let comparison = compare_policies(
        model,
        &sol,
        &[
            ControlPolicy::FilterFeedback,
            perturbed.clone(),
            ControlPolicy::ZeroControl,
        ],
        n_paths,
        seed,
    )?;
    let halving = step_halving(
        model,
        &sol,
        &fine,
        &[ControlPolicy::FilterFeedback, perturbed],
        n_paths,
        seed,
    )?;

    let coarse_plan = SimulationPlan::new(model, &sol)?;
    let fine_plan = SimulationPlan::new(model, &fine)?;
    let s_coarse = euler_error_covariance(&coarse_plan);
    let s_fine = euler_error_covariance(&fine_plan);
    let covariance_allowance: Vec<DMatrix<f64>> = config
        .probe_nodes
        .iter()
        .map(|&i| (&s_coarse[i] - &s_fine[2 * i]).abs() * HALVING_ALLOWANCE_FACTOR)
        .collect();
    let estimation_allowance = HALVING_ALLOWANCE_FACTOR
        * (euler_error_cost(&coarse_plan, &s_coarse) - euler_error_cost(&fine_plan, &s_fine)).abs();
    let h = grid.step_size();
    let predicted_excess: f64 = (0..=steps)
        .map(|i| {
            let w = if i == 0 || i == steps { 0.5 * h } else { h };
            w * epsilon.dot(&(&coarse_plan.nodes[i].cost.control * &epsilon))
        })
        .sum();

    let mut checks = Vec::new();
    let ff = &halving.rows[0];
    checks.push(Check::band(
        "optimal_value",
        batch.cost_mean,
        batch.cost_se,
        batch.analytic_value,
        3.0 * batch.cost_se + ff.cost_allowance(),
    ));
    checks.push(Check::band(
        "optimal_value_extrapolated",
        ff.extrapolated.mean,
        ff.extrapolated.se,
        batch.analytic_value,
        3.0 * ff.extrapolated.se,
    ));
    for (probe, allowance) in batch.probes.iter().zip(&covariance_allowance) {
        let n = probe.sigma.nrows();
        for a in 0..n {
            for b in a..n {
                let se = probe.emp_error_cov_se[(a, b)];
                checks.push(Check::band(
                    format!("error_covariance[{a},{b}]@t={}", probe.t),
                    probe.emp_error_cov[(a, b)],
                    se,
                    probe.sigma[(a, b)],
                    3.0 * se + allowance[(a, b)],
                ));
            }
        }
    }
    for probe in &batch.probes {
        let o = probe.orthogonality;
        checks.push(Check::band(
            format!("orthogonality@t={}", probe.t),
            o.mean,
            o.se,
            0.0,
            3.0 * o.se,
        ));
    }
    for (j, c) in batch.innovation.components.iter().enumerate() {
        let tv = c.terminal_variance;
        checks.push(Check::band(
            format!("innovation_terminal_variance[{j}]"),
            tv.mean,
            tv.se,
            grid.horizon(),
            3.0 * tv.se,
        ));
        checks.push(Check::band(
            format!("innovation_lag1_autocorrelation[{j}]"),
            c.lag1_autocorrelation,
            c.lag1_band / 3.0,
            0.0,
            c.lag1_band,
        ));
    }
    let dec = &batch.decomposition;
    checks.push(Check::band(
        "decomposition_cross_term",
        dec.cross_term.mean,
        dec.cross_term.se,
        0.0,
        3.0 * dec.cross_term.se,
    ));
    checks.push(Check::band(
        "estimation_cost",
        dec.error_cost.mean,
        dec.error_cost.se,
        dec.estimation_cost,
        3.0 * dec.error_cost.se + estimation_allowance,
    ));
    let pert = &halving.rows[1];
    checks.push(Check::band(
        "perturbed_excess",
        pert.excess_coarse.mean,
        pert.excess_coarse.se,
        predicted_excess,
        3.0 * pert.excess_coarse.se + pert.excess_allowance(),
    ));
    let opt = comparison
        .get(ControlPolicy::FilterFeedback.label())
        .expect("feedback row");
    let zero = comparison
        .get(ControlPolicy::ZeroControl.label())
        .expect("zero row");
    let combined = (opt.cost.se.powi(2) + zero.cost.se.powi(2)).sqrt();
    checks.push(Check::lower_bound(
        "zero_control_gap",
        zero.cost.mean - opt.cost.mean,
        combined,
        0.0,
        2.0 * combined,
    ));

    Ok(SuiteReport {
        batch,
        comparison,
        halving,
        covariance_allowance,
        estimation_allowance,
        predicted_excess,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConstantModel, Dimensions};

    fn m1(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    fn noiseless(x0: f64) -> ModelSpec {
        let mut m = ConstantModel::scalar_benchmark();
        m.coeffs.state_noise = m1(0.0);
        m.coeffs.observation_noise = m1(1.0);
        m.x0 = DVector::from_element(1, x0);
        m.build(1.0).unwrap()
    }

    #[test]
    fn mean_se_basics() {
        let m = MeanSe::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        let s = MeanSe::from_sums(4.0, 10.0, 30.0);
        assert!((s.se - m.se).abs() < 1e-15);
        assert_eq!(MeanSe::from_samples(&[7.0, 7.0]).se, 0.0);
    }

    #[test]
    fn too_few_paths() {
        let model = ConstantModel::scalar_benchmark().build(1.0).unwrap();
        let sol = solve_all(&model, &model.grid(10).unwrap()).unwrap();
        let err = run_batch(&model, &sol, &ControlPolicy::FilterFeedback, 1, 0, &[]).unwrap_err();
        assert!(matches!(err, Error::InsufficientPaths(1)));
    }

    #[test]
    fn zero_noise_batch_is_degenerate() {
        let model = noiseless(1.0);
        let sol = solve_all(&model, &model.grid(50).unwrap()).unwrap();
        let plan = SimulationPlan::new(&model, &sol).unwrap();
        // the observation noise still drives V̌; use a zero draw for the
        // single reference path
        let reference = plan
            .simulate(
                &ControlPolicy::FilterFeedback,
                &NoiseDraw::zeros(&sol.grid, &model.dims),
            )
            .unwrap();
        let stats = brownianity_report(std::slice::from_ref(&reference)).unwrap();
        let c = stats.components[0];
        assert_eq!(c.increment_mean.mean, 0.0);
        assert_eq!(c.increment_variance.mean, 0.0);
        assert_eq!(c.lag1_autocorrelation, 0.0);
        assert_eq!(c.terminal_variance.mean, 0.0);

        // with K dW the only noise and C = 0, the state path is noise free
        let batch = run_batch(
            &model,
            &sol,
            &ControlPolicy::FilterFeedback,
            8,
            3,
            &[25, 50],
        )
        .unwrap();
        assert_eq!(batch.cost_se, 0.0);
        assert!((batch.cost_mean - reference.cost).abs() <= 1e-14 * reference.cost);
        assert_eq!(batch.decomposition.error_cost.mean, 0.0);
        assert_eq!(batch.decomposition.estimation_cost, 0.0);
        assert!(batch.probes.iter().all(|p| p.emp_error_cov[(0, 0)] == 0.0));
    }

    #[test]
    fn batch_is_reproducible() {
        let model = ConstantModel::scalar_benchmark().build(1.0).unwrap();
        let sol = solve_all(&model, &model.grid(40).unwrap()).unwrap();
        let a = run_batch(
            &model,
            &sol,
            &ControlPolicy::FilterFeedback,
            64,
            5,
            &[20, 40],
        )
        .unwrap();
        let b = run_batch(
            &model,
            &sol,
            &ControlPolicy::FilterFeedback,
            64,
            5,
            &[20, 40],
        )
        .unwrap();
        assert_eq!(a, b);
        let c = run_batch(
            &model,
            &sol,
            &ControlPolicy::FilterFeedback,
            64,
            6,
            &[20, 40],
        )
        .unwrap();
        assert_ne!(a.cost_mean, c.cost_mean);
    }

    #[test]
    fn comparison_requires_feedback_and_sorts() {
        let model = ConstantModel::scalar_benchmark().build(1.0).unwrap();
        let sol = solve_all(&model, &model.grid(40).unwrap()).unwrap();
        assert!(compare_policies(&model, &sol, &[ControlPolicy::ZeroControl], 10, 1).is_err());
        let cmp = compare_policies(
            &model,
            &sol,
            &[ControlPolicy::ZeroControl, ControlPolicy::FilterFeedback],
            200,
            1,
        )
        .unwrap();
        assert!(cmp.rows[0].cost.mean <= cmp.rows[1].cost.mean);
        assert_eq!(cmp.get("filter_feedback").unwrap().excess.mean, 0.0);
    }

    #[test]
    fn zero_perturbation_matches_feedback_bitwise() {
        let model = ConstantModel::scalar_benchmark().build(1.0).unwrap();
        let sol = solve_all(&model, &model.grid(40).unwrap()).unwrap();
        let zero = ControlPolicy::perturbed_constant(sol.grid, DVector::zeros(1));
        let cmp =
            compare_policies(&model, &sol, &[ControlPolicy::FilterFeedback, zero], 50, 9).unwrap();
        assert_eq!(
            cmp.rows[0].cost.mean.to_bits(),
            cmp.rows[1].cost.mean.to_bits()
        );
        assert_eq!(cmp.rows[1].excess.mean, 0.0);
    }

    #[test]
    fn euler_covariance_matches_exact_recursion_limit() {
        // Euler covariance converges to Σ at first order
        let model = ConstantModel::scalar_benchmark().build(1.0).unwrap();
        let err = |steps: usize| {
            let sol = solve_all(&model, &model.grid(steps).unwrap()).unwrap();
            let plan = SimulationPlan::new(&model, &sol).unwrap();
            let s = euler_error_covariance(&plan);
            (s[steps][(0, 0)] - 1f64.tanh()).abs()
        };
        let (e1, e2) = (err(100), err(200));
        assert!(e1 < 1e-2 && e2 < e1);
        assert!((e1 / e2 - 2.0).abs() < 0.2, "{}", e1 / e2);
    }

    #[test]
    fn halving_needs_matching_grids() {
        let model = ConstantModel::scalar_benchmark().build(1.0).unwrap();
        let a = solve_all(&model, &model.grid(10).unwrap()).unwrap();
        let b = solve_all(&model, &model.grid(30).unwrap()).unwrap();
        assert!(step_halving(&model, &a, &b, &[ControlPolicy::FilterFeedback], 4, 0).is_err());
    }

    #[test]
    fn noiseless_suite_passes_with_zero_start() {
        let model = noiseless(0.0);
        let grid = model.grid(40).unwrap();
        let report = run_suite(&model, 40, &SuiteConfig::new(16, 1, &grid)).unwrap();
        for c in &report.checks {
            assert!(c.pass, "{c:?}");
        }
    }

    #[test]
    fn lower_bound_and_band() {
        assert!(Check::band("x", 1.0, 0.1, 1.2, 0.3).pass);
        assert!(!Check::band("x", 1.0, 0.1, 1.4, 0.3).pass);
        assert!(Check::lower_bound("x", 1.0, 0.1, 0.0, 0.2).pass);
        assert!(!Check::lower_bound("x", 0.1, 0.1, 0.0, 0.2).pass);
        assert!(Check::lower_bound("x", 0.0, 0.0, 0.0, 0.0).pass);
    }

    #[test]
    fn multi_dimensional_batch_shapes() {
        let mut m = ConstantModel::zeros(Dimensions::new(2, 1, 2, 1).unwrap());
        m.coeffs.observation = DMatrix::identity(2, 2);
        m.coeffs.state_noise = DMatrix::from_row_slice(2, 1, &[1.0, 0.5]);
        m.coeffs.input = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        m.cost.state = DMatrix::identity(2, 2);
        m.x0 = DVector::from_row_slice(&[1.0, 0.0]);
        let model = m.build(1.0).unwrap();
        let sol = solve_all(&model, &model.grid(20).unwrap()).unwrap();
        let b = run_batch(&model, &sol, &ControlPolicy::FilterFeedback, 30, 2, &[10]).unwrap();
        assert_eq!(b.probes[0].emp_error_cov.shape(), (2, 2));
        assert_eq!(b.innovation.components.len(), 2);
        assert_eq!(b.innovation_increment_mean().len(), 2);
    }
}
