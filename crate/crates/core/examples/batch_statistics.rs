//! Runs a Monte Carlo batch and prints the empirical error covariance and
//! orthogonality at a few times, the innovation statistics and the
//! empirical cost split.
//!
//! ```text
//! cargo run --release --example batch_statistics -- [paths] [seed]
//! ```

use polq::detsolve::solve_all;
use polq::model::ConstantModel;
use polq::simulate::ControlPolicy;
use polq::verify::run_batch;

fn main() -> polq::Result<()> {
    let mut args = std::env::args().skip(1);
    let paths = args.next().map_or(5_000, |s| s.parse().expect("paths"));
    let seed = args.next().map_or(5, |s| s.parse().expect("seed"));

    let model = ConstantModel::scalar_benchmark().build(1.0)?;
    let grid = model.grid(400)?;
    let sol = solve_all(&model, &grid)?;
    let probes = [100, 200, 300, 400];
    let report = run_batch(
        &model,
        &sol,
        &ControlPolicy::FilterFeedback,
        paths,
        seed,
        &probes,
    )?;

    println!(
        "cost {:.5} ± {:.5}, analytic {:.5}",
        report.cost_mean, report.cost_se, report.analytic_value
    );
    for p in &report.probes {
        println!(
            "t = {:.2}: cov {:.5} ± {:.5} (Σ {:.5}), <Xtil, Xhat> {:+.5} ± {:.5}",
            p.t,
            p.emp_error_cov[(0, 0)],
            p.emp_error_cov_se[(0, 0)],
            p.sigma[(0, 0)],
            p.orthogonality.mean,
            p.orthogonality.se
        );
    }
    let v = &report.innovation.components[0];
    println!(
        "innovation: terminal variance {:.4} ± {:.4}, lag-1 autocorrelation {:+.5}, QV ratio {:.4}",
        v.terminal_variance.mean,
        v.terminal_variance.se,
        v.lag1_autocorrelation,
        report.innovation_qv_ratio()
    );
    let d = &report.decomposition;
    println!(
        "split: Ĵ {:.5}, J̃ {:.5} (closed form {:.5}), cross {:+.5} ± {:.5}",
        d.filtered_cost.mean,
        d.error_cost.mean,
        d.estimation_cost,
        d.cross_term.mean,
        d.cross_term.se
    );
    Ok(())
}
