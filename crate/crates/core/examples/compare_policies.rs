//! Runs several policies on common noise and prints costs and the paired
//! excess over the optimal feedback. A constant offset `ε` added to the
//! optimal control costs exactly `∫<Rε,ε>dt` extra in expectation.
//!
//! ```text
//! cargo run --release --example compare_policies -- [paths] [seed]
//! ```

use nalgebra::DVector;
use polq::detsolve::solve_all;
use polq::model::ConstantModel;
use polq::ode::VectorPath;
use polq::simulate::ControlPolicy;
use polq::verify::compare_policies;

fn main() -> polq::Result<()> {
    let mut args = std::env::args().skip(1);
    let paths = args.next().map_or(5_000, |s| s.parse().expect("paths"));
    let seed = args.next().map_or(3, |s| s.parse().expect("seed"));

    let model = ConstantModel::scalar_benchmark().build(1.0)?;
    let grid = model.grid(400)?;
    let sol = solve_all(&model, &grid)?;
    let policies = [
        ControlPolicy::FilterFeedback,
        ControlPolicy::perturbed_constant(grid, DVector::from_element(1, 0.5)),
        ControlPolicy::ZeroControl,
        // optimal for the noise-free system, blind to the observations
        ControlPolicy::OpenLoop(VectorPath::from_fn(grid, |t| {
            DVector::from_element(1, -(1.0 - t).sinh() / 1f64.cosh())
        })),
    ];
    let comparison = compare_policies(&model, &sol, &policies, paths, seed)?;

    println!("{paths} paths");
    println!(
        "{:<20} {:>10} {:>9} {:>10} {:>9}",
        "policy", "cost", "se", "excess", "se"
    );
    for row in &comparison.rows {
        println!(
            "{:<20} {:>10.5} {:>9.5} {:>10.5} {:>9.5}",
            row.label, row.cost.mean, row.cost.se, row.excess.mean, row.excess.se
        );
    }
    Ok(())
}
