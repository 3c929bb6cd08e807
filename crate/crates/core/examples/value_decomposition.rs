//! Prints the optimal value term by term and its split into the
//! control-independent estimation cost and the filtered-cost floor.
//!
//! ```text
//! cargo run --release --example value_decomposition -- [x0]
//! ```

use nalgebra::DVector;
use polq::detsolve::solve_all;
use polq::model::ConstantModel;
use polq::value::{estimation_cost, filtered_cost_floor, optimal_value};

fn main() -> polq::Result<()> {
    let x0: f64 = std::env::args()
        .nth(1)
        .map_or(1.0, |s| s.parse().expect("x0"));
    let model = ConstantModel::scalar_benchmark().build(1.0)?;
    let sol = solve_all(&model, &model.grid(1000)?)?;
    let x = DVector::from_element(1, x0);

    let value = optimal_value(&x, &sol, &model)?;
    for (name, v) in value.entries() {
        println!("{name:<20} {v:>20.16}");
    }
    let estimation = estimation_cost(&sol, &model)?;
    let floor = filtered_cost_floor(&x, &sol, &model)?;
    println!();
    println!("{:<20} {estimation:>20.16}", "estimation cost");
    println!("{:<20} {floor:>20.16}", "filtered floor");
    println!(
        "{:<20} {:>20.3e}",
        "floor + est - total",
        floor + estimation - value.total
    );
    println!("{:<20} {:>20.16}", "ln cosh 1", 1f64.cosh().ln());
    Ok(())
}
