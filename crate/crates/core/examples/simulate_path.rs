//! Simulates one closed-loop path under the optimal feedback and prints the
//! state, the filter and the estimate error at a few nodes, then checks the
//! error against the directly simulated error equation.
//!
//! ```text
//! cargo run --release --example simulate_path -- [seed] [path]
//! ```

use polq::detsolve::solve_all;
use polq::model::ConstantModel;
use polq::noise::draw_noise;
use polq::simulate::{ControlPolicy, SimulationPlan};

fn main() -> polq::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().map_or(1, |s| s.parse().expect("seed"));
    let path = args.next().map_or(0, |s| s.parse().expect("path"));

    let model = ConstantModel::scalar_benchmark().build(1.0)?;
    let grid = model.grid(400)?;
    let sol = solve_all(&model, &grid)?;
    let plan = SimulationPlan::new(&model, &sol)?;
    let noise = draw_noise(seed, path, &grid, &model.dims);
    let bundle = plan.simulate(&ControlPolicy::FilterFeedback, &noise)?;

    println!(
        "{:>6} {:>10} {:>10} {:>10} {:>10}",
        "t", "X", "Xhat", "Xtil", "V"
    );
    for i in (0..=grid.steps()).step_by(50) {
        println!(
            "{:>6.3} {:>10.5} {:>10.5} {:>10.5} {:>10.5}",
            grid.node(i),
            bundle.x[(0, i)],
            bundle.xhat[(0, i)],
            bundle.xtil[(0, i)],
            bundle.v[(0, i)]
        );
    }
    println!("realized cost {:.6}", bundle.cost);

    let direct = plan.simulate_error(&noise)?;
    let gap = (&direct - &bundle.xtil).amax();
    println!("max |Xtil - direct error| = {gap:.2e}");
    Ok(())
}
