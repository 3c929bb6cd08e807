//! Loads a scenario file, solves it and writes the solution, value and
//! plot documents to a directory, the same as `polq solve`.
//!
//! ```text
//! cargo run --release --example scenario_pipeline -- [scenario.json] [out-dir]
//! ```

use std::path::PathBuf;

use polq::detsolve::solve_all;
use polq::export::{solution_document, solution_plot_csv, to_json, value_document, write_files};
use polq::scenario::{load_scenario, serialize_scenario};
use polq::value::{estimation_cost, filtered_cost_floor, optimal_value};

fn main() -> polq::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().map_or_else(
        || PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/double_integrator.json"),
        PathBuf::from,
    );
    let out = args.next().map_or_else(
        || std::env::temp_dir().join("polq-scenario-pipeline"),
        PathBuf::from,
    );

    let scenario = load_scenario(&path)?;
    let model = &scenario.model;
    println!(
        "{}: n = {}, m = {}, {} steps",
        path.display(),
        model.dims.n,
        model.dims.m,
        scenario.grid.steps()
    );

    let sol = solve_all(model, &scenario.grid)?;
    let value = optimal_value(&model.x0, &sol, model)?;
    let estimation = estimation_cost(&sol, model)?;
    let floor = filtered_cost_floor(&model.x0, &sol, model)?;
    println!(
        "optimal value {:.10}, estimation cost {estimation:.10}",
        value.total
    );

    let written = write_files(
        &out,
        &[
            ("scenario.json".into(), serialize_scenario(&scenario)),
            (
                "solution.json".into(),
                to_json(&solution_document(&sol, model)?),
            ),
            (
                "value.json".into(),
                to_json(&value_document(&value, estimation, floor)),
            ),
            ("plot.csv".into(), solution_plot_csv(&sol)),
        ],
    )?;
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}
