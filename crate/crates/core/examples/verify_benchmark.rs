//! Runs the full verification suite on the scalar benchmark and prints one
//! line per check.
//!
//! ```text
//! cargo run --release --example verify_benchmark -- [paths] [seed]
//! ```

use std::time::Instant;

use polq::model::ConstantModel;
use polq::verify::{run_suite, SuiteConfig};

fn main() -> polq::Result<()> {
    let mut args = std::env::args().skip(1);
    let paths = args.next().map_or(20_000, |s| s.parse().expect("paths"));
    let seed = args.next().map_or(2024, |s| s.parse().expect("seed"));
    let steps = 400;

    let model = ConstantModel::scalar_benchmark().build(1.0)?;
    let config = SuiteConfig::new(paths, seed, &model.grid(steps)?);
    let start = Instant::now();
    let report = run_suite(&model, steps, &config)?;
    println!("{paths} paths, {steps} steps, {:.1?}", start.elapsed());
    for c in &report.checks {
        println!(
            "{:<6} {:<40} estimate {:>12.6} target {:>12.6} tolerance {:.2e}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.estimate,
            c.target,
            c.tolerance
        );
    }
    let ff = &report.halving.rows[0];
    println!(
        "cost at h {:.6}, at h/2 {:.6}, allowance {:.2e}",
        ff.coarse.mean,
        ff.fine.mean,
        ff.cost_allowance()
    );
    Ok(())
}
