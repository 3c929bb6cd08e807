//! Solves the deterministic equations on the scalar benchmark, where the
//! control Riccati solution is `P(t) = tanh(1 - t)` and the error covariance
//! is `Σ(t) = tanh(t)`, and prints the RK4 error as the grid is refined.
//!
//! ```text
//! cargo run --release --example riccati_benchmark
//! ```

use polq::detsolve::{solve_all, solve_control_riccati};
use polq::model::ConstantModel;

fn main() -> polq::Result<()> {
    let model = ConstantModel::scalar_benchmark().build(1.0)?;

    let sol = solve_all(&model, &model.grid(1000)?)?;
    let sigma_err = sol
        .grid
        .nodes()
        .zip(&sol.error_covariance.values)
        .map(|(t, s)| (s[(0, 0)] - t.tanh()).abs())
        .fold(0.0, f64::max);
    println!(
        "steps 1000: P(0) = {:.16}",
        sol.control_riccati.first()[(0, 0)]
    );
    println!("            tanh 1 = {:.16}", 1f64.tanh());
    println!("            max |Σ(t) - tanh t| = {sigma_err:.2e}");
    println!(
        "            Θ(0) = {:.16}",
        sol.feedback_gain.first()[(0, 0)]
    );

    println!("\n{:>6} {:>12} {:>8}", "steps", "|P(0)-tanh1|", "ratio");
    let mut previous: Option<f64> = None;
    for steps in [25, 50, 100, 200, 400] {
        let p = solve_control_riccati(&model, &model.grid(steps)?)?;
        let err = (p.first()[(0, 0)] - 1f64.tanh()).abs();
        let ratio = previous.map_or(String::new(), |e| format!("{:.2}", e / err));
        println!("{steps:>6} {err:>12.3e} {ratio:>8}");
        previous = Some(err);
    }
    Ok(())
}
