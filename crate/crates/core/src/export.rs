//! Result documents (JSON, `"format_version": 1`) and CSV tables.
//!
//! Everything is rendered to strings first; [`write_files`] then puts the
//! whole set on disk or, on failure, removes whatever it had written.
//! Nothing here depends on the clock, so identical inputs give identical
//! bytes.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use crate::detsolve::DeterministicSolution;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::ode::{MatrixPath, VectorPath};
use crate::scenario::FORMAT_VERSION;
use crate::simulate::PathBundle;
use crate::value::ValueBreakdown;
use crate::verify::{Check, SuiteReport};

/// 17 significant digits, enough to round-trip any double.
pub fn format_number(x: f64) -> String {
    // adding +0 turns -0 into 0
    format!("{:.16e}", x + 0.0)
}

fn rows(m: &DMatrix<f64>) -> Value {
    Value::from(
        m.row_iter()
            .map(|r| r.iter().copied().collect::<Vec<f64>>())
            .collect::<Vec<_>>(),
    )
}

fn vector(v: &DVector<f64>) -> Value {
    Value::from(v.as_slice().to_vec())
}

fn matrix_path(p: &MatrixPath) -> Value {
    Value::from(p.values.iter().map(rows).collect::<Vec<_>>())
}

fn vector_path(p: &VectorPath) -> Value {
    Value::from(p.values.iter().map(vector).collect::<Vec<_>>())
}

fn breakdown(v: &ValueBreakdown) -> Value {
    Value::Object(
        v.entries()
            .iter()
            .map(|(k, x)| (k.to_string(), json!(x)))
            .collect(),
    )
}

/// Closed-form value, its terms and the split into filter and estimation
/// parts.
pub fn value_document(
    value: &ValueBreakdown,
    estimation_cost: f64,
    filtered_cost_floor: f64,
) -> Value {
    json!({
        "format_version": FORMAT_VERSION,
        "optimal_value": breakdown(value),
        "estimation_cost": estimation_cost,
        "filtered_cost_floor": filtered_cost_floor,
    })
}

/// Every solution path, one entry per grid node.
pub fn solution_document(sol: &DeterministicSolution, model: &ModelSpec) -> Result<Value> {
    let nodes: Vec<f64> = sol.grid.nodes().collect();
    let samples = nodes
        .iter()
        .map(|&t| model.coefficients_at(t))
        .collect::<Result<Vec<_>>>()?;
    Ok(json!({
        "format_version": FORMAT_VERSION,
        "horizon": sol.grid.horizon(),
        "steps": sol.grid.steps(),
        "t": nodes,
        "control_riccati": matrix_path(&sol.control_riccati),
        "feedback_gain": matrix_path(&sol.feedback_gain),
        "control_offset": vector_path(&sol.control_offset),
        "error_covariance": matrix_path(&sol.error_covariance),
        "error_loading": matrix_path(&sol.error_loading),
        "error_dynamics": matrix_path(&sol.error_dynamics),
        "error_riccati": matrix_path(&sol.error_riccati),
        "error_offset": vector_path(&sol.error_offset),
        "state_noise_cov": samples.iter().map(|c| rows(&c.state_noise_cov())).collect::<Vec<_>>(),
        "observation_noise_cov": samples.iter().map(|c| rows(&c.observation_noise_cov())).collect::<Vec<_>>(),
    }))
}

pub fn to_json(doc: &Value) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("JSON values always serialize");
    s.push('\n');
    s
}

/// Long-format table writer: `series,t,value`.
struct LongTable {
    out: csv::Writer<Vec<u8>>,
}

impl LongTable {
    fn new() -> Self {
        let mut out = csv::Writer::from_writer(Vec::new());
        out.write_record(["series", "t", "value"])
            .expect("in-memory write");
        Self { out }
    }

    fn push(&mut self, series: &str, t: f64, value: f64) {
        self.out
            .write_record([series, &format_number(t), &format_number(value)])
            .expect("in-memory write");
    }

    fn matrix_path(&mut self, name: &str, p: &MatrixPath) {
        let (r, c) = p.values[0].shape();
        for a in 0..r {
            for b in 0..c {
                let series = format!("{name}[{a},{b}]");
                for (t, v) in p.grid.nodes().zip(&p.values) {
                    self.push(&series, t, v[(a, b)]);
                }
            }
        }
    }

    fn vector_path(&mut self, name: &str, p: &VectorPath) {
        for a in 0..p.values[0].len() {
            let series = format!("{name}[{a}]");
            for (t, v) in p.grid.nodes().zip(&p.values) {
                self.push(&series, t, v[a]);
            }
        }
    }

    fn finish(self) -> String {
        String::from_utf8(self.out.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
    }
}

/// Plot table of `P`, `Θ`, `φ` and `Σ` entries.
pub fn solution_plot_csv(sol: &DeterministicSolution) -> String {
    let mut t = LongTable::new();
    t.matrix_path("P", &sol.control_riccati);
    t.matrix_path("Theta", &sol.feedback_gain);
    t.vector_path("phi", &sol.control_offset);
    t.matrix_path("Sigma", &sol.error_covariance);
    t.finish()
}

fn labels(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (0..count).map(move |i| format!("{prefix}{i}"))
}

/// One row per node: `t, X*, Y*, Xhat*, Xtil*, V*, u*`, with `u` empty at
/// the last node, followed by a `cost,<value>` record.
pub fn path_csv(bundle: &PathBundle) -> String {
    let n = bundle.x.nrows();
    let d = bundle.y.nrows();
    let m = bundle.u.nrows();
    let mut out = csv::WriterBuilder::new()
        .flexible(true)
        .from_writer(Vec::new());
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(labels("X", n))
        .chain(labels("Y", d))
        .chain(labels("Xhat", n))
        .chain(labels("Xtil", n))
        .chain(labels("V", d))
        .chain(labels("u", m))
        .collect();
    out.write_record(&header).expect("in-memory write");
    let steps = bundle.grid.steps();
    for (i, t) in bundle.grid.nodes().enumerate() {
        let mut row = vec![format_number(t)];
        for m in [&bundle.x, &bundle.y, &bundle.xhat, &bundle.xtil, &bundle.v] {
            row.extend(m.column(i).iter().map(|&v| format_number(v)));
        }
        if i < steps {
            row.extend(bundle.u.column(i).iter().map(|&v| format_number(v)));
        } else {
            row.extend(std::iter::repeat_n(String::new(), m));
        }
        out.write_record(&row).expect("in-memory write");
    }
    out.write_record(["cost", &format_number(bundle.cost)])
        .expect("in-memory write");
    String::from_utf8(out.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
}

/// `name,estimate,se,target,tolerance,pass`, one row per check.
pub fn report_csv(checks: &[Check]) -> String {
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(["name", "estimate", "se", "target", "tolerance", "pass"])
        .expect("in-memory write");
    for c in checks {
        out.write_record([
            c.name.as_str(),
            &format_number(c.estimate),
            &format_number(c.se),
            &format_number(c.target),
            &format_number(c.tolerance),
            if c.pass { "pass" } else { "fail" },
        ])
        .expect("in-memory write");
    }
    String::from_utf8(out.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
}

/// Full verification results.
pub fn suite_document(report: &SuiteReport) -> Value {
    let b = &report.batch;
    let probes: Vec<Value> = b
        .probes
        .iter()
        .zip(&report.covariance_allowance)
        .map(|(p, allowance)| {
            json!({
                "node": p.node,
                "t": p.t,
                "emp_error_cov": rows(&p.emp_error_cov),
                "emp_error_cov_se": rows(&p.emp_error_cov_se),
                "sigma": rows(&p.sigma),
                "covariance_allowance": rows(allowance),
                "orthogonality": p.orthogonality,
            })
        })
        .collect();
    json!({
        "format_version": FORMAT_VERSION,
        "passed": report.passed(),
        "checks": report.checks,
        "batch": {
            "n_paths": b.n_paths,
            "steps": b.steps,
            "policy": b.policy,
            "cost_mean": b.cost_mean,
            "cost_se": b.cost_se,
            "analytic_value": b.analytic_value,
            "probes": probes,
            "innovation": b.innovation,
            "innovation_increment_mean": vector(&b.innovation_increment_mean()),
            "innovation_qv_ratio": b.innovation_qv_ratio(),
            "decomposition": b.decomposition,
            "per_policy_costs": b.per_policy_costs,
        },
        "comparison": report.comparison,
        "halving": report.halving,
        "estimation_allowance": report.estimation_allowance,
        "predicted_excess": report.predicted_excess,
    })
}

/// Plot table of batch summaries: empirical error covariance and `Σ` at
/// the probe times, and orthogonality means.
pub fn suite_plot_csv(report: &SuiteReport) -> String {
    let mut t = LongTable::new();
    for p in &report.batch.probes {
        let n = p.sigma.nrows();
        for a in 0..n {
            for b in 0..n {
                t.push(
                    &format!("emp_error_cov[{a},{b}]"),
                    p.t,
                    p.emp_error_cov[(a, b)],
                );
                t.push(
                    &format!("emp_error_cov_se[{a},{b}]"),
                    p.t,
                    p.emp_error_cov_se[(a, b)],
                );
                t.push(&format!("Sigma[{a},{b}]"), p.t, p.sigma[(a, b)]);
            }
        }
        t.push("orthogonality", p.t, p.orthogonality.mean);
        t.push("orthogonality_se", p.t, p.orthogonality.se);
    }
    t.finish()
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `(file name, contents)` pairs into `dir`, creating it if needed.
///
/// Files go to temporary names first and are renamed once every write
/// succeeded; on any failure the temporaries and any file already renamed
/// are removed, so a failed call leaves no partial results.
pub fn write_files(dir: &Path, files: &[(String, String)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::with_capacity(files.len());
    let cleanup = |staged: &[(PathBuf, PathBuf)]| {
        for (tmp, _) in staged {
            let _ = fs::remove_file(tmp);
        }
    };
    for (name, contents) in files {
        let target = dir.join(name);
        let tmp = dir.join(format!(".{name}.partial"));
        if let Err(e) = fs::write(&tmp, contents) {
            let _ = fs::remove_file(&tmp);
            cleanup(&staged);
            return Err(io_error(&tmp, e));
        }
        staged.push((tmp, target));
    }
    for (i, (tmp, target)) in staged.iter().enumerate() {
        if let Err(e) = fs::rename(tmp, target) {
            cleanup(&staged[i..]);
            for (_, done) in &staged[..i] {
                let _ = fs::remove_file(done);
            }
            return Err(io_error(target, e));
        }
    }
    Ok(staged.into_iter().map(|(_, target)| target).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detsolve::solve_all;
    use crate::model::ConstantModel;
    use crate::noise::NoiseDraw;
    use crate::simulate::{simulate_closed_loop, ControlPolicy};

    #[test]
    fn numbers_round_trip() {
        for x in [
            0.1,
            1.0 / 3.0,
            -2.5e-300,
            6.02214076e23,
            std::f64::consts::PI,
        ] {
            assert_eq!(format_number(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(format_number(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn path_csv_layout() {
        let model = ConstantModel::scalar_benchmark().build(1.0).unwrap();
        let sol = solve_all(&model, &model.grid(4).unwrap()).unwrap();
        let noise = NoiseDraw::zeros(&sol.grid, &model.dims);
        let b = simulate_closed_loop(&model, &sol, &ControlPolicy::FilterFeedback, &noise).unwrap();
        let text = path_csv(&b);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,X0,Y0,Xhat0,Xtil0,V0,u0");
        assert_eq!(lines.len(), 1 + 5 + 1);
        assert!(lines[5].ends_with(','));
        assert!(lines[6].starts_with("cost,"));
        let fields: Vec<&str> = lines[3].split(',').collect();
        assert_eq!(fields[1], fields[3]);
    }

    #[test]
    fn documents_are_versioned() {
        let model = ConstantModel::scalar_benchmark().build(1.0).unwrap();
        let sol = solve_all(&model, &model.grid(10).unwrap()).unwrap();
        let doc = solution_document(&sol, &model).unwrap();
        assert_eq!(doc["format_version"], 1);
        assert_eq!(doc["control_riccati"].as_array().unwrap().len(), 11);
        let plot = solution_plot_csv(&sol);
        assert!(plot.starts_with("series,t,value\n"));
        assert_eq!(plot.lines().count(), 1 + 4 * 11);
    }

    #[test]
    fn write_files_is_all_or_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let files = vec![
            ("a.txt".to_string(), "a".to_string()),
            ("b.txt".to_string(), "b".to_string()),
        ];
        let written = write_files(&out, &files).unwrap();
        assert_eq!(written.len(), 2);
        assert_eq!(fs::read_to_string(out.join("b.txt")).unwrap(), "b");

        // a directory in the way of the second file makes the rename fail
        let blocked = dir.path().join("blocked");
        fs::create_dir_all(blocked.join("b.txt")).unwrap();
        assert!(write_files(&blocked, &files).is_err());
        let left: Vec<_> = fs::read_dir(&blocked)
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(left.len(), 1, "{left:?}");
    }
}
