//! Scenario documents: a model, a grid, a control policy and Monte Carlo
//! settings in one strict JSON file.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "dims": { "n": 1, "m": 1, "d": 1, "k": 1 },
//!   "T": 1.0,
//!   "steps": 400,
//!   "x0": [1.0],
//!   "coefficients": { "constant": {
//!     "A": [[0.0]], "B": [[1.0]], "C": [[0.0]], "D": [[1.0]],
//!     "H": [[1.0]], "K": [[1.0]] } },
//!   "cost": { "G": [[0.0]], "weights": { "constant": { "Q": [[1.0]], "R": [[1.0]] } } },
//!   "policy": "filter_feedback",
//!   "mc": { "n_paths": 20000, "seed": 2024 }
//! }
//! ```
//!
//! Matrices are row-major arrays of rows. `a`, `h`, `g`, `S`, `q` and `r`
//! default to zero. `"table"` in place of `"constant"` takes a `steps`
//! count and one value per node for every coefficient. Unknown keys are
//! errors.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::{
    validate, CoefficientTable, CostWeights, Dimensions, ModelSpec, ToleranceConfig,
};
use crate::ode::VectorPath;
use crate::simulate::ControlPolicy;

pub const FORMAT_VERSION: u32 = 1;

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantCoefficients {
    #[serde(rename = "A")]
    pub dynamics: Rows,
    #[serde(rename = "B")]
    pub input: Rows,
    #[serde(rename = "a", default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<f64>>,
    #[serde(rename = "C")]
    pub shared_noise: Rows,
    #[serde(rename = "D")]
    pub state_noise: Rows,
    #[serde(rename = "H")]
    pub observation: Rows,
    #[serde(rename = "h", default, skip_serializing_if = "Option::is_none")]
    pub observation_drift: Option<Vec<f64>>,
    #[serde(rename = "K")]
    pub observation_noise: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableCoefficients {
    pub steps: usize,
    #[serde(rename = "A")]
    pub dynamics: Vec<Rows>,
    #[serde(rename = "B")]
    pub input: Vec<Rows>,
    #[serde(rename = "a", default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<Vec<f64>>>,
    #[serde(rename = "C")]
    pub shared_noise: Vec<Rows>,
    #[serde(rename = "D")]
    pub state_noise: Vec<Rows>,
    #[serde(rename = "H")]
    pub observation: Vec<Rows>,
    #[serde(rename = "h", default, skip_serializing_if = "Option::is_none")]
    pub observation_drift: Option<Vec<Vec<f64>>>,
    #[serde(rename = "K")]
    pub observation_noise: Vec<Rows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientsDoc {
    Constant(ConstantCoefficients),
    Table(TableCoefficients),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantWeights {
    #[serde(rename = "Q")]
    pub state: Rows,
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub cross: Option<Rows>,
    #[serde(rename = "R")]
    pub control: Rows,
    #[serde(rename = "q", default, skip_serializing_if = "Option::is_none")]
    pub state_linear: Option<Vec<f64>>,
    #[serde(rename = "r", default, skip_serializing_if = "Option::is_none")]
    pub control_linear: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableWeights {
    pub steps: usize,
    #[serde(rename = "Q")]
    pub state: Vec<Rows>,
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub cross: Option<Vec<Rows>>,
    #[serde(rename = "R")]
    pub control: Vec<Rows>,
    #[serde(rename = "q", default, skip_serializing_if = "Option::is_none")]
    pub state_linear: Option<Vec<Vec<f64>>>,
    #[serde(rename = "r", default, skip_serializing_if = "Option::is_none")]
    pub control_linear: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightsDoc {
    Constant(ConstantWeights),
    Table(TableWeights),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostDoc {
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<Rows>,
    #[serde(rename = "g", default, skip_serializing_if = "Option::is_none")]
    pub terminal_linear: Option<Vec<f64>>,
    pub weights: WeightsDoc,
}

/// A deterministic m-vector over time: one vector for all times, or a
/// table of one vector per node of its own uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeriesDoc {
    Constant(Vec<f64>),
    Table { steps: usize, values: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    #[default]
    FilterFeedback,
    ZeroControl,
    OpenLoop {
        control: SeriesDoc,
    },
    PerturbedFeedback {
        offset: SeriesDoc,
    },
}

fn default_paths() -> usize {
    20_000
}

fn default_perturbation() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    /// Times at which error statistics are taken; snapped to the nearest
    /// node. Defaults to `T/4, T/2, 3T/4, T`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_times: Option<Vec<f64>>,
    /// Constant control offset for the suboptimality check.
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            n_paths: default_paths(),
            seed: 0,
            probe_times: None,
            perturbation: default_perturbation(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    /// Structured result documents.
    Json,
    /// Long-format plot table.
    Csv,
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Json, OutputFormat::Csv]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

fn default_steps() -> usize {
    400
}

fn default_delta() -> f64 {
    1e-6
}

fn default_version() -> u32 {
    FORMAT_VERSION
}

/// The on-disk layout of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    #[serde(default = "default_version")]
    pub format_version: u32,
    pub dims: Dimensions,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    pub x0: Vec<f64>,
    pub coefficients: CoefficientsDoc,
    pub cost: CostDoc,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub policy: PolicySpec,
    #[serde(default)]
    pub mc: MonteCarloConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// A parsed and validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub model: ModelSpec,
    pub grid: TimeGrid,
    pub policy: PolicySpec,
    pub mc: MonteCarloConfig,
    pub output: OutputConfig,
}

fn mat(rows: &Rows, what: &str, shape: (usize, usize)) -> Result<DMatrix<f64>> {
    let found = (rows.len(), rows.first().map_or(0, Vec::len));
    if found != shape || rows.iter().any(|r| r.len() != shape.1) {
        return Err(Error::shape(what, shape, found));
    }
    Ok(DMatrix::from_fn(shape.0, shape.1, |i, j| rows[i][j]))
}

fn vector(values: &[f64], what: &str, len: usize) -> Result<DVector<f64>> {
    if values.len() != len {
        return Err(Error::shape(what, (len, 1), (values.len(), 1)));
    }
    Ok(DVector::from_column_slice(values))
}

fn rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn mats(
    values: &[Rows],
    what: &str,
    nodes: usize,
    shape: (usize, usize),
) -> Result<Vec<DMatrix<f64>>> {
    if values.len() != nodes {
        return Err(Error::InvalidArgument(format!(
            "{what} table has {} entries, expected {nodes} (steps + 1)",
            values.len()
        )));
    }
    values
        .iter()
        .enumerate()
        .map(|(i, r)| mat(r, &format!("{what} at node {i}"), shape))
        .collect()
}

fn vecs(
    values: Option<&[Vec<f64>]>,
    what: &str,
    nodes: usize,
    len: usize,
) -> Result<Vec<DVector<f64>>> {
    let Some(values) = values else {
        return Ok(vec![DVector::zeros(len); nodes]);
    };
    if values.len() != nodes {
        return Err(Error::InvalidArgument(format!(
            "{what} table has {} entries, expected {nodes} (steps + 1)",
            values.len()
        )));
    }
    values
        .iter()
        .enumerate()
        .map(|(i, v)| vector(v, &format!("{what} at node {i}"), len))
        .collect()
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "horizon T must be positive, got {horizon}"
        )));
    }
    Ok(())
}

fn coefficients(
    doc: &CoefficientsDoc,
    dims: &Dimensions,
    horizon: f64,
) -> Result<CoefficientTable> {
    let Dimensions { n, m, d, k } = *dims;
    match doc {
        CoefficientsDoc::Constant(c) => {
            let one = |rows: &Rows, what: &str, shape| -> Result<Vec<DMatrix<f64>>> {
                let v = mat(rows, what, shape)?;
                Ok(vec![v.clone(), v])
            };
            let one_v = |v: &Option<Vec<f64>>, what: &str, len| -> Result<Vec<DVector<f64>>> {
                let v = match v {
                    Some(v) => vector(v, what, len)?,
                    None => DVector::zeros(len),
                };
                Ok(vec![v.clone(), v])
            };
            Ok(CoefficientTable {
                grid: TimeGrid::new(horizon, 1)?,
                dynamics: one(&c.dynamics, "A", (n, n))?,
                input: one(&c.input, "B", (n, m))?,
                drift: one_v(&c.drift, "a", n)?,
                shared_noise: one(&c.shared_noise, "C", (n, d))?,
                state_noise: one(&c.state_noise, "D", (n, k))?,
                observation: one(&c.observation, "H", (d, n))?,
                observation_drift: one_v(&c.observation_drift, "h", d)?,
                observation_noise: one(&c.observation_noise, "K", (d, d))?,
            })
        }
        CoefficientsDoc::Table(t) => {
            let grid = TimeGrid::new(horizon, t.steps)?;
            let len = grid.len();
            Ok(CoefficientTable {
                grid,
                dynamics: mats(&t.dynamics, "A", len, (n, n))?,
                input: mats(&t.input, "B", len, (n, m))?,
                drift: vecs(t.drift.as_deref(), "a", len, n)?,
                shared_noise: mats(&t.shared_noise, "C", len, (n, d))?,
                state_noise: mats(&t.state_noise, "D", len, (n, k))?,
                observation: mats(&t.observation, "H", len, (d, n))?,
                observation_drift: vecs(t.observation_drift.as_deref(), "h", len, d)?,
                observation_noise: mats(&t.observation_noise, "K", len, (d, d))?,
            })
        }
    }
}

fn weights(doc: &CostDoc, dims: &Dimensions, horizon: f64, delta: f64) -> Result<CostWeights> {
    let Dimensions { n, m, .. } = *dims;
    let terminal = match &doc.terminal {
        Some(r) => mat(r, "G", (n, n))?,
        None => DMatrix::zeros(n, n),
    };
    let terminal_linear = match &doc.terminal_linear {
        Some(v) => vector(v, "g", n)?,
        None => DVector::zeros(n),
    };
    match &doc.weights {
        WeightsDoc::Constant(c) => {
            let two = |v: DMatrix<f64>| vec![v.clone(), v];
            let two_v = |v: DVector<f64>| vec![v.clone(), v];
            let cross = match &c.cross {
                Some(r) => mat(r, "S", (m, n))?,
                None => DMatrix::zeros(m, n),
            };
            let opt_vec = |v: &Option<Vec<f64>>, what: &str, len| match v {
                Some(v) => vector(v, what, len),
                None => Ok(DVector::zeros(len)),
            };
            Ok(CostWeights {
                terminal,
                terminal_linear,
                grid: TimeGrid::new(horizon, 1)?,
                state: two(mat(&c.state, "Q", (n, n))?),
                cross: two(cross),
                control: two(mat(&c.control, "R", (m, m))?),
                state_linear: two_v(opt_vec(&c.state_linear, "q", n)?),
                control_linear: two_v(opt_vec(&c.control_linear, "r", m)?),
                delta,
            })
        }
        WeightsDoc::Table(t) => {
            let grid = TimeGrid::new(horizon, t.steps)?;
            let len = grid.len();
            let cross = match &t.cross {
                Some(c) => mats(c, "S", len, (m, n))?,
                None => vec![DMatrix::zeros(m, n); len],
            };
            Ok(CostWeights {
                terminal,
                terminal_linear,
                grid,
                state: mats(&t.state, "Q", len, (n, n))?,
                cross,
                control: mats(&t.control, "R", len, (m, m))?,
                state_linear: vecs(t.state_linear.as_deref(), "q", len, n)?,
                control_linear: vecs(t.control_linear.as_deref(), "r", len, m)?,
                delta,
            })
        }
    }
}

fn series_path(doc: &SeriesDoc, what: &str, m: usize, horizon: f64) -> Result<VectorPath> {
    match doc {
        SeriesDoc::Constant(v) => Ok(VectorPath::constant(
            TimeGrid::new(horizon, 1)?,
            vector(v, what, m)?,
        )),
        SeriesDoc::Table { steps, values } => {
            let grid = TimeGrid::new(horizon, *steps)?;
            Ok(VectorPath {
                values: vecs(Some(values), what, grid.len(), m)?,
                grid,
            })
        }
    }
}

impl PolicySpec {
    /// The policy on `grid`; tables are linearly interpolated onto it.
    pub fn build(&self, dims: &Dimensions, grid: TimeGrid) -> Result<ControlPolicy> {
        let t = grid.horizon();
        Ok(match self {
            PolicySpec::FilterFeedback => ControlPolicy::FilterFeedback,
            PolicySpec::ZeroControl => ControlPolicy::ZeroControl,
            PolicySpec::OpenLoop { control } => ControlPolicy::OpenLoop(
                series_path(control, "open-loop control", dims.m, t)?.resample(grid)?,
            ),
            PolicySpec::PerturbedFeedback { offset } => ControlPolicy::PerturbedFeedback(
                series_path(offset, "perturbation offset", dims.m, t)?.resample(grid)?,
            ),
        })
    }
}

impl Scenario {
    /// Probe times, defaulting to `T/4, T/2, 3T/4, T`.
    pub fn probe_times(&self) -> Vec<f64> {
        let t = self.grid.horizon();
        self.mc
            .probe_times
            .clone()
            .unwrap_or_else(|| vec![0.25 * t, 0.5 * t, 0.75 * t, t])
    }

    /// Nearest grid node of every probe time.
    pub fn probe_nodes(&self) -> Vec<usize> {
        self.probe_times()
            .iter()
            .map(|&t| self.grid.nearest_node(t))
            .collect()
    }

    pub fn control_policy(&self) -> Result<ControlPolicy> {
        self.policy.build(&self.model.dims, self.grid)
    }

    /// Same scenario on `steps` intervals.
    pub fn with_steps(mut self, steps: usize) -> Result<Self> {
        self.grid = TimeGrid::new(self.grid.horizon(), steps)?;
        Ok(self)
    }

    /// The document form. Coefficients and weights are always written as
    /// tables.
    pub fn to_doc(&self) -> ScenarioDoc {
        let model = &self.model;
        let c = &model.coeffs;
        let w = &model.cost;
        let all = |v: &[DMatrix<f64>]| v.iter().map(rows).collect::<Vec<_>>();
        let all_v =
            |v: &[DVector<f64>]| v.iter().map(|x| x.as_slice().to_vec()).collect::<Vec<_>>();
        ScenarioDoc {
            format_version: FORMAT_VERSION,
            dims: model.dims,
            horizon: model.horizon,
            steps: self.grid.steps(),
            x0: model.x0.as_slice().to_vec(),
            coefficients: CoefficientsDoc::Table(TableCoefficients {
                steps: c.grid.steps(),
                dynamics: all(&c.dynamics),
                input: all(&c.input),
                drift: Some(all_v(&c.drift)),
                shared_noise: all(&c.shared_noise),
                state_noise: all(&c.state_noise),
                observation: all(&c.observation),
                observation_drift: Some(all_v(&c.observation_drift)),
                observation_noise: all(&c.observation_noise),
            }),
            cost: CostDoc {
                terminal: Some(rows(&w.terminal)),
                terminal_linear: Some(w.terminal_linear.as_slice().to_vec()),
                weights: WeightsDoc::Table(TableWeights {
                    steps: w.grid.steps(),
                    state: all(&w.state),
                    cross: Some(all(&w.cross)),
                    control: all(&w.control),
                    state_linear: Some(all_v(&w.state_linear)),
                    control_linear: Some(all_v(&w.control_linear)),
                }),
            },
            delta: w.delta,
            tolerances: model.tol,
            policy: self.policy.clone(),
            mc: MonteCarloConfig {
                probe_times: Some(self.probe_times()),
                ..self.mc.clone()
            },
            output: self.output.clone(),
        }
    }
}

fn json_error(e: serde_json::Error) -> Error {
    let message = e.to_string();
    if message.contains("unknown field") {
        Error::UnknownField(message)
    } else {
        Error::Syntax {
            line: e.line(),
            column: e.column(),
            message,
        }
    }
}

/// Builds and validates the model described by `doc`. Validation failures
/// come back as [`Error::Validation`] carrying the full report.
pub fn scenario_from_doc(doc: ScenarioDoc) -> Result<Scenario> {
    if doc.format_version != FORMAT_VERSION {
        return Err(Error::InvalidArgument(format!(
            "unsupported format_version {}, expected {FORMAT_VERSION}",
            doc.format_version
        )));
    }
    doc.dims.check()?;
    check_horizon(doc.horizon)?;
    let dims = doc.dims;
    let coeffs = coefficients(&doc.coefficients, &dims, doc.horizon)?;
    let cost = weights(&doc.cost, &dims, doc.horizon, doc.delta)?;
    let x0 = vector(&doc.x0, "x0", dims.n)?;
    let model = ModelSpec::new(dims, doc.horizon, coeffs, cost, x0, doc.tolerances)?;
    let report = validate(&model, &model.tol)?;
    if !report.passed() {
        return Err(Error::Validation(report));
    }
    let grid = model.grid(doc.steps)?;
    if let Some(times) = &doc.mc.probe_times {
        if let Some(t) = times.iter().find(|t| !(0.0..=doc.horizon).contains(*t)) {
            return Err(Error::OutOfRange {
                t: *t,
                horizon: doc.horizon,
            });
        }
    }
    let scenario = Scenario {
        model,
        grid,
        policy: doc.policy,
        mc: doc.mc,
        output: doc.output,
    };
    scenario.control_policy()?;
    Ok(scenario)
}

/// Parses a scenario document. Syntax errors carry line and column.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let doc: ScenarioDoc = serde_json::from_str(text).map_err(json_error)?;
    scenario_from_doc(doc)
}

/// Writes the scenario back out as pretty JSON in table form.
pub fn serialize_scenario(scenario: &Scenario) -> String {
    serde_json::to_string_pretty(&scenario.to_doc()).expect("scenario documents always serialize")
}

/// Reads and parses a scenario file.
pub fn load_scenario(path: &std::path::Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CHECK_G_SYM, CHECK_K_INVERTIBLE};

    const SCALAR: &str = r#"{
        "dims": {"n": 1, "m": 1, "d": 1, "k": 1},
        "T": 1.0,
        "x0": [1.0],
        "coefficients": {"constant": {
            "A": [[0.0]], "B": [[1.0]], "C": [[0.0]], "D": [[1.0]],
            "H": [[1.0]], "K": [[1.0]]}},
        "cost": {"weights": {"constant": {"Q": [[1.0]], "R": [[1.0]]}}}
    }"#;

    #[test]
    fn minimal_scalar() {
        let s = parse_scenario(SCALAR).unwrap();
        assert_eq!(s.model.dims, Dimensions::scalar());
        assert_eq!(s.grid.steps(), 400);
        assert_eq!(s.policy, PolicySpec::FilterFeedback);
        assert_eq!(s.mc.n_paths, 20_000);
        assert_eq!(s.probe_nodes(), vec![100, 200, 300, 400]);
        let bench = crate::model::ConstantModel::scalar_benchmark()
            .build(1.0)
            .unwrap();
        assert_eq!(s.model, bench);
    }

    #[test]
    fn singular_k_names_the_assumption() {
        let text = SCALAR.replace(r#""K": [[1.0]]"#, r#""K": [[0.0]]"#);
        match parse_scenario(&text).unwrap_err() {
            Error::Validation(report) => {
                assert!(!report.check(CHECK_K_INVERTIBLE).unwrap().passed)
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn asymmetric_g_is_rejected() {
        let text = r#"{
            "dims": {"n": 2, "m": 1, "d": 1, "k": 1},
            "T": 1.0,
            "x0": [1.0, 0.0],
            "coefficients": {"constant": {
                "A": [[0.0, 0.0], [0.0, 0.0]], "B": [[1.0], [0.0]],
                "C": [[0.0], [0.0]], "D": [[1.0], [0.0]],
                "H": [[1.0, 0.0]], "K": [[1.0]]}},
            "cost": {"G": [[1.0, 0.1], [0.0, 1.0]],
                     "weights": {"constant": {"Q": [[1.0, 0.0], [0.0, 1.0]], "R": [[1.0]]}}}
        }"#;
        match parse_scenario(text).unwrap_err() {
            Error::Validation(report) => assert!(!report.check(CHECK_G_SYM).unwrap().passed),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn unknown_fields_are_errors() {
        let text = SCALAR.replace(r#""T": 1.0,"#, r#""T": 1.0, "Tee": 2.0,"#);
        assert!(matches!(parse_scenario(&text), Err(Error::UnknownField(_))));
        let text = SCALAR.replace(r#""Q": [[1.0]]"#, r#""Q": [[1.0]], "QQ": [[1.0]]"#);
        assert!(matches!(parse_scenario(&text), Err(Error::UnknownField(_))));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let text = SCALAR.replace(r#""x0": [1.0],"#, r#""x0": [1.0,,"#);
        match parse_scenario(&text).unwrap_err() {
            Error::Syntax { line, column, .. } => {
                assert_eq!(line, 4);
                assert!(column > 0);
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn shape_errors() {
        let text = SCALAR.replace(r#""B": [[1.0]]"#, r#""B": [[1.0, 2.0]]"#);
        assert!(matches!(
            parse_scenario(&text),
            Err(Error::ShapeMismatch { .. })
        ));
        let text = SCALAR.replace(r#""x0": [1.0]"#, r#""x0": [1.0, 2.0]"#);
        assert!(matches!(
            parse_scenario(&text),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn round_trip_is_exact() {
        let mut s = parse_scenario(SCALAR).unwrap();
        s.mc.seed = 17;
        s.policy = PolicySpec::PerturbedFeedback {
            offset: SeriesDoc::Constant(vec![0.1 + 0.2]),
        };
        let back = parse_scenario(&serialize_scenario(&s)).unwrap();
        assert_eq!(back.model, s.model);
        assert_eq!(back.grid, s.grid);
        assert_eq!(back.policy, s.policy);
        assert_eq!(back.probe_times(), s.probe_times());
        assert_eq!(back.output, s.output);
    }

    #[test]
    fn time_varying_table() {
        let text = r#"{
            "dims": {"n": 1, "m": 1, "d": 1, "k": 1},
            "T": 1.0, "steps": 10, "x0": [0.0],
            "coefficients": {"table": {"steps": 2,
                "A": [[[0.0]], [[1.0]], [[2.0]]], "B": [[[1.0]], [[1.0]], [[1.0]]],
                "C": [[[0.0]], [[0.0]], [[0.0]]], "D": [[[1.0]], [[1.0]], [[1.0]]],
                "H": [[[1.0]], [[1.0]], [[1.0]]], "K": [[[1.0]], [[1.0]], [[1.0]]]}},
            "cost": {"weights": {"constant": {"Q": [[1.0]], "R": [[1.0]]}}},
            "policy": {"open_loop": {"control": {"steps": 1, "values": [[0.0], [1.0]]}}}
        }"#;
        let s = parse_scenario(text).unwrap();
        assert_eq!(s.model.coefficients_at(0.25).unwrap().dynamics[(0, 0)], 0.5);
        match s.control_policy().unwrap() {
            ControlPolicy::OpenLoop(p) => {
                assert_eq!(p.grid.steps(), 10);
                assert!((p.values[3][0] - 0.3).abs() < 1e-15);
            }
            other => panic!("{other:?}"),
        }
        let short = text.replace(
            r#""A": [[[0.0]], [[1.0]], [[2.0]]]"#,
            r#""A": [[[0.0]], [[1.0]]]"#,
        );
        assert!(matches!(
            parse_scenario(&short),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn probe_times_must_be_inside_horizon() {
        let text = SCALAR.replace(
            r#""x0": [1.0],"#,
            r#""x0": [1.0], "mc": {"probe_times": [1.5]},"#,
        );
        assert!(matches!(
            parse_scenario(&text),
            Err(Error::OutOfRange { .. })
        ));
    }
}
