//! Scenario files: network, cost data, bounds, experiment matrix and output
//! settings in one JSON document.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{NetworkGraph, StateSpaceModel};
use crate::problem::{CostData, InputBox, OcpScenario, DEFAULT_STEP};
use crate::signal::{signal_from_spec, Signal, TermSpec, ValueSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: String,
    pub graph: NetworkGraph,
    pub cost: CostSpec,
    pub bounds: BoundsSpec,
    #[serde(default)]
    pub runs: RunsSpec,
    #[serde(default)]
    pub numerics: NumericsSpec,
    #[serde(default)]
    pub outputs: OutputsSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub q: MatrixSpec,
    #[serde(default)]
    pub s: CouplingSpec,
    /// Nominal temperatures, required by the `minus_Q_xn` shorthand and by
    /// scaled initial states.
    #[serde(default)]
    pub x_n: Option<Vec<f64>>,
    #[serde(default)]
    pub r: LinearSpec,
    #[serde(default)]
    pub p: Vec<TermSpec>,
    #[serde(default)]
    pub d: Vec<TermSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixSpec {
    Diagonal(ValueSpec),
    Dense(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CouplingSpec {
    #[default]
    #[serde(skip)]
    Zero,
    Shorthand(CouplingShorthand),
    Dense { dense: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum CouplingShorthand {
    #[serde(rename = "B_transpose")]
    BTranspose,
    #[serde(rename = "zero")]
    Zero,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LinearSpec {
    #[default]
    #[serde(skip)]
    Zero,
    Shorthand(LinearShorthand),
    Terms(Vec<TermSpec>),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum LinearShorthand {
    #[serde(rename = "minus_Q_xn")]
    MinusQXn,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    pub u_min: ValueSpec,
    pub u_max: ValueSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialStateSpec {
    Scaled { scale: f64 },
    Absolute { vector: Vec<f64> },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunsSpec {
    #[serde(default)]
    pub initial_states: Vec<InitialStateSpec>,
    #[serde(default)]
    pub horizons_s: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsSpec {
    /// Target control interval (s); `N = ceil(T / step_s)`.
    pub step_s: f64,
    pub seed: u64,
    /// Points of the residual grid for the turnpike checks.
    pub grid_points: usize,
    /// Weights of the deviation norm on `(x, u)`; unweighted when absent.
    pub deviation_weights: Option<Vec<f64>>,
}

impl Default for NumericsSpec {
    fn default() -> Self {
        NumericsSpec {
            step_s: DEFAULT_STEP,
            seed: 0,
            grid_points: 1000,
            deviation_weights: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputsSpec {
    pub directory: Option<PathBuf>,
    /// Tube radii for the measure table; scaled by `epsilon_scale`.
    pub epsilon_grid: Vec<f64>,
    /// `relative`: radii are fractions of `sup ||z_bar||`; `absolute`: as given.
    pub epsilon_scale: EpsilonScale,
    /// Fixed dissipation constant `c` in `alpha(s) = c s^2`; fitted when absent.
    pub alpha_c: Option<f64>,
    pub storage_initial_scales: Vec<f64>,
    pub storage_horizons_s: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpsilonScale {
    Relative,
    Absolute,
}

impl Default for OutputsSpec {
    fn default() -> Self {
        OutputsSpec {
            directory: None,
            epsilon_grid: vec![1e-3, 3e-3, 1e-2, 3e-2, 1e-1],
            epsilon_scale: EpsilonScale::Relative,
            alpha_c: None,
            storage_initial_scales: vec![0.8, 0.9, 1.0, 1.1, 1.2],
            storage_horizons_s: vec![21600.0, 43200.0, 86400.0, 104400.0, 172800.0],
        }
    }
}

/// One initial state of the experiment matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub label: String,
    pub x0: DVector<f64>,
}

/// Validated scenario with all shorthands expanded.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub graph: NetworkGraph,
    pub model: StateSpaceModel,
    pub cost: CostData,
    pub disturbance: Signal,
    pub bounds: InputBox,
    pub nominal: Option<DVector<f64>>,
    pub initial_states: Vec<InitialState>,
    pub horizons: Vec<f64>,
    pub numerics: NumericsSpec,
    pub outputs: OutputsSpec,
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    let mut out = String::new();
    for seg in path.iter() {
        use serde_path_to_error::Segment;
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

fn matrix(rows: &[Vec<f64>], nr: usize, nc: usize, path: &str) -> Result<DMatrix<f64>> {
    if rows.len() != nr || rows.iter().any(|r| r.len() != nc) {
        return Err(Error::validation(path, format!("expected a {nr}x{nc} matrix")));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = json_pointer(e.path());
            Error::validation(path, e.into_inner().to_string())
        })
    }

    pub fn build(self) -> Result<Scenario> {
        let model = self.graph.assemble_model()?;
        let (n, m, w) = (model.n(), model.m(), model.w());
        if m == 0 {
            return Err(Error::validation("/graph/vertices", "the network needs at least one producer"));
        }

        let q = match &self.cost.q {
            MatrixSpec::Diagonal(v) => DMatrix::from_diagonal(&v.to_vector(n, "/cost/q/diagonal")?),
            MatrixSpec::Dense(rows) => matrix(rows, n, n, "/cost/q/dense")?,
        };
        let s = match &self.cost.s {
            CouplingSpec::Zero | CouplingSpec::Shorthand(CouplingShorthand::Zero) => DMatrix::zeros(m, n),
            CouplingSpec::Shorthand(CouplingShorthand::BTranspose) => model.b.transpose(),
            CouplingSpec::Dense { dense } => matrix(dense, m, n, "/cost/s/dense")?,
        };
        let nominal = match &self.cost.x_n {
            Some(v) if v.len() == n => Some(DVector::from_column_slice(v)),
            Some(v) => {
                return Err(Error::validation("/cost/x_n", format!("expected {n} components, got {}", v.len())))
            }
            None => None,
        };
        let r = match &self.cost.r {
            LinearSpec::Zero => Signal::zeros(n),
            LinearSpec::Shorthand(LinearShorthand::MinusQXn) => {
                let xn = nominal
                    .as_ref()
                    .ok_or_else(|| Error::validation("/cost/x_n", "the minus_Q_xn shorthand needs x_n"))?;
                Signal::constant(-(&q * xn))
            }
            LinearSpec::Terms(t) => signal_from_spec(t, n, "/cost/r")?,
        };
        let p = signal_from_spec(&self.cost.p, m, "/cost/p")?;
        let d = signal_from_spec(&self.cost.d, w, "/cost/d")?;
        let cost = CostData { q, s, r, p };
        cost.validate(n, m)?;
        for (sig, path) in [(&cost.r, "/cost/r"), (&cost.p, "/cost/p"), (&d, "/cost/d")] {
            if !sig.is_bounded() {
                return Err(Error::validation(path, "signal must be bounded on [0, inf)"));
            }
        }

        let bounds = InputBox::new(
            self.bounds.u_min.to_vector(m, "/bounds/u_min")?,
            self.bounds.u_max.to_vector(m, "/bounds/u_max")?,
        )?;

        let mut initial_states = Vec::new();
        for (i, spec) in self.runs.initial_states.iter().enumerate() {
            let path = format!("/runs/initial_states/{i}");
            let st = match spec {
                InitialStateSpec::Scaled { scale } => {
                    let xn = nominal
                        .as_ref()
                        .ok_or_else(|| Error::validation(&path, "scaled initial states need cost.x_n"))?;
                    InitialState {
                        label: format!("{scale}xn"),
                        x0: xn * *scale,
                    }
                }
                InitialStateSpec::Absolute { vector } => {
                    if vector.len() != n {
                        return Err(Error::validation(path, format!("expected {n} components")));
                    }
                    InitialState {
                        label: format!("x0_{i}"),
                        x0: DVector::from_column_slice(vector),
                    }
                }
            };
            initial_states.push(st);
        }
        for (i, &t) in self.runs.horizons_s.iter().enumerate() {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::validation(format!("/runs/horizons_s/{i}"), "horizon must be positive"));
            }
        }
        if !(self.numerics.step_s.is_finite() && self.numerics.step_s > 0.0) {
            return Err(Error::validation("/numerics/step_s", "step must be positive"));
        }
        if self.numerics.grid_points < 2 {
            return Err(Error::validation("/numerics/grid_points", "need at least two points"));
        }
        if let Some(wts) = &self.numerics.deviation_weights {
            if wts.len() != n + m || wts.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::validation(
                    "/numerics/deviation_weights",
                    format!("expected {} nonnegative weights", n + m),
                ));
            }
        }
        for (i, &e) in self.outputs.epsilon_grid.iter().enumerate() {
            if !(e.is_finite() && e >= 0.0) {
                return Err(Error::validation(format!("/outputs/epsilon_grid/{i}"), "radius must be nonnegative"));
            }
        }
        if let Some(c) = self.outputs.alpha_c {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::validation("/outputs/alpha_c", "c must be nonnegative"));
            }
        }
        for (i, &t) in self.outputs.storage_horizons_s.iter().enumerate() {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::validation(format!("/outputs/storage_horizons_s/{i}"), "horizon must be positive"));
            }
        }
        if !self.outputs.storage_initial_scales.is_empty() && nominal.is_none() {
            return Err(Error::validation("/outputs/storage_initial_scales", "scaled initial states need cost.x_n"));
        }

        Ok(Scenario {
            name: self.name,
            graph: self.graph,
            model,
            cost,
            disturbance: d,
            bounds,
            nominal,
            initial_states,
            horizons: self.runs.horizons_s,
            numerics: self.numerics,
            outputs: self.outputs,
        })
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        ScenarioFile::parse(text)?.build()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn intervals_for(&self, horizon: f64) -> usize {
        ((horizon / self.numerics.step_s).ceil() as usize).max(2)
    }

    /// The OCP for one `(x0, T)` with the scenario's default grid.
    pub fn ocp(&self, x0: &DVector<f64>, horizon: f64) -> OcpScenario {
        self.ocp_with(x0, horizon, self.intervals_for(horizon))
    }

    pub fn ocp_with(&self, x0: &DVector<f64>, horizon: f64, intervals: usize) -> OcpScenario {
        OcpScenario {
            model: self.model.clone(),
            cost: self.cost.clone(),
            disturbance: self.disturbance.clone(),
            bounds: self.bounds.clone(),
            horizon,
            x0: x0.clone(),
            intervals,
        }
    }
}
