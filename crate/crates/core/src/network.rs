//! Graph model of a district heating network and the linear thermal
//! state-space model derived from it.
//!
//! Every vertex is a control volume with a temperature state. Water moves
//! along directed edges at constant mass flow, so the temperature dynamics are
//!
//! ```text
//! m_v dT_v/dt = sum_{(u,v)} q_uv T_u - (sum_{(v,w)} q_vw) T_v - kappa_v T_v + P_v
//! ```
//!
//! with the ambient temperature normalised to zero and unit heat capacity.

use std::collections::{HashMap, VecDeque};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Relative tolerance for the nodal mass balance.
const MASS_BALANCE_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexRole {
    #[default]
    Plain,
    Producer,
    Consumer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: String,
    /// Thermal mass (kg, heat capacity normalised to one).
    #[serde(default = "unit_mass")]
    pub mass: f64,
    /// Heat loss coefficient to ambient (W/K).
    pub loss: f64,
    #[serde(default)]
    pub role: VertexRole,
}

fn unit_mass() -> f64 {
    1.0
}

/// Directed pipe connection, oriented along the flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    /// Mass flow (kg/s), strictly positive.
    pub flow: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NetworkGraph {
    pub vertices: Vec<Vertex>,
    #[serde(default)]
    pub edges: Vec<Edge>,
}

impl NetworkGraph {
    pub fn n(&self) -> usize {
        self.vertices.len()
    }

    fn index_map(&self) -> Result<HashMap<&str, usize>> {
        let mut map = HashMap::with_capacity(self.vertices.len());
        for (i, v) in self.vertices.iter().enumerate() {
            if map.insert(v.id.as_str(), i).is_some() {
                return Err(Error::validation(
                    format!("/graph/vertices/{i}/id"),
                    format!("duplicate vertex id '{}' (a vertex can carry only one role)", v.id),
                ));
            }
        }
        Ok(map)
    }

    /// Checks every structural invariant and returns edge endpoints as
    /// vertex indices.
    pub fn validate(&self) -> Result<Vec<(usize, usize, f64)>> {
        if self.vertices.is_empty() {
            return Err(Error::validation("/graph/vertices", "graph has no vertices"));
        }
        let index = self.index_map()?;
        for (i, v) in self.vertices.iter().enumerate() {
            if !(v.mass.is_finite() && v.mass > 0.0) {
                return Err(Error::validation(
                    format!("/graph/vertices/{i}/mass"),
                    format!("mass of '{}' must be positive, got {}", v.id, v.mass),
                ));
            }
            if !(v.loss.is_finite() && v.loss > 0.0) {
                return Err(Error::validation(
                    format!("/graph/vertices/{i}/loss"),
                    format!("loss coefficient of '{}' must be positive, got {}", v.id, v.loss),
                ));
            }
        }
        let mut edges = Vec::with_capacity(self.edges.len());
        for (k, e) in self.edges.iter().enumerate() {
            let lookup = |id: &str, field: &str| {
                index.get(id).copied().ok_or_else(|| {
                    Error::validation(
                        format!("/graph/edges/{k}/{field}"),
                        format!("unknown vertex '{id}'"),
                    )
                })
            };
            let tail = lookup(&e.from, "from")?;
            let head = lookup(&e.to, "to")?;
            if tail == head {
                return Err(Error::validation(
                    format!("/graph/edges/{k}"),
                    format!("self-loop at '{}'", e.from),
                ));
            }
            if !(e.flow.is_finite() && e.flow > 0.0) {
                return Err(Error::validation(
                    format!("/graph/edges/{k}/flow"),
                    format!("mass flow must be positive, got {}", e.flow),
                ));
            }
            edges.push((tail, head, e.flow));
        }

        let n = self.n();
        let mut inflow = vec![0.0; n];
        let mut outflow = vec![0.0; n];
        let mut adjacency = vec![Vec::new(); n];
        for &(t, h, q) in &edges {
            outflow[t] += q;
            inflow[h] += q;
            adjacency[t].push(h);
            adjacency[h].push(t);
        }
        for v in 0..n {
            let scale = inflow[v].max(outflow[v]);
            if (inflow[v] - outflow[v]).abs() > MASS_BALANCE_RTOL * scale {
                return Err(Error::validation(
                    "/graph/edges",
                    format!(
                        "mass conservation violated at vertex '{}': inflow {} != outflow {}",
                        self.vertices[v].id, inflow[v], outflow[v]
                    ),
                ));
            }
        }

        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        if let Some(v) = seen.iter().position(|s| !s) {
            return Err(Error::validation(
                "/graph",
                format!("graph is not connected: vertex '{}' is unreachable", self.vertices[v].id),
            ));
        }
        Ok(edges)
    }

    /// Flow-weighted Laplacian: `L[v][v]` is the total outflow of `v` and
    /// `L[v][u] = -q` for every edge `u -> v` (parallel edges accumulate).
    /// Rows sum to zero under mass conservation.
    pub fn flow_laplacian(&self) -> Result<DMatrix<f64>> {
        let edges = self.validate()?;
        let n = self.n();
        let mut lap = DMatrix::zeros(n, n);
        for (tail, head, q) in edges {
            lap[(tail, tail)] += q;
            lap[(head, tail)] -= q;
        }
        Ok(lap)
    }

    /// Builds `(A, B, E)` with `A = diag(m)^-1 (-L - diag(kappa))`.
    pub fn assemble_model(&self) -> Result<StateSpaceModel> {
        let lap = self.flow_laplacian()?;
        let n = self.n();
        let mut a = -lap;
        let mut producers = Vec::new();
        let mut consumers = Vec::new();
        for (i, v) in self.vertices.iter().enumerate() {
            a[(i, i)] -= v.loss;
            match v.role {
                VertexRole::Producer => producers.push(i),
                VertexRole::Consumer => consumers.push(i),
                VertexRole::Plain => {}
            }
        }
        for (i, v) in self.vertices.iter().enumerate() {
            a.row_mut(i).scale_mut(1.0 / v.mass);
        }
        let mut b = DMatrix::zeros(n, producers.len());
        for (j, &i) in producers.iter().enumerate() {
            b[(i, j)] = 1.0 / self.vertices[i].mass;
        }
        let mut e = DMatrix::zeros(n, consumers.len());
        for (j, &i) in consumers.iter().enumerate() {
            e[(i, j)] = 1.0 / self.vertices[i].mass;
        }
        Ok(StateSpaceModel {
            a,
            b,
            e,
            vertex_ids: self.vertices.iter().map(|v| v.id.clone()).collect(),
            producers,
            consumers,
        })
    }
}

/// Continuous-time model `x' = A x + B u + E d`.
///
/// With unit masses `B` and `E` are 0/1 selection matrices; with general
/// masses their nonzero entries are `1/m_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub vertex_ids: Vec<String>,
    /// Vertex index of each input column.
    pub producers: Vec<usize>,
    /// Vertex index of each disturbance column.
    pub consumers: Vec<usize>,
}

impl StateSpaceModel {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn w(&self) -> usize {
        self.e.ncols()
    }

    /// Stability certificate for `A`.
    ///
    /// The transient constant `k` and decay rate satisfy
    /// `||exp(A t)|| <= k exp(-rate t)`. For normal `A` this holds with
    /// `k = 1` and `rate = |omega(A)|`. Otherwise the Lyapunov equation
    /// `As^T P + P As = -I` is solved for the shifted matrix
    /// `As = A + (1 - θ)|omega| I` (θ = [`CERT_RATE_SLACK`]) and
    /// `k = sqrt(cond(P))`, `rate = (1 - θ)|omega|`.
    pub fn hurwitz_certificate(&self) -> Result<HurwitzCertificate> {
        let n = self.n();
        let eig = linalg::complex_eigenvalues(&self.a)?;
        let spectral_abscissa = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);

        let mut margin = f64::INFINITY;
        for i in 0..n {
            let d = self.a[(i, i)];
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| self.a[(i, j)].abs()).sum();
            let row = if d < 0.0 { d.abs() - off } else { -d.abs() - off };
            margin = margin.min(row);
        }

        if !(spectral_abscissa < 0.0) {
            return Err(Error::numerical(
                "hurwitz_certificate",
                format!("A is not Hurwitz (spectral abscissa {spectral_abscissa:e}); this indicates a modelling bug"),
            ));
        }

        let commutator = &self.a.transpose() * &self.a - &self.a * self.a.transpose();
        let normal = commutator.norm() <= 1e-12 * self.a.norm_squared().max(f64::MIN_POSITIVE);
        let (k, decay_rate) = if normal {
            (1.0, spectral_abscissa.abs())
        } else {
            let rate = (1.0 - CERT_RATE_SLACK) * spectral_abscissa.abs();
            let shifted = &self.a + DMatrix::identity(n, n) * rate;
            let p = linalg::lyapunov(&shifted, &(-DMatrix::identity(n, n)))?;
            let eig = linalg::symmetric_eigenvalues(&p)?;
            let (lo, hi) = (eig.min(), eig.max());
            if !(lo > 0.0) {
                return Err(Error::numerical(
                    "hurwitz_certificate",
                    format!("Lyapunov solution not positive definite (min eigenvalue {lo:e})"),
                ));
            }
            ((hi / lo).sqrt(), rate)
        };

        Ok(HurwitzCertificate {
            spectral_abscissa,
            gershgorin_margin: margin,
            k,
            decay_rate,
        })
    }

    /// Upper bound on `||x(T)||` for admissible inputs with `||u|| <= u_hat`
    /// and disturbances with `||d|| <= d_hat`.
    pub fn state_bound(
        &self,
        cert: &HurwitzCertificate,
        x0_norm: f64,
        u_hat: f64,
        d_hat: f64,
        t: f64,
    ) -> f64 {
        let b_norm = linalg::spectral_norm(&self.b);
        let e_norm = linalg::spectral_norm(&self.e);
        cert.k * (-cert.decay_rate * t).exp() * x0_norm
            + cert.k / cert.decay_rate * (b_norm * u_hat + e_norm * d_hat)
    }
}

/// Slack on the certified decay rate for non-normal `A`.
pub const CERT_RATE_SLACK: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HurwitzCertificate {
    /// `max Re λ(A)` (1/s).
    pub spectral_abscissa: f64,
    /// `min_i (|a_ii| - sum_{j != i} |a_ij|)`, negative if some diagonal
    /// entry is nonnegative. Positive values certify the Hurwitz property.
    pub gershgorin_margin: f64,
    pub k: f64,
    /// Certified exponential decay rate (1/s), `<= |spectral_abscissa|`.
    pub decay_rate: f64,
}

/// Independent state-space check used by tests and the CLI: `B^T B = I`
/// etc. hold exactly for unit masses.
pub fn selection_residuals(model: &StateSpaceModel) -> [f64; 3] {
    let m = model.m();
    let w = model.w();
    [
        (model.b.transpose() * &model.b - DMatrix::identity(m, m)).amax(),
        (model.e.transpose() * &model.e - DMatrix::identity(w, w)).amax(),
        (model.b.transpose() * &model.e).amax(),
    ]
}
