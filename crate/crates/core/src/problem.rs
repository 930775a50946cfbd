//! Problem data shared by the transcription, pencil and audit modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::network::StateSpaceModel;
use crate::signal::Signal;

/// Running cost `l(t, x, u) = 1/2 x'Qx + u'Sx + x'r(t) + u'p(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostData {
    /// n x n, symmetric.
    pub q: DMatrix<f64>,
    /// m x n.
    pub s: DMatrix<f64>,
    pub r: Signal,
    pub p: Signal,
}

impl CostData {
    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        if self.q.shape() != (n, n) {
            return Err(Error::validation("/cost/q", format!("Q must be {n}x{n}, got {:?}", self.q.shape())));
        }
        let asym = (&self.q - self.q.transpose()).amax();
        if asym > 1e-12 * self.q.amax().max(f64::MIN_POSITIVE) {
            return Err(Error::validation("/cost/q", format!("Q is not symmetric (max |Q - Q'| = {asym:e})")));
        }
        if self.s.shape() != (m, n) {
            return Err(Error::validation("/cost/s", format!("S must be {m}x{n}, got {:?}", self.s.shape())));
        }
        if self.r.dim() != n {
            return Err(Error::validation("/cost/r", format!("r must have dimension {n}")));
        }
        if self.p.dim() != m {
            return Err(Error::validation("/cost/p", format!("p must have dimension {m}")));
        }
        Ok(())
    }

    pub fn running_cost(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + u.dot(&(&self.s * x)) + x.dot(&self.r.eval(t)) + u.dot(&self.p.eval(t))
    }
}

/// Componentwise input box `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBox {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl InputBox {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::validation("/bounds", "u_min and u_max differ in length"));
        }
        for i in 0..lower.len() {
            if !(lower[i].is_finite() && upper[i].is_finite()) || lower[i] > upper[i] {
                return Err(Error::validation(
                    format!("/bounds/u_min/{i}"),
                    format!("need finite u_min <= u_max, got [{}, {}]", lower[i], upper[i]),
                ));
            }
        }
        Ok(InputBox { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// `sup_{u in U} ||u||`.
    pub fn sup_norm(&self) -> f64 {
        self.lower.zip_map(&self.upper, |a, b| a.abs().max(b.abs())).norm()
    }

    /// Signed distance of `u` to the boundary: positive inside.
    pub fn margin(&self, u: &DVector<f64>) -> f64 {
        (0..u.len())
            .map(|i| (u[i] - self.lower[i]).min(self.upper[i] - u[i]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// One instance of the finite-horizon economic optimal control problem.
#[derive(Debug, Clone)]
pub struct OcpScenario {
    pub model: StateSpaceModel,
    pub cost: CostData,
    pub disturbance: Signal,
    pub bounds: InputBox,
    /// Horizon (s).
    pub horizon: f64,
    pub x0: DVector<f64>,
    /// Number of piecewise-constant control intervals.
    pub intervals: usize,
}

/// Default control interval length (s).
pub const DEFAULT_STEP: f64 = 360.0;

pub fn default_intervals(horizon: f64) -> usize {
    ((horizon / DEFAULT_STEP).ceil() as usize).max(2)
}

impl OcpScenario {
    pub fn validate(&self) -> Result<()> {
        let (n, m, w) = (self.model.n(), self.model.m(), self.model.w());
        self.cost.validate(n, m)?;
        if self.disturbance.dim() != w {
            return Err(Error::validation("/cost/d", format!("d must have dimension {w}")));
        }
        if self.bounds.dim() != m {
            return Err(Error::validation("/bounds", format!("input bounds must have dimension {m}")));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::validation("/runs/horizons_s", "horizon must be positive"));
        }
        if self.x0.len() != n {
            return Err(Error::validation("/runs/initial_states", format!("x0 must have dimension {n}")));
        }
        if self.intervals < 2 {
            return Err(Error::validation("/numerics/intervals", "need at least two intervals"));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.intervals as f64
    }

    pub fn with_horizon(&self, horizon: f64, intervals: usize) -> Self {
        OcpScenario {
            horizon,
            intervals,
            ..self.clone()
        }
    }

    pub fn with_x0(&self, x0: DVector<f64>) -> Self {
        OcpScenario { x0, ..self.clone() }
    }
}
