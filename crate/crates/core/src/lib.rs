//! Linear district-heating-network models, economic optimal control and
//! exact time-varying turnpikes.

pub mod diagnostics;
pub mod dissipativity;
pub mod error;
pub mod linalg;
pub mod network;
pub mod ocp;
pub mod output;
pub mod pencil;
pub mod pipeline;
pub mod pmp;
pub mod problem;
pub mod qp;
pub mod scenario;
pub mod signal;

pub use error::{Error, Result};
pub use network::{Edge, HurwitzCertificate, NetworkGraph, StateSpaceModel, Vertex, VertexRole};
pub use pencil::{OptimalityPencil, TurnpikeTrajectory, WeierstrassDecomposition};
pub use problem::{CostData, InputBox, OcpScenario};
pub use signal::{Signal, Term};
