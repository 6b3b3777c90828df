//! Noiseless statevector simulation.

pub mod circuit;
pub mod gate;
pub mod state;
pub mod text;

pub use circuit::{apply_circuit, Circuit, ParameterVector};
pub use gate::{Angle, Control, GateKind, GateOp, Matrix2, Polarity};
pub use state::{extract_register, StateVector, MAX_WIDTH, NORM_TOLERANCE};
pub use text::{parse_circuit, write_circuit};
