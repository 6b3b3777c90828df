//! Small-scale quantum NLP on an exact statevector simulator.
//!
//! * [`sim`]: register state, gates with open/closed multi-controls,
//!   circuits and their text format.
//! * [`diffopt`]: parameter-shift, adjoint and finite-difference gradients,
//!   Adam, and a generic training loop.
//! * [`qpostr`]: positional string encoding (position ⊗ character
//!   registers), readout, decoding, and resource estimates.
//! * [`embeddings`]: word states from per-word or shared ansätze,
//!   swap-test fidelity, negative-sampling and prediction-head training.
//! * [`seqgen`]: quantum-neuron next-token models, perplexity and sampling.
//!
//! Bit order everywhere: bit `k` of a basis index is qubit `k`.

pub mod diffopt;
pub mod embeddings;
pub mod error;
pub mod qpostr;
pub mod rng;
pub mod seqgen;
pub mod sim;
pub mod vocab;

pub use error::{Error, Result};
