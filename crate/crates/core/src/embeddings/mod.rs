//! Word embeddings as parameterized quantum states, compared by fidelity.
//!
//! In the circuit-efficient scheme each word owns an ansatz parameter vector
//! and its state is `U(θ_k)|0⟩`. In the memory-efficient scheme a single
//! shared ansatz on `n ≥ m` qubits acts on the basis state `|k⟩` and the
//! extra `n − m` qubits are post-selected on `|0⟩`.

mod checkpoint;
mod train;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::sim::{Circuit, Control, GateKind, GateOp, ParameterVector, StateVector};
pub use crate::vocab::Vocabulary;

pub use checkpoint::{EmbeddingCheckpoint, SharedEntry, WordEntry, EMBEDDING_CHECKPOINT_VERSION};
pub use train::{
    cluster_pairs, generate_training_pairs, mean_fidelity, predict, sgns_loss, toy_corpus, train_cbow,
    train_sgns, train_skipgram, SgnsConfig, SgnsRecord, ToyCorpus,
};

/// Post-selection mass below which memory-efficient preparation fails.
pub const MIN_SUCCESS: f64 = 1e-9;

/// Layered ansatz: RY then RZ on every qubit, then a CNOT ring.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub qubits: usize,
    pub layers: usize,
}

impl Default for AnsatzSpec {
    fn default() -> Self {
        Self { qubits: 3, layers: 2 }
    }
}

impl AnsatzSpec {
    pub fn num_params(&self) -> usize {
        2 * self.qubits * self.layers
    }

    /// Slots are named `0..num_params` in gate order.
    pub fn circuit(&self) -> Result<Circuit> {
        if self.num_params() == 0 {
            return Err(Error::InvalidArgument("ansatz has no parameters".into()));
        }
        let m = self.qubits;
        let mut c = Circuit::new(m)?;
        let mut slot = 0;
        for _ in 0..self.layers {
            for q in 0..m {
                c.push_param(GateKind::RY, q, &slot.to_string())?;
                c.push_param(GateKind::RZ, q, &(slot + 1).to_string())?;
                slot += 2;
            }
            match m {
                1 => {}
                2 => {
                    c.push(GateOp::cnot(0, 1))?;
                }
                _ => {
                    for q in 0..m {
                        c.push(GateOp::cnot(q, (q + 1) % m))?;
                    }
                }
            }
        }
        Ok(c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Circuit,
    Memory,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circuit" => Ok(Scheme::Circuit),
            "memory" => Ok(Scheme::Memory),
            other => Err(Error::InvalidArgument(format!("unknown scheme {other:?}"))),
        }
    }
}

/// Trained or untrained word embeddings.
///
/// `params` holds `N` consecutive blocks of `ansatz.num_params()` values in
/// the circuit scheme, or a single block of the shared ansatz (width
/// `shared_width`) in the memory scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingModel {
    pub vocab: Vocabulary,
    pub ansatz: AnsatzSpec,
    pub scheme: Scheme,
    pub shared_width: usize,
    pub params: Vec<f64>,
}

impl EmbeddingModel {
    /// Parameters drawn uniformly from (−0.1, 0.1). The memory scheme gets
    /// one ancilla beyond `max(⌈log₂ N⌉, m)`: without one, a shared unitary
    /// maps distinct basis states to orthogonal word states.
    pub fn init(vocab: Vocabulary, ansatz: AnsatzSpec, scheme: Scheme, seed: u64) -> Result<Self> {
        let base = vocab.index_bits().max(ansatz.qubits);
        match scheme {
            Scheme::Circuit => Self::build(vocab, ansatz, scheme, base, seed),
            Scheme::Memory => Self::build(vocab, ansatz, scheme, base + 1, seed),
        }
    }

    /// Memory scheme with an explicit shared width `n ≥ max(⌈log₂ N⌉, m)`.
    pub fn init_memory(vocab: Vocabulary, ansatz: AnsatzSpec, shared_width: usize, seed: u64) -> Result<Self> {
        Self::build(vocab, ansatz, Scheme::Memory, shared_width, seed)
    }

    fn build(vocab: Vocabulary, ansatz: AnsatzSpec, scheme: Scheme, shared_width: usize, seed: u64) -> Result<Self> {
        let len = match scheme {
            Scheme::Circuit => vocab.len() * ansatz.num_params(),
            Scheme::Memory => Self::shared_ansatz_for(ansatz, shared_width).num_params(),
        };
        let mut rng = RngStream::new(seed);
        let params = (0..len).map(|_| rng.uniform_range(-0.1, 0.1)).collect();
        let model = Self { vocab, ansatz, scheme, shared_width, params };
        model.check()?;
        model.shared_ansatz().circuit()?;
        Ok(model)
    }

    fn shared_ansatz_for(ansatz: AnsatzSpec, width: usize) -> AnsatzSpec {
        AnsatzSpec { qubits: width, layers: ansatz.layers }
    }

    pub fn shared_ansatz(&self) -> AnsatzSpec {
        match self.scheme {
            Scheme::Circuit => self.ansatz,
            Scheme::Memory => Self::shared_ansatz_for(self.ansatz, self.shared_width),
        }
    }

    pub fn check(&self) -> Result<()> {
        let want = match self.scheme {
            Scheme::Circuit => self.vocab.len() * self.ansatz.num_params(),
            Scheme::Memory => self.shared_ansatz().num_params(),
        };
        if self.params.len() != want {
            return Err(Error::Parameter(format!("model expects {want} parameters, has {}", self.params.len())));
        }
        if self.scheme == Scheme::Memory && self.shared_width < self.ansatz.qubits.max(self.vocab.index_bits()) {
            return Err(Error::InvalidArgument("shared width too small".into()));
        }
        Ok(())
    }

    fn check_word(&self, k: usize) -> Result<()> {
        if k >= self.vocab.len() {
            return Err(Error::InvalidArgument(format!("word index {k} >= vocabulary size {}", self.vocab.len())));
        }
        Ok(())
    }

    pub fn word_params(&self, k: usize) -> Result<&[f64]> {
        self.check_word(k)?;
        if self.scheme != Scheme::Circuit {
            return Err(Error::Unsupported("per-word parameters exist only in the circuit scheme".into()));
        }
        let p = self.ansatz.num_params();
        Ok(&self.params[k * p..(k + 1) * p])
    }

    /// Embedding state of word `k`, whichever scheme the model uses.
    pub fn word_state(&self, k: usize) -> Result<StateVector> {
        match self.scheme {
            Scheme::Circuit => {
                let c = word_state_circuit(self, k)?;
                c.run_from_zero(&ParameterVector::default())
            }
            Scheme::Memory => Ok(memory_efficient_state(self, k)?.0),
        }
    }

    pub fn fidelity(&self, a: usize, b: usize) -> Result<f64> {
        fidelity_exact(&self.word_state(a)?, &self.word_state(b)?)
    }
}

/// Parameter-free circuit preparing word `k` (circuit scheme).
pub fn word_state_circuit(model: &EmbeddingModel, k: usize) -> Result<Circuit> {
    let theta = model.word_params(k)?;
    model.ansatz.circuit()?.bind(&ParameterVector(theta.to_vec()))
}

/// Shared ansatz on `|k⟩`, post-selected to the first `m` qubits. Returns
/// the renormalized `m`-qubit state and the post-selection probability.
pub fn memory_efficient_state(model: &EmbeddingModel, k: usize) -> Result<(StateVector, f64)> {
    model.check_word(k)?;
    if model.scheme != Scheme::Memory {
        return Err(Error::Unsupported("model uses the circuit scheme".into()));
    }
    model.check()?;
    let shared = model.shared_ansatz().circuit()?;
    let initial = StateVector::basis(model.shared_width, k)?;
    let out = shared.run(&ParameterVector(model.params.clone()), &initial)?;
    let keep = 1usize << model.ansatz.qubits;
    let mass: f64 = out.amplitudes()[..keep].iter().map(|a| a.norm_sqr()).sum();
    if mass < MIN_SUCCESS {
        return Err(Error::PreparationFailure { probability: mass });
    }
    let scale = mass.sqrt().recip();
    let amps: Vec<C64> = out.amplitudes()[..keep].iter().map(|a| a * scale).collect();
    Ok((StateVector::from_amplitudes(amps)?, mass))
}

/// `|⟨a|b⟩|²`.
pub fn fidelity_exact(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(a.inner_product(b)?.norm_sqr().min(1.0))
}

/// Ancilla on qubit 0, registers on `1..=m` and `m+1..=2m`. No state preparation.
pub fn swap_test_core(m: usize) -> Result<Circuit> {
    let mut c = Circuit::new(1 + 2 * m)?;
    c.push(GateOp::h(0))?;
    for i in 0..m {
        c.push(GateOp::swap(1 + i, 1 + m + i).with_controls(vec![Control::closed(0)]))?;
    }
    c.push(GateOp::h(0))?;
    Ok(c)
}

/// Swap test over two state-preparation circuits. Parameters of `a` are
/// renamed `a.<name>` and those of `b` `b.<name>`, in that order.
pub fn swap_test_circuit(a: &Circuit, b: &Circuit) -> Result<Circuit> {
    if a.width() != b.width() {
        return Err(Error::WidthMismatch { expected: a.width(), actual: b.width() });
    }
    let m = a.width();
    let mut c = Circuit::new(1 + 2 * m)?;
    let ra: Vec<usize> = (1..=m).collect();
    let rb: Vec<usize> = (m + 1..=2 * m).collect();
    c.append_mapped(a, &ra, |n| format!("a.{n}"))?;
    c.append_mapped(b, &rb, |n| format!("b.{n}"))?;
    c.append(&swap_test_core(m)?)?;
    Ok(c)
}

/// Output of the swap test applied to `|0⟩|a⟩|b⟩`.
pub fn swap_test_state(a: &StateVector, b: &StateVector) -> Result<StateVector> {
    if a.width() != b.width() {
        return Err(Error::WidthMismatch { expected: a.width(), actual: b.width() });
    }
    let input = StateVector::zero(1)?.tensor(a)?.tensor(b)?;
    swap_test_core(a.width())?.run(&ParameterVector::default(), &input)
}

/// P(ancilla = 0) of a swap-test output state.
pub fn ancilla_zero_probability(state: &StateVector) -> Result<f64> {
    state.qubit_probability(0, 0)
}

/// Fidelity estimate `2·P̂(0) − 1` from `shots` samples, clamped to [0, 1].
pub fn swap_test_estimate(a: &StateVector, b: &StateVector, shots: usize, seed: u64) -> Result<f64> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be positive".into()));
    }
    let out = swap_test_state(a, b)?;
    let zeros = out.sample(shots, seed).into_iter().filter(|i| i & 1 == 0).count();
    Ok((2.0 * zeros as f64 / shots as f64 - 1.0).clamp(0.0, 1.0))
}

/// Prediction head `V(φ)` over `max(m, ⌈log₂ N⌉)` qubits.
pub fn head_ansatz(model: &EmbeddingModel, layers: usize) -> AnsatzSpec {
    AnsatzSpec { qubits: model.ansatz.qubits.max(model.vocab.index_bits()), layers }
}

/// `|⟨k| V(φ) (|w⟩ ⊗ |0⟩)|²`, not renormalized.
pub fn skipgram_head_prob(
    model: &EmbeddingModel,
    head: &AnsatzSpec,
    head_params: &ParameterVector,
    input_state: &StateVector,
    k: usize,
) -> Result<f64> {
    let p = head_output(model, head, head_params, input_state)?;
    p.get(k)
        .copied()
        .ok_or_else(|| Error::InvalidArgument(format!("outcome {k} >= {}", p.len())))
}

fn head_output(
    model: &EmbeddingModel,
    head: &AnsatzSpec,
    head_params: &ParameterVector,
    input_state: &StateVector,
) -> Result<Vec<f64>> {
    if input_state.width() != model.ansatz.qubits {
        return Err(Error::WidthMismatch { expected: model.ansatz.qubits, actual: input_state.width() });
    }
    let input = if head.qubits > input_state.width() {
        input_state.tensor(&StateVector::zero(head.qubits - input_state.width())?)?
    } else {
        input_state.clone()
    };
    Ok(head.circuit()?.run(head_params, &input)?.probabilities())
}

/// Head distribution renormalized over the first `N` outcomes.
pub fn head_distribution(
    model: &EmbeddingModel,
    head: &AnsatzSpec,
    head_params: &ParameterVector,
    input_state: &StateVector,
) -> Result<Vec<f64>> {
    let p = head_output(model, head, head_params, input_state)?;
    renormalize(&p, model.vocab.len())
}

pub(crate) fn renormalize(p: &[f64], n: usize) -> Result<Vec<f64>> {
    let z: f64 = p[..n].iter().sum();
    if z < 1e-9 {
        return Err(Error::Degenerate(format!("vocabulary mass {z:e} too small to renormalize")));
    }
    Ok(p[..n].iter().map(|x| x / z).collect())
}
