//! Next-token models built from quantum neurons.
//!
//! A token is basis-encoded on an input register. For each context position
//! the input register is reloaded and a set of step neurons run; the hidden
//! register is never reset, so it carries a summary of earlier tokens.
//! Final neurons then write the prediction.
//!
//! Two architectures share this machinery. `Proposed` reads the next token
//! off the output register (renormalized over the vocabulary). `London`
//! scores each candidate token loaded on a candidate register by the
//! probability that a single readout qubit is `|1⟩`.

mod train;

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qpostr::ceil_log2;
use crate::rng::RngStream;
use crate::sim::{Angle, Circuit, Control, GateOp, ParameterVector, StateVector};
use crate::vocab::{tokenize_lines, Vocabulary};

pub use train::{
    context_pairs, generate, nll_and_grad, nll_loss, perplexity, train_seq, Checkpoint, SeqTrainConfig,
    CHECKPOINT_VERSION,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Proposed,
    London,
}

impl std::str::FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Arch::Proposed),
            "london" | "london-baseline" => Ok(Arch::London),
            other => Err(Error::InvalidArgument(format!("unknown architecture {other:?}"))),
        }
    }
}

/// Bias RY on `target`, then one singly-controlled RY per control.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeuronSpec {
    pub controls: Vec<usize>,
    pub target: usize,
}

impl NeuronSpec {
    pub fn num_params(&self) -> usize {
        self.controls.len() + 1
    }
}

/// A neuron list applied `reps` times, each repetition with fresh parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub neurons: Vec<NeuronSpec>,
    pub reps: usize,
}

/// Register widths and neuron wiring.
///
/// Qubits `0..token_bits` are the input register, then `hidden` qubits, then
/// `output` qubits. `step_blocks` run after each of the `context_len` token
/// loads (with separate parameters per step); `final_blocks` run once.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqModelSpec {
    pub arch: Arch,
    pub token_bits: usize,
    pub hidden: usize,
    pub output: usize,
    pub context_len: usize,
    pub step_blocks: Vec<BlockSpec>,
    pub final_blocks: Vec<BlockSpec>,
}

impl SeqModelSpec {
    pub fn proposed() -> Self {
        serde_json::from_str(include_str!("../../data/proposed.json")).expect("shipped model layout parses")
    }

    pub fn london() -> Self {
        serde_json::from_str(include_str!("../../data/london.json")).expect("shipped model layout parses")
    }

    pub fn default_for(arch: Arch) -> Self {
        match arch {
            Arch::Proposed => Self::proposed(),
            Arch::London => Self::london(),
        }
    }

    pub fn width(&self) -> usize {
        self.token_bits + self.hidden + self.output
    }

    pub fn output_qubits(&self) -> Vec<usize> {
        (self.token_bits + self.hidden..self.width()).collect()
    }

    /// The single readout qubit of the `London` layout.
    pub fn readout_qubit(&self) -> usize {
        self.token_bits
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidGate(msg));
        if self.token_bits == 0 || self.output == 0 || self.context_len == 0 {
            return bad("token_bits, output and context_len must be positive".into());
        }
        if self.arch == Arch::London && self.hidden != 1 {
            return bad("the london layout has exactly one readout qubit".into());
        }
        if self.arch == Arch::London && self.output != self.token_bits {
            return bad("the london candidate register must match the token width".into());
        }
        let w = self.width();
        for n in self.step_blocks.iter().chain(&self.final_blocks).flat_map(|b| &b.neurons) {
            if n.target >= w || n.controls.iter().any(|&c| c >= w) {
                return bad(format!("neuron {n:?} outside {w} qubits"));
            }
            if n.controls.contains(&n.target) {
                return bad(format!("neuron target {} is also a control", n.target));
            }
            let mut c = n.controls.clone();
            c.sort_unstable();
            c.dedup();
            if c.len() != n.controls.len() {
                return bad(format!("duplicate control in {n:?}"));
            }
            if n.target < self.token_bits {
                return bad(format!("neuron writes to input qubit {}", n.target));
            }
        }
        Ok(())
    }

    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        let need = ceil_log2(vocab.len() as u64) as usize;
        if self.token_bits < need || self.output < need {
            return Err(Error::InvalidGate(format!(
                "{} tokens need {need}-bit registers, model has input {} output {}",
                vocab.len(),
                self.token_bits,
                self.output
            )));
        }
        Ok(())
    }

    /// Slot names in canonical order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        let mut add = |prefix: &str, blocks: &[BlockSpec]| {
            for (bi, b) in blocks.iter().enumerate() {
                for r in 0..b.reps {
                    for (ni, n) in b.neurons.iter().enumerate() {
                        for j in 0..n.num_params() {
                            names.push(format!("{prefix}.b{bi}.r{r}.n{ni}.{j}"));
                        }
                    }
                }
            }
        };
        for step in 0..self.context_len {
            add(&format!("s{step}"), &self.step_blocks);
        }
        add("f", &self.final_blocks);
        names
    }

    /// Parameters that make the output uniform: every neuron bias in the first
    /// repetition of the first final block is π/2, everything else 0.
    pub fn uniform_params(&self) -> ParameterVector {
        let names = self.param_names();
        let mut p = vec![0.0; names.len()];
        if let Some(b) = self.final_blocks.first() {
            for ni in 0..b.neurons.len() {
                let name = format!("f.b0.r0.n{ni}.0");
                let i = names.iter().position(|n| *n == name).expect("canonical name");
                p[i] = FRAC_PI_2;
            }
        }
        ParameterVector(p)
    }

    /// Uniform parameters plus U(−noise, noise) perturbations.
    pub fn init_params(&self, noise: f64, seed: u64) -> ParameterVector {
        let mut rng = RngStream::new(seed);
        let mut p = self.uniform_params();
        p.0.iter_mut().for_each(|x| *x += rng.uniform_range(-noise, noise));
        p
    }
}

/// Σ over neurons of `(|controls| + 1)`, times repetitions; step blocks
/// count once per context position.
pub fn count_parameters(spec: &SeqModelSpec) -> usize {
    let block = |bs: &[BlockSpec]| -> usize {
        bs.iter().map(|b| b.reps * b.neurons.iter().map(NeuronSpec::num_params).sum::<usize>()).sum()
    };
    spec.context_len * block(&spec.step_blocks) + block(&spec.final_blocks)
}

/// X gates writing `token` in binary on qubits `offset..offset+bits`.
pub fn encode_tokens(token: usize, bits: usize, offset: usize) -> Result<Vec<GateOp>> {
    if token >= 1 << bits {
        return Err(Error::Encoding(format!("token id {token} does not fit in {bits} bits")));
    }
    Ok((0..bits).filter(|b| token >> b & 1 == 1).map(|b| GateOp::x(offset + b)).collect())
}

/// Push one neuron whose parameters are the named slots `names`.
pub fn push_neuron(c: &mut Circuit, neuron: &NeuronSpec, names: &[String]) -> Result<()> {
    if neuron.controls.contains(&neuron.target) {
        return Err(Error::InvalidGate(format!("neuron target {} is also a control", neuron.target)));
    }
    if names.len() != neuron.num_params() {
        return Err(Error::Parameter(format!("neuron needs {} slots, got {}", neuron.num_params(), names.len())));
    }
    let slot = |c: &mut Circuit, i: usize| c.param(&names[i]).map(Angle::param);
    let bias = slot(c, 0)?;
    c.push(GateOp::ry(neuron.target, bias))?;
    for (j, &q) in neuron.controls.iter().enumerate() {
        let a = slot(c, j + 1)?;
        c.push(GateOp::ry(neuron.target, a).with_controls(vec![Control::closed(q)]))?;
    }
    Ok(())
}

/// A lone neuron on `width` qubits with slots `0..=|controls|`.
pub fn build_neuron(width: usize, controls: &[usize], target: usize) -> Result<Circuit> {
    let n = NeuronSpec { controls: controls.to_vec(), target };
    let mut c = Circuit::new(width)?;
    let names: Vec<String> = (0..n.num_params()).map(|i| i.to_string()).collect();
    push_neuron(&mut c, &n, &names)?;
    Ok(c)
}

fn push_blocks(c: &mut Circuit, prefix: &str, blocks: &[BlockSpec]) -> Result<()> {
    for (bi, b) in blocks.iter().enumerate() {
        for r in 0..b.reps {
            for (ni, n) in b.neurons.iter().enumerate() {
                let names: Vec<String> =
                    (0..n.num_params()).map(|j| format!("{prefix}.b{bi}.r{r}.n{ni}.{j}")).collect();
                push_neuron(c, n, &names)?;
            }
        }
    }
    Ok(())
}

/// Circuit for one context window. `candidate` is loaded on the candidate
/// register and is required for `London`, forbidden for `Proposed`.
/// Parameter slots always follow [`SeqModelSpec::param_names`].
pub fn build_seq_circuit(spec: &SeqModelSpec, context: &[usize], candidate: Option<usize>) -> Result<Circuit> {
    spec.validate()?;
    if context.len() != spec.context_len {
        return Err(Error::InvalidArgument(format!(
            "context has {} tokens, model expects {}",
            context.len(),
            spec.context_len
        )));
    }
    let mut c = Circuit::new(spec.width())?;
    for name in spec.param_names() {
        c.param(&name)?;
    }
    match (spec.arch, candidate) {
        (Arch::London, Some(y)) => {
            for op in encode_tokens(y, spec.output, spec.token_bits + spec.hidden)? {
                c.push(op)?;
            }
        }
        (Arch::London, None) => return Err(Error::InvalidArgument("london circuits need a candidate".into())),
        (Arch::Proposed, Some(_)) => return Err(Error::InvalidArgument("proposed circuits take no candidate".into())),
        (Arch::Proposed, None) => {}
    }
    let mut loaded = 0;
    for (step, &tok) in context.iter().enumerate() {
        for op in encode_tokens(tok ^ loaded, spec.token_bits, 0)? {
            c.push(op)?;
        }
        if tok >= 1 << spec.token_bits {
            return Err(Error::Encoding(format!("token id {tok} does not fit")));
        }
        loaded = tok;
        push_blocks(&mut c, &format!("s{step}"), &spec.step_blocks)?;
    }
    push_blocks(&mut c, "f", &spec.final_blocks)?;
    Ok(c)
}

/// A trained or initial model: wiring, parameters and vocabulary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeqModel {
    pub spec: SeqModelSpec,
    pub params: ParameterVector,
    pub vocab: Vocabulary,
}

impl SeqModel {
    pub fn new(spec: SeqModelSpec, params: ParameterVector, vocab: Vocabulary) -> Result<Self> {
        spec.validate()?;
        spec.check_vocab(&vocab)?;
        if params.len() != count_parameters(&spec) {
            return Err(Error::Parameter(format!(
                "model layout has {} parameters, got {}",
                count_parameters(&spec),
                params.len()
            )));
        }
        Ok(Self { spec, params, vocab })
    }

    /// The model whose next-token distribution is uniform over the vocabulary.
    pub fn uniform(spec: SeqModelSpec, vocab: Vocabulary) -> Result<Self> {
        let p = spec.uniform_params();
        Self::new(spec, p, vocab)
    }

    /// Pad on the left with token 0 and keep the last `context_len` tokens.
    pub fn window(&self, history: &[usize]) -> Vec<usize> {
        let c = self.spec.context_len;
        let mut w = vec![0; c.saturating_sub(history.len())];
        w.extend_from_slice(&history[history.len().saturating_sub(c)..]);
        w
    }

    /// Unnormalized scores per token: output-register probabilities
    /// (`Proposed`) or readout-qubit `P(1)` per candidate (`London`).
    fn scores(&self, context: &[usize]) -> Result<Vec<f64>> {
        let n = self.vocab.len();
        if let Some(&bad) = context.iter().find(|&&t| t >= n) {
            return Err(Error::InvalidArgument(format!("token id {bad} >= vocabulary size {n}")));
        }
        match self.spec.arch {
            Arch::Proposed => {
                let c = build_seq_circuit(&self.spec, context, None)?;
                let s = c.run_from_zero(&self.params)?;
                Ok(s.register_distribution(&self.spec.output_qubits())?)
            }
            Arch::London => (0..n)
                .map(|y| {
                    let c = build_seq_circuit(&self.spec, context, Some(y))?;
                    c.run_from_zero(&self.params)?.qubit_probability(self.spec.readout_qubit(), 1)
                })
                .collect(),
        }
    }

    /// Next-token probabilities over the vocabulary.
    pub fn next_token_distribution(&self, context: &[usize]) -> Result<Vec<f64>> {
        let s = self.scores(context)?;
        let n = self.vocab.len();
        let z: f64 = s[..n].iter().sum();
        if z < 1e-9 {
            return Err(Error::Degenerate(format!("vocabulary mass {z:e} too small to renormalize")));
        }
        Ok(s[..n].iter().map(|x| x / z).collect())
    }

    /// Full output-register distribution (`Proposed` only), including
    /// outcomes outside the vocabulary.
    pub fn output_distribution(&self, context: &[usize]) -> Result<Vec<f64>> {
        if self.spec.arch != Arch::Proposed {
            return Err(Error::Unsupported("only the proposed model has an output register".into()));
        }
        self.scores(context)
    }
}

/// Read the token on the input register of a basis state.
pub fn decode_input(state: &StateVector, bits: usize) -> Result<usize> {
    let qubits: Vec<usize> = (0..bits).collect();
    let d = state.register_distribution(&qubits)?;
    let (i, p) = d.iter().enumerate().fold((0, 0.0), |a, (i, &p)| if p > a.1 { (i, p) } else { a });
    if (p - 1.0).abs() > 1e-9 {
        return Err(Error::Decode("input register is not in a basis state".into()));
    }
    Ok(i)
}

/// Sentences split into training and held-out parts over one vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub train: Vec<Vec<usize>>,
    pub test: Vec<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

/// Padding token; also ends every sentence.
pub const PAD: &str = ".";

impl Corpus {
    /// One sentence per line; a line `---` separates training from held-out
    /// sentences. The vocabulary comes from the training part with `.` as
    /// token 0, and held-out tokens must already be in it.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with(text, None)
    }

    /// As [`Corpus::parse`], but encode against a fixed vocabulary.
    pub fn parse_with(text: &str, vocab: Option<&Vocabulary>) -> Result<Self> {
        let (train_text, test_text) = match text.lines().position(|l| l.trim() == "---") {
            Some(i) => {
                let lines: Vec<&str> = text.lines().collect();
                (lines[..i].join("\n"), lines[i + 1..].join("\n"))
            }
            None => (text.to_string(), String::new()),
        };
        let train_raw = tokenize_lines(&train_text);
        if train_raw.is_empty() {
            return Err(Error::InvalidArgument("corpus has no training sentences".into()));
        }
        let vocab = match vocab {
            Some(v) => v.clone(),
            None => Vocabulary::from_sentences(&[PAD], &train_raw)?,
        };
        let encode = |raw: Vec<Vec<String>>| raw.iter().map(|s| vocab.encode(s)).collect::<Result<Vec<_>>>();
        let train = encode(train_raw)?;
        let test = encode(tokenize_lines(&test_text))?;
        Ok(Self { vocab, train, test })
    }

    pub fn split(&self, split: Split) -> &[Vec<usize>] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }
}

/// The shipped 7-sentence corpus: 5 training and 2 held-out sentences.
pub fn builtin_corpus() -> Corpus {
    Corpus::parse(include_str!("../../data/sentences.txt")).expect("shipped corpus parses")
}
