use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_seq_circuit, count_parameters, Arch, Corpus, SeqModel, SeqModelSpec};
use crate::diffopt::{
    distribution_loss_grad, train, AdamConfig, EvalOptions, GradMethod, LossFn, TraceRecord, TrainConfig,
};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::sim::{extract_register, Circuit, ParameterVector, StateVector};
use crate::vocab::Vocabulary;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Consecutive out-of-vocabulary draws tolerated per generated token.
const MAX_REJECTIONS: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeqTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Half-width of the uniform perturbation added to the uniform-output start.
    pub init_noise: f64,
    pub method: GradMethod,
    pub shots: Option<usize>,
}

impl Default for SeqTrainConfig {
    fn default() -> Self {
        Self { epochs: 200, lr: 0.05, seed: 42, init_noise: 0.1, method: GradMethod::Adjoint, shots: None }
    }
}

/// Serialized model plus the settings that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub spec: SeqModelSpec,
    pub params: ParameterVector,
    pub vocab: Vocabulary,
    pub config: Option<SeqTrainConfig>,
}

impl Checkpoint {
    pub fn new(model: SeqModel, config: Option<SeqTrainConfig>) -> Self {
        Self { version: CHECKPOINT_VERSION, spec: model.spec, params: model.params, vocab: model.vocab, config }
    }

    pub fn model(&self) -> Result<SeqModel> {
        SeqModel::new(self.spec.clone(), self.params.clone(), self.vocab.clone())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Decode(format!("checkpoint: {e}")))?;
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Decode(format!("unsupported checkpoint version {}", c.version)));
        }
        c.model()?;
        Ok(c)
    }
}

/// `(context window, next token)` for every token of every sentence.
pub fn context_pairs(sentences: &[Vec<usize>], context_len: usize) -> Vec<(Vec<usize>, usize)> {
    let mut out = Vec::new();
    for s in sentences {
        for i in 0..s.len() {
            let mut w = vec![0; context_len.saturating_sub(i)];
            w.extend_from_slice(&s[i.saturating_sub(context_len)..i]);
            out.push((w, s[i]));
        }
    }
    out
}

struct Group {
    /// One circuit for `Proposed`, one per candidate token for `London`.
    circuits: Vec<Circuit>,
    targets: Vec<(usize, f64)>,
    count: f64,
}

/// Mean next-token NLL over a fixed set of pairs.
struct SeqObjective {
    arch: Arch,
    n: usize,
    num_params: usize,
    pairs: f64,
    groups: Vec<Group>,
    /// Register value per basis index: output register (`Proposed`) or readout bit (`London`).
    outcome: Vec<usize>,
}

impl SeqObjective {
    fn new(model: &SeqModel, sentences: &[Vec<usize>]) -> Result<Self> {
        let spec = &model.spec;
        let n = model.vocab.len();
        let pairs = context_pairs(sentences, spec.context_len);
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("no token pairs to evaluate".into()));
        }
        let mut grouped: BTreeMap<Vec<usize>, BTreeMap<usize, usize>> = BTreeMap::new();
        for (ctx, t) in &pairs {
            if let Some(&bad) = ctx.iter().chain(std::iter::once(t)).find(|&&x| x >= n) {
                return Err(Error::InvalidArgument(format!("token id {bad} >= vocabulary size {n}")));
            }
            *grouped.entry(ctx.clone()).or_default().entry(*t).or_default() += 1;
        }
        let groups = grouped
            .into_iter()
            .map(|(ctx, targets)| {
                let circuits = match spec.arch {
                    Arch::Proposed => vec![build_seq_circuit(spec, &ctx, None)?],
                    Arch::London => (0..n).map(|y| build_seq_circuit(spec, &ctx, Some(y))).collect::<Result<_>>()?,
                };
                let targets: Vec<(usize, f64)> = targets.into_iter().map(|(t, c)| (t, c as f64)).collect();
                let count = targets.iter().map(|t| t.1).sum();
                Ok(Group { circuits, targets, count })
            })
            .collect::<Result<Vec<_>>>()?;
        let outcome = match spec.arch {
            Arch::Proposed => {
                let q = spec.output_qubits();
                (0..1usize << spec.width()).map(|i| extract_register(i, &q)).collect()
            }
            Arch::London => (0..1usize << spec.width()).map(|i| i >> spec.readout_qubit() & 1).collect(),
        };
        Ok(Self {
            arch: spec.arch,
            n,
            num_params: count_parameters(spec),
            pairs: pairs.len() as f64,
            groups,
            outcome,
        })
    }

    fn register_probs(&self, p: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.outcome.iter().max().map_or(1, |m| m + 1)];
        for (i, &o) in self.outcome.iter().enumerate() {
            q[o] += p[i];
        }
        q
    }

    /// Loss of one group from token scores, and `∂L/∂score`.
    fn group_loss(&self, g: &Group, scores: &[f64]) -> Result<(f64, Vec<f64>)> {
        let z: f64 = scores[..self.n].iter().sum();
        if z < 1e-9 {
            return Err(Error::Degenerate(format!("vocabulary mass {z:e} too small to renormalize")));
        }
        let mut loss = g.count * z.ln();
        let mut d = vec![0.0; scores.len()];
        d[..self.n].iter_mut().for_each(|x| *x = g.count / z);
        for &(t, c) in &g.targets {
            loss -= c * scores[t].ln();
            d[t] -= c / scores[t];
        }
        Ok((loss, d))
    }

    fn group_eval(&self, g: &Group, params: &ParameterVector, opts: Option<(&EvalOptions, u64)>) -> Result<(f64, Vec<f64>)> {
        let width = g.circuits[0].width();
        let zero = StateVector::zero(width)?;
        match self.arch {
            Arch::Proposed => {
                let f = |p: &[f64]| {
                    let q = self.register_probs(p);
                    let (l, d) = self.group_loss(g, &q)?;
                    Ok((l, self.outcome.iter().map(|&o| d[o]).collect()))
                };
                match opts {
                    None => Ok((f(&g.circuits[0].run(params, &zero)?.probabilities())?.0, Vec::new())),
                    Some((o, seed)) => distribution_loss_grad(&g.circuits[0], params, &zero, &f, o.method, o.shots, seed),
                }
            }
            Arch::London => {
                let readout = |p: &[f64]| {
                    let w: Vec<f64> = self.outcome.iter().map(|&o| o as f64).collect();
                    Ok((p.iter().zip(&w).map(|(a, b)| a * b).sum(), w))
                };
                let mut scores = Vec::with_capacity(self.n);
                let mut grads = Vec::with_capacity(self.n);
                for (y, c) in g.circuits.iter().enumerate() {
                    match opts {
                        None => scores.push(readout(&c.run(params, &zero)?.probabilities())?.0),
                        Some((o, seed)) => {
                            let child = RngStream::new(seed).derive_seed(y as u64);
                            let (s, gr) = distribution_loss_grad(c, params, &zero, &readout, o.method, o.shots, child)?;
                            scores.push(s);
                            grads.push(gr);
                        }
                    }
                }
                let (loss, d) = self.group_loss(g, &scores)?;
                let mut grad = vec![0.0; if opts.is_some() { self.num_params } else { 0 }];
                for (dy, gy) in d.iter().zip(&grads) {
                    for (dst, x) in grad.iter_mut().zip(gy) {
                        *dst += dy * x;
                    }
                }
                Ok((loss, grad))
            }
        }
    }
}

impl LossFn for SeqObjective {
    fn num_params(&self) -> usize {
        self.num_params
    }

    fn loss(&self, params: &[f64], _: &EvalOptions) -> Result<f64> {
        let p = ParameterVector(params.to_vec());
        let parts = self.groups.par_iter().map(|g| Ok(self.group_eval(g, &p, None)?.0)).collect::<Result<Vec<f64>>>()?;
        Ok(parts.iter().sum::<f64>() / self.pairs)
    }

    fn loss_and_grad(&self, params: &[f64], opts: &EvalOptions) -> Result<(f64, Vec<f64>)> {
        let p = ParameterVector(params.to_vec());
        let root = RngStream::new(opts.seed);
        let parts = self
            .groups
            .par_iter()
            .enumerate()
            .map(|(i, g)| self.group_eval(g, &p, Some((opts, root.derive_seed(i as u64)))))
            .collect::<Result<Vec<_>>>()?;
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.num_params];
        for (l, g) in parts {
            loss += l;
            for (dst, x) in grad.iter_mut().zip(g) {
                *dst += x;
            }
        }
        grad.iter_mut().for_each(|x| *x /= self.pairs);
        Ok((loss / self.pairs, grad))
    }
}

/// Mean `−ln p̃(next | context)` over all tokens of `sentences`.
pub fn nll_loss(model: &SeqModel, sentences: &[Vec<usize>]) -> Result<f64> {
    let obj = SeqObjective::new(model, sentences)?;
    obj.loss(&model.params.0, &EvalOptions { method: GradMethod::Adjoint, shots: None, seed: 0 })
}

/// NLL and its gradient with respect to the model parameters.
pub fn nll_and_grad(model: &SeqModel, sentences: &[Vec<usize>], opts: &EvalOptions) -> Result<(f64, Vec<f64>)> {
    SeqObjective::new(model, sentences)?.loss_and_grad(&model.params.0, opts)
}

pub fn perplexity(model: &SeqModel, sentences: &[Vec<usize>]) -> Result<f64> {
    Ok(nll_loss(model, sentences)?.exp())
}

/// Train from a perturbed uniform-output start on the training split.
pub fn train_seq(
    corpus: &Corpus,
    spec: &SeqModelSpec,
    config: &SeqTrainConfig,
    on_epoch: impl FnMut(&TraceRecord),
) -> Result<(Checkpoint, Vec<TraceRecord>)> {
    let root = RngStream::new(config.seed);
    let init = spec.init_params(config.init_noise, root.derive_seed(0));
    let model = SeqModel::new(spec.clone(), init, corpus.vocab.clone())?;
    let obj = SeqObjective::new(&model, &corpus.train)?;
    let tc = TrainConfig {
        epochs: config.epochs,
        seed: root.derive_seed(1),
        method: config.method,
        shots: config.shots,
        adam: AdamConfig { lr: config.lr, ..AdamConfig::default() },
    };
    let out = train(&obj, &model.params, &tc, on_epoch)?;
    let trained = SeqModel { params: out.params, ..model };
    Ok((Checkpoint::new(trained, Some(config.clone())), out.trace))
}

/// Sample `length` tokens after `prompt`, one shot per step. The output
/// register is measured and out-of-vocabulary outcomes are redrawn; the
/// London model samples its renormalized candidate scores directly.
pub fn generate(model: &SeqModel, prompt: &[usize], length: usize, seed: u64) -> Result<Vec<usize>> {
    let n = model.vocab.len();
    if let Some(&bad) = prompt.iter().find(|&&t| t >= n) {
        return Err(Error::InvalidArgument(format!("token id {bad} >= vocabulary size {n}")));
    }
    let mut rng = RngStream::new(seed);
    let mut history = prompt.to_vec();
    let mut cache: HashMap<Vec<usize>, Vec<f64>> = HashMap::new();
    let mut out = Vec::with_capacity(length);
    for _ in 0..length {
        let ctx = model.window(&history);
        let cdf = match cache.get(&ctx) {
            Some(c) => c.clone(),
            None => {
                let d = match model.spec.arch {
                    Arch::Proposed => model.output_distribution(&ctx)?,
                    Arch::London => model.next_token_distribution(&ctx)?,
                };
                let cdf: Vec<f64> = d
                    .iter()
                    .scan(0.0, |acc, p| {
                        *acc += p;
                        Some(*acc)
                    })
                    .collect();
                cache.insert(ctx.clone(), cdf.clone());
                cdf
            }
        };
        let total = *cdf.last().expect("non-empty distribution");
        let mut token = None;
        for _ in 0..MAX_REJECTIONS {
            let u = rng.uniform() * total;
            let i = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            if i < n {
                token = Some(i);
                break;
            }
        }
        let t = token.ok_or_else(|| {
            Error::Degenerate(format!("{MAX_REJECTIONS} consecutive out-of-vocabulary outcomes"))
        })?;
        out.push(t);
        history.push(t);
    }
    Ok(out)
}
