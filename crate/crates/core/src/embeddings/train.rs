use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fidelity_exact, renormalize, AnsatzSpec, EmbeddingModel, Scheme};
use crate::diffopt::{
    distribution_loss_grad, train, AdamConfig, EvalOptions, GradMethod, LossFn, TraceRecord, TrainConfig,
};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::sim::{Circuit, ParameterVector, StateVector};
use crate::vocab::{tokenize_lines, Vocabulary};

const EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgnsConfig {
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub method: GradMethod,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        Self { window: 2, negatives: 2, epochs: 60, lr: 0.05, seed: 42, method: GradMethod::Adjoint }
    }
}

impl SgnsConfig {
    fn validate(&self) -> Result<()> {
        if self.window == 0 || self.negatives == 0 {
            return Err(Error::InvalidArgument("window and negatives must be at least 1".into()));
        }
        Ok(())
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            seed: self.seed,
            method: self.method,
            shots: None,
            adam: AdamConfig { lr: self.lr, ..AdamConfig::default() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SgnsRecord {
    pub target: usize,
    pub context: usize,
    pub negatives: Vec<usize>,
}

fn window_pairs(corpus: &[Vec<usize>], window: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for s in corpus {
        for i in 0..s.len() {
            let lo = i.saturating_sub(window);
            let hi = (i + window).min(s.len() - 1);
            for j in lo..=hi {
                if j != i {
                    out.push((s[i], s[j]));
                }
            }
        }
    }
    out
}

/// One record per in-window `(target, context)` pair, each with
/// `config.negatives` draws from the vocabulary minus target and context.
pub fn generate_training_pairs(
    corpus: &[Vec<usize>],
    vocab_size: usize,
    config: &SgnsConfig,
) -> Result<Vec<SgnsRecord>> {
    config.validate()?;
    if corpus.iter().all(Vec::is_empty) {
        return Err(Error::InvalidArgument("empty corpus".into()));
    }
    if let Some(&bad) = corpus.iter().flatten().find(|&&t| t >= vocab_size) {
        return Err(Error::InvalidArgument(format!("token id {bad} >= vocabulary size {vocab_size}")));
    }
    let mut rng = RngStream::new(config.seed);
    window_pairs(corpus, config.window)
        .into_iter()
        .map(|(target, context)| {
            let allowed: Vec<usize> = (0..vocab_size).filter(|&v| v != target && v != context).collect();
            if allowed.is_empty() {
                return Err(Error::InvalidArgument("no candidates left for negative sampling".into()));
            }
            let negatives = (0..config.negatives).map(|_| allowed[rng.below(allowed.len())]).collect();
            Ok(SgnsRecord { target, context, negatives })
        })
        .collect()
}

fn check_records(records: &[SgnsRecord], n: usize) -> Result<()> {
    for r in records {
        let ids = std::iter::once(&r.target).chain(std::iter::once(&r.context)).chain(&r.negatives);
        if let Some(bad) = ids.clone().find(|&&i| i >= n) {
            return Err(Error::InvalidArgument(format!("word index {bad} >= vocabulary size {n}")));
        }
        if r.negatives.contains(&r.target) {
            return Err(Error::InvalidArgument(format!("target {} listed as its own negative", r.target)));
        }
    }
    Ok(())
}

/// Mean SGNS loss over `records`, as a function of the model's parameters.
struct SgnsObjective<'a> {
    model: &'a EmbeddingModel,
    records: &'a [SgnsRecord],
    /// `U(θ_t)` followed by `U(θ_v)†`; `P(0)` is the fidelity.
    overlap: Circuit,
}

impl<'a> SgnsObjective<'a> {
    fn new(model: &'a EmbeddingModel, records: &'a [SgnsRecord]) -> Result<Self> {
        model.check()?;
        check_records(records, model.vocab.len())?;
        if records.is_empty() {
            return Err(Error::InvalidArgument("no training records".into()));
        }
        let a = model.ansatz.circuit()?;
        let ids: Vec<usize> = (0..a.width()).collect();
        let mut overlap = Circuit::new(a.width())?;
        overlap.append_mapped(&a, &ids, |n| format!("t.{n}"))?;
        overlap.append_mapped(&a.inverse()?, &ids, |n| format!("v.{n}"))?;
        Ok(Self { model, records, overlap })
    }

    fn with_params(&self, params: &[f64]) -> EmbeddingModel {
        EmbeddingModel { params: params.to_vec(), ..self.model.clone() }
    }

    fn record_terms(r: &SgnsRecord) -> impl Iterator<Item = (usize, bool)> + '_ {
        std::iter::once((r.context, true)).chain(r.negatives.iter().map(|&v| (v, false)))
    }
}

fn term_loss(f: f64, positive: bool) -> (f64, f64) {
    if positive {
        (-(f + EPS).ln(), -1.0 / (f + EPS))
    } else {
        (-(1.0 - f + EPS).ln(), 1.0 / (1.0 - f + EPS))
    }
}

impl LossFn for SgnsObjective<'_> {
    fn num_params(&self) -> usize {
        self.model.params.len()
    }

    fn loss(&self, params: &[f64], _: &EvalOptions) -> Result<f64> {
        let model = self.with_params(params);
        let states = (0..model.vocab.len()).map(|k| model.word_state(k)).collect::<Result<Vec<_>>>()?;
        let mut total = 0.0;
        for r in self.records {
            for (v, positive) in Self::record_terms(r) {
                total += term_loss(fidelity_exact(&states[r.target], &states[v])?, positive).0;
            }
        }
        Ok(total / self.records.len() as f64)
    }

    fn loss_and_grad(&self, params: &[f64], opts: &EvalOptions) -> Result<(f64, Vec<f64>)> {
        if self.model.scheme == Scheme::Memory || opts.method == GradMethod::FiniteDifference {
            // the shared unitary couples every word; fall back to finite differences
            let value = self.loss(params, opts)?;
            let f = |p: &[f64]| self.loss(p, opts);
            let g = crate::diffopt::finite_diff_grad(&f, &ParameterVector(params.to_vec()), 1e-5)?;
            return Ok((value, g));
        }
        let np = self.model.ansatz.num_params();
        let zero = StateVector::zero(self.overlap.width())?;
        let root = RngStream::new(opts.seed);
        let fid = |p: &[f64]| Ok((p[0], {
            let mut w = vec![0.0; p.len()];
            w[0] = 1.0;
            w
        }));
        let per_record = self
            .records
            .par_iter()
            .enumerate()
            .map(|(ri, r)| {
                let mut loss = 0.0;
                let mut parts = Vec::new();
                for (ti, (v, positive)) in Self::record_terms(r).enumerate() {
                    let mut p = params[r.target * np..(r.target + 1) * np].to_vec();
                    p.extend_from_slice(&params[v * np..(v + 1) * np]);
                    let seed = root.derive_seed((ri * 64 + ti) as u64);
                    let (f, g) =
                        distribution_loss_grad(&self.overlap, &ParameterVector(p), &zero, &fid, opts.method, opts.shots, seed)?;
                    let (l, dl) = term_loss(f, positive);
                    loss += l;
                    parts.push((r.target, g[..np].iter().map(|x| x * dl).collect::<Vec<_>>()));
                    parts.push((v, g[np..].iter().map(|x| x * dl).collect::<Vec<_>>()));
                }
                Ok((loss, parts))
            })
            .collect::<Result<Vec<_>>>()?;
        let scale = 1.0 / self.records.len() as f64;
        let mut grad = vec![0.0; params.len()];
        let mut total = 0.0;
        for (loss, parts) in per_record {
            total += loss;
            for (w, g) in parts {
                for (dst, x) in grad[w * np..(w + 1) * np].iter_mut().zip(g) {
                    *dst += x * scale;
                }
            }
        }
        Ok((total * scale, grad))
    }
}

/// SGNS loss of one record and its gradient over all model parameters.
pub fn sgns_loss(
    model: &EmbeddingModel,
    target: usize,
    context: usize,
    negatives: &[usize],
    method: GradMethod,
) -> Result<(f64, Vec<f64>)> {
    let records = [SgnsRecord { target, context, negatives: negatives.to_vec() }];
    let obj = SgnsObjective::new(model, &records)?;
    obj.loss_and_grad(&model.params, &EvalOptions { method, shots: None, seed: 0 })
}

/// Full-batch Adam on the SGNS loss of a fixed set of generated pairs.
pub fn train_sgns(
    corpus: &[Vec<usize>],
    model: &EmbeddingModel,
    config: &SgnsConfig,
    on_epoch: impl FnMut(&TraceRecord),
) -> Result<(EmbeddingModel, Vec<TraceRecord>)> {
    let records = generate_training_pairs(corpus, model.vocab.len(), config)?;
    let obj = SgnsObjective::new(model, &records)?;
    let out = train(&obj, &ParameterVector(model.params.clone()), &config.train_config(), on_epoch)?;
    Ok((obj.with_params(&out.params.0), out.trace))
}

/// Next-word prediction through a head `V(φ)`: the input state is prepared
/// from the mean of the input words' parameter vectors.
struct HeadObjective<'a> {
    model: &'a EmbeddingModel,
    head: AnsatzSpec,
    records: Vec<(Vec<usize>, usize)>,
    circuit: Circuit,
}

impl<'a> HeadObjective<'a> {
    fn new(model: &'a EmbeddingModel, head: AnsatzSpec, records: Vec<(Vec<usize>, usize)>) -> Result<Self> {
        model.check()?;
        if model.scheme != Scheme::Circuit {
            return Err(Error::Unsupported("prediction heads need the circuit scheme".into()));
        }
        if head.qubits < model.ansatz.qubits || (1usize << head.qubits) < model.vocab.len() {
            return Err(Error::InvalidArgument("head register too small".into()));
        }
        if records.is_empty() {
            return Err(Error::InvalidArgument("no training records".into()));
        }
        let word = model.ansatz.circuit()?;
        let mut circuit = Circuit::new(head.qubits)?;
        let ids: Vec<usize> = (0..word.width()).collect();
        circuit.append_mapped(&word, &ids, |n| format!("w.{n}"))?;
        let ids: Vec<usize> = (0..head.qubits).collect();
        circuit.append_mapped(&head.circuit()?, &ids, |n| format!("v.{n}"))?;
        Ok(Self { model, head, records, circuit })
    }

    fn split(&self) -> usize {
        self.model.params.len()
    }

    fn record_inputs(&self, params: &[f64], inputs: &[usize]) -> Vec<f64> {
        let np = self.model.ansatz.num_params();
        let mut p = vec![0.0; np];
        for &w in inputs {
            for (dst, x) in p.iter_mut().zip(&params[w * np..(w + 1) * np]) {
                *dst += x / inputs.len() as f64;
            }
        }
        p.extend_from_slice(&params[self.split()..]);
        p
    }
}

fn nll_of(out: usize, n: usize) -> impl Fn(&[f64]) -> Result<(f64, Vec<f64>)> + Sync {
    move |p: &[f64]| {
        let z: f64 = p[..n].iter().sum();
        if z < 1e-9 {
            return Err(Error::Degenerate(format!("vocabulary mass {z:e} too small to renormalize")));
        }
        let mut w = vec![0.0; p.len()];
        w[..n].iter_mut().for_each(|x| *x = 1.0 / z);
        w[out] -= 1.0 / (p[out] + EPS);
        Ok((z.ln() - (p[out] + EPS).ln(), w))
    }
}

impl LossFn for HeadObjective<'_> {
    fn num_params(&self) -> usize {
        self.model.params.len() + self.head.num_params()
    }

    fn loss(&self, params: &[f64], _: &EvalOptions) -> Result<f64> {
        self.records
            .iter()
            .map(|(inputs, out)| {
                let p = ParameterVector(self.record_inputs(params, inputs));
                let probs = self.circuit.run_from_zero(&p)?.probabilities();
                Ok(nll_of(*out, self.model.vocab.len())(&probs)?.0)
            })
            .sum::<Result<f64>>()
            .map(|s| s / self.records.len() as f64)
    }

    fn loss_and_grad(&self, params: &[f64], opts: &EvalOptions) -> Result<(f64, Vec<f64>)> {
        let np = self.model.ansatz.num_params();
        let zero = StateVector::zero(self.head.qubits)?;
        let root = RngStream::new(opts.seed);
        let per_record = self
            .records
            .par_iter()
            .enumerate()
            .map(|(ri, (inputs, out))| {
                let p = ParameterVector(self.record_inputs(params, inputs));
                let loss = nll_of(*out, self.model.vocab.len());
                distribution_loss_grad(&self.circuit, &p, &zero, &loss, opts.method, opts.shots, root.derive_seed(ri as u64))
            })
            .collect::<Result<Vec<_>>>()?;
        let scale = 1.0 / self.records.len() as f64;
        let mut grad = vec![0.0; params.len()];
        let mut total = 0.0;
        for ((inputs, _), (loss, g)) in self.records.iter().zip(per_record) {
            total += loss;
            for &w in inputs {
                for (dst, x) in grad[w * np..(w + 1) * np].iter_mut().zip(&g[..np]) {
                    *dst += x * scale / inputs.len() as f64;
                }
            }
            for (dst, x) in grad[self.split()..].iter_mut().zip(&g[np..]) {
                *dst += x * scale;
            }
        }
        Ok((total * scale, grad))
    }
}

fn train_head(
    model: &EmbeddingModel,
    head: AnsatzSpec,
    head_params: &ParameterVector,
    records: Vec<(Vec<usize>, usize)>,
    config: &SgnsConfig,
    on_epoch: impl FnMut(&TraceRecord),
) -> Result<(EmbeddingModel, ParameterVector, Vec<TraceRecord>)> {
    if head_params.len() != head.num_params() {
        return Err(Error::Parameter(format!("head expects {} parameters, got {}", head.num_params(), head_params.len())));
    }
    let obj = HeadObjective::new(model, head, records)?;
    let mut init = model.params.clone();
    init.extend_from_slice(&head_params.0);
    let out = train(&obj, &ParameterVector(init), &config.train_config(), on_epoch)?;
    let (words, phi) = out.params.0.split_at(obj.split());
    let trained = EmbeddingModel { params: words.to_vec(), ..model.clone() };
    Ok((trained, ParameterVector(phi.to_vec()), out.trace))
}

/// Skip-gram: predict each in-window context word from the target word.
pub fn train_skipgram(
    corpus: &[Vec<usize>],
    model: &EmbeddingModel,
    head: AnsatzSpec,
    head_params: &ParameterVector,
    config: &SgnsConfig,
    on_epoch: impl FnMut(&TraceRecord),
) -> Result<(EmbeddingModel, ParameterVector, Vec<TraceRecord>)> {
    config.validate()?;
    let records = window_pairs(corpus, config.window).into_iter().map(|(t, c)| (vec![t], c)).collect();
    train_head(model, head, head_params, records, config, on_epoch)
}

/// CBOW: predict each word from the averaged parameters of its window.
pub fn train_cbow(
    corpus: &[Vec<usize>],
    model: &EmbeddingModel,
    head: AnsatzSpec,
    head_params: &ParameterVector,
    config: &SgnsConfig,
    on_epoch: impl FnMut(&TraceRecord),
) -> Result<(EmbeddingModel, ParameterVector, Vec<TraceRecord>)> {
    config.validate()?;
    let mut records = Vec::new();
    for s in corpus {
        for i in 0..s.len() {
            let lo = i.saturating_sub(config.window);
            let hi = (i + config.window).min(s.len() - 1);
            let ctx: Vec<usize> = (lo..=hi).filter(|&j| j != i).map(|j| s[j]).collect();
            if !ctx.is_empty() {
                records.push((ctx, s[i]));
            }
        }
    }
    train_head(model, head, head_params, records, config, on_epoch)
}

/// Renormalized head prediction from the averaged parameters of `inputs`.
pub fn predict(
    model: &EmbeddingModel,
    head: &AnsatzSpec,
    head_params: &ParameterVector,
    inputs: &[usize],
) -> Result<Vec<f64>> {
    let obj = HeadObjective::new(model, *head, vec![(inputs.to_vec(), 0)])?;
    let mut all = model.params.clone();
    all.extend_from_slice(&head_params.0);
    let p = ParameterVector(obj.record_inputs(&all, inputs));
    renormalize(&obj.circuit.run_from_zero(&p)?.probabilities(), model.vocab.len())
}

/// A corpus whose words fall into groups that never share a sentence.
#[derive(Clone, Debug)]
pub struct ToyCorpus {
    pub vocab: Vocabulary,
    pub sentences: Vec<Vec<usize>>,
    /// Group label per word id.
    pub clusters: Vec<usize>,
}

impl ToyCorpus {
    pub fn parse(text: &str) -> Result<Self> {
        let raw = tokenize_lines(text);
        let vocab = Vocabulary::from_sentences(&[], &raw)?;
        let sentences = raw.iter().map(|s| vocab.encode(s)).collect::<Result<Vec<_>>>()?;
        // connected components of the co-occurrence graph
        let mut label: Vec<usize> = (0..vocab.len()).collect();
        fn find(l: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while l[r] != r {
                r = l[r];
            }
            l[x] = r;
            r
        }
        for s in &sentences {
            for w in s.windows(2) {
                let (a, b) = (find(&mut label, w[0]), find(&mut label, w[1]));
                label[a.max(b)] = a.min(b);
            }
        }
        let roots: Vec<usize> = (0..vocab.len()).map(|w| find(&mut label, w)).collect();
        let mut distinct = roots.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let clusters = roots.iter().map(|r| distinct.binary_search(r).expect("present")).collect();
        Ok(Self { vocab, sentences, clusters })
    }
}

/// The shipped two-cluster corpus.
pub fn toy_corpus() -> ToyCorpus {
    ToyCorpus::parse(include_str!("../../data/clusters.txt")).expect("shipped corpus parses")
}

/// Distinct in-window word pairs, and all pairs drawn from different clusters.
pub fn cluster_pairs(toy: &ToyCorpus, window: usize) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let mut pos: Vec<(usize, usize)> = window_pairs(&toy.sentences, window)
        .into_iter()
        .filter(|(a, b)| a != b)
        .map(|(a, b)| (a.min(b), a.max(b)))
        .collect();
    pos.sort_unstable();
    pos.dedup();
    let n = toy.vocab.len();
    let neg = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .filter(|&(a, b)| toy.clusters[a] != toy.clusters[b])
        .collect();
    (pos, neg)
}

pub fn mean_fidelity(model: &EmbeddingModel, pairs: &[(usize, usize)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no pairs".into()));
    }
    let states = (0..model.vocab.len()).map(|k| model.word_state(k)).collect::<Result<Vec<_>>>()?;
    let mut sum = 0.0;
    for &(a, b) in pairs {
        sum += fidelity_exact(&states[a], &states[b])?;
    }
    Ok(sum / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::head_ansatz;

    fn model(n: usize, seed: u64) -> EmbeddingModel {
        let v = Vocabulary::new((0..n).map(|i| format!("w{i}")).collect()).unwrap();
        EmbeddingModel::init(v, AnsatzSpec::default(), Scheme::Circuit, seed).unwrap()
    }

    #[test]
    fn pairs_and_negatives() {
        let cfg = SgnsConfig { window: 1, negatives: 3, ..Default::default() };
        let recs = generate_training_pairs(&[vec![0, 1, 2]], 5, &cfg).unwrap();
        let pairs: Vec<_> = recs.iter().map(|r| (r.target, r.context)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 0), (1, 2), (2, 1)]);
        for r in &recs {
            assert!(!r.negatives.contains(&r.target) && !r.negatives.contains(&r.context));
        }
        assert_eq!(recs, generate_training_pairs(&[vec![0, 1, 2]], 5, &cfg).unwrap());
        assert!(generate_training_pairs(&[vec![]], 5, &cfg).is_err());
    }

    #[test]
    fn sgns_gradient_matches_finite_differences() {
        let mut m = model(4, 5);
        let mut rng = RngStream::new(8);
        m.params.iter_mut().for_each(|x| *x = rng.uniform_range(-2.0, 2.0));
        let (l, g) = sgns_loss(&m, 0, 1, &[2, 3], GradMethod::Adjoint).unwrap();
        let (l2, fd) = sgns_loss(&m, 0, 1, &[2, 3], GradMethod::FiniteDifference).unwrap();
        assert!((l - l2).abs() < 1e-12);
        let err: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = fd.iter().map(|b| b * b).sum::<f64>().sqrt();
        assert!(err / norm < 1e-6, "{}", err / norm);
        let (_, ps) = sgns_loss(&m, 0, 1, &[2, 3], GradMethod::ParameterShift).unwrap();
        assert!(g.iter().zip(&ps).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn zero_epochs_keep_params() {
        let m = model(4, 1);
        let cfg = SgnsConfig { epochs: 0, window: 1, negatives: 1, ..Default::default() };
        let (out, trace) = train_sgns(&[vec![0, 1, 2, 3]], &m, &cfg, |_| {}).unwrap();
        assert_eq!(out, m);
        assert!(trace.is_empty());
    }

    #[test]
    fn skipgram_and_cbow_reduce_nll() {
        let m = model(4, 2);
        let head = head_ansatz(&m, 2);
        let phi = ParameterVector((0..head.num_params()).map(|i| 0.1 * (i % 3) as f64).collect());
        let cfg = SgnsConfig { epochs: 40, window: 1, ..Default::default() };
        let corpus = [vec![0, 1, 2, 3]];
        let (_, _, t) = train_skipgram(&corpus, &m, head, &phi, &cfg, |_| {}).unwrap();
        assert!(t.last().unwrap().loss < t[0].loss);
        let (m2, phi2, t) = train_cbow(&corpus, &m, head, &phi, &cfg, |_| {}).unwrap();
        assert!(t.last().unwrap().loss < t[0].loss);
        let d = predict(&m2, &head, &phi2, &[1, 3]).unwrap();
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cbow_single_context_is_skipgram_reversed() {
        let m = model(4, 3);
        let head = head_ansatz(&m, 1);
        let phi = ParameterVector((0..head.num_params()).map(|i| 0.2 * i as f64).collect());
        let cfg = SgnsConfig { epochs: 3, window: 1, ..Default::default() };
        // a two-word sentence gives each word exactly one context
        let (a, pa, ta) = train_cbow(&[vec![1, 2]], &m, head, &phi, &cfg, |_| {}).unwrap();
        let (b, pb, tb) = train_skipgram(&[vec![2, 1]], &m, head, &phi, &cfg, |_| {}).unwrap();
        assert_eq!(ta, tb);
        assert_eq!((a, pa), (b, pb));
    }

    #[test]
    fn toy_corpus_has_two_clusters() {
        let t = toy_corpus();
        assert_eq!(t.clusters.iter().max(), Some(&1));
        let (pos, neg) = cluster_pairs(&t, 2);
        assert!(!pos.is_empty() && !neg.is_empty());
        assert!(pos.iter().all(|&(a, b)| t.clusters[a] == t.clusters[b]));
    }
}
