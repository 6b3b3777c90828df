mod config;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qnlp::diffopt::{GradMethod, TraceRecord};
use qnlp::embeddings::{
    cluster_pairs, mean_fidelity, toy_corpus, train_sgns, AnsatzSpec, EmbeddingCheckpoint, EmbeddingModel, Scheme,
    SgnsConfig, ToyCorpus,
};
use qnlp::qpostr::{
    build_encoding_circuit, build_readout_circuit, decode_samples, expected_state, layout_for, reconstruct,
    shots_for_recovery, AlphabetMap,
};
use qnlp::seqgen::{
    builtin_corpus, generate, perplexity, train_seq, Arch, Checkpoint, Corpus, SeqModel, SeqModelSpec,
    SeqTrainConfig, Split,
};
use qnlp::sim::{write_circuit, ParameterVector};

use config::FileConfig;

const DEFAULT_SEED: u64 = 42;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Input(String),
    Run(qnlp::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Input(_) => 3,
            CliError::Run(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Run(e) => write!(f, "run error: {e}"),
        }
    }
}

impl From<qnlp::Error> for CliError {
    fn from(e: qnlp::Error) -> Self {
        CliError::Run(e)
    }
}

fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn input(path: &Path) -> impl Fn(qnlp::Error) -> CliError + '_ {
    move |e| CliError::Input(format!("{}: {e}", path.display()))
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "qnlp", version, about = "Statevector simulation and small quantum NLP models")]
struct Cli {
    /// Root RNG seed (default 42)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML settings file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Suppress per-epoch trace lines
    #[arg(long, global = true)]
    quiet: bool,
    /// Worker threads for parallel evaluation
    #[arg(long, global = true, env = "QNLP_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the position-character encoding circuit for a string
    Encode(EncodeArgs),
    /// Sample the readout circuit and rebuild the string
    Decode(DecodeArgs),
    /// Train word embeddings with skip-gram negative sampling
    TrainEmbed(TrainEmbedArgs),
    /// Print fidelities between embedded words
    EvalEmbed(EvalEmbedArgs),
    /// Train a sequence model
    TrainSeq(TrainSeqArgs),
    /// Perplexity of a sequence model on a corpus split
    EvalSeq(EvalSeqArgs),
    /// Sample tokens from a sequence model
    Generate(GenerateArgs),
}

#[derive(Args, Debug)]
struct EncodeArgs {
    #[arg(long)]
    text: String,
    /// auto, lower, ascii, or a file listing the characters
    #[arg(long)]
    alphabet: Option<String>,
    /// Write the circuit here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    #[arg(long)]
    text: String,
    #[arg(long)]
    alphabet: Option<String>,
    /// Default: enough for 99% recovery probability
    #[arg(long)]
    shots: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainEmbedArgs {
    /// One sentence per line (default: shipped two-cluster corpus)
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    qubits: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    method: Option<GradMethod>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalEmbedArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Lines of `word word` (default: every pair)
    #[arg(long)]
    pairs: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainSeqArgs {
    /// Sentences, with a `---` line before the held-out part (default: builtin)
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    arch: Option<Arch>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    method: Option<GradMethod>,
    /// Estimate gradients from this many shots
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalSeqArgs {
    /// Default: untrained uniform model
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: Split,
    /// Architecture of the uniform model when no checkpoint is given
    #[arg(long)]
    arch: Option<Arch>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, default_value = "")]
    prompt: String,
    #[arg(long, default_value_t = 10)]
    length: usize,
}

/// Effective settings, echoed to stderr before any work.
struct Settings {
    seed: u64,
    quiet: bool,
    file: FileConfig,
}

impl Settings {
    fn show(&self, key: &str, value: impl fmt::Display) {
        eprintln!("# {key} = {value}");
    }

    fn parsed<T: std::str::FromStr<Err = qnlp::Error>>(&self, flag: Option<T>, key: Option<&String>, default: T) -> CliResult<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match key {
            Some(s) => s.parse().map_err(|e| CliError::Input(format!("config: {e}"))),
            None => Ok(default),
        }
    }

    fn trace(&self) -> impl FnMut(&TraceRecord) + '_ {
        move |r| {
            if !self.quiet {
                println!("epoch={} loss={:.6} grad_norm={:.6}", r.epoch, r.loss, r.grad_norm);
            }
        }
    }
}

fn method_name(m: GradMethod) -> &'static str {
    match m {
        GradMethod::Adjoint => "adjoint",
        GradMethod::ParameterShift => "parameter-shift",
        GradMethod::FiniteDifference => "finite-difference",
    }
}

fn read_file(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn check_out(path: &Option<PathBuf>) -> CliResult<()> {
    if let Some(p) = path {
        let dir = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        if !dir.is_dir() {
            return Err(CliError::Input(format!("{}: output directory does not exist", p.display())));
        }
    }
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    eprintln!("# wrote {}", path.display());
    Ok(())
}

fn alphabet(spec: &str, text: &str) -> CliResult<AlphabetMap> {
    match spec {
        "auto" | "lower" | "ascii" => AlphabetMap::resolve(spec, text).map_err(usage),
        path => {
            let p = Path::new(path);
            AlphabetMap::parse_file(&read_file(p)?).map_err(input(p))
        }
    }
}

fn run_encode(s: &Settings, a: EncodeArgs) -> CliResult<()> {
    let spec = a.alphabet.or_else(|| s.file.alphabet.clone()).unwrap_or_else(|| "auto".into());
    s.show("alphabet", &spec);
    check_out(&a.out)?;
    let alpha = alphabet(&spec, &a.text)?;
    let layout = layout_for(&a.text, &alpha).map_err(usage)?;
    let circuit = build_encoding_circuit(&a.text, &alpha).map_err(usage)?;
    let state = expected_state(&a.text, &alpha)?;
    println!(
        "layout text_length={} positions={} pos_bits={} char_bits={} qubits={} gates={}",
        layout.text_length,
        layout.positions(),
        layout.pos_bits,
        layout.char_bits,
        layout.num_qubits(),
        circuit.ops().len()
    );
    let text = write_circuit(&circuit);
    match &a.out {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    let pos_mask = (1usize << layout.pos_bits) - 1;
    for (i, amp) in state.amplitudes().iter().enumerate() {
        if amp.norm() < 1e-12 {
            continue;
        }
        let ch = alpha.char_at(i >> layout.pos_bits).unwrap_or('?');
        println!(
            "amplitude index={i} position={} char={ch:?} re={:.12} im={:.12}",
            i & pos_mask,
            amp.re,
            amp.im
        );
    }
    Ok(())
}

fn run_decode(s: &Settings, a: DecodeArgs) -> CliResult<()> {
    let spec = a.alphabet.or_else(|| s.file.alphabet.clone()).unwrap_or_else(|| "auto".into());
    let alpha = alphabet(&spec, &a.text)?;
    let (circuit, layout) = build_readout_circuit(&a.text, &alpha).map_err(usage)?;
    let shots = match a.shots.or(s.file.shots) {
        Some(n) => n,
        None => shots_for_recovery(layout.base.positions() as u64, 0.99)? as usize,
    };
    s.show("alphabet", &spec);
    s.show("shots", shots);
    let state = circuit.run_from_zero(&ParameterVector::default())?;
    let samples = state.sample(shots, s.seed);
    let hist = decode_samples(&samples, &layout, &alpha)?;
    for (p, counts) in &hist {
        for (ch, n) in counts {
            println!("position={p} char={ch:?} count={n}");
        }
    }
    match reconstruct(&hist, &layout) {
        Some(t) => println!("reconstructed complete=true text={t:?}"),
        None => println!("reconstructed complete=false observed={}/{}", hist.len(), layout.base.positions()),
    }
    Ok(())
}

fn run_train_embed(s: &Settings, a: TrainEmbedArgs) -> CliResult<()> {
    let f = &s.file;
    let scheme = s.parsed(a.scheme, f.scheme.as_ref(), Scheme::Circuit)?;
    let method = s.parsed(a.method, f.method.as_ref(), GradMethod::Adjoint)?;
    let d = SgnsConfig::default();
    let config = SgnsConfig {
        window: a.window.or(f.window).unwrap_or(d.window),
        negatives: a.negatives.or(f.negatives).unwrap_or(d.negatives),
        epochs: a.epochs.or(f.epochs).unwrap_or(d.epochs),
        lr: a.lr.or(f.lr).unwrap_or(d.lr),
        seed: s.seed,
        method,
    };
    let da = AnsatzSpec::default();
    let ansatz = AnsatzSpec {
        qubits: a.qubits.or(f.qubits).unwrap_or(da.qubits),
        layers: a.layers.or(f.layers).unwrap_or(da.layers),
    };
    s.show("scheme", format!("{scheme:?}").to_lowercase());
    s.show("method", method_name(method));
    s.show("epochs", config.epochs);
    s.show("lr", config.lr);
    s.show("window", config.window);
    s.show("negatives", config.negatives);
    s.show("qubits", ansatz.qubits);
    s.show("layers", ansatz.layers);
    check_out(&a.out)?;
    let toy = match &a.corpus {
        Some(p) => ToyCorpus::parse(&read_file(p)?).map_err(input(p))?,
        None => toy_corpus(),
    };
    let model = EmbeddingModel::init(toy.vocab.clone(), ansatz, scheme, s.seed).map_err(usage)?;
    let (trained, _) = train_sgns(&toy.sentences, &model, &config, s.trace())?;
    let (pos, neg) = cluster_pairs(&toy, config.window);
    if !pos.is_empty() {
        println!("fidelity pairs=positive count={} mean={:.6}", pos.len(), mean_fidelity(&trained, &pos)?);
    }
    if !neg.is_empty() {
        println!("fidelity pairs=negative count={} mean={:.6}", neg.len(), mean_fidelity(&trained, &neg)?);
    }
    if let Some(p) = &a.out {
        write_file(p, &EmbeddingCheckpoint::from_model(&trained).to_json())?;
    }
    Ok(())
}

fn run_eval_embed(_s: &Settings, a: EvalEmbedArgs) -> CliResult<()> {
    let model = EmbeddingCheckpoint::from_json(&read_file(&a.ckpt)?)
        .and_then(EmbeddingCheckpoint::into_model)
        .map_err(input(&a.ckpt))?;
    let vocab = &model.vocab;
    let pairs: Vec<(usize, usize)> = match &a.pairs {
        Some(p) => {
            let text = read_file(p)?;
            let mut out = Vec::new();
            for (n, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let bad = |m: String| CliError::Input(format!("{}:{}: {m}", p.display(), n + 1));
                let words: Vec<&str> = line.split_whitespace().collect();
                if words.len() != 2 {
                    return Err(bad(format!("expected two words, got {}", words.len())));
                }
                let id = |w: &str| vocab.id(&w.to_lowercase()).ok_or_else(|| bad(format!("unknown word {w:?}")));
                out.push((id(words[0])?, id(words[1])?));
            }
            out
        }
        None => (0..vocab.len()).flat_map(|i| (i + 1..vocab.len()).map(move |j| (i, j))).collect(),
    };
    let states = (0..vocab.len()).map(|k| model.word_state(k)).collect::<qnlp::Result<Vec<_>>>()?;
    for (i, j) in pairs {
        let fid = qnlp::embeddings::fidelity_exact(&states[i], &states[j])?;
        println!(
            "fidelity a={} b={} value={fid:.6}",
            vocab.token(i).unwrap_or("?"),
            vocab.token(j).unwrap_or("?")
        );
    }
    Ok(())
}

fn load_corpus(path: &Option<PathBuf>, vocab: Option<&qnlp::vocab::Vocabulary>) -> CliResult<Corpus> {
    match path {
        Some(p) => Corpus::parse_with(&read_file(p)?, vocab).map_err(input(p)),
        None => {
            let text = include_str!("../../core/data/sentences.txt");
            match vocab {
                Some(v) => Corpus::parse_with(text, Some(v)).map_err(|e| CliError::Input(format!("builtin corpus: {e}"))),
                None => Ok(builtin_corpus()),
            }
        }
    }
}

fn run_train_seq(s: &Settings, a: TrainSeqArgs) -> CliResult<()> {
    let f = &s.file;
    let arch = s.parsed(a.arch, f.arch.as_ref(), Arch::Proposed)?;
    let method = s.parsed(a.method, f.method.as_ref(), GradMethod::Adjoint)?;
    let d = SeqTrainConfig::default();
    let config = SeqTrainConfig {
        epochs: a.epochs.or(f.epochs).unwrap_or(d.epochs),
        lr: a.lr.or(f.lr).unwrap_or(d.lr),
        seed: s.seed,
        init_noise: d.init_noise,
        method,
        shots: a.shots.or(f.shots),
    };
    s.show("arch", format!("{arch:?}").to_lowercase());
    s.show("method", method_name(method));
    s.show("epochs", config.epochs);
    s.show("lr", config.lr);
    s.show("shots", config.shots.map_or("exact".to_string(), |n| n.to_string()));
    check_out(&a.out)?;
    let corpus = load_corpus(&a.corpus, None)?;
    let spec = SeqModelSpec::default_for(arch);
    spec.check_vocab(&corpus.vocab).map_err(|e| CliError::Input(format!("corpus: {e}")))?;
    let (ckpt, _) = train_seq(&corpus, &spec, &config, s.trace())?;
    let model = ckpt.model()?;
    println!("parameters count={}", model.params.len());
    println!("perplexity split=train value={:.6}", perplexity(&model, &corpus.train)?);
    if !corpus.test.is_empty() {
        println!("perplexity split=test value={:.6}", perplexity(&model, &corpus.test)?);
    }
    if let Some(p) = &a.out {
        write_file(p, &ckpt.to_json())?;
    }
    Ok(())
}

fn load_seq(path: &Path) -> CliResult<SeqModel> {
    Checkpoint::from_json(&read_file(path)?).and_then(|c| c.model()).map_err(input(path))
}

fn run_eval_seq(s: &Settings, a: EvalSeqArgs) -> CliResult<()> {
    let (model, corpus) = match &a.ckpt {
        Some(p) => {
            let model = load_seq(p)?;
            let corpus = load_corpus(&a.corpus, Some(&model.vocab))?;
            (model, corpus)
        }
        None => {
            let arch = s.parsed(a.arch, s.file.arch.as_ref(), Arch::Proposed)?;
            s.show("arch", format!("{arch:?}").to_lowercase());
            s.show("model", "uniform");
            let corpus = load_corpus(&a.corpus, None)?;
            let spec = SeqModelSpec::default_for(arch);
            spec.check_vocab(&corpus.vocab).map_err(|e| CliError::Input(format!("corpus: {e}")))?;
            (SeqModel::uniform(spec, corpus.vocab.clone())?, corpus)
        }
    };
    let split = format!("{:?}", a.split).to_lowercase();
    s.show("split", &split);
    let sentences = corpus.split(a.split);
    if sentences.is_empty() {
        return Err(CliError::Input(format!("corpus has no {split} sentences")));
    }
    println!("perplexity split={split} value={:.6}", perplexity(&model, sentences)?);
    Ok(())
}

fn run_generate(s: &Settings, a: GenerateArgs) -> CliResult<()> {
    let model = load_seq(&a.ckpt)?;
    s.show("length", a.length);
    let prompt = a
        .prompt
        .split_whitespace()
        .map(|t| {
            let t = t.to_lowercase();
            model.vocab.id(&t).ok_or_else(|| usage(format!("prompt token {t:?} not in vocabulary")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let out = generate(&model, &prompt, a.length, s.seed)?;
    let words: Vec<&str> = out.iter().map(|&t| model.vocab.token(t).unwrap_or("?")).collect();
    println!("generated prompt={:?} text={:?}", a.prompt.trim(), words.join(" "));
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig { version: config::CONFIG_VERSION, ..FileConfig::default() },
    };
    let seed = cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(usage)?;
    }
    let settings = Settings { seed, quiet: cli.quiet, file };
    settings.show("seed", seed);
    if let Some(p) = &cli.config {
        settings.show("config", p.display());
    }
    match cli.command {
        Command::Encode(a) => run_encode(&settings, a),
        Command::Decode(a) => run_decode(&settings, a),
        Command::TrainEmbed(a) => run_train_embed(&settings, a),
        Command::EvalEmbed(a) => run_eval_embed(&settings, a),
        Command::TrainSeq(a) => run_train_seq(&settings, a),
        Command::EvalSeq(a) => run_eval_seq(&settings, a),
        Command::Generate(a) => run_generate(&settings, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn error_codes() {
        assert_eq!(usage("x").code(), 2);
        assert_eq!(CliError::Input("x".into()).code(), 3);
        assert_eq!(CliError::Run(qnlp::Error::Degenerate("x".into())).code(), 4);
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from(["qnlp", "train-seq", "--arch", "london", "--seed", "3"]).unwrap();
        assert_eq!(cli.seed, Some(3));
        assert!(matches!(cli.command, Command::TrainSeq(TrainSeqArgs { arch: Some(Arch::London), .. })));
        assert!(Cli::try_parse_from(["qnlp", "train-seq", "--arch", "bogus"]).is_err());
    }
}
