use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};

fn qnlp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qnlp"))
        .args(args)
        .env_remove("QNLP_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn field<'a>(line: &'a str, key: &str) -> &'a str {
    let tag = format!("{key}=");
    let start = line.find(&tag).unwrap_or_else(|| panic!("{key} missing in {line}")) + tag.len();
    let rest = &line[start..];
    // quoted char values such as ' ' contain a space
    if let Some(q) = rest.strip_prefix('\'') {
        return &rest[..q.find('\'').unwrap() + 2];
    }
    rest.split_whitespace().next().unwrap()
}

#[test]
fn encode_cab_matches_hand_built_table() {
    let o = qnlp(&["encode", "--text", "cab"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(stderr(&o).contains("# seed = 42"));
    assert!(out.contains("QCIRCUIT v1"));

    // auto alphabet: space is 0, then the sorted distinct characters
    let text = "cab";
    let chars: BTreeSet<char> = text.chars().collect();
    let code = |c: char| if c == ' ' { 0 } else { 1 + chars.iter().position(|&x| x == c).unwrap() };
    let positions = 4;
    let padded: Vec<char> = text.chars().chain(std::iter::repeat(' ')).take(positions).collect();
    let mut want: Vec<(usize, usize, char)> =
        padded.iter().enumerate().map(|(p, &c)| (p | code(c) << 2, p, c)).collect();
    want.sort();

    let rows: Vec<&str> = out.lines().filter(|l| l.starts_with("amplitude")).collect();
    assert_eq!(rows.len(), want.len());
    for (row, (idx, p, c)) in rows.iter().zip(&want) {
        assert_eq!(field(row, "index").parse::<usize>().unwrap(), *idx);
        assert_eq!(field(row, "position").parse::<usize>().unwrap(), *p);
        assert_eq!(field(row, "char"), format!("{c:?}"));
        let re: f64 = field(row, "re").parse().unwrap();
        let im: f64 = field(row, "im").parse().unwrap();
        assert!((re - 0.5).abs() < 1e-12 && im.abs() < 1e-12);
    }
}

#[test]
fn encode_writes_parseable_circuit() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.txt");
    let o = qnlp(&["encode", "--text", "hello", "--alphabet", "lower", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let c = qnlp::sim::parse_circuit(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let expect = qnlp::qpostr::expected_state("hello", &qnlp::qpostr::AlphabetMap::lowercase()).unwrap();
    let got = c.run_from_zero(&Default::default()).unwrap();
    assert!(qnlp::embeddings::fidelity_exact(&got, &expect).unwrap() > 1.0 - 1e-12);
}

#[test]
fn decode_recovers_text() {
    let o = qnlp(&["decode", "--text", "quantum", "--shots", "400", "--seed", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("reconstructed complete=true text=\"quantum \""), "{out}");
    let total: u64 = out.lines().filter(|l| l.starts_with("position=")).map(|l| field(l, "count").parse::<u64>().unwrap()).sum();
    assert_eq!(total, 400);
}

#[test]
fn uniform_eval_prints_eleven() {
    for arch in ["proposed", "london"] {
        let o = qnlp(&["eval-seq", "--arch", arch]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert_eq!(stdout(&o), "perplexity split=test value=11.000000\n");
    }
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(qnlp(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(qnlp(&["encode", "--text", "a", "--bogus"]).status.code(), Some(2));
    assert_eq!(qnlp(&["train-seq", "--arch", "nope"]).status.code(), Some(2));
    // characters outside the chosen alphabet
    assert_eq!(qnlp(&["encode", "--text", "ABC", "--alphabet", "lower"]).status.code(), Some(2));
}

#[test]
fn bad_inputs_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.txt");
    assert_eq!(qnlp(&["eval-seq", "--corpus", missing.to_str().unwrap()]).status.code(), Some(3));

    let junk = dir.path().join("junk.json");
    std::fs::write(&junk, "{ not json").unwrap();
    assert_eq!(qnlp(&["eval-seq", "--ckpt", junk.to_str().unwrap()]).status.code(), Some(3));
    assert_eq!(qnlp(&["eval-embed", "--ckpt", junk.to_str().unwrap()]).status.code(), Some(3));

    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "version = 1\nunknown_key = 3\n").unwrap();
    assert_eq!(qnlp(&["--config", cfg.to_str().unwrap(), "eval-seq"]).status.code(), Some(3));
    std::fs::write(&cfg, "version = 9\n").unwrap();
    assert_eq!(qnlp(&["--config", cfg.to_str().unwrap(), "eval-seq"]).status.code(), Some(3));

    let nodir = dir.path().join("nodir").join("x.json");
    assert_eq!(qnlp(&["train-seq", "--epochs", "1", "--out", nodir.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn config_file_sets_seed_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "version = 1\nseed = 9\nshots = 50\n").unwrap();
    let c = cfg.to_str().unwrap();
    let o = qnlp(&["--config", c, "decode", "--text", "ab"]);
    assert!(stderr(&o).contains("# seed = 9") && stderr(&o).contains("# shots = 50"));
    let o = qnlp(&["--config", c, "--seed", "4", "decode", "--text", "ab", "--shots", "60"]);
    assert!(stderr(&o).contains("# seed = 4") && stderr(&o).contains("# shots = 60"));
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let ck = dir.path().join(format!("{tag}.json"));
        let o = qnlp(&["--seed", "11", "train-embed", "--epochs", "3", "--out", ck.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        (stdout(&o), std::fs::read(&ck).unwrap())
    };
    assert_eq!(run("a"), run("b"));
    let a = qnlp(&["decode", "--text", "determinism", "--seed", "3"]);
    let b = qnlp(&["decode", "--text", "determinism", "--seed", "3"]);
    assert_eq!(a.stdout, b.stdout);
}

fn train_seq_ckpt(dir: &Path) -> std::path::PathBuf {
    let ck = dir.join("seq.json");
    let o = qnlp(&["--quiet", "train-seq", "--epochs", "3", "--out", ck.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("parameters count=172"));
    assert!(!out.contains("epoch="));
    ck
}

#[test]
fn seq_checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ck = train_seq_ckpt(dir.path());
    let text = std::fs::read_to_string(&ck).unwrap();
    let parsed = qnlp::seqgen::Checkpoint::from_json(&text).unwrap();
    assert_eq!(parsed.to_json(), text);

    let model = parsed.model().unwrap();
    let corpus = qnlp::seqgen::Corpus::parse_with(include_str!("../../core/data/sentences.txt"), Some(&model.vocab)).unwrap();
    let ppl = qnlp::seqgen::perplexity(&model, &corpus.test).unwrap();
    let o = qnlp(&["eval-seq", "--ckpt", ck.to_str().unwrap()]);
    assert_eq!(stdout(&o), format!("perplexity split=test value={ppl:.6}\n"));

    let gen = |seed: &str| qnlp(&["--seed", seed, "generate", "--ckpt", ck.to_str().unwrap(), "--prompt", "cat", "--length", "5"]);
    let a = gen("1");
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, gen("1").stdout);
    let line = stdout(&a);
    let words = line.split("text=\"").nth(1).unwrap().trim_end().trim_end_matches('"');
    assert_eq!(words.split(' ').count(), 5);
    assert!(words.split(' ').all(|w| model.vocab.id(w).is_some()));

    let o = qnlp(&["generate", "--ckpt", ck.to_str().unwrap(), "--prompt", "zebra"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn embed_checkpoint_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("e.json");
    let o = qnlp(&["--quiet", "train-embed", "--epochs", "2", "--out", ck.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let model = qnlp::embeddings::EmbeddingCheckpoint::from_json(&std::fs::read_to_string(&ck).unwrap())
        .unwrap()
        .into_model()
        .unwrap();
    let pairs = dir.path().join("pairs.txt");
    std::fs::write(&pairs, "# comment\nsun moon\n\nfish sky\n").unwrap();
    let o = qnlp(&["eval-embed", "--ckpt", ck.to_str().unwrap(), "--pairs", pairs.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines.len(), 2);
    let id = |w: &str| model.vocab.id(w).unwrap();
    for (line, (a, b)) in lines.iter().zip([("sun", "moon"), ("fish", "sky")]) {
        assert_eq!((field(line, "a"), field(line, "b")), (a, b));
        let want = model.fidelity(id(a), id(b)).unwrap();
        assert_eq!(field(line, "value"), format!("{want:.6}"));
    }
    std::fs::write(&pairs, "sun pluto\n").unwrap();
    let o = qnlp(&["eval-embed", "--ckpt", ck.to_str().unwrap(), "--pairs", pairs.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}
