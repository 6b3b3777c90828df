use std::f64::consts::{LN_2, PI};

use qnlp::diffopt::GradMethod;
use qnlp::embeddings::{
    memory_efficient_state, sgns_loss, toy_corpus, train_sgns, AnsatzSpec, EmbeddingModel, Scheme, SgnsConfig,
    Vocabulary,
};
use qnlp::rng::RngStream;

fn vocab(n: usize) -> Vocabulary {
    Vocabulary::new((0..n).map(|i| format!("w{i}")).collect()).unwrap()
}

#[test]
fn half_fidelity_loss_is_two_ln_two() {
    let ansatz = AnsatzSpec { qubits: 1, layers: 1 };
    let mut model = EmbeddingModel::init(vocab(3), ansatz, Scheme::Circuit, 0).unwrap();
    // slots per word: [RY, RZ]; RY(π/2)|0⟩ overlaps |0⟩ with probability 1/2
    model.params = vec![0.0, 0.0, PI / 2.0, 0.0, PI / 2.0, 0.3];
    assert!((model.fidelity(0, 1).unwrap() - 0.5).abs() < 1e-12);
    assert!((model.fidelity(0, 2).unwrap() - 0.5).abs() < 1e-12);
    for method in [GradMethod::Adjoint, GradMethod::ParameterShift, GradMethod::FiniteDifference] {
        let (loss, _) = sgns_loss(&model, 0, 1, &[2], method).unwrap();
        assert!((loss - 2.0 * LN_2).abs() < 1e-6, "{method:?}: {loss}");
    }
}

#[test]
fn training_loss_mostly_non_increasing() {
    let toy = toy_corpus();
    let model = EmbeddingModel::init(toy.vocab.clone(), AnsatzSpec::default(), Scheme::Circuit, 3).unwrap();
    let config = SgnsConfig { seed: 3, ..SgnsConfig::default() };
    let (_, trace) = train_sgns(&toy.sentences, &model, &config, |_| {}).unwrap();
    let steps = trace.windows(2).count();
    let ok = trace.windows(2).filter(|w| w[1].loss <= w[0].loss).count();
    assert!(ok as f64 >= 0.8 * steps as f64, "{ok}/{steps}");
    assert!(trace.last().unwrap().loss < trace[0].loss);
}

#[test]
fn memory_scheme_random_parameters() {
    let mut rng = RngStream::new(12);
    for seed in 0..10 {
        let mut model = EmbeddingModel::init(vocab(6), AnsatzSpec { qubits: 2, layers: 2 }, Scheme::Memory, seed).unwrap();
        model.params.iter_mut().for_each(|p| *p = rng.uniform_range(-PI, PI));
        for k in 0..6 {
            match memory_efficient_state(&model, k) {
                Ok((state, mass)) => {
                    assert!(mass > 0.0 && mass <= 1.0 + 1e-12);
                    assert!((state.norm_sqr() - 1.0).abs() < 1e-10);
                    assert_eq!(state.width(), 2);
                }
                Err(e) => assert!(matches!(e, qnlp::Error::PreparationFailure { .. }), "{e}"),
            }
        }
    }
}

#[test]
fn circuit_scheme_states_are_normalized() {
    let mut rng = RngStream::new(4);
    let mut model = EmbeddingModel::init(vocab(5), AnsatzSpec::default(), Scheme::Circuit, 1).unwrap();
    model.params.iter_mut().for_each(|p| *p = rng.uniform_range(-PI, PI));
    for k in 0..5 {
        assert!((model.word_state(k).unwrap().norm_sqr() - 1.0).abs() < 1e-12);
    }
}
