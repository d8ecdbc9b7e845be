use pjx_core::data::{generate_synthetic, prepare_synthetic, PreparedExample, SynthConfig, Vocabularies};
use pjx_core::model::{PjxModel, QuestionMode};
use pjx_core::train::{fit, train_step, Adam, Phase, Regime, TrainConfig};
use pjx_core::PjxError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Setup {
    train: Vec<PreparedExample>,
    val: Vec<PreparedExample>,
    vocab: Vocabularies,
}

fn setup(train: usize) -> Setup {
    let sc = SynthConfig {
        train,
        val: 40,
        test: 10,
        ..SynthConfig::default()
    };
    let data = generate_synthetic(&sc, 4).unwrap();
    let records: Vec<_> = data.train.iter().map(|e| e.record.clone()).collect();
    let vocab = Vocabularies::build(&records, 1, 16).unwrap();
    Setup {
        train: prepare_synthetic(&data.train, &vocab),
        val: prepare_synthetic(&data.val, &vocab),
        vocab,
    }
}

fn config() -> TrainConfig {
    TrainConfig {
        learning_rate: 3e-3,
        batch_size: 16,
        word_dim: 16,
        question_hidden: 32,
        attention_hidden: 32,
        answer_embed_dim: 16,
        decoder_hidden: 32,
        ..TrainConfig::default()
    }
}

fn model(s: &Setup, cfg: &TrainConfig) -> PjxModel {
    PjxModel::new(cfg.model_config(32, 4, 4, &s.vocab, QuestionMode::Question), cfg.seed).unwrap()
}

fn batches(data: &[PreparedExample], size: usize) -> impl Iterator<Item = Vec<&PreparedExample>> {
    data.chunks(size).map(|c| c.iter().collect::<Vec<_>>()).cycle()
}

fn bytes(m: &PjxModel) -> Vec<u8> {
    let mut buf = Vec::new();
    m.save(&mut buf).unwrap();
    buf
}

#[test]
fn frozen_answer_path_is_untouched() {
    let s = setup(200);
    let cfg = TrainConfig {
        regime: Regime::FreezeAnswer,
        ..config()
    };
    let mut m = model(&s, &cfg);
    let before = m.answer_path_bytes();
    let all_before = bytes(&m);
    m.set_answer_trainable(false);
    let mut opt = Adam::new(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for batch in batches(&s.train, 16).take(100) {
        train_step(&mut m, &batch, &cfg, Phase::Main(Regime::FreezeAnswer), &mut opt, &mut rng).unwrap();
    }
    assert_eq!(m.answer_path_bytes(), before);
    assert_ne!(bytes(&m), all_before);
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let s = setup(64);
    let cfg = TrainConfig {
        learning_rate: 0.0,
        ..config()
    };
    let mut m = model(&s, &cfg);
    let before = bytes(&m);
    let mut opt = Adam::new(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for batch in batches(&s.train, 16).take(10) {
        train_step(&mut m, &batch, &cfg, Phase::Main(Regime::Joint), &mut opt, &mut rng).unwrap();
    }
    assert_eq!(bytes(&m), before);
}

#[test]
fn joint_loss_halves_within_two_hundred_steps() {
    let s = setup(400);
    let cfg = config();
    let mut m = model(&s, &cfg);
    let mut opt = Adam::new(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut losses = Vec::new();
    for batch in batches(&s.train, 16).take(200) {
        let l = train_step(&mut m, &batch, &cfg, Phase::Main(Regime::Joint), &mut opt, &mut rng).unwrap();
        losses.push((l.answer + l.explanation) / l.examples as f64);
    }
    let first: f64 = losses[..10].iter().sum::<f64>() / 10.0;
    let last: f64 = losses[190..].iter().sum::<f64>() / 10.0;
    assert!(last <= 0.5 * first, "loss went from {first} to {last}");
}

#[test]
fn same_seed_same_checkpoint_and_report() {
    let s = setup(96);
    let cfg = TrainConfig {
        epochs: 3,
        dropout: 0.2,
        ..config()
    };
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let mut m = model(&s, &cfg);
        let path = dir.path().join(name);
        let report = fit(&mut m, &s.train, &s.val, &cfg, Some(&path)).unwrap();
        (std::fs::read(path).unwrap(), report)
    };
    let (ca, ra) = run("a.ckpt");
    let (cb, rb) = run("b.ckpt");
    assert_eq!(ca, cb);
    assert_eq!(ra.without_timing(), rb.without_timing());
    assert_eq!(ra.epochs.len(), 3);
    assert_eq!(ra.steps, 3 * 96 / 16);
}

#[test]
fn pretraining_adds_answer_only_epochs() {
    let s = setup(64);
    let cfg = TrainConfig {
        regime: Regime::Finetune,
        pretrain_epochs: 2,
        epochs: 1,
        ..config()
    };
    let mut m = model(&s, &cfg);
    let report = fit(&mut m, &s.train, &s.val, &cfg, None).unwrap();
    assert_eq!(report.pretrain.len(), 2);
    assert_eq!(report.epochs.len(), 1);
    assert!(report.pretrain.iter().all(|e| e.explanation_loss == 0.0));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let s = setup(32);
    let cfg = config();
    let mut m = model(&s, &cfg);
    let mut opt = Adam::new(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for batch in batches(&s.train, 16).take(3) {
        train_step(&mut m, &batch, &cfg, Phase::Main(Regime::Joint), &mut opt, &mut rng).unwrap();
    }
    let saved = bytes(&m);
    let mut fresh = PjxModel::new(m.config().clone(), 99).unwrap();
    fresh.load_weights(saved.as_slice()).unwrap();
    assert_eq!(bytes(&fresh), saved);
    for id in m.params().ids() {
        let (a, b) = (m.params().get(id).data(), fresh.params().get(id).data());
        assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn non_finite_loss_aborts() {
    let s = setup(16);
    let cfg = config();
    let mut m = model(&s, &cfg);
    let id = m.params().ids().next().unwrap();
    m.params_mut().get_mut(id).data_mut().fill(f64::NAN);
    let mut opt = Adam::new(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let err = train_step(&mut m, &[&s.train[0]], &cfg, Phase::Main(Regime::Joint), &mut opt, &mut rng).unwrap_err();
    assert!(matches!(err, PjxError::Numerical(_)), "{err}");
}
