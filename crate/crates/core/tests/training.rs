//! Training-loop properties on small generated corpora.

use maskdial::eval::evaluate;
use maskdial::generator::{generate_corpus, Corpora, CorpusConfig, Mode, Patterns, SplitSizes};
use maskdial::mask::reinforce::RlConfig;
use maskdial::model::{Gradients, MaskMode, Matrix, Model, ModelConfig, OptimizerState};
use maskdial::pipeline::Prepared;
use maskdial::train::{
    reinforce_epoch, run_training, supervised_epoch, ModelKind, Objective, TrainConfig, TrainPhase, Trainer,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn corpus(n: usize, seed: u64) -> (Corpora, Prepared) {
    let c = generate_corpus(&CorpusConfig::new(Mode::Permuted), SplitSizes::uniform(n), seed, &Patterns::default())
        .unwrap();
    let prep = Prepared::new(&c.train, &c.val, &c.test, Some(&c.kb)).unwrap();
    (c, prep)
}

fn small_config() -> ModelConfig {
    ModelConfig {
        dim: 10,
        ..ModelConfig::default()
    }
}

fn model(prep: &Prepared, seed: u64) -> Model {
    Model::init(small_config(), prep.vocab.len(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn order(prep: &Prepared) -> Vec<usize> {
    (0..prep.train.n_examples()).collect()
}

#[test]
fn saturated_mask_follows_the_baseline_trajectory() {
    let (_, prep) = corpus(8, 4);
    let mut base = model(&prep, 9);
    let mut masked = base.clone();
    masked.params.b_sl = Matrix::from_vec(1, 10, vec![40.0; 10]);
    let opt = OptimizerState::default();
    let mut g1 = Gradients::new(&base.config, prep.vocab.len(), prep.features.len());
    let mut g2 = g1.clone();
    for _ in 0..3 {
        let o = order(&prep);
        let a = supervised_epoch(&mut base, &mut g1, &prep.train, &prep.features, &o, 4, &opt, Objective::Xent, MaskMode::Off, 0.0)
            .unwrap();
        let b = supervised_epoch(&mut masked, &mut g2, &prep.train, &prep.features, &o, 4, &opt, Objective::Xent, MaskMode::Sl, 0.0)
            .unwrap();
        assert_eq!(a.loss, b.loss);
    }
    assert_ne!(base.params.b_sl, masked.params.b_sl);
    for ((name, x), (_, y)) in base.params.named().into_iter().zip(masked.params.named()) {
        if !matches!(name.as_str(), "W_s" | "W_a" | "W_r" | "b_sl" | "b_rl") {
            assert_eq!(x, y, "{name} diverged");
        }
    }
}

#[test]
fn reinforce_leaves_the_sl_head_untouched() {
    let (_, prep) = corpus(6, 5);
    let mut m = model(&prep, 2);
    let before = (m.params.w_a.clone(), m.params.b_sl.clone());
    let w_r = m.params.w_r.clone();
    let mut g = Gradients::new(&m.config, prep.vocab.len(), prep.features.len());
    let rl = RlConfig::default();
    let opt = OptimizerState { reduction: rl.reduction, ..OptimizerState::default() };
    for epoch in 0..2 {
        reinforce_epoch(&mut m, &mut g, &prep.train, &prep.features, &order(&prep), 8, &opt, rl.beta(epoch), &rl, 3, epoch)
            .unwrap();
    }
    let (w_a, b_sl) = m.params.sl_head();
    assert_eq!((w_a, b_sl), (&before.0, &before.1));
    assert_ne!(m.params.w_r, w_r);
}

#[test]
fn rl_forward_ignores_gold_labels() {
    let (_, prep) = corpus(4, 6);
    let m = model(&prep, 8);
    let y = m.candidate_matrix(&prep.features);
    let n = prep.features.len() as u32;
    for i in 0..prep.train.n_examples() {
        let ex = prep.train.view(i, m.config.memory_capacity);
        let corrupted_valid = vec![(ex.gold + 1) % n];
        let mut bad = ex;
        bad.gold = (ex.gold + 7) % n;
        bad.valid = &corrupted_valid;
        let a = m.forward(&ex, &prep.features, &y, MaskMode::Rl, false).unwrap();
        let b = m.forward(&bad, &prep.features, &y, MaskMode::Rl, false).unwrap();
        assert_eq!(a.logits, b.logits);
        assert_eq!(a.mask, b.mask);
    }
}

#[test]
fn evaluation_is_pure() {
    let (_, prep) = corpus(5, 7);
    let m = model(&prep, 1);
    let snapshot = m.params.clone();
    let a = evaluate(&m, &prep.val, &prep.features, MaskMode::Rl).unwrap();
    let b = evaluate(&m, &prep.val, &prep.features, MaskMode::Rl).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.predictions, b.predictions);
    assert_eq!(m.params, snapshot);
}

fn tiny_schedule(kind: ModelKind, seed: u64) -> TrainConfig {
    let mut c = TrainConfig {
        kind,
        model: small_config(),
        sl_epochs: 3,
        batch_size: 8,
        seed,
        ..TrainConfig::default()
    };
    c.rl.rl_epochs = 2;
    c
}

#[test]
fn training_is_deterministic_in_the_seed() {
    let (_, prep) = corpus(6, 8);
    let (a, va, la) = run_training(tiny_schedule(ModelKind::MaskMemN2N, 11), prep.data()).unwrap();
    let (b, vb, lb) = run_training(tiny_schedule(ModelKind::MaskMemN2N, 11), prep.data()).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!((va, la), (vb, lb));
    let (c, _, _) = run_training(tiny_schedule(ModelKind::MaskMemN2N, 12), prep.data()).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn schedule_runs_sl_then_rl() {
    let (_, prep) = corpus(5, 9);
    let (_, _, log) = run_training(tiny_schedule(ModelKind::MaskMemN2N, 1), prep.data()).unwrap();
    let phases: Vec<TrainPhase> = log.iter().map(|e| e.phase).collect();
    assert_eq!(phases, [TrainPhase::Sl; 3].into_iter().chain([TrainPhase::Rl; 2]).collect::<Vec<_>>());
    let mut rl_only = tiny_schedule(ModelKind::MaskMemN2N, 1);
    rl_only.rl.ablations.rl_only = true;
    let (_, _, log) = run_training(rl_only, prep.data()).unwrap();
    assert!(log.iter().all(|e| e.phase == TrainPhase::Rl));
    assert_eq!(log.len(), 2);
    let (_, _, log) = run_training(tiny_schedule(ModelKind::MemN2N, 1), prep.data()).unwrap();
    assert!(log.iter().all(|e| e.phase == TrainPhase::Sl));
}

#[test]
fn stepwise_resume_matches_an_uninterrupted_run() {
    let (_, prep) = corpus(5, 10);
    let cfg = tiny_schedule(ModelKind::MaskMemN2N, 3);
    let (full, _, _) = run_training(cfg.clone(), prep.data()).unwrap();
    let mut first = Trainer::new(cfg.clone(), prep.data()).unwrap();
    for _ in 0..4 {
        first.step().unwrap();
    }
    let mut second = Trainer::resume(cfg, prep.data(), first.state.clone()).unwrap();
    second.run(|_| Ok(())).unwrap();
    assert_eq!(second.best_model().unwrap().params, full.params);
}

#[test]
fn ten_dialogs_are_memorized() {
    let (_, prep) = corpus(10, 12);
    let mut m = Model::init(ModelConfig::default(), prep.vocab.len(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let mut g = Gradients::new(&m.config, prep.vocab.len(), prep.features.len());
    let mut acc = 0.0;
    for epoch in 0..200 {
        let opt = OptimizerState { epoch, anneal_ratio: 1.0, ..OptimizerState::default() };
        supervised_epoch(&mut m, &mut g, &prep.train, &prep.features, &order(&prep), 32, &opt, Objective::Xent, MaskMode::Sl, 0.1)
            .unwrap();
        acc = evaluate(&m, &prep.train, &prep.features, MaskMode::Sl).unwrap().metrics.per_turn;
        if acc >= 99.0 {
            break;
        }
    }
    assert!(acc >= 99.0, "train per-turn accuracy {acc}");
}

#[test]
fn early_epochs_decrease_the_loss() {
    let (_, prep) = corpus(10, 13);
    let mut monotone = 0;
    for seed in 0..10 {
        let mut m = model(&prep, seed);
        let mut g = Gradients::new(&m.config, prep.vocab.len(), prep.features.len());
        let opt = OptimizerState::default();
        let losses: Vec<f64> = (0..5)
            .map(|_| {
                supervised_epoch(&mut m, &mut g, &prep.train, &prep.features, &order(&prep), 32, &opt, Objective::Xent, MaskMode::Off, 0.0)
                    .unwrap()
                    .loss
            })
            .collect();
        if losses.windows(2).all(|w| w[1] < w[0]) {
            monotone += 1;
        }
    }
    assert!(monotone >= 9, "{monotone}/10 seeds decreased monotonically");
}
