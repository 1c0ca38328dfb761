use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use maskdial::eval::evaluate;
use maskdial::generator::{generate_corpus, CorpusConfig, Mode, Patterns, SplitSizes};
use maskdial::model::{Gradients, MaskMode, Model, ModelConfig, OptimizerState};
use maskdial::pipeline::Prepared;
use maskdial::train::{supervised_epoch, Objective};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn setup(n: usize) -> (Prepared, Model) {
    let c = generate_corpus(&CorpusConfig::new(Mode::Permuted), SplitSizes::uniform(n), 1, &Patterns::default()).unwrap();
    let prep = Prepared::new(&c.train, &c.val, &c.test, Some(&c.kb)).unwrap();
    let model = Model::init(ModelConfig::default(), prep.vocab.len(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    (prep, model)
}

fn generator(c: &mut Criterion) {
    let p = Patterns::default();
    c.bench_function("generate 100 permuted dialogs", |b| {
        b.iter(|| generate_corpus(&CorpusConfig::new(Mode::Permuted), SplitSizes::uniform(100), 7, &p).unwrap())
    });
    let corpus = generate_corpus(&CorpusConfig::new(Mode::Permuted), SplitSizes::uniform(100), 7, &p).unwrap();
    c.bench_function("prepare 100 dialogs", |b| {
        b.iter(|| Prepared::new(&corpus.train, &corpus.val, &corpus.test, Some(&corpus.kb)).unwrap())
    });
}

fn network(c: &mut Criterion) {
    let (prep, model) = setup(20);
    let y = model.candidate_matrix(&prep.features);
    let ex = prep.train.view(prep.train.n_examples() / 2, model.config.memory_capacity);
    for (name, mode) in [("forward plain", MaskMode::Off), ("forward sl mask", MaskMode::Sl), ("forward rl mask", MaskMode::Rl)] {
        c.bench_function(name, |b| b.iter(|| model.forward(black_box(&ex), &prep.features, &y, mode, false).unwrap()));
    }
    c.bench_function("candidate matrix", |b| b.iter(|| model.candidate_matrix(&prep.features)));
}

fn training(c: &mut Criterion) {
    let (prep, model) = setup(50);
    let order: Vec<usize> = (0..prep.train.n_examples()).collect();
    let opt = OptimizerState::default();
    let mut group = c.benchmark_group("epoch over 50 dialogs");
    group.sample_size(10);
    group.bench_function("supervised, sl mask", |b| {
        b.iter_batched(
            || (model.clone(), Gradients::new(&model.config, prep.vocab.len(), prep.features.len())),
            |(mut m, mut g)| {
                supervised_epoch(&mut m, &mut g, &prep.train, &prep.features, &order, 32, &opt, Objective::Xent, MaskMode::Sl, 0.1)
                    .unwrap()
            },
            BatchSize::LargeInput,
        )
    });
    group.bench_function("evaluate, rl mask", |b| {
        b.iter(|| evaluate(&model, &prep.train, &prep.features, MaskMode::Rl).unwrap())
    });
    group.finish();
}

criterion_group!(benches, generator, network, training);
criterion_main!(benches);
