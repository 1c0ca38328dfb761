//! Random tiny models and a central-difference gradient oracle.

#![allow(dead_code)]

use maskdial::data::{CandidateFeatures, CandidateSet, EntityLexicon, ExampleView, Vocabulary, TYPE_TOKENS};
use maskdial::generator::{KbFact, Relation};
use maskdial::model::loss::{all_answers_grad, entropy, log_softmax, reinforce_grad, softmax, xent_grad};
use maskdial::model::{Gradients, Matrix, MaskMode, Model, ModelConfig, ModelParams, RlMaskForm, WeightSharing};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
pub const WORDS: [&str; 9] = ["x1", "x2", "x3", "x4", "x5", "x6", "e_phone", "e_address", "cheap"];

pub struct Instance {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub features: CandidateFeatures,
    pub memories: Vec<Vec<u32>>,
    pub query: Vec<u32>,
    pub gold: u32,
    pub valid: Vec<u32>,
    pub context: Vec<u32>,
}

impl Instance {
    pub fn view(&self) -> ExampleView<'_> {
        ExampleView {
            memories: &self.memories,
            query: &self.query,
            gold: self.gold,
            valid: &self.valid,
            context: &self.context,
        }
    }
}

pub fn vocabulary() -> Vocabulary {
    let mut tokens: Vec<String> = ["<pad>", "<unk>", "$user", "$agent"].iter().map(|s| s.to_string()).collect();
    tokens.extend(TYPE_TOKENS.iter().map(|s| s.to_string()));
    tokens.extend(WORDS.iter().map(|s| s.to_string()));
    assert_eq!(tokens.len(), 20);
    Vocabulary::from_tokens(tokens)
}

pub fn random_sentence(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<u32> {
    let len = rng.gen_range(1..=max_len);
    (0..len).map(|_| rng.gen_range(2..20)).collect()
}

pub fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = vocabulary();
    let mut utts: Vec<String> = Vec::new();
    while utts.len() < 5 {
        let len = rng.gen_range(1..=4);
        let u: Vec<&str> = (0..len).map(|_| *WORDS.choose(&mut rng).unwrap()).collect();
        let u = u.join(" ");
        if !utts.contains(&u) {
            utts.push(u);
        }
    }
    let cands = CandidateSet::new(utts).unwrap();
    let fact = KbFact {
        entity: "e".into(),
        relation: Relation::Price,
        value: "cheap".into(),
    };
    let lexicon = EntityLexicon::from_facts([&fact]);
    let features = CandidateFeatures::new(&cands, &vocab, &lexicon);
    let context = ["cheap", "e_phone", "e_address"]
        .iter()
        .filter(|_| rng.gen_bool(0.7))
        .filter_map(|w| features.entity_key(w))
        .collect();

    let config = ModelConfig {
        dim: 6,
        hops: rng.gen_range(1..=3),
        memory_capacity: 3,
        position_encoding: rng.gen_bool(0.8),
        temporal: rng.gen_bool(0.8),
        match_type: rng.gen_bool(0.5),
        sharing: if rng.gen_bool(0.5) { WeightSharing::Shared } else { WeightSharing::PerHop },
        rl_mask_form: if rng.gen_bool(0.5) { RlMaskForm::SharedSum } else { RlMaskForm::Collapsed },
        init_std: 0.5,
    };
    let mut params = ModelParams::init(&config, 20, &mut rng);
    // Nonzero biases so their gradients are exercised away from σ(0).
    for m in [&mut params.b_sl, &mut params.b_rl] {
        *m = Matrix::gaussian(1, 6, 0.5, &mut rng);
    }
    let n_mem = if rng.gen_bool(0.1) { 0 } else { rng.gen_range(1..=3) };
    let memories = (0..n_mem).map(|_| random_sentence(&mut rng, 5)).collect();
    let query = random_sentence(&mut rng, 4);
    let gold = rng.gen_range(0..5);
    let mut valid: Vec<u32> = (0..5).filter(|&c| c == gold || rng.gen_bool(0.3)).collect();
    valid.sort();
    Instance {
        config,
        params,
        features,
        memories,
        query,
        gold,
        valid,
        context,
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Variant {
    Xent,
    AllAnswers,
    SlMask,
    RlMask { action: usize, reward: f64, beta: f64 },
}

impl Variant {
    pub fn mask(self) -> MaskMode {
        match self {
            Variant::Xent | Variant::AllAnswers => MaskMode::Off,
            Variant::SlMask => MaskMode::Sl,
            Variant::RlMask { .. } => MaskMode::Rl,
        }
    }

    pub fn grad(self, logits: &[f64], inst: &Instance) -> (f64, Vec<f64>) {
        match self {
            Variant::Xent | Variant::SlMask => xent_grad(logits, inst.gold as usize),
            Variant::AllAnswers => all_answers_grad(logits, &inst.valid),
            Variant::RlMask { action, reward, beta } => reinforce_grad(logits, action, reward, beta),
        }
    }
}

/// Loss written out from scratch for the numeric side.
pub fn loss_of(inst: &Instance, params: &ModelParams, variant: Variant) -> f64 {
    let model = Model::new(inst.config.clone(), params.clone()).unwrap();
    let y = model.candidate_matrix(&inst.features);
    let logits = model.logits(&inst.view(), &inst.features, &y, variant.mask()).unwrap();
    match variant {
        Variant::Xent | Variant::SlMask => -log_softmax(&logits)[inst.gold as usize],
        Variant::AllAnswers => logits
            .iter()
            .enumerate()
            .map(|(i, &z)| {
                let p = 1.0 / (1.0 + (-z).exp());
                if inst.valid.contains(&(i as u32)) {
                    -p.ln()
                } else {
                    -(1.0 - p).ln()
                }
            })
            .sum(),
        Variant::RlMask { action, reward, beta } => {
            let p = softmax(&logits);
            -(reward * p[action].ln() + beta * entropy(&p))
        }
    }
}

pub fn pretrain_loss_of(inst: &Instance, params: &ModelParams) -> f64 {
    let model = Model::new(inst.config.clone(), params.clone()).unwrap();
    let y = model.candidate_matrix(&inst.features);
    let t = model.forward(&inst.view(), &inst.features, &y, MaskMode::Sl, true).unwrap();
    match &t.mask {
        maskdial::model::MaskTrace::Sl { mask, rl_mask: Some(rl), .. } => {
            0.1 * rl.iter().zip(mask).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        }
        other => panic!("unexpected trace {other:?}"),
    }
}

pub fn analytic(inst: &Instance, variant: Variant, pretrain_weight: f64, logits_grad: bool) -> ModelParams {
    let model = Model::new(inst.config.clone(), inst.params.clone()).unwrap();
    let y = model.candidate_matrix(&inst.features);
    let view = inst.view();
    let trace = model
        .forward(&view, &inst.features, &y, variant.mask(), pretrain_weight > 0.0)
        .unwrap();
    let dl = if logits_grad {
        variant.grad(&trace.logits, inst).1
    } else {
        vec![0.0; trace.logits.len()]
    };
    let mut grads = Gradients::new(&inst.config, 20, 5);
    model.backward(&view, &y, &trace, &dl, pretrain_weight, &mut grads);
    model.candidate_backward(&inst.features, &mut grads);
    grads.dense().clone()
}

pub fn numeric(inst: &Instance, f: &dyn Fn(&ModelParams) -> f64, only: Option<&[&str]>) -> ModelParams {
    let mut out = ModelParams::zeros(&inst.config, 20);
    let names: Vec<String> = inst.params.named().into_iter().map(|(n, _)| n).collect();
    for (k, name) in names.iter().enumerate() {
        if only.is_some_and(|o| !o.contains(&name.as_str())) {
            continue;
        }
        let len = inst.params.named()[k].1.data().len();
        for i in 0..len {
            let mut plus = inst.params.clone();
            plus.named_mut()[k].1.data_mut()[i] += H;
            let mut minus = inst.params.clone();
            minus.named_mut()[k].1.data_mut()[i] -= H;
            out.named_mut()[k].1.data_mut()[i] = (f(&plus) - f(&minus)) / (2.0 * H);
        }
    }
    out
}

pub fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    let diff: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a.frobenius_sq().sqrt() + b.frobenius_sq().sqrt();
    if scale < 1e-9 {
        diff
    } else {
        diff / scale
    }
}

/// Largest relative error over all parameter matrices named in `only`
/// (all when `None`).
pub fn worst_error(analytic: &ModelParams, numeric: &ModelParams, only: Option<&[&str]>) -> f64 {
    analytic
        .named()
        .into_iter()
        .zip(numeric.named())
        .filter(|((name, _), _)| only.is_none_or(|o| o.contains(&name.as_str())))
        .map(|((_, a), (_, n))| rel_err(a, n))
        .fold(0.0, f64::max)
}

/// Worst relative error of one loss path on instance `seed`.
pub fn path_error(seed: u64, variant: Variant) -> f64 {
    let inst = instance(seed);
    let a = analytic(&inst, variant, 0.0, true);
    let n = numeric(&inst, &|p| loss_of(&inst, p, variant), None);
    worst_error(&a, &n, None)
}

pub const PRETRAIN_HEADS: [&str; 2] = ["W_r", "b_rl"];

/// Worst relative error of the mask pre-training term on instance `seed`.
pub fn pretrain_error(seed: u64) -> f64 {
    let inst = instance(seed);
    let a = analytic(&inst, Variant::SlMask, 0.1, false);
    let n = numeric(&inst, &|p| pretrain_loss_of(&inst, p), Some(&PRETRAIN_HEADS));
    worst_error(&a, &n, Some(&PRETRAIN_HEADS))
}
