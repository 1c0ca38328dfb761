//! Finite-difference checks of the hand-written backward pass, plus a
//! second, straight-line implementation of the encoder.

mod gradcheck;

use gradcheck::*;
use maskdial::model::loss::xent_grad;
use maskdial::model::{Gradients, Matrix, MaskMode, Model, ModelParams, WeightSharing};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn assert_close(seed: u64, label: &str, analytic: &ModelParams, numeric: &ModelParams, only: Option<&[&str]>) {
    for ((name, a), (_, n)) in analytic.named().into_iter().zip(numeric.named()) {
        if only.is_some_and(|o| !o.contains(&name.as_str())) {
            continue;
        }
        let e = rel_err(a, n);
        assert!(e < TOL, "{label} seed {seed}: {name} relative error {e:e}");
    }
}

fn check_variant(variant_for: impl Fn(&mut ChaCha8Rng) -> Variant, label: &str, salt: u64) {
    for seed in 0..100 {
        let inst = instance(seed * 7919 + salt);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let variant = variant_for(&mut rng);
        let a = analytic(&inst, variant, 0.0, true);
        let n = numeric(&inst, &|p| loss_of(&inst, p, variant), None);
        assert_close(seed, label, &a, &n, None);
    }
}

#[test]
fn cross_entropy_gradients_match_finite_differences() {
    check_variant(|_| Variant::Xent, "xent", 1);
}

#[test]
fn all_answers_gradients_match_finite_differences() {
    check_variant(|_| Variant::AllAnswers, "all-answers", 2);
}

#[test]
fn sl_mask_gradients_match_finite_differences() {
    check_variant(|_| Variant::SlMask, "sl-mask", 3);
}

#[test]
fn rl_mask_reinforce_gradients_match_finite_differences() {
    check_variant(
        |rng| Variant::RlMask {
            action: rng.gen_range(0..5),
            reward: if rng.gen_bool(0.5) { 5.0 } else { -0.5 },
            beta: rng.gen_range(0.0..0.5),
        },
        "rl-mask",
        4,
    );
}

#[test]
fn mask_pretraining_gradient_reaches_rl_head() {
    let heads: &[&str] = &["W_r", "b_rl"];
    for seed in 0..100 {
        let inst = instance(seed * 104_729 + 5);
        let a = analytic(&inst, Variant::SlMask, 0.1, false);
        let n = numeric(&inst, &|p| pretrain_loss_of(&inst, p), Some(heads));
        assert_close(seed, "pretrain", &a, &n, Some(heads));
        // Detached target: nothing else moves.
        for (name, m) in a.named() {
            if !heads.contains(&name.as_str()) {
                assert_eq!(m.frobenius_sq(), 0.0, "{name} got pretraining gradient");
            }
        }
    }
}

#[test]
fn inactive_parameters_get_exact_zeros() {
    for seed in 0..20 {
        let inst = instance(seed + 900);
        let plain = analytic(&inst, Variant::Xent, 0.0, true);
        for m in [&plain.w_s, &plain.w_a, &plain.w_r, &plain.b_sl, &plain.b_rl] {
            assert_eq!(m.frobenius_sq(), 0.0);
        }
        let rl = analytic(
            &inst,
            Variant::RlMask {
                action: 0,
                reward: 5.0,
                beta: 0.0,
            },
            0.0,
            true,
        );
        assert_eq!(rl.w_a.frobenius_sq(), 0.0);
        assert_eq!(rl.b_sl.frobenius_sq(), 0.0);
    }
}

#[test]
fn all_ones_mask_matches_plain_network() {
    for seed in 0..30 {
        let inst = instance(seed + 500);
        let model = Model::new(inst.config.clone(), inst.params.clone()).unwrap();
        let y = model.candidate_matrix(&inst.features);
        let view = inst.view();
        let plain = model.forward(&view, &inst.features, &y, MaskMode::Off, false).unwrap();
        let ones = model.forward(&view, &inst.features, &y, MaskMode::Ones, false).unwrap();
        assert_eq!(plain.logits, ones.logits);
        let dl = xent_grad(&plain.logits, inst.gold as usize).1;
        let mut g1 = Gradients::new(&inst.config, 20, 5);
        let mut g2 = Gradients::new(&inst.config, 20, 5);
        model.backward(&view, &y, &plain, &dl, 0.0, &mut g1);
        model.backward(&view, &y, &ones, &dl, 0.0, &mut g2);
        assert_eq!(g1.dense(), g2.dense());
    }
}

#[test]
fn confident_correct_prediction_has_vanishing_gradient() {
    let mut inst = instance(77);
    inst.config.match_type = false;
    let model = Model::new(inst.config.clone(), inst.params.clone()).unwrap();
    let y = model.candidate_matrix(&inst.features);
    let logits = model.logits(&inst.view(), &inst.features, &y, MaskMode::Off).unwrap();
    let best = maskdial::model::argmax(&logits);
    let gap = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, &z)| logits[best] - z)
        .fold(f64::INFINITY, f64::min);
    assert!(gap > 0.0);
    inst.gold = best as u32;
    let scale = 80.0 / gap;
    for x in inst.params.w_cand.data_mut() {
        *x *= scale;
    }
    let g = analytic(&inst, Variant::Xent, 0.0, true);
    assert!(g.norm_sq().sqrt() < 1e-8, "gradient norm {}", g.norm_sq().sqrt());
}

/// Encoder written out with explicit loops and no shared helpers.
fn straight_line_state(inst: &Instance) -> Vec<f64> {
    let d = inst.config.dim;
    let p = &inst.params;
    let embed = |table: &Matrix, sentence: &[u32]| -> Vec<f64> {
        let big_j = sentence.len() as f64;
        let mut out = vec![0.0; d];
        for (j0, &w) in sentence.iter().enumerate() {
            let j = (j0 + 1) as f64;
            for k0 in 0..d {
                let k = (k0 + 1) as f64;
                let l = if inst.config.position_encoding {
                    (1.0 - j / big_j) - (k / d as f64) * (1.0 - 2.0 * j / big_j)
                } else {
                    1.0
                };
                out[k0] += l * table.get(w as usize, k0);
            }
        }
        out
    };
    let n = inst.memories.len();
    let mut u = embed(&p.b, &inst.query);
    for hop in 0..inst.config.hops {
        let t = if inst.config.sharing == WeightSharing::Shared { 0 } else { hop };
        let mut a = Vec::new();
        let mut c = Vec::new();
        for (i, s) in inst.memories.iter().enumerate() {
            let mut ai = embed(&p.a[t], s);
            let mut ci = embed(&p.c[t], s);
            if inst.config.temporal {
                for k in 0..d {
                    ai[k] += p.t_a[t].get(n - 1 - i, k);
                    ci[k] += p.t_c[t].get(n - 1 - i, k);
                }
            }
            a.push(ai);
            c.push(ci);
        }
        if n == 0 {
            a.push(vec![0.0; d]);
            c.push(vec![0.0; d]);
        }
        let scores: Vec<f64> = a.iter().map(|ai| (0..d).map(|k| u[k] * ai[k]).sum()).collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
        let mut next = u.clone();
        for (i, ci) in c.iter().enumerate() {
            let pi = (scores[i] - max).exp() / z;
            for k in 0..d {
                next[k] += pi * ci[k];
            }
        }
        u = next;
    }
    u
}

#[test]
fn encoder_matches_straight_line_implementation() {
    for seed in 0..200 {
        let inst = instance(seed + 3000);
        let model = Model::new(inst.config.clone(), inst.params.clone()).unwrap();
        let trace = model.encode_state(&inst.view()).unwrap();
        let oracle = straight_line_state(&inst);
        for (a, b) in trace.state.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12, "seed {seed}: {a} vs {b}");
        }
    }
}
