//! The two mask heads and the masked state.

use crate::model::params::{ModelParams, RlMaskForm};
use crate::model::tensor::sigmoid;

fn affine_sigmoid(terms: &[(&crate::model::tensor::Matrix, &[f64])], bias: &[f64]) -> Vec<f64> {
    let d = bias.len();
    let mut z = bias.to_vec();
    let mut tmp = vec![0.0; d];
    for (w, x) in terms {
        w.matvec(x, &mut tmp);
        for (zi, ti) in z.iter_mut().zip(&tmp) {
            *zi += ti;
        }
    }
    z.into_iter().map(sigmoid).collect()
}

/// Answer-conditioned mask `σ(W_s s + W_a a + b_sl)`.
pub fn sl_mask(state: &[f64], answer: &[f64], params: &ModelParams) -> Vec<f64> {
    affine_sigmoid(
        &[(&params.w_s, state), (&params.w_a, answer)],
        params.b_sl.row(0),
    )
}

/// State-only mask `σ(W_s s + W_r s + b_rl)`, or `σ(W_r s + b_rl)` in the
/// collapsed form.
pub fn rl_mask(state: &[f64], params: &ModelParams, form: RlMaskForm) -> Vec<f64> {
    match form {
        RlMaskForm::SharedSum => affine_sigmoid(
            &[(&params.w_s, state), (&params.w_r, state)],
            params.b_rl.row(0),
        ),
        RlMaskForm::Collapsed => affine_sigmoid(&[(&params.w_r, state)], params.b_rl.row(0)),
    }
}

pub fn apply_mask(mask: &[f64], state: &[f64]) -> Vec<f64> {
    assert_eq!(mask.len(), state.len(), "mask and state dimensions differ");
    mask.iter().zip(state).map(|(m, s)| m * s).collect()
}

/// `coef · ‖m_rl − m_sl‖²`, pulling the RL mask toward the SL mask.
pub fn mask_pretrain_loss(m_rl: &[f64], m_sl: &[f64], coef: f64) -> f64 {
    coef * m_rl.iter().zip(m_sl).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::ModelConfig;
    use crate::model::tensor::Matrix;

    fn params(d: usize) -> ModelParams {
        ModelParams::zeros(
            &ModelConfig {
                dim: d,
                memory_capacity: 1,
                ..ModelConfig::default()
            },
            2,
        )
    }

    #[test]
    fn zero_inputs_give_half() {
        let p = params(3);
        assert_eq!(sl_mask(&[0.0; 3], &[0.0; 3], &p), vec![0.5; 3]);
    }

    #[test]
    fn saturating_bias() {
        let mut p = params(3);
        p.b_sl.fill(10.0);
        assert!(sl_mask(&[1.0, -2.0, 3.0], &[0.5; 3], &p).iter().all(|&m| m >= 0.9999));
    }

    #[test]
    fn identity_state_weights() {
        let mut p = params(2);
        p.w_s = Matrix::identity(2);
        let m = sl_mask(&[3f64.ln(), 0.0], &[1.0, 1.0], &p);
        assert!((m[0] - 0.75).abs() < 1e-15 && (m[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rl_mask_cases() {
        let mut p = params(2);
        p.b_rl = Matrix::from_vec(1, 2, vec![1.0, -1.0]);
        let expect = vec![sigmoid(1.0), sigmoid(-1.0)];
        assert_eq!(rl_mask(&[0.0, 0.0], &p, RlMaskForm::SharedSum), expect);
        p.w_s = Matrix::from_vec(2, 2, vec![0.3, -1.0, 2.0, 0.5]);
        p.w_r = Matrix::from_vec(2, 2, vec![-0.3, 1.0, -2.0, -0.5]);
        let m = rl_mask(&[4.0, -7.0], &p, RlMaskForm::SharedSum);
        assert!(m.iter().zip(&expect).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn masking() {
        assert_eq!(apply_mask(&[1.0, 1.0], &[3.0, 7.0]), vec![3.0, 7.0]);
        assert_eq!(apply_mask(&[0.0, 0.0], &[3.0, 7.0]), vec![0.0, 0.0]);
        assert_eq!(apply_mask(&[1.0, 0.0], &[3.0, 7.0]), vec![3.0, 0.0]);
    }

    #[test]
    fn pretrain_loss_values() {
        assert_eq!(mask_pretrain_loss(&[0.2, 0.9], &[0.2, 0.9], 0.1), 0.0);
        assert!((mask_pretrain_loss(&[1.0, 0.0], &[0.0, 0.0], 0.1) - 0.1).abs() < 1e-15);
    }
}
