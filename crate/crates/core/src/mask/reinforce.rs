//! Policy-gradient pieces of the RL phase.

use rand::Rng;

use crate::error::{Error, Result};
use crate::eval::is_correct;
use crate::model::loss::{log_softmax, softmax};
use crate::model::Reduction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Ablations {
    /// Drop the entropy bonus.
    pub no_entropy: bool,
    /// Skip matching the RL mask to the SL mask during the SL phase.
    pub no_l2_pretrain: bool,
    /// Skip the SL phase entirely.
    pub rl_only: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlConfig {
    pub reward_correct: f64,
    pub reward_incorrect: f64,
    pub entropy_start: f64,
    pub entropy_end: f64,
    pub rl_epochs: usize,
    pub l2_coeff: f64,
    /// Batch reduction for policy-gradient steps; replaces the optimizer's
    /// during the RL phase.
    pub reduction: Reduction,
    pub ablations: Ablations,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            reward_correct: 5.0,
            reward_incorrect: -0.5,
            entropy_start: 1e-5,
            entropy_end: 0.0,
            rl_epochs: 100,
            l2_coeff: 0.1,
            reduction: Reduction::Mean,
            ablations: Ablations::default(),
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rl_epochs == 0 {
            return Err(Error::Config("rl_epochs must be at least 1".into()));
        }
        let nonneg = [self.reward_correct, self.entropy_start, self.entropy_end, self.l2_coeff];
        if nonneg.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || !self.reward_incorrect.is_finite() {
            return Err(Error::Config("RL coefficients must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// Entropy weight at RL epoch `t`, linear from start to end over the phase.
    pub fn beta(&self, t: usize) -> f64 {
        if self.ablations.no_entropy {
            return 0.0;
        }
        if self.rl_epochs <= 1 {
            return self.entropy_start;
        }
        let frac = (t.min(self.rl_epochs - 1)) as f64 / (self.rl_epochs - 1) as f64;
        self.entropy_start + (self.entropy_end - self.entropy_start) * frac
    }

    pub fn reward(&self, action: u32, valid: &[u32]) -> f64 {
        if is_correct(action, valid) {
            self.reward_correct
        } else {
            self.reward_incorrect
        }
    }

    /// Weight of the mask matching term during the SL phase.
    pub fn pretrain_weight(&self) -> f64 {
        if self.ablations.no_l2_pretrain {
            0.0
        } else {
            self.l2_coeff
        }
    }
}

/// Samples from `softmax(logits)`; returns the action and its log-probability.
pub fn rl_sample_action<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> Result<(u32, f64)> {
    if logits.is_empty() || logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::Numeric("cannot sample from non-finite or empty logits".into()));
    }
    let p = softmax(logits);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut action = p.len() - 1;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            action = i;
            break;
        }
    }
    Ok((action as u32, log_softmax(logits)[action]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn beta_schedule() {
        let cfg = RlConfig {
            rl_epochs: 101,
            ..RlConfig::default()
        };
        assert_eq!(cfg.beta(0), 1e-5);
        assert_eq!(cfg.beta(100), 0.0);
        assert!((cfg.beta(50) - 5e-6).abs() < 1e-20);
        let off = RlConfig {
            ablations: Ablations {
                no_entropy: true,
                ..Ablations::default()
            },
            ..cfg
        };
        assert_eq!(off.beta(0), 0.0);
    }

    #[test]
    fn rewards() {
        let cfg = RlConfig::default();
        assert_eq!(cfg.reward(3, &[1, 3]), 5.0);
        assert_eq!(cfg.reward(2, &[1, 3]), -0.5);
    }

    #[test]
    fn sampling_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 10_000;
        let zeros = (0..n)
            .filter(|_| rl_sample_action(&[50.0, -50.0], &mut rng).unwrap().0 == 0)
            .count();
        assert!(zeros as f64 / n as f64 >= 0.999);

        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[rl_sample_action(&[0.0; 4], &mut rng).unwrap().0 as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() <= 0.02);
        }

        assert_eq!(rl_sample_action(&[1.7], &mut rng).unwrap(), (0, 0.0));
        assert!(rl_sample_action(&[f64::NAN, 0.0], &mut rng).is_err());
    }
}
