//! Training loops: supervised epochs, REINFORCE epochs, and the phase
//! schedule with per-epoch validation and best-model selection.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::data::{CandidateFeatures, Dataset};
use crate::error::{Error, Result};
use crate::eval::{evaluate, Metrics};
use crate::mask::mask_pretrain_loss;
use crate::mask::reinforce::{rl_sample_action, RlConfig};
use crate::model::loss::{all_answers_grad, reinforce_grad, xent_grad};
use crate::model::{sgd_step, Gradients, MaskMode, MaskTrace, Model, ModelConfig, ModelParams, OptimizerState, Step, Trainable};
use crate::rng::{stream, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    MemN2N,
    AllAnswers,
    MaskMemN2N,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::MemN2N, ModelKind::AllAnswers, ModelKind::MaskMemN2N];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::MemN2N => "memn2n",
            ModelKind::AllAnswers => "memn2n_all_answers",
            ModelKind::MaskMemN2N => "mask_memn2n",
        }
    }

    /// Mask used when predicting.
    pub fn eval_mask(self) -> MaskMode {
        match self {
            ModelKind::MaskMemN2N => MaskMode::Rl,
            _ => MaskMode::Off,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown model `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainPhase {
    Sl,
    Rl,
}

impl TrainPhase {
    pub fn name(self) -> &'static str {
        match self {
            TrainPhase::Sl => "sl",
            TrainPhase::Rl => "rl",
        }
    }
}

impl fmt::Display for TrainPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrainPhase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sl" => Ok(TrainPhase::Sl),
            "rl" => Ok(TrainPhase::Rl),
            _ => Err(Error::Argument(format!("unknown phase `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub model: ModelConfig,
    /// Epochs of the supervised phase (the only phase for the baselines).
    pub sl_epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerState,
    pub rl: RlConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            kind: ModelKind::MemN2N,
            model: ModelConfig::default(),
            sl_epochs: 150,
            batch_size: 32,
            optimizer: OptimizerState::default(),
            rl: RlConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn phase_epochs(&self, phase: TrainPhase) -> usize {
        match phase {
            TrainPhase::Sl => self.sl_epochs,
            TrainPhase::Rl => self.rl.rl_epochs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.rl.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        let o = &self.optimizer;
        if !(o.base_lr.is_finite() && o.base_lr > 0.0 && o.anneal_ratio > 0.0 && o.anneal_period > 0) {
            return Err(Error::Config("invalid learning-rate schedule".into()));
        }
        let rl_only = self.kind == ModelKind::MaskMemN2N && self.rl.ablations.rl_only;
        if self.sl_epochs == 0 && !rl_only && self.kind != ModelKind::MaskMemN2N {
            return Err(Error::Config("sl_epochs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub features: &'a CandidateFeatures,
    pub train: &'a Dataset,
    pub val: &'a Dataset,
    pub vocab_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpochStats {
    /// Mean per-example objective.
    pub loss: f64,
    /// Mean mask matching term (SL phase of the mask model).
    pub pretrain_loss: f64,
    /// Mean reward (RL phase).
    pub reward: f64,
    pub n_examples: usize,
}

/// Supervised objective on the logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Xent,
    AllAnswers,
}

fn batch_order(n: usize, seed: u64, tag: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, streams::BATCH, tag));
    order
}

fn apply(model: &mut Model, grads: &mut Gradients, features: &CandidateFeatures, step: Step, trainable: Trainable) -> Result<()> {
    model.candidate_backward(features, grads);
    sgd_step(&mut model.params, grads, step, trainable)?;
    grads.clear();
    Ok(())
}

/// One pass over `data` in `order`, one SGD step per batch at `opt.lr()`.
#[allow(clippy::too_many_arguments)]
pub fn supervised_epoch(
    model: &mut Model,
    grads: &mut Gradients,
    data: &Dataset,
    features: &CandidateFeatures,
    order: &[usize],
    batch_size: usize,
    opt: &OptimizerState,
    objective: Objective,
    mask: MaskMode,
    pretrain_weight: f64,
) -> Result<EpochStats> {
    let cap = model.config.memory_capacity;
    let pretrain = mask == MaskMode::Sl && pretrain_weight > 0.0;
    let mut stats = EpochStats::default();
    grads.resize_candidates(features.len());
    grads.clear();
    for batch in order.chunks(batch_size) {
        let y = model.candidate_matrix(features);
        let views: Vec<_> = batch.iter().map(|&i| data.view(i, cap)).collect();
        let traces = model.forward_batch(&views, features, &y, mask, pretrain)?;
        let mut dlogits = Vec::with_capacity(batch.len());
        for (ex, trace) in views.iter().zip(&traces) {
            let (loss, dl) = match objective {
                Objective::Xent => xent_grad(&trace.logits, ex.gold as usize),
                Objective::AllAnswers => all_answers_grad(&trace.logits, ex.valid),
            };
            if let MaskTrace::Sl { mask, rl_mask: Some(rl), .. } = &trace.mask {
                stats.pretrain_loss += mask_pretrain_loss(rl, mask, pretrain_weight);
            }
            stats.loss += loss;
            dlogits.push(dl);
        }
        model.backward_batch(&views, &y, &traces, &dlogits, pretrain_weight, grads);
        apply(model, grads, features, opt.step(opt.lr(), batch.len()), Trainable::ALL)?;
    }
    stats.n_examples = order.len();
    let n = order.len().max(1) as f64;
    stats.loss /= n;
    stats.pretrain_loss /= n;
    Ok(stats)
}

/// Index of the sampling substream for example `i` of RL epoch `epoch`.
pub fn sample_stream_index(epoch: usize, i: usize) -> u64 {
    ((epoch as u64) << 32) | i as u64
}

/// One REINFORCE pass: each turn is a one-step episode under the
/// state-only mask, with the gold history as context. The SL mask head is
/// left untouched.
#[allow(clippy::too_many_arguments)]
pub fn reinforce_epoch(
    model: &mut Model,
    grads: &mut Gradients,
    data: &Dataset,
    features: &CandidateFeatures,
    order: &[usize],
    batch_size: usize,
    opt: &OptimizerState,
    beta: f64,
    rl: &RlConfig,
    seed: u64,
    epoch: usize,
) -> Result<EpochStats> {
    let cap = model.config.memory_capacity;
    let mut stats = EpochStats::default();
    grads.resize_candidates(features.len());
    grads.clear();
    for batch in order.chunks(batch_size) {
        let y = model.candidate_matrix(features);
        let views: Vec<_> = batch.iter().map(|&i| data.view(i, cap)).collect();
        let traces = model.forward_batch(&views, features, &y, MaskMode::Rl, false)?;
        let mut dlogits = Vec::with_capacity(batch.len());
        for ((&i, ex), trace) in batch.iter().zip(&views).zip(&traces) {
            let mut rng = stream(seed, streams::RL_SAMPLE, sample_stream_index(epoch, i));
            let (action, _) = rl_sample_action(&trace.logits, &mut rng)?;
            let reward = rl.reward(action, ex.valid);
            let (loss, dl) = reinforce_grad(&trace.logits, action as usize, reward, beta);
            stats.loss += loss;
            stats.reward += reward;
            dlogits.push(dl);
        }
        model.backward_batch(&views, &y, &traces, &dlogits, 0.0, grads);
        apply(model, grads, features, opt.step(opt.lr(), batch.len()), Trainable::FREEZE_SL_HEAD)?;
    }
    stats.n_examples = order.len();
    let n = order.len().max(1) as f64;
    stats.loss /= n;
    stats.reward /= n;
    Ok(stats)
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub epoch: usize,
    pub phase: TrainPhase,
    pub lr: f64,
    pub beta: f64,
    pub train_loss: f64,
    pub val_per_turn: f64,
    pub val_per_dialog: f64,
}

impl LogEntry {
    pub const HEADER: &'static str = "epoch\tphase\tlr\tbeta\ttrain_loss\tval_per_turn\tval_per_dialog";
}

impl fmt::Display for LogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}\t{:.6}\t{:.2}\t{:.2}",
            self.epoch, self.phase, self.lr, self.beta, self.train_loss, self.val_per_turn, self.val_per_dialog
        )
    }
}

impl FromStr for LogEntry {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let f: Vec<&str> = s.split('\t').collect();
        let bad = || Error::Argument(format!("malformed log line `{s}`"));
        if f.len() != 7 {
            return Err(bad());
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
        Ok(LogEntry {
            epoch: f[0].parse().map_err(|_| bad())?,
            phase: f[1].parse()?,
            lr: num(2)?,
            beta: num(3)?,
            train_loss: num(4)?,
            val_per_turn: num(5)?,
            val_per_dialog: num(6)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestModel {
    pub params: ModelParams,
    pub phase: TrainPhase,
    pub epoch: usize,
    pub val: Metrics,
}

/// Everything needed to continue a run after the last finished epoch.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: Model,
    pub phase: TrainPhase,
    /// Next epoch to run within `phase`.
    pub epoch: usize,
    pub best: Option<BestModel>,
    pub log: Vec<LogEntry>,
    pub finished: bool,
}

pub struct Trainer<'a> {
    pub config: TrainConfig,
    data: TrainData<'a>,
    pub state: TrainState,
    grads: Gradients,
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig, data: TrainData<'a>) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(config.seed, streams::INIT, 0);
        let model = Model::init(config.model.clone(), data.vocab_size, &mut rng)?;
        let phase = if config.kind == ModelKind::MaskMemN2N && (config.rl.ablations.rl_only || config.sl_epochs == 0) {
            TrainPhase::Rl
        } else {
            TrainPhase::Sl
        };
        let state = TrainState {
            model,
            phase,
            epoch: 0,
            best: None,
            log: Vec::new(),
            finished: false,
        };
        Trainer::resume(config, data, state)
    }

    pub fn resume(config: TrainConfig, data: TrainData<'a>, state: TrainState) -> Result<Self> {
        config.validate()?;
        if state.model.params.vocab_size() != data.vocab_size || state.model.config != config.model {
            return Err(Error::Compatibility("saved model does not match the configuration".into()));
        }
        let grads = Gradients::new(&config.model, data.vocab_size, data.features.len());
        Ok(Trainer {
            config,
            data,
            state,
            grads,
        })
    }

    /// Runs one epoch. Returns `false` once training is complete.
    pub fn step(&mut self) -> Result<bool> {
        if self.state.finished {
            return Ok(false);
        }
        let cfg = &self.config;
        let st = &mut self.state;
        let d = self.data;
        let t = st.epoch;
        let mut opt = OptimizerState { epoch: t, ..cfg.optimizer };
        if st.phase == TrainPhase::Rl {
            opt.reduction = cfg.rl.reduction;
        }
        let lr = opt.lr();
        let (stats, beta) = match st.phase {
            TrainPhase::Sl => {
                let order = batch_order(d.train.n_examples(), cfg.seed, t as u64);
                let (objective, mask, pw) = match cfg.kind {
                    ModelKind::MemN2N => (Objective::Xent, MaskMode::Off, 0.0),
                    ModelKind::AllAnswers => (Objective::AllAnswers, MaskMode::Off, 0.0),
                    ModelKind::MaskMemN2N => (Objective::Xent, MaskMode::Sl, cfg.rl.pretrain_weight()),
                };
                let s = supervised_epoch(
                    &mut st.model,
                    &mut self.grads,
                    d.train,
                    d.features,
                    &order,
                    cfg.batch_size,
                    &opt,
                    objective,
                    mask,
                    pw,
                )?;
                (s, 0.0)
            }
            TrainPhase::Rl => {
                // Offset so RL shuffles never coincide with SL shuffles.
                let order = batch_order(d.train.n_examples(), cfg.seed, (1 << 32) | t as u64);
                let beta = cfg.rl.beta(t);
                let s = reinforce_epoch(
                    &mut st.model,
                    &mut self.grads,
                    d.train,
                    d.features,
                    &order,
                    cfg.batch_size,
                    &opt,
                    beta,
                    &cfg.rl,
                    cfg.seed,
                    t,
                )?;
                (s, beta)
            }
        };
        let val = evaluate(&st.model, d.val, d.features, cfg.kind.eval_mask())?.metrics;
        st.log.push(LogEntry {
            epoch: t,
            phase: st.phase,
            lr,
            beta,
            train_loss: stats.loss + stats.pretrain_loss,
            val_per_turn: val.per_turn,
            val_per_dialog: val.per_dialog,
        });
        if st.best.as_ref().is_none_or(|b| val.per_turn > b.val.per_turn) {
            st.best = Some(BestModel {
                params: st.model.params.clone(),
                phase: st.phase,
                epoch: t,
                val,
            });
        }
        st.epoch += 1;
        if st.epoch >= cfg.phase_epochs(st.phase) {
            if st.phase == TrainPhase::Sl && cfg.kind == ModelKind::MaskMemN2N {
                // RL starts from the best SL model, which also stays the
                // model to beat.
                if let Some(b) = &st.best {
                    st.model.params = b.params.clone();
                }
                st.phase = TrainPhase::Rl;
                st.epoch = 0;
            } else {
                st.finished = true;
            }
        }
        Ok(true)
    }

    /// Runs to completion, calling `on_epoch` after every epoch.
    pub fn run(&mut self, mut on_epoch: impl FnMut(&TrainState) -> Result<()>) -> Result<()> {
        while self.step()? {
            on_epoch(&self.state)?;
        }
        Ok(())
    }

    /// The selected model.
    pub fn best_model(&self) -> Result<Model> {
        let best = self
            .state
            .best
            .as_ref()
            .ok_or_else(|| Error::Contract("no epoch has finished".into()))?;
        Model::new(self.config.model.clone(), best.params.clone())
    }
}

/// Trains to completion and returns the selected model with its
/// validation metrics and the log.
pub fn run_training(config: TrainConfig, data: TrainData<'_>) -> Result<(Model, Metrics, Vec<LogEntry>)> {
    let mut trainer = Trainer::new(config, data)?;
    trainer.run(|_| Ok(()))?;
    let model = trainer.best_model()?;
    let val = trainer.state.best.as_ref().map(|b| b.val).expect("finished run has a best model");
    Ok((model, val, trainer.state.log))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_line_round_trip() {
        let e = LogEntry {
            epoch: 12,
            phase: TrainPhase::Rl,
            lr: 0.005,
            beta: 5e-6,
            train_loss: 1.25,
            val_per_turn: 91.5,
            val_per_dialog: 22.25,
        };
        let line = e.to_string();
        assert_eq!(line.split('\t').count(), LogEntry::HEADER.split('\t').count());
        assert_eq!(line.parse::<LogEntry>().unwrap(), e);
        assert!("1\tsl\t0.01".parse::<LogEntry>().is_err());
    }

    #[test]
    fn model_names() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert!("memnn".parse::<ModelKind>().is_err());
    }
}
