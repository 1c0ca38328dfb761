//! Flat `key = value` run configuration.
//!
//! Grammar: one `key = value` pair per line; blank lines and lines starting
//! with `#` are ignored; whitespace around keys and values is trimmed.
//! Unknown keys are errors. Later assignments win, so command-line flags
//! applied after the file override it.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use maskdial::generator::{CorpusConfig, Mode};
use maskdial::mask::{Ablations, RlConfig};
use maskdial::model::{ModelConfig, OptimizerState, Reduction, RlMaskForm, WeightSharing};
use maskdial::train::{ModelKind, TrainConfig};
use maskdial::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,

    pub mode: Mode,
    pub n_dialogs: usize,
    pub subset_size: usize,
    pub update_prob: f64,
    pub out: PathBuf,

    pub data: PathBuf,
    /// `full` or the subset size used by `generate`.
    pub subset: String,
    pub dataset: Option<String>,
    pub run_dir: PathBuf,
    pub resume: bool,
    pub model: ModelKind,
    pub match_type: bool,
    pub dim: usize,
    pub hops: usize,
    pub memory_capacity: usize,
    pub position_encoding: bool,
    pub temporal: bool,
    pub sharing: WeightSharing,
    pub rl_mask_form: RlMaskForm,
    pub init_std: f64,
    pub batch_size: usize,
    pub sl_epochs: usize,
    pub rl_epochs: usize,
    pub lr: f64,
    pub anneal_ratio: f64,
    pub anneal_period: usize,
    pub grad_reduction: Reduction,
    pub max_grad_norm: Option<f64>,
    pub rl_grad_reduction: Reduction,
    pub reward_correct: f64,
    pub reward_incorrect: f64,
    pub entropy_start: f64,
    pub entropy_end: f64,
    pub l2_coeff: f64,
    pub no_entropy: bool,
    pub no_l2_pretrain: bool,
    pub rl_only: bool,

    pub checkpoint: Option<PathBuf>,
    pub splits: Vec<String>,
    pub results: PathBuf,
    pub kb: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let m = &train.model;
        let o = &train.optimizer;
        let rl = &train.rl;
        RunConfig {
            seed: 1,
            mode: Mode::Permuted,
            n_dialogs: 11_000,
            subset_size: maskdial::generator::corpus::SUBSET_SIZE,
            update_prob: CorpusConfig::new(Mode::Permuted).update_prob,
            out: "data".into(),
            data: "data".into(),
            subset: maskdial::generator::corpus::SUBSET_SIZE.to_string(),
            dataset: None,
            run_dir: "runs/default".into(),
            resume: false,
            model: ModelKind::MaskMemN2N,
            match_type: m.match_type,
            dim: m.dim,
            hops: m.hops,
            memory_capacity: m.memory_capacity,
            position_encoding: m.position_encoding,
            temporal: m.temporal,
            sharing: m.sharing,
            rl_mask_form: m.rl_mask_form,
            init_std: m.init_std,
            batch_size: train.batch_size,
            sl_epochs: train.sl_epochs,
            rl_epochs: rl.rl_epochs,
            lr: o.base_lr,
            anneal_ratio: o.anneal_ratio,
            anneal_period: o.anneal_period,
            grad_reduction: o.reduction,
            max_grad_norm: o.max_grad_norm,
            rl_grad_reduction: rl.reduction,
            reward_correct: rl.reward_correct,
            reward_incorrect: rl.reward_incorrect,
            entropy_start: rl.entropy_start,
            entropy_end: rl.entropy_end,
            l2_coeff: rl.l2_coeff,
            no_entropy: false,
            no_l2_pretrain: false,
            rl_only: false,
            checkpoint: None,
            splits: vec!["val".into(), "test".into()],
            results: "results.csv".into(),
            kb: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("bad value `{value}` for `{key}` (true or false)"))),
    }
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn show_opt(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub const KEYS: &'static [&'static str] = &[
        "seed", "mode", "n_dialogs", "subset_size", "update_prob", "out", "data", "subset", "dataset", "run_dir",
        "resume", "model", "match_type", "dim", "hops", "memory_capacity", "position_encoding", "temporal",
        "sharing", "rl_mask_form", "init_std", "batch_size", "sl_epochs", "rl_epochs", "lr", "anneal_ratio",
        "anneal_period", "grad_reduction", "max_grad_norm", "rl_grad_reduction", "reward_correct",
        "reward_incorrect", "entropy_start", "entropy_end", "l2_coeff", "no_entropy", "no_l2_pretrain", "rl_only",
        "checkpoint", "splits", "results", "kb",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = parse(key, v)?,
            "mode" => self.mode = parse(key, v)?,
            "n_dialogs" => self.n_dialogs = parse(key, v)?,
            "subset_size" => self.subset_size = parse(key, v)?,
            "update_prob" => self.update_prob = parse(key, v)?,
            "out" => self.out = v.into(),
            "data" => self.data = v.into(),
            "subset" => self.subset = v.to_string(),
            "dataset" => self.dataset = (!v.is_empty()).then(|| v.to_string()),
            "run_dir" => self.run_dir = v.into(),
            "resume" => self.resume = parse_bool(key, v)?,
            "model" => self.model = parse(key, v)?,
            "match_type" => self.match_type = parse_bool(key, v)?,
            "dim" => self.dim = parse(key, v)?,
            "hops" => self.hops = parse(key, v)?,
            "memory_capacity" => self.memory_capacity = parse(key, v)?,
            "position_encoding" => self.position_encoding = parse_bool(key, v)?,
            "temporal" => self.temporal = parse_bool(key, v)?,
            "sharing" => self.sharing = parse(key, v)?,
            "rl_mask_form" => self.rl_mask_form = parse(key, v)?,
            "init_std" => self.init_std = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "sl_epochs" => self.sl_epochs = parse(key, v)?,
            "rl_epochs" => self.rl_epochs = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "anneal_ratio" => self.anneal_ratio = parse(key, v)?,
            "anneal_period" => self.anneal_period = parse(key, v)?,
            "grad_reduction" => self.grad_reduction = parse(key, v)?,
            "max_grad_norm" => {
                self.max_grad_norm = match v {
                    "" | "none" => None,
                    _ => Some(parse(key, v)?),
                }
            }
            "rl_grad_reduction" => self.rl_grad_reduction = parse(key, v)?,
            "reward_correct" => self.reward_correct = parse(key, v)?,
            "reward_incorrect" => self.reward_incorrect = parse(key, v)?,
            "entropy_start" => self.entropy_start = parse(key, v)?,
            "entropy_end" => self.entropy_end = parse(key, v)?,
            "l2_coeff" => self.l2_coeff = parse(key, v)?,
            "no_entropy" => self.no_entropy = parse_bool(key, v)?,
            "no_l2_pretrain" => self.no_l2_pretrain = parse_bool(key, v)?,
            "rl_only" => self.rl_only = parse_bool(key, v)?,
            "checkpoint" => self.checkpoint = opt_path(v),
            "splits" => {
                self.splits = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
                if self.splits.is_empty() {
                    return Err(Error::Config("`splits` needs at least one split".into()));
                }
            }
            "results" => self.results = v.into(),
            "kb" => self.kb = opt_path(v),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies the assignments of a config file's text.
    pub fn apply_text(&mut self, text: &str, source: &Path) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: String| Error::Parse {
                path: source.to_path_buf(),
                line: i + 1,
                msg,
            };
            let (k, v) = line.split_once('=').ok_or_else(|| bad("expected `key = value`".into()))?;
            self.set(k, v).map_err(|e| bad(e.to_string()))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = RunConfig::default();
        c.apply_text(&text, path)?;
        Ok(c)
    }

    /// Every key with its current value, in [`RunConfig::KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let b = |x: bool| x.to_string();
        vec![
            ("seed", self.seed.to_string()),
            ("mode", self.mode.to_string()),
            ("n_dialogs", self.n_dialogs.to_string()),
            ("subset_size", self.subset_size.to_string()),
            ("update_prob", self.update_prob.to_string()),
            ("out", self.out.display().to_string()),
            ("data", self.data.display().to_string()),
            ("subset", self.subset.clone()),
            ("dataset", self.dataset.clone().unwrap_or_default()),
            ("run_dir", self.run_dir.display().to_string()),
            ("resume", b(self.resume)),
            ("model", self.model.to_string()),
            ("match_type", b(self.match_type)),
            ("dim", self.dim.to_string()),
            ("hops", self.hops.to_string()),
            ("memory_capacity", self.memory_capacity.to_string()),
            ("position_encoding", b(self.position_encoding)),
            ("temporal", b(self.temporal)),
            ("sharing", self.sharing.to_string()),
            ("rl_mask_form", self.rl_mask_form.to_string()),
            ("init_std", self.init_std.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("sl_epochs", self.sl_epochs.to_string()),
            ("rl_epochs", self.rl_epochs.to_string()),
            ("lr", self.lr.to_string()),
            ("anneal_ratio", self.anneal_ratio.to_string()),
            ("anneal_period", self.anneal_period.to_string()),
            ("grad_reduction", self.grad_reduction.name().to_string()),
            ("max_grad_norm", self.max_grad_norm.map_or("none".into(), |x| x.to_string())),
            ("rl_grad_reduction", self.rl_grad_reduction.name().to_string()),
            ("reward_correct", self.reward_correct.to_string()),
            ("reward_incorrect", self.reward_incorrect.to_string()),
            ("entropy_start", self.entropy_start.to_string()),
            ("entropy_end", self.entropy_end.to_string()),
            ("l2_coeff", self.l2_coeff.to_string()),
            ("no_entropy", b(self.no_entropy)),
            ("no_l2_pretrain", b(self.no_l2_pretrain)),
            ("rl_only", b(self.rl_only)),
            ("checkpoint", show_opt(&self.checkpoint)),
            ("splits", self.splits.join(",")),
            ("results", self.results.display().to_string()),
            ("kb", show_opt(&self.kb)),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            dim: self.dim,
            hops: self.hops,
            memory_capacity: self.memory_capacity,
            position_encoding: self.position_encoding,
            temporal: self.temporal,
            match_type: self.match_type,
            sharing: self.sharing,
            rl_mask_form: self.rl_mask_form,
            init_std: self.init_std,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            kind: self.model,
            model: self.model_config(),
            sl_epochs: self.sl_epochs,
            batch_size: self.batch_size,
            optimizer: OptimizerState {
                epoch: 0,
                base_lr: self.lr,
                anneal_ratio: self.anneal_ratio,
                anneal_period: self.anneal_period,
                reduction: self.grad_reduction,
                max_grad_norm: self.max_grad_norm,
            },
            rl: RlConfig {
                reward_correct: self.reward_correct,
                reward_incorrect: self.reward_incorrect,
                entropy_start: self.entropy_start,
                entropy_end: self.entropy_end,
                rl_epochs: self.rl_epochs,
                l2_coeff: self.l2_coeff,
                reduction: self.rl_grad_reduction,
                ablations: Ablations {
                    no_entropy: self.no_entropy,
                    no_l2_pretrain: self.no_l2_pretrain,
                    rl_only: self.rl_only,
                },
            },
            seed: self.seed,
        }
    }

    pub fn corpus_config(&self) -> CorpusConfig {
        CorpusConfig {
            update_prob: self.update_prob,
            ..CorpusConfig::new(self.mode)
        }
    }

    /// Label used in result rows, e.g. `data-1000`.
    pub fn dataset_label(&self) -> String {
        self.dataset.clone().unwrap_or_else(|| {
            let base = self
                .data
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "data".into());
            format!("{base}-{}", self.subset)
        })
    }

    /// Model column label: the model name plus any ablations.
    pub fn model_label(&self) -> String {
        let mut label = self.model.name().to_string();
        for (on, name) in [
            (self.rl_only, "rl_only"),
            (self.no_l2_pretrain, "no_l2_pretrain"),
            (self.no_entropy, "no_entropy"),
        ] {
            if on {
                label.push('/');
                label.push_str(name);
            }
        }
        label
    }
}
