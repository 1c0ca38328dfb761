//! Plain SGD with step annealing.

use super::network::{slot_matrix, Gradients};
use super::params::ModelParams;
use super::tensor::{axpy, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerState {
    pub epoch: usize,
    pub base_lr: f64,
    pub anneal_ratio: f64,
    pub anneal_period: usize,
    pub reduction: Reduction,
    /// Rescales the batch gradient to this L2 norm when it is larger.
    pub max_grad_norm: Option<f64>,
}

/// How per-example gradients of a batch combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
}

impl Reduction {
    pub fn name(self) -> &'static str {
        match self {
            Reduction::Sum => "sum",
            Reduction::Mean => "mean",
        }
    }
}

impl std::str::FromStr for Reduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Reduction::Sum),
            "mean" => Ok(Reduction::Mean),
            _ => Err(Error::Config(format!("unknown gradient reduction {s:?} (sum or mean)"))),
        }
    }
}

impl Default for OptimizerState {
    fn default() -> Self {
        OptimizerState {
            epoch: 0,
            base_lr: 0.01,
            anneal_ratio: 0.5,
            anneal_period: 25,
            reduction: Reduction::Sum,
            max_grad_norm: Some(40.0),
        }
    }
}

impl OptimizerState {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let k = (epoch / self.anneal_period.max(1)) as i32;
        self.base_lr * self.anneal_ratio.powi(k)
    }

    pub fn lr(&self) -> f64 {
        self.lr_at(self.epoch)
    }

    /// Update for a batch of `n` examples at learning rate `lr`.
    pub fn step(&self, lr: f64, n: usize) -> Step {
        let grad_scale = match self.reduction {
            Reduction::Sum => 1.0,
            Reduction::Mean => 1.0 / n.max(1) as f64,
        };
        Step {
            lr,
            grad_scale,
            max_norm: self.max_grad_norm,
        }
    }
}

/// `p ← p − lr · clip(grad_scale · g)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub lr: f64,
    pub grad_scale: f64,
    pub max_norm: Option<f64>,
}

impl Step {
    pub fn plain(lr: f64) -> Step {
        Step {
            lr,
            grad_scale: 1.0,
            max_norm: None,
        }
    }
}

/// Which parameter groups a step may change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trainable {
    /// `W_a` and `b_sl`.
    pub sl_head: bool,
}

impl Trainable {
    pub const ALL: Trainable = Trainable { sl_head: true };
    pub const FREEZE_SL_HEAD: Trainable = Trainable { sl_head: false };
}

fn check(name: &str, m: &Matrix) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite gradient in {name}")))
    }
}

/// Nothing is written when any gradient entry is non-finite.
pub fn sgd_step(params: &mut ModelParams, grads: &Gradients, step: Step, trainable: Trainable) -> Result<()> {
    let g = grads.dense();
    let n_tables = params.a.len();
    check_finite(grads)?;
    let mut factor = step.grad_scale;
    if let Some(max) = step.max_norm {
        let norm = step.grad_scale * grad_norm_sq(grads, trainable).sqrt();
        if norm > max {
            factor *= max / norm;
        }
    }
    let step = step.lr * factor;
    for slot in 0..grads.n_slots() {
        let rows = grads.rows(slot);
        let src = slot_ref(g, slot, n_tables);
        let dst = slot_matrix(params, slot, n_tables);
        for &r in rows {
            axpy(-step, src.row(r as usize), dst.row_mut(r as usize));
        }
    }
    let dense = [
        (&mut params.t_a, &g.t_a),
        (&mut params.t_c, &g.t_c),
    ];
    for (dst, src) in dense {
        for (d, s) in dst.iter_mut().zip(src) {
            axpy(-step, s.data(), d.data_mut());
        }
    }
    let mut pairs = vec![
        (&mut params.cand, &g.cand),
        (&mut params.w_cand, &g.w_cand),
        (&mut params.w_s, &g.w_s),
        (&mut params.w_r, &g.w_r),
        (&mut params.b_rl, &g.b_rl),
    ];
    if trainable.sl_head {
        pairs.push((&mut params.w_a, &g.w_a));
        pairs.push((&mut params.b_sl, &g.b_sl));
    }
    for (d, s) in pairs {
        axpy(-step, s.data(), d.data_mut());
    }
    Ok(())
}

/// Squared L2 norm of the gradient restricted to what `trainable` lets move.
pub fn grad_norm_sq(grads: &Gradients, trainable: Trainable) -> f64 {
    let g = grads.dense();
    let n_tables = g.a.len();
    let mut total = 0.0;
    for slot in 0..grads.n_slots() {
        let m = slot_ref(g, slot, n_tables);
        for &r in grads.rows(slot) {
            total += m.row(r as usize).iter().map(|x| x * x).sum::<f64>();
        }
    }
    let mut dense = vec![&g.cand, &g.w_cand, &g.w_s, &g.w_r, &g.b_rl];
    if trainable.sl_head {
        dense.extend([&g.w_a, &g.b_sl]);
    }
    dense.extend(g.t_a.iter().chain(&g.t_c));
    total + dense.iter().map(|m| m.frobenius_sq()).sum::<f64>()
}

fn slot_ref(p: &ModelParams, slot: usize, n_tables: usize) -> &Matrix {
    if slot < n_tables {
        &p.a[slot]
    } else if slot < 2 * n_tables {
        &p.c[slot - n_tables]
    } else {
        &p.b
    }
}

fn check_finite(grads: &Gradients) -> Result<()> {
    let g = grads.dense();
    let n_tables = g.a.len();
    for slot in 0..grads.n_slots() {
        let m = slot_ref(g, slot, n_tables);
        for &r in grads.rows(slot) {
            if !m.row(r as usize).iter().all(|x| x.is_finite()) {
                return Err(Error::Numeric("non-finite gradient in an embedding table".into()));
            }
        }
    }
    let rest = [&g.cand, &g.w_cand, &g.w_s, &g.w_a, &g.w_r, &g.b_sl, &g.b_rl];
    let names = ["CAND", "W_cand", "W_s", "W_a", "W_r", "b_sl", "b_rl"];
    for (name, m) in names.iter().zip(rest).chain(
        g.t_a.iter().chain(&g.t_c).map(|m| (&"T", m)),
    ) {
        check(name, m)?;
    }
    Ok(())
}
