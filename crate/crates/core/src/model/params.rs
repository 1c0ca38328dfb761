use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::tensor::Matrix;
use crate::data::PAD;
use crate::error::{Error, Result};

/// How the story embeddings are shared across hops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightSharing {
    /// One A, one C, one T_A and one T_C used by every hop.
    Shared,
    /// Distinct tables per hop.
    PerHop,
}

/// Form of the state-only (RL phase) mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RlMaskForm {
    /// `σ(W_s s + W_r s + b_rl)` with `W_s` shared with the SL head.
    SharedSum,
    /// `σ(W_r s + b_rl)`: the same family of maps, with nothing shared.
    Collapsed,
}

macro_rules! name_enum {
    ($ty:ty { $($var:path => $s:literal),+ }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($var => $s),+ })
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok($var),)+
                    _ => Err(Error::Argument(format!("unknown value `{s}`"))),
                }
            }
        }
    };
}

name_enum!(WeightSharing { WeightSharing::Shared => "shared", WeightSharing::PerHop => "per_hop" });
name_enum!(RlMaskForm { RlMaskForm::SharedSum => "shared_sum", RlMaskForm::Collapsed => "collapsed" });

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub dim: usize,
    pub hops: usize,
    pub memory_capacity: usize,
    pub position_encoding: bool,
    pub temporal: bool,
    pub match_type: bool,
    pub sharing: WeightSharing,
    pub rl_mask_form: RlMaskForm,
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 20,
            hops: 3,
            memory_capacity: crate::data::DEFAULT_MEMORY_CAPACITY,
            position_encoding: true,
            temporal: true,
            match_type: false,
            sharing: WeightSharing::Shared,
            rl_mask_form: RlMaskForm::SharedSum,
            init_std: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.hops == 0 || self.memory_capacity == 0 {
            return Err(Error::Config("dim, hops and memory_capacity must be positive".into()));
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            return Err(Error::Config("init_std must be finite and nonnegative".into()));
        }
        Ok(())
    }

    pub fn n_tables(&self) -> usize {
        match self.sharing {
            WeightSharing::Shared => 1,
            WeightSharing::PerHop => self.hops,
        }
    }

    /// Story table used at hop `k`.
    #[inline]
    pub fn table(&self, hop: usize) -> usize {
        match self.sharing {
            WeightSharing::Shared => 0,
            WeightSharing::PerHop => hop,
        }
    }
}

/// Every trainable matrix. Also used, zeroed, as a gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Story input embeddings, one per table.
    pub a: Vec<Matrix>,
    /// Story output embeddings, one per table.
    pub c: Vec<Matrix>,
    /// Query embedding.
    pub b: Matrix,
    pub t_a: Vec<Matrix>,
    pub t_c: Vec<Matrix>,
    /// Candidate word embedding.
    pub cand: Matrix,
    /// Bilinear scoring map between the state and candidate features.
    pub w_cand: Matrix,
    pub w_s: Matrix,
    pub w_a: Matrix,
    pub w_r: Matrix,
    pub b_sl: Matrix,
    pub b_rl: Matrix,
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig, vocab_size: usize) -> Self {
        let d = config.dim;
        let n = config.n_tables();
        let cap = config.memory_capacity;
        ModelParams {
            a: vec![Matrix::zeros(vocab_size, d); n],
            c: vec![Matrix::zeros(vocab_size, d); n],
            b: Matrix::zeros(vocab_size, d),
            t_a: vec![Matrix::zeros(cap, d); n],
            t_c: vec![Matrix::zeros(cap, d); n],
            cand: Matrix::zeros(vocab_size, d),
            w_cand: Matrix::zeros(d, d),
            w_s: Matrix::zeros(d, d),
            w_a: Matrix::zeros(d, d),
            w_r: Matrix::zeros(d, d),
            b_sl: Matrix::zeros(1, d),
            b_rl: Matrix::zeros(1, d),
        }
    }

    /// Gaussian weights, zero biases, zero padding rows.
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, vocab_size: usize, rng: &mut R) -> Self {
        let mut p = ModelParams::zeros(config, vocab_size);
        let std = config.init_std;
        for (name, m) in p.named_mut() {
            if name.starts_with("b_") {
                continue;
            }
            *m = Matrix::gaussian(m.rows(), m.cols(), std, rng);
        }
        p.clear_padding();
        p
    }

    pub fn clear_padding(&mut self) {
        let pad = PAD as usize;
        for m in self.embeddings_mut() {
            if m.rows() > pad {
                m.row_mut(pad).fill(0.0);
            }
        }
    }

    fn embeddings_mut(&mut self) -> impl Iterator<Item = &mut Matrix> {
        self.a
            .iter_mut()
            .chain(self.c.iter_mut())
            .chain(std::iter::once(&mut self.b))
            .chain(std::iter::once(&mut self.cand))
    }

    pub fn dim(&self) -> usize {
        self.b.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.b.rows()
    }

    fn indexed_name(base: &str, i: usize, n: usize) -> String {
        if n == 1 {
            base.to_string()
        } else {
            format!("{base}.{i}")
        }
    }

    /// Stable names, in checkpoint order.
    pub fn named(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        let n = self.a.len();
        for (base, list) in [("A", &self.a), ("C", &self.c), ("T_A", &self.t_a), ("T_C", &self.t_c)] {
            for (i, m) in list.iter().enumerate() {
                out.push((Self::indexed_name(base, i, n), m));
            }
        }
        for (name, m) in [
            ("B", &self.b),
            ("CAND", &self.cand),
            ("W_cand", &self.w_cand),
            ("W_s", &self.w_s),
            ("W_a", &self.w_a),
            ("W_r", &self.w_r),
            ("b_sl", &self.b_sl),
            ("b_rl", &self.b_rl),
        ] {
            out.push((name.to_string(), m));
        }
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = Vec::new();
        let n = self.a.len();
        for (base, list) in [
            ("A", &mut self.a),
            ("C", &mut self.c),
            ("T_A", &mut self.t_a),
            ("T_C", &mut self.t_c),
        ] {
            for (i, m) in list.iter_mut().enumerate() {
                out.push((Self::indexed_name(base, i, n), m));
            }
        }
        for (name, m) in [
            ("B", &mut self.b),
            ("CAND", &mut self.cand),
            ("W_cand", &mut self.w_cand),
            ("W_s", &mut self.w_s),
            ("W_a", &mut self.w_a),
            ("W_r", &mut self.w_r),
            ("b_sl", &mut self.b_sl),
            ("b_rl", &mut self.b_rl),
        ] {
            out.push((name.to_string(), m));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.named().iter().all(|(_, m)| m.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.named().iter().map(|(_, m)| m.frobenius_sq()).sum()
    }

    /// The SL-phase mask head: `W_a` and `b_sl`.
    pub fn sl_head(&self) -> (&Matrix, &Matrix) {
        (&self.w_a, &self.b_sl)
    }
}
