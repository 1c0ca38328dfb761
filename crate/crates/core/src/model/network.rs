//! Forward and backward passes of the memory network.

use rand::Rng;

use super::loss::softmax;
use super::params::{ModelConfig, ModelParams, RlMaskForm};
use super::tensor::{add_weighted, axpy, dot, gemm, Matrix, View};
use crate::data::{CandidateFeatures, ExampleView, PositionEncoder, PAD, TYPE_BASE};
use crate::error::{Error, Result};
use crate::generator::Relation;
use crate::mask::heads::{apply_mask, rl_mask, sl_mask};

/// Which mask sits between the encoder state and the scorer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMode {
    /// Plain memory network.
    Off,
    /// Mask fixed to all ones.
    Ones,
    /// Answer-conditioned mask; needs the gold answer.
    Sl,
    /// State-only mask.
    Rl,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MaskTrace {
    Off,
    Ones,
    Sl {
        mask: Vec<f64>,
        answer: Vec<f64>,
        gold: u32,
        /// RL-head mask, recorded when it is being pre-trained.
        rl_mask: Option<Vec<f64>>,
    },
    Rl {
        mask: Vec<f64>,
    },
}

impl MaskTrace {
    pub fn mask(&self) -> Option<&[f64]> {
        match self {
            MaskTrace::Sl { mask, .. } | MaskTrace::Rl { mask } => Some(mask),
            _ => None,
        }
    }
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Memories actually read; zero means a padding sentinel was used.
    pub n_memories: usize,
    /// Per story table: input and output memory vectors, one row each.
    pub mem_in: Vec<Matrix>,
    pub mem_out: Vec<Matrix>,
    /// `u_1 .. u_{hops+1}`.
    pub u: Vec<Vec<f64>>,
    /// Attention per hop.
    pub p: Vec<Vec<f64>>,
    pub state: Vec<f64>,
    pub mask: MaskTrace,
    pub masked_state: Vec<f64>,
    /// `W_candᵀ s′`.
    pub projected: Vec<f64>,
    pub logits: Vec<f64>,
    /// Fired `(candidate, type)` pairs, deduplicated.
    pub matches: Vec<(u32, Relation)>,
}

/// `p_i = softmax_i(u · a_i)` over the rows of `memories`.
pub fn attention(u: &[f64], memories: &Matrix) -> Result<Vec<f64>> {
    let scores: Vec<f64> = (0..memories.rows()).map(|i| dot(u, memories.row(i))).collect();
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("non-finite attention score".into()));
    }
    Ok(softmax(&scores))
}

/// `s′ᵀ W_cand Φ(y_i)` for every candidate row of `features`, plus the
/// type-token embeddings of fired match types. Returns `W_candᵀ s′` and the
/// logits.
pub fn score_candidates(
    state: &[f64],
    w_cand: &Matrix,
    features: &Matrix,
    type_rows: Option<(&Matrix, &[(u32, Relation)])>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if features.rows() == 0 {
        return Err(Error::Argument("empty candidate set".into()));
    }
    let mut projected = vec![0.0; state.len()];
    w_cand.matvec_t_add(state, &mut projected);
    let mut logits = vec![0.0; features.rows()];
    gemm(1.0, View::of(features), View::new(&projected, projected.len(), 1), 0.0, &mut logits);
    if let Some((emb, matches)) = type_rows {
        add_type_scores(emb, matches, &projected, &mut logits);
    }
    Ok((projected, logits))
}

fn add_type_scores(emb: &Matrix, matches: &[(u32, Relation)], v: &[f64], logits: &mut [f64]) {
    for &(c, rel) in matches {
        logits[c as usize] += dot(emb.row(TYPE_BASE as usize + rel.index()), v);
    }
}

/// Gradient accumulator with row tracking for the large embedding tables.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: ModelParams,
    /// Gradient with respect to the candidate feature rows.
    pub candidate_rows: Matrix,
    touched: Vec<Vec<bool>>,
    touched_rows: Vec<Vec<u32>>,
}

// Indices into `touched`: A tables, then C tables, then B.
impl Gradients {
    pub fn new(config: &ModelConfig, vocab_size: usize, n_candidates: usize) -> Self {
        let n = 2 * config.n_tables() + 1;
        Gradients {
            params: ModelParams::zeros(config, vocab_size),
            candidate_rows: Matrix::zeros(n_candidates, config.dim),
            touched: vec![vec![false; vocab_size]; n],
            touched_rows: vec![Vec::new(); n],
        }
    }

    #[inline]
    fn touch(&mut self, slot: usize, row: u32) {
        if !self.touched[slot][row as usize] {
            self.touched[slot][row as usize] = true;
            self.touched_rows[slot].push(row);
        }
    }

    /// Rows of embedding slot `slot` with possibly nonzero gradient.
    pub(crate) fn rows(&self, slot: usize) -> &[u32] {
        &self.touched_rows[slot]
    }

    pub(crate) fn n_slots(&self) -> usize {
        self.touched.len()
    }

    /// Resets to zero, visiting only rows that were written.
    pub fn clear(&mut self) {
        let n_tables = self.params.a.len();
        for slot in 0..self.touched.len() {
            let rows = std::mem::take(&mut self.touched_rows[slot]);
            let m = slot_matrix(&mut self.params, slot, n_tables);
            for &r in &rows {
                m.row_mut(r as usize).fill(0.0);
                self.touched[slot][r as usize] = false;
            }
        }
        let p = &mut self.params;
        for m in p.t_a.iter_mut().chain(p.t_c.iter_mut()) {
            m.fill(0.0);
        }
        for m in [&mut p.cand, &mut p.w_cand, &mut p.w_s, &mut p.w_a, &mut p.w_r, &mut p.b_sl, &mut p.b_rl] {
            m.fill(0.0);
        }
        self.candidate_rows.fill(0.0);
    }

    pub fn resize_candidates(&mut self, n_candidates: usize) {
        if self.candidate_rows.rows() != n_candidates {
            self.candidate_rows = Matrix::zeros(n_candidates, self.candidate_rows.cols());
        }
    }

    fn scatter(&mut self, slot: usize, encoder: &PositionEncoder, tokens: &[u32], grad: &[f64]) {
        let d = grad.len();
        let w = encoder.weights(tokens.len());
        let n_tables = self.params.a.len();
        for (j, &tok) in tokens.iter().enumerate() {
            if tok != PAD {
                self.touch(slot, tok);
                let m = slot_matrix(&mut self.params, slot, n_tables);
                add_weighted(&w[j * d..(j + 1) * d], grad, m.row_mut(tok as usize));
            }
        }
    }

    /// Dense copy of the parameter gradient, for checks and tests.
    pub fn dense(&self) -> &ModelParams {
        &self.params
    }
}

pub(crate) fn slot_matrix(p: &mut ModelParams, slot: usize, n_tables: usize) -> &mut Matrix {
    if slot < n_tables {
        &mut p.a[slot]
    } else if slot < 2 * n_tables {
        &mut p.c[slot - n_tables]
    } else {
        &mut p.b
    }
}

/// A memory network with optional answer masks.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
    encoder: PositionEncoder,
}

impl Model {
    pub fn new(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        let expect = ModelParams::zeros(&config, params.vocab_size());
        for ((name, a), (_, b)) in params.named().iter().zip(expect.named().iter()) {
            if a.shape() != b.shape() {
                return Err(Error::Compatibility(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        if params.named().len() != expect.named().len() {
            return Err(Error::Compatibility("parameter count mismatch".into()));
        }
        let encoder = PositionEncoder::new(config.dim, !config.position_encoding);
        Ok(Model {
            config,
            params,
            encoder,
        })
    }

    pub fn init<R: Rng + ?Sized>(config: ModelConfig, vocab_size: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::init(&config, vocab_size, rng);
        Model::new(config, params)
    }

    pub fn encoder(&self) -> &PositionEncoder {
        &self.encoder
    }

    fn embed_into(&self, table: &Matrix, tokens: &[u32], out: &mut [f64]) {
        let w = self.encoder.weights(tokens.len());
        let d = self.config.dim;
        for (j, &tok) in tokens.iter().enumerate() {
            if tok != PAD {
                add_weighted(&w[j * d..(j + 1) * d], table.row(tok as usize), out);
            }
        }
    }

    fn embed_backward(&self, tokens: &[u32], grad: &[f64], table_grad: &mut Matrix) {
        let w = self.encoder.weights(tokens.len());
        let d = self.config.dim;
        for (j, &tok) in tokens.iter().enumerate() {
            if tok != PAD {
                add_weighted(&w[j * d..(j + 1) * d], grad, table_grad.row_mut(tok as usize));
            }
        }
    }

    /// Position-encoded candidate features, one row per candidate.
    pub fn candidate_matrix(&self, features: &CandidateFeatures) -> Matrix {
        let mut m = Matrix::zeros(features.len(), self.config.dim);
        for (c, tokens) in features.tokens.iter().enumerate() {
            self.embed_into(&self.params.cand, tokens, m.row_mut(c));
        }
        m
    }

    /// Pushes the candidate-row gradient into the candidate embedding.
    pub fn candidate_backward(&self, features: &CandidateFeatures, grads: &mut Gradients) {
        let Gradients {
            params,
            candidate_rows,
            ..
        } = grads;
        for (c, tokens) in features.tokens.iter().enumerate() {
            let g = candidate_rows.row(c);
            if g.iter().any(|&x| x != 0.0) {
                self.embed_backward(tokens, g, &mut params.cand);
            }
        }
    }

    /// Runs the hops and returns `s = u_{hops+1}` with the trace so far.
    pub fn encode_state(&self, ex: &ExampleView<'_>) -> Result<ForwardTrace> {
        let d = self.config.dim;
        let n = ex.memories.len();
        let rows = n.max(1);
        let n_tables = self.config.n_tables();
        let mut mem_in = vec![Matrix::zeros(rows, d); n_tables];
        let mut mem_out = vec![Matrix::zeros(rows, d); n_tables];
        for t in 0..n_tables {
            for (i, sentence) in ex.memories.iter().enumerate() {
                self.embed_into(&self.params.a[t], sentence, mem_in[t].row_mut(i));
                self.embed_into(&self.params.c[t], sentence, mem_out[t].row_mut(i));
                if self.config.temporal {
                    let age = n - 1 - i;
                    axpy(1.0, self.params.t_a[t].row(age), mem_in[t].row_mut(i));
                    axpy(1.0, self.params.t_c[t].row(age), mem_out[t].row_mut(i));
                }
            }
        }
        let mut u0 = vec![0.0; d];
        self.embed_into(&self.params.b, ex.query, &mut u0);
        let mut u = vec![u0];
        let mut p = Vec::with_capacity(self.config.hops);
        for k in 0..self.config.hops {
            let t = self.config.table(k);
            let pk = attention(&u[k], &mem_in[t])?;
            let mut next = u[k].clone();
            for (i, &pi) in pk.iter().enumerate() {
                axpy(pi, mem_out[t].row(i), &mut next);
            }
            p.push(pk);
            u.push(next);
        }
        let state = u[self.config.hops].clone();
        Ok(ForwardTrace {
            n_memories: n,
            mem_in,
            mem_out,
            u,
            p,
            state,
            mask: MaskTrace::Off,
            masked_state: Vec::new(),
            projected: Vec::new(),
            logits: Vec::new(),
            matches: Vec::new(),
        })
    }

    /// Fired match types for an example, or nothing when disabled.
    pub fn matches(&self, features: &CandidateFeatures, ex: &ExampleView<'_>) -> Vec<(u32, Relation)> {
        if !self.config.match_type {
            return Vec::new();
        }
        let mut m: Vec<(u32, Relation)> = features.matches(ex.context).collect();
        m.sort_unstable();
        m.dedup();
        m
    }

    /// Encoder, mask and projection: everything before the candidate scores.
    pub fn forward_state(
        &self,
        ex: &ExampleView<'_>,
        features: &CandidateFeatures,
        candidates: &Matrix,
        mask: MaskMode,
        pretrain: bool,
    ) -> Result<ForwardTrace> {
        let mut trace = self.encode_state(ex)?;
        let s = &trace.state;
        let (mask_trace, masked) = match mask {
            MaskMode::Off => (MaskTrace::Off, s.clone()),
            MaskMode::Ones => (MaskTrace::Ones, s.clone()),
            MaskMode::Sl => {
                let answer = candidates.row(ex.gold as usize).to_vec();
                let m = sl_mask(s, &answer, &self.params);
                let masked = apply_mask(&m, s);
                let rl = pretrain.then(|| rl_mask(s, &self.params, self.config.rl_mask_form));
                (
                    MaskTrace::Sl {
                        mask: m,
                        answer,
                        gold: ex.gold,
                        rl_mask: rl,
                    },
                    masked,
                )
            }
            MaskMode::Rl => {
                let m = rl_mask(s, &self.params, self.config.rl_mask_form);
                let masked = apply_mask(&m, s);
                (MaskTrace::Rl { mask: m }, masked)
            }
        };
        let mut projected = vec![0.0; self.config.dim];
        self.params.w_cand.matvec_t_add(&masked, &mut projected);
        trace.matches = self.matches(features, ex);
        trace.mask = mask_trace;
        trace.masked_state = masked;
        trace.projected = projected;
        Ok(trace)
    }

    /// Full forward pass. `candidates` must come from [`Model::candidate_matrix`]
    /// with the current parameters.
    pub fn forward(
        &self,
        ex: &ExampleView<'_>,
        features: &CandidateFeatures,
        candidates: &Matrix,
        mask: MaskMode,
        pretrain: bool,
    ) -> Result<ForwardTrace> {
        let mut traces = self.forward_batch(std::slice::from_ref(ex), features, candidates, mask, pretrain)?;
        Ok(traces.pop().expect("one trace per example"))
    }

    /// [`Model::forward`] for several examples sharing one candidate matrix.
    pub fn forward_batch(
        &self,
        batch: &[ExampleView<'_>],
        features: &CandidateFeatures,
        candidates: &Matrix,
        mask: MaskMode,
        pretrain: bool,
    ) -> Result<Vec<ForwardTrace>> {
        if candidates.rows() == 0 {
            return Err(Error::Argument("empty candidate set".into()));
        }
        let d = self.config.dim;
        let n_cand = candidates.rows();
        let mut traces = batch
            .iter()
            .map(|ex| self.forward_state(ex, features, candidates, mask, pretrain))
            .collect::<Result<Vec<_>>>()?;
        let v: Vec<f64> = traces.iter().flat_map(|t| t.projected.iter().copied()).collect();
        let mut logits = vec![0.0; traces.len() * n_cand];
        gemm(1.0, View::new(&v, traces.len(), d), View::of(candidates).t(), 0.0, &mut logits);
        for (t, l) in traces.iter_mut().zip(logits.chunks_exact(n_cand)) {
            t.logits = l.to_vec();
            add_type_scores(&self.params.cand, &t.matches, &t.projected, &mut t.logits);
        }
        Ok(traces)
    }

    /// Accumulates gradients for one example given `dloss/dlogits`.
    ///
    /// `pretrain_weight` scales the RL-mask matching term when the trace
    /// recorded one. That term only reaches `W_r` and `b_rl`: the SL mask,
    /// the state and `W_s` are treated as constants there.
    pub fn backward(
        &self,
        ex: &ExampleView<'_>,
        candidates: &Matrix,
        trace: &ForwardTrace,
        dlogits: &[f64],
        pretrain_weight: f64,
        grads: &mut Gradients,
    ) {
        self.backward_batch(
            std::slice::from_ref(ex),
            candidates,
            std::slice::from_ref(trace),
            &[dlogits.to_vec()],
            pretrain_weight,
            grads,
        );
    }

    /// [`Model::backward`] for a batch; `dlogits[b]` belongs to `traces[b]`.
    pub fn backward_batch(
        &self,
        batch: &[ExampleView<'_>],
        candidates: &Matrix,
        traces: &[ForwardTrace],
        dlogits: &[Vec<f64>],
        pretrain_weight: f64,
        grads: &mut Gradients,
    ) {
        let d = self.config.dim;
        let (b, n_cand) = (traces.len(), candidates.rows());
        let g: Vec<f64> = dlogits.iter().flat_map(|dl| dl.iter().copied()).collect();
        let v: Vec<f64> = traces.iter().flat_map(|t| t.projected.iter().copied()).collect();
        let g = View::new(&g, b, n_cand);
        // dY += Gᵀ V and dV = G Y, one pass each over the candidate matrix.
        gemm(1.0, g.t(), View::new(&v, b, d), 1.0, grads.candidate_rows.data_mut());
        let mut dv = vec![0.0; b * d];
        gemm(1.0, g, View::of(candidates), 0.0, &mut dv);
        for (((ex, t), dl), dv) in batch.iter().zip(traces).zip(dlogits).zip(dv.chunks_exact(d)) {
            self.backward_projected(ex, t, dl, dv.to_vec(), pretrain_weight, grads);
        }
    }

    /// Everything after the candidate-feature term of `dv = ∂loss/∂(W_candᵀ s′)`.
    fn backward_projected(
        &self,
        ex: &ExampleView<'_>,
        trace: &ForwardTrace,
        dlogits: &[f64],
        mut dv: Vec<f64>,
        pretrain_weight: f64,
        grads: &mut Gradients,
    ) {
        let d = self.config.dim;
        let p = &self.params;
        let v = &trace.projected;
        for &(c, rel) in &trace.matches {
            let gc = dlogits[c as usize];
            let row = TYPE_BASE as usize + rel.index();
            axpy(gc, p.cand.row(row), &mut dv);
            axpy(gc, v, grads.params.cand.row_mut(row));
        }
        grads.params.w_cand.add_outer(1.0, &trace.masked_state, &dv);
        let mut dmasked = vec![0.0; d];
        p.w_cand.matvec(&dv, &mut dmasked);

        // Mask.
        let s = &trace.state;
        let mut ds = vec![0.0; d];
        let g = &mut grads.params;
        match &trace.mask {
            MaskTrace::Off | MaskTrace::Ones => ds.copy_from_slice(&dmasked),
            MaskTrace::Sl {
                mask,
                answer,
                gold,
                rl_mask: rl,
            } => {
                let dz = mask_pre_grad(mask, s, &dmasked, &mut ds);
                g.w_s.add_outer(1.0, &dz, s);
                g.w_a.add_outer(1.0, &dz, answer);
                axpy(1.0, &dz, g.b_sl.row_mut(0));
                p.w_s.matvec_t_add(&dz, &mut ds);
                p.w_a.matvec_t_add(&dz, grads.candidate_rows.row_mut(*gold as usize));
                if let Some(m_rl) = rl {
                    let dz_rl: Vec<f64> = m_rl
                        .iter()
                        .zip(mask)
                        .map(|(&r, &m)| 2.0 * pretrain_weight * (r - m) * r * (1.0 - r))
                        .collect();
                    g.w_r.add_outer(1.0, &dz_rl, s);
                    axpy(1.0, &dz_rl, g.b_rl.row_mut(0));
                }
            }
            MaskTrace::Rl { mask } => {
                let dz = mask_pre_grad(mask, s, &dmasked, &mut ds);
                g.w_r.add_outer(1.0, &dz, s);
                axpy(1.0, &dz, g.b_rl.row_mut(0));
                p.w_r.matvec_t_add(&dz, &mut ds);
                if self.config.rl_mask_form == RlMaskForm::SharedSum {
                    g.w_s.add_outer(1.0, &dz, s);
                    p.w_s.matvec_t_add(&dz, &mut ds);
                }
            }
        }

        // Hops, last to first.
        let n = trace.n_memories;
        let n_tables = self.config.n_tables();
        let rows = trace.mem_in[0].rows();
        let mut dmem_in = vec![Matrix::zeros(rows, d); n_tables];
        let mut dmem_out = vec![Matrix::zeros(rows, d); n_tables];
        let mut du = ds;
        for k in (0..self.config.hops).rev() {
            let t = self.config.table(k);
            let pk = &trace.p[k];
            let dp: Vec<f64> = (0..rows).map(|i| dot(trace.mem_out[t].row(i), &du)).collect();
            let mean: f64 = pk.iter().zip(&dp).map(|(a, b)| a * b).sum();
            let mut du_prev = du.clone();
            for i in 0..rows {
                axpy(pk[i], &du, dmem_out[t].row_mut(i));
                let de = pk[i] * (dp[i] - mean);
                if de != 0.0 {
                    axpy(de, trace.mem_in[t].row(i), &mut du_prev);
                    axpy(de, &trace.u[k], dmem_in[t].row_mut(i));
                }
            }
            du = du_prev;
        }

        // Scatter into embeddings. The empty-memory sentinel has no source.
        for t in 0..n_tables {
            for (i, sentence) in ex.memories.iter().enumerate().take(n) {
                let age = n - 1 - i;
                let gi = dmem_in[t].row(i);
                let go = dmem_out[t].row(i);
                if self.config.temporal {
                    axpy(1.0, gi, grads.params.t_a[t].row_mut(age));
                    axpy(1.0, go, grads.params.t_c[t].row_mut(age));
                }
                grads.scatter(t, &self.encoder, sentence, gi);
                grads.scatter(n_tables + t, &self.encoder, sentence, go);
            }
        }
        grads.scatter(2 * n_tables, &self.encoder, ex.query, &du);
    }

    /// Logits under the given mask, without keeping the trace.
    pub fn logits(
        &self,
        ex: &ExampleView<'_>,
        features: &CandidateFeatures,
        candidates: &Matrix,
        mask: MaskMode,
    ) -> Result<Vec<f64>> {
        Ok(self.forward(ex, features, candidates, mask, false)?.logits)
    }

    /// Highest-scoring candidate; ties go to the lowest id.
    pub fn predict(
        &self,
        ex: &ExampleView<'_>,
        features: &CandidateFeatures,
        candidates: &Matrix,
        mask: MaskMode,
    ) -> Result<u32> {
        Ok(argmax(&self.logits(ex, features, candidates, mask)?) as u32)
    }
}

/// `dz` for `s′ = σ(z) ⊙ s`, also adding the direct path `m ⊙ ds′` to `ds`.
fn mask_pre_grad(mask: &[f64], s: &[f64], dmasked: &[f64], ds: &mut [f64]) -> Vec<f64> {
    let mut dz = vec![0.0; mask.len()];
    for j in 0..mask.len() {
        ds[j] += mask[j] * dmasked[j];
        dz[j] = s[j] * dmasked[j] * mask[j] * (1.0 - mask[j]);
    }
    dz
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
