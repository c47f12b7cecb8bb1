//! Margin-ranking training with hand-derived gradients.
//!
//! Each positive edge `(s, t)` is paired with one sampled negative target `t-`,
//! and the loss `max(0, 1 - r_s . r_t + r_s' . r_t-)` is backpropagated
//! through the dot products, the softmax, max-pool routing, `tanh` and the
//! bilinear alignment form. Embedding gradients are kept sparse per row.

use std::collections::{BTreeMap, HashSet};
use std::time::Instant;

use log::info;
use ndarray::{Array1, Array2, Axis};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{GapError, Result};
use crate::graph::{sample_negative, sample_nonedges, EdgeSplit, Graph};
use crate::metrics::auc;
use crate::model::{
    forward, mlp_forward, pair_embed, score, ForwardState, Gathered, MlpParams, MlpState, ModelParams,
    PairEncoder,
};
use crate::neighborhood::{neighborhood, NeighborhoodSeq};
use crate::rng::{stream, GapRng};

pub fn hinge_loss(pos: f64, neg: f64) -> f64 {
    (1.0 - pos + neg).max(0.0)
}

/// Sparse embedding-row gradients plus dense gradients for every other block.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub rows: BTreeMap<usize, Array1<f64>>,
    pub dense: Vec<Array2<f64>>,
}

impl GradientSet {
    pub fn zeros(dense_shapes: &[(usize, usize)]) -> Self {
        GradientSet {
            rows: BTreeMap::new(),
            dense: dense_shapes.iter().map(|&s| Array2::zeros(s)).collect(),
        }
    }

    fn row_mut(&mut self, id: usize, dim: usize) -> &mut Array1<f64> {
        self.rows.entry(id).or_insert_with(|| Array1::zeros(dim))
    }

    /// Adds the rows of `grad` (one per gathered position) to the table rows
    /// they were read from, undoing dropout scaling.
    fn scatter(&mut self, side: &Gathered, mut grad: Array2<f64>) {
        if let Some(scale) = &side.scale {
            grad *= scale;
        }
        let dim = grad.ncols();
        for (pos, &id) in side.ids.iter().enumerate() {
            *self.row_mut(id, dim) += &grad.row(pos);
        }
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (&id, g) in &other.rows {
            match self.rows.get_mut(&id) {
                Some(r) => *r += g,
                None => {
                    self.rows.insert(id, g.clone());
                }
            }
        }
        for (a, b) in self.dense.iter_mut().zip(&other.dense) {
            *a += b;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.rows.values().all(|r| r.iter().all(|&x| x == 0.0)) && self.dense.iter().all(|m| m.iter().all(|&x| x == 0.0))
    }

    pub fn check_finite(&self) -> Result<()> {
        for (id, r) in &self.rows {
            if r.iter().any(|x| !x.is_finite()) {
                return Err(GapError::numeric(format!("embedding gradient row {id}"), "non-finite entry"));
            }
        }
        for (k, m) in self.dense.iter().enumerate() {
            if m.iter().any(|x| !x.is_finite()) {
                return Err(GapError::numeric(format!("dense gradient block {k}"), "non-finite entry"));
            }
        }
        Ok(())
    }
}

/// A model the trainer can optimize: an embedding table plus dense blocks.
pub trait Trainable: PairEncoder + Clone + Send + Sync {
    type State: Send;

    fn embeddings(&self) -> &Array2<f64>;
    fn embeddings_mut(&mut self) -> &mut Array2<f64>;
    fn dense_blocks(&self) -> Vec<&Array2<f64>>;
    fn dense_blocks_mut(&mut self) -> Vec<&mut Array2<f64>>;
    fn dense_names(&self) -> Vec<&'static str>;

    fn forward_pair(
        &self,
        seq_s: &NeighborhoodSeq,
        seq_t: &NeighborhoodSeq,
        keep: f64,
        rng: &mut GapRng,
        training: bool,
    ) -> Result<Self::State>;

    fn representations(state: &Self::State) -> (&Array1<f64>, &Array1<f64>);

    /// Accumulates gradients of a scalar with the given partials w.r.t. `r_s` and `r_t`.
    fn accumulate(&self, state: &Self::State, g_rs: &Array1<f64>, g_rt: &Array1<f64>, grads: &mut GradientSet);

    fn zero_gradients(&self) -> GradientSet {
        let shapes: Vec<(usize, usize)> = self.dense_blocks().iter().map(|m| m.dim()).collect();
        GradientSet::zeros(&shapes)
    }

    fn num_rows(&self) -> usize {
        self.embeddings().nrows()
    }

    fn pad_row(&self) -> usize {
        self.num_rows() - 1
    }

    fn check_params(&self) -> Result<()> {
        if self.embeddings().iter().any(|x| !x.is_finite()) {
            return Err(GapError::numeric("embeddings", "non-finite entry"));
        }
        for (m, name) in self.dense_blocks().into_iter().zip(self.dense_names()) {
            if m.iter().any(|x| !x.is_finite()) {
                return Err(GapError::numeric(name, "non-finite entry"));
            }
        }
        Ok(())
    }
}

fn softmax_backward(attn: &Array1<f64>, g_attn: &Array1<f64>) -> Array1<f64> {
    let inner = attn.dot(g_attn);
    attn * &(g_attn - inner)
}

/// Backprop of one attentive-pooling forward pass, given `dL/dr_s` and `dL/dr_t`.
pub fn backward_state(params: &ModelParams, st: &ForwardState, g_rs: &Array1<f64>, g_rt: &Array1<f64>, grads: &mut GradientSet) {
    let (vs, vt) = (st.src.valid, st.tgt.valid);
    let s_emb = &st.src.emb;
    let t_emb = &st.tgt.emb;

    // r = E^T a
    let mut d_s = outer(&st.attn_s, g_rs);
    let mut d_t = outer(&st.attn_t, g_rt);
    let g_raw_s = softmax_backward(&st.attn_s, &s_emb.dot(g_rs));
    let g_raw_t = softmax_backward(&st.attn_t, &t_emb.dot(g_rt));

    // max-pool routing to the lowest-index maximizer, then tanh'
    let mut g_m = Array2::<f64>::zeros((vs, vt));
    for i in 0..vs {
        g_m[[i, st.arg_s[i]]] += g_raw_s[i];
    }
    for j in 0..vt {
        g_m[[st.arg_t[j], j]] += g_raw_t[j];
    }
    g_m.zip_mut_with(&st.align, |g, &a| *g *= 1.0 - a * a);

    // M = S P T^T
    let t_proj = t_emb.dot(&params.attn.t());
    d_s += &g_m.dot(&t_proj);
    d_t += &g_m.t().dot(&st.src_proj);
    let d_p = s_emb.t().dot(&g_m.dot(t_emb));
    grads.dense[0] += &d_p;

    grads.scatter(&st.src, d_s);
    grads.scatter(&st.tgt, d_t);
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let col = a.view().insert_axis(Axis(1));
    let row = b.view().insert_axis(Axis(0));
    col.dot(&row)
}

fn hinge_partials<M: Trainable>(
    model: &M,
    pos: &M::State,
    neg: &M::State,
    loss: f64,
) -> Result<GradientSet> {
    let mut grads = model.zero_gradients();
    if loss <= 0.0 {
        return Ok(grads);
    }
    let (ps, pt) = M::representations(pos);
    let (ns, nt) = M::representations(neg);
    // L = 1 - ps.pt + ns.nt
    model.accumulate(pos, &(-pt), &(-ps), &mut grads);
    model.accumulate(neg, nt, ns, &mut grads);
    grads.check_finite()?;
    Ok(grads)
}

/// Gradient of the hinge loss for one positive/negative pair of forward states.
pub fn backward(params: &ModelParams, state_pos: &ForwardState, state_neg: &ForwardState, loss: f64) -> Result<GradientSet> {
    hinge_partials(params, state_pos, state_neg, loss)
}

impl Trainable for ModelParams {
    type State = ForwardState;

    fn embeddings(&self) -> &Array2<f64> {
        &self.embeddings
    }

    fn embeddings_mut(&mut self) -> &mut Array2<f64> {
        &mut self.embeddings
    }

    fn dense_blocks(&self) -> Vec<&Array2<f64>> {
        vec![&self.attn]
    }

    fn dense_blocks_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![&mut self.attn]
    }

    fn dense_names(&self) -> Vec<&'static str> {
        vec!["attention matrix"]
    }

    fn forward_pair(
        &self,
        seq_s: &NeighborhoodSeq,
        seq_t: &NeighborhoodSeq,
        keep: f64,
        rng: &mut GapRng,
        training: bool,
    ) -> Result<ForwardState> {
        forward(self, seq_s, seq_t, keep, rng, training)
    }

    fn representations(state: &ForwardState) -> (&Array1<f64>, &Array1<f64>) {
        (&state.r_s, &state.r_t)
    }

    fn accumulate(&self, state: &ForwardState, g_rs: &Array1<f64>, g_rt: &Array1<f64>, grads: &mut GradientSet) {
        backward_state(self, state, g_rs, g_rt, grads)
    }
}

impl Trainable for MlpParams {
    type State = MlpState;

    fn embeddings(&self) -> &Array2<f64> {
        &self.embeddings
    }

    fn embeddings_mut(&mut self) -> &mut Array2<f64> {
        &mut self.embeddings
    }

    fn dense_blocks(&self) -> Vec<&Array2<f64>> {
        vec![&self.weight, &self.bias]
    }

    fn dense_blocks_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn dense_names(&self) -> Vec<&'static str> {
        vec!["mlp weight", "mlp bias"]
    }

    fn forward_pair(
        &self,
        seq_s: &NeighborhoodSeq,
        seq_t: &NeighborhoodSeq,
        keep: f64,
        rng: &mut GapRng,
        training: bool,
    ) -> Result<MlpState> {
        mlp_forward(self, seq_s, seq_t, keep, rng, training)
    }

    fn representations(state: &MlpState) -> (&Array1<f64>, &Array1<f64>) {
        (&state.r_s, &state.r_t)
    }

    fn accumulate(&self, state: &MlpState, g_rs: &Array1<f64>, g_rt: &Array1<f64>, grads: &mut GradientSet) {
        for (side, mean, r, g_r) in [
            (&state.src, &state.mean_s, &state.r_s, g_rs),
            (&state.tgt, &state.mean_t, &state.r_t, g_rt),
        ] {
            let g_z = g_r * &r.mapv(|x| 1.0 - x * x);
            grads.dense[0] += &outer(&g_z, mean);
            grads.dense[1].row_mut(0).scaled_add(1.0, &g_z);
            let g_mean = self.weight.t().dot(&g_z) / side.valid as f64;
            let rows = Array2::from_shape_fn((side.valid, g_mean.len()), |(_, k)| g_mean[k]);
            grads.scatter(side, rows);
        }
    }
}

/// Which update rule to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl std::str::FromStr for OptimizerKind {
    type Err = GapError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(GapError::arg(format!("unknown optimizer {other:?}"))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        })
    }
}

/// Adaptive-moment state. Embedding rows are updated lazily: only rows present
/// in a gradient set have their moments and values touched.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m_rows: Array2<f64>,
    v_rows: Array2<f64>,
    m_dense: Vec<Array2<f64>>,
    v_dense: Vec<Array2<f64>>,
}

impl AdamState {
    pub fn new<M: Trainable>(model: &M) -> Self {
        let dims: Vec<_> = model.dense_blocks().iter().map(|m| m.dim()).collect();
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m_rows: Array2::zeros(model.embeddings().dim()),
            v_rows: Array2::zeros(model.embeddings().dim()),
            m_dense: dims.iter().map(|&d| Array2::zeros(d)).collect(),
            v_dense: dims.iter().map(|&d| Array2::zeros(d)).collect(),
        }
    }
}

fn adam_update<'a>(
    values: impl Iterator<Item = &'a mut f64>,
    grads: impl Iterator<Item = &'a f64>,
    m: impl Iterator<Item = &'a mut f64>,
    v: impl Iterator<Item = &'a mut f64>,
    (lr, b1, b2, eps, c1, c2): (f64, f64, f64, f64, f64, f64),
) {
    for (((x, &g), m), v) in values.zip(grads).zip(m).zip(v) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *x -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

fn pin_pad_row<M: Trainable>(model: &mut M) {
    let pad = model.pad_row();
    model.embeddings_mut().row_mut(pad).fill(0.0);
}

/// One bias-corrected adaptive-moment step.
pub fn adam_step<M: Trainable>(model: &mut M, grads: &GradientSet, state: &mut AdamState, lr: f64) -> Result<()> {
    grads.check_finite()?;
    state.step += 1;
    let t = state.step as i32;
    let hyper = (
        lr,
        state.beta1,
        state.beta2,
        state.eps,
        1.0 - state.beta1.powi(t),
        1.0 - state.beta2.powi(t),
    );
    let pad = model.pad_row();
    for (&id, g) in &grads.rows {
        if id == pad {
            continue;
        }
        let mut row = model.embeddings_mut().row_mut(id);
        let mut m = state.m_rows.row_mut(id);
        let mut v = state.v_rows.row_mut(id);
        adam_update(row.iter_mut(), g.iter(), m.iter_mut(), v.iter_mut(), hyper);
    }
    for (k, block) in model.dense_blocks_mut().into_iter().enumerate() {
        adam_update(
            block.iter_mut(),
            grads.dense[k].iter(),
            state.m_dense[k].iter_mut(),
            state.v_dense[k].iter_mut(),
            hyper,
        );
    }
    pin_pad_row(model);
    model.check_params()
}

pub fn sgd_step<M: Trainable>(model: &mut M, grads: &GradientSet, lr: f64) -> Result<()> {
    grads.check_finite()?;
    let pad = model.pad_row();
    for (&id, g) in &grads.rows {
        if id != pad {
            model.embeddings_mut().row_mut(id).scaled_add(-lr, g);
        }
    }
    for (k, block) in model.dense_blocks_mut().into_iter().enumerate() {
        block.scaled_add(-lr, &grads.dense[k]);
    }
    pin_pad_row(model);
    model.check_params()
}

#[derive(Debug, Clone)]
pub enum OptimizerState {
    Adam(Box<AdamState>),
    Sgd,
}

impl OptimizerState {
    pub fn new<M: Trainable>(kind: OptimizerKind, model: &M) -> Self {
        match kind {
            OptimizerKind::Adam => OptimizerState::Adam(Box::new(AdamState::new(model))),
            OptimizerKind::Sgd => OptimizerState::Sgd,
        }
    }

    pub fn step<M: Trainable>(&mut self, model: &mut M, grads: &GradientSet, lr: f64) -> Result<()> {
        match self {
            OptimizerState::Adam(st) => adam_step(model, grads, st, lr),
            OptimizerState::Sgd => sgd_step(model, grads, lr),
        }
    }
}

/// Optimization hyper-parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Neighborhood sequence length.
    pub neighborhood: usize,
    pub dim: usize,
    /// Probability of keeping an embedding entry under dropout.
    pub dropout_keep: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            neighborhood: 100,
            dim: 200,
            dropout_keep: 0.5,
            learning_rate: 1e-4,
            batch_size: 64,
            max_epochs: 200,
            patience: 10,
            seed: 1,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.neighborhood == 0 {
            return Err(GapError::arg("neighborhood length must be at least 1"));
        }
        if self.dim == 0 {
            return Err(GapError::arg("dimension must be at least 1"));
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return Err(GapError::arg(format!(
                "keep probability must be in (0, 1], got {}",
                self.dropout_keep
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(GapError::arg(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(GapError::arg("batch size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    /// `NaN` when there is no validation set.
    pub valid_auc: f64,
    pub elapsed_ms: u128,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    pub params: M,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

// stream tags keep per-purpose random streams apart
const STREAM_EPOCH: u64 = 1;
const STREAM_EXAMPLE: u64 = 2;
const STREAM_VALID: u64 = 3;
const STREAM_VALID_NEG: u64 = 4;

/// Loss and gradient of one training edge with a freshly sampled negative target.
pub fn example_gradient<M: Trainable>(
    model: &M,
    g_train: &Graph,
    (s, t): (usize, usize),
    cfg: &TrainConfig,
    rng: &mut GapRng,
) -> Result<(f64, GradientSet)> {
    let t_neg = sample_negative(g_train, s, rng)?;
    let seq_s = neighborhood(g_train, s, cfg.neighborhood, rng)?;
    let seq_t = neighborhood(g_train, t, cfg.neighborhood, rng)?;
    let seq_n = neighborhood(g_train, t_neg, cfg.neighborhood, rng)?;
    let pos = model.forward_pair(&seq_s, &seq_t, cfg.dropout_keep, rng, true)?;
    let neg = model.forward_pair(&seq_s, &seq_n, cfg.dropout_keep, rng, true)?;
    let loss = pair_loss::<M>(&pos, &neg);
    let grads = hinge_partials(model, &pos, &neg, loss)?;
    Ok((loss, grads))
}

fn pair_loss<M: Trainable>(pos: &M::State, neg: &M::State) -> f64 {
    let (ps, pt) = M::representations(pos);
    let (ns, nt) = M::representations(neg);
    hinge_loss(ps.dot(pt), ns.dot(nt))
}

/// Sums example gradients of a batch; examples run in parallel, the
/// reduction runs in example order.
pub fn batch_gradient<M: Trainable>(
    model: &M,
    g_train: &Graph,
    batch: &[(usize, (usize, usize))],
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<(f64, GradientSet)> {
    let parts: Vec<Result<(f64, GradientSet)>> = batch
        .par_iter()
        .map(|&(idx, edge)| {
            let mut rng = stream(cfg.seed, &[STREAM_EXAMPLE, epoch as u64, idx as u64]);
            example_gradient(model, g_train, edge, cfg, &mut rng)
        })
        .collect();
    let mut total = model.zero_gradients();
    let mut loss = 0.0;
    for part in parts {
        let (l, g) = part?;
        if !l.is_finite() {
            return Err(GapError::numeric("loss", format!("non-finite loss in epoch {epoch}")));
        }
        loss += l;
        if l > 0.0 {
            total.add_assign(&g);
        }
    }
    Ok((loss, total))
}

/// Fixed validation task: positive pairs plus an equal number of non-edges of the full graph.
pub struct Validation {
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<(usize, usize)>,
}

/// All stored orientations of every edge in the split.
pub fn full_edge_set(split: &EdgeSplit) -> HashSet<(usize, usize)> {
    let directed = split.train_graph.is_directed();
    split
        .train_edges
        .iter()
        .chain(&split.valid_edges)
        .chain(&split.test_edges)
        .flat_map(|&(u, v)| {
            let rev = if directed { None } else { Some((v, u)) };
            std::iter::once((u, v)).chain(rev)
        })
        .collect()
}

impl Validation {
    pub fn new(split: &EdgeSplit, seed: u64) -> Result<Self> {
        let exclude = full_edge_set(split);
        let mut rng = stream(seed, &[STREAM_VALID_NEG]);
        let negatives = if split.valid_edges.is_empty() {
            Vec::new()
        } else {
            sample_nonedges(&split.train_graph, split.valid_edges.len(), &exclude, &mut rng)?
        };
        Ok(Validation {
            positives: split.valid_edges.clone(),
            negatives,
        })
    }

    pub fn auc<M: PairEncoder>(&self, model: &M, g_train: &Graph, len: usize, seed: u64) -> Result<f64> {
        if self.positives.is_empty() {
            return Ok(f64::NAN);
        }
        let score_all = |pairs: &[(usize, usize)], tag: u64| -> Result<Vec<f64>> {
            pairs
                .par_iter()
                .enumerate()
                .map(|(i, &(u, v))| {
                    let mut rng = stream(seed, &[STREAM_VALID, tag, i as u64]);
                    let (ru, rv) = pair_embed(model, g_train, u, v, len, &mut rng)?;
                    score(ru.as_slice().unwrap(), rv.as_slice().unwrap())
                })
                .collect()
        };
        auc(&score_all(&self.positives, 0)?, &score_all(&self.negatives, 1)?)
    }
}

/// Trains an attentive-pooling model from a seeded initialization.
pub fn train(split: &EdgeSplit, cfg: &TrainConfig) -> Result<TrainOutcome<ModelParams>> {
    let init = ModelParams::init(split.train_graph.num_nodes(), cfg.dim, cfg.seed)?;
    train_model(init, split, cfg, |_| {})
}

/// Trains the feed-forward ablation from a seeded initialization.
pub fn train_mlp(split: &EdgeSplit, cfg: &TrainConfig) -> Result<TrainOutcome<MlpParams>> {
    let init = MlpParams::init(split.train_graph.num_nodes(), cfg.dim, cfg.seed)?;
    train_model(init, split, cfg, |_| {})
}

/// Epoch loop with per-epoch shuffling, one negative per positive, and early
/// stopping on validation AUC. Returns the best-validation parameters.
pub fn train_model<M: Trainable>(
    init: M,
    split: &EdgeSplit,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<M>> {
    cfg.validate()?;
    let g_train = &split.train_graph;
    if init.num_nodes() != g_train.num_nodes() {
        return Err(GapError::Compat(format!(
            "model covers {} nodes, training graph has {}",
            init.num_nodes(),
            g_train.num_nodes()
        )));
    }
    let mut model = init;
    let mut history = Vec::new();
    if cfg.max_epochs == 0 {
        return Ok(TrainOutcome {
            params: model,
            history,
            best_epoch: None,
        });
    }
    let validation = Validation::new(split, cfg.seed)?;
    let mut opt = OptimizerState::new(cfg.optimizer, &model);
    let pairs: Vec<(usize, usize)> = g_train.edges().to_vec();
    if pairs.is_empty() {
        return Err(GapError::arg("training graph has no edges"));
    }
    let started = Instant::now();
    let mut best: Option<(f64, usize, M)> = None;
    let mut since_best = 0usize;

    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<(usize, (usize, usize))> = pairs.iter().copied().enumerate().collect();
        order.shuffle(&mut stream(cfg.seed, &[STREAM_EPOCH, epoch as u64]));
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grads) = batch_gradient(&model, g_train, batch, cfg, epoch)?;
            epoch_loss += loss;
            if !grads.is_zero() {
                opt.step(&mut model, &grads, cfg.learning_rate).map_err(|e| match e {
                    GapError::Numeric { tensor, msg } => GapError::Numeric {
                        tensor,
                        msg: format!("{msg} (epoch {epoch})"),
                    },
                    other => other,
                })?;
            }
        }
        let mean_loss = epoch_loss / pairs.len() as f64;
        if !mean_loss.is_finite() {
            return Err(GapError::numeric("loss", format!("non-finite mean loss in epoch {epoch}")));
        }
        let valid_auc = validation.auc(&model, g_train, cfg.neighborhood, cfg.seed)?;
        let record = EpochRecord {
            epoch,
            mean_loss,
            valid_auc,
            elapsed_ms: started.elapsed().as_millis(),
        };
        info!("{}", format_log_line(&record));
        on_epoch(&record);
        history.push(record);

        if valid_auc.is_nan() {
            continue;
        }
        match &best {
            Some((b, _, _)) if valid_auc <= *b => {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
            _ => {
                best = Some((valid_auc, epoch, model.clone()));
                since_best = 0;
            }
        }
    }
    Ok(match best {
        Some((_, epoch, params)) => TrainOutcome {
            params,
            history,
            best_epoch: Some(epoch),
        },
        None => TrainOutcome {
            best_epoch: history.last().map(|r| r.epoch),
            params: model,
            history,
        },
    })
}

/// Tab-separated "epoch mean_loss valid_auc elapsed_ms".
pub fn format_log_line(r: &EpochRecord) -> String {
    format!("{}\t{}\t{}\t{}", r.epoch, r.mean_loss, r.valid_auc, r.elapsed_ms)
}

/// Machine-readable history: header plus "epoch mean_loss valid_auc" rows.
pub fn history_tsv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch\tmean_loss\tvalid_auc\n");
    for r in history {
        out.push_str(&format!("{}\t{}\t{}\n", r.epoch, r.mean_loss, r.valid_auc));
    }
    out
}

/// A fixed positive/negative pair of neighborhood sequences for gradient checking.
#[derive(Debug, Clone)]
pub struct GradInstance {
    pub seq_s: NeighborhoodSeq,
    pub seq_t: NeighborhoodSeq,
    pub seq_neg: NeighborhoodSeq,
}

impl GradInstance {
    pub fn loss<M: Trainable>(&self, model: &M) -> Result<f64> {
        let mut rng = crate::rng::seeded(0);
        let pos = model.forward_pair(&self.seq_s, &self.seq_t, 1.0, &mut rng, false)?;
        let neg = model.forward_pair(&self.seq_s, &self.seq_neg, 1.0, &mut rng, false)?;
        Ok(pair_loss::<M>(&pos, &neg))
    }

    pub fn analytic<M: Trainable>(&self, model: &M) -> Result<(f64, GradientSet)> {
        let mut rng = crate::rng::seeded(0);
        let pos = model.forward_pair(&self.seq_s, &self.seq_t, 1.0, &mut rng, false)?;
        let neg = model.forward_pair(&self.seq_s, &self.seq_neg, 1.0, &mut rng, false)?;
        let loss = pair_loss::<M>(&pos, &neg);
        Ok((loss, hinge_partials(model, &pos, &neg, loss)?))
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub loss: f64,
    /// Max relative error per parameter block, embeddings first.
    pub blocks: Vec<(String, f64)>,
    pub max_rel_error: f64,
    /// Largest gradient magnitude seen on the PAD row (analytic or numeric).
    pub pad_grad_max: f64,
    pub passed: bool,
}

pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;
// |a - n| is measured relative to max(|a|, |n|, REL_FLOOR)
const REL_FLOOR: f64 = 1e-6;

fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

fn central_difference<M: Trainable>(model: &mut M, inst: &GradInstance, get: impl Fn(&mut M) -> &mut f64) -> Result<f64> {
    let orig = *get(model);
    *get(model) = orig + FD_STEP;
    let plus = inst.loss(model)?;
    *get(model) = orig - FD_STEP;
    let minus = inst.loss(model)?;
    *get(model) = orig;
    Ok((plus - minus) / (2.0 * FD_STEP))
}

/// Compares `analytic` against central differences over every parameter.
pub fn compare_gradients<M: Trainable>(model: &M, inst: &GradInstance, analytic: &GradientSet) -> Result<GradCheckReport> {
    let mut probe = model.clone();
    let loss = inst.loss(model)?;
    let (rows, dim) = model.embeddings().dim();
    let pad = model.pad_row();
    let mut emb_err = 0.0f64;
    let mut pad_max = 0.0f64;
    for r in 0..rows {
        for c in 0..dim {
            let num = central_difference(&mut probe, inst, |m| &mut m.embeddings_mut()[[r, c]])?;
            let ana = analytic.rows.get(&r).map_or(0.0, |g| g[c]);
            if r == pad {
                pad_max = pad_max.max(num.abs()).max(ana.abs());
            }
            emb_err = emb_err.max(rel_error(ana, num));
        }
    }
    let mut blocks = vec![("embeddings".to_string(), emb_err)];
    let names = model.dense_names();
    for (k, name) in names.into_iter().enumerate() {
        let (nr, nc) = model.dense_blocks()[k].dim();
        let mut err = 0.0f64;
        for i in 0..nr {
            for j in 0..nc {
                let num = central_difference(&mut probe, inst, |m| &mut m.dense_blocks_mut().swap_remove(k)[[i, j]])?;
                err = err.max(rel_error(analytic.dense[k][[i, j]], num));
            }
        }
        blocks.push((name.to_string(), err));
    }
    let max_rel_error = blocks.iter().map(|b| b.1).fold(0.0, f64::max);
    Ok(GradCheckReport {
        loss,
        blocks,
        max_rel_error,
        pad_grad_max: pad_max,
        passed: max_rel_error < GRAD_CHECK_TOLERANCE && pad_max == 0.0,
    })
}

/// Size of the random instance used by [`grad_check`].
#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub nodes: usize,
    pub dim: usize,
    pub neighborhood: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            nodes: 8,
            dim: 6,
            neighborhood: 4,
        }
    }
}

/// Random tiny graph, a training edge, a negative target and fixed neighborhoods.
pub fn random_instance(cfg: &GradCheckConfig, seed: u64) -> Result<(Graph, GradInstance)> {
    if cfg.nodes < 3 {
        return Err(GapError::arg("gradient check needs at least 3 nodes"));
    }
    let mut rng = crate::rng::seeded(seed);
    for _attempt in 0..1000 {
        let mut text = String::new();
        for u in 0..cfg.nodes {
            for v in 0..cfg.nodes {
                if u != v && rng.random::<f64>() < 0.35 {
                    text.push_str(&format!("{u} {v}\n"));
                }
            }
        }
        let Ok(g) = crate::graph::parse_edge_list(&text, true) else {
            continue;
        };
        let candidates: Vec<(usize, usize)> = g
            .edges()
            .iter()
            .copied()
            .filter(|&(s, _)| g.out_neighbors(s).len() + 1 < g.num_nodes())
            .collect();
        let Some(&(s, t)) = candidates.choose(&mut rng) else {
            continue;
        };
        let t_neg = sample_negative(&g, s, &mut rng)?;
        let inst = GradInstance {
            seq_s: neighborhood(&g, s, cfg.neighborhood, &mut rng)?,
            seq_t: neighborhood(&g, t, cfg.neighborhood, &mut rng)?,
            seq_neg: neighborhood(&g, t_neg, cfg.neighborhood, &mut rng)?,
        };
        return Ok((g, inst));
    }
    Err(GapError::arg("could not build a gradient-check instance"))
}

/// Finite-difference check of the attentive-pooling gradients on a random tiny instance.
pub fn grad_check(cfg: &GradCheckConfig, seed: u64) -> Result<GradCheckReport> {
    let (g, inst) = random_instance(cfg, seed)?;
    let params = ModelParams::init(g.num_nodes(), cfg.dim, seed)?;
    let (_, analytic) = inst.analytic(&params)?;
    compare_gradients(&params, &inst, &analytic)
}

/// Same check for the feed-forward ablation.
pub fn grad_check_mlp(cfg: &GradCheckConfig, seed: u64) -> Result<GradCheckReport> {
    let (g, inst) = random_instance(cfg, seed)?;
    let mut params = MlpParams::init(g.num_nodes(), cfg.dim, seed)?;
    let mut rng = crate::rng::seeded(seed ^ 0xB1A5);
    params.bias.mapv_inplace(|_| rng.random_range(-0.1..0.1));
    let (_, analytic) = inst.analytic(&params)?;
    compare_gradients(&params, &inst, &analytic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{parse_edge_list, split_edges};
    use crate::rng::seeded;

    #[test]
    fn hinge_examples() {
        assert_eq!(hinge_loss(2.0, 0.5), 0.0);
        assert!((hinge_loss(0.2, 0.3) - 1.1).abs() < 1e-15);
        assert_eq!(hinge_loss(0.7, 0.7), 1.0);
    }

    #[test]
    fn zero_loss_gives_zero_gradients() {
        let (_, inst) = random_instance(&GradCheckConfig::default(), 3).unwrap();
        let p = ModelParams::init(8, 6, 3).unwrap();
        let mut rng = seeded(0);
        let pos = forward(&p, &inst.seq_s, &inst.seq_t, 1.0, &mut rng, false).unwrap();
        let neg = forward(&p, &inst.seq_s, &inst.seq_neg, 1.0, &mut rng, false).unwrap();
        let g = backward(&p, &pos, &neg, 0.0).unwrap();
        assert!(g.rows.is_empty());
        assert!(g.is_zero());
    }

    #[test]
    fn default_grad_check_passes() {
        let report = grad_check(&GradCheckConfig::default(), 11).unwrap();
        assert!(report.loss > 0.0);
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn mlp_grad_check_passes() {
        for seed in 0..5 {
            let report = grad_check_mlp(&GradCheckConfig::default(), seed).unwrap();
            assert!(report.passed, "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn corrupted_gradient_fails() {
        let cfg = GradCheckConfig::default();
        let (g, inst) = random_instance(&cfg, 5).unwrap();
        let p = ModelParams::init(g.num_nodes(), cfg.dim, 5).unwrap();
        let (_, mut grads) = inst.analytic(&p).unwrap();
        grads.dense[0][[0, 0]] += 0.01;
        assert!(!compare_gradients(&p, &inst, &grads).unwrap().passed);
    }

    fn scalar_model(value: f64) -> MlpParams {
        // one node, d = 1: the embedding row is the only trainable scalar we use
        let mut p = MlpParams::init(1, 1, 0).unwrap();
        p.embeddings[[0, 0]] = value;
        p
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut p = ModelParams::init(4, 3, 1).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(&p);
        let g = p.zero_gradients();
        adam_step(&mut p, &g, &mut st, 0.1).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn adam_first_step_is_sign_of_gradient() {
        for g0 in [0.37, -2.5, 1e-3] {
            let mut p = scalar_model(1.0);
            let mut st = AdamState::new(&p);
            let mut g = p.zero_gradients();
            g.rows.insert(0, Array1::from_elem(1, g0));
            let lr = 0.01;
            adam_step(&mut p, &g, &mut st, lr).unwrap();
            let delta = p.embeddings[[0, 0]] - 1.0;
            assert!((delta + lr * g0.signum()).abs() < 1e-6, "delta {delta}");
        }
    }

    #[test]
    fn pad_row_stays_zero() {
        let mut p = ModelParams::init(4, 3, 1).unwrap();
        let mut st = AdamState::new(&p);
        let mut g = p.zero_gradients();
        g.rows.insert(4, Array1::from_elem(3, 1.0));
        g.rows.insert(1, Array1::from_elem(3, 1.0));
        adam_step(&mut p, &g, &mut st, 0.1).unwrap();
        sgd_step(&mut p, &g, 0.1).unwrap();
        assert!(p.embeddings.row(4).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn nonfinite_gradient_aborts() {
        let mut p = ModelParams::init(4, 3, 1).unwrap();
        let mut st = AdamState::new(&p);
        let mut g = p.zero_gradients();
        g.dense[0][[1, 1]] = f64::INFINITY;
        assert!(matches!(adam_step(&mut p, &g, &mut st, 0.1), Err(GapError::Numeric { .. })));
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let g = parse_edge_list("0 1\n1 2\n2 3\n3 0\n", false).unwrap();
        let split = split_edges(&g, 1.0, 0.0, 1).unwrap();
        let cfg = TrainConfig {
            max_epochs: 0,
            dim: 4,
            ..TrainConfig::default()
        };
        let out = train(&split, &cfg).unwrap();
        assert!(out.history.is_empty());
        assert_eq!(out.params, ModelParams::init(4, 4, cfg.seed).unwrap());
    }

    #[test]
    fn config_validation() {
        let bad = [
            TrainConfig { learning_rate: 0.0, ..TrainConfig::default() },
            TrainConfig { dropout_keep: 0.0, ..TrainConfig::default() },
            TrainConfig { dropout_keep: 1.5, ..TrainConfig::default() },
            TrainConfig { neighborhood: 0, ..TrainConfig::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
        assert!(TrainConfig::default().validate().is_ok());
    }
}
