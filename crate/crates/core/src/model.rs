//! Forward pass: embed both neighborhoods, mutually attend, pool, and
//! produce context-sensitive representations of the pair.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{GapError, Result};
use crate::graph::Graph;
use crate::neighborhood::{neighborhood, NeighborhoodSeq};

/// Node embedding table (one extra, all-zero PAD row) and the bilinear attention matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `(n + 1) x d`; row `n` is the PAD row.
    pub embeddings: Array2<f64>,
    /// `d x d`.
    pub attn: Array2<f64>,
}

pub(crate) fn uniform_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

pub(crate) fn embedding_table(n: usize, d: usize, rng: &mut crate::rng::GapRng) -> Array2<f64> {
    let bound = (6.0 / (n + d) as f64).sqrt();
    let mut emb = uniform_matrix(n + 1, d, bound, rng);
    emb.row_mut(n).fill(0.0);
    emb
}

impl ModelParams {
    /// Glorot-uniform initialization; PAD row zeroed.
    pub fn init(n: usize, d: usize, seed: u64) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(GapError::arg(format!("need n >= 1 and d >= 1, got n={n}, d={d}")));
        }
        let mut rng = crate::rng::seeded(seed);
        let embeddings = embedding_table(n, d, &mut rng);
        let attn = uniform_matrix(d, d, (6.0 / (2 * d) as f64).sqrt(), &mut rng);
        Ok(ModelParams { embeddings, attn })
    }

    pub fn num_nodes(&self) -> usize {
        self.embeddings.nrows() - 1
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn pad(&self) -> usize {
        self.num_nodes()
    }

    pub fn check_finite(&self) -> Result<()> {
        check_finite("embeddings", self.embeddings.view())?;
        check_finite("attention matrix", self.attn.view())
    }
}

pub(crate) fn check_finite(name: &str, m: ArrayView2<f64>) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(GapError::numeric(name, "non-finite entry"))
    }
}

/// Neighbor embeddings of one side after (optional) inverted dropout.
#[derive(Debug, Clone)]
pub struct Gathered {
    pub ids: Vec<usize>,
    pub valid: usize,
    /// `valid x d`, rows in sequence order.
    pub emb: Array2<f64>,
    /// Per-entry dropout scale (`0` or `1/keep`); `None` when dropout was off.
    pub scale: Option<Array2<f64>>,
}

pub(crate) fn gather<R: Rng + ?Sized>(
    embeddings: &Array2<f64>,
    seq: &NeighborhoodSeq,
    keep: f64,
    training: bool,
    rng: &mut R,
) -> Result<Gathered> {
    let n_rows = embeddings.nrows();
    let ids = seq.valid_ids().to_vec();
    if let Some(&bad) = ids.iter().find(|&&i| i + 1 >= n_rows) {
        return Err(GapError::arg(format!("node index {bad} outside the embedding table")));
    }
    let mut emb = embeddings.select(Axis(0), &ids);
    let scale = if training && keep < 1.0 {
        if keep.is_nan() || keep <= 0.0 {
            return Err(GapError::arg(format!("keep probability must be in (0, 1], got {keep}")));
        }
        let inv = 1.0 / keep;
        let mask = Array2::from_shape_fn(emb.raw_dim(), |_| if rng.random::<f64>() < keep { inv } else { 0.0 });
        emb *= &mask;
        Some(mask)
    } else {
        None
    };
    Ok(Gathered {
        ids,
        valid: seq.valid,
        emb,
        scale,
    })
}

/// All intermediates of one pair's forward pass.
///
/// Matrices cover the valid positions only; the PAD-masked cells of the
/// full `L x L` alignment matrix are `-inf` in [`ForwardState::alignment_full`].
#[derive(Debug, Clone)]
pub struct ForwardState {
    pub len: usize,
    pub src: Gathered,
    pub tgt: Gathered,
    /// `src.emb . P`, cached for backprop.
    pub src_proj: Array2<f64>,
    /// `tanh(S^T P T)` on valid x valid cells.
    pub align: Array2<f64>,
    pub raw_s: Array1<f64>,
    pub raw_t: Array1<f64>,
    /// Lowest-index maximizer of each row / column of `align`.
    pub arg_s: Vec<usize>,
    pub arg_t: Vec<usize>,
    pub attn_s: Array1<f64>,
    pub attn_t: Array1<f64>,
    pub r_s: Array1<f64>,
    pub r_t: Array1<f64>,
}

impl ForwardState {
    pub fn alignment_full(&self) -> Array2<f64> {
        let mut full = Array2::from_elem((self.len, self.len), f64::NEG_INFINITY);
        full.slice_mut(s![..self.src.valid, ..self.tgt.valid]).assign(&self.align);
        full
    }

    /// Attention over all `L` positions, zero on PAD.
    pub fn attention_full(&self) -> (Array1<f64>, Array1<f64>) {
        let mut a = Array1::zeros(self.len);
        let mut b = Array1::zeros(self.len);
        a.slice_mut(s![..self.src.valid]).assign(&self.attn_s);
        b.slice_mut(s![..self.tgt.valid]).assign(&self.attn_t);
        (a, b)
    }
}

pub(crate) fn softmax(x: &Array1<f64>) -> Array1<f64> {
    let max = x.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let e = x.mapv(|v| (v - max).exp());
    let z = e.sum();
    e / z
}

fn row_max(m: &Array2<f64>) -> (Array1<f64>, Vec<usize>) {
    let mut vals = Array1::zeros(m.nrows());
    let mut args = Vec::with_capacity(m.nrows());
    for (i, row) in m.outer_iter().enumerate() {
        let mut best = 0;
        for j in 1..row.len() {
            if row[j] > row[best] {
                best = j;
            }
        }
        vals[i] = row[best];
        args.push(best);
    }
    (vals, args)
}

/// Runs the attentive-pooling forward pass for one (source, target) pair.
pub fn forward<R: Rng + ?Sized>(
    params: &ModelParams,
    seq_s: &NeighborhoodSeq,
    seq_t: &NeighborhoodSeq,
    dropout_keep: f64,
    rng: &mut R,
    training: bool,
) -> Result<ForwardState> {
    if seq_s.len() != seq_t.len() {
        return Err(GapError::arg(format!(
            "sequence lengths differ: {} vs {}",
            seq_s.len(),
            seq_t.len()
        )));
    }
    let src = gather(&params.embeddings, seq_s, dropout_keep, training, rng)?;
    let tgt = gather(&params.embeddings, seq_t, dropout_keep, training, rng)?;

    let src_proj = src.emb.dot(&params.attn);
    let align = src_proj.dot(&tgt.emb.t()).mapv(f64::tanh);
    if align.iter().any(|v| !v.is_finite()) {
        return Err(GapError::numeric("alignment matrix", "non-finite entry"));
    }
    let (raw_s, arg_s) = row_max(&align);
    let (raw_t, arg_t) = row_max(&align.t().to_owned());
    let attn_s = softmax(&raw_s);
    let attn_t = softmax(&raw_t);
    let r_s = src.emb.t().dot(&attn_s);
    let r_t = tgt.emb.t().dot(&attn_t);

    Ok(ForwardState {
        len: seq_s.len(),
        src,
        tgt,
        src_proj,
        align,
        raw_s,
        raw_t,
        arg_s,
        arg_t,
        attn_s,
        attn_t,
        r_s,
        r_t,
    })
}

/// Dot-product similarity.
pub fn score(r_s: &[f64], r_t: &[f64]) -> Result<f64> {
    if r_s.len() != r_t.len() {
        return Err(GapError::arg(format!(
            "dimension mismatch: {} vs {}",
            r_s.len(),
            r_t.len()
        )));
    }
    Ok(r_s.iter().zip(r_t).map(|(a, b)| a * b).sum())
}

/// Anything that maps a pair of neighborhood sequences to two representations.
pub trait PairEncoder: Sync {
    fn num_nodes(&self) -> usize;
    fn encode<R: Rng + ?Sized>(
        &self,
        seq_s: &NeighborhoodSeq,
        seq_t: &NeighborhoodSeq,
        rng: &mut R,
    ) -> Result<(Array1<f64>, Array1<f64>)>;
}

impl PairEncoder for ModelParams {
    fn num_nodes(&self) -> usize {
        ModelParams::num_nodes(self)
    }

    fn encode<R: Rng + ?Sized>(
        &self,
        seq_s: &NeighborhoodSeq,
        seq_t: &NeighborhoodSeq,
        rng: &mut R,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        let st = forward(self, seq_s, seq_t, 1.0, rng, false)?;
        Ok((st.r_s, st.r_t))
    }
}

fn check_node<M: PairEncoder + ?Sized>(model: &M, g: &Graph, u: usize) -> Result<()> {
    if g.num_nodes() != model.num_nodes() {
        return Err(GapError::Compat(format!(
            "graph has {} nodes but parameters cover {}",
            g.num_nodes(),
            model.num_nodes()
        )));
    }
    if u >= g.num_nodes() {
        return Err(GapError::arg(format!("node {u} out of range")));
    }
    Ok(())
}

/// Context-sensitive representations of `u` (paired with `v`) and `v` (paired with `u`),
/// built from `g_train` neighborhoods with dropout disabled.
pub fn pair_embed<M: PairEncoder + ?Sized, R: Rng + ?Sized>(
    model: &M,
    g_train: &Graph,
    u: usize,
    v: usize,
    len: usize,
    rng: &mut R,
) -> Result<(Array1<f64>, Array1<f64>)> {
    check_node(model, g_train, u)?;
    check_node(model, g_train, v)?;
    let seq_u = neighborhood(g_train, u, len, rng)?;
    let seq_v = neighborhood(g_train, v, len, rng)?;
    model.encode(&seq_u, &seq_v, rng)
}

/// Mean of `u`'s representation over its incident training edges, in both
/// orientations; a self-pair `(u, u)` when it has none.
pub fn static_embedding<M: PairEncoder + ?Sized, R: Rng + ?Sized>(
    model: &M,
    g_train: &Graph,
    u: usize,
    len: usize,
    rng: &mut R,
) -> Result<Array1<f64>> {
    check_node(model, g_train, u)?;
    let outs = g_train.out_neighbors(u);
    let ins = g_train.in_neighbors(u);
    if outs.is_empty() && ins.is_empty() {
        let seq = neighborhood(g_train, u, len, rng)?;
        let (r, _) = model.encode(&seq, &seq, rng)?;
        return Ok(r);
    }
    let mut acc: Option<Array1<f64>> = None;
    let mut add = |r: Array1<f64>| match acc.as_mut() {
        Some(a) => *a += &r,
        None => acc = Some(r),
    };
    for &v in outs {
        let (r_u, _) = pair_embed(model, g_train, u, v, len, rng)?;
        add(r_u);
    }
    for &w in ins {
        let (_, r_u) = pair_embed(model, g_train, w, u, len, rng)?;
        add(r_u);
    }
    let total = (outs.len() + ins.len()) as f64;
    Ok(acc.expect("at least one incident edge") / total)
}

/// Feed-forward ablation: one tanh layer over the mean neighbor embedding of each side.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub embeddings: Array2<f64>,
    /// `d x d`.
    pub weight: Array2<f64>,
    /// `1 x d`.
    pub bias: Array2<f64>,
}

impl MlpParams {
    pub fn init(n: usize, d: usize, seed: u64) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(GapError::arg(format!("need n >= 1 and d >= 1, got n={n}, d={d}")));
        }
        let mut rng = crate::rng::seeded(seed);
        let embeddings = embedding_table(n, d, &mut rng);
        let weight = uniform_matrix(d, d, (6.0 / (2 * d) as f64).sqrt(), &mut rng);
        Ok(MlpParams {
            embeddings,
            weight,
            bias: Array2::zeros((1, d)),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.embeddings.nrows() - 1
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn check_finite(&self) -> Result<()> {
        check_finite("embeddings", self.embeddings.view())?;
        check_finite("mlp weight", self.weight.view())?;
        check_finite("mlp bias", self.bias.view())
    }
}

#[derive(Debug, Clone)]
pub struct MlpState {
    pub src: Gathered,
    pub tgt: Gathered,
    pub mean_s: Array1<f64>,
    pub mean_t: Array1<f64>,
    pub r_s: Array1<f64>,
    pub r_t: Array1<f64>,
}

pub fn mlp_forward<R: Rng + ?Sized>(
    params: &MlpParams,
    seq_s: &NeighborhoodSeq,
    seq_t: &NeighborhoodSeq,
    dropout_keep: f64,
    rng: &mut R,
    training: bool,
) -> Result<MlpState> {
    if seq_s.len() != seq_t.len() {
        return Err(GapError::arg(format!(
            "sequence lengths differ: {} vs {}",
            seq_s.len(),
            seq_t.len()
        )));
    }
    let src = gather(&params.embeddings, seq_s, dropout_keep, training, rng)?;
    let tgt = gather(&params.embeddings, seq_t, dropout_keep, training, rng)?;
    let mean_s = src.emb.mean_axis(Axis(0)).expect("non-empty");
    let mean_t = tgt.emb.mean_axis(Axis(0)).expect("non-empty");
    let bias = params.bias.row(0);
    let r_s = (params.weight.dot(&mean_s) + bias).mapv(f64::tanh);
    let r_t = (params.weight.dot(&mean_t) + bias).mapv(f64::tanh);
    Ok(MlpState {
        src,
        tgt,
        mean_s,
        mean_t,
        r_s,
        r_t,
    })
}

impl PairEncoder for MlpParams {
    fn num_nodes(&self) -> usize {
        MlpParams::num_nodes(self)
    }

    fn encode<R: Rng + ?Sized>(
        &self,
        seq_s: &NeighborhoodSeq,
        seq_t: &NeighborhoodSeq,
        rng: &mut R,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        let st = mlp_forward(self, seq_s, seq_t, 1.0, rng, false)?;
        Ok((st.r_s, st.r_t))
    }
}
