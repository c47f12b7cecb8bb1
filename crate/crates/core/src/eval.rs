//! Link-prediction and node-clustering evaluation.

use std::fmt;
use std::time::{SystemTime, UNIX_EPOCH};

use ndarray::Array2;
use rayon::prelude::*;

use crate::cluster::spectral_clustering;
use crate::error::{GapError, Result};
use crate::graph::{sample_nonedges, EdgeSplit, Graph};
use crate::metrics::{ami, auc, nmi};
use crate::model::{pair_embed, score, static_embedding, PairEncoder};
use crate::rng::stream;
use crate::trainer::full_edge_set;

/// One reported metric value with run metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub metric: String,
    pub value: f64,
    pub ratio: f64,
    pub seed: u64,
    pub timestamp: u64,
    pub config_digest: String,
}

/// Seconds since the epoch, or `SOURCE_DATE_EPOCH` when set.
pub fn report_timestamp() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.parse().ok()) {
        return t;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl EvalReport {
    pub fn new(metric: &str, value: f64, ratio: f64, seed: u64, config_digest: &str) -> Self {
        EvalReport {
            metric: metric.to_string(),
            value,
            ratio,
            seed,
            timestamp: report_timestamp(),
            config_digest: config_digest.to_string(),
        }
    }

    /// Parses a line produced by `Display`.
    pub fn parse(line: &str) -> Result<Self> {
        let mut metric = None;
        let mut value = None;
        let mut ratio = None;
        let mut seed = None;
        let mut timestamp = None;
        let mut digest = None;
        let bad = |msg: String| GapError::Parse { line: 1, msg };
        for kv in line.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad(format!("expected key=value, got {kv:?}")))?;
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad(format!("bad number for {k}: {v:?}")));
            match k {
                "metric" => metric = Some(v.to_string()),
                "value" => value = Some(num(v)?),
                "ratio" => ratio = Some(num(v)?),
                "seed" => seed = Some(v.parse::<u64>().map_err(|_| bad(format!("bad seed {v:?}")))?),
                "timestamp" => timestamp = Some(v.parse::<u64>().map_err(|_| bad(format!("bad timestamp {v:?}")))?),
                "config" => digest = Some(v.to_string()),
                _ => return Err(bad(format!("unknown key {k:?}"))),
            }
        }
        let missing = |k: &str| bad(format!("missing {k}"));
        Ok(EvalReport {
            metric: metric.ok_or_else(|| missing("metric"))?,
            value: value.ok_or_else(|| missing("value"))?,
            ratio: ratio.ok_or_else(|| missing("ratio"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
            timestamp: timestamp.ok_or_else(|| missing("timestamp"))?,
            config_digest: digest.ok_or_else(|| missing("config"))?,
        })
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "metric={} value={} ratio={} seed={} timestamp={} config={}",
            self.metric, self.value, self.ratio, self.seed, self.timestamp, self.config_digest
        )
    }
}

const STREAM_TEST_NEG: u64 = 11;
const STREAM_TEST_SCORE: u64 = 12;
const STREAM_STATIC: u64 = 13;
const STREAM_CLUSTER: u64 = 14;

/// Scores and AUC of held-out test edges against an equal number of non-edges
/// of the full graph, with representations built on the training graph.
#[derive(Debug, Clone)]
pub struct LinkPrediction {
    pub pos_scores: Vec<f64>,
    pub neg_scores: Vec<f64>,
    pub auc: f64,
}

pub fn link_prediction<M: PairEncoder>(model: &M, split: &EdgeSplit, len: usize, seed: u64) -> Result<LinkPrediction> {
    if split.test_edges.is_empty() {
        return Err(GapError::arg("split has no test edges"));
    }
    let g_train = &split.train_graph;
    let exclude = full_edge_set(split);
    let negatives = sample_nonedges(g_train, split.test_edges.len(), &exclude, &mut stream(seed, &[STREAM_TEST_NEG]))?;
    let score_all = |pairs: &[(usize, usize)], tag: u64| -> Result<Vec<f64>> {
        pairs
            .par_iter()
            .enumerate()
            .map(|(i, &(u, v))| {
                let mut rng = stream(seed, &[STREAM_TEST_SCORE, tag, i as u64]);
                let (ru, rv) = pair_embed(model, g_train, u, v, len, &mut rng)?;
                score(ru.as_slice().unwrap(), rv.as_slice().unwrap())
            })
            .collect()
    };
    let pos_scores = score_all(&split.test_edges, 0)?;
    let neg_scores = score_all(&negatives, 1)?;
    let auc = auc(&pos_scores, &neg_scores)?;
    Ok(LinkPrediction {
        pos_scores,
        neg_scores,
        auc,
    })
}

pub fn eval_link_prediction<M: PairEncoder>(
    model: &M,
    split: &EdgeSplit,
    len: usize,
    seed: u64,
    config_digest: &str,
) -> Result<EvalReport> {
    let lp = link_prediction(model, split, len, seed)?;
    Ok(EvalReport::new("auc", lp.auc, split.ratio, seed, config_digest))
}

/// Static embedding of every node, one row per node.
pub fn static_embeddings<M: PairEncoder>(model: &M, g_train: &Graph, len: usize, seed: u64) -> Result<Array2<f64>> {
    let rows: Vec<ndarray::Array1<f64>> = (0..g_train.num_nodes())
        .into_par_iter()
        .map(|u| {
            let mut rng = stream(seed, &[STREAM_STATIC, u as u64]);
            static_embedding(model, g_train, u, len, &mut rng)
        })
        .collect::<Result<_>>()?;
    let d = rows.first().map_or(0, |r| r.len());
    Ok(Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j]))
}

/// Ground-truth community per node; errors name the nodes without a label.
pub fn require_labels(labels: &[Option<usize>], g: &Graph) -> Result<Vec<usize>> {
    let missing: Vec<&str> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_none())
        .map(|(i, _)| g.id_map().label(i))
        .collect();
    if !missing.is_empty() {
        let shown: Vec<&str> = missing.iter().take(20).copied().collect();
        return Err(GapError::Compat(format!(
            "{} nodes lack a ground-truth label: {}{}",
            missing.len(),
            shown.join(", "),
            if missing.len() > shown.len() { ", ..." } else { "" }
        )));
    }
    Ok(labels.iter().map(|l| l.expect("checked")).collect())
}

#[derive(Debug, Clone)]
pub struct ClusteringScores {
    pub k: usize,
    pub nmi: f64,
    pub ami: f64,
    pub predicted: Vec<usize>,
}

/// Spectral-clusters the rows of `x` into as many groups as `truth` has and scores the result.
pub fn cluster_and_score(x: &Array2<f64>, truth: &[usize], seed: u64) -> Result<ClusteringScores> {
    let mut distinct = truth.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let k = distinct.len();
    let assignment = spectral_clustering(x, k, crate::rng::derive_seed(seed, &[STREAM_CLUSTER]))?;
    Ok(ClusteringScores {
        k,
        nmi: nmi(truth, &assignment.labels)?,
        ami: ami(truth, &assignment.labels)?,
        predicted: assignment.labels,
    })
}

pub fn eval_clustering<M: PairEncoder>(
    model: &M,
    g_train: &Graph,
    labels: &[Option<usize>],
    len: usize,
    seed: u64,
) -> Result<ClusteringScores> {
    let truth = require_labels(labels, g_train)?;
    let x = static_embeddings(model, g_train, len, seed)?;
    cluster_and_score(&x, &truth, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_line_round_trip() {
        let r = EvalReport {
            metric: "nmi".into(),
            value: 0.6473,
            ratio: 0.55,
            seed: 4,
            timestamp: 17,
            config_digest: "abc123".into(),
        };
        assert_eq!(EvalReport::parse(&r.to_string()).unwrap(), r);
        assert!(EvalReport::parse("metric=auc value=x").is_err());
    }

    #[test]
    fn one_hot_embeddings_cluster_perfectly() {
        let truth: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let x = Array2::from_shape_fn((30, 3), |(i, j)| if truth[i] == j { 1.0 } else { 0.0 });
        let s = cluster_and_score(&x, &truth, 1).unwrap();
        assert_eq!(s.k, 3);
        assert!((s.nmi - 1.0).abs() < 1e-12);
        assert!((s.ami - 1.0).abs() < 1e-12);
    }
}
