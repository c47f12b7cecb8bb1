//! Independent reference implementations used by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use gap_core::model::ModelParams;

/// Straight-line recomputation of the attentive-pooling forward pass from raw
/// node ids (valid positions only).
pub struct NaiveForward {
    pub align: Vec<Vec<f64>>,
    pub attn_s: Vec<f64>,
    pub attn_t: Vec<f64>,
    pub r_s: Vec<f64>,
    pub r_t: Vec<f64>,
}

pub fn naive_forward(p: &ModelParams, ids_s: &[usize], ids_t: &[usize]) -> NaiveForward {
    let d = p.dim();
    let e = |id: usize, k: usize| p.embeddings[[id, k]];
    let mut align = vec![vec![0.0; ids_t.len()]; ids_s.len()];
    for (i, &a) in ids_s.iter().enumerate() {
        for (j, &b) in ids_t.iter().enumerate() {
            let mut acc = 0.0;
            for k in 0..d {
                for l in 0..d {
                    acc += e(a, k) * p.attn[[k, l]] * e(b, l);
                }
            }
            align[i][j] = acc.tanh();
        }
    }
    let row_max: Vec<f64> = align.iter().map(|r| r.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect();
    let col_max: Vec<f64> = (0..ids_t.len())
        .map(|j| align.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let attn_s = naive_softmax(&row_max);
    let attn_t = naive_softmax(&col_max);
    let pool = |ids: &[usize], w: &[f64]| -> Vec<f64> {
        (0..d).map(|k| ids.iter().zip(w).map(|(&id, &wi)| wi * e(id, k)).sum()).collect()
    };
    NaiveForward {
        r_s: pool(ids_s, &attn_s),
        r_t: pool(ids_t, &attn_t),
        align,
        attn_s,
        attn_t,
    }
}

pub fn naive_softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Fraction of (positive, negative) pairs ordered correctly, ties counted half.
pub fn pairwise_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut credit = 0.0;
    for &p in pos {
        for &n in neg {
            if p > n {
                credit += 1.0;
            } else if p == n {
                credit += 0.5;
            }
        }
    }
    credit / (pos.len() * neg.len()) as f64
}

fn counts(y: &[usize]) -> BTreeMap<usize, usize> {
    let mut m = BTreeMap::new();
    for &v in y {
        *m.entry(v).or_insert(0) += 1;
    }
    m
}

pub fn brute_entropy(y: &[usize]) -> f64 {
    let n = y.len() as f64;
    counts(y).values().map(|&c| c as f64 / n).map(|p| -p * p.ln()).sum()
}

pub fn brute_mi(y: &[usize], z: &[usize]) -> f64 {
    let n = y.len() as f64;
    let (cy, cz) = (counts(y), counts(z));
    let mut mi = 0.0;
    for (&a, &na) in &cy {
        for (&b, &nb) in &cz {
            let nab = y.iter().zip(z).filter(|&(&u, &v)| u == a && v == b).count();
            if nab > 0 {
                let nab = nab as f64;
                mi += nab / n * (n * nab / (na as f64 * nb as f64)).ln();
            }
        }
    }
    mi
}

pub fn brute_nmi(y: &[usize], z: &[usize]) -> f64 {
    let (hy, hz) = (brute_entropy(y), brute_entropy(z));
    if hy == 0.0 && hz == 0.0 {
        return 1.0;
    }
    if hy == 0.0 || hz == 0.0 {
        return 0.0;
    }
    (brute_mi(y, z) / (hy * hz).sqrt()).min(1.0)
}

fn for_each_permutation(items: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        f(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        for_each_permutation(items, k + 1, f);
        items.swap(k, i);
    }
}

/// Expected mutual information under random relabelling, by enumerating every permutation of `z`.
pub fn brute_expected_mi(y: &[usize], z: &[usize]) -> f64 {
    let mut perm = z.to_vec();
    let (mut total, mut count) = (0.0, 0usize);
    for_each_permutation(&mut perm, 0, &mut |p| {
        total += brute_mi(y, p);
        count += 1;
    });
    total / count as f64
}

pub fn brute_ami(y: &[usize], z: &[usize]) -> f64 {
    let (hy, hz) = (brute_entropy(y), brute_entropy(z));
    if hy == 0.0 && hz == 0.0 {
        return 1.0;
    }
    let emi = brute_expected_mi(y, z);
    let (numer, denom) = (brute_mi(y, z) - emi, hy.max(hz) - emi);
    if denom.abs() < 1e-15 {
        return if numer.abs() < 1e-15 { 0.0 } else { numer.signum() };
    }
    numer / denom
}

/// Directory holding `cora.edges`, `email.edges` and `email.labels`.
pub fn data_dir() -> Option<PathBuf> {
    std::env::var_os("GAP_DATA_DIR").map(PathBuf::from)
}
