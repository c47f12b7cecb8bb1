//! Ranking and partition-agreement metrics.
//!
//! All logarithms are natural; NMI and AMI are ratios, so the base cancels.

use std::collections::{BTreeMap, HashMap};

use crate::error::{GapError, Result};

/// Probability that a random positive outscores a random negative, ties counting half.
///
/// Computed from mid-ranks of the pooled scores (Mann-Whitney U), so the cost is
/// dominated by one sort.
pub fn auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(GapError::arg("auc needs at least one positive and one negative score"));
    }
    if pos.iter().chain(neg).any(|x| !x.is_finite()) {
        return Err(GapError::arg("auc scores must be finite"));
    }
    let mut pooled: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));

    // sum of (1-based) mid-ranks of the positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        let n_pos = pooled[i..=j].iter().filter(|p| p.1).count();
        rank_sum += mid * n_pos as f64;
        i = j + 1;
    }
    let (a, b) = (pos.len() as f64, neg.len() as f64);
    let u = rank_sum - a * (a + 1.0) / 2.0;
    Ok(u / (a * b))
}

/// Cluster sizes and joint counts of two labelings.
#[derive(Debug, Clone)]
pub struct Contingency {
    pub n: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub cells: BTreeMap<(usize, usize), usize>,
}

fn relabel(y: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    y.iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

impl Contingency {
    pub fn new(y: &[usize], y_hat: &[usize]) -> Result<Self> {
        if y.len() != y_hat.len() {
            return Err(GapError::arg(format!(
                "labelings differ in length: {} vs {}",
                y.len(),
                y_hat.len()
            )));
        }
        if y.is_empty() {
            return Err(GapError::arg("labelings must be non-empty"));
        }
        let (a, b) = (relabel(y), relabel(y_hat));
        let ka = a.iter().max().map_or(0, |m| m + 1);
        let kb = b.iter().max().map_or(0, |m| m + 1);
        let mut rows = vec![0; ka];
        let mut cols = vec![0; kb];
        let mut cells = BTreeMap::new();
        for (&i, &j) in a.iter().zip(&b) {
            rows[i] += 1;
            cols[j] += 1;
            *cells.entry((i, j)).or_insert(0) += 1;
        }
        Ok(Contingency {
            n: y.len(),
            rows,
            cols,
            cells,
        })
    }

    pub fn mutual_information(&self) -> f64 {
        let n = self.n as f64;
        let mi: f64 = self
            .cells
            .iter()
            .map(|(&(i, j), &nij)| {
                let nij = nij as f64;
                nij / n * (n * nij / (self.rows[i] as f64 * self.cols[j] as f64)).ln()
            })
            .sum();
        mi.max(0.0)
    }

    pub fn entropies(&self) -> (f64, f64) {
        (entropy(&self.rows, self.n), entropy(&self.cols, self.n))
    }

    /// `E[I]` under the hypergeometric (fixed-marginals permutation) model.
    pub fn expected_mutual_information(&self) -> f64 {
        let n = self.n;
        let nf = n as f64;
        let log_fact = log_factorials(n);
        let mut emi = 0.0;
        for &a in &self.rows {
            for &b in &self.cols {
                let lo = (a + b).saturating_sub(n).max(1);
                let hi = a.min(b);
                for nij in lo..=hi {
                    let x = nij as f64;
                    let term = x / nf * (nf * x / (a as f64 * b as f64)).ln();
                    let log_p = log_fact[a] + log_fact[b] + log_fact[n - a] + log_fact[n - b]
                        - log_fact[n]
                        - log_fact[nij]
                        - log_fact[a - nij]
                        - log_fact[b - nij]
                        - log_fact[n + nij - a - b];
                    emi += term * log_p.exp();
                }
            }
        }
        emi
    }
}

fn log_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

fn entropy(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    h.max(0.0)
}

pub fn mutual_information(y: &[usize], y_hat: &[usize]) -> Result<f64> {
    Ok(Contingency::new(y, y_hat)?.mutual_information())
}

/// `I / sqrt(H(y) H(y_hat))`; 1 when both labelings are constant, 0 when only one is.
pub fn nmi(y: &[usize], y_hat: &[usize]) -> Result<f64> {
    let c = Contingency::new(y, y_hat)?;
    let (h1, h2) = c.entropies();
    Ok(match (h1 == 0.0, h2 == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => (c.mutual_information() / (h1 * h2).sqrt()).min(1.0),
    })
}

/// Chance-adjusted mutual information, `(I - E[I]) / (max(H(y), H(y_hat)) - E[I])`.
pub fn ami(y: &[usize], y_hat: &[usize]) -> Result<f64> {
    let c = Contingency::new(y, y_hat)?;
    let (h1, h2) = c.entropies();
    if h1 == 0.0 && h2 == 0.0 {
        return Ok(1.0);
    }
    let mi = c.mutual_information();
    let emi = c.expected_mutual_information();
    let denom = h1.max(h2) - emi;
    let numer = mi - emi;
    if denom.abs() < 1e-15 {
        return Ok(if numer.abs() < 1e-15 { 0.0 } else { numer.signum() });
    }
    Ok(numer / denom)
}
