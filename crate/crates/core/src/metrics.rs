//! Clustering comparison, silhouette diagnostics and the oracle analysis.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use ndarray::ArrayView2;
use rayon::prelude::*;
use thiserror::Error;

use crate::clustering::Clustering;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("clusterings cover {0} and {1} items")]
    SizeMismatch(usize, usize),
    #[error("normalized VI needs at least 2 items, got {0}")]
    TooFewItems(usize),
    #[error("silhouette needs at least 2 clusters")]
    SingleCluster,
    #[error("{points} points but {assigned} assignments")]
    PointCount { points: usize, assigned: usize },
    #[error("score file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("score table is empty")]
    EmptyTable,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn entropy_of_counts<'a>(counts: impl Iterator<Item = &'a usize>, n: f64) -> f64 {
    counts
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `VI = H(c1) + H(c2) - 2 I(c1; c2)` in nats, evaluated term by term as
/// `sum p_ij [ln(p_i / p_ij) + ln(p_j / p_ij)]` so it cannot go negative.
pub fn variation_of_information_labels(c1: &[usize], c2: &[usize]) -> Result<f64, MetricsError> {
    if c1.len() != c2.len() {
        return Err(MetricsError::SizeMismatch(c1.len(), c2.len()));
    }
    if c1.is_empty() {
        return Ok(0.0);
    }
    let n = c1.len() as f64;
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut m1: HashMap<usize, usize> = HashMap::new();
    let mut m2: HashMap<usize, usize> = HashMap::new();
    for (&a, &b) in c1.iter().zip(c2) {
        *joint.entry((a, b)).or_insert(0) += 1;
        *m1.entry(a).or_insert(0) += 1;
        *m2.entry(b).or_insert(0) += 1;
    }
    let mut cells: Vec<((usize, usize), usize)> = joint.into_iter().collect();
    cells.sort_unstable();
    let vi = cells
        .iter()
        .map(|&((a, b), nij)| {
            let nij = nij as f64;
            nij / n * ((m1[&a] as f64 / nij).ln() + (m2[&b] as f64 / nij).ln())
        })
        .sum::<f64>();
    Ok(vi.max(0.0))
}

pub fn variation_of_information(c1: &Clustering, c2: &Clustering) -> Result<f64, MetricsError> {
    variation_of_information_labels(&c1.assignment, &c2.assignment)
}

/// Entropy of a labelling in nats.
pub fn clustering_entropy(labels: &[usize]) -> f64 {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0) += 1;
    }
    let mut c: Vec<usize> = counts.into_values().collect();
    c.sort_unstable();
    entropy_of_counts(c.iter(), labels.len() as f64)
}

/// VI divided by `ln n`, its upper bound over `n` items.
pub fn normalized_vi_labels(c1: &[usize], c2: &[usize]) -> Result<f64, MetricsError> {
    let vi = variation_of_information_labels(c1, c2)?;
    if c1.len() < 2 {
        return Err(MetricsError::TooFewItems(c1.len()));
    }
    Ok(vi / (c1.len() as f64).ln())
}

pub fn normalized_vi(c1: &Clustering, c2: &Clustering) -> Result<f64, MetricsError> {
    normalized_vi_labels(&c1.assignment, &c2.assignment)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Silhouette {
    pub scores: Vec<f64>,
    pub mean: f64,
}

/// Silhouette scores with Euclidean distance. Points in singleton clusters
/// score 0.
pub fn silhouette(points: ArrayView2<f64>, labels: &[usize]) -> Result<Silhouette, MetricsError> {
    let n = points.nrows();
    if labels.len() != n {
        return Err(MetricsError::PointCount { points: n, assigned: labels.len() });
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(MetricsError::SingleCluster);
    }
    let scores: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = labels[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            let pi = points.row(i);
            for j in 0..n {
                if j != i {
                    let d = pi.iter().zip(points.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    sums[labels[j]] += d;
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m == 0.0 { 0.0 } else { (b - a) / m }
        })
        .collect();
    let mean = scores.iter().sum::<f64>() / n as f64;
    Ok(Silhouette { scores, mean })
}

/// Per-sample scores of two systems.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub ids: Vec<String>,
    pub model_1: Vec<f64>,
    pub model_2: Vec<f64>,
    pub higher_is_better: bool,
}

impl ScoreTable {
    pub fn new(ids: Vec<String>, model_1: Vec<f64>, model_2: Vec<f64>, higher_is_better: bool) -> Result<Self, MetricsError> {
        if ids.len() != model_1.len() || ids.len() != model_2.len() {
            return Err(MetricsError::Parse { line: 0, msg: "column lengths differ".into() });
        }
        if model_1.iter().chain(&model_2).any(|s| !s.is_finite()) {
            return Err(MetricsError::Parse { line: 0, msg: "scores must be finite".into() });
        }
        Ok(ScoreTable { ids, model_1, model_2, higher_is_better })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Read `id<TAB>score1<TAB>score2` rows under a `#higher_is_better=`
    /// header. A missing header means higher is better.
    pub fn read<R: BufRead>(reader: R) -> Result<Self, MetricsError> {
        let mut higher = true;
        let (mut ids, mut s1, mut s2) = (Vec::new(), Vec::new(), Vec::new());
        let mut seen = std::collections::HashSet::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let err = |msg: String| MetricsError::Parse { line: i + 1, msg };
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("higher_is_better=") {
                    higher = match v.trim() {
                        "true" => true,
                        "false" => false,
                        other => return Err(err(format!("bad higher_is_better value {other:?}"))),
                    };
                }
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(err("expected sample_id, score_model1, score_model2".into()));
            }
            let parse = |s: &str| -> Result<f64, MetricsError> {
                let v: f64 = s.trim().parse().map_err(|_| err(format!("bad score {s:?}")))?;
                if v.is_finite() { Ok(v) } else { Err(err(format!("non-finite score {s:?}"))) }
            };
            if !seen.insert(f[0].to_string()) {
                return Err(err(format!("duplicate sample id {:?}", f[0])));
            }
            ids.push(f[0].to_string());
            s1.push(parse(f[1])?);
            s2.push(parse(f[2])?);
        }
        Ok(ScoreTable { ids, model_1: s1, model_2: s2, higher_is_better: higher })
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "#higher_is_better={}", self.higher_is_better)?;
        for i in 0..self.len() {
            writeln!(out, "{}\t{}\t{}", self.ids[i], self.model_1[i], self.model_2[i])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleReport {
    pub oracle_mean: f64,
    pub model_1_mean: f64,
    pub model_2_mean: f64,
    pub agree: f64,
    pub model_1_better: f64,
    pub model_2_better: f64,
}

/// Pick the better model per sample and summarise how often each wins.
pub fn oracle_analysis(table: &ScoreTable) -> OracleReport {
    let n = table.len();
    if n == 0 {
        return OracleReport {
            oracle_mean: 0.0,
            model_1_mean: 0.0,
            model_2_mean: 0.0,
            agree: 0.0,
            model_1_better: 0.0,
            model_2_better: 0.0,
        };
    }
    let (mut best, mut eq, mut w1, mut w2) = (0.0, 0usize, 0usize, 0usize);
    for (&a, &b) in table.model_1.iter().zip(&table.model_2) {
        let first_wins = if table.higher_is_better { a > b } else { a < b };
        if a == b {
            eq += 1;
        } else if first_wins {
            w1 += 1;
        } else {
            w2 += 1;
        }
        best += if table.higher_is_better { a.max(b) } else { a.min(b) };
    }
    let nf = n as f64;
    OracleReport {
        oracle_mean: best / nf,
        model_1_mean: table.model_1.iter().sum::<f64>() / nf,
        model_2_mean: table.model_2.iter().sum::<f64>() / nf,
        agree: eq as f64 / nf,
        model_1_better: w1 as f64 / nf,
        model_2_better: w2 as f64 / nf,
    }
}

impl OracleReport {
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "oracle_mean={}", self.oracle_mean)?;
        writeln!(out, "m1_mean={}", self.model_1_mean)?;
        writeln!(out, "m2_mean={}", self.model_2_mean)?;
        writeln!(out, "agree={}", self.agree)?;
        writeln!(out, "m1_better={}", self.model_1_better)?;
        writeln!(out, "m2_better={}", self.model_2_better)
    }
}
