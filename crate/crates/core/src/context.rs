//! Window-based count representations (right and left co-occurrence with a
//! fixed set of descriptor words) and external embedding ingestion.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use ndarray::{s, Array2, ArrayView1, Axis};
use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{Lexicon, Sentence};

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("requested {requested} descriptor words but at most {max} are available")]
    TooManyDescriptors { requested: usize, max: usize },
    #[error("descriptor count must be positive")]
    NoDescriptors,
    #[error("window size must be at least 1")]
    ZeroWindow,
    #[error("cannot concatenate an empty list of matrices")]
    EmptyConcat,
    #[error("row count mismatch: matrix {index} has {found} rows, expected {expected}")]
    RowMismatch { index: usize, expected: usize, found: usize },
    #[error("only count matrices can be concatenated (matrix {0} is an embedding)")]
    KindMismatch(usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The `M` most frequent non-`RARE` lexicon words, as lexicon indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescriptorSet {
    words: Vec<usize>,
}

impl DescriptorSet {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.words
    }

    /// Column of each lexicon index, if it is a descriptor.
    fn column_map(&self, lexicon_size: usize) -> Vec<Option<usize>> {
        let mut map = vec![None; lexicon_size];
        for (col, &w) in self.words.iter().enumerate() {
            map[w] = Some(col);
        }
        map
    }
}

pub fn select_descriptors(lexicon: &Lexicon, m: usize) -> Result<DescriptorSet, ContextError> {
    if m == 0 {
        return Err(ContextError::NoDescriptors);
    }
    // RARE is always the last entry; everything before it is already ranked.
    let max = lexicon.len() - 1;
    if m > max {
        return Err(ContextError::TooManyDescriptors { requested: m, max });
    }
    Ok(DescriptorSet { words: (0..m).collect() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Count,
    Embedding,
}

impl fmt::Display for MatrixKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatrixKind::Count => "count",
            MatrixKind::Embedding => "embedding",
        })
    }
}

impl FromStr for MatrixKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "count" => Ok(MatrixKind::Count),
            "embedding" => Ok(MatrixKind::Embedding),
            other => Err(format!("unknown matrix kind {other:?}")),
        }
    }
}

/// One row per lexicon word. Count matrices carry the window sizes they were
/// built with (several after concatenation); embeddings carry none.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextMatrix {
    pub rows: Array2<f64>,
    pub windows: Vec<usize>,
    pub kind: MatrixKind,
}

impl ContextMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.rows.row(i)
    }

    fn window_field(&self) -> String {
        if self.windows.is_empty() {
            "0".to_string()
        } else {
            self.windows.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
        }
    }

    /// Header `N D W kind`, then one space-separated row per word. Count
    /// cells are written as integers, embeddings in shortest round-trip
    /// decimal form.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {} {} {}", self.n_rows(), self.dim(), self.window_field(), self.kind)?;
        let mut line = String::new();
        for row in self.rows.rows() {
            line.clear();
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    line.push(' ');
                }
                match self.kind {
                    MatrixKind::Count => line.push_str(&(*v as u64).to_string()),
                    MatrixKind::Embedding => line.push_str(&v.to_string()),
                }
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, ContextError> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or(ContextError::Parse { line: 1, msg: "missing header".into() })??;
        let bad_header = |msg: &str| ContextError::Parse { line: 1, msg: msg.to_string() };
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(bad_header("header must be `N D W kind`"));
        }
        let n: usize = fields[0].parse().map_err(|_| bad_header("bad N"))?;
        let d: usize = fields[1].parse().map_err(|_| bad_header("bad D"))?;
        let windows: Vec<usize> = if fields[2] == "0" {
            Vec::new()
        } else {
            fields[2]
                .split(',')
                .map(|w| w.parse().map_err(|_| bad_header("bad window list")))
                .collect::<Result<_, _>>()?
        };
        let kind: MatrixKind = fields[3].parse().map_err(|e: String| bad_header(&e))?;
        let mut data = Vec::with_capacity(n * d);
        let mut row_count = 0;
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let before = data.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| ContextError::Parse {
                    line: lineno,
                    msg: format!("not a number: {tok:?}"),
                })?;
                data.push(v);
            }
            if data.len() - before != d {
                return Err(ContextError::Parse {
                    line: lineno,
                    msg: format!("expected {d} values, found {}", data.len() - before),
                });
            }
            row_count += 1;
        }
        if row_count != n {
            return Err(ContextError::Parse {
                line: row_count + 1,
                msg: format!("expected {n} rows, found {row_count}"),
            });
        }
        let rows = Array2::from_shape_vec((n, d), data).expect("shape checked");
        Ok(ContextMatrix { rows, windows, kind })
    }
}

/// Count matrix over lexicon-encoded sentences.
///
/// Column `j < M` of row `w` counts occurrences of `w` at distance
/// `1..=window` to the right of descriptor `j`; column `M + j` counts the
/// same on the left. Windows stop at sentence boundaries.
pub fn build_context_matrix_encoded(
    sentences: &[Vec<usize>],
    lexicon_size: usize,
    descriptors: &DescriptorSet,
    window: usize,
) -> Result<ContextMatrix, ContextError> {
    if window == 0 {
        return Err(ContextError::ZeroWindow);
    }
    let m = descriptors.len();
    let dim = 2 * m;
    let columns = descriptors.column_map(lexicon_size);

    let counts: HashMap<usize, u64> = sentences
        .par_iter()
        .fold(HashMap::new, |mut acc: HashMap<usize, u64>, sentence| {
            for (p, &w) in sentence.iter().enumerate() {
                let Some(col) = columns[w] else { continue };
                let right_end = (p + window).min(sentence.len() - 1);
                for &other in &sentence[p + 1..=right_end] {
                    *acc.entry(other * dim + col).or_insert(0) += 1;
                }
                for &other in &sentence[p.saturating_sub(window)..p] {
                    *acc.entry(other * dim + m + col).or_insert(0) += 1;
                }
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            if a.len() < b.len() {
                return merge_counts(b, a);
            }
            for (cell, c) in b {
                *a.entry(cell).or_insert(0) += c;
            }
            a
        });

    let mut rows = Array2::<f64>::zeros((lexicon_size, dim));
    let flat = rows.as_slice_mut().expect("standard layout");
    for (cell, c) in counts {
        flat[cell] = c as f64;
    }
    Ok(ContextMatrix { rows, windows: vec![window], kind: MatrixKind::Count })
}

fn merge_counts(mut into: HashMap<usize, u64>, from: HashMap<usize, u64>) -> HashMap<usize, u64> {
    for (cell, c) in from {
        *into.entry(cell).or_insert(0) += c;
    }
    into
}

pub fn build_context_matrix(
    sentences: &[Sentence],
    lexicon: &Lexicon,
    descriptors: &DescriptorSet,
    window: usize,
) -> Result<ContextMatrix, ContextError> {
    let encoded = lexicon.encode(sentences);
    build_context_matrix_encoded(&encoded, lexicon.len(), descriptors, window)
}

/// Feature-wise concatenation of count matrices sharing a row order.
pub fn concat_context_matrices(matrices: &[ContextMatrix]) -> Result<ContextMatrix, ContextError> {
    let first = matrices.first().ok_or(ContextError::EmptyConcat)?;
    let n = first.n_rows();
    for (i, m) in matrices.iter().enumerate() {
        if m.kind != MatrixKind::Count {
            return Err(ContextError::KindMismatch(i));
        }
        if m.n_rows() != n {
            return Err(ContextError::RowMismatch { index: i, expected: n, found: m.n_rows() });
        }
    }
    let views: Vec<_> = matrices.iter().map(|m| m.rows.view()).collect();
    let rows = ndarray::concatenate(Axis(1), &views).expect("row counts checked");
    let windows = matrices.iter().flat_map(|m| m.windows.iter().copied()).collect();
    Ok(ContextMatrix { rows, windows, kind: MatrixKind::Count })
}

/// Column block `[start, end)` of a matrix, used to recover concatenated parts.
pub fn column_slice(matrix: &ContextMatrix, start: usize, end: usize) -> Array2<f64> {
    matrix.rows.slice(s![.., start..end]).to_owned()
}

#[derive(Debug, Clone)]
pub struct LoadedEmbeddings {
    pub matrix: ContextMatrix,
    /// Lexicon indices that had no vector and were given the zero vector.
    pub missing: Vec<usize>,
}

/// Read vectors in word2vec text format (`word v1 ... vd`, optionally
/// preceded by a `count dim` header line) and align them to the lexicon.
pub fn load_embedding_matrix<R: BufRead>(
    reader: R,
    lexicon: &Lexicon,
) -> Result<LoadedEmbeddings, ContextError> {
    let mut dim: Option<usize> = None;
    let mut vectors: HashMap<usize, Vec<f64>> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        if i == 0 && rest.len() == 1 && word.parse::<usize>().is_ok() && rest[0].parse::<usize>().is_ok() {
            dim = Some(rest[0].parse().expect("checked"));
            continue;
        }
        let values = rest
            .iter()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| ContextError::Parse { line: lineno, msg: format!("bad value {t:?}") })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if values.is_empty() {
            return Err(ContextError::Parse { line: lineno, msg: "word without a vector".into() });
        }
        match dim {
            Some(d) if d != values.len() => {
                return Err(ContextError::Parse {
                    line: lineno,
                    msg: format!("expected {d} values, found {}", values.len()),
                })
            }
            None => dim = Some(values.len()),
            _ => {}
        }
        if lexicon.contains(word) {
            vectors.entry(lexicon.index_of(word)).or_insert(values);
        }
    }
    let dim = dim.ok_or(ContextError::Parse { line: 1, msg: "no vectors in file".into() })?;
    let mut rows = Array2::<f64>::zeros((lexicon.len(), dim));
    let mut missing = Vec::new();
    for (i, mut row) in rows.rows_mut().into_iter().enumerate() {
        match vectors.get(&i) {
            Some(v) => row.assign(&ArrayView1::from(v.as_slice())),
            None => missing.push(i),
        }
    }
    Ok(LoadedEmbeddings {
        matrix: ContextMatrix { rows, windows: Vec::new(), kind: MatrixKind::Embedding },
        missing,
    })
}
