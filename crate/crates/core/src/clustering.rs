//! Hard clusterings of the lexicon and the cluster TSV format shared by all
//! methods.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use ndarray::Array2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClusterFileError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("cluster id {id} at item {item} is not below k = {k}")]
    IdOutOfRange { item: usize, id: usize, k: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    KMeans,
    SpectralNjw,
    SpectralNcut,
    Brown,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::KMeans => "kmeans",
            Method::SpectralNjw => "spectral-njw",
            Method::SpectralNcut => "spectral-ncut",
            Method::Brown => "brown",
        })
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "kmeans" => Ok(Method::KMeans),
            "spectral-njw" => Ok(Method::SpectralNjw),
            "spectral-ncut" => Ok(Method::SpectralNcut),
            "brown" => Ok(Method::Brown),
            other => Err(format!(
                "unknown method {other:?} (expected kmeans, spectral-njw, spectral-ncut or brown)"
            )),
        }
    }
}

/// Assignment of every item to one of `k` cluster ids. Empty clusters are
/// allowed; see [`Clustering::empty_clusters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub assignment: Vec<usize>,
    pub k: usize,
    /// Cluster centers in whatever space the final K-means ran in.
    pub centers: Option<Array2<f64>>,
    pub method: Method,
}

impl Clustering {
    pub fn new(assignment: Vec<usize>, k: usize, method: Method) -> Result<Self, ClusterFileError> {
        if let Some((item, &id)) = assignment.iter().enumerate().find(|(_, id)| **id >= k) {
            return Err(ClusterFileError::IdOutOfRange { item, id, k });
        }
        Ok(Clustering { assignment, k, centers: None, method })
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }

    pub fn empty_clusters(&self) -> Vec<usize> {
        self.sizes().iter().enumerate().filter(|(_, s)| **s == 0).map(|(c, _)| c).collect()
    }

    /// Members of each cluster, in item order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    /// Write `word<TAB>cluster_id` rows after a `# key=value ...` header.
    pub fn write_tsv<'a, W: Write>(
        &self,
        mut out: W,
        words: impl IntoIterator<Item = &'a str>,
        metadata: &[(&str, String)],
    ) -> std::io::Result<()> {
        write!(out, "# method={} k={}", self.method, self.k)?;
        for (key, value) in metadata {
            write!(out, " {key}={value}")?;
        }
        writeln!(out)?;
        for (word, &c) in words.into_iter().zip(&self.assignment) {
            writeln!(out, "{word}\t{c}")?;
        }
        Ok(())
    }
}

/// A parsed cluster file: words in file order, the clustering, and the
/// remaining header metadata.
#[derive(Debug, Clone)]
pub struct ClusterFile {
    pub words: Vec<String>,
    pub clustering: Clustering,
    pub metadata: Vec<(String, String)>,
}

impl ClusterFile {
    pub fn read<R: BufRead>(reader: R) -> Result<Self, ClusterFileError> {
        let mut method = None;
        let mut k = None;
        let mut metadata = Vec::new();
        let mut words = Vec::new();
        let mut assignment = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let err = |msg: String| ClusterFileError::Parse { line: lineno, msg };
            if let Some(header) = line.strip_prefix('#') {
                for pair in header.split_whitespace() {
                    let (key, value) = pair
                        .split_once('=')
                        .ok_or_else(|| err(format!("expected key=value, found {pair:?}")))?;
                    match key {
                        "method" => method = Some(value.parse::<Method>().map_err(err)?),
                        "k" => k = Some(value.parse::<usize>().map_err(|_| err(format!("bad k {value:?}")))?),
                        _ => metadata.push((key.to_string(), value.to_string())),
                    }
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let (word, id) = line
                .split_once('\t')
                .ok_or_else(|| err("expected word<TAB>cluster_id".to_string()))?;
            let id: usize = id.trim().parse().map_err(|_| err(format!("bad cluster id {id:?}")))?;
            words.push(word.to_string());
            assignment.push(id);
        }
        let method = method.ok_or(ClusterFileError::Parse { line: 1, msg: "header lacks method=".into() })?;
        let k = match k {
            Some(k) => k,
            None => assignment.iter().max().map_or(0, |m| m + 1),
        };
        let clustering = Clustering::new(assignment, k, method)?;
        Ok(ClusterFile { words, clustering, metadata })
    }
}

/// Spectral by-product: one embedding row per word, then one row per
/// cluster center as `#CENTER<TAB>cluster_id<TAB>values...`.
pub fn write_embedding_dump<'a, W: Write>(
    mut out: W,
    words: impl IntoIterator<Item = &'a str>,
    embedding: &Array2<f64>,
    centers: &Array2<f64>,
) -> std::io::Result<()> {
    for (word, row) in words.into_iter().zip(embedding.rows()) {
        write!(out, "{word}")?;
        for v in row {
            write!(out, "\t{v}")?;
        }
        writeln!(out)?;
    }
    for (c, row) in centers.rows().into_iter().enumerate() {
        write!(out, "#CENTER\t{c}")?;
        for v in row {
            write!(out, "\t{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
