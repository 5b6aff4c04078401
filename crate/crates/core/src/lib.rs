//! Word clustering toolkit: window-based context representations,
//! skew-divergence affinities, spectral clustering (NJW and modified
//! normalized cut), K-means, Brown clustering, and clustering comparison.

pub mod affinity;
pub mod brown;
pub mod cli;
pub mod clustering;
pub mod context;
pub mod corpus;
pub mod kmeans;
pub mod metrics;
pub mod spectral;

pub use affinity::{build_affinity, AffinityMatrix, AffinityParams, Kernel, Sigma};
pub use brown::{brown_cluster, BrownClusterer, ClassBigramStats, MergeHistory};
pub use clustering::{ClusterFile, Clustering, Method};
pub use context::{build_context_matrix, select_descriptors, ContextMatrix, DescriptorSet, MatrixKind};
pub use corpus::{build_lexicon, read_corpus, tokenize_corpus, Lexicon, Sentence, Token, RARE};
pub use kmeans::{kmeans, KMeansParams, KMeansResult};
pub use metrics::{normalized_vi, oracle_analysis, silhouette, variation_of_information, ScoreTable};
pub use spectral::{modified_ncut_cluster, ncut_measure, njw_cluster, top_eigenpairs, SpectralParams};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    Context(#[from] context::ContextError),
    #[error(transparent)]
    Affinity(#[from] affinity::AffinityError),
    #[error(transparent)]
    Spectral(#[from] spectral::SpectralError),
    #[error(transparent)]
    KMeans(#[from] kmeans::KMeansError),
    #[error(transparent)]
    Brown(#[from] brown::BrownError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error(transparent)]
    ClusterFile(#[from] clustering::ClusterFileError),
}
