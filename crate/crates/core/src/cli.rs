//! Command-line front end. Each stage is its own command; stages exchange
//! data only through files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::affinity::{build_affinity, AffinityParams, Kernel, Sigma, DEFAULT_SKEW};
use crate::brown::{brown_cluster, vocabulary_entropy};
use crate::clustering::{write_embedding_dump, ClusterFile, Method};
use crate::context::{build_context_matrix, concat_context_matrices, load_embedding_matrix, select_descriptors, ContextMatrix};
use crate::corpus::{build_lexicon, read_corpus, Lexicon};
use crate::kmeans::{kmeans, KMeansParams, DEFAULT_MAX_ITER, DEFAULT_RESTARTS, DEFAULT_TOL};
use crate::metrics::{normalized_vi, oracle_analysis, variation_of_information, ScoreTable};
use crate::spectral::{cluster_means, modified_ncut_cluster, njw_cluster, SpectralError, SpectralParams, DEFAULT_TOL as EIGEN_TOL};

const FORMATS: &str = "\
File formats:
  corpus      UTF-8 text, one sentence per line, whitespace-separated tokens
  lexicon     rank<TAB>word<TAB>frequency, ranks from 0, RARE row last
  context     header `N D W kind` (W comma-separated, 0 for embeddings),
              then N rows of D space-separated numbers
  embeddings  word2vec text format, optional `count dim` header
  clusters    `# method=.. k=.. key=value ...` header, then word<TAB>cluster_id
  dump        word<TAB>v1..vd rows, then #CENTER<TAB>id<TAB>v1..vd rows
  history     step<TAB>cluster_a<TAB>cluster_b<TAB>I_after
  scores      `#higher_is_better=true|false`, then id<TAB>score1<TAB>score2
  report      key=value lines";

#[derive(Debug, Parser)]
#[command(name = "wordclust", version, about = "Word clustering from corpus statistics", after_help = FORMATS)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the frequency-ranked lexicon of a corpus.
    Lexicon(LexiconArgs),
    /// Build left/right window count matrices, or align external embeddings.
    Context(ContextArgs),
    /// Cluster the lexicon.
    Cluster(ClusterArgs),
    /// Compare two cluster files, optionally with an oracle analysis.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct LexiconArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Lexicon size N, including the RARE entry.
    #[arg(short = 'n', long, default_value_t = 12007, value_parser = clap::value_parser!(u64).range(2..))]
    pub size: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ContextArgs {
    #[arg(long)]
    pub lexicon: PathBuf,
    /// Corpus to count windows over (not needed with --embeddings).
    #[arg(long, required_unless_present = "embeddings")]
    pub corpus: Option<PathBuf>,
    /// Number of descriptor words M.
    #[arg(short = 'm', long, default_value_t = 5000)]
    pub descriptors: usize,
    /// Window sizes W; one matrix is written per value.
    #[arg(short = 'w', long, value_delimiter = ',', default_values_t = vec![2, 3, 5])]
    pub windows: Vec<usize>,
    /// Also write the feature-wise concatenation of all windows.
    #[arg(long)]
    pub concat: bool,
    /// Load word2vec-format vectors instead of counting.
    #[arg(long, conflicts_with_all = ["corpus", "concat"])]
    pub embeddings: Option<PathBuf>,
    /// Output prefix: writes PREFIX.w<W>.ctx, PREFIX.concat.ctx or PREFIX.emb.ctx.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long, value_parser = parse_method)]
    pub method: Method,
    /// Context matrix file (kmeans and spectral methods).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Corpus file (brown).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Lexicon file giving the word of every row.
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(short, long, default_value_t = 250)]
    pub k: usize,
    /// Random seed, required by kmeans and the spectral methods.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Affinity kernel: skew, skew-raw or gaussian.
    #[arg(long, default_value = "skew", value_parser = parse_kernel)]
    pub kernel: Kernel,
    /// Skew mixing weight a.
    #[arg(short = 'a', long, default_value_t = DEFAULT_SKEW)]
    pub skew: f64,
    /// Kernel bandwidth or `median`.
    #[arg(long, default_value = "median", value_parser = parse_sigma)]
    pub sigma: Sigma,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    pub restarts: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Spectral embedding dump (default: OUTPUT.embedding.tsv).
    #[arg(long)]
    pub dump: Option<PathBuf>,
    /// Brown merge history (default: OUTPUT.history.tsv).
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub first: PathBuf,
    pub second: PathBuf,
    /// Per-sample scores of two systems for the oracle analysis.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Report file (default: standard output).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

fn parse_kernel(s: &str) -> Result<Kernel, String> {
    s.parse()
}

fn parse_sigma(s: &str) -> Result<Sigma, String> {
    s.parse()
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn read_lexicon(path: &Path) -> Result<Lexicon> {
    Lexicon::read_tsv(open(path)?).with_context(|| format!("reading lexicon {}", path.display()))
}

pub fn cmd_lexicon(args: &LexiconArgs) -> Result<()> {
    let sentences = read_corpus(open(&args.corpus)?).with_context(|| format!("reading corpus {}", args.corpus.display()))?;
    let lexicon = build_lexicon(&sentences, args.size as usize)?;
    let mut out = create(&args.output)?;
    lexicon.write_tsv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn write_matrix(path: &Path, m: &ContextMatrix) -> Result<()> {
    let mut out = create(path)?;
    m.write(&mut out)?;
    out.flush()?;
    Ok(())
}

/// Returns the paths written.
pub fn cmd_context(args: &ContextArgs) -> Result<Vec<PathBuf>> {
    let lexicon = read_lexicon(&args.lexicon)?;
    if let Some(path) = &args.embeddings {
        let loaded = load_embedding_matrix(open(path)?, &lexicon)
            .with_context(|| format!("reading embeddings {}", path.display()))?;
        if !loaded.missing.is_empty() {
            let words: Vec<&str> = loaded.missing.iter().map(|&i| lexicon.word(i)).collect();
            eprintln!("{} lexicon words have no vector and were zero-filled: {}", words.len(), words.join(" "));
        }
        let target = with_suffix(&args.output, ".emb.ctx");
        write_matrix(&target, &loaded.matrix)?;
        return Ok(vec![target]);
    }
    let corpus = args.corpus.as_ref().expect("clap requires corpus without embeddings");
    if args.windows.is_empty() {
        bail!("at least one window size is required");
    }
    let sentences = read_corpus(open(corpus)?).with_context(|| format!("reading corpus {}", corpus.display()))?;
    let descriptors = select_descriptors(&lexicon, args.descriptors)?;
    let mut written = Vec::new();
    let mut matrices = Vec::new();
    for &w in &args.windows {
        let m = build_context_matrix(&sentences, &lexicon, &descriptors, w)?;
        let target = with_suffix(&args.output, &format!(".w{w}.ctx"));
        write_matrix(&target, &m)?;
        written.push(target);
        matrices.push(m);
    }
    if args.concat {
        let m = concat_context_matrices(&matrices)?;
        let target = with_suffix(&args.output, ".concat.ctx");
        write_matrix(&target, &m)?;
        written.push(target);
    }
    Ok(written)
}

fn require_seed(args: &ClusterArgs) -> Result<u64> {
    args.seed.with_context(|| format!("--seed is required for method {}", args.method))
}

pub fn cmd_cluster(args: &ClusterArgs) -> Result<()> {
    let lexicon = read_lexicon(&args.lexicon)?;
    let words: Vec<&str> = lexicon.words().collect();
    let kparams = KMeansParams { restarts: args.restarts, max_iter: args.max_iter, tol: DEFAULT_TOL };

    if args.method == Method::Brown {
        if args.input.is_some() {
            bail!("method brown reads --corpus, not a context matrix");
        }
        let corpus = args.corpus.as_ref().context("method brown needs --corpus")?;
        let sentences = read_corpus(open(corpus)?).with_context(|| format!("reading corpus {}", corpus.display()))?;
        let (clustering, history) = brown_cluster(&sentences, &lexicon, args.k)?;
        let mi = history.merges.last().map_or_else(
            || crate::brown::ClassBigramStats::from_encoded(&lexicon.encode(&sentences), lexicon.len()).mutual_information(),
            |m| m.mi_after,
        );
        let h = vocabulary_entropy(&lexicon);
        let meta = [("mi", mi.to_string()), ("entropy", h.to_string()), ("quality", (mi - h).to_string())];
        let mut out = create(&args.output)?;
        clustering.write_tsv(&mut out, words.iter().copied(), &meta)?;
        out.flush()?;
        let hist_path = args.history.clone().unwrap_or_else(|| with_suffix(&args.output, ".history.tsv"));
        let mut hist = create(&hist_path)?;
        history.write_tsv(&mut hist)?;
        hist.flush()?;
        return Ok(());
    }

    if args.corpus.is_some() {
        bail!("method {} reads a context matrix via --input, not --corpus", args.method);
    }
    let input = args.input.as_ref().with_context(|| format!("method {} needs --input", args.method))?;
    let seed = require_seed(args)?;
    let matrix = ContextMatrix::read(open(input)?).with_context(|| format!("reading context matrix {}", input.display()))?;
    if matrix.n_rows() != lexicon.len() {
        bail!(
            "context matrix {} has {} rows but lexicon {} has {} entries",
            input.display(),
            matrix.n_rows(),
            args.lexicon.display(),
            lexicon.len()
        );
    }

    if args.method == Method::KMeans {
        let r = kmeans(matrix.rows.view(), args.k, seed, &kparams)?;
        let meta = [
            ("seed", seed.to_string()),
            ("restarts", args.restarts.to_string()),
            ("objective", r.objective.to_string()),
        ];
        let mut out = create(&args.output)?;
        r.clustering.write_tsv(&mut out, words.iter().copied(), &meta)?;
        out.flush()?;
        return Ok(());
    }

    let aparams = AffinityParams { kernel: args.kernel, skew: args.skew, sigma: args.sigma };
    let affinity = build_affinity(&matrix, &aparams)?;
    let sparams = SpectralParams { kmeans: kparams, eigen_tol: EIGEN_TOL, eigen_max_iter: None };
    let result = match args.method {
        Method::SpectralNjw => njw_cluster(&affinity, args.k, seed, &sparams),
        Method::SpectralNcut => modified_ncut_cluster(&affinity, args.k, seed, &sparams),
        _ => unreachable!("kmeans and brown handled above"),
    };
    let result = result.map_err(|e| match e {
        SpectralError::ZeroDegree { index } => anyhow::anyhow!(
            "word {:?} (row {index}) has zero affinity to every other word; drop it or change the kernel",
            lexicon.word(index)
        ),
        other => other.into(),
    })?;
    if !result.zero_rows.is_empty() {
        eprintln!("{} rows had all-zero eigenvector coordinates and were set to the first unit vector", result.zero_rows.len());
    }
    let sigma = affinity.sigma.map_or_else(|| "none".to_string(), |s| s.to_string());
    let meta = [
        ("seed", seed.to_string()),
        ("kernel", args.kernel.to_string()),
        ("a", args.skew.to_string()),
        ("sigma", sigma),
        ("restarts", args.restarts.to_string()),
        ("windows", matrix.windows.iter().map(usize::to_string).collect::<Vec<_>>().join(",")),
    ];
    let mut out = create(&args.output)?;
    result.clustering.write_tsv(&mut out, words.iter().copied(), &meta)?;
    out.flush()?;

    let dump_path = args.dump.clone().unwrap_or_else(|| with_suffix(&args.output, ".embedding.tsv"));
    let centers = cluster_means(&result.embedding, &result.clustering);
    let mut dump = create(&dump_path)?;
    write_embedding_dump(&mut dump, words.iter().copied(), &result.embedding, &centers)?;
    dump.flush()?;
    Ok(())
}

fn read_clusters(path: &Path) -> Result<ClusterFile> {
    ClusterFile::read(open(path)?).with_context(|| format!("reading cluster file {}", path.display()))
}

pub fn compare_report(first: &ClusterFile, second: &ClusterFile, scores: Option<&ScoreTable>) -> Result<String> {
    if first.words != second.words {
        bail!("cluster files cover different lexicons");
    }
    let vi = variation_of_information(&first.clustering, &second.clustering)?;
    let nvi = normalized_vi(&first.clustering, &second.clustering)?;
    let mut out = Vec::new();
    writeln!(out, "n={}", first.words.len())?;
    writeln!(out, "vi={vi}")?;
    writeln!(out, "nvi={nvi}")?;
    writeln!(out, "nvi_normalizer=ln(n)")?;
    if let Some(table) = scores {
        oracle_analysis(table).write(&mut out)?;
    }
    Ok(String::from_utf8(out).expect("ascii report"))
}

pub fn cmd_compare(args: &CompareArgs) -> Result<String> {
    let first = read_clusters(&args.first)?;
    let second = read_clusters(&args.second)?;
    let scores = match &args.scores {
        Some(p) => Some(ScoreTable::read(open(p)?).with_context(|| format!("reading score file {}", p.display()))?),
        None => None,
    };
    let report = compare_report(&first, &second, scores.as_ref())
        .with_context(|| format!("comparing {} and {}", args.first.display(), args.second.display()))?;
    match &args.output {
        Some(p) => {
            let mut out = create(p)?;
            out.write_all(report.as_bytes())?;
            out.flush()?;
        }
        None => print!("{report}"),
    }
    Ok(report)
}

pub fn run(config: &RunConfig) -> Result<()> {
    match &config.command {
        Command::Lexicon(a) => cmd_lexicon(a),
        Command::Context(a) => cmd_context(a).map(|_| ()),
        Command::Cluster(a) => cmd_cluster(a),
        Command::Compare(a) => cmd_compare(a).map(|_| ()),
    }
}
