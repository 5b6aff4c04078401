//! Corpus ingestion: sentence tokenization, the frequency-ranked lexicon and
//! the token-to-index mapping with `RARE` fallback.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use thiserror::Error;

/// Literal surface form of the catch-all lexicon entry.
pub const RARE: &str = "RARE";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("lexicon size must be at least 2, got {0}")]
    LexiconTooSmall(usize),
    #[error("corpus contains no tokens")]
    EmptyCorpus,
    #[error("invalid token {0:?}: tokens must be non-empty and contain no whitespace")]
    InvalidToken(String),
    #[error("lexicon file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A single whitespace-free corpus token.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token(String);

impl Token {
    pub fn new(surface: impl Into<String>) -> Result<Self, CorpusError> {
        let surface = surface.into();
        if surface.is_empty() || surface.chars().any(char::is_whitespace) {
            return Err(CorpusError::InvalidToken(surface));
        }
        Ok(Token(surface))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub type Sentence = Vec<Token>;

/// Lowercase the first character of a sentence-initial token.
fn decapitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Split one line into tokens, decapitalizing only the first one.
pub fn tokenize_line(line: &str) -> Sentence {
    line.split_whitespace()
        .enumerate()
        .map(|(i, w)| {
            let surface = if i == 0 { decapitalize(w) } else { w.to_string() };
            Token(surface)
        })
        .collect()
}

/// Tokenize a newline-delimited corpus. Empty lines produce no sentence.
pub fn tokenize_corpus(raw: &str) -> Vec<Sentence> {
    raw.lines()
        .map(tokenize_line)
        .filter(|s| !s.is_empty())
        .collect()
}

/// Streaming variant of [`tokenize_corpus`] for large files.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<Sentence>, CorpusError> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let sentence = tokenize_line(&line?);
        if !sentence.is_empty() {
            out.push(sentence);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub word: String,
    pub frequency: u64,
}

/// Frequency-ranked vocabulary. The last entry is always `RARE`.
#[derive(Debug, Clone)]
pub struct Lexicon {
    entries: Vec<LexiconEntry>,
    index: HashMap<String, usize>,
}

impl PartialEq for Lexicon {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl Lexicon {
    /// Assemble a lexicon from already ranked non-`RARE` entries plus the
    /// `RARE` frequency. Panics if ranking or distinctness is violated.
    fn from_ranked(mut entries: Vec<LexiconEntry>, rare_frequency: u64) -> Self {
        entries.push(LexiconEntry { word: RARE.to_string(), frequency: rare_frequency });
        let index: HashMap<String, usize> =
            entries.iter().enumerate().map(|(i, e)| (e.word.clone(), i)).collect();
        assert_eq!(index.len(), entries.len(), "lexicon words must be distinct");
        Lexicon { entries, index }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn rare_index(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn word(&self, index: usize) -> &str {
        &self.entries[index].word
    }

    pub fn frequency(&self, index: usize) -> u64 {
        self.entries[index].frequency
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.word.as_str())
    }

    pub fn total_count(&self) -> u64 {
        self.entries.iter().map(|e| e.frequency).sum()
    }

    /// Index of `word`, or the `RARE` index for out-of-lexicon words.
    pub fn index_of(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or_else(|| self.rare_index())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    /// Map every token of every sentence to its lexicon index.
    pub fn encode(&self, sentences: &[Sentence]) -> Vec<Vec<usize>> {
        sentences
            .par_iter()
            .map(|s| s.iter().map(|t| index_token(self, t)).collect())
            .collect()
    }

    /// Write the lexicon as `rank<TAB>word<TAB>frequency` rows, rank being
    /// the zero-based lexicon index.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (rank, e) in self.entries.iter().enumerate() {
            writeln!(out, "{rank}\t{}\t{}", e.word, e.frequency)?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self, CorpusError> {
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| CorpusError::Parse { line: lineno, msg };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(parse_err(format!("expected 3 tab-separated fields, found {}", fields.len())));
            }
            let rank: usize = fields[0]
                .parse()
                .map_err(|_| parse_err(format!("bad rank {:?}", fields[0])))?;
            if rank != entries.len() {
                return Err(parse_err(format!("rank {rank} out of sequence, expected {}", entries.len())));
            }
            let frequency: u64 = fields[2]
                .parse()
                .map_err(|_| parse_err(format!("bad frequency {:?}", fields[2])))?;
            Token::new(fields[1]).map_err(|e| parse_err(e.to_string()))?;
            entries.push(LexiconEntry { word: fields[1].to_string(), frequency });
        }
        let n = entries.len();
        match entries.pop() {
            Some(last) if last.word == RARE => {
                let mut seen = std::collections::HashSet::new();
                for e in &entries {
                    if !seen.insert(e.word.as_str()) || e.word == RARE {
                        return Err(CorpusError::Parse { line: 0, msg: format!("duplicate word {:?}", e.word) });
                    }
                }
                Ok(Lexicon::from_ranked(entries, last.frequency))
            }
            _ => Err(CorpusError::Parse { line: n, msg: "last row must be the RARE entry".into() }),
        }
    }
}

/// Count token frequencies. Partial counts are merged, so the result does
/// not depend on how sentences are split across threads.
pub fn count_tokens(sentences: &[Sentence]) -> HashMap<&str, u64> {
    sentences
        .par_iter()
        .fold(HashMap::new, |mut acc: HashMap<&str, u64>, s| {
            for t in s {
                *acc.entry(t.as_str()).or_insert(0) += 1;
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (w, c) in b {
                *a.entry(w).or_insert(0) += c;
            }
            a
        })
}

/// Keep the `size - 1` most frequent words (descending frequency, ascending
/// lexicographic on ties) and fold everything else into `RARE`.
///
/// A corpus with fewer distinct words yields a smaller lexicon; the literal
/// token `RARE` always counts towards the `RARE` entry.
pub fn build_lexicon(sentences: &[Sentence], size: usize) -> Result<Lexicon, CorpusError> {
    if size < 2 {
        return Err(CorpusError::LexiconTooSmall(size));
    }
    let counts = count_tokens(sentences);
    if counts.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut rare_frequency = counts.get(RARE).copied().unwrap_or(0);
    let mut ranked: Vec<(&str, u64)> =
        counts.into_iter().filter(|(w, _)| *w != RARE).collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let keep = ranked.len().min(size - 1);
    rare_frequency += ranked[keep..].iter().map(|(_, c)| c).sum::<u64>();
    let entries = ranked[..keep]
        .iter()
        .map(|(w, c)| LexiconEntry { word: w.to_string(), frequency: *c })
        .collect();
    Ok(Lexicon::from_ranked(entries, rare_frequency))
}

pub fn index_token(lexicon: &Lexicon, token: &Token) -> usize {
    lexicon.index_of(token.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(s: &Sentence) -> Vec<&str> {
        s.iter().map(Token::as_str).collect()
    }

    fn entries(lex: &Lexicon) -> Vec<(&str, u64)> {
        lex.entries().iter().map(|e| (e.word.as_str(), e.frequency)).collect()
    }

    #[test]
    fn decapitalizes_first_token_only() {
        let s = tokenize_corpus("The cat sat");
        assert_eq!(s.len(), 1);
        assert_eq!(words(&s[0]), ["the", "cat", "sat"]);
    }

    #[test]
    fn empty_input_has_no_sentences() {
        assert!(tokenize_corpus("").is_empty());
        assert!(tokenize_corpus("\n\n  \n").is_empty());
    }

    #[test]
    fn hand_traced_multi_sentence() {
        let s = tokenize_corpus("A A a\nB b");
        assert_eq!(s.len(), 2);
        assert_eq!(words(&s[0]), ["a", "A", "a"]);
        assert_eq!(words(&s[1]), ["b", "b"]);
    }

    #[test]
    fn decapitalizes_non_ascii() {
        let s = tokenize_corpus("Élan Vital");
        assert_eq!(words(&s[0]), ["élan", "Vital"]);
    }

    #[test]
    fn lexicon_all_retained() {
        let lex = build_lexicon(&tokenize_corpus("a a b"), 3).unwrap();
        assert_eq!(entries(&lex), [("a", 2), ("b", 1), ("RARE", 0)]);
        assert_eq!(lex.rare_index(), 2);
    }

    #[test]
    fn lexicon_tie_broken_lexicographically() {
        let lex = build_lexicon(&tokenize_corpus("a a b c"), 3).unwrap();
        assert_eq!(entries(&lex), [("a", 2), ("b", 1), ("RARE", 1)]);
    }

    #[test]
    fn lexicon_smaller_than_requested() {
        let lex = build_lexicon(&tokenize_corpus("x"), 5).unwrap();
        assert_eq!(entries(&lex), [("x", 1), ("RARE", 0)]);
        assert_eq!(lex.len(), 2);
    }

    #[test]
    fn lexicon_rejects_bad_input() {
        assert!(matches!(build_lexicon(&tokenize_corpus("a"), 1), Err(CorpusError::LexiconTooSmall(1))));
        assert!(matches!(build_lexicon(&[], 3), Err(CorpusError::EmptyCorpus)));
    }

    #[test]
    fn literal_rare_token_folds_into_rare_entry() {
        let lex = build_lexicon(&tokenize_corpus("a RARE RARE b"), 10).unwrap();
        assert_eq!(entries(&lex), [("a", 1), ("b", 1), ("RARE", 2)]);
    }

    #[test]
    fn index_token_fallback() {
        let lex = build_lexicon(&tokenize_corpus("a a b"), 3).unwrap();
        assert_eq!(index_token(&lex, &Token::new("a").unwrap()), 0);
        assert_eq!(index_token(&lex, &Token::new("zzz").unwrap()), lex.rare_index());
        assert_eq!(index_token(&lex, &Token::new("RARE").unwrap()), lex.rare_index());
    }

    #[test]
    fn token_validation() {
        assert!(Token::new("").is_err());
        assert!(Token::new("a b").is_err());
        assert!(Token::new("ok").is_ok());
    }

    #[test]
    fn tsv_round_trip() {
        let lex = build_lexicon(&tokenize_corpus("the cat sat on the mat\nthe dog"), 4).unwrap();
        let mut buf = Vec::new();
        lex.write_tsv(&mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().next(), Some("0\tthe\t3"));
        let back = Lexicon::read_tsv(&buf[..]).unwrap();
        assert_eq!(back, lex);
    }

    #[test]
    fn tsv_rejects_missing_rare() {
        let err = Lexicon::read_tsv(&b"0\ta\t2\n1\tb\t1\n"[..]).unwrap_err();
        assert!(err.to_string().contains("RARE"));
    }

    fn corpus_strategy() -> impl Strategy<Value = Vec<Vec<String>>> {
        prop::collection::vec(
            prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e", "RARE", "Ff"]), 1..8)
                .prop_map(|s| s.into_iter().map(String::from).collect()),
            1..12,
        )
    }

    fn to_sentences(raw: &[Vec<String>]) -> Vec<Sentence> {
        raw.iter().map(|s| s.iter().map(|w| Token::new(w.clone()).unwrap()).collect()).collect()
    }

    proptest! {
        #[test]
        fn frequencies_sum_to_token_count(raw in corpus_strategy(), size in 2usize..8) {
            let sentences = to_sentences(&raw);
            let lex = build_lexicon(&sentences, size).unwrap();
            let tokens: usize = sentences.iter().map(Vec::len).sum();
            prop_assert_eq!(lex.total_count(), tokens as u64);
            prop_assert!(lex.len() <= size);
            prop_assert_eq!(lex.word(lex.rare_index()), RARE);
            let ranked = &lex.entries()[..lex.rare_index()];
            for w in ranked.windows(2) {
                prop_assert!(w[0].frequency > w[1].frequency
                    || (w[0].frequency == w[1].frequency && w[0].word < w[1].word));
            }
        }

        #[test]
        fn lexicon_ignores_sentence_order(raw in corpus_strategy(), size in 2usize..8) {
            let mut rev = raw.clone();
            rev.reverse();
            let a = build_lexicon(&to_sentences(&raw), size).unwrap();
            let b = build_lexicon(&to_sentences(&rev), size).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
