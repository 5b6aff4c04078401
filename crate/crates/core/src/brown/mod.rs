//! Greedy agglomerative Brown clustering.
//!
//! Words are visited in lexicon (frequency) order. The first `k` words seed
//! the active set; each further word joins it as a new cluster and the pair
//! of active clusters whose merge loses the least class-bigram mutual
//! information is merged, restoring `k` active clusters. The remaining
//! words wait as singleton clusters and count towards `I(C)` throughout.
//!
//! Merge losses for all active pairs are cached. After a merge only the
//! terms involving the two merged clusters change, so every cached loss is
//! patched in constant time and only the pairs with the new cluster are
//! recomputed.

mod stats;

use std::io::{BufRead, Write};

use thiserror::Error;

pub use stats::ClassBigramStats;

use crate::clustering::{Clustering, Method};
use crate::corpus::{Lexicon, Sentence};

/// Losses within this distance of the minimum count as ties, which are then
/// broken by the smallest `(a, b)` id pair.
pub const TIE_EPS: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum BrownError {
    #[error("k = {k} must lie between 2 and the lexicon size {n}")]
    BadK { k: usize, n: usize },
    #[error("merge history line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeRecord {
    pub a: usize,
    pub b: usize,
    /// `I(C)` after the merge.
    pub mi_after: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MergeHistory {
    pub merges: Vec<MergeRecord>,
}

impl MergeHistory {
    /// Apply the merges to `n_words` singletons; ids are compacted in
    /// ascending representative order, matching [`brown_cluster`].
    pub fn replay(&self, n_words: usize) -> (Vec<usize>, usize) {
        let mut rep: Vec<usize> = (0..n_words).collect();
        let mut members: Vec<Vec<usize>> = (0..n_words).map(|w| vec![w]).collect();
        for m in &self.merges {
            let (keep, gone) = (m.a.min(m.b), m.a.max(m.b));
            let moved = std::mem::take(&mut members[gone]);
            for &w in &moved {
                rep[w] = keep;
            }
            members[keep].extend(moved);
        }
        stats::compact(&rep)
    }

    /// `step<TAB>cluster_a<TAB>cluster_b<TAB>I_after` rows, steps from 1.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, m) in self.merges.iter().enumerate() {
            writeln!(out, "{}\t{}\t{}\t{}", i + 1, m.a, m.b, m.mi_after)?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self, BrownError> {
        let mut merges = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| BrownError::Parse { line: i + 1, msg: msg.to_string() };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(err("expected 4 tab-separated fields"));
            }
            merges.push(MergeRecord {
                a: f[1].parse().map_err(|_| err("bad cluster id"))?,
                b: f[2].parse().map_err(|_| err("bad cluster id"))?,
                mi_after: f[3].parse().map_err(|_| err("bad mutual information"))?,
            });
        }
        Ok(MergeHistory { merges })
    }
}

/// Entropy of the lexicon's unigram distribution, in nats.
pub fn vocabulary_entropy(lexicon: &Lexicon) -> f64 {
    let total = lexicon.total_count() as f64;
    if total == 0.0 {
        return 0.0;
    }
    -lexicon
        .entries()
        .iter()
        .filter(|e| e.frequency > 0)
        .map(|e| {
            let p = e.frequency as f64 / total;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Pick the minimum-loss pair; near-ties go to the smallest `(a, b)`.
fn select(candidates: impl IntoIterator<Item = ((usize, usize), f64)>) -> Option<((usize, usize), f64)> {
    let all: Vec<((usize, usize), f64)> = candidates.into_iter().collect();
    let min = all.iter().map(|(_, l)| *l).fold(f64::INFINITY, f64::min);
    all.into_iter().filter(|(_, l)| *l <= min + TIE_EPS).min_by_key(|(pair, _)| *pair)
}

/// Best merge over all live clusters of `stats`: the pair and the change in
/// `I(C)` (never positive).
pub fn best_merge(stats: &ClassBigramStats) -> Option<((usize, usize), f64)> {
    let clusters = stats.clusters();
    best_merge_among(stats, &clusters)
}

/// Best merge restricted to the given clusters.
pub fn best_merge_among(stats: &ClassBigramStats, clusters: &[usize]) -> Option<((usize, usize), f64)> {
    let mut pairs = Vec::new();
    for (i, &a) in clusters.iter().enumerate() {
        for &b in &clusters[i + 1..] {
            let (a, b) = (a.min(b), a.max(b));
            pairs.push(((a, b), stats.merge_loss(a, b)));
        }
    }
    select(pairs).map(|(pair, loss)| (pair, -loss))
}

/// Incremental Brown clustering state.
#[derive(Debug, Clone)]
pub struct BrownClusterer {
    stats: ClassBigramStats,
    k: usize,
    /// Active cluster ids by slot; `None` marks a free slot.
    slots: Vec<Option<usize>>,
    /// Cached merge losses between slots (upper triangle used).
    loss: Vec<Vec<f64>>,
    mi: f64,
    next_word: usize,
    history: MergeHistory,
}

impl BrownClusterer {
    pub fn new(stats: ClassBigramStats, k: usize) -> Result<Self, BrownError> {
        let n = stats.n_words();
        if k < 2 || k > n {
            return Err(BrownError::BadK { k, n });
        }
        let mi = stats.mutual_information();
        let mut slots = vec![None; k + 1];
        for (w, slot) in slots.iter_mut().take(k).enumerate() {
            *slot = Some(w);
        }
        let mut this = BrownClusterer {
            stats,
            k,
            slots,
            loss: vec![vec![0.0; k + 1]; k + 1],
            mi,
            next_word: k,
            history: MergeHistory::default(),
        };
        for s in 0..k {
            this.refresh_slot(s);
        }
        Ok(this)
    }

    pub fn stats(&self) -> &ClassBigramStats {
        &self.stats
    }

    /// `I(C)` tracked through cached losses.
    pub fn mutual_information(&self) -> f64 {
        self.mi
    }

    pub fn history(&self) -> &MergeHistory {
        &self.history
    }

    pub fn is_done(&self) -> bool {
        self.next_word >= self.stats.n_words()
    }

    pub fn active(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.slots.iter().flatten().copied().collect();
        ids.sort_unstable();
        ids
    }

    fn slot_pairs(&self) -> Vec<(usize, usize)> {
        let live: Vec<usize> = (0..self.slots.len()).filter(|&s| self.slots[s].is_some()).collect();
        let mut out = Vec::new();
        for (i, &s) in live.iter().enumerate() {
            for &t in &live[i + 1..] {
                out.push((s, t));
            }
        }
        out
    }

    fn id(&self, slot: usize) -> usize {
        self.slots[slot].expect("live slot")
    }

    fn set_loss(&mut self, s: usize, t: usize, v: f64) {
        self.loss[s][t] = v;
        self.loss[t][s] = v;
    }

    /// Recompute from scratch the losses between `slot` and every other
    /// live slot.
    fn refresh_slot(&mut self, slot: usize) {
        let c = self.id(slot);
        for t in 0..self.slots.len() {
            if t == slot {
                continue;
            }
            if let Some(d) = self.slots[t] {
                let v = self.stats.merge_loss(c, d);
                self.set_loss(slot, t, v);
            }
        }
    }

    /// Cached losses of all active pairs, keyed by `(smaller id, larger id)`.
    pub fn candidate_losses(&self) -> Vec<((usize, usize), f64)> {
        self.slot_pairs()
            .into_iter()
            .map(|(s, t)| {
                let (a, b) = (self.id(s), self.id(t));
                ((a.min(b), a.max(b)), self.loss[s][t])
            })
            .collect()
    }

    /// Activate the next word in frequency order. Returns its id, or `None`
    /// when every word has been inserted.
    pub fn insert_next(&mut self) -> Option<usize> {
        if self.is_done() {
            return None;
        }
        let w = self.next_word;
        self.next_word += 1;
        let slot = self.slots.iter().position(Option::is_none).expect("a free slot after each merge");
        self.slots[slot] = Some(w);
        self.refresh_slot(slot);
        Some(w)
    }

    /// The pair the next merge would take and its loss.
    pub fn best_candidate(&self) -> Option<((usize, usize), f64)> {
        select(self.candidate_losses())
    }

    /// Merge the best active pair and patch the cached losses.
    pub fn merge_best(&mut self) -> Option<MergeRecord> {
        let ((a, b), loss) = self.best_candidate()?;
        let slot_a = self.slots.iter().position(|s| *s == Some(a)).expect("active");
        let slot_b = self.slots.iter().position(|s| *s == Some(b)).expect("active");
        let others: Vec<usize> =
            (0..self.slots.len()).filter(|&s| s != slot_a && s != slot_b && self.slots[s].is_some()).collect();

        // Terms of each cached loss that involve a or b, before the merge.
        let touching: Vec<f64> =
            others.iter().map(|&s| self.stats.pair_terms(self.id(s), a) + self.stats.pair_terms(self.id(s), b)).collect();
        let mut before = vec![vec![0.0; others.len()]; others.len()];
        for i in 0..others.len() {
            for j in (i + 1)..others.len() {
                let (c, d) = (self.id(others[i]), self.id(others[j]));
                before[i][j] = touching[i] + touching[j]
                    - self.stats.union_terms(c, d, a)
                    - self.stats.union_terms(c, d, b);
            }
        }

        let merged = self.stats.merge(a, b);
        debug_assert_eq!(merged, a);
        self.slots[slot_b] = None;

        let touching: Vec<f64> = others.iter().map(|&s| self.stats.pair_terms(self.id(s), merged)).collect();
        for i in 0..others.len() {
            for j in (i + 1)..others.len() {
                let (c, d) = (self.id(others[i]), self.id(others[j]));
                let after = touching[i] + touching[j] - self.stats.union_terms(c, d, merged);
                let v = self.loss[others[i]][others[j]] - before[i][j] + after;
                self.set_loss(others[i], others[j], v);
            }
        }
        self.refresh_slot(slot_a);

        self.mi -= loss;
        let record = MergeRecord { a, b, mi_after: self.mi };
        self.history.merges.push(record);
        Some(record)
    }

    /// Insert all remaining words, merging after each insertion.
    pub fn run(&mut self) {
        while self.insert_next().is_some() {
            self.merge_best();
        }
    }

    pub fn clustering(&self) -> Clustering {
        let (assignment, count) = self.stats.assignment();
        debug_assert!(!self.is_done() || count == self.k);
        Clustering::new(assignment, count, Method::Brown).expect("compact ids")
    }

    pub fn into_parts(self) -> (Clustering, MergeHistory) {
        (self.clustering(), self.history)
    }
}

pub fn brown_cluster(sentences: &[Sentence], lexicon: &Lexicon, k: usize) -> Result<(Clustering, MergeHistory), BrownError> {
    let encoded = lexicon.encode(sentences);
    brown_cluster_encoded(&encoded, lexicon.len(), k)
}

pub fn brown_cluster_encoded(sentences: &[Vec<usize>], n_words: usize, k: usize) -> Result<(Clustering, MergeHistory), BrownError> {
    let stats = ClassBigramStats::from_encoded(sentences, n_words);
    let mut clusterer = BrownClusterer::new(stats, k)?;
    clusterer.run();
    Ok(clusterer.into_parts())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_lexicon, tokenize_corpus};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `I(C)` straight from the definition over a label vector.
    fn mi_oracle(sentences: &[Vec<usize>], labels: &[usize]) -> f64 {
        use std::collections::HashMap;
        let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
        let mut total = 0.0;
        for s in sentences {
            for p in s.windows(2) {
                *joint.entry((labels[p[0]], labels[p[1]])).or_insert(0.0) += 1.0;
                total += 1.0;
            }
        }
        let mut left: HashMap<usize, f64> = HashMap::new();
        let mut right: HashMap<usize, f64> = HashMap::new();
        for (&(x, y), &n) in &joint {
            *left.entry(x).or_insert(0.0) += n / total;
            *right.entry(y).or_insert(0.0) += n / total;
        }
        joint.iter().map(|(&(x, y), &n)| {
            let p = n / total;
            p * (p / (left[&x] * right[&y])).ln()
        }).sum()
    }

    fn random_corpus(seed: u64, vocab: usize, tokens: usize) -> Vec<Vec<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        let mut left = tokens;
        while left > 0 {
            let len = rng.random_range(1..12).min(left);
            // Skewed unigram draw so frequencies differ.
            out.push((0..len).map(|_| {
                let u: f64 = rng.random();
                ((u * u) * vocab as f64) as usize
            }).collect());
            left -= len;
        }
        out
    }

    #[test]
    fn single_cluster_has_zero_mi() {
        let s = vec![vec![0, 1, 2, 1, 0]];
        let mut stats = ClassBigramStats::from_encoded(&s, 3);
        stats.merge(0, 1);
        stats.merge(0, 2);
        assert_eq!(stats.cluster_count(), 1);
        assert_eq!(stats.mutual_information(), 0.0);
    }

    #[test]
    fn abab_mutual_information() {
        // bigrams ab, ba, ab: joint (2/3, 1/3), left margins a 2/3 b 1/3,
        // right margins b 2/3 a 1/3.
        let s = vec![vec![0, 1, 0, 1]];
        let stats = ClassBigramStats::from_encoded(&s, 2);
        let expected = (2.0 / 3.0) * (1.5f64).ln() + (1.0 / 3.0) * 3f64.ln();
        assert!((stats.mutual_information() - expected).abs() < 1e-12);
        assert!((mi_oracle(&s, &[0, 1]) - expected).abs() < 1e-12);
    }

    #[test]
    fn entropy_examples() {
        let uniform = build_lexicon(&tokenize_corpus("a b c d"), 5).unwrap();
        // four words with count 1 plus RARE with count 0
        assert!((vocabulary_entropy(&uniform) - 4f64.ln()).abs() < 1e-12);
        let single = build_lexicon(&tokenize_corpus("a a"), 3).unwrap();
        assert_eq!(vocabulary_entropy(&single), 0.0);
        let skew = build_lexicon(&tokenize_corpus("a a a b"), 3).unwrap();
        let expected = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        assert!((vocabulary_entropy(&skew) - expected).abs() < 1e-12);
        assert!((expected - 0.5623).abs() < 1e-4);
    }

    #[test]
    fn stats_invariants_survive_merges() {
        let s = random_corpus(3, 12, 300);
        let mut stats = ClassBigramStats::from_encoded(&s, 12);
        let tokens: usize = s.iter().map(Vec::len).sum();
        let pairs: usize = s.iter().map(|x| x.len().saturating_sub(1)).sum();
        for (a, b) in [(0, 5), (2, 7), (0, 2), (11, 3)] {
            stats.merge(a, b);
            let uni: u64 = stats.clusters().iter().map(|&c| stats.unigram(c)).sum();
            assert_eq!(uni, tokens as u64);
            assert_eq!(stats.bigram_mass(), pairs as u64);
            let labels: Vec<usize> = (0..12).map(|w| stats.cluster_of(w)).collect();
            assert!((stats.mutual_information() - mi_oracle(&s, &labels)).abs() < 1e-12);
        }
    }

    #[test]
    fn two_clusters_only_pair() {
        let s = vec![vec![0, 1, 1, 0]];
        let stats = ClassBigramStats::from_encoded(&s, 2);
        let (pair, delta) = best_merge(&stats).unwrap();
        assert_eq!(pair, (0, 1));
        assert!((delta + stats.mutual_information()).abs() < 1e-12);
    }

    #[test]
    fn best_merge_matches_exhaustive_oracle() {
        for seed in 0..20 {
            let vocab = 8;
            let s = random_corpus(seed, vocab, 120);
            let stats = ClassBigramStats::from_encoded(&s, vocab);
            let (pair, delta) = best_merge(&stats).unwrap();
            let base = stats.mutual_information();
            let mut oracle = Vec::new();
            for a in 0..vocab {
                for b in (a + 1)..vocab {
                    let mut trial = stats.clone();
                    trial.merge(a, b);
                    oracle.push(((a, b), base - trial.mutual_information()));
                }
            }
            let (opair, oloss) = select(oracle).unwrap();
            assert_eq!(pair, opair, "seed {seed}");
            assert!((delta + oloss).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_contexts_merge_first() {
        // x=1 and y=2 appear in exactly the same contexts.
        let s = vec![vec![0, 1, 3], vec![0, 2, 3], vec![3, 1, 0], vec![3, 2, 0], vec![0, 3, 0, 3]];
        let stats = ClassBigramStats::from_encoded(&s, 4);
        assert_eq!(best_merge(&stats).unwrap().0, (1, 2));
    }

    #[test]
    fn toy_corpus_groups_cat_and_dog() {
        let sentences = tokenize_corpus("the cat sat .\nthe dog sat .");
        let lex = build_lexicon(&sentences, 100).unwrap();
        let (c, h) = brown_cluster(&sentences, &lex, 3).unwrap();
        let cat = c.assignment[lex.index_of("cat")];
        let dog = c.assignment[lex.index_of("dog")];
        assert_eq!(cat, dog);
        assert_eq!(c.k, 3);
        assert_eq!(h.merges.len(), lex.len() - 3);
    }

    #[test]
    fn k_equals_lexicon_size() {
        let sentences = tokenize_corpus("a b c a");
        let lex = build_lexicon(&sentences, 10).unwrap();
        let (c, h) = brown_cluster(&sentences, &lex, lex.len()).unwrap();
        assert!(h.merges.is_empty());
        assert_eq!(c.assignment, (0..lex.len()).collect::<Vec<_>>());
        assert!(matches!(brown_cluster(&sentences, &lex, lex.len() + 1), Err(BrownError::BadK { .. })));
        assert!(matches!(brown_cluster(&sentences, &lex, 1), Err(BrownError::BadK { .. })));
    }

    #[test]
    fn incremental_losses_track_scratch() {
        for seed in 0..6 {
            let vocab = 25;
            let s = random_corpus(seed + 100, vocab, 700);
            let stats = ClassBigramStats::from_encoded(&s, vocab);
            let mut bc = BrownClusterer::new(stats, 4).unwrap();
            let mut last_mi = bc.mutual_information();
            while bc.insert_next().is_some() {
                for ((a, b), cached) in bc.candidate_losses() {
                    let scratch = bc.stats().merge_loss(a, b);
                    assert!((cached - scratch).abs() < 1e-9, "seed {seed}: {cached} vs {scratch}");
                }
                bc.merge_best().unwrap();
                let labels: Vec<usize> = (0..vocab).map(|w| bc.stats().cluster_of(w)).collect();
                let oracle = mi_oracle(&s, &labels);
                assert!((bc.mutual_information() - oracle).abs() < 1e-9);
                assert!(oracle <= last_mi + 1e-12);
                assert!(oracle >= -1e-12);
                last_mi = oracle;
            }
            assert_eq!(bc.active().len(), 4);
            let (c, h) = bc.into_parts();
            assert_eq!(h.replay(vocab), (c.assignment.clone(), 4));
        }
    }

    #[test]
    fn history_round_trip() {
        let s = random_corpus(7, 10, 200);
        let (c, h) = brown_cluster_encoded(&s, 10, 3).unwrap();
        let mut buf = Vec::new();
        h.write_tsv(&mut buf).unwrap();
        let back = MergeHistory::read_tsv(&buf[..]).unwrap();
        assert_eq!(back, h);
        assert_eq!(back.replay(10).0, c.assignment);
    }
}
