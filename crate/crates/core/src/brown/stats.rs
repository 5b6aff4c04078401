use std::collections::BTreeMap;

/// Class-bigram counts for a clustering of the lexicon.
///
/// Every lexicon word starts as its own cluster, identified by its lexicon
/// index. Merging `a < b` keeps id `a`. Probabilities are maximum-likelihood
/// ratios over the in-sentence bigram count; cluster marginals are the
/// bigram margins (left for the first position, right for the second).
#[derive(Debug, Clone)]
pub struct ClassBigramStats {
    total_tokens: u64,
    total_bigrams: u64,
    unigram: Vec<u64>,
    left: Vec<u64>,
    right: Vec<u64>,
    out: Vec<BTreeMap<usize, u64>>,
    inn: Vec<BTreeMap<usize, u64>>,
    alive: Vec<bool>,
    members: Vec<Vec<usize>>,
    cluster_of: Vec<usize>,
}

/// `p log(p / (pl pr))` for count `n` with margins `l`, `r` over `total`.
#[inline]
pub(crate) fn term(n: u64, l: u64, r: u64, total: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let total = total as f64;
    n / total * (n * total / (l as f64 * r as f64)).ln()
}

impl ClassBigramStats {
    /// Count unigrams and within-sentence bigrams of lexicon-encoded
    /// sentences over a vocabulary of `n_words`.
    pub fn from_encoded(sentences: &[Vec<usize>], n_words: usize) -> Self {
        let mut unigram = vec![0u64; n_words];
        let mut left = vec![0u64; n_words];
        let mut right = vec![0u64; n_words];
        let mut out = vec![BTreeMap::new(); n_words];
        let mut inn = vec![BTreeMap::new(); n_words];
        let mut total_tokens = 0;
        let mut total_bigrams = 0;
        for s in sentences {
            for &w in s {
                unigram[w] += 1;
                total_tokens += 1;
            }
            for pair in s.windows(2) {
                let (x, y) = (pair[0], pair[1]);
                *out[x].entry(y).or_insert(0) += 1;
                *inn[y].entry(x).or_insert(0) += 1;
                left[x] += 1;
                right[y] += 1;
                total_bigrams += 1;
            }
        }
        ClassBigramStats {
            total_tokens,
            total_bigrams,
            unigram,
            left,
            right,
            out,
            inn,
            alive: vec![true; n_words],
            members: (0..n_words).map(|w| vec![w]).collect(),
            cluster_of: (0..n_words).collect(),
        }
    }

    pub fn n_words(&self) -> usize {
        self.cluster_of.len()
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn total_bigrams(&self) -> u64 {
        self.total_bigrams
    }

    pub fn is_alive(&self, c: usize) -> bool {
        self.alive[c]
    }

    /// Ids of all current clusters, ascending.
    pub fn clusters(&self) -> Vec<usize> {
        (0..self.alive.len()).filter(|&c| self.alive[c]).collect()
    }

    pub fn cluster_count(&self) -> usize {
        self.alive.iter().filter(|a| **a).count()
    }

    pub fn unigram(&self, c: usize) -> u64 {
        self.unigram[c]
    }

    pub fn bigram(&self, c: usize, d: usize) -> u64 {
        self.out[c].get(&d).copied().unwrap_or(0)
    }

    pub fn cluster_of(&self, word: usize) -> usize {
        self.cluster_of[word]
    }

    pub fn members(&self, c: usize) -> &[usize] {
        &self.members[c]
    }

    /// Summed bigram counts over all ordered cluster pairs.
    pub fn bigram_mass(&self) -> u64 {
        self.clusters().iter().map(|&c| self.out[c].values().sum::<u64>()).sum()
    }

    #[inline]
    pub(crate) fn q(&self, c: usize, d: usize) -> f64 {
        term(self.bigram(c, d), self.left[c], self.right[d], self.total_bigrams)
    }

    /// `q(c, e) + q(e, c)` for `e != c`.
    #[inline]
    pub(crate) fn pair_terms(&self, c: usize, e: usize) -> f64 {
        self.q(c, e) + self.q(e, c)
    }

    /// Terms between the hypothetical union of `c` and `d` and another
    /// cluster `e`, in both directions.
    #[inline]
    pub(crate) fn union_terms(&self, c: usize, d: usize, e: usize) -> f64 {
        let t = self.total_bigrams;
        let to_e = self.bigram(c, e) + self.bigram(d, e);
        let from_e = self.bigram(e, c) + self.bigram(e, d);
        term(to_e, self.left[c] + self.left[d], self.right[e], t)
            + term(from_e, self.left[e], self.right[c] + self.right[d], t)
    }

    /// Class-bigram mutual information `I(C)` in nats, from scratch.
    pub fn mutual_information(&self) -> f64 {
        let t = self.total_bigrams;
        if t == 0 {
            return 0.0;
        }
        let mut sum = 0.0;
        for c in self.clusters() {
            for (&d, &n) in &self.out[c] {
                sum += term(n, self.left[c], self.right[d], t);
            }
        }
        sum
    }

    /// All terms of `I(C)` that involve cluster `c`.
    fn involving(&self, c: usize) -> f64 {
        let t = self.total_bigrams;
        let outgoing: f64 = self.out[c].iter().map(|(&d, &n)| term(n, self.left[c], self.right[d], t)).sum();
        let incoming: f64 = self
            .inn[c]
            .iter()
            .filter(|(&d, _)| d != c)
            .map(|(&d, &n)| term(n, self.left[d], self.right[c], t))
            .sum();
        outgoing + incoming
    }

    /// Decrease of `I(C)` caused by merging `a` and `b`, computed from the
    /// sparse neighbourhoods of the two clusters.
    pub fn merge_loss(&self, a: usize, b: usize) -> f64 {
        assert!(a != b && self.alive[a] && self.alive[b], "merge_loss needs two distinct live clusters");
        let t = self.total_bigrams;
        if t == 0 {
            return 0.0;
        }
        let before = self.involving(a) + self.involving(b) - self.q(a, b) - self.q(b, a);

        let l_m = self.left[a] + self.left[b];
        let r_m = self.right[a] + self.right[b];
        let mut to: BTreeMap<usize, u64> = BTreeMap::new();
        let mut from: BTreeMap<usize, u64> = BTreeMap::new();
        let mut self_count = 0;
        for x in [a, b] {
            for (&d, &n) in &self.out[x] {
                if d == a || d == b {
                    self_count += n;
                } else {
                    *to.entry(d).or_insert(0) += n;
                }
            }
            for (&d, &n) in &self.inn[x] {
                if d != a && d != b {
                    *from.entry(d).or_insert(0) += n;
                }
            }
        }
        let mut after = term(self_count, l_m, r_m, t);
        for (d, n) in to {
            after += term(n, l_m, self.right[d], t);
        }
        for (d, n) in from {
            after += term(n, self.left[d], r_m, t);
        }
        before - after
    }

    /// Merge `a` and `b`; the smaller id survives and is returned.
    pub fn merge(&mut self, a: usize, b: usize) -> usize {
        assert!(a != b && self.alive[a] && self.alive[b], "merge needs two distinct live clusters");
        let (keep, gone) = if a < b { (a, b) } else { (b, a) };
        let gone_out = std::mem::take(&mut self.out[gone]);
        let gone_in = std::mem::take(&mut self.inn[gone]);
        for (&d, &n) in &gone_out {
            let d2 = if d == gone { keep } else { d };
            *self.out[keep].entry(d2).or_insert(0) += n;
            if d != gone {
                let e = self.inn[d].remove(&gone).expect("symmetric bookkeeping");
                *self.inn[d].entry(keep).or_insert(0) += e;
            }
        }
        for (&d, &n) in &gone_in {
            if d == gone {
                *self.inn[keep].entry(keep).or_insert(0) += n;
                continue;
            }
            *self.inn[keep].entry(d).or_insert(0) += n;
            if d != keep {
                let e = self.out[d].remove(&gone).expect("symmetric bookkeeping");
                *self.out[d].entry(keep).or_insert(0) += e;
            }
        }
        // keep -> gone edges now point at keep itself.
        if let Some(n) = self.out[keep].remove(&gone) {
            *self.out[keep].entry(keep).or_insert(0) += n;
        }
        if let Some(n) = self.inn[keep].remove(&gone) {
            *self.inn[keep].entry(keep).or_insert(0) += n;
        }
        self.unigram[keep] += std::mem::take(&mut self.unigram[gone]);
        self.left[keep] += std::mem::take(&mut self.left[gone]);
        self.right[keep] += std::mem::take(&mut self.right[gone]);
        self.alive[gone] = false;
        let moved = std::mem::take(&mut self.members[gone]);
        for &w in &moved {
            self.cluster_of[w] = keep;
        }
        self.members[keep].extend(moved);
        keep
    }

    /// Assignment of words to dense cluster ids `0..count`, numbered by
    /// ascending representative id.
    pub fn assignment(&self) -> (Vec<usize>, usize) {
        compact(&self.cluster_of)
    }
}

/// Relabel representative ids to `0..count` in ascending order.
pub(crate) fn compact(representatives: &[usize]) -> (Vec<usize>, usize) {
    let mut reps: Vec<usize> = representatives.to_vec();
    reps.sort_unstable();
    reps.dedup();
    let mut label = vec![usize::MAX; representatives.len().max(reps.last().map_or(0, |r| r + 1))];
    for (i, &r) in reps.iter().enumerate() {
        label[r] = i;
    }
    (representatives.iter().map(|&r| label[r]).collect(), reps.len())
}
