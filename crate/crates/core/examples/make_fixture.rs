//! Regenerate `tests/fixtures/corpus_100k.txt`, a synthetic corpus drawn
//! from a small class-based grammar.
//!
//!     cargo run --release --example make_fixture -- tests/fixtures/corpus_100k.txt

use std::fs::File;
use std::io::{BufWriter, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_131_119;
const TARGET_TOKENS: usize = 100_000;

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "pl", "gr"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];

struct Class {
    words: Vec<String>,
    weights: WeightedIndex<f64>,
}

impl Class {
    fn fixed(words: &[&str]) -> Self {
        Self::from_words(words.iter().map(|w| w.to_string()).collect())
    }

    fn invented(rng: &mut ChaCha8Rng, count: usize, suffix: &str, taken: &mut std::collections::HashSet<String>) -> Self {
        let mut words = Vec::with_capacity(count);
        while words.len() < count {
            let syllables = rng.random_range(1..=2);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
                w.push_str(VOWELS[rng.random_range(0..VOWELS.len())]);
            }
            w.push_str(suffix);
            if taken.insert(w.clone()) {
                words.push(w);
            }
        }
        Self::from_words(words)
    }

    /// Zipfian weights over the class members.
    fn from_words(words: Vec<String>) -> Self {
        let weights = WeightedIndex::new((0..words.len()).map(|r| 1.0 / (r as f64 + 1.0))).expect("nonempty class");
        Class { words, weights }
    }

    fn draw<'a>(&'a self, rng: &mut ChaCha8Rng) -> &'a str {
        &self.words[self.weights.sample(rng)]
    }
}

fn main() -> std::io::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "tests/fixtures/corpus_100k.txt".to_string());
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut taken = std::collections::HashSet::new();

    let det = Class::fixed(&["the", "a", "this", "that", "every", "some", "no", "each"]);
    let prep = Class::fixed(&["of", "in", "on", "with", "from", "to", "near", "under", "over", "by"]);
    let pron = Class::fixed(&["she", "he", "they", "we", "it", "you"]);
    let conj = Class::fixed(&["and", "but", "or", "so"]);
    let aux = Class::fixed(&["will", "can", "must", "may", "should"]);
    let noun = Class::invented(&mut rng, 220, "on", &mut taken);
    let adj = Class::invented(&mut rng, 90, "ish", &mut taken);
    let verb_t = Class::invented(&mut rng, 110, "ed", &mut taken);
    let verb_i = Class::invented(&mut rng, 60, "s", &mut taken);
    let adv = Class::invented(&mut rng, 40, "ly", &mut taken);

    let np = |rng: &mut ChaCha8Rng, out: &mut Vec<String>| {
        if rng.random_bool(0.2) {
            out.push(pron.draw(rng).to_string());
            return;
        }
        out.push(det.draw(rng).to_string());
        if rng.random_bool(0.35) {
            out.push(adj.draw(rng).to_string());
        }
        out.push(noun.draw(rng).to_string());
        if rng.random_bool(0.2) {
            out.push(prep.draw(rng).to_string());
            out.push(det.draw(rng).to_string());
            out.push(noun.draw(rng).to_string());
        }
    };
    let vp = |rng: &mut ChaCha8Rng, out: &mut Vec<String>| {
        if rng.random_bool(0.15) {
            out.push(aux.draw(rng).to_string());
        }
        if rng.random_bool(0.6) {
            out.push(verb_t.draw(rng).to_string());
            np(rng, out);
        } else {
            out.push(verb_i.draw(rng).to_string());
        }
        if rng.random_bool(0.25) {
            out.push(adv.draw(rng).to_string());
        }
    };

    let mut out = BufWriter::new(File::create(&path)?);
    let mut tokens = 0;
    while tokens < TARGET_TOKENS {
        let mut s: Vec<String> = Vec::new();
        np(&mut rng, &mut s);
        vp(&mut rng, &mut s);
        if rng.random_bool(0.3) {
            s.push(conj.draw(&mut rng).to_string());
            np(&mut rng, &mut s);
            vp(&mut rng, &mut s);
        }
        s.push(".".to_string());
        // Capitalize the first word the way running text would.
        let mut first = s[0].chars();
        let head = first.next().expect("nonempty word");
        s[0] = head.to_uppercase().chain(first).collect();
        tokens += s.len();
        writeln!(out, "{}", s.join(" "))?;
    }
    out.flush()
}
