//! Seeded synthetic corpora for the three tasks.

use rand::seq::IndexedRandom;
use rand::Rng as _;

use super::data::{MulticlassRow, Sentence};
use crate::rng::{derive_seed, stream, Rng, Stream};

const SEQ_TAGS: usize = 8;

fn word(rng: &mut Rng, len: usize) -> String {
    const LETTERS: &[u8] = b"bcdfghklmnprstvz";
    const VOWELS: &[u8] = b"aeiou";
    (0..len)
        .map(|i| {
            let set = if i % 2 == 0 { LETTERS } else { VOWELS };
            *set.choose(rng).expect("non-empty") as char
        })
        .collect()
}

/// Tagged sentences from a hidden Markov model with 8 tags. Each tag
/// prefers one successor, emits mostly from its own vocabulary (whose words
/// share a tag-specific suffix), and sometimes from a shared ambiguous pool.
pub fn synth_sequences(count: usize, seed: u64) -> Vec<Sentence> {
    let mut model_rng = stream(derive_seed(seed, 0), Stream::Data);
    let suffixes: Vec<String> = (0..SEQ_TAGS).map(|_| word(&mut model_rng, 2)).collect();
    let vocab: Vec<Vec<String>> = (0..SEQ_TAGS)
        .map(|t| (0..40).map(|_| word(&mut model_rng, 3) + &suffixes[t]).collect())
        .collect();
    let shared: Vec<String> = (0..30).map(|_| word(&mut model_rng, 4)).collect();
    let favored: Vec<usize> = (0..SEQ_TAGS).map(|_| model_rng.random_range(0..SEQ_TAGS)).collect();

    let mut rng = stream(derive_seed(seed, 1), Stream::Data);
    (0..count)
        .map(|_| {
            let len = rng.random_range(4..=12);
            let mut tag = rng.random_range(0..SEQ_TAGS);
            let mut words = Vec::with_capacity(len);
            let mut tags = Vec::with_capacity(len);
            for _ in 0..len {
                let w = if rng.random_bool(0.25) {
                    shared.choose(&mut rng).expect("non-empty").clone()
                } else {
                    vocab[tag].choose(&mut rng).expect("non-empty").clone()
                };
                words.push(w);
                tags.push(format!("T{tag}"));
                tag = if rng.random_bool(0.7) {
                    favored[tag]
                } else {
                    rng.random_range(0..SEQ_TAGS)
                };
            }
            Sentence {
                words,
                tags,
                heads: None,
            }
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Cat {
    V,
    N,
    D,
    A,
    P,
    R,
}

impl Cat {
    fn name(self) -> &'static str {
        match self {
            Cat::V => "V",
            Cat::N => "N",
            Cat::D => "D",
            Cat::A => "A",
            Cat::P => "P",
            Cat::R => "R",
        }
    }
}

struct Grammar {
    vocab: Vec<(Cat, Vec<String>)>,
}

impl Grammar {
    fn word(&self, cat: Cat, rng: &mut Rng) -> String {
        let words = &self.vocab.iter().find(|(c, _)| *c == cat).expect("every category has words").1;
        words.choose(rng).expect("non-empty").clone()
    }

    /// Appends the subtree headed by a `cat` word to `out` as `(word, cat, parent slot)`,
    /// returning the head's position.
    fn expand(&self, cat: Cat, depth: usize, rng: &mut Rng, out: &mut Vec<(String, Cat, usize)>) -> usize {
        let mut left = Vec::new();
        let mut right = Vec::new();
        match cat {
            Cat::V => {
                if rng.random_bool(0.2) {
                    left.push(Cat::R);
                }
                if rng.random_bool(0.9) {
                    left.push(Cat::N);
                }
                if rng.random_bool(0.6) {
                    right.push(Cat::N);
                }
                if rng.random_bool(0.4) {
                    right.push(Cat::P);
                }
                if rng.random_bool(0.3) {
                    right.push(Cat::R);
                }
            }
            Cat::N => {
                if rng.random_bool(0.6) {
                    left.push(Cat::D);
                }
                if rng.random_bool(0.3) {
                    left.push(Cat::A);
                }
                if depth < 3 && rng.random_bool(0.25) {
                    right.push(Cat::P);
                }
            }
            Cat::P => right.push(Cat::N),
            Cat::D | Cat::A | Cat::R => {}
        }
        let mut left_heads = Vec::new();
        for c in left {
            left_heads.push(self.expand(c, depth + 1, rng, out));
        }
        let me = out.len();
        out.push((self.word(cat, rng), cat, usize::MAX));
        for h in left_heads {
            out[h].2 = me;
        }
        for c in right {
            let h = self.expand(c, depth + 1, rng, out);
            out[h].2 = me;
        }
        me
    }
}

/// Projective dependency trees from a small head-driven grammar: a verb
/// root with noun arguments, determiners and adjectives under nouns, and
/// prepositional phrases under verbs and nouns.
pub fn synth_parse(count: usize, seed: u64) -> Vec<Sentence> {
    let mut model_rng = stream(derive_seed(seed, 2), Stream::Data);
    let cats = [Cat::V, Cat::N, Cat::D, Cat::A, Cat::P, Cat::R];
    let grammar = Grammar {
        vocab: cats
            .iter()
            .map(|&c| {
                let n = if matches!(c, Cat::D | Cat::P) { 6 } else { 30 };
                (c, (0..n).map(|_| word(&mut model_rng, 5)).collect())
            })
            .collect(),
    };
    let mut rng = stream(derive_seed(seed, 3), Stream::Data);
    (0..count)
        .map(|_| {
            let mut nodes = Vec::new();
            let root = grammar.expand(Cat::V, 0, &mut rng, &mut nodes);
            let heads = nodes
                .iter()
                .enumerate()
                .map(|(i, n)| if i == root { 0 } else { n.2 + 1 })
                .collect();
            Sentence {
                words: nodes.iter().map(|n| n.0.clone()).collect(),
                tags: nodes.iter().map(|n| n.1.name().to_string()).collect(),
                heads: Some(heads),
            }
        })
        .collect()
}

/// One cluster per label: centers uniform in `[-1, 1]^dim`, inputs a
/// center plus uniform noise of half-width `spread`. With probability 0.1
/// the costed label is replaced by a random one. The costed label costs 0
/// and every other label a seeded cost in `[0.5, 1.5]`.
pub fn synth_multiclass(count: usize, labels: usize, dim: usize, seed: u64) -> Vec<MulticlassRow> {
    const SPREAD: f64 = 0.5;
    let mut model_rng = stream(derive_seed(seed, 4), Stream::Data);
    let centers: Vec<Vec<f64>> = (0..labels)
        .map(|_| (0..dim).map(|_| model_rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut rng = stream(derive_seed(seed, 5), Stream::Data);
    (0..count)
        .map(|_| {
            let c = rng.random_range(0..labels);
            let x: Vec<f64> = centers[c]
                .iter()
                .map(|m| m + rng.random_range(-SPREAD..SPREAD))
                .collect();
            let y = if rng.random_bool(0.1) { rng.random_range(0..labels) } else { c };
            let costs = (0..labels)
                .map(|j| if j == y { 0.0 } else { rng.random_range(0.5..1.5) })
                .collect();
            MulticlassRow {
                features: x.into_iter().enumerate().collect(),
                costs,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        assert_eq!(synth_sequences(20, 3), synth_sequences(20, 3));
        assert_ne!(synth_sequences(20, 3), synth_sequences(20, 4));
        assert_eq!(synth_parse(20, 3), synth_parse(20, 3));
        assert_eq!(synth_multiclass(20, 5, 4, 3), synth_multiclass(20, 5, 4, 3));
    }

    #[test]
    fn trees_are_single_rooted_and_projective() {
        for s in synth_parse(200, 9) {
            let h = s.heads.unwrap();
            let n = h.len();
            assert_eq!(h.iter().filter(|&&x| x == 0).count(), 1);
            for d in 1..=n {
                let head = h[d - 1];
                let (lo, hi) = (d.min(head), d.max(head));
                for k in lo + 1..hi {
                    let mut x = k;
                    while x != 0 && x != head {
                        x = h[x - 1];
                    }
                    assert_eq!(x, head, "arc {head}->{d} is crossed by {k}");
                }
            }
        }
    }

    #[test]
    fn multiclass_rows_have_one_zero_cost() {
        for r in synth_multiclass(100, 6, 5, 1) {
            assert_eq!(r.costs.iter().filter(|&&c| c == 0.0).count(), 1);
            assert_eq!(r.features.len(), 5);
        }
    }
}
