//! Left-to-right sequence labeling under Hamming loss.

use super::{keyed_choice, keyed_coin, ReferenceQuality, SUBOPTIMAL_ERROR_RATE};
use crate::error::{Error, Result};
use crate::features::{hash_feature, SparseFeatures};
use crate::search::SearchTask;

/// One sentence. A state is the list of tags predicted so far; action `a`
/// tags the next token with label `a`.
#[derive(Debug, Clone)]
pub struct SequenceTask {
    words: Vec<String>,
    /// Hashed token features per position, without the previous-tag feature.
    token_features: Vec<Vec<usize>>,
    gold: Option<Vec<usize>>,
    tag_count: usize,
    bits: u32,
    quality: ReferenceQuality,
    reference_seed: u64,
}

fn affix(word: &str, n: usize, suffix: bool) -> String {
    let chars: Vec<char> = word.chars().collect();
    let n = n.min(chars.len());
    if suffix {
        chars[chars.len() - n..].iter().collect()
    } else {
        chars[..n].iter().collect()
    }
}

impl SequenceTask {
    pub fn new(
        words: Vec<String>,
        gold: Option<Vec<usize>>,
        tag_count: usize,
        bits: u32,
        quality: ReferenceQuality,
        reference_seed: u64,
    ) -> Result<Self> {
        if tag_count == 0 {
            return Err(Error::EmptyActionSet);
        }
        if let Some(g) = &gold {
            if g.len() != words.len() {
                return Err(Error::ArityMismatch {
                    features: words.len(),
                    costs: g.len(),
                });
            }
            if let Some(&bad) = g.iter().find(|&&t| t >= tag_count) {
                return Err(Error::IllegalAction { state: 0, action: bad });
            }
        }
        let token_features = (0..words.len())
            .map(|i| {
                let w = words[i].to_lowercase();
                let prev = if i == 0 { "<s>".to_string() } else { words[i - 1].to_lowercase() };
                let next = words.get(i + 1).map_or("</s>".to_string(), |x| x.to_lowercase());
                vec![
                    hash_feature("bias", "", bits),
                    hash_feature("w", &w, bits),
                    hash_feature("p2", &affix(&w, 2, false), bits),
                    hash_feature("s2", &affix(&w, 2, true), bits),
                    hash_feature("w-1", &prev, bits),
                    hash_feature("w+1", &next, bits),
                ]
            })
            .collect();
        Ok(Self {
            words,
            token_features,
            gold,
            tag_count,
            bits,
            quality,
            reference_seed,
        })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn gold(&self) -> Option<&[usize]> {
        self.gold.as_deref()
    }

    pub fn tag_count(&self) -> usize {
        self.tag_count
    }

    /// Hamming distance scaled into `[0, 1]`.
    pub fn normalized_loss(&self, tags: &[usize]) -> f64 {
        if self.words.is_empty() {
            0.0
        } else {
            self.terminal_loss(&tags.to_vec()) / self.words.len() as f64
        }
    }

    pub fn hamming(&self, tags: &[usize]) -> Result<usize> {
        let gold = self.gold.as_ref().ok_or(Error::MissingGold)?;
        Ok(gold.iter().zip(tags).filter(|(g, p)| g != p).count())
    }
}

impl SearchTask for SequenceTask {
    type State = Vec<usize>;

    fn start(&self) -> Vec<usize> {
        Vec::with_capacity(self.words.len())
    }

    fn horizon(&self) -> usize {
        self.words.len()
    }

    fn depth(&self, s: &Vec<usize>) -> usize {
        s.len()
    }

    fn num_actions(&self, s: &Vec<usize>) -> usize {
        if s.len() < self.words.len() {
            self.tag_count
        } else {
            0
        }
    }

    fn transition(&self, s: &Vec<usize>, a: usize) -> Vec<usize> {
        let mut next = Vec::with_capacity(self.words.len());
        next.extend_from_slice(s);
        next.push(a);
        next
    }

    fn action_features(&self, s: &Vec<usize>) -> Vec<SparseFeatures> {
        let t = s.len();
        let block = 1usize << self.bits;
        let prev_tag = s.last().map_or("<s>".to_string(), |p| p.to_string());
        let mut base = self.token_features[t].clone();
        base.push(hash_feature("t-1", &prev_tag, self.bits));
        (0..self.tag_count)
            .map(|a| {
                let pairs = base.iter().map(|&h| (a * block + h, 1.0)).collect();
                SparseFeatures::from_pairs(self.dim(), pairs).expect("hashed index below dim")
            })
            .collect()
    }

    fn terminal_loss(&self, s: &Vec<usize>) -> f64 {
        match &self.gold {
            Some(g) => g.iter().zip(s).filter(|(g, p)| g != p).count() as f64,
            None => f64::NAN,
        }
    }

    fn reference(&self, s: &Vec<usize>) -> Result<usize> {
        let t = s.len() as u64;
        let arbitrary = || keyed_choice(self.reference_seed, &[t], self.tag_count);
        let gold = || -> Result<usize> {
            let g = self.gold.as_ref().ok_or(Error::MissingGold)?;
            Ok(g[s.len()])
        };
        match self.quality {
            ReferenceQuality::Optimal => gold(),
            ReferenceQuality::Suboptimal => {
                if keyed_coin(self.reference_seed, &[t], SUBOPTIMAL_ERROR_RATE) {
                    Ok(arbitrary())
                } else {
                    gold()
                }
            }
            ReferenceQuality::Bad => Ok(arbitrary()),
        }
    }

    fn dim(&self) -> usize {
        self.tag_count << self.bits
    }
}
