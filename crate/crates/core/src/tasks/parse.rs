//! Arc-hybrid unlabeled dependency parsing.
//!
//! Tokens are numbered from 1; 0 is the artificial root, which sits at the
//! bottom of the stack and is never reduced. Shift moves the buffer front
//! onto the stack; ReduceLeft makes the buffer front the head of the stack
//! top; ReduceRight makes the item below the stack top its head. A parse
//! ends when the buffer is empty and one token remains above the root; that
//! token is attached to the root. Every parse of `n` tokens takes `2n - 1`
//! actions.

use serde::{Deserialize, Serialize};

use super::{keyed_choice, ReferenceQuality};
use crate::error::{Error, Result};
use crate::features::{fnv1a, hash_feature, mix, SparseFeatures};
use crate::search::SearchTask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseAction {
    Shift = 0,
    ReduceLeft = 1,
    ReduceRight = 2,
}

const NO_HEAD: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseConfig {
    pub stack: Vec<usize>,
    /// First buffer token; the buffer is `next..=n`.
    pub next: usize,
    /// `heads[i]` for token `i`, `usize::MAX` while unattached. Index 0 unused.
    pub heads: Vec<usize>,
    pub depth: usize,
}

#[derive(Debug, Clone)]
pub struct ParseTask {
    words: Vec<String>,
    tags: Vec<String>,
    gold: Option<Vec<usize>>,
    bits: u32,
    quality: ReferenceQuality,
    reference_seed: u64,
    /// Word and tag feature hashes per token, index 0 for the root and
    /// `n + 1` for "none".
    word_hash: Vec<u64>,
    tag_hash: Vec<u64>,
}

const SLOTS: [&str; 4] = ["s0", "s1", "b0", "b1"];

impl ParseTask {
    /// `gold[i]` is the head of token `i + 1` (0 for the root).
    pub fn new(
        words: Vec<String>,
        tags: Vec<String>,
        gold: Option<Vec<usize>>,
        bits: u32,
        quality: ReferenceQuality,
        reference_seed: u64,
    ) -> Result<Self> {
        let n = words.len();
        if n == 0 {
            return Err(Error::EmptyActionSet);
        }
        if tags.len() != n {
            return Err(Error::ArityMismatch {
                features: n,
                costs: tags.len(),
            });
        }
        if let Some(g) = &gold {
            if g.len() != n {
                return Err(Error::ArityMismatch {
                    features: n,
                    costs: g.len(),
                });
            }
            if let Some(i) = (0..n).find(|&i| g[i] > n || g[i] == i + 1) {
                return Err(Error::Format(format!("token {} has invalid head {}", i + 1, g[i])));
            }
        }
        let mut word_hash = vec![fnv1a(b"<root>")];
        let mut tag_hash = vec![fnv1a(b"<root>")];
        for (w, t) in words.iter().zip(&tags) {
            word_hash.push(fnv1a(w.to_lowercase().as_bytes()));
            tag_hash.push(fnv1a(t.as_bytes()));
        }
        word_hash.push(fnv1a(b"<none>"));
        tag_hash.push(fnv1a(b"<none>"));
        Ok(Self {
            words,
            tags,
            gold,
            bits,
            quality,
            reference_seed,
            word_hash,
            tag_hash,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn gold(&self) -> Option<&[usize]> {
        self.gold.as_deref()
    }

    /// Legal actions in fixed order; live action `i` is the `i`-th entry.
    pub fn legal(&self, c: &ParseConfig) -> Vec<ParseAction> {
        let n = self.len();
        let mut out = Vec::with_capacity(3);
        if c.next <= n {
            out.push(ParseAction::Shift);
            if c.stack.len() >= 2 {
                out.push(ParseAction::ReduceLeft);
            }
        }
        if c.stack.len() >= 3 {
            out.push(ParseAction::ReduceRight);
        }
        out
    }

    pub fn apply(&self, c: &ParseConfig, action: ParseAction) -> ParseConfig {
        let mut next = c.clone();
        match action {
            ParseAction::Shift => {
                next.stack.push(c.next);
                next.next += 1;
            }
            ParseAction::ReduceLeft => {
                let s0 = next.stack.pop().expect("legal reduce");
                next.heads[s0] = c.next;
            }
            ParseAction::ReduceRight => {
                let s0 = next.stack.pop().expect("legal reduce");
                next.heads[s0] = *next.stack.last().expect("legal reduce");
            }
        }
        next.depth += 1;
        next
    }

    /// Head of every token once parsing is complete (index `i` for token `i + 1`).
    pub fn predicted_heads(&self, c: &ParseConfig) -> Vec<usize> {
        (1..=self.len())
            .map(|i| {
                if c.heads[i] != NO_HEAD {
                    c.heads[i]
                } else if c.stack.len() == 2 && c.stack[1] == i {
                    0
                } else {
                    NO_HEAD
                }
            })
            .collect()
    }

    /// Number of gold arcs that `action` makes unreachable from `c`.
    pub fn action_cost(&self, c: &ParseConfig, action: ParseAction) -> Result<usize> {
        let gold = self.gold.as_ref().ok_or(Error::MissingGold)?;
        let head = |i: usize| gold[i - 1];
        let n = self.len();
        let in_buffer = |x: usize| x >= c.next && x <= n && x >= 1;
        let dependents_in_buffer = |h: usize| (c.next..=n).filter(|&d| head(d) == h).count();
        let s0 = *c.stack.last().expect("stack holds the root");
        Ok(match action {
            ParseAction::ReduceLeft => {
                let s1 = c.stack[c.stack.len() - 2];
                let h = head(s0);
                let lost_head = (h == s1 || (in_buffer(h) && h != c.next)) as usize;
                lost_head + dependents_in_buffer(s0)
            }
            ParseAction::ReduceRight => {
                let lost_head = in_buffer(head(s0)) as usize;
                lost_head + dependents_in_buffer(s0)
            }
            ParseAction::Shift => {
                let b = c.next;
                let below = &c.stack[..c.stack.len() - 1];
                let lost_head = below.contains(&head(b)) as usize;
                let lost_deps = c.stack.iter().filter(|&&d| d != 0 && head(d) == b).count();
                lost_head + lost_deps
            }
        })
    }

    fn features_of(&self, c: &ParseConfig) -> Vec<usize> {
        let n = self.len();
        let none = n + 1;
        let s0 = c.stack.last().copied().unwrap_or(none);
        let s1 = if c.stack.len() >= 2 { c.stack[c.stack.len() - 2] } else { none };
        let b0 = if c.next <= n { c.next } else { none };
        let b1 = if c.next < n { c.next + 1 } else { none };
        let mask = (1u64 << self.bits) - 1;
        let mut out = Vec::with_capacity(14);
        out.push(hash_feature("bias", "", self.bits));
        for (slot, &tok) in SLOTS.iter().zip(&[s0, s1, b0, b1]) {
            let ns = fnv1a(slot.as_bytes());
            out.push((mix(ns, &[1, self.word_hash[tok]]) & mask) as usize);
            out.push((mix(ns, &[2, self.tag_hash[tok]]) & mask) as usize);
        }
        let dist = if s0 <= n && b0 <= n { b0 - s0 } else { 0 };
        let bucket = match dist {
            0 => 0,
            1 => 1,
            2 => 2,
            3..=5 => 3,
            _ => 4,
        };
        out.push((mix(3, &[bucket]) & mask) as usize);
        out.push((mix(4, &[self.tag_hash[s0], self.tag_hash[b0]]) & mask) as usize);
        out.push((mix(5, &[self.tag_hash[s1], self.tag_hash[s0]]) & mask) as usize);
        out.push((mix(6, &[self.tag_hash[s0], self.tag_hash[b0], bucket]) & mask) as usize);
        out
    }

    /// Fraction of tokens with a wrong head, given a complete head vector.
    pub fn attachment_loss(&self, heads: &[usize]) -> Result<f64> {
        let gold = self.gold.as_ref().ok_or(Error::MissingGold)?;
        let wrong = gold.iter().zip(heads).filter(|(g, p)| g != p).count();
        Ok(wrong as f64 / self.len() as f64)
    }
}

impl SearchTask for ParseTask {
    type State = ParseConfig;

    fn start(&self) -> ParseConfig {
        ParseConfig {
            stack: vec![0],
            next: 1,
            heads: vec![NO_HEAD; self.len() + 1],
            depth: 0,
        }
    }

    fn horizon(&self) -> usize {
        2 * self.len() - 1
    }

    fn depth(&self, c: &ParseConfig) -> usize {
        c.depth
    }

    fn num_actions(&self, c: &ParseConfig) -> usize {
        if c.depth >= self.horizon() {
            0
        } else {
            self.legal(c).len()
        }
    }

    fn transition(&self, c: &ParseConfig, a: usize) -> ParseConfig {
        self.apply(c, self.legal(c)[a])
    }

    fn action_features(&self, c: &ParseConfig) -> Vec<SparseFeatures> {
        let base = self.features_of(c);
        let block = 1usize << self.bits;
        self.legal(c)
            .into_iter()
            .map(|kind| {
                let offset = kind as usize * block;
                let pairs = base.iter().map(|&h| (offset + h, 1.0)).collect();
                SparseFeatures::from_pairs(self.dim(), pairs).expect("hashed index below dim")
            })
            .collect()
    }

    fn terminal_loss(&self, c: &ParseConfig) -> f64 {
        self.attachment_loss(&self.predicted_heads(c)).unwrap_or(f64::NAN)
    }

    fn reference(&self, c: &ParseConfig) -> Result<usize> {
        let legal = self.legal(c);
        if legal.is_empty() {
            return Err(Error::NoLegalAction {
                depth: c.depth,
                horizon: self.horizon(),
            });
        }
        let word = |i: Option<usize>| i.and_then(|i| self.word_hash.get(i)).copied().unwrap_or(u64::MAX);
        let s0 = word(c.stack.last().copied());
        let s1 = word(c.stack.len().checked_sub(2).map(|i| c.stack[i]));
        let keys = [s0, s1, word(Some(c.next)), c.stack.len() as u64];
        let arbitrary = || keyed_choice(self.reference_seed, &keys, legal.len());
        match self.quality {
            ReferenceQuality::Bad => Ok(arbitrary()),
            quality => {
                let costs = legal
                    .iter()
                    .map(|&a| self.action_cost(c, a))
                    .collect::<Result<Vec<_>>>()?;
                let min = *costs.iter().min().expect("non-empty");
                let zero = costs.iter().filter(|&&x| x == 0).count();
                if quality == ReferenceQuality::Suboptimal && zero != 1 {
                    Ok(arbitrary())
                } else {
                    Ok(costs.iter().position(|&x| x == min).expect("min exists"))
                }
            }
        }
    }

    fn dim(&self) -> usize {
        3 << self.bits
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use crate::search::{trajectory, Reference};

    fn task(gold: Vec<usize>, q: ReferenceQuality) -> ParseTask {
        let n = gold.len();
        let words = (1..=n).map(|i| format!("w{i}")).collect();
        let tags = (1..=n).map(|i| format!("T{}", i % 2)).collect();
        ParseTask::new(words, tags, Some(gold), 10, q, 1).unwrap()
    }

    /// Fewest wrong heads reachable from `c`, by exhaustive search.
    fn best_reachable(t: &ParseTask, c: &ParseConfig) -> usize {
        if c.depth == t.horizon() {
            let heads = t.predicted_heads(c);
            return t.gold().unwrap().iter().zip(&heads).filter(|(g, p)| g != p).count();
        }
        t.legal(c)
            .into_iter()
            .map(|a| best_reachable(t, &t.apply(c, a)))
            .min()
            .unwrap()
    }

    fn reachable(t: &ParseTask) -> Vec<ParseConfig> {
        let mut out = vec![t.start()];
        let mut i = 0;
        while i < out.len() {
            let c = out[i].clone();
            for a in t.legal(&c) {
                let n = t.apply(&c, a);
                if !out.contains(&n) {
                    out.push(n);
                }
            }
            i += 1;
        }
        out
    }

    fn is_projective_tree(gold: &[usize]) -> bool {
        let n = gold.len();
        if gold.iter().filter(|&&h| h == 0).count() != 1 {
            return false;
        }
        for i in 1..=n {
            let mut x = i;
            for _ in 0..=n {
                if x == 0 {
                    break;
                }
                x = gold[x - 1];
            }
            if x != 0 {
                return false;
            }
        }
        for d in 1..=n {
            let h = gold[d - 1];
            let (lo, hi) = (d.min(h), d.max(h));
            for k in lo + 1..hi {
                let mut x = k;
                while x != 0 && x != h {
                    x = gold[x - 1];
                }
                if x != h {
                    return false;
                }
            }
        }
        true
    }

    fn all_trees(n: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for code in 0..(n + 1).pow(n as u32) {
            let mut c = code;
            let g: Vec<usize> = (0..n)
                .map(|_| {
                    let h = c % (n + 1);
                    c /= n + 1;
                    h
                })
                .collect();
            if g.iter().enumerate().all(|(i, &h)| h != i + 1) && is_projective_tree(&g) {
                out.push(g);
            }
        }
        out
    }

    #[test]
    fn horizon_is_two_n_minus_one() {
        for gold in all_trees(4) {
            let t = task(gold, ReferenceQuality::Bad);
            let traj = trajectory(&t, &Reference, &mut stream(0, Stream::Mixture)).unwrap();
            assert_eq!(traj.steps.len(), 7);
            let heads = t.predicted_heads(&traj.end);
            assert!(heads.iter().all(|&h| h <= 4));
            assert_eq!(heads.iter().filter(|&&h| h == 0).count(), 1);
        }
    }

    #[test]
    fn two_token_example() {
        let t = task(vec![2, 0], ReferenceQuality::Optimal);
        let traj = trajectory(&t, &Reference, &mut stream(0, Stream::Mixture)).unwrap();
        let kinds: Vec<ParseAction> = {
            let mut c = t.start();
            let mut out = Vec::new();
            for &a in &traj.actions() {
                let k = t.legal(&c)[a];
                out.push(k);
                c = t.apply(&c, k);
            }
            out
        };
        assert_eq!(kinds, [ParseAction::Shift, ParseAction::ReduceLeft, ParseAction::Shift]);
        assert_eq!(traj.end_loss, 0.0);
    }

    #[test]
    fn single_legal_action_near_the_end() {
        let t = task(vec![0, 1], ReferenceQuality::Optimal);
        let c = t.apply(&t.apply(&t.start(), ParseAction::Shift), ParseAction::Shift);
        assert_eq!(t.legal(&c), [ParseAction::ReduceRight]);
        assert_eq!(t.reference(&c).unwrap(), 0);
    }

    #[test]
    fn oracle_costs_match_exhaustive_search() {
        for n in 1..=4 {
            for gold in all_trees(n) {
                let t = task(gold.clone(), ReferenceQuality::Optimal);
                for c in reachable(&t) {
                    if c.depth == t.horizon() {
                        continue;
                    }
                    let here = best_reachable(&t, &c);
                    for a in t.legal(&c) {
                        let after = best_reachable(&t, &t.apply(&c, a));
                        assert_eq!(t.action_cost(&c, a).unwrap(), after - here, "gold {gold:?} config {c:?} action {a:?}");
                    }
                    let r = t.reference(&c).unwrap();
                    let next = t.transition(&c, r);
                    assert_eq!(best_reachable(&t, &next), here);
                }
                let traj = trajectory(&t, &Reference, &mut stream(0, Stream::Mixture)).unwrap();
                assert_eq!(traj.end_loss, 0.0, "gold {gold:?}");
            }
        }
    }

    #[test]
    fn bad_and_suboptimal_references_are_legal() {
        for gold in all_trees(4) {
            for q in [ReferenceQuality::Bad, ReferenceQuality::Suboptimal] {
                let t = task(gold.clone(), q);
                let traj = trajectory(&t, &Reference, &mut stream(0, Stream::Mixture)).unwrap();
                assert!((0.0..=1.0).contains(&traj.end_loss));
            }
        }
    }

    #[test]
    fn features_are_blocked_by_action_kind() {
        let t = task(vec![2, 0, 2], ReferenceQuality::Optimal);
        let c = t.apply(&t.apply(&t.start(), ParseAction::Shift), ParseAction::Shift);
        let kinds = t.legal(&c);
        let block = 1 << 10;
        for (f, k) in t.action_features(&c).iter().zip(kinds) {
            assert!(f.pairs().iter().all(|&(i, _)| i / block == k as usize));
        }
    }
}
