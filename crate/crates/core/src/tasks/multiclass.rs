//! Cost-sensitive multiclass prediction as a walk down a binary label tree.

use std::sync::Arc;

use super::{keyed_choice, keyed_coin, ReferenceQuality, SUBOPTIMAL_ERROR_RATE};
use crate::error::{Error, Result};
use crate::features::SparseFeatures;
use crate::search::SearchTask;

#[derive(Debug, Clone, PartialEq)]
struct Node {
    lo: usize,
    hi: usize,
    children: Option<(usize, usize)>,
    /// Position among internal nodes, used for the feature block.
    internal: Option<usize>,
}

/// Complete binary split of labels `0..k`: each node holds a contiguous
/// label range, and the left child takes the larger half.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTree {
    nodes: Vec<Node>,
    k: usize,
    depth: usize,
    internal_count: usize,
}

impl LabelTree {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::EmptyActionSet);
        }
        let mut tree = Self {
            nodes: Vec::with_capacity(2 * k),
            k,
            depth: (k as f64).log2().ceil() as usize,
            internal_count: 0,
        };
        tree.build(0, k);
        Ok(tree)
    }

    fn build(&mut self, lo: usize, hi: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node {
            lo,
            hi,
            children: None,
            internal: None,
        });
        if hi - lo >= 2 {
            self.nodes[id].internal = Some(self.internal_count);
            self.internal_count += 1;
            let mid = lo + (hi - lo).div_ceil(2);
            let l = self.build(lo, mid);
            let r = self.build(mid, hi);
            self.nodes[id].children = Some((l, r));
        }
        id
    }

    pub fn labels(&self) -> usize {
        self.k
    }

    /// Number of decisions to reach any leaf, `ceil(log2 k)`.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn internal_nodes(&self) -> usize {
        self.internal_count
    }

    /// Branch sequence (0 = left, 1 = right) to the leaf holding `label`,
    /// padded with forced zeros to the tree depth.
    pub fn path_to(&self, label: usize) -> Vec<usize> {
        let mut node = 0;
        let mut path = Vec::with_capacity(self.depth);
        while let Some((l, r)) = self.nodes[node].children {
            if label < self.nodes[l].hi {
                path.push(0);
                node = l;
            } else {
                path.push(1);
                node = r;
            }
        }
        path.resize(self.depth, 0);
        path
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeState {
    pub node: usize,
    pub depth: usize,
}

/// One example: input features, a cost per label, and the shared tree.
#[derive(Debug, Clone)]
pub struct LabelTreeTask {
    tree: Arc<LabelTree>,
    features: SparseFeatures,
    costs: Vec<f64>,
    quality: ReferenceQuality,
    reference_seed: u64,
}

impl LabelTreeTask {
    pub fn new(
        tree: Arc<LabelTree>,
        features: SparseFeatures,
        costs: Vec<f64>,
        quality: ReferenceQuality,
        reference_seed: u64,
    ) -> Result<Self> {
        if costs.len() != tree.k {
            return Err(Error::ArityMismatch {
                features: tree.k,
                costs: costs.len(),
            });
        }
        if let Some(&c) = costs.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::NonFiniteCost(c));
        }
        Ok(Self {
            tree,
            features,
            costs,
            quality,
            reference_seed,
        })
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn tree(&self) -> &LabelTree {
        &self.tree
    }

    /// Label held by the leaf an end state sits on.
    pub fn label_of(&self, s: &TreeState) -> usize {
        self.tree.nodes[s.node].lo
    }

    fn block_width(&self) -> usize {
        self.features.dim() + 1
    }

    fn min_cost(&self, node: usize) -> f64 {
        let n = &self.tree.nodes[node];
        self.costs[n.lo..n.hi].iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl SearchTask for LabelTreeTask {
    type State = TreeState;

    fn start(&self) -> TreeState {
        TreeState { node: 0, depth: 0 }
    }

    fn horizon(&self) -> usize {
        self.tree.depth
    }

    fn depth(&self, s: &TreeState) -> usize {
        s.depth
    }

    fn num_actions(&self, s: &TreeState) -> usize {
        if s.depth >= self.tree.depth {
            0
        } else if self.tree.nodes[s.node].children.is_some() {
            2
        } else {
            1
        }
    }

    fn transition(&self, s: &TreeState, a: usize) -> TreeState {
        let node = match self.tree.nodes[s.node].children {
            Some((l, r)) => {
                if a == 0 {
                    l
                } else {
                    r
                }
            }
            None => s.node,
        };
        TreeState {
            node,
            depth: s.depth + 1,
        }
    }

    fn action_features(&self, s: &TreeState) -> Vec<SparseFeatures> {
        let dim = self.dim();
        match self.tree.nodes[s.node].internal {
            Some(i) => (0..2)
                .map(|a| {
                    let offset = (2 * i + a) * self.block_width();
                    let mut pairs: Vec<(usize, f64)> =
                        self.features.pairs().iter().map(|&(j, v)| (offset + j, v)).collect();
                    pairs.push((offset + self.features.dim(), 1.0));
                    SparseFeatures::from_pairs(dim, pairs).expect("block index below dim")
                })
                .collect(),
            None => vec![SparseFeatures::empty(dim)],
        }
    }

    fn terminal_loss(&self, s: &TreeState) -> f64 {
        self.costs[self.label_of(s)]
    }

    fn reference(&self, s: &TreeState) -> Result<usize> {
        let node = &self.tree.nodes[s.node];
        let Some((l, r)) = node.children else {
            return Ok(0);
        };
        let key = [s.node as u64];
        let best = if self.min_cost(l) <= self.min_cost(r) { 0 } else { 1 };
        Ok(match self.quality {
            ReferenceQuality::Optimal => best,
            ReferenceQuality::Suboptimal => {
                if keyed_coin(self.reference_seed, &key, SUBOPTIMAL_ERROR_RATE) {
                    1 - best
                } else {
                    best
                }
            }
            ReferenceQuality::Bad => keyed_choice(self.reference_seed, &key, 2),
        })
    }

    fn dim(&self) -> usize {
        2 * self.tree.internal_count * self.block_width()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use crate::search::{trajectory, Reference};
    use proptest::prelude::*;

    fn task(costs: Vec<f64>, q: ReferenceQuality) -> LabelTreeTask {
        let tree = Arc::new(LabelTree::new(costs.len()).unwrap());
        LabelTreeTask::new(tree, SparseFeatures::unit(3, 1).unwrap(), costs, q, 5).unwrap()
    }

    #[test]
    fn depth_is_ceil_log2() {
        for (k, d) in [(1, 0), (2, 1), (3, 2), (4, 2), (5, 3), (8, 3), (9, 4)] {
            assert_eq!(LabelTree::new(k).unwrap().depth(), d, "k = {k}");
        }
    }

    #[test]
    fn root_goes_toward_min() {
        let t = task(vec![0.3, 0.0, 0.9, 0.9], ReferenceQuality::Optimal);
        assert_eq!(t.reference(&t.start()).unwrap(), 0);
    }

    #[test]
    fn ties_go_left() {
        let t = task(vec![1.0; 6], ReferenceQuality::Optimal);
        assert_eq!(t.reference(&t.start()).unwrap(), 0);
    }

    #[test]
    fn five_labels_path() {
        let t = task(vec![1.0, 1.0, 1.0, 1.0, 0.0], ReferenceQuality::Optimal);
        let traj = trajectory(&t, &Reference, &mut stream(0, Stream::Mixture)).unwrap();
        assert_eq!(traj.actions(), vec![1, 1, 0]);
        assert_eq!(t.label_of(&traj.end), 4);
        assert_eq!(t.tree().path_to(4), vec![1, 1, 0]);
    }

    proptest! {
        #[test]
        fn every_label_has_one_leaf(k in 1usize..40) {
            let tree = LabelTree::new(k).unwrap();
            let costs: Vec<f64> = (0..k).map(|i| i as f64).collect();
            let t = LabelTreeTask::new(Arc::new(tree.clone()), SparseFeatures::empty(2), costs, ReferenceQuality::Optimal, 0).unwrap();
            let mut seen = vec![false; k];
            for label in 0..k {
                let path = tree.path_to(label);
                prop_assert_eq!(path.len(), tree.depth());
                let mut s = t.start();
                for &a in &path {
                    prop_assert!(a < t.num_actions(&s));
                    s = t.transition(&s, a);
                }
                prop_assert_eq!(t.label_of(&s), label);
                prop_assert_eq!(t.terminal_loss(&s), label as f64);
                seen[label] = true;
            }
            prop_assert!(seen.iter().all(|&x| x));
        }

        #[test]
        fn optimal_reaches_min_cost(costs in proptest::collection::vec(0.0f64..5.0, 1..20)) {
            let t = task(costs.clone(), ReferenceQuality::Optimal);
            let traj = trajectory(&t, &Reference, &mut stream(0, Stream::Mixture)).unwrap();
            let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert_eq!(traj.end_loss, min);
        }
    }
}
