//! CART-style binary classification tree grown on Gini impurity.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Tree nodes, stored in pre-order with the root at index 0.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Training samples reaching the leaf, as (non-maize, maize).
        counts: [u32; 2],
    },
}

impl TreeNode {
    /// Majority class of a leaf; ties go to class 0.
    pub fn leaf_class(counts: &[u32; 2]) -> bool {
        counts[1] > counts[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    /// Leaf reached by a sample. Samples go left when `x[feature] <= threshold`.
    pub fn leaf(&self, x: &[f64]) -> &[u32; 2] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
                TreeNode::Leaf { counts } => return counts,
            }
        }
    }

    /// True when the tree votes maize for the sample.
    pub fn vote(&self, x: &[f64]) -> bool {
        TreeNode::leaf_class(self.leaf(x))
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Internal { left, right, .. } => {
                    1 + walk(nodes, *left).max(walk(nodes, *right))
                }
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

pub(crate) struct GrowParams {
    pub max_features: usize,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
}

/// Column-major view of the training features.
pub(crate) struct Columns<'a> {
    pub cols: &'a [Vec<f64>],
    pub y: &'a [bool],
}

struct Split {
    feature: usize,
    threshold: f64,
    score: f64,
}

pub(crate) struct Grower<'a> {
    data: Columns<'a>,
    params: &'a GrowParams,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
    buf: Vec<(f64, bool)>,
    features: Vec<usize>,
}

fn counts_of(idx: &[usize], y: &[bool]) -> [u32; 2] {
    let maize = idx.iter().filter(|&&i| y[i]).count() as u32;
    [idx.len() as u32 - maize, maize]
}

/// Sum of squared class counts over node size; higher is purer. Weighted
/// Gini impurity of a node equals `n - purity`.
fn purity(c0: f64, c1: f64) -> f64 {
    let n = c0 + c1;
    if n == 0.0 {
        0.0
    } else {
        (c0 * c0 + c1 * c1) / n
    }
}

impl<'a> Grower<'a> {
    pub fn new(data: Columns<'a>, params: &'a GrowParams, rng: ChaCha8Rng) -> Self {
        let d = data.cols.len();
        Grower {
            data,
            params,
            rng,
            nodes: Vec::new(),
            buf: Vec::new(),
            features: (0..d).collect(),
        }
    }

    pub fn grow(mut self, sample: &mut [usize]) -> Tree {
        self.build(sample, 0);
        Tree { nodes: self.nodes }
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let counts = counts_of(idx, self.data.y);
        let id = self.nodes.len();
        let pure = counts[0] == 0 || counts[1] == 0;
        let depth_capped = self.params.max_depth.is_some_and(|m| depth >= m);
        if pure || idx.len() < self.params.min_samples_split || depth_capped {
            self.nodes.push(TreeNode::Leaf { counts });
            return id;
        }
        let Some(split) = self.best_split(idx, counts) else {
            self.nodes.push(TreeNode::Leaf { counts });
            return id;
        };

        let col = &self.data.cols[split.feature];
        let mut n_left = 0;
        for i in 0..idx.len() {
            if col[idx[i]] <= split.threshold {
                idx.swap(i, n_left);
                n_left += 1;
            }
        }
        self.nodes.push(TreeNode::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left: 0,
            right: 0,
        });
        let (l, r) = idx.split_at_mut(n_left);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        if let TreeNode::Internal {
            left: lslot,
            right: rslot,
            ..
        } = &mut self.nodes[id]
        {
            *lslot = left;
            *rslot = right;
        }
        id
    }

    /// Search features in random order until `max_features` non-constant
    /// ones have been examined and a split with positive impurity decrease
    /// exists, or all features are exhausted.
    fn best_split(&mut self, idx: &[usize], counts: [u32; 2]) -> Option<Split> {
        let parent = purity(counts[0] as f64, counts[1] as f64);
        let d = self.features.len();
        let mut best: Option<Split> = None;
        let mut visited = 0;

        for j in 0..d {
            if visited >= self.params.max_features && best.is_some() {
                break;
            }
            let pick = self.rng.random_range(j..d);
            self.features.swap(j, pick);
            let f = self.features[j];

            let col = &self.data.cols[f];
            self.buf.clear();
            self.buf
                .extend(idx.iter().map(|&i| (col[i], self.data.y[i])));
            self.buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            if self.buf[0].0 == self.buf[self.buf.len() - 1].0 {
                continue;
            }
            visited += 1;

            let (mut l0, mut l1) = (0.0, 0.0);
            let (t0, t1) = (counts[0] as f64, counts[1] as f64);
            for k in 0..self.buf.len() - 1 {
                if self.buf[k].1 {
                    l1 += 1.0;
                } else {
                    l0 += 1.0;
                }
                let (a, b) = (self.buf[k].0, self.buf[k + 1].0);
                if a == b {
                    continue;
                }
                let score = purity(l0, l1) + purity(t0 - l0, t1 - l1);
                if score > parent * (1.0 + 1e-12) && best.as_ref().is_none_or(|s| score > s.score) {
                    let mid = a / 2.0 + b / 2.0;
                    let threshold = if mid >= a && mid < b { mid } else { a };
                    best = Some(Split {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }
}
