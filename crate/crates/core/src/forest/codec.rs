//! Binary model file.
//!
//! All integers are little-endian.
//!
//! ```text
//! magic            4 bytes  "TCRF"
//! version          u16
//! feature_kind     u8       1 = RH11, 2 = HARM20
//! class labels     2 x (u16 length, UTF-8 bytes)
//! n_trees          u32      configured tree count
//! max_features     u8 rule (0 sqrt, 1 all, 2 fixed) + u32 k
//! min_samples_split u32
//! max_depth        u32      u32::MAX = unbounded
//! seed             u64
//! tree count       u32
//! per tree:        u32 node count, then nodes in pre-order:
//!   leaf           u8 0, u32 non-maize count, u32 maize count
//!   internal       u8 1, u16 feature index, f64 threshold
//! ```

use super::tree::{Tree, TreeNode};
use super::{Forest, ForestConfig, MaxFeatures};
use crate::error::{Error, Result};
use crate::features::FeatureKind;

pub const MAGIC: &[u8; 4] = b"TCRF";
pub const FORMAT_VERSION: u16 = 1;

const MIN_NODE_BYTES: usize = 9;

pub fn serialize_forest(forest: &Forest) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(forest.feature_kind.code());
    for label in &forest.class_labels {
        out.extend_from_slice(&(label.len() as u16).to_le_bytes());
        out.extend_from_slice(label.as_bytes());
    }
    let cfg = &forest.config;
    out.extend_from_slice(&(cfg.n_trees as u32).to_le_bytes());
    let (rule, k) = match cfg.max_features {
        MaxFeatures::Sqrt => (0u8, 0u32),
        MaxFeatures::All => (1, 0),
        MaxFeatures::Fixed(k) => (2, k as u32),
    };
    out.push(rule);
    out.extend_from_slice(&k.to_le_bytes());
    out.extend_from_slice(&(cfg.min_samples_split as u32).to_le_bytes());
    let depth = cfg.max_depth.map_or(u32::MAX, |d| d as u32);
    out.extend_from_slice(&depth.to_le_bytes());
    out.extend_from_slice(&cfg.seed.to_le_bytes());
    out.extend_from_slice(&(forest.trees.len() as u32).to_le_bytes());
    for tree in &forest.trees {
        out.extend_from_slice(&(tree.nodes.len() as u32).to_le_bytes());
        write_preorder(tree, 0, &mut out);
    }
    out
}

fn write_preorder(tree: &Tree, root: usize, out: &mut Vec<u8>) {
    let mut stack = vec![root];
    while let Some(i) = stack.pop() {
        match &tree.nodes[i] {
            TreeNode::Leaf { counts } => {
                out.push(0);
                out.extend_from_slice(&counts[0].to_le_bytes());
                out.extend_from_slice(&counts[1].to_le_bytes());
            }
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
            } => {
                out.push(1);
                out.extend_from_slice(&(*feature as u16).to_le_bytes());
                out.extend_from_slice(&threshold.to_le_bytes());
                stack.push(*right);
                stack.push(*left);
            }
        }
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Format(format!(
                "truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn deserialize_forest(bytes: &[u8]) -> Result<Forest> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = c.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let kind_code = c.u8("feature kind")?;
    let feature_kind = FeatureKind::from_code(kind_code)
        .ok_or_else(|| Error::Format(format!("unknown feature kind code {kind_code}")))?;
    let mut labels = Vec::with_capacity(2);
    for _ in 0..2 {
        let len = c.u16("label length")? as usize;
        let raw = c.take(len, "label")?;
        labels.push(
            String::from_utf8(raw.to_vec())
                .map_err(|_| Error::Format("class label is not UTF-8".into()))?,
        );
    }
    let n_trees_cfg = c.u32("n_trees")? as usize;
    let rule = c.u8("max_features rule")?;
    let k = c.u32("max_features k")? as usize;
    let max_features = match rule {
        0 => MaxFeatures::Sqrt,
        1 => MaxFeatures::All,
        2 => MaxFeatures::Fixed(k),
        other => return Err(Error::Format(format!("unknown max_features rule {other}"))),
    };
    let min_samples_split = c.u32("min_samples_split")? as usize;
    let depth = c.u32("max_depth")?;
    let seed = c.u64("seed")?;
    let config = ForestConfig {
        n_trees: n_trees_cfg,
        max_features,
        min_samples_split,
        max_depth: (depth != u32::MAX).then_some(depth as usize),
        seed,
    };

    let tree_count = c.u32("tree count")? as usize;
    if tree_count == 0 {
        return Err(Error::Format("model has no trees".into()));
    }
    if tree_count > c.remaining() / (4 + MIN_NODE_BYTES) {
        return Err(Error::Format(format!(
            "tree count {tree_count} exceeds remaining {} bytes",
            c.remaining()
        )));
    }
    let dim = feature_kind.dim();
    let mut trees = Vec::with_capacity(tree_count);
    for t in 0..tree_count {
        trees.push(read_tree(&mut c, dim, t)?);
    }
    if c.remaining() != 0 {
        return Err(Error::Format(format!("{} trailing bytes", c.remaining())));
    }
    let [a, b]: [String; 2] = labels.try_into().unwrap();
    Ok(Forest {
        config,
        trees,
        feature_kind,
        class_labels: [a, b],
    })
}

fn read_tree(c: &mut Cursor, dim: usize, t: usize) -> Result<Tree> {
    let count = c.u32("node count")? as usize;
    if count == 0 || count > c.remaining() / MIN_NODE_BYTES {
        return Err(Error::Format(format!(
            "tree {t}: node count {count} inconsistent with {} remaining bytes",
            c.remaining()
        )));
    }
    let mut nodes = Vec::with_capacity(count);
    // Internal nodes still waiting for a right child (left already assigned
    // when `left != 0`).
    let mut open: Vec<usize> = Vec::new();
    for i in 0..count {
        if i > 0 {
            let Some(&parent) = open.last() else {
                return Err(Error::Format(format!("tree {t}: node {i} has no parent")));
            };
            if let TreeNode::Internal { left, right, .. } = &mut nodes[parent] {
                if *left == 0 {
                    *left = i;
                } else {
                    *right = i;
                    open.pop();
                }
            }
        }
        match c.u8("node tag")? {
            0 => {
                let n0 = c.u32("leaf count")?;
                let n1 = c.u32("leaf count")?;
                if n0 as u64 + n1 as u64 == 0 {
                    return Err(Error::Format(format!("tree {t}: empty leaf")));
                }
                nodes.push(TreeNode::Leaf { counts: [n0, n1] });
            }
            1 => {
                let feature = c.u16("feature")? as usize;
                if feature >= dim {
                    return Err(Error::Format(format!(
                        "tree {t}: feature index {feature} out of range for {dim} features"
                    )));
                }
                let threshold = c.f64("threshold")?;
                if threshold.is_nan() {
                    return Err(Error::Format(format!("tree {t}: NaN threshold")));
                }
                nodes.push(TreeNode::Internal {
                    feature,
                    threshold,
                    left: 0,
                    right: 0,
                });
                open.push(i);
            }
            other => return Err(Error::Format(format!("tree {t}: unknown node tag {other}"))),
        }
    }
    if !open.is_empty() {
        return Err(Error::Format(format!("tree {t}: incomplete node list")));
    }
    Ok(Tree { nodes })
}
