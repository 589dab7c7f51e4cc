//! Random-forest binary classifier (non-maize vs. maize).
//!
//! Each tree is grown on a bootstrap sample drawn from its own ChaCha
//! stream (`seed`, stream = tree index), so the trained forest depends only
//! on the data and the seed, never on thread scheduling.

mod codec;
pub mod tree;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureKind;

pub use codec::{deserialize_forest, serialize_forest, FORMAT_VERSION, MAGIC};
pub use tree::{Tree, TreeNode};

/// Default class labels, in (negative, positive) order.
pub const CLASS_LABELS: [&str; 2] = ["non-maize", "maize"];

/// Number of features examined at each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MaxFeaturesRepr", into = "MaxFeaturesRepr")]
pub enum MaxFeatures {
    Sqrt,
    All,
    Fixed(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MaxFeaturesRepr {
    Name(String),
    Count(usize),
}

impl TryFrom<MaxFeaturesRepr> for MaxFeatures {
    type Error = String;

    fn try_from(r: MaxFeaturesRepr) -> std::result::Result<Self, String> {
        match r {
            MaxFeaturesRepr::Name(s) if s == "sqrt" => Ok(MaxFeatures::Sqrt),
            MaxFeaturesRepr::Name(s) if s == "all" => Ok(MaxFeatures::All),
            MaxFeaturesRepr::Name(s) => Err(format!("unknown max_features rule `{s}`")),
            MaxFeaturesRepr::Count(k) => Ok(MaxFeatures::Fixed(k)),
        }
    }
}

impl From<MaxFeatures> for MaxFeaturesRepr {
    fn from(m: MaxFeatures) -> Self {
        match m {
            MaxFeatures::Sqrt => MaxFeaturesRepr::Name("sqrt".into()),
            MaxFeatures::All => MaxFeaturesRepr::Name("all".into()),
            MaxFeatures::Fixed(k) => MaxFeaturesRepr::Count(k),
        }
    }
}

impl MaxFeatures {
    pub fn resolve(&self, dim: usize) -> usize {
        match *self {
            MaxFeatures::Sqrt => ((dim as f64).sqrt().floor() as usize).max(1),
            MaxFeatures::All => dim,
            MaxFeatures::Fixed(k) => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_features: MaxFeatures::Sqrt,
            min_samples_split: 2,
            max_depth: None,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be at least 1".into()));
        }
        if let MaxFeatures::Fixed(k) = self.max_features {
            if k == 0 || k > dim {
                return Err(Error::Config(format!(
                    "max_features = {k} must be in 1..={dim}"
                )));
            }
        }
        if self.min_samples_split < 2 {
            return Err(Error::Config("min_samples_split must be at least 2".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ForestConfig {
            seed,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub config: ForestConfig,
    pub trees: Vec<Tree>,
    pub feature_kind: FeatureKind,
    pub class_labels: [String; 2],
}

fn tree_rng(seed: u64, tree_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree_index as u64);
    rng
}

/// Train a forest on rows `x` with maize labels `y`.
pub fn train_forest(
    x: &[Vec<f64>],
    y: &[bool],
    kind: FeatureKind,
    cfg: &ForestConfig,
) -> Result<Forest> {
    let dim = kind.dim();
    cfg.validate(dim)?;
    if x.len() != y.len() {
        return Err(Error::Length(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::Training(format!(
            "need at least 2 samples, got {}",
            x.len()
        )));
    }
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(Error::Training(
            "training labels contain a single class".into(),
        ));
    }
    for (i, row) in x.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: row.len(),
            });
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite feature {j} in sample {i}"
            )));
        }
    }

    let cols: Vec<Vec<f64>> = (0..dim).map(|j| x.iter().map(|r| r[j]).collect()).collect();
    let params = tree::GrowParams {
        max_features: cfg.max_features.resolve(dim),
        min_samples_split: cfg.min_samples_split,
        max_depth: cfg.max_depth,
    };
    let n = x.len();
    let trees: Vec<Tree> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(cfg.seed, t);
            let mut sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let data = tree::Columns { cols: &cols, y };
            tree::Grower::new(data, &params, rng).grow(&mut sample)
        })
        .collect();

    Ok(Forest {
        config: cfg.clone(),
        trees,
        feature_kind: kind,
        class_labels: CLASS_LABELS.map(String::from),
    })
}

impl Forest {
    pub fn dim(&self) -> usize {
        self.feature_kind.dim()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Number of trees voting maize.
    pub fn maize_votes(&self, x: &[f64]) -> Result<usize> {
        self.check_dim(x)?;
        Ok(self.trees.iter().filter(|t| t.vote(x)).count())
    }

    /// Majority vote; an exact tie goes to non-maize.
    pub fn predict_one(&self, x: &[f64]) -> Result<bool> {
        Ok(2 * self.maize_votes(x)? > self.trees.len())
    }

    pub fn proba_one(&self, x: &[f64]) -> Result<f64> {
        Ok(self.maize_votes(x)? as f64 / self.trees.len() as f64)
    }

    /// Class and maize vote fraction from a single pass over the trees.
    pub fn classify_one(&self, x: &[f64]) -> Result<(bool, f64)> {
        let votes = self.maize_votes(x)?;
        let n = self.trees.len();
        Ok((2 * votes > n, votes as f64 / n as f64))
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<bool>> {
        x.par_iter().map(|r| self.predict_one(r)).collect()
    }

    /// Fraction of trees voting maize, per sample.
    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        x.par_iter().map(|r| self.proba_one(r)).collect()
    }

    /// How often each feature is used as a split variable.
    pub fn split_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.dim()];
        for t in &self.trees {
            for node in &t.nodes {
                if let TreeNode::Internal { feature, .. } = node {
                    counts[*feature] += 1;
                }
            }
        }
        counts
    }
}
