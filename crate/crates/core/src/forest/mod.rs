//! Multi-source clustering trees and forests.
//!
//! Each tree is grown on a bootstrap bag of the pseudo two-class augmented
//! data. Splits are axis-aligned thresholds on main features, chosen by the
//! joint gain over the visual (real vs pseudo), auxiliary and temporal terms.

mod conventional;
mod grow;
pub mod impurity;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{sample_pseudo, AugmentedSet};
use crate::correlation::TreeCorrelationLog;
use crate::data::{missing_fractions, FeatureMatrix, MultiSourceDataset, SourceWeights};
use crate::error::{Error, Result};

pub use conventional::{train_conventional_tree, ConventionalTree};
pub use impurity::{
    adapt_weights, aux_term_gain, classification_gain, gini, joint_gain, regression_impurity, term_gains,
    AuxStats, Moments, NodeStats, RootImpurities, TermGains,
};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SplitKind {
    #[default]
    AxisAligned,
    /// Threshold on a random two-feature linear combination.
    Oblique,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PseudoMode {
    /// Fresh pseudo rows for every tree, drawn from the tree's own stream.
    #[default]
    PerTree,
    /// One pseudo sample shared by all trees.
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub m_try: usize,
    pub phi: usize,
    pub weights: SourceWeights,
    pub seed: u64,
    #[serde(default)]
    pub split_kind: SplitKind,
    #[serde(default)]
    pub pseudo_mode: PseudoMode,
    #[serde(default = "default_true")]
    pub record_correlation: bool,
}

fn default_true() -> bool {
    true
}

impl TrainConfig {
    /// 1000 trees, `m_try = ⌈√d⌉`, `φ = 2`, weights from `alpha_v` and the sources' hints.
    pub fn for_dataset(dataset: &MultiSourceDataset, alpha_v: f64, seed: u64) -> Result<Self> {
        let hints: Vec<Option<f64>> = dataset.aux().iter().map(|s| s.descriptor.weight_hint).collect();
        Ok(Self {
            n_trees: 1000,
            m_try: default_m_try(dataset.dim()),
            phi: 2,
            weights: SourceWeights::from_hints(alpha_v, &hints)?,
            seed,
            split_kind: SplitKind::AxisAligned,
            pseudo_mode: PseudoMode::PerTree,
            record_correlation: true,
        })
    }

    pub fn validate(&self, dim: usize, num_sources: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::invalid("forest needs at least one tree"));
        }
        if self.m_try == 0 || self.m_try > dim {
            return Err(Error::invalid(format!("m_try must lie in [1, {dim}], got {}", self.m_try)));
        }
        if self.phi < 2 {
            return Err(Error::invalid(format!("phi must be at least 2, got {}", self.phi)));
        }
        if self.weights.alpha_aux.len() != num_sources {
            return Err(Error::invalid(format!(
                "{} auxiliary weights for {num_sources} sources",
                self.weights.alpha_aux.len()
            )));
        }
        self.weights.validate()
    }
}

pub fn default_m_try(dim: usize) -> usize {
    ((dim as f64).sqrt().ceil() as usize).clamp(1, dim.max(1))
}

/// Random stream for tree `t`; stream 0 is reserved for shared pseudo rows.
pub fn tree_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64 + 1);
    rng
}

fn shared_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Split {
    Axis { feature: u32, threshold: f64 },
    Oblique { features: [u32; 2], weights: [f64; 2], threshold: f64 },
}

impl Split {
    #[inline]
    pub fn goes_left(&self, x: &[f64]) -> bool {
        match *self {
            Split::Axis { feature, threshold } => x[feature as usize] < threshold,
            Split::Oblique {
                features,
                weights,
                threshold,
            } => project(x, features, weights) < threshold,
        }
    }

    pub fn threshold(&self) -> f64 {
        match *self {
            Split::Axis { threshold, .. } | Split::Oblique { threshold, .. } => threshold,
        }
    }
}

#[inline]
pub(crate) fn project(x: &[f64], features: [u32; 2], weights: [f64; 2]) -> f64 {
    weights[0] * x[features[0] as usize] + weights[1] * x[features[1] as usize]
}

/// Threshold strictly above `lo` and at most `hi`, so `x < t` iff `x <= lo` for observed values.
#[inline]
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo && mid <= hi {
        mid
    } else {
        hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Split {
        split: Split,
        left: u32,
        right: u32,
    },
    Leaf {
        /// Unique REAL training samples of the bag that reached this leaf.
        members: Vec<u32>,
        /// Out-of-bag training samples routed here after growth.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        oob: Vec<u32>,
    },
}

/// One trained tree stored as a flat node array; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub roots: RootImpurities,
    /// Per-tree weights after missing-data adaptation.
    pub weights: SourceWeights,
    /// `Σ (|S_j| - 1)` over split nodes.
    pub fan_in: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<TreeCorrelationLog>,
}

impl Tree {
    pub fn trace_leaf(&self, x: &[f64]) -> usize {
        let mut id = 0usize;
        loop {
            match &self.nodes[id] {
                Node::Leaf { .. } => return id,
                Node::Split { split, left, right } => {
                    id = if split.goes_left(x) { *left } else { *right } as usize;
                }
            }
        }
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        matches!(self.nodes[id], Node::Leaf { .. })
    }

    /// In-bag and out-of-bag training members of a leaf (empty for split nodes).
    pub fn leaf_samples(&self, id: usize) -> impl Iterator<Item = u32> + '_ {
        let (a, b): (&[u32], &[u32]) = match &self.nodes[id] {
            Node::Leaf { members, oob } => (members, oob),
            Node::Split { .. } => (&[], &[]),
        };
        a.iter().chain(b).copied()
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Depth of every node (root = 0).
    pub fn depths(&self) -> Vec<usize> {
        let mut depth = vec![0usize; self.nodes.len()];
        for (id, node) in self.nodes.iter().enumerate() {
            if let Node::Split { left, right, .. } = node {
                depth[*left as usize] = depth[id] + 1;
                depth[*right as usize] = depth[id] + 1;
            }
        }
        depth
    }

    /// Split parameters in creation (depth-first, left-first) order.
    pub fn split_log(&self) -> Vec<Option<Split>> {
        self.nodes
            .iter()
            .map(|n| match n {
                Node::Split { split, .. } => Some(*split),
                Node::Leaf { .. } => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MscForest {
    pub version: u32,
    pub config: TrainConfig,
    pub n_train: usize,
    pub dim: usize,
    pub trees: Vec<Tree>,
}

impl MscForest {
    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    /// Leaf id of every row of `samples` in every tree (`[tree][row]`).
    pub fn leaf_assignments(&self, samples: &FeatureMatrix) -> Vec<Vec<u32>> {
        self.trees
            .par_iter()
            .map(|tree| samples.rows_iter().map(|x| tree.trace_leaf(x) as u32).collect())
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("forest serializes")
    }
}

pub fn trace_leaf(tree: &Tree, x: &[f64]) -> usize {
    tree.trace_leaf(x)
}

/// Draws the bootstrap bag: `2N` augmented rows with replacement.
pub(crate) fn draw_bag<R: Rng + ?Sized>(n_aug: usize, rng: &mut R) -> Vec<u32> {
    (0..n_aug).map(|_| rng.random_range(0..n_aug) as u32).collect()
}

/// Trains tree `t` of a forest with the given configuration.
pub fn train_tree(dataset: &MultiSourceDataset, config: &TrainConfig, t: usize) -> Result<Tree> {
    config.validate(dataset.dim(), dataset.num_sources())?;
    let shared = match config.pseudo_mode {
        PseudoMode::Shared => Some(sample_pseudo(dataset.main(), &mut shared_rng(config.seed))),
        PseudoMode::PerTree => None,
    };
    Ok(train_tree_inner(dataset, config, t, shared.as_ref()))
}

fn train_tree_inner(
    dataset: &MultiSourceDataset,
    config: &TrainConfig,
    t: usize,
    shared: Option<&FeatureMatrix>,
) -> Tree {
    let mut rng = tree_rng(config.seed, t);
    let pseudo = match shared {
        Some(p) => p.clone(),
        None => sample_pseudo(dataset.main(), &mut rng),
    };
    let aug = AugmentedSet::from_parts(dataset.main(), pseudo);
    let bag = draw_bag(aug.len(), &mut rng);
    grow::grow_tree(dataset, &aug, &bag, config, &mut rng)
}

/// Bag-level missing fractions: REAL rows of the bag, repeats included.
pub(crate) fn bag_missing_fractions(dataset: &MultiSourceDataset, bag: &[u32]) -> Vec<f64> {
    let n = dataset.len() as u32;
    let real: Vec<usize> = bag.iter().filter(|&&r| r < n).map(|&r| r as usize).collect();
    if real.is_empty() {
        return vec![1.0; dataset.num_sources()];
    }
    missing_fractions(dataset, &real).expect("nonempty subset")
}

/// Trains all trees; output is identical for any rayon thread count.
pub fn train_forest(dataset: &MultiSourceDataset, config: &TrainConfig) -> Result<MscForest> {
    config.validate(dataset.dim(), dataset.num_sources())?;
    let shared = match config.pseudo_mode {
        PseudoMode::Shared => Some(sample_pseudo(dataset.main(), &mut shared_rng(config.seed))),
        PseudoMode::PerTree => None,
    };
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| train_tree_inner(dataset, config, t, shared.as_ref()))
        .collect();
    Ok(MscForest {
        version: MODEL_VERSION,
        config: config.clone(),
        n_train: dataset.len(),
        dim: dataset.dim(),
        trees,
    })
}

/// `Σ (|S_j| - 1)` over split nodes, where `S_j` are the `samples` routed through node `j`.
pub fn routed_fan_in(tree: &Tree, samples: &FeatureMatrix) -> u64 {
    let mut through = vec![0u64; tree.nodes.len()];
    for x in samples.rows_iter() {
        let mut id = 0usize;
        loop {
            through[id] += 1;
            match &tree.nodes[id] {
                Node::Leaf { .. } => break,
                Node::Split { split, left, right } => {
                    id = if split.goes_left(x) { *left } else { *right } as usize;
                }
            }
        }
    }
    tree.nodes
        .iter()
        .zip(&through)
        .filter(|(n, _)| matches!(n, Node::Split { .. }))
        .map(|(_, &c)| c.saturating_sub(1))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FanInStats {
    pub per_tree: Vec<u64>,
    /// Mean fan-in over trees.
    pub mean: f64,
    /// `histogram[k]` = number of (tree, training sample) pairs whose leaf is at depth `k`.
    pub path_length_histogram: Vec<u64>,
}

pub fn fan_in_stats(forest: &MscForest) -> FanInStats {
    let per_tree: Vec<u64> = forest.trees.iter().map(|t| t.fan_in).collect();
    let mean = if per_tree.is_empty() {
        0.0
    } else {
        per_tree.iter().sum::<u64>() as f64 / per_tree.len() as f64
    };
    let mut hist: Vec<u64> = Vec::new();
    for tree in &forest.trees {
        let depths = tree.depths();
        for (id, node) in tree.nodes.iter().enumerate() {
            if let Node::Leaf { members, oob } = node {
                let d = depths[id];
                if hist.len() <= d {
                    hist.resize(d + 1, 0);
                }
                hist[d] += (members.len() + oob.len()) as u64;
            }
        }
    }
    FanInStats {
        per_tree,
        mean,
        path_length_histogram: hist,
    }
}

#[cfg(test)]
mod tests;
