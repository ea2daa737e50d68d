//! Tree-structure aware cluster assignment and tag inference for unseen samples.

use serde::Serialize;

use crate::forest::{MscForest, Node};
use crate::spectral::ClusterModel;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid among `candidates`; ties go to the lower cluster id.
fn nearest_among(model: &ClusterModel, x: &[f64], candidates: impl Iterator<Item = usize>) -> usize {
    let mut best = (usize::MAX, f64::INFINITY);
    for c in candidates {
        let d = sq_dist(x, &model.centroids[c]);
        if d < best.1 || (d == best.1 && c < best.0) {
            best = (c, d);
        }
    }
    best.0
}

/// Global nearest centroid (hard assignment).
pub fn assign_hard(model: &ClusterModel, x: &[f64]) -> usize {
    nearest_among(model, x, (0..model.n_clusters).filter(|&c| model.sizes[c] > 0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assignment {
    pub cluster: usize,
    /// Tree-level nearest cluster for every tree.
    pub per_tree: Vec<usize>,
    /// `votes[c]` = number of trees choosing `c`.
    pub votes: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceTag {
    pub source: String,
    pub distribution: Vec<f64>,
    /// Index of the most probable category (or histogram bin).
    pub argmax: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TagPrediction {
    pub tags: Vec<SourceTag>,
}

/// Precomputed cluster memberships of every leaf, for repeated queries.
pub struct Inference<'a> {
    forest: &'a MscForest,
    model: &'a ClusterModel,
    /// `leaf_clusters[tree][node]`: sorted distinct clusters of the leaf's training samples.
    leaf_clusters: Vec<Vec<Vec<u32>>>,
}

impl<'a> Inference<'a> {
    pub fn new(forest: &'a MscForest, model: &'a ClusterModel) -> Self {
        let leaf_clusters = forest
            .trees
            .iter()
            .map(|tree| {
                tree.nodes
                    .iter()
                    .enumerate()
                    .map(|(id, node)| match node {
                        Node::Leaf { .. } => {
                            let mut cs: Vec<u32> =
                                tree.leaf_samples(id).map(|i| model.labels[i as usize] as u32).collect();
                            cs.sort_unstable();
                            cs.dedup();
                            cs
                        }
                        Node::Split { .. } => Vec::new(),
                    })
                    .collect()
            })
            .collect();
        Self {
            forest,
            model,
            leaf_clusters,
        }
    }

    /// Nearest centroid among the clusters present in the leaf `x` reaches in tree `t`;
    /// a leaf without training samples falls back to all clusters.
    pub fn tree_nearest_cluster(&self, t: usize, x: &[f64]) -> usize {
        let leaf = self.forest.trees[t].trace_leaf(x);
        let present = &self.leaf_clusters[t][leaf];
        if present.is_empty() {
            assign_hard(self.model, x)
        } else {
            nearest_among(self.model, x, present.iter().map(|&c| c as usize))
        }
    }

    pub fn assign(&self, x: &[f64]) -> Assignment {
        let per_tree: Vec<usize> = (0..self.forest.trees.len())
            .map(|t| self.tree_nearest_cluster(t, x))
            .collect();
        let mut votes = vec![0u32; self.model.n_clusters];
        for &c in &per_tree {
            votes[c] += 1;
        }
        let cluster = majority(&votes, &self.model.sizes);
        Assignment {
            cluster,
            per_tree,
            votes,
        }
    }

    /// Forest-averaged tag distributions over the tree-level nearest clusters.
    pub fn infer_tags(&self, assignment: &Assignment) -> TagPrediction {
        let t = assignment.per_tree.len().max(1) as f64;
        let tags = self
            .model
            .profiles
            .iter()
            .map(|src| {
                let len = src.clusters.first().map_or(0, |p| p.distribution().len());
                let mut dist = vec![0.0; len];
                for &c in &assignment.per_tree {
                    for (acc, p) in dist.iter_mut().zip(src.clusters[c].distribution()) {
                        *acc += p;
                    }
                }
                dist.iter_mut().for_each(|v| *v /= t);
                let argmax = argmax_lowest(&dist);
                SourceTag {
                    source: src.name.clone(),
                    distribution: dist,
                    argmax,
                }
            })
            .collect();
        TagPrediction { tags }
    }
}

/// Most-voted cluster; ties go to the larger training cluster, then the lower id.
pub fn majority(votes: &[u32], sizes: &[usize]) -> usize {
    (0..votes.len())
        .max_by(|&a, &b| {
            votes[a]
                .cmp(&votes[b])
                .then(sizes[a].cmp(&sizes[b]))
                .then(b.cmp(&a))
        })
        .unwrap_or(0)
}

/// Index of the maximum; ties go to the lowest index.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn tree_nearest_cluster(forest: &MscForest, model: &ClusterModel, t: usize, x: &[f64]) -> usize {
    Inference::new(forest, model).tree_nearest_cluster(t, x)
}

pub fn assign_cluster(forest: &MscForest, model: &ClusterModel, x: &[f64]) -> Assignment {
    Inference::new(forest, model).assign(x)
}

pub fn infer_tags(forest: &MscForest, model: &ClusterModel, x: &[f64]) -> TagPrediction {
    let inf = Inference::new(forest, model);
    let a = inf.assign(x);
    inf.infer_tags(&a)
}
