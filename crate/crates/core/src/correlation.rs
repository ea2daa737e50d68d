//! Feature- and source-level correlation read off a trained forest.
//!
//! During growth every split node records, for its chosen feature ν, the
//! partition overlap with each other sampled feature's own best split and the
//! normalised gain of each auxiliary term. Those node values are averaged per
//! tree, then across trees, then over source feature groups.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::forest::MscForest;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairStat {
    pub a: u32,
    pub b: u32,
    pub sum: f64,
    pub count: u32,
}

/// Per-tree node-level correlation sums, sorted by `(a, b)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TreeCorrelationLog {
    /// `(ν, τ)` over main features.
    pub feature_pairs: Vec<PairStat>,
    /// `(ν, ω)` with ω an auxiliary source index.
    pub visual_aux: Vec<PairStat>,
}

#[derive(Debug, Default)]
pub(crate) struct CorrelationRecorder {
    pairs: BTreeMap<(u32, u32), (f64, u32)>,
    visual_aux: BTreeMap<(u32, u32), (f64, u32)>,
}

impl CorrelationRecorder {
    pub(crate) fn record_feature_pair(&mut self, nu: usize, tau: usize, lambda: f64) {
        let e = self.pairs.entry((nu as u32, tau as u32)).or_insert((0.0, 0));
        e.0 += lambda;
        e.1 += 1;
    }

    pub(crate) fn record_visual_aux(&mut self, nu: usize, omega: usize, lambda: f64) {
        let e = self.visual_aux.entry((nu as u32, omega as u32)).or_insert((0.0, 0));
        e.0 += lambda;
        e.1 += 1;
    }

    pub(crate) fn finish(self) -> TreeCorrelationLog {
        let conv = |m: BTreeMap<(u32, u32), (f64, u32)>| {
            m.into_iter()
                .map(|((a, b), (sum, count))| PairStat { a, b, sum, count })
                .collect()
        };
        TreeCorrelationLog {
            feature_pairs: conv(self.pairs),
            visual_aux: conv(self.visual_aux),
        }
    }
}

/// Partition agreement `λ_f(ν, τ)` of two left/right assignments of the same node rows.
///
/// Returns `None` when either partition leaves one side empty.
pub fn node_feature_correlation(left_nu: &[bool], left_tau: &[bool]) -> Option<f64> {
    assert_eq!(left_nu.len(), left_tau.len());
    let s = left_nu.len();
    let l_nu = left_nu.iter().filter(|&&l| l).count();
    let l_tau = left_tau.iter().filter(|&&l| l).count();
    if l_nu == 0 || l_nu == s || l_tau == 0 || l_tau == s {
        return None;
    }
    let ll = left_nu.iter().zip(left_tau).filter(|(a, b)| **a && **b).count();
    let rr = left_nu.iter().zip(left_tau).filter(|(a, b)| !**a && !**b).count();
    Some(partition_lambda(s, l_nu, ll, rr))
}

/// `(p - (1 - |L∩L|/|S| - |R∩R|/|S|)) / p` with `p = min(|L|, |R|) / |S|`, floored at 0.
pub fn partition_lambda(size: usize, left_nu: usize, ll: usize, rr: usize) -> f64 {
    let s = size as f64;
    let p = left_nu.min(size - left_nu) as f64 / s;
    let lambda = (p - (1.0 - ll as f64 / s - rr as f64 / s)) / p;
    lambda.clamp(0.0, 1.0)
}

/// Visual–auxiliary node correlation: the term's normalised gain `ΔI_ω / I_ω0`, clamped to `[0, 1]`.
pub fn node_visual_aux_correlation(normalised_gain: f64) -> f64 {
    normalised_gain.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroCooccurrence {
    /// Trees that never sampled the pair add 0 but still count in the tree total.
    #[default]
    CountAsZero,
    /// Such trees are left out of the average.
    Exclude,
}

/// Forest mean of per-tree node means; `per_tree` holds `(sum, count)` for every tree.
pub fn aggregate_correlation(per_tree: &[(f64, u32)], policy: ZeroCooccurrence) -> f64 {
    let mut total = 0.0;
    let mut trees = 0usize;
    for &(sum, count) in per_tree {
        if count > 0 {
            total += sum / count as f64;
            trees += 1;
        } else if policy == ZeroCooccurrence::CountAsZero {
            trees += 1;
        }
    }
    if trees == 0 {
        0.0
    } else {
        total / trees as f64
    }
}

/// Mean of `lambda[ν][τ]` over `ν ∈ group_i`, `τ ∈ group_j`.
pub fn source_correlation(lambda: &[Vec<f64>], group_i: &[usize], group_j: &[usize]) -> f64 {
    assert!(!group_i.is_empty() && !group_j.is_empty(), "source groups must be nonempty");
    let sum: f64 = group_i
        .iter()
        .flat_map(|&a| group_j.iter().map(move |&b| lambda[a][b]))
        .sum();
    sum / (group_i.len() * group_j.len()) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceGroup {
    pub name: String,
    /// Indices into the feature universe: main features first, then auxiliary sources.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeaturePair {
    pub a: String,
    pub b: String,
    pub lambda: f64,
    pub cooccurrences: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    /// Names of the `d + m` features: main features, then auxiliary sources.
    pub features: Vec<String>,
    /// `lambda[a][b]` over the feature universe. Auxiliary–auxiliary pairs are not
    /// measured and are 0 off the diagonal.
    pub lambda: Vec<Vec<f64>>,
    /// Forest-wide co-occurrence totals matching `lambda`.
    pub cooccurrences: Vec<Vec<u64>>,
    pub groups: Vec<SourceGroup>,
    /// `psi[i][j]` between groups, as measured (not symmetrised).
    pub psi: Vec<Vec<f64>>,
}

impl CorrelationReport {
    pub fn psi_symmetrised(&self) -> Vec<Vec<f64>> {
        let k = self.psi.len();
        (0..k)
            .map(|i| (0..k).map(|j| 0.5 * (self.psi[i][j] + self.psi[j][i])).collect())
            .collect()
    }

    /// Ordered feature pairs with at least one co-occurrence, largest `λ` first.
    pub fn top_pairs(&self, limit: usize) -> Vec<FeaturePair> {
        let mut out: Vec<FeaturePair> = Vec::new();
        let n = self.features.len();
        for a in 0..n {
            for b in 0..n {
                if a != b && self.cooccurrences[a][b] > 0 {
                    out.push(FeaturePair {
                        a: self.features[a].clone(),
                        b: self.features[b].clone(),
                        lambda: self.lambda[a][b],
                        cooccurrences: self.cooccurrences[a][b],
                    });
                }
            }
        }
        out.sort_by(|x, y| y.lambda.total_cmp(&x.lambda));
        out.truncate(limit);
        out
    }
}

/// Feature-level correlations of `forest` over its `d` main features and `m` sources.
pub fn feature_correlations(forest: &MscForest, m: usize, policy: ZeroCooccurrence) -> (Vec<Vec<f64>>, Vec<Vec<u64>>) {
    let d = forest.dim;
    let u = d + m;
    let t = forest.trees.len();
    // Per pair: one (sum, count) slot per tree.
    let mut slots: BTreeMap<(usize, usize), Vec<(f64, u32)>> = BTreeMap::new();
    for (ti, tree) in forest.trees.iter().enumerate() {
        let Some(log) = &tree.correlation else { continue };
        let pairs = log
            .feature_pairs
            .iter()
            .map(|p| ((p.a as usize, p.b as usize), p))
            .chain(log.visual_aux.iter().map(|p| ((p.a as usize, d + p.b as usize), p)));
        for (key, p) in pairs {
            slots.entry(key).or_insert_with(|| vec![(0.0, 0); t])[ti] = (p.sum, p.count);
        }
    }
    let mut lambda = vec![vec![0.0; u]; u];
    let mut counts = vec![vec![0u64; u]; u];
    for (i, row) in lambda.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for ((a, b), per_tree) in &slots {
        let value = aggregate_correlation(per_tree, policy);
        let c: u64 = per_tree.iter().map(|&(_, n)| n as u64).sum();
        lambda[*a][*b] = value;
        counts[*a][*b] = c;
        if *b >= d {
            // Visual–auxiliary correlation has a single definition; mirror it.
            lambda[*b][*a] = value;
            counts[*b][*a] = c;
        }
    }
    (lambda, counts)
}

pub fn correlation_report(
    forest: &MscForest,
    feature_names: &[String],
    source_names: &[String],
    groups: Option<Vec<SourceGroup>>,
    policy: ZeroCooccurrence,
) -> CorrelationReport {
    let d = forest.dim;
    let m = source_names.len();
    let (lambda, cooccurrences) = feature_correlations(forest, m, policy);
    let groups = groups.unwrap_or_else(|| {
        let mut g = vec![SourceGroup {
            name: "visual".into(),
            members: (0..d).collect(),
        }];
        g.extend(source_names.iter().enumerate().map(|(j, n)| SourceGroup {
            name: n.clone(),
            members: vec![d + j],
        }));
        g
    });
    let psi = groups
        .iter()
        .map(|gi| {
            groups
                .iter()
                .map(|gj| source_correlation(&lambda, &gi.members, &gj.members))
                .collect()
        })
        .collect();
    CorrelationReport {
        features: feature_names.iter().chain(source_names).cloned().collect(),
        lambda,
        cooccurrences,
        groups,
        psi,
    }
}
