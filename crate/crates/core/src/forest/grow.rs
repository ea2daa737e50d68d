use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;

use super::impurity::{gini_of, redistribute, term_gains, AuxStats, Moments, NodeStats, RootImpurities};
use super::impurity::joint_gain;
use super::{bag_missing_fractions, midpoint, project, Node, Split, SplitKind, Tree, TrainConfig};
use crate::augment::AugmentedSet;
use crate::correlation::{node_feature_correlation, node_visual_aux_correlation, CorrelationRecorder};
use crate::data::{AuxValues, MultiSourceDataset, SourceWeights};

/// Gains at or below this are treated as zero (floating-point noise on no-information splits).
pub(crate) const GAIN_EPS: f64 = 1e-12;

struct Grower<'a> {
    aug: &'a AugmentedSet<'a>,
    dataset: &'a MultiSourceDataset,
    weights: SourceWeights,
    roots: RootImpurities,
    m_try: usize,
    phi: usize,
    split_kind: SplitKind,
    recorder: Option<CorrelationRecorder>,
}

/// Per-node centring offsets for continuous terms.
struct Shifts {
    aux: Vec<f64>,
    temporal: f64,
}

struct Candidate {
    split: Split,
    gain: f64,
}

pub(super) fn grow_tree<R: Rng + ?Sized>(
    dataset: &MultiSourceDataset,
    aug: &AugmentedSet<'_>,
    bag: &[u32],
    config: &TrainConfig,
    rng: &mut R,
) -> Tree {
    let n = dataset.len();
    let roots = root_impurities(dataset, bag);
    let mut deltas = bag_missing_fractions(dataset, bag);
    for (d, root) in deltas.iter_mut().zip(&roots.aux) {
        if root.is_none() {
            *d = 1.0;
        }
    }
    let drop = |r: Option<f64>| if r.is_none() { 1.0 } else { 0.0 };
    let weights = redistribute(&config.weights, drop(roots.visual), &deltas, drop(roots.temporal));

    let mut grower = Grower {
        aug,
        dataset,
        weights,
        roots,
        m_try: config.m_try,
        phi: config.phi,
        split_kind: config.split_kind,
        recorder: config.record_correlation.then(CorrelationRecorder::default),
    };

    let mut nodes: Vec<Node> = vec![placeholder()];
    let mut fan_in = 0u64;
    // Depth-first, left child first; placeholders are filled as nodes are processed.
    let mut stack: Vec<(usize, Vec<u32>)> = vec![(0, bag.to_vec())];
    while let Some((id, rows)) = stack.pop() {
        match grower.find_split(&rows, rng) {
            None => nodes[id] = make_leaf(&rows, n),
            Some(split) => {
                fan_in += rows.len() as u64 - 1;
                let (left_rows, right_rows): (Vec<u32>, Vec<u32>) =
                    rows.iter().partition(|&&r| split.goes_left(aug.row(r as usize)));
                let left = nodes.len();
                nodes.push(placeholder());
                let right = nodes.len();
                nodes.push(placeholder());
                nodes[id] = Node::Split {
                    split,
                    left: left as u32,
                    right: right as u32,
                };
                stack.push((right, right_rows));
                stack.push((left, left_rows));
            }
        }
    }

    let mut tree = Tree {
        nodes,
        roots: grower.roots,
        weights: grower.weights,
        fan_in,
        correlation: grower.recorder.map(CorrelationRecorder::finish),
    };
    route_out_of_bag(&mut tree, dataset, bag);
    tree
}

fn placeholder() -> Node {
    Node::Leaf {
        members: Vec::new(),
        oob: Vec::new(),
    }
}

fn make_leaf(rows: &[u32], n: usize) -> Node {
    let members: BTreeSet<u32> = rows.iter().copied().filter(|&r| (r as usize) < n).collect();
    Node::Leaf {
        members: members.into_iter().collect(),
        oob: Vec::new(),
    }
}

fn route_out_of_bag(tree: &mut Tree, dataset: &MultiSourceDataset, bag: &[u32]) {
    let n = dataset.len();
    let mut in_bag = vec![false; n];
    for &r in bag {
        if (r as usize) < n {
            in_bag[r as usize] = true;
        }
    }
    for i in (0..n).filter(|&i| !in_bag[i]) {
        let leaf = tree.trace_leaf(dataset.main().row(i));
        if let Node::Leaf { oob, .. } = &mut tree.nodes[leaf] {
            oob.push(i as u32);
        }
    }
}

pub(crate) fn root_impurities(dataset: &MultiSourceDataset, bag: &[u32]) -> RootImpurities {
    let n = dataset.len();
    let real: Vec<usize> = bag.iter().filter(|&&r| (r as usize) < n).map(|&r| r as usize).collect();
    let positive = |v: f64| (v > 0.0).then_some(v);
    let nreal = real.len() as f64;
    let visual = positive(gini_of(&[nreal, bag.len() as f64 - nreal], bag.len() as f64));
    let aux = dataset
        .aux()
        .iter()
        .map(|src| match &src.values {
            AuxValues::Categorical(v) => {
                let mut counts = vec![0.0; src.descriptor.vocabulary.len()];
                for &i in &real {
                    if let Some(c) = v[i] {
                        counts[c as usize] += 1.0;
                    }
                }
                let total = counts.iter().sum();
                positive(gini_of(&counts, total))
            }
            AuxValues::Continuous(v) => {
                let vals: Vec<f64> = real.iter().filter_map(|&i| v[i]).collect();
                positive(variance(&vals))
            }
        })
        .collect();
    let times: Vec<f64> = real.iter().map(|&i| i as f64).collect();
    RootImpurities {
        visual,
        aux,
        temporal: positive(variance(&times)),
    }
}

fn variance(vals: &[f64]) -> f64 {
    if vals.is_empty() {
        return 0.0;
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

impl Grower<'_> {
    #[inline]
    fn real_index(&self, r: u32) -> Option<usize> {
        self.aug.origin(r as usize)
    }

    fn shifts(&self, rows: &[u32]) -> Shifts {
        let mut aux_sum = vec![(0.0, 0.0); self.dataset.num_sources()];
        let (mut t_sum, mut t_n) = (0.0, 0.0);
        for &r in rows {
            let Some(i) = self.real_index(r) else { continue };
            t_sum += i as f64;
            t_n += 1.0;
            for (j, src) in self.dataset.aux().iter().enumerate() {
                if let AuxValues::Continuous(v) = &src.values {
                    if let Some(y) = v[i] {
                        aux_sum[j].0 += y;
                        aux_sum[j].1 += 1.0;
                    }
                }
            }
        }
        let mean = |(s, n): (f64, f64)| if n > 0.0 { s / n } else { 0.0 };
        Shifts {
            aux: aux_sum.into_iter().map(mean).collect(),
            temporal: mean((t_sum, t_n)),
        }
    }

    fn empty_stats(&self) -> NodeStats {
        NodeStats {
            visual: [0.0; 2],
            aux: self
                .dataset
                .aux()
                .iter()
                .map(|src| match &src.values {
                    AuxValues::Categorical(_) => AuxStats::Categorical(vec![0.0; src.descriptor.vocabulary.len()]),
                    AuxValues::Continuous(_) => AuxStats::Continuous(Moments::default()),
                })
                .collect(),
            temporal: Moments::default(),
        }
    }

    #[inline]
    fn add_row(&self, stats: &mut NodeStats, r: u32, shifts: &Shifts) {
        match self.real_index(r) {
            None => stats.visual[1] += 1.0,
            Some(i) => {
                stats.visual[0] += 1.0;
                stats.temporal.push(i as f64 - shifts.temporal);
                for (j, src) in self.dataset.aux().iter().enumerate() {
                    match (&src.values, &mut stats.aux[j]) {
                        (AuxValues::Categorical(v), AuxStats::Categorical(c)) => {
                            if let Some(k) = v[i] {
                                c[k as usize] += 1.0;
                            }
                        }
                        (AuxValues::Continuous(v), AuxStats::Continuous(m)) => {
                            if let Some(y) = v[i] {
                                m.push(y - shifts.aux[j]);
                            }
                        }
                        _ => unreachable!("stats built from the same sources"),
                    }
                }
            }
        }
    }

    fn stats_of(&self, rows: &[u32], shifts: &Shifts) -> NodeStats {
        let mut s = self.empty_stats();
        for &r in rows {
            self.add_row(&mut s, r, shifts);
        }
        s
    }

    fn all_identical(&self, rows: &[u32]) -> bool {
        let first = self.aug.row(rows[0] as usize);
        rows[1..].iter().all(|&r| self.aug.row(r as usize) == first)
    }

    /// Best threshold over `values` (aligned with `rows`); ties keep the lowest threshold.
    fn best_threshold(
        &self,
        rows: &[u32],
        values: &[f64],
        parent: &NodeStats,
        shifts: &Shifts,
    ) -> Option<(f64, f64)> {
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(rows[a].cmp(&rows[b])));
        let mut left = parent.empty_like();
        let mut best: Option<(f64, f64)> = None;
        for w in 0..order.len() - 1 {
            let (a, b) = (order[w], order[w + 1]);
            self.add_row(&mut left, rows[a], shifts);
            if values[a] < values[b] {
                let gain = joint_gain(parent, &left, &self.weights, &self.roots);
                if best.is_none_or(|(_, g)| gain > g) {
                    best = Some((midpoint(values[a], values[b]), gain));
                }
            }
        }
        best
    }

    fn find_split<R: Rng + ?Sized>(&mut self, rows: &[u32], rng: &mut R) -> Option<Split> {
        if rows.len() < self.phi || self.all_identical(rows) {
            return None;
        }
        let d = self.aug.dim();
        let mut features: Vec<usize> = sample(rng, d, self.m_try).into_vec();
        features.sort_unstable();

        let shifts = self.shifts(rows);
        let parent = self.stats_of(rows, &shifts);
        let mut best: Option<Candidate> = None;
        let mut per_feature: Vec<(usize, Option<f64>)> = Vec::with_capacity(features.len());
        let mut values = vec![0.0; rows.len()];

        for &f in &features {
            let split_of = |threshold: f64, extra: Option<(usize, [f64; 2])>| match extra {
                None => Split::Axis {
                    feature: f as u32,
                    threshold,
                },
                Some((g, w)) => Split::Oblique {
                    features: [f as u32, g as u32],
                    weights: w,
                    threshold,
                },
            };
            let extra = match self.split_kind {
                SplitKind::Oblique if d >= 2 => {
                    let mut g = rng.random_range(0..d - 1);
                    if g >= f {
                        g += 1;
                    }
                    let w = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
                    Some((g, w))
                }
                _ => None,
            };
            for (v, &r) in values.iter_mut().zip(rows) {
                let x = self.aug.row(r as usize);
                *v = match extra {
                    None => x[f],
                    Some((g, w)) => project(x, [f as u32, g as u32], w),
                };
            }
            let found = self.best_threshold(rows, &values, &parent, &shifts);
            per_feature.push((f, found.map(|(t, _)| t)));
            if let Some((threshold, gain)) = found {
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(Candidate {
                        split: split_of(threshold, extra),
                        gain,
                    });
                }
            }
        }

        let best = best.filter(|b| b.gain > GAIN_EPS)?;
        let recorder = match best.split {
            Split::Axis { feature, threshold } => self.recorder.take().map(|rec| (rec, feature, threshold)),
            Split::Oblique { .. } => None,
        };
        if let Some((mut rec, feature, threshold)) = recorder {
            let nu = feature as usize;
            let left_nu: Vec<bool> = rows.iter().map(|&r| self.aug.value(r as usize, nu) < threshold).collect();
            for &(tau, t_tau) in &per_feature {
                let Some(t_tau) = t_tau else { continue };
                if tau == nu {
                    continue;
                }
                let left_tau: Vec<bool> = rows.iter().map(|&r| self.aug.value(r as usize, tau) < t_tau).collect();
                if let Some(lambda) = node_feature_correlation(&left_nu, &left_tau) {
                    rec.record_feature_pair(nu, tau, lambda);
                }
            }
            let mut left_stats = parent.empty_like();
            for (&r, &l) in rows.iter().zip(&left_nu) {
                if l {
                    self.add_row(&mut left_stats, r, &shifts);
                }
            }
            let gains = term_gains(&parent, &left_stats, &self.roots);
            for (j, root) in self.roots.aux.iter().enumerate() {
                if root.is_some() {
                    rec.record_visual_aux(nu, j, node_visual_aux_correlation(gains.aux[j]));
                }
            }
            self.recorder = Some(rec);
        }
        Some(best.split)
    }
}
