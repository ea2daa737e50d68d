//! Key-clip selection and summary manifests for unseen sequences.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use petgraph::graph::{NodeIndex, UnGraph};
use serde::{Deserialize, Serialize};

use crate::affinity::{forest_affinity, knn_sparsify, AffinityMatrix};
use crate::data::{FeatureMatrix, MultiSourceDataset};
use crate::error::{Error, Result};
use crate::forest::MscForest;
use crate::inference::{Inference, TagPrediction};
use crate::spectral::ClusterModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Typicality {
    Interesting,
    Usual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipTag {
    pub argmax: usize,
    /// Category name for categorical sources, bin centre for continuous ones.
    pub label: String,
    pub distribution: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryClip {
    pub id: String,
    pub t: f64,
    pub cluster: usize,
    pub typicality: Typicality,
    pub tags: BTreeMap<String, ClipTag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryConfig {
    pub knn_k: usize,
    pub interesting_fraction: f64,
    pub n_unseen: usize,
    pub representatives: Vec<String>,
    pub unreachable_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryManifest {
    pub clips: Vec<SummaryClip>,
    pub length: usize,
    pub config: SummaryConfig,
}

impl SummaryManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serialises")
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// One clip per occupied cluster: the member nearest the cluster's member mean.
/// Returned as `(cluster, clip index)` in cluster order.
pub fn representatives(assignments: &[usize], features: &FeatureMatrix, time: &[f64]) -> Vec<(usize, usize)> {
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in assignments.iter().enumerate() {
        members.entry(c).or_default().push(i);
    }
    let d = features.ncols();
    members
        .into_iter()
        .map(|(c, idx)| {
            let mut mean = vec![0.0; d];
            for &i in &idx {
                for (m, v) in mean.iter_mut().zip(features.row(i)) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= idx.len() as f64);
            let best = idx
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    sq_dist(features.row(a), &mean)
                        .total_cmp(&sq_dist(features.row(b), &mean))
                        .then(time[a].total_cmp(&time[b]))
                        .then(a.cmp(&b))
                })
                .expect("nonempty cluster");
            (c, best)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyClips {
    /// Sorted, deduplicated clip indices.
    pub clips: Vec<usize>,
    pub unreachable_pairs: Vec<(usize, usize)>,
}

/// Union of shortest paths between consecutive representatives, with edge length 1 - affinity.
pub fn keyclip_paths(graph: &AffinityMatrix, reps_by_time: &[usize]) -> KeyClips {
    let n = graph.len();
    let mut g = UnGraph::<(), f64>::with_capacity(n, 0);
    let nodes: Vec<NodeIndex> = (0..n).map(|_| g.add_node(())).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            let a = graph.get(i, j);
            if a > 0.0 {
                g.add_edge(nodes[i], nodes[j], (1.0 - a).max(0.0));
            }
        }
    }
    let mut keep = vec![false; n];
    let mut unreachable = Vec::new();
    for &r in reps_by_time {
        keep[r] = true;
    }
    for pair in reps_by_time.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let found = petgraph::algo::astar(&g, nodes[a], |v| v == nodes[b], |e| *e.weight(), |_| 0.0);
        match found {
            Some((_, path)) => path.into_iter().for_each(|v| keep[v.index()] = true),
            None => {
                log::warn!("no path between representative clips {a} and {b}; keeping endpoints only");
                unreachable.push((a, b));
            }
        }
    }
    KeyClips {
        clips: (0..n).filter(|&i| keep[i]).collect(),
        unreachable_pairs: unreachable,
    }
}

/// Flags the ceil(0.2 * occupied) smallest occupied clusters; ties go to the lower id.
pub fn interesting_clusters(counts: &[usize], fraction: f64) -> Vec<bool> {
    let mut occupied: Vec<usize> = (0..counts.len()).filter(|&c| counts[c] > 0).collect();
    occupied.sort_by_key(|&c| (counts[c], c));
    let take = (fraction * occupied.len() as f64 - 1e-9).ceil().max(0.0) as usize;
    let mut flags = vec![false; counts.len()];
    for &c in occupied.iter().take(take) {
        flags[c] = true;
    }
    flags
}

pub const INTERESTING_FRACTION: f64 = 0.2;

/// Builds the manifest from key clips in time order.
#[allow(clippy::too_many_arguments)]
pub fn compose_summary(
    keyclips: &[usize],
    assignments: &[usize],
    tags: &[TagPrediction],
    n_clusters: usize,
    model: &ClusterModel,
    ids: &[String],
    time: &[f64],
    config: SummaryConfig,
) -> Result<SummaryManifest> {
    if keyclips.is_empty() {
        return Err(Error::invalid("summary needs at least one key clip"));
    }
    let mut counts = vec![0usize; n_clusters];
    for &c in assignments {
        counts[c] += 1;
    }
    let flags = interesting_clusters(&counts, config.interesting_fraction);
    let mut order: Vec<usize> = keyclips.to_vec();
    order.sort_by(|&a, &b| time[a].total_cmp(&time[b]).then(a.cmp(&b)));
    order.dedup();
    let clips = order
        .into_iter()
        .map(|i| {
            let cluster = assignments[i];
            let tags = tags[i]
                .tags
                .iter()
                .zip(&model.profiles)
                .map(|(tag, src)| {
                    let label = if src.vocabulary.is_empty() {
                        src.bin_centre(tag.argmax).map_or_else(String::new, |v| format!("{v}"))
                    } else {
                        src.vocabulary[tag.argmax].clone()
                    };
                    (
                        tag.source.clone(),
                        ClipTag {
                            argmax: tag.argmax,
                            label,
                            distribution: tag.distribution.clone(),
                        },
                    )
                })
                .collect();
            SummaryClip {
                id: ids[i].clone(),
                t: time[i],
                cluster,
                typicality: if flags[cluster] {
                    Typicality::Interesting
                } else {
                    Typicality::Usual
                },
                tags,
            }
        })
        .collect::<Vec<_>>();
    Ok(SummaryManifest {
        length: clips.len(),
        clips,
        config,
    })
}

/// Runs assignment, tagging, representative selection and path smoothing over an unseen sequence.
pub fn summarize(forest: &MscForest, model: &ClusterModel, unseen: &MultiSourceDataset, knn_k: usize) -> Result<SummaryManifest> {
    if unseen.dim() != forest.dim {
        return Err(Error::invalid(format!(
            "unseen features have {} columns, model expects {}",
            unseen.dim(),
            forest.dim
        )));
    }
    let inf = Inference::new(forest, model);
    let (assignments, tags): (Vec<usize>, Vec<TagPrediction>) = unseen
        .main()
        .rows_iter()
        .map(|x| {
            let a = inf.assign(x);
            let tags = inf.infer_tags(&a);
            (a.cluster, tags)
        })
        .unzip();
    let reps = representatives(&assignments, unseen.main(), unseen.time());
    let mut reps_by_time: Vec<usize> = reps.iter().map(|&(_, i)| i).collect();
    reps_by_time.sort_by(|&a, &b| unseen.time()[a].total_cmp(&unseen.time()[b]).then(a.cmp(&b)));
    let n = unseen.len();
    let k = knn_k.min(n.saturating_sub(1)).max(1);
    let affinity = forest_affinity(forest, unseen.main());
    let graph = if n > 1 { knn_sparsify(&affinity, k)? } else { affinity };
    let key = keyclip_paths(&graph, &reps_by_time);
    let config = SummaryConfig {
        knn_k: k,
        interesting_fraction: INTERESTING_FRACTION,
        n_unseen: n,
        representatives: reps_by_time.iter().map(|&i| unseen.sample_ids()[i].clone()).collect(),
        unreachable_pairs: key.unreachable_pairs.len(),
    };
    compose_summary(
        &key.clips,
        &assignments,
        &tags,
        model.n_clusters,
        model,
        unseen.sample_ids(),
        unseen.time(),
        config,
    )
}

/// Event recall scaled by the longest compared summary over this one's length.
pub fn coverage(lengths: &[usize], length: usize, covered: usize, total: usize) -> Result<f64> {
    if length == 0 || lengths.contains(&0) {
        return Err(Error::invalid("summary lengths must be positive"));
    }
    if total == 0 || covered > total {
        return Err(Error::invalid(format!("covered events {covered} out of range for total {total}")));
    }
    let longest = lengths.iter().copied().max().unwrap_or(length).max(length);
    Ok((covered as f64 / total as f64) * (longest as f64 / length as f64))
}

/// Evenly spaced indices `floor(k * n / target)`.
pub fn baseline_uniform(n: usize, target: usize) -> Result<Vec<usize>> {
    if target == 0 || target > n {
        return Err(Error::invalid(format!("target length {target} must lie in 1..={n}")));
    }
    Ok((0..target).map(|k| k * n / target).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    L1,
    L2,
}

impl std::str::FromStr for Norm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Norm::L1),
            "l2" => Ok(Norm::L2),
            other => Err(Error::invalid(format!("unknown norm {other:?}"))),
        }
    }
}

fn distance(norm: Norm, a: &[f64], b: &[f64]) -> f64 {
    match norm {
        Norm::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        Norm::L2 => sq_dist(a, b).sqrt(),
    }
}

/// Emits clip 0, then every clip farther than `theta` from the last emitted one.
pub fn sufficient_change_with_threshold(features: &FeatureMatrix, norm: Norm, theta: f64) -> Vec<usize> {
    let mut out = Vec::new();
    for i in 0..features.nrows() {
        match out.last() {
            None => out.push(i),
            Some(&last) if distance(norm, features.row(i), features.row(last)) > theta => out.push(i),
            _ => {}
        }
    }
    out
}

/// Bisects the threshold so that the emitted count is as close to `target` as possible.
pub fn baseline_sufficient_change(features: &FeatureMatrix, norm: Norm, target: usize) -> Result<Vec<usize>> {
    if target == 0 {
        return Err(Error::invalid("target length must be at least 1"));
    }
    if features.nrows() == 0 {
        return Ok(Vec::new());
    }
    let ranges: Vec<f64> = (0..features.ncols())
        .map(|c| {
            let col = features.column(c);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        })
        .collect();
    let mut hi = match norm {
        Norm::L1 => ranges.iter().sum::<f64>(),
        Norm::L2 => ranges.iter().map(|r| r * r).sum::<f64>().sqrt(),
    };
    let mut lo = 0.0;
    let mut best = sufficient_change_with_threshold(features, norm, lo);
    if best.len() <= target {
        return Ok(best);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let sel = sufficient_change_with_threshold(features, norm, mid);
        if sel.len().abs_diff(target) < best.len().abs_diff(target) {
            best = sel.clone();
        }
        if sel.len() == target {
            return Ok(sel);
        }
        if sel.len() > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// Timeline plot: one row per cluster, one mark per clip, interesting clips outlined.
pub fn timeline_svg(summary: &SummaryManifest, n_clusters: usize) -> String {
    let (w, row_h, pad) = (900.0, 24.0, 60.0);
    let h = pad * 1.5 + row_h * n_clusters.max(1) as f64;
    let (t0, t1) = summary
        .clips
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), c| (a.min(c.t), b.max(c.t)));
    let span = if t1 > t0 { t1 - t0 } else { 1.0 };
    let x_of = |t: f64| pad + (w - 2.0 * pad) * if t1 > t0 { (t - t0) / span } else { 0.5 };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for c in 0..n_clusters {
        let y = pad + row_h * c as f64;
        let _ = writeln!(
            s,
            r##"<line x1="{pad}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/><text x="8" y="{}">c{c}</text>"##,
            w - pad,
            y + 4.0
        );
    }
    for clip in &summary.clips {
        let x = x_of(clip.t);
        let y = pad + row_h * clip.cluster as f64;
        let fill = PALETTE[clip.cluster % PALETTE.len()];
        let stroke = match clip.typicality {
            Typicality::Interesting => r#" stroke="black" stroke-width="2""#,
            Typicality::Usual => "",
        };
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="6" height="14" fill="{fill}"{stroke}><title>{} t={}</title></rect>"#,
            x - 3.0,
            y - 7.0,
            clip.id,
            clip.t
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{pad}" y="{:.2}">t = {t0} .. {t1}, {} clips (outlined: interesting)</text>"#,
        h - 10.0,
        summary.length
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::AffinityKind;

    fn round1(x: f64) -> f64 {
        (x * 1000.0).round() / 10.0
    }

    #[test]
    fn coverage_table() {
        let lengths = [28, 29, 29, 21, 28];
        let pairs = [(3, 12), (2, 12), (4, 12), (3, 12), (7, 12)];
        let expected = [25.9, 16.7, 33.3, 34.5, 60.4];
        for ((&len, (cov, tot)), want) in lengths.iter().zip(pairs).zip(expected) {
            assert_eq!(round1(coverage(&lengths, len, cov, tot).unwrap()), want);
        }
        assert_eq!(coverage(&lengths, 28, 0, 12).unwrap(), 0.0);
        assert!(coverage(&lengths, 0, 0, 12).is_err());
        assert!(coverage(&[0, 3], 3, 0, 12).is_err());
    }

    #[test]
    fn coverage_scale_exact() {
        let a = coverage(&[28, 29, 21], 21, 3, 12).unwrap();
        let b = coverage(&[56, 58, 42], 42, 3, 12).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn uniform_baseline() {
        assert_eq!(baseline_uniform(10, 10).unwrap(), (0..10).collect::<Vec<_>>());
        assert_eq!(baseline_uniform(10, 2).unwrap(), vec![0, 5]);
        assert_eq!(baseline_uniform(7, 1).unwrap(), vec![0]);
        assert!(baseline_uniform(3, 4).is_err());
    }

    #[test]
    fn sufficient_change_cases() {
        let constant = FeatureMatrix::from_rows(&vec![vec![1.0, 2.0]; 6]).unwrap();
        assert_eq!(sufficient_change_with_threshold(&constant, Norm::L2, 0.5), vec![0]);
        assert_eq!(baseline_sufficient_change(&constant, Norm::L1, 3).unwrap(), vec![0]);
        // Jumps of 10 between blocks, steps of 0.1 inside.
        let rows: Vec<Vec<f64>> = [0.0, 0.1, 10.0, 10.1, 20.0, 20.1].iter().map(|&v| vec![v]).collect();
        let f = FeatureMatrix::from_rows(&rows).unwrap();
        assert_eq!(sufficient_change_with_threshold(&f, Norm::L1, 5.0), vec![0, 2, 4]);
        assert_eq!(sufficient_change_with_threshold(&f, Norm::L2, 0.0).len(), 6);
        assert_eq!(baseline_sufficient_change(&f, Norm::L2, 3).unwrap(), vec![0, 2, 4]);
    }

    #[test]
    fn representative_rules() {
        let rows: Vec<Vec<f64>> = [0.0, 2.0, 4.0, 7.0].iter().map(|&v| vec![v]).collect();
        let f = FeatureMatrix::from_rows(&rows).unwrap();
        let time = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(representatives(&[0, 0, 0, 1], &f, &time), vec![(0, 1), (1, 3)]);
        // Two equidistant members: the earlier one wins.
        let rows: Vec<Vec<f64>> = [1.0, -1.0].iter().map(|&v| vec![v]).collect();
        let f = FeatureMatrix::from_rows(&rows).unwrap();
        assert_eq!(representatives(&[0, 0], &f, &[5.0, 3.0]), vec![(0, 1)]);
    }

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> AffinityMatrix {
        let mut v = vec![0.0; n * n];
        for &(i, j, a) in edges {
            v[i * n + j] = a;
            v[j * n + i] = a;
        }
        AffinityMatrix::from_dense(n, v, AffinityKind::KnnSparsified).unwrap()
    }

    #[test]
    fn keyclip_path_cases() {
        let g = graph(2, &[(0, 1, 1.0)]);
        assert_eq!(keyclip_paths(&g, &[0, 1]).clips, vec![0, 1]);
        let g = graph(3, &[(0, 1, 0.9), (1, 2, 0.9)]);
        assert_eq!(keyclip_paths(&g, &[0, 2]).clips, vec![0, 1, 2]);
        let g = graph(4, &[(0, 1, 0.9), (2, 3, 0.9)]);
        let k = keyclip_paths(&g, &[0, 3]);
        assert_eq!(k.clips, vec![0, 3]);
        assert_eq!(k.unreachable_pairs, vec![(0, 3)]);
        // Shortcut through a strong neighbour beats a weak direct edge.
        let g = graph(3, &[(0, 2, 0.1), (0, 1, 0.8), (1, 2, 0.8)]);
        assert_eq!(keyclip_paths(&g, &[0, 2]).clips, vec![0, 1, 2]);
    }

    #[test]
    fn typicality_counts() {
        let flags = interesting_clusters(&[5, 4, 3, 9, 8], INTERESTING_FRACTION);
        assert_eq!(flags, vec![false, false, true, false, false]);
        assert_eq!(interesting_clusters(&[3], INTERESTING_FRACTION), vec![true]);
        let flags = interesting_clusters(&[0, 2, 2, 7, 7, 7], INTERESTING_FRACTION);
        assert_eq!(flags, vec![false, true, false, false, false, false]);
        let flags = interesting_clusters(&[1; 10], INTERESTING_FRACTION);
        assert_eq!(flags.iter().filter(|&&f| f).count(), 2);
    }
}
