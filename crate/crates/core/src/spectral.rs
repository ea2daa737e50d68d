//! Spectral clustering of the normalised forest affinity and the per-cluster
//! auxiliary tag profiles built from the resulting partition.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{AuxValues, MultiSourceDataset, SourceKind};
use crate::error::{Error, Result};

/// Eigenpairs of a symmetric matrix, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the eigenvector of `eigenvalues[k]`.
    pub eigenvectors: DMatrix<f64>,
}

pub fn eigen_decompose(s: &[f64], n: usize) -> Result<SpectralDecomposition> {
    if s.len() != n * n || n == 0 {
        return Err(Error::invalid("eigen-decomposition needs a nonempty square matrix"));
    }
    let m = DMatrix::from_row_slice(n, n, s);
    let eig = SymmetricEigen::try_new(m, 1e-14, 10_000)
        .ok_or_else(|| Error::Numeric("symmetric eigen-solver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    if eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite eigenvalue".into()));
    }
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

const GAP_TIE_TOL: f64 = 1e-10;

/// `argmax_{k ∈ 2..=k_max} λ_k - λ_{k+1}` (1-based, descending); near-ties go to the smaller `k`.
pub fn estimate_num_clusters(decomp: &SpectralDecomposition, k_max: usize) -> Result<usize> {
    let n = decomp.eigenvalues.len();
    if k_max < 2 {
        return Err(Error::invalid(format!("k_max must be at least 2, got {k_max}")));
    }
    if n < 2 {
        return Err(Error::invalid("need at least two samples to estimate a cluster count"));
    }
    let top = k_max.min(n - 1).max(2);
    let lam = &decomp.eigenvalues;
    let gap = |k: usize| if k < n { lam[k - 1] - lam[k] } else { lam[k - 1] };
    let max_gap = (2..=top).map(gap).fold(f64::NEG_INFINITY, f64::max);
    Ok((2..=top).find(|&k| gap(k) >= max_gap - GAP_TIE_TOL).unwrap_or(2))
}

/// Rows of the top-`k` eigenvectors, each scaled to unit length.
pub fn spectral_embedding(decomp: &SpectralDecomposition, k: usize) -> Vec<Vec<f64>> {
    let n = decomp.eigenvalues.len();
    (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..k).map(|c| decomp.eigenvectors[(i, c)]).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
            row
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's k-means with farthest-first seeding (first centre drawn from `rng`).
///
/// Labels are renumbered by first appearance, so they are canonical for a given partition.
pub fn kmeans<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<usize> {
    let n = points.len();
    assert!(k >= 1 && n >= 1);
    let k = k.min(n);
    let mut centres: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &centres[0])).collect();
    while centres.len() < k {
        let (far, _) = nearest
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
        centres.push(points[far].clone());
        let c = centres.last().unwrap();
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, c));
        }
    }
    let assign = |centres: &[Vec<f64>]| -> Vec<usize> {
        points
            .iter()
            .map(|p| {
                let mut best = (0, f64::INFINITY);
                for (c, centre) in centres.iter().enumerate() {
                    let d = sq_dist(p, centre);
                    if d < best.1 {
                        best = (c, d);
                    }
                }
                best.0
            })
            .collect()
    };
    let dim = points[0].len();
    let mut labels = assign(&centres);
    for _ in 0..300 {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for c in 0..k {
            if counts[c] > 0 {
                centres[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let next = assign(&centres);
        if next == labels {
            break;
        }
        labels = next;
    }
    canonical_labels(&labels)
}

/// Renumbers labels in order of first appearance.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<Option<usize>> = vec![None; labels.iter().max().map_or(0, |m| m + 1)];
    let mut next = 0;
    labels
        .iter()
        .map(|&l| {
            *map[l].get_or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

pub fn spectral_cluster<R: Rng + ?Sized>(decomp: &SpectralDecomposition, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::invalid(format!("spectral clustering needs K >= 2, got {k}")));
    }
    let k = k.min(decomp.eigenvalues.len());
    let emb = spectral_embedding(decomp, k);
    Ok(kmeans(&emb, k, rng))
}

/// Continuous-profile histogram bin count.
pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TagProfile {
    Categorical {
        probs: Vec<f64>,
        /// Set when no member had a value and the profile fell back to uniform.
        #[serde(default)]
        fallback: bool,
    },
    Continuous {
        /// Normalised histogram over the source's bins.
        hist: Vec<f64>,
        mean: Option<f64>,
        #[serde(default)]
        fallback: bool,
    },
}

impl TagProfile {
    pub fn distribution(&self) -> &[f64] {
        match self {
            TagProfile::Categorical { probs, .. } => probs,
            TagProfile::Continuous { hist, .. } => hist,
        }
    }

    pub fn is_fallback(&self) -> bool {
        match self {
            TagProfile::Categorical { fallback, .. } | TagProfile::Continuous { fallback, .. } => *fallback,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceProfiles {
    pub name: String,
    pub kind: SourceKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vocabulary: Vec<String>,
    /// `[lo, hi]` of the training range for continuous sources.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    /// One profile per cluster.
    pub clusters: Vec<TagProfile>,
}

impl SourceProfiles {
    /// Centre of continuous histogram bin `b`.
    pub fn bin_centre(&self, b: usize) -> Option<f64> {
        let [lo, hi] = self.range?;
        let n = self.clusters.first().map_or(HISTOGRAM_BINS, |c| c.distribution().len());
        Some(lo + (hi - lo) * (b as f64 + 0.5) / n as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub n_clusters: usize,
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub sizes: Vec<usize>,
    pub profiles: Vec<SourceProfiles>,
}

fn bin_of(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    (((v - lo) / (hi - lo) * bins as f64).floor() as usize).min(bins - 1)
}

pub fn build_cluster_model(dataset: &MultiSourceDataset, labels: &[usize]) -> Result<ClusterModel> {
    let n = dataset.len();
    if labels.len() != n {
        return Err(Error::invalid(format!("{} labels for {n} samples", labels.len())));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let d = dataset.dim();
    let mut sizes = vec![0usize; k];
    let mut centroids = vec![vec![0.0; d]; k];
    for (i, &c) in labels.iter().enumerate() {
        sizes[c] += 1;
        centroids[c].iter_mut().zip(dataset.main().row(i)).for_each(|(s, v)| *s += v);
    }
    for (c, centroid) in centroids.iter_mut().enumerate() {
        if sizes[c] > 0 {
            centroid.iter_mut().for_each(|v| *v /= sizes[c] as f64);
        }
    }

    let mut profiles = Vec::with_capacity(dataset.num_sources());
    for src in dataset.aux() {
        let p = match &src.values {
            AuxValues::Categorical(v) => {
                let nc = src.descriptor.vocabulary.len();
                let mut counts = vec![vec![0.0; nc]; k];
                for (i, &c) in labels.iter().enumerate() {
                    if let Some(y) = v[i] {
                        counts[c][y as usize] += 1.0;
                    }
                }
                let clusters = counts
                    .into_iter()
                    .map(|cnt| {
                        let total: f64 = cnt.iter().sum();
                        if total > 0.0 {
                            TagProfile::Categorical {
                                probs: cnt.iter().map(|x| x / total).collect(),
                                fallback: false,
                            }
                        } else {
                            TagProfile::Categorical {
                                probs: vec![1.0 / nc as f64; nc],
                                fallback: true,
                            }
                        }
                    })
                    .collect();
                SourceProfiles {
                    name: src.descriptor.name.clone(),
                    kind: SourceKind::Categorical,
                    vocabulary: src.descriptor.vocabulary.clone(),
                    range: None,
                    clusters,
                }
            }
            AuxValues::Continuous(v) => {
                let observed: Vec<f64> = v.iter().flatten().copied().collect();
                let lo = observed.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = observed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let (lo, hi) = if observed.is_empty() { (0.0, 0.0) } else { (lo, hi) };
                let mut hist = vec![vec![0.0; HISTOGRAM_BINS]; k];
                let mut sums = vec![(0.0, 0usize); k];
                for (i, &c) in labels.iter().enumerate() {
                    if let Some(y) = v[i] {
                        hist[c][bin_of(y, lo, hi, HISTOGRAM_BINS)] += 1.0;
                        sums[c].0 += y;
                        sums[c].1 += 1;
                    }
                }
                let clusters = hist
                    .into_iter()
                    .zip(sums)
                    .map(|(h, (s, cnt))| {
                        if cnt > 0 {
                            TagProfile::Continuous {
                                hist: h.iter().map(|x| x / cnt as f64).collect(),
                                mean: Some(s / cnt as f64),
                                fallback: false,
                            }
                        } else {
                            TagProfile::Continuous {
                                hist: vec![1.0 / HISTOGRAM_BINS as f64; HISTOGRAM_BINS],
                                mean: None,
                                fallback: true,
                            }
                        }
                    })
                    .collect();
                SourceProfiles {
                    name: src.descriptor.name.clone(),
                    kind: SourceKind::Continuous,
                    vocabulary: Vec::new(),
                    range: Some([lo, hi]),
                    clusters,
                }
            }
        };
        profiles.push(p);
    }
    Ok(ClusterModel {
        n_clusters: k,
        labels: labels.to_vec(),
        centroids,
        sizes,
        profiles,
    })
}
