//! Forest affinity: the fraction of trees in which two samples share a leaf.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::forest::{MscForest, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AffinityKind {
    Dense,
    KnnSparsified,
}

/// Symmetric `N x N` affinities in `[0, 1]`, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    n: usize,
    values: Vec<f64>,
    kind: AffinityKind,
}

impl AffinityMatrix {
    pub fn from_dense(n: usize, values: Vec<f64>, kind: AffinityKind) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::invalid("affinity values do not form a square matrix"));
        }
        Ok(Self { n, values, kind })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn kind(&self) -> AffinityKind {
        self.kind
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn degree(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Same matrix with unit self-affinity on the diagonal.
    pub fn with_self_loops(&self) -> Self {
        let mut values = self.values.clone();
        for i in 0..self.n {
            values[i * self.n + i] = 1.0;
        }
        Self {
            n: self.n,
            values,
            kind: self.kind,
        }
    }

    /// Nonzero entries as `(i, j, value)` lines with a header.
    pub fn write_coo_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "i,j,value").map_err(io)?;
        for i in 0..self.n {
            for j in 0..self.n {
                let v = self.get(i, j);
                if v != 0.0 {
                    writeln!(w, "{i},{j},{v}").map_err(io)?;
                }
            }
        }
        w.flush().map_err(io)
    }
}

/// `1` where two samples reach the same leaf of `tree`.
pub fn tree_affinity(tree: &Tree, samples: &FeatureMatrix) -> Vec<Vec<u8>> {
    let leaves: Vec<usize> = samples.rows_iter().map(|x| tree.trace_leaf(x)).collect();
    leaves
        .iter()
        .map(|a| leaves.iter().map(|b| u8::from(a == b)).collect())
        .collect()
}

/// Co-leaf counts accumulated leaf by leaf from `[tree][sample]` leaf ids.
pub(crate) fn coleaf_counts(leaf_ids: &[Vec<u32>], n: usize) -> Vec<u32> {
    // Bucket samples by leaf once per tree, then fill rows in parallel.
    let buckets: Vec<Vec<Vec<u32>>> = leaf_ids
        .par_iter()
        .map(|ids| {
            let max = ids.iter().copied().max().map_or(0, |m| m as usize + 1);
            let mut b: Vec<Vec<u32>> = vec![Vec::new(); max];
            for (i, &leaf) in ids.iter().enumerate() {
                b[leaf as usize].push(i as u32);
            }
            b
        })
        .collect();
    let mut counts = vec![0u32; n * n];
    counts.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
        for (t, ids) in leaf_ids.iter().enumerate() {
            for &j in &buckets[t][ids[i] as usize] {
                row[j as usize] += 1;
            }
        }
    });
    counts
}

/// Mean tree affinity over the forest for the rows of `samples`.
pub fn forest_affinity(forest: &MscForest, samples: &FeatureMatrix) -> AffinityMatrix {
    let n = samples.nrows();
    let leaf_ids = forest.leaf_assignments(samples);
    let counts = coleaf_counts(&leaf_ids, n);
    let t = forest.trees.len() as f64;
    AffinityMatrix {
        n,
        values: counts.into_iter().map(|c| c as f64 / t).collect(),
        kind: AffinityKind::Dense,
    }
}

/// `max(10, ⌈log2 N⌉ + 1)`, capped at `N - 1`.
pub fn default_knn_k(n: usize) -> usize {
    let log = (n.max(1) as f64).log2().ceil() as usize + 1;
    log.max(10).min(n.saturating_sub(1)).max(1)
}

/// Keeps `(i, j)` when `j` is among the `k` largest affinities of `i` or vice
/// versa. Entries tied with the `k`-th value are kept; zero entries and the
/// diagonal are dropped.
pub fn knn_sparsify(a: &AffinityMatrix, k: usize) -> Result<AffinityMatrix> {
    let n = a.n;
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("k must lie in [1, {}), got {k}", n)));
    }
    let keep: Vec<Vec<bool>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut vals: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| a.get(i, j)).collect();
            vals.sort_by(|x, y| y.total_cmp(x));
            let kth = vals[k - 1];
            (0..n).map(|j| j != i && a.get(i, j) > 0.0 && a.get(i, j) >= kth).collect()
        })
        .collect();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if keep[i][j] || keep[j][i] {
                values[i * n + j] = a.get(i, j);
            }
        }
    }
    Ok(AffinityMatrix {
        n,
        values,
        kind: AffinityKind::KnnSparsified,
    })
}

/// Dense row-major `S = D^{-1/2} A D^{-1/2}`.
pub fn normalise(a: &AffinityMatrix) -> Result<Vec<f64>> {
    let deg = a.degree();
    if let Some(index) = deg.iter().position(|&d| d <= 0.0) {
        return Err(Error::ZeroDegree { index });
    }
    let n = a.n;
    let mut s = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            s[i * n + j] = a.get(i, j) / (deg[i] * deg[j]).sqrt();
        }
    }
    Ok(s)
}
