//! Clustering purity and tagging accuracy metrics.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
}

/// Shannon entropy with 0 log 0 = 0.
pub fn entropy(p: &[f64], base: LogBase) -> f64 {
    let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
    match base {
        LogBase::Natural => h,
        LogBase::Two => h / std::f64::consts::LN_2,
    }
}

/// Average entropy of per-cluster tag distributions, size-weighted unless `weighted` is false.
/// Clusters of size zero are ignored.
pub fn mean_entropy(profiles: &[Vec<f64>], sizes: &[usize], weighted: bool, base: LogBase) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, &s) in profiles.iter().zip(sizes) {
        if s == 0 {
            continue;
        }
        let w = if weighted { s as f64 } else { 1.0 };
        num += w * entropy(p, base);
        den += w;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Empirical category distribution per cluster; missing values are skipped and a
/// cluster without observations gets a uniform row.
pub fn cluster_tag_profiles(labels: &[usize], values: &[Option<u32>], n_clusters: usize, n_categories: usize) -> Vec<Vec<f64>> {
    let mut counts = vec![vec![0u64; n_categories]; n_clusters];
    for (&c, v) in labels.iter().zip(values) {
        if let Some(v) = v {
            counts[c][*v as usize] += 1;
        }
    }
    counts
        .into_iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            if total == 0 {
                vec![1.0 / n_categories as f64; n_categories]
            } else {
                row.iter().map(|&x| x as f64 / total as f64).collect()
            }
        })
        .collect()
}

/// Mean entropy of a labelling measured against one categorical column.
pub fn labelling_entropy(labels: &[usize], values: &[Option<u32>], n_categories: usize, base: LogBase) -> f64 {
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let profiles = cluster_tag_profiles(labels, values, k, n_categories);
    let mut sizes = vec![0usize; k];
    for (&c, v) in labels.iter().zip(values) {
        if v.is_some() {
            sizes[c] += 1;
        }
    }
    mean_entropy(&profiles, &sizes, true, base)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// `counts[truth][predicted]`.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(n: usize) -> Self {
        Self {
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.trace() as f64 / t as f64,
        }
    }

    /// Rows normalised by class counts; rows of absent classes stay zero.
    pub fn recall_rows(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let s: u64 = row.iter().sum();
                row.iter().map(|&x| if s == 0 { 0.0 } else { x as f64 / s as f64 }).collect()
            })
            .collect()
    }
}

/// Accuracy and confusion matrix of `(sample_id, class)` predictions against truth.
/// Every prediction id must appear in the truth and vice versa.
pub fn tagging_accuracy(
    predictions: &[(String, usize)],
    truth: &[(String, usize)],
    n_classes: usize,
) -> Result<(f64, ConfusionMatrix)> {
    let lookup: HashMap<&str, usize> = truth.iter().map(|(id, c)| (id.as_str(), *c)).collect();
    if lookup.len() != truth.len() {
        return Err(Error::Invalid("duplicate sample ids in ground truth".into()));
    }
    if predictions.len() != truth.len() {
        return Err(Error::Invalid(format!(
            "{} predictions for {} ground-truth samples",
            predictions.len(),
            truth.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(n_classes);
    for (id, p) in predictions {
        let t = *lookup
            .get(id.as_str())
            .ok_or_else(|| Error::Invalid(format!("prediction for unknown sample {id:?}")))?;
        if t >= n_classes || *p >= n_classes {
            return Err(Error::Invalid(format!("class index out of range for sample {id:?}")));
        }
        cm.counts[t][*p] += 1;
    }
    Ok((cm.accuracy(), cm))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEval {
    pub source: String,
    pub vocabulary: Vec<String>,
    pub mean_entropy: Option<f64>,
    pub accuracy: Option<f64>,
    pub confusion: Option<ConfusionMatrix>,
    pub recall: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
    pub log_base: LogBase,
    pub weighted_entropy: bool,
    pub sources: Vec<SourceEval>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn entropy_examples() {
        let pure = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(mean_entropy(&pure, &[3, 4], true, LogBase::Natural), 0.0);
        let uni = vec![vec![0.5, 0.5]];
        assert!((mean_entropy(&uni, &[7], true, LogBase::Natural) - 2f64.ln()).abs() < 1e-15);
        assert!((mean_entropy(&uni, &[7], true, LogBase::Two) - 1.0).abs() < 1e-15);
        let mixed = vec![vec![1.0, 0.0], vec![0.5, 0.5]];
        assert!((mean_entropy(&mixed, &[5, 5], true, LogBase::Natural) - 0.34657359).abs() < 1e-8);
        // Unweighted ignores sizes.
        let a = mean_entropy(&mixed, &[1, 9], false, LogBase::Natural);
        assert!((a - 0.5 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn accuracy_examples() {
        let truth: Vec<(String, usize)> = (0..8).map(|i| (format!("s{i}"), i % 4)).collect();
        let (acc, _) = tagging_accuracy(&truth, &truth, 4).unwrap();
        assert_eq!(acc, 1.0);
        let constant: Vec<(String, usize)> = truth.iter().map(|(id, _)| (id.clone(), 2)).collect();
        let (acc, cm) = tagging_accuracy(&constant, &truth, 4).unwrap();
        assert_eq!(acc, 0.25);
        assert_eq!(cm.recall_rows()[2], vec![0.0, 0.0, 1.0, 0.0]);
        let truth: Vec<(String, usize)> = (0..10).map(|i| (format!("s{i}"), 0)).collect();
        let pred: Vec<(String, usize)> = (0..10).map(|i| (format!("s{i}"), usize::from(i >= 7))).collect();
        assert_eq!(tagging_accuracy(&pred, &truth, 2).unwrap().0, 0.7);
        let wrong = vec![("zz".to_string(), 0)];
        assert!(tagging_accuracy(&wrong, &truth[..1], 2).is_err());
    }

    proptest! {
        #[test]
        fn entropy_relabel_invariant(rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 1..6)) {
            let profiles: Vec<Vec<f64>> = rows.iter().map(|r| {
                let s: f64 = r.iter().sum::<f64>() + 1e-9;
                r.iter().map(|v| v / s).collect()
            }).collect();
            let sizes: Vec<usize> = (0..profiles.len()).map(|i| i + 1).collect();
            let base = mean_entropy(&profiles, &sizes, true, LogBase::Natural);
            let permuted: Vec<Vec<f64>> = profiles.iter().map(|p| vec![p[2], p[0], p[1]]).collect();
            let mut rp = permuted.clone();
            rp.reverse();
            let mut rs = sizes.clone();
            rs.reverse();
            prop_assert!((mean_entropy(&rp, &rs, true, LogBase::Natural) - base).abs() < 1e-12);
        }

        #[test]
        fn trace_over_total_is_accuracy(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60)) {
            let truth: Vec<(String, usize)> = pairs.iter().enumerate().map(|(i, p)| (format!("s{i}"), p.0)).collect();
            let pred: Vec<(String, usize)> = pairs.iter().enumerate().map(|(i, p)| (format!("s{i}"), p.1)).collect();
            let (acc, cm) = tagging_accuracy(&pred, &truth, 4).unwrap();
            let exact = pairs.iter().filter(|p| p.0 == p.1).count() as f64 / pairs.len() as f64;
            prop_assert_eq!(acc, exact);
            prop_assert_eq!(cm.trace() as f64 / cm.total() as f64, acc);
            for c in 0..4 {
                let n = pairs.iter().filter(|p| p.0 == c).count() as u64;
                prop_assert_eq!(cm.counts[c].iter().sum::<u64>(), n);
            }
        }
    }
}
