//! Impurity measures, single-term gains and the weighted joint gain.

use serde::{Deserialize, Serialize};

use crate::data::SourceWeights;
use crate::error::{Error, Result};

/// Gini impurity `Σ_{i≠j} p_i p_j = 1 - Σ p_i²` of a count vector.
pub fn gini(category_counts: &[u64]) -> Result<f64> {
    let total: u64 = category_counts.iter().sum();
    if total == 0 {
        return Err(Error::invalid("gini of an all-zero count vector"));
    }
    let counts: Vec<f64> = category_counts.iter().map(|&c| c as f64).collect();
    Ok(gini_of(&counts, total as f64))
}

#[inline]
pub(crate) fn gini_of(counts: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let sq: f64 = counts.iter().map(|&c| (c / total) * (c / total)).sum();
    (1.0 - sq).max(0.0)
}

/// Population variance of `values`.
pub fn regression_impurity(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("regression impurity of an empty list"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Ok(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n)
}

/// `G(S) - |L|/|S| G(L) - |R|/|S| G(R)`.
pub fn classification_gain(parent: &[u64], left: &[u64], right: &[u64]) -> Result<f64> {
    if parent.len() != left.len() || parent.len() != right.len() {
        return Err(Error::invalid("count vectors differ in length"));
    }
    if parent.iter().zip(left.iter().zip(right)).any(|(p, (l, r))| l + r != *p) {
        return Err(Error::invalid("left and right counts do not add up to the parent"));
    }
    let (nl, nr): (u64, u64) = (left.iter().sum(), right.iter().sum());
    if nl == 0 || nr == 0 {
        return Err(Error::invalid("classification gain with an empty child"));
    }
    let f = |c: &[u64]| c.iter().map(|&x| x as f64).collect::<Vec<_>>();
    Ok(gini_gain(&f(parent), &f(left)))
}

/// Gini decrease of splitting `parent` counts into `left` and `parent - left`.
pub(crate) fn gini_gain(parent: &[f64], left: &[f64]) -> f64 {
    let n: f64 = parent.iter().sum();
    let nl: f64 = left.iter().sum();
    let nr = n - nl;
    if n <= 0.0 || nl <= 0.0 || nr <= 0.0 {
        return 0.0;
    }
    let mut right = [0.0f64; 8];
    let right_heap;
    let right: &[f64] = if parent.len() <= right.len() {
        for (k, (p, l)) in parent.iter().zip(left).enumerate() {
            right[k] = p - l;
        }
        &right[..parent.len()]
    } else {
        right_heap = parent.iter().zip(left).map(|(p, l)| p - l).collect::<Vec<_>>();
        &right_heap
    };
    gini_of(parent, n) - (nl / n) * gini_of(left, nl) - (nr / n) * gini_of(right, nr)
}

/// Count and centred sum of a continuous variable over a sample set.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: f64,
    pub sum: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, centred: f64) {
        self.n += 1.0;
        self.sum += centred;
    }
}

/// Variance decrease from splitting `parent` into `left` and the rest.
///
/// Uses `(S_L²/n_L + S_R²/n_R - S²/n) / n`, which equals
/// `R(S) - n_L/n R(L) - n_R/n R(R)` for any common centring of the values.
pub(crate) fn regression_gain(parent: Moments, left: Moments) -> f64 {
    let right = Moments {
        n: parent.n - left.n,
        sum: parent.sum - left.sum,
    };
    if parent.n <= 0.0 || left.n <= 0.0 || right.n <= 0.0 {
        return 0.0;
    }
    let g = (left.sum * left.sum / left.n + right.sum * right.sum / right.n - parent.sum * parent.sum / parent.n)
        / parent.n;
    g.max(0.0)
}

/// Sufficient statistics of one auxiliary source over the REAL non-missing rows of a set.
#[derive(Debug, Clone, PartialEq)]
pub enum AuxStats {
    Categorical(Vec<f64>),
    Continuous(Moments),
}

impl AuxStats {
    pub fn support(&self) -> f64 {
        match self {
            AuxStats::Categorical(c) => c.iter().sum(),
            AuxStats::Continuous(m) => m.n,
        }
    }

    pub(crate) fn empty_like(&self) -> Self {
        match self {
            AuxStats::Categorical(c) => AuxStats::Categorical(vec![0.0; c.len()]),
            AuxStats::Continuous(_) => AuxStats::Continuous(Moments::default()),
        }
    }
}

/// Impurity decrease of one auxiliary term (Gini or variance).
pub fn aux_term_gain(parent: &AuxStats, left: &AuxStats) -> f64 {
    match (parent, left) {
        (AuxStats::Categorical(p), AuxStats::Categorical(l)) => gini_gain(p, l),
        (AuxStats::Continuous(p), AuxStats::Continuous(l)) => regression_gain(*p, *l),
        _ => panic!("auxiliary statistics of different kinds"),
    }
}

/// Statistics of every gain term over a set of augmented rows.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStats {
    /// `[real, pseudo]` counts over all augmented rows.
    pub visual: [f64; 2],
    pub aux: Vec<AuxStats>,
    pub temporal: Moments,
}

impl NodeStats {
    pub(crate) fn empty_like(&self) -> Self {
        Self {
            visual: [0.0; 2],
            aux: self.aux.iter().map(AuxStats::empty_like).collect(),
            temporal: Moments::default(),
        }
    }

    pub fn size(&self) -> f64 {
        self.visual[0] + self.visual[1]
    }
}

/// Per-tree root impurities; `None` marks a term dropped for the whole tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootImpurities {
    pub visual: Option<f64>,
    pub aux: Vec<Option<f64>>,
    pub temporal: Option<f64>,
}

/// Per-term normalised gains `ΔI/I_0` (before weighting). Dropped terms are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TermGains {
    pub visual: f64,
    pub aux: Vec<f64>,
    pub temporal: f64,
}

pub fn term_gains(parent: &NodeStats, left: &NodeStats, roots: &RootImpurities) -> TermGains {
    let visual = match roots.visual {
        Some(i0) => gini_gain(&parent.visual, &left.visual) / i0,
        None => 0.0,
    };
    let aux = parent
        .aux
        .iter()
        .zip(&left.aux)
        .zip(&roots.aux)
        .map(|((p, l), root)| match root {
            Some(i0) if p.support() > 0.0 => aux_term_gain(p, l) / i0,
            _ => 0.0,
        })
        .collect();
    let temporal = match roots.temporal {
        Some(i0) => regression_gain(parent.temporal, left.temporal) / i0,
        None => 0.0,
    };
    TermGains { visual, aux, temporal }
}

/// Weighted, root-normalised joint gain of splitting `parent` into `left` and the rest.
pub fn joint_gain(parent: &NodeStats, left: &NodeStats, weights: &SourceWeights, roots: &RootImpurities) -> f64 {
    let mut g = 0.0;
    if let Some(i0) = roots.visual {
        if weights.alpha_v > 0.0 {
            g += weights.alpha_v * (gini_gain(&parent.visual, &left.visual) / i0);
        }
    }
    for (j, ((p, l), root)) in parent.aux.iter().zip(&left.aux).zip(&roots.aux).enumerate() {
        if let Some(i0) = root {
            if weights.alpha_aux[j] > 0.0 && p.support() > 0.0 {
                g += weights.alpha_aux[j] * (aux_term_gain(p, l) / i0);
            }
        }
    }
    if let Some(i0) = roots.temporal {
        if weights.alpha_t > 0.0 {
            g += weights.alpha_t * (regression_gain(parent.temporal, left.temporal) / i0);
        }
    }
    g
}

/// Moves `fraction[k] * alpha[k]` out of every weight and hands the total back
/// as an equal additive share to all `m + 2` weights.
pub(crate) fn redistribute(base: &SourceWeights, visual: f64, aux: &[f64], temporal: f64) -> SourceWeights {
    let m = base.alpha_aux.len();
    assert_eq!(aux.len(), m, "one removal fraction per auxiliary source");
    let removed = visual * base.alpha_v
        + aux.iter().zip(&base.alpha_aux).map(|(d, a)| d * a).sum::<f64>()
        + temporal * base.alpha_t;
    let share = removed / (m as f64 + 2.0);
    SourceWeights {
        alpha_v: base.alpha_v * (1.0 - visual) + share,
        alpha_aux: aux
            .iter()
            .zip(&base.alpha_aux)
            .map(|(d, a)| a * (1.0 - d) + share)
            .collect(),
        alpha_t: base.alpha_t * (1.0 - temporal) + share,
    }
}

/// Reduces each auxiliary weight by its missing fraction and spreads the removed
/// mass evenly over the visual, auxiliary and temporal weights.
pub fn adapt_weights(base: &SourceWeights, deltas: &[f64]) -> SourceWeights {
    redistribute(base, 0.0, deltas, 0.0)
}
