//! Conventional clustering-forest tree: real-vs-pseudo Gini gain only.
//!
//! Shares the random stream layout of the multi-source trainer (pseudo rows,
//! bag, per-node feature sample) so the two can be compared split for split.

use rand::seq::index::sample;

use super::impurity::classification_gain;
use super::{draw_bag, midpoint, tree_rng, Split};
use crate::augment::augment;
use crate::data::FeatureMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct ConventionalTree {
    /// Split per node in depth-first, left-first creation order; `None` for leaves.
    pub splits: Vec<Option<Split>>,
}

/// Grows tree `t` of a conventional clustering forest seeded with `seed`.
pub fn train_conventional_tree(main: &FeatureMatrix, m_try: usize, phi: usize, seed: u64, t: usize) -> ConventionalTree {
    let mut rng = tree_rng(seed, t);
    let aug = augment(main, &mut rng);
    let bag = draw_bag(aug.len(), &mut rng);
    let n = main.nrows();
    let d = main.ncols();

    // Nodes are numbered in the order the multi-source trainer allocates them:
    // children get consecutive ids when their parent splits.
    let mut splits: Vec<Option<Split>> = vec![None];
    let mut stack: Vec<(usize, Vec<u32>)> = vec![(0, bag)];
    while let Some((id, rows)) = stack.pop() {
        if rows.len() < phi {
            continue;
        }
        let first = aug.row(rows[0] as usize);
        if rows.iter().all(|&r| aug.row(r as usize) == first) {
            continue;
        }
        let mut features = sample(&mut rng, d, m_try).into_vec();
        features.sort_unstable();
        let count = |rs: &mut dyn Iterator<Item = u32>| {
            let mut c = [0u64; 2];
            for r in rs {
                c[usize::from(r as usize >= n)] += 1;
            }
            c
        };
        let parent = count(&mut rows.iter().copied());
        let mut best: Option<(Split, f64)> = None;
        for &f in &features {
            let mut vals: Vec<f64> = rows.iter().map(|&r| aug.value(r as usize, f)).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let threshold = midpoint(w[0], w[1]);
                let left = count(&mut rows.iter().copied().filter(|&r| aug.value(r as usize, f) < threshold));
                let right = [parent[0] - left[0], parent[1] - left[1]];
                let gain = classification_gain(&parent, &left, &right).expect("both children nonempty");
                if best.is_none_or(|(_, g)| gain > g) {
                    best = Some((
                        Split::Axis {
                            feature: f as u32,
                            threshold,
                        },
                        gain,
                    ));
                }
            }
        }
        let Some((split, gain)) = best else { continue };
        if gain <= super::grow::GAIN_EPS {
            continue;
        }
        let (l, r): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&r| split.goes_left(aug.row(r as usize)));
        splits[id] = Some(split);
        let left = splits.len();
        splits.push(None);
        splits.push(None);
        stack.push((left + 1, r));
        stack.push((left, l));
    }
    ConventionalTree { splits }
}
