use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{default_weights, AuxSource, AuxValues, SourceDescriptor};

fn dataset(rows: Vec<Vec<f64>>, aux: Vec<AuxSource>) -> MultiSourceDataset {
    let n = rows.len();
    let d = rows[0].len();
    MultiSourceDataset::new(
        FeatureMatrix::from_rows(&rows).unwrap(),
        (0..d).map(|j| format!("f{j}")).collect(),
        aux,
        (0..n).map(|i| i as f64).collect(),
        (0..n).map(|i| format!("s{i}")).collect(),
    )
    .unwrap()
}

fn visual_only(n_trees: usize, m_try: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        n_trees,
        m_try,
        phi: 2,
        weights: SourceWeights {
            alpha_v: 1.0,
            alpha_aux: vec![],
            alpha_t: 0.0,
        },
        seed,
        split_kind: SplitKind::AxisAligned,
        pseudo_mode: PseudoMode::PerTree,
        record_correlation: false,
    }
}

fn gaussian_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..d).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect()).collect()
}

fn two_blobs(seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = rand_distr::Normal::new(0.0, 0.1).unwrap();
    let shift = 10.0 / 2f64.sqrt();
    let mut rows = Vec::new();
    let mut blob = Vec::new();
    for b in 0..2 {
        for _ in 0..50 {
            let c = b as f64 * shift;
            rows.push(vec![c + rng.sample(noise), c + rng.sample(noise)]);
            blob.push(b);
        }
    }
    (rows, blob)
}

fn bag_of(dataset: &MultiSourceDataset, config: &TrainConfig, t: usize) -> Vec<u32> {
    let mut rng = tree_rng(config.seed, t);
    let pseudo = sample_pseudo(dataset.main(), &mut rng);
    draw_bag(dataset.len() + pseudo.nrows(), &mut rng)
}

#[test]
fn identical_rows_make_a_single_leaf() {
    let ds = dataset(vec![vec![1.0, 2.0]; 6], vec![]);
    let forest = train_forest(&ds, &visual_only(5, 1, 3)).unwrap();
    for tree in &forest.trees {
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.fan_in, 0);
    }
    assert_eq!(fan_in_stats(&forest).mean, 0.0);
}

#[test]
fn separated_blobs_never_share_a_leaf() {
    let (rows, blob) = two_blobs(11);
    let ds = dataset(rows, vec![]);
    // Default weighting: visual and temporal terms, blobs contiguous in time.
    let config = TrainConfig {
        weights: default_weights(0.5, 0).unwrap(),
        ..visual_only(20, 1, 5)
    };
    let forest = train_forest(&ds, &config).unwrap();
    for tree in &forest.trees {
        for node in &tree.nodes {
            if let Node::Leaf { members, .. } = node {
                let mixed = members.windows(2).any(|w| blob[w[0] as usize] != blob[w[1] as usize]);
                assert!(!mixed, "leaf mixes blobs: {members:?}");
            }
        }
    }
}

#[test]
fn small_trees_stay_shallow() {
    let rows = vec![vec![0.0, 3.0], vec![1.0, 1.0], vec![2.0, 0.0], vec![3.0, 2.0]];
    let ds = dataset(rows, vec![]);
    for seed in 0..50 {
        let forest = train_forest(&ds, &visual_only(4, 2, seed)).unwrap();
        for (t, tree) in forest.trees.iter().enumerate() {
            let bag = bag_of(&ds, &forest.config, t);
            let mut distinct: Vec<&[f64]> = Vec::new();
            let mut rng = tree_rng(seed, t);
            let pseudo = sample_pseudo(ds.main(), &mut rng);
            let aug = AugmentedSet::from_parts(ds.main(), pseudo);
            for &r in &bag {
                let row = aug.row(r as usize);
                if !distinct.contains(&row) {
                    distinct.push(row);
                }
            }
            let depth = tree.depths().into_iter().max().unwrap();
            assert!(depth < distinct.len().max(1), "depth {depth} with {} distinct rows", distinct.len());
            assert!(tree.num_leaves() <= distinct.len());
        }
    }
}

#[test]
fn same_seed_same_bytes_for_any_thread_count() {
    let ds = dataset(gaussian_rows(40, 3, 1), vec![]);
    let config = TrainConfig {
        record_correlation: true,
        ..visual_only(12, 2, 99)
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| train_forest(&ds, &config).unwrap().to_json())
    };
    let a = run(1);
    assert_eq!(a, run(1));
    assert_eq!(a, run(4));
}

#[test]
fn single_tree_forest_equals_train_tree() {
    let ds = dataset(gaussian_rows(30, 4, 2), vec![]);
    let config = visual_only(1, 2, 7);
    let forest = train_forest(&ds, &config).unwrap();
    assert_eq!(forest.trees[0], train_tree(&ds, &config, 0).unwrap());
    let config = TrainConfig {
        pseudo_mode: PseudoMode::Shared,
        ..config
    };
    let forest = train_forest(&ds, &config).unwrap();
    assert_eq!(forest.trees[0], train_tree(&ds, &config, 0).unwrap());
}

#[test]
fn reduction_matches_conventional_forest() {
    for seed in 0..10 {
        let ds = dataset(gaussian_rows(40, 5, seed + 100), vec![]);
        let config = visual_only(3, 2, seed);
        let forest = train_forest(&ds, &config).unwrap();
        for (t, tree) in forest.trees.iter().enumerate() {
            let reference = train_conventional_tree(ds.main(), 2, 2, seed, t);
            assert_eq!(tree.split_log(), reference.splits, "seed {seed} tree {t}");
        }
    }
}

#[test]
fn replayed_members_reach_their_leaf() {
    let ds = dataset(gaussian_rows(50, 3, 3), vec![]);
    let config = TrainConfig {
        weights: default_weights(0.5, 0).unwrap(),
        ..visual_only(8, 2, 4)
    };
    let forest = train_forest(&ds, &config).unwrap();
    for tree in &forest.trees {
        for id in 0..tree.nodes.len() {
            if tree.is_leaf(id) {
                for i in tree.leaf_samples(id) {
                    assert_eq!(trace_leaf(tree, ds.main().row(i as usize)), id);
                }
            }
        }
    }
}

#[test]
fn bag_members_partition_across_leaves() {
    let ds = dataset(gaussian_rows(60, 4, 5), vec![]);
    let config = TrainConfig {
        weights: default_weights(0.5, 0).unwrap(),
        ..visual_only(6, 2, 8)
    };
    let forest = train_forest(&ds, &config).unwrap();
    let n = ds.len();
    for (t, tree) in forest.trees.iter().enumerate() {
        let mut in_bag: Vec<u32> = bag_of(&ds, &config, t).into_iter().filter(|&r| (r as usize) < n).collect();
        in_bag.sort_unstable();
        in_bag.dedup();
        let mut members: Vec<u32> = tree
            .nodes
            .iter()
            .flat_map(|node| match node {
                Node::Leaf { members, .. } => members.clone(),
                Node::Split { .. } => vec![],
            })
            .collect();
        members.sort_unstable();
        assert_eq!(members, in_bag);
        // Every training sample, in or out of the bag, lands in exactly one leaf list.
        let mut all: Vec<u32> = (0..tree.nodes.len()).flat_map(|id| tree.leaf_samples(id).collect::<Vec<_>>()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..n as u32).collect::<Vec<_>>());
    }
}

fn leaf(members: Vec<u32>) -> Node {
    Node::Leaf { members, oob: vec![] }
}

fn split(left: u32, right: u32) -> Node {
    Node::Split {
        split: Split::Axis {
            feature: 0,
            threshold: (left + right) as f64,
        },
        left,
        right,
    }
}

#[test]
fn fan_in_by_hand() {
    // Balanced tree over 8 samples (values 0..8, splits 8 -> 4,4 -> 2,2,2,2).
    let xs: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
    let nodes = vec![
        Node::Split {
            split: Split::Axis { feature: 0, threshold: 3.5 },
            left: 1,
            right: 2,
        },
        Node::Split {
            split: Split::Axis { feature: 0, threshold: 1.5 },
            left: 3,
            right: 4,
        },
        Node::Split {
            split: Split::Axis { feature: 0, threshold: 5.5 },
            left: 5,
            right: 6,
        },
        Node::Split {
            split: Split::Axis { feature: 0, threshold: 0.5 },
            left: 7,
            right: 8,
        },
        Node::Split {
            split: Split::Axis { feature: 0, threshold: 2.5 },
            left: 9,
            right: 10,
        },
        Node::Split {
            split: Split::Axis { feature: 0, threshold: 4.5 },
            left: 11,
            right: 12,
        },
        Node::Split {
            split: Split::Axis { feature: 0, threshold: 6.5 },
            left: 13,
            right: 14,
        },
    ]
    .into_iter()
    .chain((0..8).map(|i| leaf(vec![i])))
    .collect::<Vec<_>>();
    let tree = Tree {
        nodes,
        roots: RootImpurities {
            visual: Some(0.5),
            aux: vec![],
            temporal: None,
        },
        weights: default_weights(1.0, 0).unwrap(),
        fan_in: 0,
        correlation: None,
    };
    assert_eq!(hand_fan_in(&tree, &xs), 17);
    for (i, x) in xs.iter().enumerate() {
        assert_eq!(tree.trace_leaf(x), 7 + i);
    }
    // One split of 10 samples.
    let stump = Tree {
        nodes: vec![split(1, 2), leaf((0..5).collect()), leaf((5..10).collect())],
        ..tree.clone()
    };
    let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 2.0]).collect();
    assert_eq!(hand_fan_in(&stump, &xs), 9);
}

/// Σ (|S_j| - 1) over split nodes, counting the samples routed through each.
fn hand_fan_in(tree: &Tree, xs: &[Vec<f64>]) -> u64 {
    let mut through = vec![0u64; tree.nodes.len()];
    for x in xs {
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
    (0..tree.nodes.len())
        .filter(|&id| !tree.is_leaf(id))
        .map(|id| through[id] - 1)
        .sum()
}

#[test]
fn recorded_fan_in_matches_routing() {
    let ds = dataset(gaussian_rows(30, 2, 6), vec![]);
    let config = visual_only(5, 1, 2);
    let forest = train_forest(&ds, &config).unwrap();
    for (t, tree) in forest.trees.iter().enumerate() {
        let mut rng = tree_rng(config.seed, t);
        let pseudo = sample_pseudo(ds.main(), &mut rng);
        let aug = AugmentedSet::from_parts(ds.main(), pseudo);
        let bag = draw_bag(aug.len(), &mut rng);
        let xs: Vec<Vec<f64>> = bag.iter().map(|&r| aug.row(r as usize).to_vec()).collect();
        assert_eq!(tree.fan_in, hand_fan_in(tree, &xs));
    }
}

fn categorical(values: Vec<Option<u32>>) -> AuxSource {
    AuxSource {
        descriptor: SourceDescriptor::categorical("w", vec!["a".into(), "b".into()]),
        values: AuxValues::Categorical(values),
    }
}

#[test]
fn adapted_weights_sum_to_one_in_every_tree() {
    let n = 40;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let values = (0..n)
        .map(|i| (rng.random::<f64>() > 0.3).then_some((i % 2) as u32))
        .collect();
    let cont = AuxSource {
        descriptor: SourceDescriptor::continuous("speed"),
        values: AuxValues::Continuous((0..n).map(|i| (i % 3 != 0).then_some(i as f64)).collect()),
    };
    let ds = dataset(gaussian_rows(n, 3, 4), vec![categorical(values), cont]);
    let config = TrainConfig {
        weights: default_weights(0.5, 2).unwrap(),
        ..visual_only(10, 2, 1)
    };
    let forest = train_forest(&ds, &config).unwrap();
    for (t, tree) in forest.trees.iter().enumerate() {
        assert!((tree.weights.total() - 1.0).abs() < 1e-12);
        let deltas = bag_missing_fractions(&ds, &bag_of(&ds, &config, t));
        assert_eq!(tree.weights, adapt_weights(&config.weights, &deltas));
    }
}

#[test]
fn constant_source_is_dropped_from_the_tree() {
    let n = 20;
    let ds = dataset(gaussian_rows(n, 2, 1), vec![categorical(vec![Some(1); n])]);
    let config = TrainConfig {
        weights: default_weights(0.5, 1).unwrap(),
        ..visual_only(3, 1, 1)
    };
    let forest = train_forest(&ds, &config).unwrap();
    for tree in &forest.trees {
        assert_eq!(tree.roots.aux[0], None);
        assert_eq!(tree.weights, adapt_weights(&config.weights, &[1.0]));
    }
}

#[test]
fn oblique_forest_is_deterministic_and_routes_members() {
    let ds = dataset(gaussian_rows(40, 3, 8), vec![]);
    let config = TrainConfig {
        split_kind: SplitKind::Oblique,
        ..visual_only(4, 2, 3)
    };
    let a = train_forest(&ds, &config).unwrap();
    assert_eq!(a.to_json(), train_forest(&ds, &config).unwrap().to_json());
    assert!(a.trees.iter().any(|t| t.nodes.iter().any(|n| matches!(
        n,
        Node::Split {
            split: Split::Oblique { .. },
            ..
        }
    ))));
    for tree in &a.trees {
        for id in 0..tree.nodes.len() {
            for i in tree.leaf_samples(id) {
                assert_eq!(tree.trace_leaf(ds.main().row(i as usize)), id);
            }
        }
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let ds = dataset(gaussian_rows(10, 2, 1), vec![]);
    assert!(train_forest(&ds, &visual_only(0, 1, 0)).is_err());
    assert!(train_forest(&ds, &visual_only(1, 3, 0)).is_err());
    assert!(train_forest(&ds, &TrainConfig { phi: 1, ..visual_only(1, 1, 0) }).is_err());
    let config = TrainConfig {
        weights: default_weights(0.5, 1).unwrap(),
        ..visual_only(1, 1, 0)
    };
    assert!(train_forest(&ds, &config).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn continuous_source_power_of_two_scaling_keeps_splits(seed in 0u64..1000, exp in -8i32..8) {
        // Power-of-two scaling is exact in floating point, so the chosen splits must agree exactly.
        let scale = 2f64.powi(exp);
        let n = 30;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
        let rows = gaussian_rows(n, 3, seed);
        let src = |k: f64| AuxSource {
            descriptor: SourceDescriptor::continuous("speed"),
            values: AuxValues::Continuous(y.iter().map(|v| Some(v * k)).collect()),
        };
        let config = TrainConfig {
            weights: default_weights(0.5, 1).unwrap(),
            ..visual_only(2, 2, seed)
        };
        let a = train_forest(&dataset(rows.clone(), vec![src(1.0)]), &config).unwrap();
        let b = train_forest(&dataset(rows, vec![src(scale)]), &config).unwrap();
        for (ta, tb) in a.trees.iter().zip(&b.trees) {
            prop_assert_eq!(ta.split_log(), tb.split_log());
        }
    }
}
