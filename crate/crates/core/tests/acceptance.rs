#![allow(clippy::needless_range_loop)]

//! End-to-end acceptance checks. Runs as a plain binary and prints one
//! PASS/FAIL line per criterion; exits nonzero if any criterion fails.

use std::time::Instant;

use msc_core::affinity::forest_affinity;
use msc_core::correlation::{correlation_report, node_feature_correlation, SourceGroup, ZeroCooccurrence};
use msc_core::data::{FeatureMatrix, MultiSourceDataset};
use msc_core::eval::{labelling_entropy, tagging_accuracy, LogBase};
use msc_core::forest::{
    fan_in_stats, routed_fan_in, train_conventional_tree, Node, PseudoMode, RootImpurities, Split, SplitKind, Tree,
    TrainConfig,
};
use msc_core::inference::Inference;
use msc_core::spectral::{canonical_labels, eigen_decompose, estimate_num_clusters, spectral_cluster};
use msc_core::summary::{coverage, summarize};
use msc_core::synth::{generate, CategoricalSpec, SynthConfig, SynthOutput};
use msc_core::{default_knn_k, normalise, train_forest, train_model, AffinityMatrix, MscModel, PipelineConfig, SourceWeights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

const TREES: usize = 100;

/// The synthetic family: K=4, 125 samples per cluster, d=20, separation/sigma = 8,
/// one categorical source aligned at 0.9.
fn family(seed: u64, missing: f64) -> SynthOutput {
    generate(&SynthConfig {
        categorical: vec![CategoricalSpec {
            alignment: 0.9,
            missing_fraction: missing,
        }],
        seed,
        ..SynthConfig::default()
    })
    .expect("synthetic data")
}

fn fit(dataset: &MultiSourceDataset, alpha_v: f64, seed: u64) -> MscModel {
    let mut train = TrainConfig::for_dataset(dataset, alpha_v, seed).unwrap();
    train.n_trees = TREES;
    train_model(dataset, &PipelineConfig::new(train)).unwrap().0
}

fn truth_entropy(model: &MscModel, out: &SynthOutput) -> f64 {
    let truth: Vec<Option<u32>> = out.truth_categorical[0].iter().map(|&v| Some(v)).collect();
    labelling_entropy(&model.clusters.labels, &truth, 4, LogBase::Natural)
}

fn round1(x: f64) -> f64 {
    (x * 1000.0).round() / 10.0
}

fn criterion_1() -> Outcome {
    let lengths = [28, 29, 29, 21, 28];
    let pairs = [(3, 12), (2, 12), (4, 12), (3, 12), (7, 12)];
    let expected = [25.9, 16.7, 33.3, 34.5, 60.4];
    let got: Vec<f64> = lengths
        .iter()
        .zip(pairs)
        .map(|(&len, (c, t))| round1(coverage(&lengths, len, c, t).unwrap()))
        .collect();
    outcome(got == expected, format!("coverage % = {got:?}, expected {expected:?}"))
}

/// Criteria 2 and 5 share the same runs.
fn criteria_2_and_5() -> (Outcome, Outcome) {
    let mut wins = 0;
    let mut phi_wins = 0;
    let mut slowest: f64 = 0.0;
    let mut entropies = Vec::new();
    for seed in 0..20 {
        let start = Instant::now();
        let out = family(seed, 0.0);
        let multi = fit(&out.dataset, 0.5, seed);
        let visual = fit(&out.dataset, 1.0, seed);
        slowest = slowest.max(start.elapsed().as_secs_f64());
        let (hm, hv) = (truth_entropy(&multi, &out), truth_entropy(&visual, &out));
        entropies.push((hm, hv));
        wins += usize::from(hm < hv);
        phi_wins += usize::from(fan_in_stats(&multi.forest).mean <= fan_in_stats(&visual.forest).mean);
    }
    let mean_m = entropies.iter().map(|e| e.0).sum::<f64>() / 20.0;
    let mean_v = entropies.iter().map(|e| e.1).sum::<f64>() / 20.0;
    let c2 = outcome(
        wins >= 18 && slowest <= 120.0,
        format!(
            "multi-source entropy lower in {wins}/20 seeds (mean {mean_m:.3} vs visual-only {mean_v:.3}); slowest seed pair {slowest:.1}s"
        ),
    );

    let fixed = balanced_tree();
    let xs = FeatureMatrix::from_rows(&(0..8).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap();
    let hand = routed_fan_in(&fixed, &xs);
    let c5 = outcome(
        phi_wins >= 16 && hand == 17,
        format!("multi-source mean fan-in <= visual-only in {phi_wins}/20 seeds; fixed 8-sample tree fan-in {hand} (expected 17)"),
    );
    (c2, c5)
}

fn balanced_tree() -> Tree {
    let split = |t: f64, l: u32| Node::Split {
        split: Split::Axis {
            feature: 0,
            threshold: t,
        },
        left: l,
        right: l + 1,
    };
    let mut nodes = vec![split(3.5, 1), split(1.5, 3), split(5.5, 5), split(0.5, 7), split(2.5, 9), split(4.5, 11), split(6.5, 13)];
    nodes.extend((0..8).map(|i| Node::Leaf {
        members: vec![i],
        oob: vec![],
    }));
    Tree {
        nodes,
        roots: RootImpurities {
            visual: Some(0.5),
            aux: vec![],
            temporal: None,
        },
        weights: msc_core::data::default_weights(1.0, 0).unwrap(),
        fan_in: 17,
        correlation: None,
    }
}

fn criterion_3() -> Outcome {
    let mut mean = [0.0; 3];
    let mut weights_ok = true;
    for seed in 0..10 {
        for (slot, missing) in [0.0, 0.1, 0.2].into_iter().enumerate() {
            let out = family(seed, missing);
            let model = fit(&out.dataset, 0.5, seed);
            mean[slot] += truth_entropy(&model, &out) / 10.0;
            weights_ok &= model.forest.trees.iter().all(|t| (t.weights.total() - 1.0).abs() <= 1e-12);
        }
    }
    let d10 = (mean[1] - mean[0]) / mean[0];
    let d20 = (mean[2] - mean[0]) / mean[0];
    outcome(
        d10 < 0.2 && d20 < 0.2 && weights_ok,
        format!(
            "mean entropy 0%={:.3} 10%={:.3} ({:+.1}%) 20%={:.3} ({:+.1}%); adapted weights sum to 1: {weights_ok}",
            mean[0],
            mean[1],
            100.0 * d10,
            mean[2],
            100.0 * d20
        ),
    )
}

fn held_out_accuracy(model: &MscModel, test: &MultiSourceDataset, truth: &[(String, usize)]) -> f64 {
    let inf = Inference::new(&model.forest, &model.clusters);
    let preds: Vec<(String, usize)> = test
        .sample_ids()
        .iter()
        .zip(test.main().rows_iter())
        .map(|(id, x)| (id.clone(), inf.infer_tags(&inf.assign(x)).tags[0].argmax))
        .collect();
    tagging_accuracy(&preds, truth, 4).unwrap().0
}

fn criterion_4() -> Outcome {
    let mut wins = 0;
    let mut accs = Vec::new();
    for seed in 0..20 {
        let out = family(seed, 0.0);
        let n = out.dataset.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
        let test_idx: Vec<usize> = {
            let mut v = rand::seq::index::sample(&mut rng, n, n / 4).into_vec();
            v.sort_unstable();
            v
        };
        let train_idx: Vec<usize> = (0..n).filter(|i| test_idx.binary_search(i).is_err()).collect();
        let train = out.dataset.subset(&train_idx).unwrap();
        let test = out.dataset.subset(&test_idx).unwrap();
        let truth: Vec<(String, usize)> = test_idx
            .iter()
            .map(|&i| (out.dataset.sample_ids()[i].clone(), out.truth_categorical[0][i] as usize))
            .collect();
        let am = held_out_accuracy(&fit(&train, 0.5, seed), &test, &truth);
        let av = held_out_accuracy(&fit(&train, 1.0, seed), &test, &truth);
        accs.push((am, av));
        wins += usize::from(am >= av + 0.10 && am >= 0.25 + 0.30);
    }
    let mm = accs.iter().map(|a| a.0).sum::<f64>() / 20.0;
    let mv = accs.iter().map(|a| a.1).sum::<f64>() / 20.0;
    outcome(
        wins >= 18,
        format!("margin met in {wins}/20 seeds (mean accuracy multi-source {mm:.3}, visual-only {mv:.3}, chance 0.25)"),
    )
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

fn random_dataset(n: usize, d: usize, seed: u64) -> MultiSourceDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
    MultiSourceDataset::new(
        FeatureMatrix::from_rows(&rows).unwrap(),
        (0..d).map(|j| format!("f{j}")).collect(),
        vec![],
        (0..n).map(|i| i as f64).collect(),
        (0..n).map(|i| format!("s{i}")).collect(),
    )
    .unwrap()
}

fn criterion_6() -> Outcome {
    let mut nodes = 0;
    let mut matched = 0;
    for seed in 0..10 {
        let ds = random_dataset(60, 6, 1000 + seed);
        let config = visual_only(5, 2, seed);
        let forest = train_forest(&ds, &config).unwrap();
        for (t, tree) in forest.trees.iter().enumerate() {
            let reference = train_conventional_tree(ds.main(), 2, 2, seed, t);
            let ours = tree.split_log();
            nodes += ours.len().max(reference.splits.len());
            matched += usize::from(ours == reference.splits) * ours.len();
        }
    }
    outcome(matched == nodes, format!("{matched}/{nodes} nodes identical over 10 seeded runs"))
}

fn criterion_7() -> Outcome {
    let mut exact = 0;
    for seed in 0..10 {
        let n = 20 + 3 * seed as usize;
        let ds = random_dataset(n, 4, seed);
        let forest = train_forest(&ds, &visual_only(20, 2, seed)).unwrap();
        let fast = forest_affinity(&forest, ds.main());
        let mut ok = true;
        for i in 0..n {
            for j in 0..n {
                let count = forest
                    .trees
                    .iter()
                    .filter(|t| t.trace_leaf(ds.main().row(i)) == t.trace_leaf(ds.main().row(j)))
                    .count();
                ok &= fast.get(i, j) == count as f64 / forest.trees.len() as f64;
            }
        }
        exact += usize::from(ok);
    }
    outcome(exact == 10, format!("{exact}/10 seeds exactly equal to brute-force co-leaf counts"))
}

/// Cyclic Jacobi eigenvalues of a small symmetric matrix, sorted descending.
fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

fn criterion_8() -> Outcome {
    let mut label_ok = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Exact block-diagonal affinity with 2-5 shuffled blocks.
        let k = rng.random_range(2..=5);
        let n = 30;
        let truth: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if truth[i] == truth[j] {
                    v[i * n + j] = 1.0;
                }
            }
        }
        let a = AffinityMatrix::from_dense(n, v, msc_core::affinity::AffinityKind::Dense).unwrap();
        let decomp = eigen_decompose(&normalise(&a).unwrap(), n).unwrap();
        let est = estimate_num_clusters(&decomp, 10).unwrap();
        let labels = spectral_cluster(&decomp, est, &mut rng).unwrap();
        label_ok += usize::from(est == k && canonical_labels(&labels) == canonical_labels(&truth));

        // Random symmetric 10x10 against the Jacobi oracle.
        let m: Vec<Vec<f64>> = {
            let mut m = vec![vec![0.0; 10]; 10];
            for i in 0..10 {
                for j in i..10 {
                    let x = rng.random::<f64>() * 2.0 - 1.0;
                    m[i][j] = x;
                    m[j][i] = x;
                }
            }
            m
        };
        let flat: Vec<f64> = m.iter().flatten().copied().collect();
        let ours = eigen_decompose(&flat, 10).unwrap().eigenvalues;
        let oracle = jacobi_eigenvalues(m);
        worst = ours.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    outcome(
        label_ok == 10 && worst <= 1e-8,
        format!("{label_ok}/10 block-diagonal cases match components; max eigenvalue error {worst:.2e}"),
    )
}

fn criterion_9() -> Outcome {
    let identical = node_feature_correlation(&[true, true, false, false, true], &[true, true, false, false, true]);
    let half: Vec<bool> = (0..10).map(|i| i < 5).collect();
    let flipped: Vec<bool> = half.iter().map(|b| !b).collect();
    let complementary = node_feature_correlation(&half, &flipped);
    let exact = identical == Some(1.0) && complementary == Some(0.0);

    let mut wins = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let n = 200;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let base = if i < n / 2 { -3.0 } else { 3.0 } + rng.sample(noise);
                vec![base, base, rng.sample(noise), rng.sample(noise)]
            })
            .collect();
        let ds = MultiSourceDataset::new(
            FeatureMatrix::from_rows(&rows).unwrap(),
            (0..4).map(|j| format!("f{j}")).collect(),
            vec![],
            (0..n).map(|i| i as f64).collect(),
            (0..n).map(|i| format!("s{i}")).collect(),
        )
        .unwrap();
        let mut config = TrainConfig::for_dataset(&ds, 0.5, seed).unwrap();
        config.n_trees = 50;
        config.m_try = 2;
        let forest = train_forest(&ds, &config).unwrap();
        let groups = (0..4)
            .map(|j| SourceGroup {
                name: format!("f{j}"),
                members: vec![j],
            })
            .collect();
        let report = correlation_report(&forest, ds.feature_names(), &[], Some(groups), ZeroCooccurrence::CountAsZero);
        wins += usize::from(report.psi[0][1] > report.psi[0][2]);
    }
    outcome(
        exact && wins >= 18,
        format!("identical -> {identical:?}, complementary -> {complementary:?}; duplicate beats noise in {wins}/20 seeds"),
    )
}

fn criterion_10() -> Outcome {
    let out = generate(&SynthConfig {
        samples_per_cluster: 40,
        temporal_blocks: true,
        seed: 3,
        ..SynthConfig::default()
    })
    .unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let mut train = TrainConfig::for_dataset(&out.dataset, 0.5, 17).unwrap();
                train.n_trees = 40;
                let model = train_model(&out.dataset, &PipelineConfig::new(train)).unwrap().0;
                let summary = summarize(&model.forest, &model.clusters, &out.dataset, default_knn_k(out.dataset.len())).unwrap();
                (model.to_json(), summary.to_json())
            })
    };
    let a = run(1);
    let b = run(1);
    let c = run(4);
    let ok = a == b && a == c;
    outcome(ok, format!("model {} bytes, summary {} bytes; identical across runs and 1/4 workers: {ok}", a.0.len(), a.1.len()))
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    results.push((1, criterion_1()));
    let (c2, c5) = criteria_2_and_5();
    results.push((2, c2));
    results.push((3, criterion_3()));
    results.push((4, criterion_4()));
    results.push((5, c5));
    results.push((6, criterion_6()));
    results.push((7, criterion_7()));
    results.push((8, criterion_8()));
    results.push((9, criterion_9()));
    results.push((10, criterion_10()));
    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (id, r) in &results {
        println!("criterion {id:>2}: {} - {}", if r.pass { "PASS" } else { "FAIL" }, r.detail);
        failed += usize::from(!r.pass);
    }
    println!("acceptance: {}/{} passed in {:.1}s", results.len() - failed, results.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
