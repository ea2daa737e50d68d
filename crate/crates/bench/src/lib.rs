//! Benchmark fixtures.

use msc_core::{generate, MultiSourceDataset, SynthConfig, TrainConfig};

/// Four-blob dataset with one categorical source, `per_cluster` rows per blob.
pub fn dataset(per_cluster: usize) -> MultiSourceDataset {
    let config = SynthConfig { samples_per_cluster: per_cluster, seed: 11, ..SynthConfig::default() };
    generate(&config).expect("valid synth config").dataset
}

pub fn train_config(dataset: &MultiSourceDataset, n_trees: usize) -> TrainConfig {
    let mut config = TrainConfig::for_dataset(dataset, 0.5, 3).expect("valid weights");
    config.n_trees = n_trees;
    config
}
