//! Trained model bundle: forest, training clusters and pipeline settings.

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::affinity::{default_knn_k, forest_affinity, knn_sparsify, normalise};
use crate::data::{MultiSourceDataset, SourceKind};
use crate::error::{Error, Result};
use crate::forest::{train_forest, MscForest, TrainConfig, MODEL_VERSION};
use crate::spectral::{build_cluster_model, eigen_decompose, estimate_num_clusters, spectral_cluster, ClusterModel};

pub const DEFAULT_K_MAX: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub train: TrainConfig,
    /// Neighbourhood size for sparsification; `None` picks `default_knn_k(N)`.
    pub knn_k: Option<usize>,
    pub k_max: usize,
    /// Fixed cluster count; `None` uses the eigengap estimate.
    #[serde(default)]
    pub n_clusters: Option<usize>,
}

impl PipelineConfig {
    pub fn new(train: TrainConfig) -> Self {
        Self {
            train,
            knn_k: None,
            k_max: DEFAULT_K_MAX,
            n_clusters: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub name: String,
    pub kind: SourceKind,
    pub vocabulary: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MscModel {
    pub version: u32,
    pub pipeline: PipelineConfig,
    pub knn_k: usize,
    pub eigenvalues: Vec<f64>,
    pub feature_names: Vec<String>,
    pub sources: Vec<SourceInfo>,
    pub train_ids: Vec<String>,
    pub clusters: ClusterModel,
    pub forest: MscForest,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PhaseTimings {
    pub forest_ms: f64,
    pub affinity_ms: f64,
    pub spectral_ms: f64,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Forest, forest affinity, kNN sparsification and spectral clustering of the training set.
pub fn train_model(dataset: &MultiSourceDataset, pipeline: &PipelineConfig) -> Result<(MscModel, PhaseTimings)> {
    let n = dataset.len();
    if pipeline.k_max < 2 || pipeline.k_max >= n {
        return Err(Error::invalid(format!("k_max must lie in [2, {}], got {}", n - 1, pipeline.k_max)));
    }
    let mut timings = PhaseTimings::default();
    let start = Instant::now();
    let forest = train_forest(dataset, &pipeline.train)?;
    timings.forest_ms = ms(start);

    let start = Instant::now();
    let k = pipeline.knn_k.unwrap_or_else(|| default_knn_k(n));
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("knn k must lie in [1, {}], got {k}", n - 1)));
    }
    let affinity = forest_affinity(&forest, dataset.main());
    let sparse = knn_sparsify(&affinity, k)?.with_self_loops();
    let s = normalise(&sparse)?;
    timings.affinity_ms = ms(start);

    let start = Instant::now();
    let decomp = eigen_decompose(&s, n)?;
    let n_clusters = match pipeline.n_clusters {
        Some(c) if c == 0 || c > n => return Err(Error::invalid(format!("cluster count {c} out of range"))),
        Some(c) => c,
        None => estimate_num_clusters(&decomp, pipeline.k_max)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(pipeline.train.seed);
    rng.set_stream(u64::MAX);
    let labels = spectral_cluster(&decomp, n_clusters, &mut rng)?;
    let clusters = build_cluster_model(dataset, &labels)?;
    timings.spectral_ms = ms(start);

    let model = MscModel {
        version: MODEL_VERSION,
        pipeline: pipeline.clone(),
        knn_k: k,
        eigenvalues: decomp.eigenvalues.iter().take(pipeline.k_max + 1).copied().collect(),
        feature_names: dataset.feature_names().to_vec(),
        sources: dataset
            .aux()
            .iter()
            .map(|s| SourceInfo {
                name: s.descriptor.name.clone(),
                kind: s.descriptor.kind,
                vocabulary: s.descriptor.vocabulary.clone(),
            })
            .collect(),
        train_ids: dataset.sample_ids().to_vec(),
        clusters,
        forest,
    };
    Ok((model, timings))
}

impl MscModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text).map_err(|e| Error::MalformedJson {
            path: Default::default(),
            message: e.to_string(),
        })?;
        model.check()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::MalformedJson { message, .. } => Error::MalformedJson {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    fn check(&self) -> Result<()> {
        if self.version != MODEL_VERSION {
            return Err(Error::invalid(format!(
                "model version {} is not supported (expected {MODEL_VERSION})",
                self.version
            )));
        }
        let n = self.forest.n_train;
        if self.clusters.labels.len() != n || self.train_ids.len() != n {
            return Err(Error::invalid("model cluster labels do not cover the training set"));
        }
        let k = self.clusters.n_clusters;
        for tree in &self.forest.trees {
            for id in 0..tree.nodes.len() {
                if tree.is_leaf(id) && tree.leaf_samples(id).any(|i| i as usize >= n) {
                    return Err(Error::invalid("leaf references a sample outside the training set"));
                }
            }
        }
        if self.clusters.labels.iter().any(|&l| l >= k) || self.clusters.centroids.len() != k {
            return Err(Error::invalid("inconsistent cluster model"));
        }
        Ok(())
    }
}
