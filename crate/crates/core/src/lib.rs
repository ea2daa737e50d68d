//! Multi-source clustering forests.
//!
//! Trees are grown on the main features only, but every split is scored jointly
//! against the auxiliary sources and time. The resulting forest affinity feeds a
//! spectral clustering, unseen samples are assigned through the trees, and the
//! assignment drives tag inference and key-clip summaries.

pub mod affinity;
pub mod augment;
pub mod correlation;
pub mod data;
pub mod error;
pub mod eval;
pub mod forest;
pub mod inference;
pub mod model;
pub mod spectral;
pub mod summary;
pub mod synth;

pub use affinity::{default_knn_k, forest_affinity, knn_sparsify, normalise, AffinityMatrix};
pub use data::{
    load_dataset, save_dataset, AuxSource, AuxValues, FeatureMatrix, MultiSourceDataset, SourceDescriptor, SourceKind,
    SourceWeights,
};
pub use error::{Error, ErrorFamily, Result};
pub use forest::{train_forest, train_tree, MscForest, Tree, TrainConfig};
pub use inference::{assign_cluster, assign_hard, infer_tags, Assignment, Inference, TagPrediction};
pub use model::{train_model, MscModel, PipelineConfig};
pub use spectral::ClusterModel;
pub use summary::{coverage, summarize, SummaryManifest};
pub use synth::{generate, SynthConfig};
