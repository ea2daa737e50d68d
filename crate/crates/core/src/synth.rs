//! Planted multi-source datasets with known latent clusters.
//!
//! Cluster `k` sits at the orthant corner whose first `ceil(log2 K)` coordinates
//! spell the bits of `k` (bit set: `+s/2`, clear: `-s/2`); the remaining
//! coordinates are `-s/2` for every cluster and carry only noise.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{AuxSource, AuxValues, FeatureMatrix, MultiSourceDataset, SourceDescriptor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalSpec {
    /// Probability that the value equals the latent cluster.
    pub alignment: f64,
    #[serde(default)]
    pub missing_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSpec {
    /// Mean of cluster `k` is `shift * k`.
    pub shift: f64,
    pub sigma: f64,
    #[serde(default)]
    pub missing_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_clusters: usize,
    pub samples_per_cluster: usize,
    pub d: usize,
    pub blob_separation: f64,
    pub blob_sigma: f64,
    #[serde(default)]
    pub categorical: Vec<CategoricalSpec>,
    #[serde(default)]
    pub continuous: Vec<ContinuousSpec>,
    /// Contiguous time blocks per cluster when set, shuffled order otherwise.
    #[serde(default)]
    pub temporal_blocks: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_clusters: 4,
            samples_per_cluster: 125,
            d: 20,
            blob_separation: 8.0,
            blob_sigma: 1.0,
            categorical: vec![CategoricalSpec {
                alignment: 0.9,
                missing_fraction: 0.0,
            }],
            continuous: Vec::new(),
            temporal_blocks: false,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn code_bits(&self) -> usize {
        (usize::BITS - (self.n_clusters.max(1) - 1).leading_zeros()) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_clusters;
        if k == 0 || self.samples_per_cluster == 0 || k * self.samples_per_cluster < 2 {
            return Err(Error::invalid("synthetic data needs at least 2 samples and 1 cluster"));
        }
        if self.d == 0 || self.d < self.code_bits() {
            return Err(Error::invalid(format!(
                "d = {} cannot hold {} orthant code bits",
                self.d,
                self.code_bits()
            )));
        }
        if !(self.blob_separation.is_finite() && self.blob_sigma.is_finite() && self.blob_sigma >= 0.0) {
            return Err(Error::invalid("blob separation and sigma must be finite, sigma non-negative"));
        }
        let fraction_ok = |f: f64| (0.0..=1.0).contains(&f);
        for c in &self.categorical {
            if !(c.alignment >= 1.0 / k as f64 - 1e-12 && c.alignment <= 1.0) || !fraction_ok(c.missing_fraction) {
                return Err(Error::invalid(format!(
                    "categorical alignment {} must lie in [1/K, 1] and missing fraction in [0, 1]",
                    c.alignment
                )));
            }
        }
        for c in &self.continuous {
            if !(c.sigma >= 0.0 && c.shift.is_finite()) || !fraction_ok(c.missing_fraction) {
                return Err(Error::invalid("continuous source needs finite shift, sigma >= 0, fraction in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn centre(&self, k: usize) -> Vec<f64> {
        let half = self.blob_separation / 2.0;
        (0..self.d)
            .map(|j| {
                if j < self.code_bits() && (k >> j) & 1 == 1 {
                    half
                } else {
                    -half
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: MultiSourceDataset,
    /// Latent cluster per row.
    pub labels: Vec<usize>,
    /// Complete categorical values per source before missingness.
    pub truth_categorical: Vec<Vec<u32>>,
}

pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let k = config.n_clusters;
    let n = k * config.samples_per_cluster;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut labels: Vec<usize> = (0..n).map(|i| i / config.samples_per_cluster).collect();
    if !config.temporal_blocks {
        labels.shuffle(&mut rng);
    }

    let noise = Normal::new(0.0, config.blob_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let centres: Vec<Vec<f64>> = (0..k).map(|c| config.centre(c)).collect();
    let mut data = Vec::with_capacity(n * config.d);
    for &l in &labels {
        data.extend(centres[l].iter().map(|&m| m + noise.sample(&mut rng)));
    }
    let main = FeatureMatrix::new(n, config.d, data)?;

    let vocabulary: Vec<String> = (0..k).map(|c| format!("c{c}")).collect();
    let mut aux = Vec::new();
    let mut truth_categorical = Vec::new();
    for (s, spec) in config.categorical.iter().enumerate() {
        let values: Vec<u32> = labels
            .iter()
            .map(|&l| {
                if k == 1 || rng.random::<f64>() < spec.alignment {
                    l as u32
                } else {
                    let other = rng.random_range(0..k - 1);
                    (if other >= l { other + 1 } else { other }) as u32
                }
            })
            .collect();
        let observed = values
            .iter()
            .map(|&v| (rng.random::<f64>() >= spec.missing_fraction).then_some(v))
            .collect();
        aux.push(AuxSource {
            descriptor: SourceDescriptor::categorical(format!("cat{s}"), vocabulary.clone()),
            values: AuxValues::Categorical(observed),
        });
        truth_categorical.push(values);
    }
    for (s, spec) in config.continuous.iter().enumerate() {
        let noise = Normal::new(0.0, spec.sigma).map_err(|e| Error::invalid(e.to_string()))?;
        let values: Vec<Option<f64>> = labels
            .iter()
            .map(|&l| {
                let v = spec.shift * l as f64 + noise.sample(&mut rng);
                (rng.random::<f64>() >= spec.missing_fraction).then_some(v)
            })
            .collect();
        aux.push(AuxSource {
            descriptor: SourceDescriptor::continuous(format!("cont{s}")),
            values: AuxValues::Continuous(values),
        });
    }

    let dataset = MultiSourceDataset::new(
        main,
        (0..config.d).map(|j| format!("f{j}")).collect(),
        aux,
        (0..n).map(|i| 20.0 * i as f64).collect(),
        (0..n).map(|i| format!("s{i:05}")).collect(),
    )?;
    Ok(SynthOutput {
        dataset,
        labels,
        truth_categorical,
    })
}

/// Writes `sample_id,latent,<categorical source>...` with category names.
pub fn write_truth_csv(out: &SynthOutput, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let cats: Vec<&AuxSource> = out
        .dataset
        .aux()
        .iter()
        .filter(|s| matches!(s.values, AuxValues::Categorical(_)))
        .collect();
    let mut header = String::from("sample_id,latent");
    for s in &cats {
        header.push(',');
        header.push_str(&s.descriptor.name);
    }
    let mut body = header + "\n";
    for (i, id) in out.dataset.sample_ids().iter().enumerate() {
        body.push_str(&format!("{id},{}", out.labels[i]));
        for (s, src) in cats.iter().enumerate() {
            body.push(',');
            body.push_str(&src.descriptor.vocabulary[out.truth_categorical[s][i] as usize]);
        }
        body.push('\n');
    }
    w.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Parsed truth CSV: ids, latent labels, and per-column category names.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTable {
    pub ids: Vec<String>,
    pub latent: Vec<usize>,
    pub columns: Vec<(String, Vec<String>)>,
}

pub fn read_truth_csv(path: &Path) -> Result<TruthTable> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::MalformedCsv {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::MalformedCsv {
            path: path.to_path_buf(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.len() < 2 || &headers[0] != "sample_id" || &headers[1] != "latent" {
        return Err(Error::MalformedCsv {
            path: path.to_path_buf(),
            line: 1,
            message: "truth header must start with sample_id,latent".into(),
        });
    }
    let mut table = TruthTable {
        ids: Vec::new(),
        latent: Vec::new(),
        columns: headers.iter().skip(2).map(|h| (h.to_string(), Vec::new())).collect(),
    };
    for (line, rec) in reader.records().enumerate() {
        let bad = |message: String| Error::MalformedCsv {
            path: path.to_path_buf(),
            line: line as u64 + 2,
            message,
        };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        table.ids.push(rec[0].to_string());
        table
            .latent
            .push(rec[1].parse().map_err(|_| bad(format!("bad latent label {:?}", &rec[1])))?);
        for (c, col) in table.columns.iter_mut().enumerate() {
            col.1.push(rec[c + 2].to_string());
        }
    }
    Ok(table)
}
