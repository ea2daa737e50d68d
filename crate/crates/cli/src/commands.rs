use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::info;
use msc_core::correlation::{correlation_report, ZeroCooccurrence};
use msc_core::data::{load_dataset, save_dataset, MultiSourceDataset};
use msc_core::eval::{cluster_tag_profiles, mean_entropy, tagging_accuracy, EvalReport, LogBase, SourceEval};
use msc_core::forest::{default_m_try, PseudoMode, SplitKind, TrainConfig};
use msc_core::inference::{assign_hard, Assignment, Inference, TagPrediction};
use msc_core::model::{train_model, MscModel, PipelineConfig};
use msc_core::spectral::ClusterModel;
use msc_core::summary::{summarize, timeline_svg};
use msc_core::synth::{generate, read_truth_csv, write_truth_csv, CategoricalSpec, ContinuousSpec, SynthConfig};
use msc_core::{forest_affinity, knn_sparsify, Error, Result};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::args::{ApplyArgs, Command, CorrelateArgs, EvalArgs, SummarizeArgs, SynthArgs, TrainArgs};
use crate::runlog::RunLog;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Cluster(a) => apply(a, false),
        Command::Tag(a) => apply(a, true),
        Command::Summarize(a) => summarize_cmd(a),
        Command::Correlate(a) => correlate(a),
        Command::Eval(a) => eval(a),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn synth(args: SynthArgs) -> Result<()> {
    let continuous = args
        .continuous
        .iter()
        .map(|spec| {
            let parsed = spec
                .split_once(':')
                .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
            let (shift, sigma) =
                parsed.ok_or_else(|| Error::invalid(format!("continuous source {spec:?} is not shift:sigma")))?;
            Ok(ContinuousSpec {
                shift,
                sigma,
                missing_fraction: args.missing,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let config = SynthConfig {
        n_clusters: args.clusters,
        samples_per_cluster: args.per_cluster,
        d: args.dim,
        blob_separation: args.separation,
        blob_sigma: args.sigma,
        categorical: args
            .alignments
            .iter()
            .map(|&alignment| CategoricalSpec {
                alignment,
                missing_fraction: args.missing,
            })
            .collect(),
        continuous,
        temporal_blocks: args.temporal_blocks,
        seed: args.common.seed,
    };
    let mut log = RunLog::new("synth", &config, config.seed);
    let out = log.time("generate", || generate(&config))?;
    let manifest = log.time("write", || save_dataset(&out.dataset, &args.out))?;
    write_truth_csv(&out, &args.out.join("truth.csv"))?;
    write_file(
        &args.out.join("synth.json"),
        &serde_json::to_string_pretty(&config).expect("config serialises"),
    )?;
    log.set("samples", out.dataset.len());
    log.write(&args.out)?;
    println!("{}", manifest.display());
    Ok(())
}

fn load(path: &Path) -> Result<MultiSourceDataset> {
    let ds = load_dataset(path)?;
    info!("loaded {} samples x {} features, {} sources from {}", ds.len(), ds.dim(), ds.num_sources(), path.display());
    Ok(ds)
}

fn train(args: TrainArgs) -> Result<()> {
    let mut timings = Vec::new();
    let t = std::time::Instant::now();
    let dataset = load(&args.manifest)?;
    timings.push(("load", t.elapsed().as_secs_f64() * 1e3));

    let mut train = TrainConfig::for_dataset(&dataset, args.alpha_v, args.common.seed)?;
    train.n_trees = args.trees;
    train.m_try = args.mtry.unwrap_or_else(|| default_m_try(dataset.dim()));
    train.phi = args.phi;
    if args.oblique {
        train.split_kind = SplitKind::Oblique;
    }
    if args.shared_pseudo {
        train.pseudo_mode = PseudoMode::Shared;
    }
    let pipeline = PipelineConfig {
        train,
        knn_k: args.knn_k,
        k_max: args.kmax,
        n_clusters: args.n_clusters,
    };
    let mut log = RunLog::new(
        "train",
        &json!({ "manifest": args.manifest, "pipeline": pipeline }),
        args.common.seed,
    );
    for (phase, ms) in timings {
        log.phase_ms(phase, ms);
    }
    let (model, phases) = train_model(&dataset, &pipeline)?;
    log.phase_ms("forest", phases.forest_ms);
    log.phase_ms("affinity", phases.affinity_ms);
    log.phase_ms("spectral", phases.spectral_ms);
    log.time("save", || model.save(&args.model))?;
    if let Some(out) = &args.out {
        let sparse = knn_sparsify(&forest_affinity(&model.forest, dataset.main()), model.knn_k)?;
        sparse.write_coo_csv(out)?;
    }
    info!("trained {} trees, {} clusters", model.forest.len(), model.clusters.n_clusters);
    log.set("n_clusters", model.clusters.n_clusters);
    log.set("cluster_sizes", &model.clusters.sizes);
    log.set("knn_k", model.knn_k);
    log.set("eigenvalues", &model.eigenvalues);
    log.forest(&model.forest);
    log.write(&args.model)?;
    Ok(())
}

fn check_dims(model: &MscModel, ds: &MultiSourceDataset) -> Result<()> {
    if ds.dim() != model.forest.dim {
        return Err(Error::invalid(format!(
            "manifest has {} main features, model was trained on {}",
            ds.dim(),
            model.forest.dim
        )));
    }
    Ok(())
}

fn tag_json(tags: &TagPrediction, clusters: &ClusterModel) -> Value {
    let map: serde_json::Map<String, Value> = tags
        .tags
        .iter()
        .zip(&clusters.profiles)
        .map(|(tag, src)| {
            let label = if src.vocabulary.is_empty() {
                src.bin_centre(tag.argmax).map_or(Value::Null, |v| json!(v))
            } else {
                json!(src.vocabulary[tag.argmax])
            };
            (
                tag.source.clone(),
                json!({ "argmax": tag.argmax, "label": label, "distribution": tag.distribution }),
            )
        })
        .collect();
    Value::Object(map)
}

fn apply(args: ApplyArgs, with_tags: bool) -> Result<()> {
    let name = if with_tags { "tag" } else { "cluster" };
    let mut log = RunLog::new(name, &args, args.common.seed);
    let model = log.time("load_model", || MscModel::load(&args.model))?;
    let ds = log.time("load_data", || load(&args.manifest))?;
    check_dims(&model, &ds)?;
    let inf = Inference::new(&model.forest, &model.clusters);
    let lines: Vec<String> = log.time("infer", || {
        (0..ds.len())
            .into_par_iter()
            .map(|i| {
                let x = ds.main().row(i);
                let assignment = if args.hard {
                    let c = assign_hard(&model.clusters, x);
                    let mut votes = vec![0; model.clusters.n_clusters];
                    votes[c] = 1;
                    Assignment {
                        cluster: c,
                        per_tree: vec![c],
                        votes,
                    }
                } else {
                    inf.assign(x)
                };
                let mut line = json!({
                    "sample_id": ds.sample_ids()[i],
                    "cluster": assignment.cluster,
                    "votes": assignment.votes,
                });
                if with_tags {
                    line["tags"] = tag_json(&inf.infer_tags(&assignment), &model.clusters);
                }
                line.to_string()
            })
            .collect()
    });
    let file = fs::File::create(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut w = BufWriter::new(file);
    for line in &lines {
        writeln!(w, "{line}").map_err(|e| Error::io(&args.out, e))?;
    }
    w.flush().map_err(|e| Error::io(&args.out, e))?;
    log.set("samples", lines.len());
    log.forest(&model.forest);
    log.write(&args.out)?;
    Ok(())
}

fn summarize_cmd(args: SummarizeArgs) -> Result<()> {
    let mut log = RunLog::new("summarize", &args, args.common.seed);
    let model = log.time("load_model", || MscModel::load(&args.model))?;
    let ds = log.time("load_data", || load(&args.manifest))?;
    check_dims(&model, &ds)?;
    let k = args.knn_k.unwrap_or(model.knn_k);
    let summary = log.time("summarize", || summarize(&model.forest, &model.clusters, &ds, k))?;
    write_file(&args.out, &(summary.to_json() + "\n"))?;
    let svg = args.out.with_extension("svg");
    write_file(&svg, &timeline_svg(&summary, model.clusters.n_clusters))?;
    log.set("length", summary.length);
    log.set("timeline", svg);
    log.forest(&model.forest);
    log.write(&args.out)?;
    Ok(())
}

fn correlate(args: CorrelateArgs) -> Result<()> {
    let mut log = RunLog::new("correlate", &args, args.common.seed);
    let model = log.time("load_model", || MscModel::load(&args.model))?;
    let policy = if args.exclude_zero {
        ZeroCooccurrence::Exclude
    } else {
        ZeroCooccurrence::CountAsZero
    };
    let sources: Vec<String> = model.sources.iter().map(|s| s.name.clone()).collect();
    if model.forest.trees.iter().all(|t| t.correlation.is_none()) {
        log::warn!("model was trained without correlation logging; all correlations are zero");
    }
    let report = log.time("correlate", || {
        correlation_report(&model.forest, &model.feature_names, &sources, None, policy)
    });
    let psi = if args.symmetric {
        report.psi_symmetrised()
    } else {
        report.psi.clone()
    };
    let names: Vec<&str> = report.groups.iter().map(|g| g.name.as_str()).collect();
    let mut csv = format!("source,{}\n", names.join(","));
    for (name, row) in names.iter().zip(&psi) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        csv.push_str(&format!("{name},{}\n", cells.join(",")));
    }
    write_file(&args.out, &csv)?;
    let mut pairs_path = args.out.clone().into_os_string();
    pairs_path.push(".pairs.json");
    let pairs = json!({
        "groups": names,
        "features": report.features,
        "top_pairs": report.top_pairs(args.top),
        "lambda": report.lambda,
    });
    write_file(Path::new(&pairs_path), &serde_json::to_string_pretty(&pairs).expect("json"))?;
    log.write(&args.out)?;
    Ok(())
}

struct PredictionLine {
    id: String,
    cluster: usize,
    labels: BTreeMap<String, String>,
}

fn read_predictions(path: &Path) -> Result<Vec<PredictionLine>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, message: String| Error::MalformedJson {
        path: path.to_path_buf(),
        message: format!("line {line}: {message}"),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line).map_err(|e| bad(i + 1, e.to_string()))?;
        let id = v["sample_id"].as_str().ok_or_else(|| bad(i + 1, "missing sample_id".into()))?;
        let cluster = v["cluster"].as_u64().ok_or_else(|| bad(i + 1, "missing cluster".into()))? as usize;
        let mut labels = BTreeMap::new();
        if let Some(tags) = v["tags"].as_object() {
            for (source, tag) in tags {
                let label = match &tag["label"] {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                labels.insert(source.clone(), label);
            }
        }
        out.push(PredictionLine {
            id: id.to_string(),
            cluster,
            labels,
        });
    }
    Ok(out)
}

fn eval(args: EvalArgs) -> Result<()> {
    let mut log = RunLog::new("eval", &args, args.common.seed);
    let preds = read_predictions(&args.predictions)?;
    let truth = read_truth_csv(&args.truth)?;
    let index: BTreeMap<&str, usize> = truth.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let rows: Vec<usize> = preds
        .iter()
        .map(|p| {
            index
                .get(p.id.as_str())
                .copied()
                .ok_or_else(|| Error::invalid(format!("prediction for sample {:?} has no ground truth", p.id)))
        })
        .collect::<Result<_>>()?;
    let base = if args.base2 { LogBase::Two } else { LogBase::Natural };
    let n_clusters = preds.iter().map(|p| p.cluster + 1).max().unwrap_or(0);
    let clusters: Vec<usize> = preds.iter().map(|p| p.cluster).collect();

    let mut sources = Vec::new();
    for (name, column) in &truth.columns {
        let truth_labels: Vec<&str> = rows.iter().map(|&r| column[r].as_str()).collect();
        let predicted: Option<Vec<&str>> = preds.iter().map(|p| p.labels.get(name).map(String::as_str)).collect();
        let mut vocab: BTreeSet<&str> = truth_labels.iter().copied().collect();
        if let Some(p) = &predicted {
            vocab.extend(p.iter().copied());
        }
        let vocabulary: Vec<String> = vocab.iter().map(|s| s.to_string()).collect();
        let code = |s: &str| vocab.iter().position(|v| *v == s).expect("label in vocabulary");
        let truth_codes: Vec<Option<u32>> = truth_labels.iter().map(|s| Some(code(s) as u32)).collect();
        let profiles = cluster_tag_profiles(&clusters, &truth_codes, n_clusters, vocab.len());
        let mut sizes = vec![0usize; n_clusters];
        for &c in &clusters {
            sizes[c] += 1;
        }
        let entropy = mean_entropy(&profiles, &sizes, !args.unweighted, base);
        let (accuracy, confusion) = match &predicted {
            Some(p) => {
                let pl: Vec<(String, usize)> = preds.iter().zip(p).map(|(x, s)| (x.id.clone(), code(s))).collect();
                let tl: Vec<(String, usize)> =
                    preds.iter().zip(&truth_labels).map(|(x, s)| (x.id.clone(), code(s))).collect();
                let (acc, cm) = tagging_accuracy(&pl, &tl, vocab.len())?;
                (Some(acc), Some(cm))
            }
            None => (None, None),
        };
        sources.push(SourceEval {
            source: name.clone(),
            vocabulary,
            mean_entropy: Some(entropy),
            accuracy,
            recall: confusion.as_ref().map(|c| c.recall_rows()),
            confusion,
        });
    }
    let report = EvalReport {
        seed: Some(args.common.seed),
        config_hash: Some(log.hash()),
        log_base: base,
        weighted_entropy: !args.unweighted,
        sources,
    };
    write_file(&args.out, &serde_json::to_string_pretty(&report).expect("report serialises"))?;
    log.set("samples", preds.len());
    log.write(&args.out)?;
    Ok(())
}
