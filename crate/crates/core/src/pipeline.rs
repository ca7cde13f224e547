//! End-to-end experiment: data → noise → propagation and augmentation →
//! training → probing and noise report → files.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::augmentation::{build_augmented, cosine_knn, KnnConfig};
use crate::config::{render_config, DataSource, ExperimentConfig};
use crate::data::{self, gen_sbm, load_dataset, loss_trace_csv, DatasetBundle};
use crate::error::{MqeError, Result};
use crate::estimator::{train, Ablation, ModelDims, MqeModel, Targets, TrainConfig, TrainOutcome};
use crate::eval::fmt_corr;
use crate::eval::{correlation_report, probe, NoiseReport, ProbeResult, Report, SplitPlan};
use crate::graph::SparseGraph;
use crate::noise::{inject, NoiseGroundTruth, NoiseSpec};
use crate::propagation::{propagate_stack, summed_features, FeatureSet, PropagatedStack};
use crate::rng::{derive_seed, Stream};

pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const MODEL_FILE: &str = "model.bin";
pub const LOSS_TRACE_FILE: &str = "loss_trace.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const MANIFEST_FILE: &str = "manifest.cfg";
pub const NOISE_PAIRS_FILE: &str = "noise_pairs.csv";
pub const TARGETS_FILE: &str = "targets.bin";

/// Sets the size of the global worker pool. Only the first call has effect.
pub fn init_threads(threads: usize) {
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
}

/// Observed data plus the noise ground truth when known.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub bundle: DatasetBundle,
    pub truth: Option<NoiseGroundTruth>,
}

/// Loads or generates the dataset and applies the configured noise. The
/// observed features in the returned bundle are the noisy ones.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let mut bundle = match &cfg.source {
        DataSource::Sbm(spec) => gen_sbm(&data::SbmSpec { seed: derive_seed(cfg.seed, Stream::Sbm), ..*spec })?,
        DataSource::Dir(dir) => load_dataset(dir)?,
    };
    if let Some(spec) = &cfg.noise {
        let spec = NoiseSpec { seed: derive_seed(cfg.seed, Stream::Noise), ..*spec };
        let clean = bundle.clean_features.clone().unwrap_or_else(|| bundle.features.clone());
        let (noisy, truth) = inject(&clean, &spec)?;
        bundle.features = noisy;
        bundle.clean_features = Some(clean);
        bundle.noise_mask = Some(truth.perturbed.clone());
        return Ok(PreparedData { bundle, truth: Some(truth) });
    }
    let truth = bundle.ground_truth()?;
    Ok(PreparedData { bundle, truth })
}

/// Propagation targets and the graph they were propagated on.
#[derive(Debug, Clone)]
pub struct PropagationTargets {
    pub graph: SparseGraph,
    pub stack: PropagatedStack,
    pub augmented: bool,
    pub zero_norm_nodes: Vec<usize>,
}

/// Propagates on `Â`; with augmentation, builds the kNN graph over the
/// summed stack, merges it into `A*` and propagates again on `A*`.
pub fn build_targets(
    graph: &SparseGraph,
    features: &FeatureSet,
    hops: usize,
    augment: Option<KnnConfig>,
) -> Result<PropagationTargets> {
    let a_hat = graph.sym_normalize(true)?;
    let stack = propagate_stack(&a_hat, features, hops)?;
    let Some(knn_cfg) = augment else {
        return Ok(PropagationTargets { graph: a_hat, stack, augmented: false, zero_norm_nodes: vec![] });
    };
    let knn = cosine_knn(&summed_features(&stack), knn_cfg)?;
    let a_star = build_augmented(&a_hat, &knn.graph)?;
    let stack = propagate_stack(&a_star, features, hops)?;
    Ok(PropagationTargets {
        graph: a_star,
        stack,
        augmented: true,
        zero_norm_nodes: knn.zero_norm_nodes,
    })
}

/// Initializes and trains a single-precision model on `stack`.
pub fn fit_model(
    stack: &PropagatedStack,
    dim_f: usize,
    dim_h: usize,
    train_cfg: &TrainConfig,
) -> Result<(MqeModel<f32>, TrainOutcome)> {
    let dims = ModelDims { n: stack.n(), d: stack.d(), f: dim_f, h: dim_h, hops: stack.hops() };
    let mut model = MqeModel::<f32>::init(dims, train_cfg.seed, train_cfg.sigma_floor)?;
    let targets = Targets::<f32>::from_stack(stack);
    let outcome = train(&mut model, &targets, train_cfg)?;
    Ok((model, outcome))
}

pub fn embeddings_f64(model: &MqeModel<f32>) -> Array2<f64> {
    model.embeddings().mapv(f64::from)
}

fn split_plan(cfg: &ExperimentConfig, bundle: &DatasetBundle) -> SplitPlan {
    match &bundle.splits {
        Some(s) => SplitPlan::Fixed(s.clone()),
        None => SplitPlan::Random { train: cfg.train_frac, val: cfg.val_frac },
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub model: MqeModel<f32>,
    pub loss_trace: Vec<f64>,
    pub probe: ProbeResult,
    pub raw_probe: Option<ProbeResult>,
    pub noise: Option<NoiseReport>,
    pub report: Report,
    pub targets: PropagationTargets,
}

/// Runs the full pipeline in memory.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let prepared = prepare_data(cfg)?;
    execute_prepared(cfg, &prepared)
}

/// Runs propagation, training and evaluation on already prepared data.
pub fn execute_prepared(cfg: &ExperimentConfig, prepared: &PreparedData) -> Result<RunOutcome> {
    let bundle = &prepared.bundle;
    let augment = cfg.augment.then_some(cfg.knn);
    let targets = build_targets(&bundle.graph, &bundle.features, cfg.hops, augment)?;

    let train_cfg = TrainConfig { seed: derive_seed(cfg.seed, Stream::Init), ..cfg.train };
    let (model, outcome) = fit_model(&targets.stack, cfg.dim_f, cfg.dim_h, &train_cfg)?;

    let plan = split_plan(cfg, bundle);
    let probe_result = probe(embeddings_f64(&model).view(), &bundle.labels, &plan, cfg.probe_runs, cfg.seed, &cfg.probe)?;
    let raw_probe = if cfg.probe_raw {
        Some(probe(bundle.features.view(), &bundle.labels, &plan, cfg.probe_runs, cfg.seed, &cfg.probe)?)
    } else {
        None
    };
    // The hop-0 estimator is only fitted when every hop is in the loss.
    let noise = match &prepared.truth {
        Some(truth) if cfg.ablation != Ablation::NoMh && truth.intensity.iter().any(|&s| s > 0.0) => {
            Some(correlation_report(&model, truth)?)
        }
        _ => None,
    };

    let report = build_report(cfg, bundle, &targets, &outcome.loss_trace, &probe_result, raw_probe.as_ref(), noise.as_ref());
    Ok(RunOutcome {
        model,
        loss_trace: outcome.loss_trace,
        probe: probe_result,
        raw_probe,
        noise,
        report,
        targets,
    })
}

fn probe_lines(report: &mut Report, prefix: &str, r: &ProbeResult) {
    report
        .set(format!("{prefix}_accuracy_mean"), format!("{:.6}", r.accuracy_mean))
        .set(format!("{prefix}_accuracy_std"), format!("{:.6}", r.accuracy_std))
        .set(format!("{prefix}_runs"), r.runs);
}

fn build_report(
    cfg: &ExperimentConfig,
    bundle: &DatasetBundle,
    targets: &PropagationTargets,
    trace: &[f64],
    probe_result: &ProbeResult,
    raw: Option<&ProbeResult>,
    noise: Option<&NoiseReport>,
) -> Report {
    let mut r = Report::new();
    r.set("nodes", bundle.n())
        .set("edges", bundle.graph.edge_count())
        .set("feature_dim", bundle.features.d())
        .set("classes", bundle.classes())
        .set("ablation", cfg.ablation.name())
        .set("augmentation", if targets.augmented { "applied" } else { "skipped" })
        .set("propagation_graph_entries", targets.graph.nnz())
        .set("knn_zero_norm_nodes", targets.zero_norm_nodes.len())
        .set("hops", cfg.hops)
        .set("epochs", trace.len())
        .set("initial_loss", trace.first().map_or("n/a".into(), |l| format!("{l:.6}")))
        .set("final_loss", trace.last().map_or("n/a".into(), |l| format!("{l:.6}")));
    probe_lines(&mut r, "probe", probe_result);
    if let Some(raw) = raw {
        probe_lines(&mut r, "raw_probe", raw);
    }
    if let Some(nr) = noise {
        r.set("noise_nodes", nr.nodes.len())
            .set("noise_pearson", fmt_corr(nr.pearson))
            .set("noise_spearman", fmt_corr(nr.spearman));
    }
    let mut runs = String::from("run,accuracy,l2\n");
    for (i, (a, l2)) in probe_result.accuracies.iter().zip(&probe_result.chosen_l2).enumerate() {
        runs.push_str(&format!("{i},{a:.6},{l2}\n"));
    }
    r.csv("probe_runs", runs);
    r
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| MqeError::io(path, e))
}

/// Runs the pipeline and writes embeddings, model, loss trace, report,
/// noise pairs and the manifest into `cfg.out`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let outcome = execute(cfg)?;
    let out = &cfg.out;
    fs::create_dir_all(out).map_err(|e| MqeError::io(out, e))?;
    data::save_embeddings(&out.join(EMBEDDINGS_FILE), outcome.model.embeddings())?;
    let model_path = out.join(MODEL_FILE);
    let file = fs::File::create(&model_path).map_err(|e| MqeError::io(&model_path, e))?;
    outcome
        .model
        .write_to(std::io::BufWriter::new(file))
        .map_err(|e| MqeError::io(&model_path, e))?;
    write(&out.join(LOSS_TRACE_FILE), &loss_trace_csv(&outcome.loss_trace))?;
    write(&out.join(REPORT_FILE), &outcome.report.render())?;
    if let Some(nr) = &outcome.noise {
        write(&out.join(NOISE_PAIRS_FILE), &nr.pairs_csv())?;
    }
    if cfg.export_stack {
        let path = out.join(TARGETS_FILE);
        let file = fs::File::create(&path).map_err(|e| MqeError::io(&path, e))?;
        outcome
            .targets
            .stack
            .write_to(std::io::BufWriter::new(file))
            .map_err(|e| MqeError::io(&path, e))?;
    }
    write(&out.join(MANIFEST_FILE), &manifest(cfg, outcome.targets.augmented))?;
    Ok(outcome)
}

/// Resolved config plus the derived component seeds (as comments).
pub fn manifest(cfg: &ExperimentConfig, augmented: bool) -> String {
    let mut text = String::from("# resolved experiment configuration\n");
    text.push_str(&format!(
        "# augmentation: {}\n",
        if augmented { "applied" } else { "skipped" }
    ));
    for (name, stream) in [
        ("sbm", Stream::Sbm),
        ("noise", Stream::Noise),
        ("init", Stream::Init),
        ("splits", Stream::Splits),
        ("probe", Stream::Probe),
    ] {
        text.push_str(&format!("# seed.{name}: {}\n", derive_seed(cfg.seed, stream)));
    }
    text.push_str(&render_config(&cfg.to_map()));
    text
}
