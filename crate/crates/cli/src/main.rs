use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use mqe_core::config::{read_config_file, ConfigMap, ExperimentConfig};
use mqe_core::data::{self, gen_sbm, load_dataset, save_dataset, SbmSpec};
use mqe_core::estimator::MqeModel;
use mqe_core::eval::{correlation_report, hop_sweep, probe, sweep_csv, ProbeConfig, Report, SplitPlan};
use mqe_core::noise::{inject, NoiseKind, NoiseSpec};
use mqe_core::pipeline::{self, build_targets, fit_model, init_threads};
use mqe_core::{MqeError, Result};

#[derive(Parser)]
#[command(name = "mqe", version, about = "Noise-resilient unsupervised node embeddings")]
struct Cli {
    /// Worker threads for parallel stages (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full experiment from a config file and/or flags.
    Run(RunArgs),
    /// Generate a planted-partition dataset directory.
    GenSbm(GenSbmArgs),
    /// Perturb the features of a dataset directory.
    InjectNoise(NoiseArgs),
    /// Train a model and export embeddings.
    Train(TrainArgs),
    /// Linear-probe node classification on embeddings or raw features.
    Probe(ProbeArgs),
    /// Correlate a model's hop-0 σ with known noise intensity.
    Estimate(EstimateArgs),
    /// Probe accuracy of every propagation hop.
    HopSweep(SweepArgs),
}

/// Experiment keys settable from the command line; they override the
/// config file.
#[derive(Args, Default)]
struct Overrides {
    /// Dataset directory, or `sbm`.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    hops: Option<usize>,
    #[arg(long)]
    dim_f: Option<usize>,
    #[arg(long)]
    dim_h: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// none, no-aug, no-mh or no-reg.
    #[arg(long)]
    ablation: Option<String>,
    #[arg(long)]
    knn_k: Option<usize>,
    #[arg(long)]
    no_augment: bool,
    /// Any other key, as KEY=VALUE. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Overrides {
    fn apply(&self, map: &mut ConfigMap) -> Result<()> {
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                map.insert(k.to_string(), v);
            }
        };
        put("dataset", self.dataset.clone());
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("hops", self.hops.map(|v| v.to_string()));
        put("dim_f", self.dim_f.map(|v| v.to_string()));
        put("dim_h", self.dim_h.map(|v| v.to_string()));
        put("lr", self.lr.map(|v| v.to_string()));
        put("epochs", self.epochs.map(|v| v.to_string()));
        put("ablation", self.ablation.clone());
        put("knn_k", self.knn_k.map(|v| v.to_string()));
        if self.no_augment {
            put("augment", Some("false".into()));
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| MqeError::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            map.insert(k.trim().replace('-', "_"), v.trim().to_string());
        }
        Ok(())
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct GenSbmArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = SbmSpec::default().n)]
    n: usize,
    #[arg(long, default_value_t = SbmSpec::default().classes)]
    classes: usize,
    #[arg(long, default_value_t = SbmSpec::default().p_in)]
    p_in: f64,
    #[arg(long, default_value_t = SbmSpec::default().p_out)]
    p_out: f64,
    #[arg(long, default_value_t = SbmSpec::default().d)]
    d: usize,
    #[arg(long, default_value_t = SbmSpec::default().class_sep)]
    class_sep: f64,
    #[arg(long, default_value_t = SbmSpec::default().within_std)]
    within_std: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct NoiseArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// normal or uniform.
    #[arg(long, default_value = "normal")]
    kind: String,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Embedding file; raw features are probed when omitted.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Dataset with clean features (and optionally the noise mask).
    #[arg(long)]
    dataset: PathBuf,
    /// Write per-node `node,s_true,sigma0` pairs here.
    #[arg(long)]
    pairs: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 8)]
    hops: usize,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn resolve_config(config: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut map = match config {
        Some(path) => read_config_file(path)?,
        None => ConfigMap::new(),
    };
    overrides.apply(&mut map)?;
    ExperimentConfig::from_map(&map)
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| MqeError::io(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn plan_for(bundle: &data::DatasetBundle) -> SplitPlan {
    bundle.splits.clone().map_or_else(SplitPlan::default, SplitPlan::Fixed)
}

fn run(args: &RunArgs, threads: usize) -> Result<()> {
    let mut cfg = resolve_config(args.config.as_deref(), &args.overrides)?;
    if threads > 0 {
        cfg.threads = threads;
    }
    init_threads(cfg.threads);
    let outcome = pipeline::run_experiment(&cfg)?;
    info!("outputs written to {}", cfg.out.display());
    print!("{}", outcome.report.render());
    Ok(())
}

fn gen(args: &GenSbmArgs) -> Result<()> {
    let spec = SbmSpec {
        n: args.n,
        classes: args.classes,
        p_in: args.p_in,
        p_out: args.p_out,
        d: args.d,
        class_sep: args.class_sep,
        within_std: args.within_std,
        seed: args.seed,
    };
    let mut bundle = gen_sbm(&spec)?;
    // A clean dataset carries no ground truth until noise is injected.
    bundle.clean_features = None;
    save_dataset(&args.out, &bundle)?;
    println!("nodes: {}\nedges: {}\nclasses: {}", bundle.n(), bundle.graph.edge_count(), bundle.classes());
    Ok(())
}

fn inject_noise(args: &NoiseArgs) -> Result<()> {
    let kind: NoiseKind = args.kind.parse().map_err(MqeError::Config)?;
    let spec = NoiseSpec::new(kind, args.alpha, args.beta, args.seed);
    spec.validate()?;
    let mut bundle = load_dataset(&args.input)?;
    let clean = bundle.clean_features.take().unwrap_or_else(|| bundle.features.clone());
    let (noisy, truth) = inject(&clean, &spec)?;
    bundle.features = noisy;
    bundle.clean_features = Some(clean);
    bundle.noise_mask = Some(truth.perturbed.clone());
    save_dataset(&args.out, &bundle)?;
    println!("perturbed: {}", truth.perturbed.iter().filter(|&&p| p).count());
    Ok(())
}

fn train_cmd(args: &TrainArgs, threads: usize) -> Result<()> {
    let mut cfg = resolve_config(args.config.as_deref(), &args.overrides)?;
    if threads > 0 {
        cfg.threads = threads;
    }
    init_threads(cfg.threads);
    let prepared = pipeline::prepare_data(&cfg)?;
    let augment = cfg.augment.then_some(cfg.knn);
    let targets = build_targets(&prepared.bundle.graph, &prepared.bundle.features, cfg.hops, augment)?;
    let train_cfg = mqe_core::estimator::TrainConfig {
        seed: mqe_core::rng::derive_seed(cfg.seed, mqe_core::rng::Stream::Init),
        ..cfg.train
    };
    let (model, outcome) = fit_model(&targets.stack, cfg.dim_f, cfg.dim_h, &train_cfg)?;
    let out = &cfg.out;
    std::fs::create_dir_all(out).map_err(|e| MqeError::io(out, e))?;
    data::save_embeddings(&out.join(pipeline::EMBEDDINGS_FILE), model.embeddings())?;
    let model_path = out.join(pipeline::MODEL_FILE);
    let file = std::fs::File::create(&model_path).map_err(|e| MqeError::io(&model_path, e))?;
    model
        .write_to(std::io::BufWriter::new(file))
        .map_err(|e| MqeError::io(&model_path, e))?;
    let trace_path = out.join(pipeline::LOSS_TRACE_FILE);
    std::fs::write(&trace_path, data::loss_trace_csv(&outcome.loss_trace)).map_err(|e| MqeError::io(&trace_path, e))?;
    let manifest_path = out.join(pipeline::MANIFEST_FILE);
    std::fs::write(&manifest_path, pipeline::manifest(&cfg, targets.augmented))
        .map_err(|e| MqeError::io(&manifest_path, e))?;
    println!(
        "augmentation: {}\nepochs: {}\nfinal_loss: {:.6}",
        if targets.augmented { "applied" } else { "skipped" },
        outcome.loss_trace.len(),
        outcome.loss_trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn probe_cmd(args: &ProbeArgs) -> Result<()> {
    let bundle = load_dataset(&args.dataset)?;
    let x = match &args.embeddings {
        Some(path) => data::load_embeddings(path)?.mapv(f64::from),
        None => bundle.features.as_array().clone(),
    };
    let r = probe(x.view(), &bundle.labels, &plan_for(&bundle), args.runs, args.seed, &ProbeConfig::default())?;
    let mut report = Report::new();
    report
        .set("input", if args.embeddings.is_some() { "embeddings" } else { "raw_features" })
        .set("accuracy_mean", format!("{:.6}", r.accuracy_mean))
        .set("accuracy_std", format!("{:.6}", r.accuracy_std))
        .set("runs", r.runs)
        .set("summary", format!("{:.2} ± {:.2}", 100.0 * r.accuracy_mean, 100.0 * r.accuracy_std));
    emit(&report.render(), args.out.as_deref())
}

fn estimate(args: &EstimateArgs) -> Result<()> {
    let file = std::fs::File::open(&args.model).map_err(|e| MqeError::io(&args.model, e))?;
    let model = MqeModel::<f32>::read_from(std::io::BufReader::new(file))?;
    let bundle = load_dataset(&args.dataset)?;
    let truth = bundle
        .ground_truth()?
        .ok_or_else(|| MqeError::Data(format!("{} has no clean features", args.dataset.display())))?;
    let nr = correlation_report(&model, &truth)?;
    let fmt = |c: Option<f64>| c.map_or_else(|| "undefined".to_string(), |v| format!("{v:.6}"));
    let mut report = Report::new();
    report
        .set("noise_nodes", nr.nodes.len())
        .set("pearson", fmt(nr.pearson))
        .set("spearman", fmt(nr.spearman));
    print!("{}", report.render());
    if let Some(path) = &args.pairs {
        std::fs::write(path, nr.pairs_csv()).map_err(|e| MqeError::io(path, e))?;
    }
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let bundle = load_dataset(&args.dataset)?;
    let g = bundle.graph.sym_normalize(true)?;
    let results = hop_sweep(
        &g,
        &bundle.features,
        &bundle.labels,
        &plan_for(&bundle),
        args.hops,
        args.runs,
        args.seed,
        &ProbeConfig::default(),
    )?;
    emit(&sweep_csv(&results), args.out.as_deref())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run(a) => run(a, cli.threads),
        Command::Train(a) => train_cmd(a, cli.threads),
        other => {
            init_threads(cli.threads);
            match other {
                Command::GenSbm(a) => gen(a),
                Command::InjectNoise(a) => inject_noise(a),
                Command::Probe(a) => probe_cmd(a),
                Command::Estimate(a) => estimate(a),
                Command::HopSweep(a) => sweep(a),
                Command::Run(_) | Command::Train(_) => unreachable!(),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.module());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
