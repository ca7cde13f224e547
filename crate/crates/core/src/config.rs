//! Flat `key = value` experiment configuration.
//!
//! Config files hold one `key = value` pair per line; `#` starts a comment.
//! The run manifest is written in the same format with every key resolved,
//! so it can be fed back as a config to reproduce a run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::augmentation::KnnConfig;
use crate::data::SbmSpec;
use crate::error::{MqeError, Result};
use crate::estimator::{Ablation, AdamConfig, LogSigmaScale, LossConfig, TrainConfig};
use crate::eval::ProbeConfig;
use crate::noise::{NoiseKind, NoiseSpec};

pub type ConfigMap = BTreeMap<String, String>;

/// Where the graph comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Sbm(SbmSpec),
    Dir(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub out: PathBuf,
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    pub noise: Option<NoiseSpec>,
    pub knn: KnnConfig,
    pub augment: bool,
    pub hops: usize,
    pub dim_f: usize,
    pub dim_h: usize,
    pub train: TrainConfig,
    pub ablation: Ablation,
    pub probe_runs: usize,
    pub probe: ProbeConfig,
    pub train_frac: f64,
    pub val_frac: f64,
    /// Also probe the observed features as a baseline.
    pub probe_raw: bool,
    pub export_stack: bool,
}

/// Every recognised key.
pub const KEYS: &[&str] = &[
    "dataset", "out", "seed", "threads",
    "sbm_n", "sbm_classes", "sbm_p_in", "sbm_p_out", "sbm_d", "sbm_class_sep", "sbm_within_std",
    "noise_kind", "noise_alpha", "noise_beta", "noise_uniform_low", "noise_uniform_high",
    "knn_k", "augment", "hops", "dim_f", "dim_h",
    "lr", "epochs", "adam_beta1", "adam_beta2", "adam_eps", "sigma_floor", "log_sigma",
    "ablation", "probe_runs", "probe_epochs", "probe_lr", "probe_standardize",
    "train_frac", "val_frac", "probe_raw", "export_stack",
];

/// Parses `key = value` lines.
pub fn parse_config_text(text: &str, origin: &Path) -> Result<ConfigMap> {
    let mut map = ConfigMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            MqeError::Config(format!("{}:{}: expected 'key = value'", origin.display(), i + 1))
        })?;
        let key = k.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(MqeError::Config(format!("{}:{}: unknown key '{key}'", origin.display(), i + 1)));
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

pub fn read_config_file(path: &Path) -> Result<ConfigMap> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| MqeError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_text(&text, path)
}

struct Lookup<'a>(&'a ConfigMap);

impl Lookup<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn required(&self, key: &str) -> Result<&str> {
        self.raw(key)
            .ok_or_else(|| MqeError::Config(format!("missing required key '{key}'")))
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| MqeError::Config(format!("key '{key}': cannot parse '{v}': {e}"))),
        }
    }
}

impl ExperimentConfig {
    pub fn from_map(map: &ConfigMap) -> Result<Self> {
        if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(MqeError::Config(format!("unknown key '{k}'")));
        }
        let l = Lookup(map);
        let dataset = l.required("dataset")?;
        let out = PathBuf::from(l.required("out")?);
        let seed = l.get("seed", 0u64)?;
        let source = if dataset == "sbm" {
            let d = SbmSpec::default();
            DataSource::Sbm(SbmSpec {
                n: l.get("sbm_n", d.n)?,
                classes: l.get("sbm_classes", d.classes)?,
                p_in: l.get("sbm_p_in", d.p_in)?,
                p_out: l.get("sbm_p_out", d.p_out)?,
                d: l.get("sbm_d", d.d)?,
                class_sep: l.get("sbm_class_sep", d.class_sep)?,
                within_std: l.get("sbm_within_std", d.within_std)?,
                seed: 0,
            })
        } else {
            DataSource::Dir(PathBuf::from(dataset))
        };
        // Desk-scale synthetic data gets small default dimensions.
        let (f_default, h_default) = match source {
            DataSource::Sbm(_) => (32, 64),
            DataSource::Dir(_) => (256, 512),
        };

        let noise = match l.raw("noise_kind").unwrap_or("none") {
            "none" => None,
            kind => {
                let kind: NoiseKind = kind.parse().map_err(MqeError::Config)?;
                let mut spec = NoiseSpec::new(kind, l.get("noise_alpha", 0.5)?, l.get("noise_beta", 1.0)?, 0);
                spec.uniform_range = (l.get("noise_uniform_low", 0.0)?, l.get("noise_uniform_high", 1.0)?);
                spec.validate()?;
                Some(spec)
            }
        };

        let ablation: Ablation = l.get("ablation", Ablation::None)?;
        let log_sigma = match l.raw("log_sigma").unwrap_or("per-dim") {
            "per-dim" => LogSigmaScale::PerDimension,
            "single" => LogSigmaScale::Single,
            other => {
                return Err(MqeError::Config(format!(
                    "key 'log_sigma': expected per-dim or single, got '{other}'"
                )))
            }
        };
        let base_loss = LossConfig { log_sigma, ..LossConfig::default() };
        let adam_d = AdamConfig::default();
        let train = TrainConfig {
            epochs: l.get("epochs", 1000usize)?,
            adam: AdamConfig {
                lr: l.get("lr", adam_d.lr)?,
                beta1: l.get("adam_beta1", adam_d.beta1)?,
                beta2: l.get("adam_beta2", adam_d.beta2)?,
                eps: l.get("adam_eps", adam_d.eps)?,
            },
            seed: 0,
            sigma_floor: l.get("sigma_floor", crate::estimator::DEFAULT_SIGMA_FLOOR)?,
            loss: ablation.loss_config(base_loss),
        };
        train.validate()?;
        if train.epochs == 0 {
            return Err(MqeError::Config("key 'epochs' must be >= 1".into()));
        }
        let probe_d = ProbeConfig::default();
        let cfg = ExperimentConfig {
            source,
            out,
            seed,
            threads: l.get("threads", 0usize)?,
            noise,
            knn: KnnConfig { k: l.get("knn_k", 5usize)? },
            augment: l.get("augment", true)? && ablation.uses_augmentation(),
            hops: l.get("hops", 8usize)?,
            dim_f: l.get("dim_f", f_default)?,
            dim_h: l.get("dim_h", h_default)?,
            train,
            ablation,
            probe_runs: l.get("probe_runs", 5usize)?,
            probe: ProbeConfig {
                epochs: l.get("probe_epochs", probe_d.epochs)?,
                lr: l.get("probe_lr", probe_d.lr)?,
                standardize: l.get("probe_standardize", probe_d.standardize)?,
                l2_grid: probe_d.l2_grid,
            },
            train_frac: l.get("train_frac", 0.1)?,
            val_frac: l.get("val_frac", 0.1)?,
            probe_raw: l.get("probe_raw", true)?,
            export_stack: l.get("export_stack", false)?,
        };
        if cfg.dim_f == 0 || cfg.dim_h == 0 {
            return Err(MqeError::Config("dim_f and dim_h must be >= 1".into()));
        }
        if cfg.probe_runs == 0 {
            return Err(MqeError::Config("key 'probe_runs' must be >= 1".into()));
        }
        Ok(cfg)
    }

    /// Fully resolved key/value view; `from_map(&c.to_map())` yields `c`.
    pub fn to_map(&self) -> ConfigMap {
        let mut m = ConfigMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        match &self.source {
            DataSource::Sbm(s) => {
                put("dataset", "sbm".into());
                put("sbm_n", s.n.to_string());
                put("sbm_classes", s.classes.to_string());
                put("sbm_p_in", s.p_in.to_string());
                put("sbm_p_out", s.p_out.to_string());
                put("sbm_d", s.d.to_string());
                put("sbm_class_sep", s.class_sep.to_string());
                put("sbm_within_std", s.within_std.to_string());
            }
            DataSource::Dir(p) => put("dataset", p.display().to_string()),
        }
        put("out", self.out.display().to_string());
        put("seed", self.seed.to_string());
        put("threads", self.threads.to_string());
        match &self.noise {
            None => put("noise_kind", "none".into()),
            Some(n) => {
                put("noise_kind", n.kind.name().into());
                put("noise_alpha", n.alpha.to_string());
                put("noise_beta", n.beta.to_string());
                put("noise_uniform_low", n.uniform_range.0.to_string());
                put("noise_uniform_high", n.uniform_range.1.to_string());
            }
        }
        put("knn_k", self.knn.k.to_string());
        put("augment", self.augment.to_string());
        put("hops", self.hops.to_string());
        put("dim_f", self.dim_f.to_string());
        put("dim_h", self.dim_h.to_string());
        put("lr", self.train.adam.lr.to_string());
        put("epochs", self.train.epochs.to_string());
        put("adam_beta1", self.train.adam.beta1.to_string());
        put("adam_beta2", self.train.adam.beta2.to_string());
        put("adam_eps", self.train.adam.eps.to_string());
        put("sigma_floor", self.train.sigma_floor.to_string());
        let log_sigma = match self.train.loss.log_sigma {
            LogSigmaScale::PerDimension => "per-dim",
            LogSigmaScale::Single => "single",
        };
        put("log_sigma", log_sigma.into());
        put("ablation", self.ablation.name().into());
        put("probe_runs", self.probe_runs.to_string());
        put("probe_epochs", self.probe.epochs.to_string());
        put("probe_lr", self.probe.lr.to_string());
        put("probe_standardize", self.probe.standardize.to_string());
        put("train_frac", self.train_frac.to_string());
        put("val_frac", self.val_frac.to_string());
        put("probe_raw", self.probe_raw.to_string());
        put("export_stack", self.export_stack.to_string());
        m
    }
}

/// Renders a map as `key = value` lines in key order.
pub fn render_config(map: &ConfigMap) -> String {
    map.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}
