use std::fmt::Write as _;

use super::stats::{pearson, spearman};
use crate::error::{MqeError, Result};
use crate::estimator::{MqeModel, Real};
use crate::noise::NoiseGroundTruth;

/// Estimated hop-0 standard deviation against true noise intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseReport {
    /// `σ_i^(0)` for every node.
    pub sigma0: Vec<f64>,
    /// True intensity `s_i` for every node.
    pub s_true: Vec<f64>,
    /// Nodes with `s_i > 0`, over which the correlations are computed.
    pub nodes: Vec<usize>,
    /// `None` when undefined (constant input).
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
}

impl NoiseReport {
    /// `node,s_true,sigma0` rows for the perturbed nodes.
    pub fn pairs_csv(&self) -> String {
        let mut out = String::from("node,s_true,sigma0\n");
        for &i in &self.nodes {
            let _ = writeln!(out, "{i},{:.6},{:.6}", self.s_true[i], self.sigma0[i]);
        }
        out
    }
}

/// Correlates `σ^(0)` from `model` with the intensity of perturbed nodes.
pub fn correlation_report<T: Real>(model: &MqeModel<T>, truth: &NoiseGroundTruth) -> Result<NoiseReport> {
    let est = model.forward(0)?;
    if est.sigma.len() != truth.intensity.len() {
        return Err(MqeError::Eval(format!(
            "model has {} nodes but ground truth has {}",
            est.sigma.len(),
            truth.intensity.len()
        )));
    }
    let sigma0: Vec<f64> = est.sigma.iter().map(|s| s.to_f64().unwrap()).collect();
    let nodes: Vec<usize> = (0..sigma0.len()).filter(|&i| truth.intensity[i] > 0.0).collect();
    if nodes.is_empty() {
        return Err(MqeError::Eval("no perturbed nodes to correlate".into()));
    }
    let s: Vec<f64> = nodes.iter().map(|&i| truth.intensity[i]).collect();
    let g: Vec<f64> = nodes.iter().map(|&i| sigma0[i]).collect();
    Ok(NoiseReport {
        pearson: pearson(&g, &s),
        spearman: spearman(&g, &s),
        sigma0,
        s_true: truth.intensity.clone(),
        nodes,
    })
}

/// Structured text document: `key: value` lines followed by named CSV
/// blocks delimited by `[csv NAME]` and `[/csv]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, String)>,
    blocks: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn csv(&mut self, name: impl Into<String>, body: impl Into<String>) -> &mut Self {
        self.blocks.push((name.into(), body.into()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}: {v}");
        }
        for (name, body) in &self.blocks {
            let _ = writeln!(out, "\n[csv {name}]");
            out.push_str(body);
            if !body.ends_with('\n') {
                out.push('\n');
            }
            out.push_str("[/csv]\n");
        }
        out
    }

    /// Parses the `key: value` section of a rendered report.
    pub fn parse_entries(text: &str) -> Vec<(String, String)> {
        text.lines()
            .take_while(|l| !l.starts_with("[csv"))
            .filter_map(|l| l.split_once(": "))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }
}

/// Formats an optional correlation, printing `undefined` for `None`.
pub(crate) fn fmt_corr(c: Option<f64>) -> String {
    c.map_or_else(|| "undefined".to_string(), |v| format!("{v:.6}"))
}
