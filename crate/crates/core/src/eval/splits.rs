use rand::seq::SliceRandom;

use crate::error::{MqeError, Result};
use crate::rng::stream_rng;

/// Disjoint train / validation / test node indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    /// Random split of `0..n`: `round(train_frac·n)` training nodes,
    /// `round(val_frac·n)` validation nodes, the rest for testing.
    pub fn random(n: usize, train_frac: f64, val_frac: f64, seed: u64, run: u64) -> Result<Self> {
        if !(train_frac > 0.0 && val_frac >= 0.0 && train_frac + val_frac < 1.0) {
            return Err(MqeError::Config(format!(
                "invalid split fractions {train_frac}/{val_frac}"
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut stream_rng(seed, run));
        let n_train = (train_frac * n as f64).round() as usize;
        let n_val = (val_frac * n as f64).round() as usize;
        let test = idx.split_off((n_train + n_val).min(n));
        let val = idx.split_off(n_train.min(idx.len()));
        Ok(Splits { train: idx, val, test })
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n {
                return Err(MqeError::Data(format!("split index {i} out of range for {n} nodes")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(MqeError::Data(format!("node {i} appears in more than one split")));
            }
        }
        if self.train.is_empty() || self.test.is_empty() {
            return Err(MqeError::Data("train and test splits must be nonempty".into()));
        }
        Ok(())
    }

    /// Three lines `train: …`, `val: …`, `test: …` of space-separated indices.
    pub fn to_text(&self) -> String {
        let line = |name: &str, v: &[usize]| {
            let items: Vec<String> = v.iter().map(|i| i.to_string()).collect();
            format!("{name}: {}\n", items.join(" "))
        };
        line("train", &self.train) + &line("val", &self.val) + &line("test", &self.test)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut parts: [Option<Vec<usize>>; 3] = [None, None, None];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, rest) = line
                .split_once(':')
                .ok_or_else(|| MqeError::Data(format!("split line {}: missing ':'", lineno + 1)))?;
            let slot = match key.trim() {
                "train" => 0,
                "val" => 1,
                "test" => 2,
                other => {
                    return Err(MqeError::Data(format!("split line {}: unknown key '{other}'", lineno + 1)))
                }
            };
            let idx = rest
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| MqeError::Data(format!("split line {}: {e}", lineno + 1)))?;
            parts[slot] = Some(idx);
        }
        let [train, val, test] = parts;
        let missing = |name: &str| MqeError::Data(format!("split file lacks '{name}:' line"));
        Ok(Splits {
            train: train.ok_or_else(|| missing("train"))?,
            val: val.ok_or_else(|| missing("val"))?,
            test: test.ok_or_else(|| missing("test"))?,
        })
    }
}

/// Where probe splits come from.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitPlan {
    /// The same splits for every run.
    Fixed(Splits),
    /// Fresh random splits per run.
    Random { train: f64, val: f64 },
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan::Random { train: 0.1, val: 0.1 }
    }
}

impl SplitPlan {
    pub fn splits_for_run(&self, n: usize, seed: u64, run: u64) -> Result<Splits> {
        let splits = match self {
            SplitPlan::Fixed(s) => s.clone(),
            SplitPlan::Random { train, val } => Splits::random(n, *train, *val, seed, run)?,
        };
        splits.validate(n)?;
        Ok(splits)
    }
}
