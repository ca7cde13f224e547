//! Dataset directories, the SBM benchmark generator and binary exports.
//!
//! A dataset directory holds plain-text files:
//!
//! | file | content |
//! |---|---|
//! | `edges.txt` | one `u v` pair of 0-based node ids per line, `#` comments |
//! | `features.txt` | one node per line, `d` reals; optional `#n d` header |
//! | `labels.txt` | one class id per line |
//! | `clean_features.txt` | optional, same format as `features.txt` |
//! | `noise_mask.txt` | optional, `0`/`1` per line |
//! | `intensity.txt` | optional, one real per line |
//! | `splits.txt` | optional, `train:`/`val:`/`test:` index lines |

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{MqeError, Result};
use crate::eval::Splits;
use crate::graph::SparseGraph;
use crate::noise::{self, NoiseGroundTruth};
use crate::propagation::FeatureSet;
use crate::rng::stream_rng;

pub const EDGES_FILE: &str = "edges.txt";
pub const FEATURES_FILE: &str = "features.txt";
pub const LABELS_FILE: &str = "labels.txt";
pub const CLEAN_FEATURES_FILE: &str = "clean_features.txt";
pub const NOISE_MASK_FILE: &str = "noise_mask.txt";
pub const INTENSITY_FILE: &str = "intensity.txt";
pub const SPLITS_FILE: &str = "splits.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    /// Raw binary adjacency.
    pub graph: SparseGraph,
    /// Observed (possibly noisy) features.
    pub features: FeatureSet,
    pub labels: Vec<usize>,
    pub clean_features: Option<FeatureSet>,
    pub noise_mask: Option<Vec<bool>>,
    pub splits: Option<Splits>,
}

impl DatasetBundle {
    pub fn n(&self) -> usize {
        self.features.n()
    }

    pub fn classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |&c| c + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.graph.n() != n || self.labels.len() != n {
            return Err(MqeError::Data(format!(
                "inconsistent node counts: graph {}, features {n}, labels {}",
                self.graph.n(),
                self.labels.len()
            )));
        }
        self.graph.check_invariants()?;
        if let Some(clean) = &self.clean_features {
            if clean.n() != n || clean.d() != self.features.d() {
                return Err(MqeError::Data("clean features differ in shape from features".into()));
            }
        }
        if let Some(mask) = &self.noise_mask {
            if mask.len() != n {
                return Err(MqeError::Data(format!("noise mask has {} entries for {n} nodes", mask.len())));
            }
        }
        if let Some(splits) = &self.splits {
            splits.validate(n)?;
        }
        Ok(())
    }

    /// Noise ground truth, available when clean features are known.
    pub fn ground_truth(&self) -> Result<Option<NoiseGroundTruth>> {
        let Some(clean) = &self.clean_features else {
            return Ok(None);
        };
        let intensity = noise::intensity(clean, &self.features)?;
        let perturbed = match &self.noise_mask {
            Some(mask) => mask.clone(),
            None => intensity.iter().map(|&s| s > 0.0).collect(),
        };
        Ok(Some(NoiseGroundTruth { perturbed, intensity, clean: clean.clone() }))
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| MqeError::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> MqeError {
    MqeError::Parse { file: path.to_path_buf(), line, msg: msg.into() }
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub fn read_edge_list(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read_text(path)?;
    data_lines(&text)
        .map(|(no, line)| {
            let mut it = line.split_whitespace();
            let mut next = || -> Result<usize> {
                let tok = it.next().ok_or_else(|| parse_err(path, no, "expected two node ids"))?;
                tok.parse().map_err(|_| parse_err(path, no, format!("invalid node id '{tok}'")))
            };
            let (u, v) = (next()?, next()?);
            if it.next().is_some() {
                return Err(parse_err(path, no, "expected exactly two node ids"));
            }
            Ok((u, v))
        })
        .collect()
}

pub fn read_features(path: &Path) -> Result<FeatureSet> {
    let text = read_text(path)?;
    let mut header: Option<(usize, usize)> = None;
    if let Some((no, first)) = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).find(|(_, l)| !l.is_empty()) {
        if let Some(rest) = first.strip_prefix('#') {
            let dims: Vec<&str> = rest.split_whitespace().collect();
            if let [n, d] = dims[..] {
                let parse = |t: &str| t.parse::<usize>().map_err(|_| parse_err(path, no, "invalid '#n d' header"));
                header = Some((parse(n)?, parse(d)?));
            }
        }
    }
    let mut values = Vec::new();
    let mut n = 0usize;
    let mut d: Option<usize> = header.map(|h| h.1);
    for (no, line) in data_lines(&text) {
        let before = values.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(path, no, format!("invalid number '{tok}'")))?;
            if !v.is_finite() {
                return Err(parse_err(path, no, format!("non-finite feature '{tok}'")));
            }
            values.push(v);
        }
        let count = values.len() - before;
        match d {
            Some(expected) if expected != count => {
                return Err(parse_err(path, no, format!("expected {expected} values, found {count}")))
            }
            None => d = Some(count),
            _ => {}
        }
        n += 1;
    }
    let d = d.unwrap_or(0);
    if let Some((hn, _)) = header {
        if hn != n {
            return Err(parse_err(path, 1, format!("header declares {hn} rows, file has {n}")));
        }
    }
    let arr = Array2::from_shape_vec((n, d), values).map_err(|e| MqeError::Data(e.to_string()))?;
    FeatureSet::new(arr)
}

fn read_column<T: std::str::FromStr>(path: &Path, what: &str) -> Result<Vec<T>> {
    let text = read_text(path)?;
    data_lines(&text)
        .map(|(no, line)| {
            line.parse::<T>()
                .map_err(|_| parse_err(path, no, format!("invalid {what} '{line}'")))
        })
        .collect()
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    read_column(path, "class id")
}

pub fn read_values(path: &Path) -> Result<Vec<f64>> {
    read_column(path, "value")
}

pub fn read_mask(path: &Path) -> Result<Vec<bool>> {
    let raw: Vec<u8> = read_column(path, "mask flag")?;
    raw.iter()
        .enumerate()
        .map(|(i, &v)| match v {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(MqeError::Data(format!("{}: entry {} is not 0/1", path.display(), i + 1))),
        })
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| MqeError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| MqeError::io(path, e))
}

pub fn write_edge_list(path: &Path, graph: &SparseGraph) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| MqeError::io(path, e);
    for (u, v) in graph.edge_pairs() {
        writeln!(w, "{u} {v}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes features with a `#n d` header; values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_features(path: &Path, x: &FeatureSet) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| MqeError::io(path, e);
    writeln!(w, "#{} {}", x.n(), x.d()).map_err(io)?;
    for row in x.as_array().rows() {
        let items: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", items.join(" ")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_column<T: std::fmt::Display>(path: &Path, values: &[T]) -> Result<()> {
    let mut text = String::with_capacity(values.len() * 4);
    for v in values {
        text.push_str(&v.to_string());
        text.push('\n');
    }
    write_text(path, &text)
}

pub fn write_mask(path: &Path, mask: &[bool]) -> Result<()> {
    let flags: Vec<u8> = mask.iter().map(|&b| b as u8).collect();
    write_column(path, &flags)
}

pub fn load_dataset(dir: &Path) -> Result<DatasetBundle> {
    let file = |name: &str| -> PathBuf { dir.join(name) };
    let features = read_features(&file(FEATURES_FILE))?;
    let n = features.n();
    let edges_path = file(EDGES_FILE);
    let pairs = read_edge_list(&edges_path)?;
    let graph = SparseGraph::from_edge_list(n, &pairs).map_err(|_| {
        let (idx, _) = pairs
            .iter()
            .enumerate()
            .find(|(_, &(u, v))| u >= n || v >= n)
            .expect("an out-of-range edge");
        MqeError::Data(format!(
            "{}: edge #{} {:?} references a node >= {n}",
            edges_path.display(),
            idx + 1,
            pairs[idx]
        ))
    })?;
    let labels = read_labels(&file(LABELS_FILE))?;
    if labels.len() != n {
        return Err(MqeError::Data(format!(
            "{}: {} labels for {n} nodes",
            file(LABELS_FILE).display(),
            labels.len()
        )));
    }
    let optional = |name: &str| Some(file(name)).filter(|p| p.exists());
    let clean_features = optional(CLEAN_FEATURES_FILE).map(|p| read_features(&p)).transpose()?;
    let noise_mask = optional(NOISE_MASK_FILE).map(|p| read_mask(&p)).transpose()?;
    let splits = optional(SPLITS_FILE)
        .map(|p| read_text(&p).and_then(|t| Splits::parse(&t)))
        .transpose()?;
    let bundle = DatasetBundle { graph, features, labels, clean_features, noise_mask, splits };
    bundle.validate()?;
    Ok(bundle)
}

/// Writes every present member of `bundle` into `dir`, creating it if
/// needed. Intensity is written whenever clean features are known.
pub fn save_dataset(dir: &Path, bundle: &DatasetBundle) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| MqeError::io(dir, e))?;
    write_edge_list(&dir.join(EDGES_FILE), &bundle.graph)?;
    write_features(&dir.join(FEATURES_FILE), &bundle.features)?;
    write_column(&dir.join(LABELS_FILE), &bundle.labels)?;
    if let Some(clean) = &bundle.clean_features {
        write_features(&dir.join(CLEAN_FEATURES_FILE), clean)?;
    }
    if let Some(mask) = &bundle.noise_mask {
        write_mask(&dir.join(NOISE_MASK_FILE), mask)?;
    }
    if let Some(truth) = bundle.ground_truth()? {
        write_column(&dir.join(INTENSITY_FILE), &truth.intensity)?;
    }
    if let Some(splits) = &bundle.splits {
        write_text(&dir.join(SPLITS_FILE), &splits.to_text())?;
    }
    Ok(())
}

/// Planted-partition benchmark parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbmSpec {
    pub n: usize,
    pub classes: usize,
    /// Edge probability within a class.
    pub p_in: f64,
    /// Edge probability across classes.
    pub p_out: f64,
    pub d: usize,
    /// Expected L2 norm of each class mean.
    pub class_sep: f64,
    /// Per-entry standard deviation around the class mean.
    pub within_std: f64,
    pub seed: u64,
}

impl Default for SbmSpec {
    fn default() -> Self {
        SbmSpec {
            n: 600,
            classes: 3,
            p_in: 0.05,
            p_out: 0.005,
            d: 64,
            class_sep: 1.0,
            within_std: 0.5,
            seed: 0,
        }
    }
}

impl SbmSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.p_out && self.p_out <= self.p_in && self.p_in <= 1.0) {
            return Err(MqeError::Config(format!(
                "SBM needs 0 <= p_out <= p_in <= 1 (p_in = {}, p_out = {})",
                self.p_in, self.p_out
            )));
        }
        if self.classes == 0 || self.n < self.classes || self.d == 0 {
            return Err(MqeError::Config("SBM needs n >= classes >= 1 and d >= 1".into()));
        }
        if !(self.class_sep >= 0.0 && self.within_std >= 0.0) {
            return Err(MqeError::Config("SBM class_sep and within_std must be >= 0".into()));
        }
        Ok(())
    }
}

const ROW_STREAMS: u64 = 1 << 32;
const FEATURE_STREAMS: u64 = 2 << 32;

/// Generates a planted-partition graph with Gaussian class-conditional
/// features. Class sizes are balanced; each class mean has i.i.d.
/// `N(0, class_sep²/d)` entries, so its norm is about `class_sep`.
pub fn gen_sbm(spec: &SbmSpec) -> Result<DatasetBundle> {
    spec.validate()?;
    let (n, d) = (spec.n, spec.d);
    let mut labels: Vec<usize> = (0..n).map(|i| i % spec.classes).collect();
    labels.shuffle(&mut stream_rng(spec.seed, 0));

    let mut mean_rng = stream_rng(spec.seed, 1);
    let scale = spec.class_sep / (d as f64).sqrt();
    let means = Array2::from_shape_fn((spec.classes, d), |_| {
        let e: f64 = StandardNormal.sample(&mut mean_rng);
        scale * e
    });

    let mut pairs = Vec::new();
    for i in 0..n {
        let mut rng = stream_rng(spec.seed, ROW_STREAMS + i as u64);
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { spec.p_in } else { spec.p_out };
            if rng.random::<f64>() < p {
                pairs.push((i, j));
            }
        }
    }
    let graph = SparseGraph::from_edge_list(n, &pairs)?;

    let mut x = Array2::<f64>::zeros((n, d));
    for (i, mut row) in x.rows_mut().into_iter().enumerate() {
        let mut rng = stream_rng(spec.seed, FEATURE_STREAMS + i as u64);
        for (v, &m) in row.iter_mut().zip(means.row(labels[i])) {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v = m + spec.within_std * e;
        }
    }
    let features = FeatureSet::new(x)?;
    Ok(DatasetBundle {
        graph,
        clean_features: Some(features.clone()),
        features,
        labels,
        noise_mask: None,
        splits: None,
    })
}

/// Embedding file: `(n, f)` as little-endian u64, then `n·f` little-endian
/// f32 in row-major order.
pub fn write_embeddings<W: Write>(mut w: W, z: &Array2<f32>) -> std::io::Result<()> {
    w.write_all(&(z.nrows() as u64).to_le_bytes())?;
    w.write_all(&(z.ncols() as u64).to_le_bytes())?;
    for v in z.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

pub fn read_embeddings<R: Read>(mut r: R) -> Result<Array2<f32>> {
    let mut head = [0u8; 16];
    r.read_exact(&mut head).map_err(|e| MqeError::Data(format!("embedding file: {e}")))?;
    let n = u64::from_le_bytes(head[..8].try_into().unwrap()) as usize;
    let f = u64::from_le_bytes(head[8..].try_into().unwrap()) as usize;
    let mut buf = vec![0u8; n * f * 4];
    r.read_exact(&mut buf).map_err(|e| MqeError::Data(format!("embedding file: {e}")))?;
    let vals = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((n, f), vals).map_err(|e| MqeError::Data(e.to_string()))
}

pub fn save_embeddings(path: &Path, z: &Array2<f32>) -> Result<()> {
    write_embeddings(create(path)?, z).map_err(|e| MqeError::io(path, e))
}

pub fn load_embeddings(path: &Path) -> Result<Array2<f32>> {
    read_embeddings(fs::File::open(path).map_err(|e| MqeError::io(path, e))?)
}

/// `epoch,loss` CSV.
pub fn loss_trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (epoch, loss) in trace.iter().enumerate() {
        out.push_str(&format!("{epoch},{loss}\n"));
    }
    out
}
