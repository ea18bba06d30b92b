//! Datasets: synthetic prototype tasks, delimited time series, IDX images,
//! precomputed feature files and stratified splitting.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, LittleEndian, ReadBytesExt};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitVector;
use crate::encode::InputEncoder;
use crate::error::{Error, Result};
use crate::train::stream;

/// Raw real-valued samples. Each sample is `steps` frames of `width`
/// values; labels are dense `0..classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub values: Vec<f32>,
    pub labels: Vec<usize>,
    pub steps: usize,
    pub width: usize,
    /// Original label value of each dense class index.
    pub label_names: Vec<i64>,
}

impl Dataset {
    pub fn new(
        values: Vec<f32>,
        labels: Vec<usize>,
        steps: usize,
        width: usize,
        label_names: Vec<i64>,
    ) -> Result<Self> {
        if values.len() != labels.len() * steps * width {
            return Err(Error::Data(format!(
                "{} values do not fill {} samples of {steps}×{width}",
                values.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= label_names.len()) {
            return Err(Error::Data(format!("label index {bad} out of range")));
        }
        Ok(Self {
            values,
            labels,
            steps,
            width,
            label_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let n = self.steps * self.width;
        &self.values[i * n..(i + 1) * n]
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.steps * self.width);
        for &i in indices {
            values.extend_from_slice(self.sample(i));
        }
        Self {
            values,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            steps: self.steps,
            width: self.width,
            label_names: self.label_names.clone(),
        }
    }

    /// Re-expresses labels against another label table, e.g. the training
    /// set's. Unknown labels are an error.
    pub fn relabel(&self, names: &[i64]) -> Result<Self> {
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                let v = self.label_names[l];
                names
                    .iter()
                    .position(|&n| n == v)
                    .ok_or_else(|| Error::Data(format!("unknown label {v}")))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            labels,
            label_names: names.to_vec(),
            ..self.clone()
        })
    }

    /// Encodes every frame of every sample.
    pub fn encode(&self, encoder: &InputEncoder<f32>) -> Result<BinaryDataset> {
        let samples = (0..self.len())
            .map(|i| {
                self.sample(i)
                    .chunks(self.width)
                    .map(|f| encoder.encode_frame(f))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        BinaryDataset::new(samples, self.labels.clone(), self.classes())
    }
}

/// Encoded samples: each a sequence of ±1 frames (one frame for MLPs).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryDataset {
    samples: Vec<Vec<BitVector>>,
    labels: Vec<usize>,
    classes: usize,
}

impl BinaryDataset {
    pub fn new(samples: Vec<Vec<BitVector>>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} samples but {} labels",
                samples.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Data(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        if let Some(first) = samples.first() {
            let shape: Vec<usize> = first.iter().map(BitVector::len).collect();
            if samples
                .iter()
                .any(|s| s.len() != shape.len() || s.iter().zip(&shape).any(|(f, &w)| f.len() != w))
            {
                return Err(Error::Data("samples have inconsistent shapes".into()));
            }
        }
        Ok(Self {
            samples,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn steps(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn width(&self) -> usize {
        self.samples
            .first()
            .and_then(|s| s.first())
            .map_or(0, BitVector::len)
    }

    #[inline]
    pub fn sample(&self, i: usize) -> (&[BitVector], usize) {
        (&self.samples[i], self.labels[i])
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }
}

/// Random Prototypes task: noisy copies of `classes` random ±1 vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrototypeTaskConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub input_dim: usize,
    pub classes: usize,
    pub flip_p: f64,
    /// Frames per sample; 1 gives the feedforward task, more gives a
    /// prototype-sequence task where each class owns `steps` frames.
    pub steps: usize,
    pub seed: u64,
}

impl Default for PrototypeTaskConfig {
    fn default() -> Self {
        Self {
            n_train: 20_000,
            n_test: 3_000,
            input_dim: 1000,
            classes: 10,
            flip_p: 0.46,
            steps: 1,
            seed: 0,
        }
    }
}

const STREAM_PROTOTYPES: u64 = 100;
const STREAM_TRAIN: u64 = 101;
const STREAM_TEST: u64 = 102;

/// Draws the prototypes, then the train and test samples from disjoint
/// streams.
pub fn gen_random_prototypes(cfg: &PrototypeTaskConfig) -> Result<(BinaryDataset, BinaryDataset)> {
    if cfg.classes < 2 {
        return Err(Error::Config("need at least two classes".into()));
    }
    if cfg.input_dim == 0 || cfg.steps == 0 {
        return Err(Error::Config(
            "input dimension and steps must be positive".into(),
        ));
    }
    if !(0.0..=1.0).contains(&cfg.flip_p) {
        return Err(Error::Config(format!(
            "flip probability {} not in [0, 1]",
            cfg.flip_p
        )));
    }
    let mut rng = stream(cfg.seed, STREAM_PROTOTYPES);
    let prototypes: Vec<Vec<BitVector>> = (0..cfg.classes)
        .map(|_| {
            (0..cfg.steps)
                .map(|_| BitVector::random(cfg.input_dim, &mut rng))
                .collect()
        })
        .collect();
    let draw = |n: usize, mut rng: ChaCha8Rng| {
        let mut samples = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let c = rng.random_range(0..cfg.classes);
            let seq = prototypes[c]
                .iter()
                .map(|p| {
                    let mut x = p.clone();
                    for i in 0..x.len() {
                        if rng.random_bool(cfg.flip_p) {
                            x.flip(i);
                        }
                    }
                    x
                })
                .collect();
            samples.push(seq);
            labels.push(c);
        }
        BinaryDataset::new(samples, labels, cfg.classes)
    };
    Ok((
        draw(cfg.n_train, stream(cfg.seed, STREAM_TRAIN))?,
        draw(cfg.n_test, stream(cfg.seed, STREAM_TEST))?,
    ))
}

/// Which field of a delimited row holds the label.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelColumn {
    #[default]
    First,
    Last,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DelimitedOptions {
    /// Trailing frames kept per series; `None` keeps the longest length.
    pub window: Option<usize>,
    pub label_column: LabelColumn,
    /// Field separator; `None` splits on runs of whitespace.
    pub separator: Option<char>,
    /// Values per time step.
    pub frame_width: usize,
}

impl Default for DelimitedOptions {
    fn default() -> Self {
        Self {
            window: None,
            label_column: LabelColumn::First,
            separator: None,
            frame_width: 1,
        }
    }
}

/// One series per line: a label and `steps·frame_width` values.
///
/// Every series is cut to its last `T` frames, `T = min(window, longest)`;
/// shorter ones are left-padded by repeating their first frame. Labels are
/// remapped densely in ascending order.
pub fn load_delimited_series(path: &Path, opts: &DelimitedOptions) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let fw = opts.frame_width;
    if fw == 0 || opts.window == Some(0) {
        return Err(Error::Config(
            "frame width and window must be positive".into(),
        ));
    }
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut rows: Vec<(i64, Vec<f32>)> = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = match opts.separator {
            Some(c) => trimmed.split(c).map(str::trim).collect(),
            None => trimmed.split_whitespace().collect(),
        };
        if fields.len() < 2 {
            return Err(parse_err(
                line_no,
                "expected a label and at least one value".into(),
            ));
        }
        let (label, values) = match opts.label_column {
            LabelColumn::First => (fields[0], &fields[1..]),
            LabelColumn::Last => (fields[fields.len() - 1], &fields[..fields.len() - 1]),
        };
        let label =
            parse_label(label).ok_or_else(|| parse_err(line_no, format!("bad label {label:?}")))?;
        let values = values
            .iter()
            .map(|v| {
                v.parse::<f32>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| parse_err(line_no, format!("bad value {v:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() % fw != 0 {
            return Err(parse_err(
                line_no,
                format!(
                    "{} values is not a multiple of frame width {fw}",
                    values.len()
                ),
            ));
        }
        rows.push((label, values));
    }
    let longest = rows.iter().map(|r| r.1.len() / fw).max().unwrap_or(0);
    let steps = opts.window.map_or(longest, |w| w.min(longest));
    let mut names: Vec<i64> = rows.iter().map(|r| r.0).collect();
    names.sort_unstable();
    names.dedup();
    let mut values = Vec::with_capacity(rows.len() * steps * fw);
    let mut labels = Vec::with_capacity(rows.len());
    for (label, series) in &rows {
        let len = series.len() / fw;
        if len >= steps {
            values.extend_from_slice(&series[(len - steps) * fw..]);
        } else {
            for _ in 0..steps - len {
                values.extend_from_slice(&series[..fw]);
            }
            values.extend_from_slice(series);
        }
        labels.push(names.binary_search(label).expect("label collected"));
    }
    Dataset::new(values, labels, steps, fw, names)
}

fn parse_label(s: &str) -> Option<i64> {
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    let f = s.parse::<f64>().ok()?;
    (f.fract() == 0.0 && f.abs() < 1e15).then_some(f as i64)
}

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

fn idx_header(r: &mut impl Read, path: &Path, magic: u32, dims: usize) -> Result<Vec<usize>> {
    let bad = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg,
    };
    let got = r
        .read_u32::<BigEndian>()
        .map_err(|_| bad("truncated header".into()))?;
    if got != magic {
        return Err(bad(format!(
            "bad magic {got:#010x}, expected {magic:#010x}"
        )));
    }
    (0..dims)
        .map(|_| {
            r.read_u32::<BigEndian>()
                .map(|d| d as usize)
                .map_err(|_| bad("truncated header".into()))
        })
        .collect()
}

/// IDX image and label files; each image becomes one frame of 0–255
/// pixel values.
pub fn load_idx_images(images: &Path, labels: &Path) -> Result<Dataset> {
    let mut img = BufReader::new(File::open(images).map_err(|e| Error::io(images, e))?);
    let dims = idx_header(&mut img, images, IDX_IMAGES, 3)?;
    let mut lab = BufReader::new(File::open(labels).map_err(|e| Error::io(labels, e))?);
    let count = idx_header(&mut lab, labels, IDX_LABELS, 1)?[0];
    let (n, width) = (dims[0], dims[1] * dims[2]);
    if n != count {
        return Err(Error::Data(format!("{n} images but {count} labels")));
    }
    let mut pixels = vec![0u8; n * width];
    img.read_exact(&mut pixels).map_err(|_| Error::Parse {
        path: images.to_path_buf(),
        line: 0,
        msg: "truncated pixel data".into(),
    })?;
    let mut raw = vec![0u8; n];
    lab.read_exact(&mut raw).map_err(|_| Error::Parse {
        path: labels.to_path_buf(),
        line: 0,
        msg: "truncated label data".into(),
    })?;
    let classes = raw.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
    Dataset::new(
        pixels.into_iter().map(f32::from).collect(),
        raw.into_iter().map(usize::from).collect(),
        1,
        width,
        (0..classes as i64).collect(),
    )
}

/// Shape and labels for a flat little-endian `f32` feature file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub rows: usize,
    pub cols: usize,
    pub labels: Vec<i64>,
}

/// Loads `path` together with its JSON sidecar `path.json`.
pub fn load_feature_file(path: &Path) -> Result<Dataset> {
    let mut sidecar_path = path.as_os_str().to_owned();
    sidecar_path.push(".json");
    let sidecar_path = PathBuf::from(sidecar_path);
    let text = std::fs::read_to_string(&sidecar_path).map_err(|e| Error::io(&sidecar_path, e))?;
    let meta: FeatureSidecar = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: sidecar_path.clone(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    if meta.labels.len() != meta.rows {
        return Err(Error::Data(format!(
            "sidecar lists {} labels for {} rows",
            meta.labels.len(),
            meta.rows
        )));
    }
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut values = vec![0f32; meta.rows * meta.cols];
    r.read_f32_into::<LittleEndian>(&mut values)
        .map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: "feature file shorter than its sidecar says".into(),
        })?;
    let mut names = meta.labels.clone();
    names.sort_unstable();
    names.dedup();
    let labels = meta
        .labels
        .iter()
        .map(|l| names.binary_search(l).expect("label collected"))
        .collect();
    Dataset::new(values, labels, 1, meta.cols, names)
}

/// Stratified seeded split: each class contributes `round(fraction·n_c)`
/// samples to the first part, keeping at least one on each side when the
/// class has two or more. Indices are returned in ascending order.
pub fn split_indices(
    labels: &[usize],
    classes: usize,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "split fraction {fraction} not in (0, 1)"
        )));
    }
    if labels.len() < 2 {
        return Err(Error::Data("need at least two samples to split".into()));
    }
    let mut rng = stream(seed, STREAM_SPLIT);
    let mut first = Vec::new();
    let mut second = Vec::new();
    for c in 0..classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(&mut rng);
        let n = idx.len();
        let mut k = (fraction * n as f64).round() as usize;
        if n >= 2 {
            k = k.clamp(1, n - 1);
        }
        first.extend_from_slice(&idx[..k]);
        second.extend_from_slice(&idx[k..]);
    }
    if first.is_empty() || second.is_empty() {
        return Err(Error::Data("split leaves one side empty".into()));
    }
    first.sort_unstable();
    second.sort_unstable();
    Ok((first, second))
}

const STREAM_SPLIT: u64 = 103;

pub fn split(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (a, b) = split_indices(&data.labels, data.classes(), fraction, seed)?;
    Ok((data.subset(&a), data.subset(&b)))
}
