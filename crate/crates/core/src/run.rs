//! Run orchestration behind the command-line verbs: configuration,
//! data preparation, the epoch loop with metrics and checkpoints,
//! evaluation, sweeps, frame construction and synthetic data export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bep::{Hyperparams, Network};
use crate::beptt::{RnnDims, RnnModel};
use crate::checkpoint::{peek_bits, Checkpoint, Model, ModelKind};
use crate::data::{
    gen_random_prototypes, load_delimited_series, load_feature_file, load_idx_images, split,
    split_indices, BinaryDataset, Dataset, DelimitedOptions, PrototypeTaskConfig,
};
use crate::encode::{CodecSpec, InputEncoder};
use crate::error::{Error, Result};
use crate::frames::{search_frame, FrameSearchConfig, PrototypeFrame};
use crate::scalar::Stability;
use crate::train::{evaluate, train_epoch, EvalReport, TrainState, Trainable};

/// Calls `$f::<S>(args)` with the narrowest weight type holding `B` bits.
macro_rules! dispatch_bits {
    ($bits:expr, $f:ident ( $($arg:expr),* $(,)? )) => {
        match $bits {
            0..=8 => $f::<i8>($($arg),*),
            9..=16 => $f::<i16>($($arg),*),
            17..=32 => $f::<i32>($($arg),*),
            _ => $f::<i64>($($arg),*),
        }
    };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub kind: ModelKind,
    /// Feedforward: `K_1..K_L`. Recurrent: `[K_s]`.
    pub layers: Vec<usize>,
    /// Recurrent output width `K_y`; defaults to `K_s`.
    pub output_dim: Option<usize>,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Fraction of the training set held out for validation; 0 disables.
    pub validation_fraction: f64,
    pub hyper: Hyperparams,
    pub encoder: EncoderConfig,
    pub data: DataConfig,
    pub frame: FrameConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Mlp,
            layers: vec![256, 256],
            output_dim: None,
            seed: 0,
            out_dir: None,
            validation_fraction: 0.0,
            hyper: Hyperparams::default(),
            encoder: EncoderConfig::default(),
            data: DataConfig::Prototypes(PrototypeTaskConfig::default()),
            frame: FrameConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub codec: CodecSpec,
    pub expansion: Option<ExpansionConfig>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            codec: CodecSpec::Median,
            expansion: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansionConfig {
    pub dim: usize,
    /// Defaults to the run seed.
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataConfig {
    /// Generated in memory; already binary, so the encoder is unused.
    Prototypes(PrototypeTaskConfig),
    Delimited {
        train: PathBuf,
        test: PathBuf,
        #[serde(default)]
        options: DelimitedOptions,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    Features {
        train: PathBuf,
        test: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", deny_unknown_fields)]
pub enum FrameConfig {
    Search {
        #[serde(default = "default_alpha")]
        alpha: f64,
        /// Defaults to `200·C·D`.
        iterations: Option<u64>,
        /// Defaults to the run seed.
        seed: Option<u32>,
    },
    Load {
        path: PathBuf,
    },
}

fn default_alpha() -> f64 {
    FrameSearchConfig::DEFAULT_ALPHA
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig::Search {
            alpha: default_alpha(),
            iterations: None,
            seed: None,
        }
    }
}

impl RunConfig {
    /// Parses TOML text, then applies `key.path=value` overrides.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        // a partial table keeps the default variant
        for (section, tag, default) in [
            ("data", "source", "prototypes"),
            ("frame", "method", "search"),
        ] {
            if let Some(toml::Value::Table(t)) = table.get_mut(section) {
                t.entry(tag).or_insert_with(|| default.into());
            }
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.layers.is_empty() || self.layers.contains(&0) {
            return Err(Error::Config(
                "layer sizes must be positive and non-empty".into(),
            ));
        }
        if self.kind == ModelKind::Rnn && self.layers.len() != 1 {
            return Err(Error::Config(
                "recurrent models take a single state width".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(
                "validation_fraction must be in [0, 1)".into(),
            ));
        }
        if !(2..=64).contains(&self.hyper.bits) {
            return Err(Error::Config(format!(
                "B={} not in 2..=64",
                self.hyper.bits
            )));
        }
        Ok(())
    }

    fn frame_dim(&self) -> usize {
        match self.kind {
            ModelKind::Mlp => *self.layers.last().expect("validated"),
            ModelKind::Rnn => self.output_dim.unwrap_or(self.layers[0]),
        }
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut parts: Vec<&str> = key.trim().split('.').collect();
    let last = parts.pop().expect("split yields one part");
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{key}: {p} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Encoded data ready for training.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub train: BinaryDataset,
    pub validation: Option<BinaryDataset>,
    pub test: BinaryDataset,
    pub encoder: Option<InputEncoder<f32>>,
}

fn load_raw(cfg: &DataConfig) -> Result<(Dataset, Dataset)> {
    let (train, test) = match cfg {
        DataConfig::Prototypes(_) => unreachable!("binary source"),
        DataConfig::Delimited {
            train,
            test,
            options,
        } => (
            load_delimited_series(train, options)?,
            load_delimited_series(test, options)?,
        ),
        DataConfig::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } => (
            load_idx_images(train_images, train_labels)?,
            load_idx_images(test_images, test_labels)?,
        ),
        DataConfig::Features { train, test } => {
            (load_feature_file(train)?, load_feature_file(test)?)
        }
    };
    if train.width != test.width {
        return Err(Error::Data(format!(
            "train width {} differs from test width {}",
            train.width, test.width
        )));
    }
    let mut test = test.relabel(&train.label_names)?;
    if test.steps != train.steps {
        // series loaders window each file on its own; align test to train
        test = realign_steps(&test, train.steps);
    }
    Ok((train, test))
}

fn realign_steps(d: &Dataset, steps: usize) -> Dataset {
    let w = d.width;
    let mut values = Vec::with_capacity(d.len() * steps * w);
    for i in 0..d.len() {
        let s = d.sample(i);
        if d.steps >= steps {
            values.extend_from_slice(&s[(d.steps - steps) * w..]);
        } else {
            for _ in 0..steps - d.steps {
                values.extend_from_slice(&s[..w]);
            }
            values.extend_from_slice(s);
        }
    }
    Dataset {
        values,
        steps,
        ..d.clone()
    }
}

fn flatten_steps(d: Dataset) -> Dataset {
    Dataset {
        width: d.steps * d.width,
        steps: 1,
        ..d
    }
}

/// Loads and encodes the configured data. A given `encoder` is reused;
/// otherwise one is fitted on the training part only.
pub fn prepare(cfg: &RunConfig, encoder: Option<&InputEncoder<f32>>) -> Result<PreparedData> {
    if let DataConfig::Prototypes(p) = &cfg.data {
        let (train, test) = gen_random_prototypes(p)?;
        let (train, validation) = if cfg.validation_fraction > 0.0 {
            let (a, b) = split_indices(
                train.labels(),
                train.classes(),
                1.0 - cfg.validation_fraction,
                cfg.seed,
            )?;
            (train.subset(&a), Some(train.subset(&b)))
        } else {
            (train, None)
        };
        return Ok(PreparedData {
            train,
            validation,
            test,
            encoder: None,
        });
    }
    let (mut train_raw, mut test_raw) = load_raw(&cfg.data)?;
    if cfg.kind == ModelKind::Mlp {
        // a feedforward model sees a whole series as one frame
        train_raw = flatten_steps(train_raw);
        test_raw = flatten_steps(test_raw);
    }
    if train_raw.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let (train_raw, val_raw) = if cfg.validation_fraction > 0.0 {
        let (a, b) = split(&train_raw, 1.0 - cfg.validation_fraction, cfg.seed)?;
        (a, Some(b))
    } else {
        (train_raw, None)
    };
    let encoder = match encoder {
        Some(e) => {
            if e.raw_width() != train_raw.width {
                return Err(Error::dim(
                    "checkpoint encoder width",
                    e.raw_width(),
                    train_raw.width,
                ));
            }
            e.clone()
        }
        None => InputEncoder::fit(
            cfg.encoder.codec,
            &train_raw.values,
            train_raw.width,
            cfg.encoder
                .expansion
                .as_ref()
                .map(|x| (x.dim, x.seed.unwrap_or(cfg.seed))),
        )?,
    };
    Ok(PreparedData {
        train: train_raw.encode(&encoder)?,
        validation: val_raw.map(|v| v.encode(&encoder)).transpose()?,
        test: test_raw.encode(&encoder)?,
        encoder: Some(encoder),
    })
}

pub fn build_frame(cfg: &RunConfig, classes: usize) -> Result<PrototypeFrame> {
    let dim = cfg.frame_dim();
    let frame = match &cfg.frame {
        FrameConfig::Search {
            alpha,
            iterations,
            seed,
        } => {
            let mut fc =
                FrameSearchConfig::with_defaults(classes, dim, seed.unwrap_or(cfg.seed as u32));
            fc.alpha = *alpha;
            if let Some(it) = iterations {
                fc.iterations = *it;
            }
            search_frame(&fc)?
        }
        FrameConfig::Load { path } => {
            let f = File::open(path).map_err(|e| Error::io(path, e))?;
            PrototypeFrame::read_from(std::io::BufReader::new(f))?
        }
    };
    if frame.classes() != classes || frame.dim() != dim {
        return Err(Error::Config(format!(
            "frame is {}×{}, run needs {classes}×{dim}",
            frame.classes(),
            frame.dim()
        )));
    }
    Ok(frame)
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Misclassification rate during the training pass; absent at epoch 0.
    pub train_error: Option<f64>,
    pub validation_correct: u64,
    pub validation_total: u64,
    pub validation_accuracy: f64,
    pub test_accuracy: f64,
    pub triggered: u64,
    pub updates: Vec<u64>,
    pub saturated: u64,
    pub reinforced: u64,
    pub group_sizes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub records: Vec<EpochRecord>,
    /// `(correct, total, epoch)` of the best validation score.
    pub best_validation: (u64, u64, usize),
    pub final_test: EvalReport,
}

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

/// Trains per `cfg`, writing artifacts to `cfg.out_dir` when set.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let data = prepare(cfg, None)?;
    train_prepared(cfg, &data)
}

pub fn train_prepared(cfg: &RunConfig, data: &PreparedData) -> Result<TrainSummary> {
    dispatch_bits!(cfg.hyper.bits, train_typed(cfg, data))
}

fn train_typed<S: Stability>(cfg: &RunConfig, data: &PreparedData) -> Result<TrainSummary> {
    let frame = build_frame(cfg, data.train.classes())?;
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let resolved = dir.join("config.toml");
        std::fs::write(&resolved, cfg.to_toml()?).map_err(|e| Error::io(&resolved, e))?;
    }
    match cfg.kind {
        ModelKind::Mlp => {
            if data.train.steps() != 1 {
                return Err(Error::Config(format!(
                    "feedforward model needs single-frame samples, data has {} steps",
                    data.train.steps()
                )));
            }
            let mut net = Network::<S>::new(
                data.train.width(),
                &cfg.layers,
                frame,
                cfg.hyper.clone(),
                cfg.seed,
            )?;
            epoch_loop(&mut net, |m| Model::Mlp(m.clone()), cfg, data)
        }
        ModelKind::Rnn => {
            let dims = RnnDims {
                input: data.train.width(),
                state: cfg.layers[0],
                output: cfg.frame_dim(),
            };
            let mut rnn = RnnModel::<S>::new(dims, frame, cfg.hyper.clone(), cfg.seed)?;
            epoch_loop(&mut rnn, |m| Model::Rnn(m.clone()), cfg, data)
        }
    }
}

fn save_checkpoint<S: Stability>(
    path: &Path,
    model: Model<S>,
    data: &PreparedData,
    state: &TrainState,
    best: (u64, u64, usize),
) -> Result<()> {
    let (train, rng_positions) = Checkpoint::<S>::snapshot_state(state, Some(best));
    Checkpoint {
        model,
        encoder: data.encoder.clone(),
        train,
        rng_positions,
    }
    .save(path)
}

fn epoch_loop<S: Stability, M: Trainable<Scalar = S>>(
    model: &mut M,
    wrap: impl Fn(&M) -> Model<S>,
    cfg: &RunConfig,
    data: &PreparedData,
) -> Result<TrainSummary> {
    let mut state = TrainState::new(model, cfg.seed)?;
    let val_set = data.validation.as_ref().unwrap_or(&data.train);
    let out = cfg.out_dir.as_deref();
    let mut log = match out {
        Some(d) => {
            let p = d.join(METRICS_FILE);
            Some((
                BufWriter::new(File::create(&p).map_err(|e| Error::io(&p, e))?),
                p,
            ))
        }
        None => None,
    };
    let mut records = Vec::with_capacity(cfg.hyper.epochs + 1);
    let mut emit = |rec: EpochRecord, records: &mut Vec<EpochRecord>| -> Result<()> {
        if let Some((w, p)) = log.as_mut() {
            let line = serde_json::to_string(&rec).map_err(|e| Error::Invariant(e.to_string()))?;
            writeln!(w, "{line}").map_err(|e| Error::io(&*p, e))?;
        }
        records.push(rec);
        Ok(())
    };

    let v = evaluate(model, val_set)?;
    let mut test = evaluate(model, &data.test)?;
    let mut best = (v.correct, v.total, 0);
    if let Some(d) = out {
        save_checkpoint(&d.join(BEST_CHECKPOINT), wrap(model), data, &state, best)?;
    }
    emit(
        EpochRecord {
            epoch: 0,
            train_error: None,
            validation_correct: v.correct,
            validation_total: v.total,
            validation_accuracy: v.accuracy(),
            test_accuracy: test.accuracy(),
            triggered: 0,
            updates: Vec::new(),
            saturated: 0,
            reinforced: 0,
            group_sizes: state.schedule.group_sizes(),
        },
        &mut records,
    )?;

    for _ in 0..cfg.hyper.epochs {
        let m = train_epoch(model, &data.train, &mut state)?;
        let v = evaluate(model, val_set)?;
        match data.validation {
            Some(_) => state.record_accuracy(v.correct, v.total),
            None => state.record_accuracy(m.train_correct, m.samples),
        };
        test = evaluate(model, &data.test)?;
        if (v.correct as u128) * (best.1 as u128) > (best.0 as u128) * (v.total as u128) {
            best = (v.correct, v.total, m.epoch);
            if let Some(d) = out {
                save_checkpoint(&d.join(BEST_CHECKPOINT), wrap(model), data, &state, best)?;
            }
        }
        emit(
            EpochRecord {
                epoch: m.epoch,
                train_error: Some(m.train_error),
                validation_correct: v.correct,
                validation_total: v.total,
                validation_accuracy: v.accuracy(),
                test_accuracy: test.accuracy(),
                triggered: m.triggered,
                updates: m.updates,
                saturated: m.saturated,
                reinforced: m.reinforced,
                group_sizes: m.group_sizes,
            },
            &mut records,
        )?;
    }
    if let Some((mut w, p)) = log {
        w.flush().map_err(|e| Error::io(&p, e))?;
    }
    if let Some(d) = out {
        save_checkpoint(&d.join(FINAL_CHECKPOINT), wrap(model), data, &state, best)?;
    }
    Ok(TrainSummary {
        records,
        best_validation: best,
        final_test: test,
    })
}

/// Which part of the configured data to evaluate on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

/// Evaluates a checkpoint on the configured data, encoded with the
/// checkpoint's own encoder.
pub fn cmd_eval(checkpoint: &Path, cfg: &RunConfig, which: SplitName) -> Result<EvalReport> {
    let bytes = std::fs::read(checkpoint).map_err(|e| Error::io(checkpoint, e))?;
    dispatch_bits!(peek_bits(&bytes)?, eval_typed(&bytes, cfg, which))
}

fn eval_typed<S: Stability>(bytes: &[u8], cfg: &RunConfig, which: SplitName) -> Result<EvalReport> {
    let ck = Checkpoint::<S>::from_bytes(bytes)?;
    let data = prepare(cfg, ck.encoder.as_ref())?;
    let set = match which {
        SplitName::Train => &data.train,
        SplitName::Test => &data.test,
        SplitName::Validation => data
            .validation
            .as_ref()
            .ok_or_else(|| Error::Config("no validation split configured".into()))?,
    };
    match &ck.model {
        Model::Mlp(m) => evaluate(m, set),
        Model::Rnn(m) => evaluate(m, set),
    }
}

/// A sweepable quantity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Nu,
    R,
    PR,
    ThermometerBits,
    Gamma0,
    Window,
    Horizon,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Nu => "nu",
            Axis::R => "r",
            Axis::PR => "p_r",
            Axis::ThermometerBits => "bits",
            Axis::Gamma0 => "gamma0",
            Axis::Window => "window",
            Axis::Horizon => "horizon",
        }
    }

    fn apply(self, cfg: &mut RunConfig, v: f64) -> Result<()> {
        let whole = || -> Result<usize> {
            if v < 1.0 || v.fract() != 0.0 {
                return Err(Error::Config(format!(
                    "{} needs a positive integer, got {v}",
                    self.name()
                )));
            }
            Ok(v as usize)
        };
        match self {
            Axis::Nu => cfg.hyper.nu = v,
            Axis::R => cfg.hyper.r = v,
            Axis::PR => cfg.hyper.p_r = v,
            Axis::ThermometerBits => cfg.encoder.codec = CodecSpec::Thermometer { bits: whole()? },
            Axis::Gamma0 => cfg.hyper.gamma0 = vec![whole()?],
            Axis::Horizon => cfg.hyper.horizon = Some(whole()?),
            Axis::Window => match &mut cfg.data {
                DataConfig::Delimited { options, .. } => options.window = Some(whole()?),
                _ => {
                    return Err(Error::Config(
                        "window axis needs delimited series data".into(),
                    ))
                }
            },
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AxisSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
}

impl std::str::FromStr for AxisSpec {
    type Err = Error;

    /// `name=v1,v2,…`
    fn from_str(s: &str) -> Result<Self> {
        let (name, vals) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("axis {s:?} is not name=v1,v2,...")))?;
        let axis = match name.trim() {
            "nu" => Axis::Nu,
            "r" => Axis::R,
            "p_r" | "pr" => Axis::PR,
            "bits" | "thermometer_bits" => Axis::ThermometerBits,
            "gamma0" => Axis::Gamma0,
            "window" => Axis::Window,
            "horizon" => Axis::Horizon,
            other => return Err(Error::Config(format!("unknown sweep axis {other:?}"))),
        };
        let values = vals
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad axis value {v:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.is_empty() {
            return Err(Error::Config("axis has no values".into()));
        }
        Ok(Self { axis, values })
    }
}

/// One row of the sweep table.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub point: Vec<f64>,
    pub test_accuracy: Vec<f64>,
    pub best_validation: Vec<f64>,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs the cross product of `axes` for seeds `base..base+seeds`.
pub fn cmd_sweep(base: &RunConfig, axes: &[AxisSpec], seeds: u64) -> Result<Vec<SweepRow>> {
    if axes.is_empty() || axes.len() > 2 {
        return Err(Error::Config("sweep takes one or two axes".into()));
    }
    if seeds == 0 {
        return Err(Error::Config("sweep needs at least one seed".into()));
    }
    let mut points: Vec<Vec<f64>> = vec![vec![]];
    for a in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                a.values.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    let mut rows = Vec::with_capacity(points.len());
    for point in points {
        let mut test_accuracy = Vec::new();
        let mut best_validation = Vec::new();
        for k in 0..seeds {
            let mut cfg = base.clone();
            cfg.out_dir = None;
            cfg.seed = base.seed + k;
            for (a, &v) in axes.iter().zip(&point) {
                a.axis.apply(&mut cfg, v)?;
            }
            let s = cmd_train(&cfg)?;
            test_accuracy.push(s.final_test.accuracy());
            best_validation.push(s.best_validation.0 as f64 / s.best_validation.1.max(1) as f64);
        }
        rows.push(SweepRow {
            point,
            test_accuracy,
            best_validation,
        });
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(w: W, axes: &[AxisSpec], rows: &[SweepRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| Error::Invariant(e.to_string());
    let mut header: Vec<String> = axes.iter().map(|a| a.axis.name().to_string()).collect();
    header.extend(
        [
            "seeds",
            "test_mean",
            "test_std",
            "validation_mean",
            "validation_std",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    out.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let (tm, ts) = mean_std(&r.test_accuracy);
        let (vm, vs) = mean_std(&r.best_validation);
        let mut rec: Vec<String> = r.point.iter().map(|v| v.to_string()).collect();
        rec.push(r.test_accuracy.len().to_string());
        rec.extend([tm, ts, vm, vs].iter().map(|x| format!("{x:.6}")));
        out.write_record(&rec).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::Invariant(e.to_string()))
}

/// Searches a frame and writes it as a standalone frame file.
pub fn cmd_make_frame(config: &FrameSearchConfig, out: &Path) -> Result<PrototypeFrame> {
    let frame = search_frame(config)?;
    let f = File::create(out).map_err(|e| Error::io(out, e))?;
    let mut w = BufWriter::new(f);
    frame.write_to(&mut w).map_err(|e| Error::io(out, e))?;
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(frame)
}

/// Writes the prototype task as comma-separated `train.csv` and
/// `test.csv`: label first, then the ±1 values of every frame.
pub fn cmd_gen_data(cfg: &PrototypeTaskConfig, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let (train, test) = gen_random_prototypes(cfg)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, d: &BinaryDataset| -> Result<PathBuf> {
        let p = dir.join(name);
        let f = File::create(&p).map_err(|e| Error::io(&p, e))?;
        let mut w = BufWriter::new(f);
        for i in 0..d.len() {
            let (frames, label) = d.sample(i);
            let mut line = label.to_string();
            for f in frames {
                for v in f.iter_pm1() {
                    line.push(',');
                    line.push_str(if v > 0 { "1" } else { "-1" });
                }
            }
            writeln!(w, "{line}").map_err(|e| Error::io(&p, e))?;
        }
        w.flush().map_err(|e| Error::io(&p, e))?;
        Ok(p)
    };
    Ok((write("train.csv", &train)?, write("test.csv", &test)?))
}
