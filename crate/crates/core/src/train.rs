//! Mini-batch training driver shared by feedforward and recurrent models.
//!
//! Within a batch, forward and backward passes run in parallel against
//! the frozen weights; the aggregated update and reinforcement then run on
//! a single writer. Results are collected in sample order and every random
//! draw comes from a seeded per-purpose stream, so the outcome does not
//! depend on the thread count.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bep::{
    argmax, class_margin, margin_triggers, reinforce, ApplyStats, GroupSchedule, Hyperparams,
    Thresholds,
};
use crate::bits::{BitVector, IntVector};
use crate::data::BinaryDataset;
use crate::error::{Error, Result};
use crate::frames::PrototypeFrame;

/// Per-sample result of a batch: correctness and, if triggered, its update.
type SampleOutcome<T, U> = (bool, Option<(usize, T, U)>);
use crate::layer::Layer;
use crate::scalar::Stability;

pub const STREAM_SHUFFLE: u64 = 1;
pub const STREAM_INIT: u64 = 2;
/// Reinforcement stream of matrix `k` is `STREAM_REINFORCE + k`.
pub const STREAM_REINFORCE: u64 = 16;

pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// A model the batch driver can train.
pub trait Trainable: Sync {
    type Scalar: Stability;
    type Trace: Send + Sync;
    type Update: Send + Sync;

    fn hyper(&self) -> &Hyperparams;
    fn frame(&self) -> &PrototypeFrame;
    fn classes(&self) -> usize {
        self.frame().classes()
    }
    fn forward_sample(&self, input: &[BitVector]) -> Result<Self::Trace>;
    fn logits(trace: &Self::Trace) -> &IntVector;
    fn thresholds(&self) -> Result<Thresholds>;
    fn backward_sample(
        &self,
        input: &[BitVector],
        trace: &Self::Trace,
        class: usize,
        thresholds: &Thresholds,
        groups: &[usize],
    ) -> Result<Self::Update>;
    /// Applies the aggregated update; one entry per weight matrix.
    fn apply_batch(
        &mut self,
        batch: &[(&[BitVector], &Self::Trace, &Self::Update)],
    ) -> Vec<ApplyStats>;
    /// Widths of the group-size schedule slots.
    fn schedule_widths(&self) -> Vec<usize>;
    /// Every weight matrix, in reinforcement-stream order.
    fn matrices_mut(&mut self) -> Vec<&mut Layer<Self::Scalar>>;
}

#[derive(Clone, Debug)]
pub struct TrainState {
    pub epoch: usize,
    /// Last epoch's misclassified and seen counts; `(1, 1)` before any.
    pub last_error: (u64, u64),
    pub schedule: GroupSchedule,
    pub shuffle_rng: ChaCha8Rng,
    /// One stream per weight matrix, created on first use.
    pub reinforce_rngs: Vec<ChaCha8Rng>,
    pub seed: u64,
}

impl TrainState {
    pub fn new<M: Trainable>(model: &M, seed: u64) -> Result<Self> {
        let widths = model.schedule_widths();
        let hyper = model.hyper();
        let groups = hyper.initial_groups(&widths)?;
        let schedule = GroupSchedule::new(&widths, &groups, hyper.stagnation_patience)?;
        Ok(Self {
            epoch: 0,
            last_error: (1, 1),
            schedule,
            shuffle_rng: stream(seed, STREAM_SHUFFLE),
            reinforce_rngs: Vec::new(),
            seed,
        })
    }

    /// Feeds the schedule the epoch's stagnation signal; returns true if
    /// group sizes advanced.
    pub fn record_accuracy(&mut self, correct: u64, total: u64) -> bool {
        self.schedule.step(correct, total)
    }

    pub fn epoch_error(&self) -> f64 {
        self.last_error.0 as f64 / self.last_error.1.max(1) as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Fraction of training samples misclassified during the pass.
    pub train_error: f64,
    pub train_correct: u64,
    pub samples: u64,
    pub triggered: u64,
    /// Selected rows summed over samples, per weight matrix.
    pub updates: Vec<u64>,
    pub saturated: u64,
    pub reinforced: u64,
    pub group_sizes: Vec<usize>,
}

/// One pass over `data` in seeded-shuffled mini-batches.
pub fn train_epoch<M: Trainable>(
    model: &mut M,
    data: &BinaryDataset,
    state: &mut TrainState,
) -> Result<EpochMetrics> {
    if data.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if data.classes() > model.classes() {
        return Err(Error::Data(format!(
            "dataset has {} classes, model {}",
            data.classes(),
            model.classes()
        )));
    }
    let thresholds = model.thresholds()?;
    let groups = state.schedule.group_sizes();
    let batch_size = model.hyper().effective_batch(data.len());
    let p_r = model.hyper().p_r;
    let epoch_error = state.epoch_error();

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut state.shuffle_rng);

    let mut metrics = EpochMetrics {
        epoch: state.epoch + 1,
        samples: data.len() as u64,
        group_sizes: groups.clone(),
        ..Default::default()
    };

    for batch in order.chunks(batch_size) {
        let model_ref = &*model;
        let results: Vec<SampleOutcome<M::Trace, M::Update>> = batch
            .par_iter()
            .map(|&i| {
                let (input, class) = data.sample(i);
                let trace = model_ref.forward_sample(input)?;
                let logits = M::logits(&trace);
                let correct = argmax(logits) == class;
                if !margin_triggers(logits, class, thresholds.margin_cutoff)? {
                    return Ok((correct, None));
                }
                let upd = model_ref.backward_sample(input, &trace, class, &thresholds, &groups)?;
                Ok((correct, Some((i, trace, upd))))
            })
            .collect::<Result<_>>()?;

        metrics.train_correct += results.iter().filter(|r| r.0).count() as u64;
        let items: Vec<(&[BitVector], &M::Trace, &M::Update)> = results
            .iter()
            .filter_map(|(_, u)| u.as_ref())
            .map(|(i, t, u)| (data.sample(*i).0, t, u))
            .collect();
        metrics.triggered += items.len() as u64;

        if !items.is_empty() {
            let stats = model.apply_batch(&items);
            if metrics.updates.len() < stats.len() {
                metrics.updates.resize(stats.len(), 0);
            }
            for (k, s) in stats.iter().enumerate() {
                metrics.updates[k] += s.rows_selected;
                metrics.saturated += s.saturated;
            }
        }

        for (k, layer) in model.matrices_mut().into_iter().enumerate() {
            if state.reinforce_rngs.len() <= k {
                state
                    .reinforce_rngs
                    .push(stream(state.seed, STREAM_REINFORCE + k as u64));
            }
            let rng = &mut state.reinforce_rngs[k];
            let s = reinforce(layer, p_r, epoch_error, rng)?;
            metrics.reinforced += s.reinforced;
            metrics.saturated += s.saturated;
        }
    }

    let errors = data.len() as u64 - metrics.train_correct;
    state.last_error = (errors, data.len() as u64);
    state.epoch += 1;
    metrics.train_error = state.epoch_error();
    Ok(metrics)
}

/// Accuracy, confusion counts and margin statistics on a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub correct: u64,
    pub total: u64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    /// Sum of `ŷ_c − max_{c'≠c} ŷ_{c'}` over samples.
    pub margin_sum: i64,
    pub last_width: usize,
}

impl EvalReport {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    /// Mean of `margin / K_L`.
    pub fn mean_margin(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.margin_sum as f64 / (self.total as f64 * self.last_width as f64)
        }
    }
}

pub fn evaluate<M: Trainable>(model: &M, data: &BinaryDataset) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::Data("evaluation set is empty".into()));
    }
    let c = model.classes();
    let rows: Vec<(usize, usize, i64)> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let (input, class) = data.sample(i);
            let trace = model.forward_sample(input)?;
            let logits = M::logits(&trace);
            Ok((class, argmax(logits), class_margin(logits, class)?))
        })
        .collect::<Result<_>>()?;
    let mut confusion = vec![vec![0u64; c]; c];
    let mut correct = 0;
    let mut margin_sum = 0;
    for (t, p, m) in rows {
        confusion[t][p] += 1;
        correct += (t == p) as u64;
        margin_sum += m;
    }
    Ok(EvalReport {
        correct,
        total: data.len() as u64,
        confusion,
        margin_sum,
        last_width: model.frame().dim(),
    })
}
