//! Feedforward binary networks trained with binary error propagation.
//!
//! A network is a stack of [`Layer`]s followed by a fixed
//! [`PrototypeFrame`]. For a sample whose true-class margin is below
//! `r·K_L`, the desired last-layer activation is the class prototype and
//! earlier targets are obtained by gated back-projection
//! `a*_l = sign(W_{l+1}ᵀ(g_{l+1} ⊙ a*_{l+1}))`. Each layer then updates
//! the incoming weights of one wrong neuron per group.

pub mod backward;
pub mod reinforce;
pub mod schedule;
pub mod threshold;
pub mod update;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::{matvec_pm1, sign_to_bits, BitVector, IntVector};
use crate::error::{ensure_dim, Error, Result};
use crate::frames::PrototypeFrame;
use crate::layer::{Init, Layer, RowMask};
use crate::scalar::Stability;
use crate::train::Trainable;

pub use backward::{argmax, backproject, build_mask, class_margin, gate_within, margin_triggers};
pub use reinforce::{reinforce, reinforce_probability, ReinforceStats};
pub use schedule::{divisors, GroupSchedule};
pub use threshold::{compute_gate, should_update, Thresholds};
pub use update::{ApplyStats, UpdateAccumulator};

/// Training hyperparameters shared by feedforward and recurrent models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    /// Margin `r ∈ (0, 1]` in the update trigger.
    pub r: f64,
    /// Gate threshold `ν ∈ [0, 1]`.
    pub nu: f64,
    /// Reinforcement probability `p_r ∈ [0, 1]`.
    pub p_r: f64,
    /// Initial group size per schedule slot (one per layer; for recurrent
    /// models `[state, output]`). An empty list means "one per slot equal
    /// to the smallest divisor ≥ 16".
    pub gamma0: Vec<usize>,
    pub epochs: usize,
    /// Mini-batch size; 0 means `N/10` of the training set, at least 1.
    pub batch_size: usize,
    /// Hidden weight width `B`.
    pub bits: u32,
    pub stagnation_patience: usize,
    /// Recurrent models only: number of most recent steps that receive a
    /// back-propagated target. `None` means the full sequence.
    pub horizon: Option<usize>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            r: 0.5,
            nu: 0.05,
            p_r: 0.5,
            gamma0: Vec::new(),
            epochs: 50,
            batch_size: 0,
            bits: 16,
            stagnation_patience: 3,
            horizon: None,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r <= 1.0) {
            return Err(Error::Config(format!(
                "r must be in (0, 1], got {}",
                self.r
            )));
        }
        if !(0.0..=1.0).contains(&self.nu) {
            return Err(Error::Config(format!(
                "nu must be in [0, 1], got {}",
                self.nu
            )));
        }
        if !(0.0..=1.0).contains(&self.p_r) {
            return Err(Error::Config(format!(
                "p_r must be in [0, 1], got {}",
                self.p_r
            )));
        }
        if self.horizon == Some(0) {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        Ok(())
    }

    /// Batch size for a training set of `n` samples.
    pub fn effective_batch(&self, n: usize) -> usize {
        match self.batch_size {
            0 => (n / 10).max(1),
            b => b,
        }
    }

    /// Initial group sizes for the given slot widths.
    pub fn initial_groups(&self, widths: &[usize]) -> Result<Vec<usize>> {
        if self.gamma0.is_empty() {
            return Ok(widths
                .iter()
                .map(|&k| divisors(k).into_iter().find(|&d| d >= 16).unwrap_or(k))
                .collect());
        }
        if self.gamma0.len() == 1 {
            return Ok(vec![self.gamma0[0]; widths.len()]);
        }
        if self.gamma0.len() != widths.len() {
            return Err(Error::Config(format!(
                "gamma0 lists {} sizes for {} layers",
                self.gamma0.len(),
                widths.len()
            )));
        }
        Ok(self.gamma0.clone())
    }
}

/// Values retained from a forward pass for the backward pass.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForwardTrace {
    /// `z_l` for `l = 1..=L`.
    pub pre: Vec<IntVector>,
    /// `a_l` for `l = 1..=L`.
    pub act: Vec<BitVector>,
    pub logits: IntVector,
}

/// Per-sample targets and masks, one entry per layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleUpdate {
    pub targets: Vec<BitVector>,
    pub masks: Vec<RowMask>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<S> {
    layers: Vec<Layer<S>>,
    frame: PrototypeFrame,
    hyper: Hyperparams,
}

impl<S: Stability> Network<S> {
    /// Random odd-initialised network `input_dim → widths[0] → … → frame`.
    pub fn new(
        input_dim: usize,
        widths: &[usize],
        frame: PrototypeFrame,
        hyper: Hyperparams,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(crate::train::STREAM_INIT);
        let mut layers = Vec::with_capacity(widths.len());
        let mut fan_in = input_dim;
        for &w in widths {
            layers.push(Layer::random(
                w,
                fan_in,
                hyper.bits,
                Init::Odd,
                Layer::<S>::ALIGN_STEP,
                &mut rng,
            )?);
            fan_in = w;
        }
        Self::from_parts(layers, frame, hyper)
    }

    pub fn from_parts(
        layers: Vec<Layer<S>>,
        frame: PrototypeFrame,
        hyper: Hyperparams,
    ) -> Result<Self> {
        hyper.validate()?;
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            ensure_dim("Network layer chain", pair[0].fan_out(), pair[1].fan_in())?;
        }
        ensure_dim(
            "Network frame",
            layers.last().unwrap().fan_out(),
            frame.dim(),
        )?;
        let net = Self {
            layers,
            frame,
            hyper,
        };
        net.schedule_groups()?;
        Ok(net)
    }

    pub fn layers(&self) -> &[Layer<S>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<S>] {
        &mut self.layers
    }

    pub fn frame(&self) -> &PrototypeFrame {
        &self.frame
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn hyper_mut(&mut self) -> &mut Hyperparams {
        &mut self.hyper
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(Layer::fan_out).collect()
    }

    fn schedule_groups(&self) -> Result<Vec<usize>> {
        let widths = self.widths();
        let groups = self.hyper.initial_groups(&widths)?;
        GroupSchedule::new(&widths, &groups, self.hyper.stagnation_patience)?;
        Ok(groups)
    }

    /// `z_l = W_l a_{l−1}`, `a_l = sign(z_l)`, `ŷ = P a_L`.
    pub fn forward(&self, input: &BitVector) -> Result<ForwardTrace> {
        ensure_dim("forward", self.input_dim(), input.len())?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut act: Vec<BitVector> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let prev = act.last().unwrap_or(input);
            let z = matvec_pm1(layer.visible(), prev)?;
            act.push(sign_to_bits(&z));
            pre.push(z);
        }
        let logits = self.frame.logits(act.last().expect("non-empty"))?;
        Ok(ForwardTrace { pre, act, logits })
    }

    pub fn predict(&self, input: &BitVector) -> Result<usize> {
        Ok(argmax(&self.forward(input)?.logits))
    }

    /// Gate fan-ins: slot `k` gates `z` of layer `k+2` (1-based), whose
    /// input width is `K_{k+1}`.
    pub fn gate_fan_ins(&self) -> Vec<usize> {
        self.layers[1..].iter().map(Layer::fan_in).collect()
    }

    pub fn thresholds(&self) -> Result<Thresholds> {
        Thresholds::new(
            self.hyper.r,
            self.hyper.nu,
            self.frame.dim(),
            &self.gate_fan_ins(),
        )
    }

    /// `a*_L = ρ^c`, then gated back-projection down to layer 1.
    pub fn desired_activations(
        &self,
        trace: &ForwardTrace,
        class: usize,
        thresholds: &Thresholds,
    ) -> Result<Vec<BitVector>> {
        if class >= self.frame.classes() {
            return Err(Error::Data(format!("class {class} out of range")));
        }
        let depth = self.layers.len();
        let mut targets = vec![BitVector::minus_ones(0); depth];
        targets[depth - 1] = self.frame.prototype(class).clone();
        for idx in (1..depth).rev() {
            let gate = gate_within(&trace.pre[idx], thresholds.gate_cutoffs[idx - 1]);
            targets[idx - 1] =
                backward::backproject_layer(&self.layers[idx], &gate, &targets[idx])?;
        }
        Ok(targets)
    }

    pub fn sample_update(
        &self,
        trace: &ForwardTrace,
        class: usize,
        thresholds: &Thresholds,
        groups: &[usize],
    ) -> Result<SampleUpdate> {
        let targets = self.desired_activations(trace, class, thresholds)?;
        let masks = targets
            .iter()
            .zip(&trace.act)
            .zip(&trace.pre)
            .zip(groups)
            .map(|(((t, a), z), &g)| build_mask(t, a, z, g))
            .collect::<Result<_>>()?;
        Ok(SampleUpdate { targets, masks })
    }

    /// Applies `H_l ← H_l + 2·Σ_μ M_l^μ ⊙ (a*_l^μ (a_{l−1}^μ)ᵀ)` for every
    /// layer. All terms are computed from the weights as they were before
    /// this call.
    pub fn apply_updates(
        &mut self,
        batch: &[(&BitVector, &ForwardTrace, &SampleUpdate)],
    ) -> Vec<ApplyStats> {
        let mut stats = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter_mut().enumerate() {
            let mut acc = UpdateAccumulator::new(layer.fan_out(), layer.fan_in());
            for &(input, trace, upd) in batch {
                let below = if l == 0 { input } else { &trace.act[l - 1] };
                acc.add_masked_outer(&upd.masks[l], &upd.targets[l], below);
            }
            stats.push(acc.apply_to(layer));
        }
        stats
    }
}

impl<S: Stability> Trainable for Network<S> {
    type Trace = ForwardTrace;
    type Update = SampleUpdate;

    fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    fn frame(&self) -> &PrototypeFrame {
        &self.frame
    }

    fn forward_sample(&self, input: &[BitVector]) -> Result<ForwardTrace> {
        match input {
            [x] => self.forward(x),
            _ => Err(Error::dim("feedforward input steps", 1, input.len())),
        }
    }

    fn logits(trace: &ForwardTrace) -> &IntVector {
        &trace.logits
    }

    fn thresholds(&self) -> Result<Thresholds> {
        Network::thresholds(self)
    }

    fn backward_sample(
        &self,
        _input: &[BitVector],
        trace: &ForwardTrace,
        class: usize,
        thresholds: &Thresholds,
        groups: &[usize],
    ) -> Result<SampleUpdate> {
        self.sample_update(trace, class, thresholds, groups)
    }

    fn apply_batch(
        &mut self,
        batch: &[(&[BitVector], &ForwardTrace, &SampleUpdate)],
    ) -> Vec<ApplyStats> {
        let flat: Vec<_> = batch.iter().map(|&(x, t, u)| (&x[0], t, u)).collect();
        self.apply_updates(&flat)
    }

    fn schedule_widths(&self) -> Vec<usize> {
        self.widths()
    }

    fn matrices_mut(&mut self) -> Vec<&mut Layer<Self::Scalar>> {
        self.layers.iter_mut().collect()
    }

    type Scalar = S;
}
