//! Many-to-one binary recurrent networks trained by error propagation
//! through time.
//!
//! `z_t = W_xs a_t + W_ss s_{t−1}`, `s_t = sign(z_t)`, and the last state
//! feeds `s_y = sign(W_sy s_T)` and the frame. Targets run backwards from
//! `s*_y = ρ^c` through `W_sy` and then `W_ss`. Masks are chosen once per
//! sample and shared by every time step, so the tied matrices receive a
//! single masked temporal sum.

use serde::{Deserialize, Serialize};

use crate::bep::backward::backproject_layer;
use crate::bep::{
    argmax, build_mask, gate_within, ApplyStats, Hyperparams, Thresholds, UpdateAccumulator,
};
use crate::bits::{matvec_pm1, matvec_pm1_add_into, sign_to_bits, BitVector, IntVector};
use crate::error::{ensure_dim, Error, Result};
use crate::frames::PrototypeFrame;
use crate::layer::{Init, Layer, RowMask};
use crate::scalar::Stability;
use crate::train::{stream, Trainable, STREAM_INIT};

/// Update coefficient of the state-to-output matrix.
pub const OUTPUT_STEP: i64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RnnDims {
    pub input: usize,
    pub state: usize,
    pub output: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RnnModel<S> {
    input: Layer<S>,
    recurrent: Layer<S>,
    output: Layer<S>,
    frame: PrototypeFrame,
    s0: BitVector,
    hyper: Hyperparams,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RnnTrace {
    /// `z_t` for `t = 1..=T`.
    pub pre: Vec<IntVector>,
    /// `s_t` for `t = 1..=T`.
    pub states: Vec<BitVector>,
    pub out_pre: IntVector,
    pub out: BitVector,
    pub logits: IntVector,
}

/// Back-propagated targets for one sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RnnTargets {
    pub output: BitVector,
    /// Index (0-based) of the earliest step with a target.
    pub first: usize,
    /// `s*_t` for `t = first..T`, in time order.
    pub states: Vec<BitVector>,
}

impl RnnTargets {
    pub fn at(&self, t: usize) -> Option<&BitVector> {
        t.checked_sub(self.first).and_then(|k| self.states.get(k))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RnnUpdate {
    pub targets: RnnTargets,
    /// Shared by `H_xs` and `H_ss`.
    pub state_mask: RowMask,
    pub output_mask: RowMask,
}

impl<S: Stability> RnnModel<S> {
    /// `H_xs`, `H_ss` odd-initialised; `H_sy` even-initialised with unit
    /// update step; `s0` all +1.
    pub fn new(
        dims: RnnDims,
        frame: PrototypeFrame,
        hyper: Hyperparams,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = stream(seed, STREAM_INIT);
        let b = hyper.bits;
        let step = Layer::<S>::ALIGN_STEP;
        let input = Layer::random(dims.state, dims.input, b, Init::Odd, step, &mut rng)?;
        let recurrent = Layer::random(dims.state, dims.state, b, Init::Odd, step, &mut rng)?;
        let output = Layer::random(
            dims.output,
            dims.state,
            b,
            Init::Even,
            OUTPUT_STEP,
            &mut rng,
        )?;
        Self::from_parts(
            input,
            recurrent,
            output,
            frame,
            BitVector::plus_ones(dims.state),
            hyper,
        )
    }

    pub fn from_parts(
        input: Layer<S>,
        recurrent: Layer<S>,
        output: Layer<S>,
        frame: PrototypeFrame,
        s0: BitVector,
        hyper: Hyperparams,
    ) -> Result<Self> {
        hyper.validate()?;
        let k_s = input.fan_out();
        ensure_dim("RnnModel recurrent rows", k_s, recurrent.fan_out())?;
        ensure_dim("RnnModel recurrent cols", k_s, recurrent.fan_in())?;
        ensure_dim("RnnModel output cols", k_s, output.fan_in())?;
        ensure_dim("RnnModel frame", output.fan_out(), frame.dim())?;
        ensure_dim("RnnModel s0", k_s, s0.len())?;
        let model = Self {
            input,
            recurrent,
            output,
            frame,
            s0,
            hyper,
        };
        let widths = model.schedule_widths();
        let groups = model.hyper.initial_groups(&widths)?;
        crate::bep::GroupSchedule::new(&widths, &groups, model.hyper.stagnation_patience)?;
        Ok(model)
    }

    pub fn dims(&self) -> RnnDims {
        RnnDims {
            input: self.input.fan_in(),
            state: self.input.fan_out(),
            output: self.output.fan_out(),
        }
    }

    pub fn input_layer(&self) -> &Layer<S> {
        &self.input
    }

    pub fn recurrent_layer(&self) -> &Layer<S> {
        &self.recurrent
    }

    pub fn output_layer(&self) -> &Layer<S> {
        &self.output
    }

    pub fn frame(&self) -> &PrototypeFrame {
        &self.frame
    }

    pub fn s0(&self) -> &BitVector {
        &self.s0
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn hyper_mut(&mut self) -> &mut Hyperparams {
        &mut self.hyper
    }

    pub fn forward(&self, inputs: &[BitVector]) -> Result<RnnTrace> {
        if inputs.is_empty() {
            return Err(Error::Data("empty input sequence".into()));
        }
        let mut pre = Vec::with_capacity(inputs.len());
        let mut states: Vec<BitVector> = Vec::with_capacity(inputs.len());
        for a in inputs {
            let prev = states.last().unwrap_or(&self.s0);
            let mut z = matvec_pm1(self.input.visible(), a)?;
            matvec_pm1_add_into(self.recurrent.visible(), prev, &mut z.0)?;
            states.push(sign_to_bits(&z));
            pre.push(z);
        }
        let last = states.last().expect("non-empty");
        let out_pre = matvec_pm1(self.output.visible(), last)?;
        let out = sign_to_bits(&out_pre);
        let logits = self.frame.logits(&out)?;
        Ok(RnnTrace {
            pre,
            states,
            out_pre,
            out,
            logits,
        })
    }

    pub fn predict(&self, inputs: &[BitVector]) -> Result<usize> {
        Ok(argmax(&self.forward(inputs)?.logits))
    }

    /// Gate slot 0 gates `z_y` (fan-in `K_s`); slot 1 gates every `z_t`
    /// (fan-in `K_s + K_x`).
    pub fn gate_fan_ins(&self) -> Vec<usize> {
        let d = self.dims();
        vec![d.state, d.state + d.input]
    }

    pub fn thresholds(&self) -> Result<Thresholds> {
        Thresholds::new(
            self.hyper.r,
            self.hyper.nu,
            self.frame.dim(),
            &self.gate_fan_ins(),
        )
    }

    /// `s*_y = ρ^c`, `s*_T = sign(W_syᵀ(g_y ⊙ s*_y))`, then
    /// `s*_t = sign(W_ssᵀ(g_{t+1} ⊙ s*_{t+1}))` for the last `horizon`
    /// steps.
    pub fn desired_states(
        &self,
        trace: &RnnTrace,
        class: usize,
        th: &Thresholds,
    ) -> Result<RnnTargets> {
        if class >= self.frame.classes() {
            return Err(Error::Data(format!("class {class} out of range")));
        }
        let steps = trace.states.len();
        let horizon = self.hyper.horizon.unwrap_or(steps).clamp(1, steps);
        let first = steps - horizon;
        let output = self.frame.prototype(class).clone();
        let g_y = gate_within(&trace.out_pre, th.gate_cutoffs[0]);
        let mut rev = Vec::with_capacity(horizon);
        rev.push(backproject_layer(&self.output, &g_y, &output)?);
        for t in (first..steps - 1).rev() {
            let g = gate_within(&trace.pre[t + 1], th.gate_cutoffs[1]);
            let next = rev.last().expect("non-empty");
            rev.push(backproject_layer(&self.recurrent, &g, next)?);
        }
        rev.reverse();
        Ok(RnnTargets {
            output,
            first,
            states: rev,
        })
    }

    /// Time-shared state mask: neuron `j` is wrong if `s_{t,j} ≠ s*_{t,j}`
    /// at any targeted step; its key sums `s*_{t,j}·z_{t,j}` over those
    /// wrong steps. The output mask is the feedforward one.
    pub fn build_masks(
        &self,
        trace: &RnnTrace,
        targets: &RnnTargets,
        groups: &[usize],
    ) -> Result<(RowMask, RowMask)> {
        let k_s = self.dims().state;
        let mut wrong = vec![false; k_s];
        let mut key = vec![0i64; k_s];
        for (k, want) in targets.states.iter().enumerate() {
            let t = targets.first + k;
            let (got, z) = (&trace.states[t], &trace.pre[t]);
            for j in 0..k_s {
                if want.get(j) != got.get(j) {
                    wrong[j] = true;
                    key[j] += want.get_pm1(j) as i64 * z[j] as i64;
                }
            }
        }
        let state_mask = RowMask::winners(k_s, groups[0], |j| wrong[j], |j| key[j])?;
        let output_mask = build_mask(&targets.output, &trace.out, &trace.out_pre, groups[1])?;
        Ok((state_mask, output_mask))
    }

    pub fn sample_update(
        &self,
        trace: &RnnTrace,
        class: usize,
        th: &Thresholds,
        groups: &[usize],
    ) -> Result<RnnUpdate> {
        let targets = self.desired_states(trace, class, th)?;
        let (state_mask, output_mask) = self.build_masks(trace, &targets, groups)?;
        Ok(RnnUpdate {
            targets,
            state_mask,
            output_mask,
        })
    }

    /// `H_xs += 2·Σ_μ M ⊙ Σ_t s*_t a_tᵀ`, `H_ss += 2·Σ_μ M ⊙ Σ_t s*_t s_{t−1}ᵀ`,
    /// `H_sy += Σ_μ M_sy ⊙ s*_y s_Tᵀ`, all against pre-update weights.
    /// Returns stats for `[H_xs, H_ss, H_sy]`.
    pub fn apply_updates(
        &mut self,
        batch: &[(&[BitVector], &RnnTrace, &RnnUpdate)],
    ) -> Vec<ApplyStats> {
        let d = self.dims();
        let mut acc_x = UpdateAccumulator::new(d.state, d.input);
        let mut acc_s = UpdateAccumulator::new(d.state, d.state);
        let mut acc_y = UpdateAccumulator::new(d.output, d.state);
        for &(inputs, trace, upd) in batch {
            let tg = &upd.targets;
            for j in upd.state_mask.rows() {
                for (k, want) in tg.states.iter().enumerate() {
                    let t = tg.first + k;
                    let prev = if t == 0 {
                        &self.s0
                    } else {
                        &trace.states[t - 1]
                    };
                    acc_x.add_row(j, want.get(j), &inputs[t]);
                    acc_s.add_row(j, want.get(j), prev);
                }
            }
            let rows = upd.state_mask.count() as u64;
            acc_x.note_selected(rows);
            acc_s.note_selected(rows);
            let last = trace.states.last().expect("non-empty");
            acc_y.add_masked_outer(&upd.output_mask, &tg.output, last);
        }
        vec![
            acc_x.apply_to(&mut self.input),
            acc_s.apply_to(&mut self.recurrent),
            acc_y.apply_to(&mut self.output),
        ]
    }
}

impl<S: Stability> Trainable for RnnModel<S> {
    type Scalar = S;
    type Trace = RnnTrace;
    type Update = RnnUpdate;

    fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    fn frame(&self) -> &PrototypeFrame {
        &self.frame
    }

    fn forward_sample(&self, input: &[BitVector]) -> Result<RnnTrace> {
        self.forward(input)
    }

    fn logits(trace: &RnnTrace) -> &IntVector {
        &trace.logits
    }

    fn thresholds(&self) -> Result<Thresholds> {
        RnnModel::thresholds(self)
    }

    fn backward_sample(
        &self,
        _input: &[BitVector],
        trace: &RnnTrace,
        class: usize,
        thresholds: &Thresholds,
        groups: &[usize],
    ) -> Result<RnnUpdate> {
        self.sample_update(trace, class, thresholds, groups)
    }

    fn apply_batch(&mut self, batch: &[(&[BitVector], &RnnTrace, &RnnUpdate)]) -> Vec<ApplyStats> {
        self.apply_updates(batch)
    }

    fn schedule_widths(&self) -> Vec<usize> {
        let d = self.dims();
        vec![d.state, d.output]
    }

    fn matrices_mut(&mut self) -> Vec<&mut Layer<S>> {
        vec![&mut self.input, &mut self.recurrent, &mut self.output]
    }
}
