//! Integer cut-offs derived once from the real-valued hyperparameters.
//!
//! The training path compares integers only; this is the single place
//! where `r` and `ν` are read, via exact rationals.

use crate::bits::{GateVector, IntVector};
use crate::error::{Error, Result};
use crate::scalar::{inclusive_cutoff, strict_upper_cutoff, to_ratio};

use super::backward::{gate_within, margin_triggers};

/// Update when `margin < margin_cutoff`; pass a gate when `|z| ≤ cutoff`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Thresholds {
    pub margin_cutoff: i64,
    /// One cut-off per gated pre-activation, indexed like the model's
    /// gate slots.
    pub gate_cutoffs: Vec<i64>,
}

impl Thresholds {
    /// `gate_fan_ins[k]` is the fan-in `K` in `|z| ≤ ν·K` for gate slot `k`.
    pub fn new(r: f64, nu: f64, last_width: usize, gate_fan_ins: &[usize]) -> Result<Self> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::Config(format!(
                "margin r must be in (0, 1], got {r}"
            )));
        }
        if !(0.0..=1.0).contains(&nu) {
            return Err(Error::Config(format!(
                "gate threshold nu must be in [0, 1], got {nu}"
            )));
        }
        let r = to_ratio(r)?;
        let nu = to_ratio(nu)?;
        Ok(Self {
            margin_cutoff: strict_upper_cutoff(r, last_width),
            gate_cutoffs: gate_fan_ins
                .iter()
                .map(|&k| inclusive_cutoff(nu, k))
                .collect(),
        })
    }
}

/// True iff `ŷ_c − max_{c'≠c} ŷ_{c'} < r·K_L`.
pub fn should_update(yhat: &IntVector, class: usize, r: f64, last_width: usize) -> Result<bool> {
    let t = Thresholds::new(r, 0.0, last_width, &[])?;
    margin_triggers(yhat, class, t.margin_cutoff)
}

/// Passes neuron `i` iff `|z_i| ≤ ν·fan_in`.
pub fn compute_gate(z: &IntVector, nu: f64, fan_in: usize) -> Result<GateVector> {
    let t = Thresholds::new(1.0, nu, 1, &[fan_in])?;
    Ok(gate_within(z, t.gate_cutoffs[0]))
}
