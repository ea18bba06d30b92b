//! Binary backward pass: update trigger, gates, back-projection of desired
//! activations and winner-takes-update masks. Integer and bitwise only.

use crate::bits::{
    gated_matvec_transpose, gated_matvec_transposed, sign_to_bits, BitVector, GateVector,
    IntVector, PackedBitMatrix,
};
use crate::error::{ensure_dim, Error, Result};
use crate::layer::{Layer, RowMask};
use crate::scalar::Stability;

/// Margin of the true class over the best competitor.
pub fn class_margin(yhat: &[i32], class: usize) -> Result<i64> {
    if class >= yhat.len() {
        return Err(Error::Data(format!(
            "class {class} out of range for {} logits",
            yhat.len()
        )));
    }
    if yhat.len() < 2 {
        return Err(Error::Config("need at least two classes".into()));
    }
    let rival = yhat
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != class)
        .map(|(_, &y)| y)
        .max()
        .expect("at least one rival");
    Ok(yhat[class] as i64 - rival as i64)
}

/// Update trigger against a precomputed cut-off: `margin < cutoff`.
pub fn margin_triggers(yhat: &[i32], class: usize, cutoff: i64) -> Result<bool> {
    Ok(class_margin(yhat, class)? < cutoff)
}

/// Predicted class; the lowest index wins ties.
pub fn argmax(yhat: &[i32]) -> usize {
    let mut best = 0;
    for (c, &y) in yhat.iter().enumerate() {
        if y > yhat[best] {
            best = c;
        }
    }
    best
}

/// Gate passing neurons with `|z_i| ≤ cutoff`.
pub fn gate_within(z: &[i32], cutoff: i64) -> GateVector {
    let bits: Vec<bool> = z.iter().map(|&x| (x as i64).abs() <= cutoff).collect();
    GateVector::from_bools(&bits)
}

/// `sign(Wᵀ(g ⊙ a*))` for `W` of shape `K_{l+1} × K_l`.
pub fn backproject(
    w_next: &PackedBitMatrix,
    gate: &GateVector,
    desired_next: &BitVector,
) -> Result<BitVector> {
    let v = gated_matvec_transpose(w_next, gate, desired_next)?;
    Ok(sign_to_bits(&v))
}

/// [`backproject`] through a layer's cached transpose.
pub fn backproject_layer<S: Stability>(
    next: &Layer<S>,
    gate: &GateVector,
    desired_next: &BitVector,
) -> Result<BitVector> {
    let v = gated_matvec_transposed(next.visible_t(), gate, desired_next)?;
    Ok(sign_to_bits(&v))
}

/// Winner-takes-update mask for one sample and layer.
///
/// Neuron `j` is wrong when `a_j ≠ a*_j`; within each contiguous group of
/// `group_size` neurons the wrong one with the smallest stability
/// `a*_j·z_j` is selected.
pub fn build_mask(
    desired: &BitVector,
    actual: &BitVector,
    pre: &IntVector,
    group_size: usize,
) -> Result<RowMask> {
    let n = desired.len();
    ensure_dim("build_mask", n, actual.len())?;
    ensure_dim("build_mask", n, pre.len())?;
    RowMask::winners(
        n,
        group_size,
        |j| desired.get(j) != actual.get(j),
        |j| desired.get_pm1(j) as i64 * pre[j] as i64,
    )
}
