//! Aggregated masked updates `H ← H + step·Σ_μ M^μ ⊙ (a*^μ (a^μ)ᵀ)`.
//!
//! Per-sample outer products are summed into an integer accumulator first
//! and written to `H` once, so every term is computed against the same
//! pre-update weights.

use crate::bits::{BitVector, WORD_BITS};
use crate::layer::{Layer, RowMask};
use crate::scalar::Stability;

/// Dense integer accumulator over the rows of one weight matrix.
#[derive(Clone, Debug)]
pub struct UpdateAccumulator {
    fan_out: usize,
    fan_in: usize,
    delta: Vec<i32>,
    touched: Vec<bool>,
    rows_selected: u64,
}

/// What one aggregated write did to a matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ApplyStats {
    /// Sum over samples of selected rows.
    pub rows_selected: u64,
    pub saturated: u64,
}

impl UpdateAccumulator {
    pub fn new(fan_out: usize, fan_in: usize) -> Self {
        Self {
            fan_out,
            fan_in,
            delta: vec![0; fan_out * fan_in],
            touched: vec![false; fan_out],
            rows_selected: 0,
        }
    }

    pub fn fan_out(&self) -> usize {
        self.fan_out
    }

    pub fn fan_in(&self) -> usize {
        self.fan_in
    }

    /// `Δ[j, :] += sign·input`, with `sign = +1` when `plus`.
    pub fn add_row(&mut self, j: usize, plus: bool, input: &BitVector) {
        debug_assert_eq!(input.len(), self.fan_in);
        self.touched[j] = true;
        let row = &mut self.delta[j * self.fan_in..(j + 1) * self.fan_in];
        let (on, off) = if plus { (1, -1) } else { (-1, 1) };
        for (wi, &word) in input.words().iter().enumerate() {
            let base = wi * WORD_BITS;
            let end = (base + WORD_BITS).min(row.len());
            for (b, d) in row[base..end].iter_mut().enumerate() {
                *d += if (word >> b) & 1 == 1 { on } else { off };
            }
        }
    }

    /// Adds `M ⊙ (desired · inputᵀ)` for one sample.
    pub fn add_masked_outer(&mut self, mask: &RowMask, desired: &BitVector, input: &BitVector) {
        for j in mask.rows() {
            self.add_row(j, desired.get(j), input);
        }
        self.rows_selected += mask.count() as u64;
    }

    pub fn note_selected(&mut self, rows: u64) {
        self.rows_selected += rows;
    }

    pub fn row(&self, j: usize) -> &[i32] {
        &self.delta[j * self.fan_in..(j + 1) * self.fan_in]
    }

    pub fn is_touched(&self, j: usize) -> bool {
        self.touched[j]
    }

    /// Writes `step·Δ` into the layer, saturating, and refreshes signs.
    pub fn apply_to<S: Stability>(&self, layer: &mut Layer<S>) -> ApplyStats {
        assert_eq!(layer.fan_out(), self.fan_out);
        assert_eq!(layer.fan_in(), self.fan_in);
        let mut saturated = 0;
        for j in 0..self.fan_out {
            if self.touched[j] {
                saturated += layer.add_row_scaled(j, self.row(j));
            }
        }
        ApplyStats {
            rows_selected: self.rows_selected,
            saturated,
        }
    }
}
