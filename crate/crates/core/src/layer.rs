//! Hidden integer weights with their cached visible signs.

use rand::Rng;

use crate::bits::{BitVector, PackedBitMatrix, WORD_BITS};
use crate::error::{ensure_dim, Error, Result};
use crate::scalar::{BitRange, Stability};

/// One fully connected binary layer: hidden stabilities `H` and the
/// visible weights `W = sign(H)` (plus `Wᵀ` for the backward pass).
///
/// `W` and `Wᵀ` are refreshed by every mutating method, so they always
/// match `H` when observed from outside.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layer<S> {
    fan_out: usize,
    fan_in: usize,
    hidden: Vec<S>,
    visible: PackedBitMatrix,
    visible_t: PackedBitMatrix,
    range: BitRange,
    step: i64,
}

/// Initial value distribution for hidden weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// Uniform over `{−7, −5, …, 5, 7}`.
    Odd,
    /// Uniform over `{−6, −4, −2, 2, 4, 6}`.
    Even,
}

impl<S: Stability> Layer<S> {
    /// Stability increment per aligned sign product.
    pub const ALIGN_STEP: i64 = 2;

    pub fn random<R: Rng + ?Sized>(
        fan_out: usize,
        fan_in: usize,
        bits: u32,
        init: Init,
        step: i64,
        rng: &mut R,
    ) -> Result<Self> {
        let range = BitRange::new::<S>(bits)?;
        if range.max < 7 {
            return Err(Error::Config(format!(
                "B={bits} too small for initial weights"
            )));
        }
        let hidden = (0..fan_out * fan_in)
            .map(|_| {
                let v = match init {
                    Init::Odd => 2 * rng.random_range(0..8i64) - 7,
                    Init::Even => {
                        let m = rng.random_range(1..=3i64) * 2;
                        if rng.random::<bool>() {
                            m
                        } else {
                            -m
                        }
                    }
                };
                S::narrow(v)
            })
            .collect();
        Self::from_hidden(fan_out, fan_in, hidden, bits, step)
    }

    pub fn from_hidden(
        fan_out: usize,
        fan_in: usize,
        hidden: Vec<S>,
        bits: u32,
        step: i64,
    ) -> Result<Self> {
        ensure_dim("Layer::from_hidden", fan_out * fan_in, hidden.len())?;
        let range = BitRange::new::<S>(bits)?;
        if let Some(bad) = hidden
            .iter()
            .find(|h| h.widen() < range.min || h.widen() > range.max)
        {
            return Err(Error::Config(format!(
                "hidden weight {bad:?} outside the {bits}-bit range"
            )));
        }
        let mut layer = Self {
            fan_out,
            fan_in,
            hidden,
            visible: PackedBitMatrix::minus_ones(fan_out, fan_in),
            visible_t: PackedBitMatrix::minus_ones(fan_in, fan_out),
            range,
            step,
        };
        layer.refresh_all();
        Ok(layer)
    }

    #[inline]
    pub fn fan_in(&self) -> usize {
        self.fan_in
    }

    #[inline]
    pub fn fan_out(&self) -> usize {
        self.fan_out
    }

    pub fn bits(&self) -> u32 {
        self.range.bits
    }

    pub fn range(&self) -> BitRange {
        self.range
    }

    /// Increment applied per unit of aggregated update.
    pub fn step(&self) -> i64 {
        self.step
    }

    pub fn hidden(&self) -> &[S] {
        &self.hidden
    }

    #[inline]
    pub fn hidden_at(&self, i: usize, j: usize) -> S {
        self.hidden[i * self.fan_in + j]
    }

    pub fn hidden_row(&self, i: usize) -> &[S] {
        &self.hidden[i * self.fan_in..(i + 1) * self.fan_in]
    }

    #[inline]
    pub fn visible(&self) -> &PackedBitMatrix {
        &self.visible
    }

    #[inline]
    pub fn visible_t(&self) -> &PackedBitMatrix {
        &self.visible_t
    }

    fn refresh_all(&mut self) {
        for i in 0..self.fan_out {
            for j in 0..self.fan_in {
                let plus = self.hidden[i * self.fan_in + j] >= S::zero();
                self.visible.set(i, j, plus);
            }
        }
        self.visible_t = self.visible.transpose();
    }

    /// Adds `step·delta` to row `i`, saturating, and refreshes its signs.
    /// Returns the number of clamped entries.
    pub(crate) fn add_row_scaled(&mut self, i: usize, delta: &[i32]) -> u64 {
        debug_assert_eq!(delta.len(), self.fan_in);
        let mut clamped = 0;
        for (j, &d) in delta.iter().enumerate() {
            if d == 0 {
                continue;
            }
            let idx = i * self.fan_in + j;
            let (v, sat) = self
                .range
                .saturate(self.hidden[idx].widen() + self.step * d as i64);
            clamped += sat as u64;
            self.hidden[idx] = S::narrow(v);
            let plus = v >= 0;
            self.visible.set(i, j, plus);
            self.visible_t.set(j, i, plus);
        }
        clamped
    }

    /// Moves entry `idx` (row-major) one reinforcement step away from zero.
    /// Returns whether it saturated.
    pub(crate) fn reinforce_entry(&mut self, idx: usize) -> bool {
        let h = self.hidden[idx].widen();
        let dir = if h >= 0 { 2 } else { -2 };
        let (v, sat) = self.range.saturate(h + dir);
        self.hidden[idx] = S::narrow(v);
        // |h| only grows, so the sign bit is unchanged
        sat
    }

    /// Checks `W = sign(H)` and `Wᵀ = W` transposed.
    pub fn check_coherent(&self) -> Result<()> {
        for i in 0..self.fan_out {
            for j in 0..self.fan_in {
                let plus = self.hidden_at(i, j) >= S::zero();
                if self.visible.get(i, j) != plus || self.visible_t.get(j, i) != plus {
                    return Err(Error::Invariant(format!("sign cache stale at ({i},{j})")));
                }
            }
        }
        Ok(())
    }

    /// Concatenates layers with equal fan-out side by side: `[self | right]`.
    pub fn hconcat(&self, right: &Layer<S>) -> Result<Self> {
        ensure_dim("Layer::hconcat", self.fan_out, right.fan_out)?;
        let mut hidden = Vec::with_capacity(self.hidden.len() + right.hidden.len());
        for i in 0..self.fan_out {
            hidden.extend_from_slice(self.hidden_row(i));
            hidden.extend_from_slice(right.hidden_row(i));
        }
        Self::from_hidden(
            self.fan_out,
            self.fan_in + right.fan_in,
            hidden,
            self.range.bits,
            self.step,
        )
    }
}

/// Row-wise winner-takes-update mask: bit `j` set selects every incoming
/// weight of neuron `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowMask(BitVector);

impl RowMask {
    pub fn empty(len: usize) -> Self {
        Self(BitVector::minus_ones(len))
    }

    pub fn from_rows(len: usize, rows: &[usize]) -> Self {
        let mut m = Self::empty(len);
        for &r in rows {
            m.0.set(r, true);
        }
        m
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.count_plus() == 0
    }

    pub fn count(&self) -> usize {
        self.0.count_plus()
    }

    #[inline]
    pub fn selects(&self, j: usize) -> bool {
        self.0.get(j)
    }

    pub fn rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.words().iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(wi * WORD_BITS + b)
            })
        })
    }

    /// Picks, within each contiguous group of `group` neurons, the wrong
    /// neuron with the smallest key (lowest index on ties).
    pub fn winners(
        len: usize,
        group: usize,
        wrong: impl Fn(usize) -> bool,
        key: impl Fn(usize) -> i64,
    ) -> Result<Self> {
        if group == 0 || !len.is_multiple_of(group) {
            return Err(Error::Config(format!(
                "group size {group} does not divide layer width {len}"
            )));
        }
        let mut mask = Self::empty(len);
        for start in (0..len).step_by(group) {
            let mut best: Option<(i64, usize)> = None;
            for j in start..start + group {
                if !wrong(j) {
                    continue;
                }
                let k = key(j);
                if best.is_none_or(|(bk, _)| k < bk) {
                    best = Some((k, j));
                }
            }
            if let Some((_, j)) = best {
                mask.0.set(j, true);
            }
        }
        Ok(mask)
    }
}
