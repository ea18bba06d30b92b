//! Slow, literal references used to check the packed engine.
//!
//! Everything here works on plain `i8`/`i64` arrays with nested loops and
//! never calls the packed kernels in [`crate::bits`]. Matrices are row-major
//! `Vec<i8>` with entries ±1; gates are `0`/`1`.

#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};

/// Largest column count accepted for exhaustive enumeration.
pub const MAX_ENUM_COLS: usize = 20;

/// Dense ±1 matrix for the reference path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DenseSign {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<i8>,
}

impl DenseSign {
    pub fn new(rows: usize, cols: usize, data: Vec<i8>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> i8 {
        self.data[i * self.cols + j]
    }
}

pub fn naive_dot(a: &[i8], b: &[i8]) -> i64 {
    assert_eq!(a.len(), b.len());
    let mut s = 0i64;
    for i in 0..a.len() {
        s += a[i] as i64 * b[i] as i64;
    }
    s
}

pub fn naive_matvec(w: &DenseSign, a: &[i8]) -> Vec<i64> {
    assert_eq!(w.cols, a.len());
    let mut out = vec![0i64; w.rows];
    for i in 0..w.rows {
        for j in 0..w.cols {
            out[i] += w.at(i, j) as i64 * a[j] as i64;
        }
    }
    out
}

/// `v_j = Σ_i g_i b_i W_ij` with the ternary product widened to integers.
pub fn naive_gated_transpose(w: &DenseSign, g: &[u8], b: &[i8]) -> Vec<i64> {
    assert_eq!(w.rows, g.len());
    assert_eq!(w.rows, b.len());
    let mut out = vec![0i64; w.cols];
    for j in 0..w.cols {
        for i in 0..w.rows {
            let t = g[i] as i64 * b[i] as i64;
            out[j] += t * w.at(i, j) as i64;
        }
    }
    out
}

pub fn naive_sign(z: &[i64]) -> Vec<i8> {
    z.iter().map(|&x| if x < 0 { -1 } else { 1 }).collect()
}

pub fn naive_outer(u: &[i8], v: &[i8]) -> DenseSign {
    let mut data = Vec::with_capacity(u.len() * v.len());
    for &x in u {
        for &y in v {
            data.push(x * y);
        }
    }
    DenseSign::new(u.len(), v.len(), data)
}

/// `⟨b, W a⟩_g = Σ_i g_i b_i (W a)_i`.
pub fn gated_objective(w: &DenseSign, g: &[u8], b: &[i8], a: &[i8]) -> i64 {
    let wa = naive_matvec(w, a);
    let mut s = 0;
    for i in 0..w.rows {
        s += g[i] as i64 * b[i] as i64 * wa[i];
    }
    s
}

fn vertex(bits: u64, n: usize) -> Vec<i8> {
    (0..n)
        .map(|k| if bits >> k & 1 == 1 { 1 } else { -1 })
        .collect()
}

/// Maximum of the gated surrogate and every binary vector attaining it.
#[derive(Clone, Debug)]
pub struct GatedArgmax {
    pub max: i64,
    pub maximizers: Vec<Vec<i8>>,
}

impl GatedArgmax {
    pub fn contains(&self, a: &[i8]) -> bool {
        self.maximizers.iter().any(|m| m == a)
    }
}

/// Enumerates all `2^cols` vectors `a` and keeps the maximisers of
/// `⟨b, W a⟩_g`.
pub fn exhaustive_argmax_gated(w: &DenseSign, g: &[u8], b: &[i8]) -> Result<GatedArgmax> {
    if w.cols > MAX_ENUM_COLS {
        return Err(Error::Config(format!(
            "exhaustive enumeration limited to {MAX_ENUM_COLS} columns, got {}",
            w.cols
        )));
    }
    let mut best = i64::MIN;
    let mut maximizers = Vec::new();
    for bits in 0..1u64 << w.cols {
        let a = vertex(bits, w.cols);
        let v = gated_objective(w, g, b, &a);
        if v > best {
            best = v;
            maximizers.clear();
        }
        if v == best {
            maximizers.push(a);
        }
    }
    Ok(GatedArgmax {
        max: best,
        maximizers,
    })
}

/// Enumerates the hypercube `[-1, 1]^cols` on a grid of step `1/steps`.
///
/// Passes when no grid point beats the best vertex and, if every
/// coordinate of `Wᵀ(g⊙b)` is nonzero, every grid point matching the best
/// vertex value is itself a vertex.
pub fn relaxation_integrality_check(w: &DenseSign, g: &[u8], b: &[i8], steps: u32) -> Result<bool> {
    let vertex_best = exhaustive_argmax_gated(w, g, b)?.max;
    let v = naive_gated_transpose(w, g, b);
    let all_nonzero = v.iter().all(|&x| x != 0);
    let n = w.cols;
    let s = steps as i64;
    let side = (2 * s + 1) as u64;
    let total = side
        .checked_pow(n as u32)
        .ok_or_else(|| Error::Config("grid too large".into()))?;
    let mut coords = vec![0i64; n];
    for idx in 0..total {
        let mut rem = idx;
        for c in coords.iter_mut() {
            *c = (rem % side) as i64 - s;
            rem /= side;
        }
        // objective scaled by `steps`: Σ_j v_j · coord_j
        let mut scaled = 0i64;
        for j in 0..n {
            scaled += v[j] * coords[j];
        }
        if scaled > vertex_best * s {
            return Ok(false);
        }
        if all_nonzero && scaled == vertex_best * s && coords.iter().any(|&c| c.abs() != s) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Reference forward pass of a feedforward ±1 network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NaiveTrace {
    pub pre: Vec<Vec<i64>>,
    pub act: Vec<Vec<i8>>,
    pub logits: Vec<i64>,
}

pub fn naive_forward(layers: &[DenseSign], prototypes: &DenseSign, input: &[i8]) -> NaiveTrace {
    let mut pre = Vec::new();
    let mut act = Vec::new();
    let mut cur = input.to_vec();
    for w in layers {
        let z = naive_matvec(w, &cur);
        cur = naive_sign(&z);
        pre.push(z);
        act.push(cur.clone());
    }
    let logits = naive_matvec(prototypes, &cur);
    NaiveTrace { pre, act, logits }
}

/// Reference forward pass of the many-to-one recurrent network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NaiveRnnTrace {
    pub pre: Vec<Vec<i64>>,
    pub states: Vec<Vec<i8>>,
    pub out_pre: Vec<i64>,
    pub out: Vec<i8>,
    pub logits: Vec<i64>,
}

pub fn naive_rnn_forward(
    w_xs: &DenseSign,
    w_ss: &DenseSign,
    w_sy: &DenseSign,
    prototypes: &DenseSign,
    s0: &[i8],
    inputs: &[Vec<i8>],
) -> NaiveRnnTrace {
    let mut s = s0.to_vec();
    let mut pre = Vec::new();
    let mut states = Vec::new();
    for a in inputs {
        let zx = naive_matvec(w_xs, a);
        let zs = naive_matvec(w_ss, &s);
        let z: Vec<i64> = zx.iter().zip(&zs).map(|(x, y)| x + y).collect();
        s = naive_sign(&z);
        pre.push(z);
        states.push(s.clone());
    }
    let out_pre = naive_matvec(w_sy, &s);
    let out = naive_sign(&out_pre);
    let logits = naive_matvec(prototypes, &out);
    NaiveRnnTrace {
        pre,
        states,
        out_pre,
        out,
        logits,
    }
}

/// What [`check_local_correctness`] found wrong, if anything.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LocalViolation {
    AlignmentGain {
        expected: i64,
        got: i64,
    },
    EntryStep {
        index: usize,
        before: i64,
        after: i64,
    },
}

/// Checks one selected neuron's row against the exact-increment property:
/// `a*·u' = a*·u + 2K` and each entry moved by exactly `2·a*·a_i`.
pub fn check_local_correctness(
    before: &[i64],
    after: &[i64],
    input: &[i8],
    desired: i8,
) -> std::result::Result<(), LocalViolation> {
    assert_eq!(before.len(), input.len());
    assert_eq!(after.len(), input.len());
    let u: i64 = before.iter().zip(input).map(|(&h, &a)| h * a as i64).sum();
    let u2: i64 = after.iter().zip(input).map(|(&h, &a)| h * a as i64).sum();
    let k = input.len() as i64;
    let expected = desired as i64 * u + 2 * k;
    if desired as i64 * u2 != expected {
        return Err(LocalViolation::AlignmentGain {
            expected,
            got: desired as i64 * u2,
        });
    }
    for i in 0..input.len() {
        if after[i] - before[i] != 2 * desired as i64 * input[i] as i64 {
            return Err(LocalViolation::EntryStep {
                index: i,
                before: before[i],
                after: after[i],
            });
        }
    }
    Ok(())
}

/// Per-group winner selection by direct scan: for each contiguous group,
/// the wrong index with the smallest key, lowest index on ties.
pub fn scan_group_winners(wrong: &[bool], key: &[i64], group: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < wrong.len() {
        let mut best: Option<usize> = None;
        for j in start..start + group {
            if wrong[j] && best.is_none_or(|b| key[j] < key[b]) {
                best = Some(j);
            }
        }
        out.extend(best);
        start += group;
    }
    out
}
