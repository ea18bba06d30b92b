//! Packed ±1 linear algebra.
//!
//! Every binary quantity in the crate is stored one bit per element with
//! bit 1 meaning +1 and bit 0 meaning −1. Bits are little-endian within
//! 64-bit words and the unused high bits of the last word of every vector
//! (and of every matrix row) are kept at zero, so popcounts never need a
//! per-call mask.
//!
//! Products of ±1 values reduce to XNOR and popcount:
//! `Σ a_i b_i = 2·popcount(XNOR(a, b)) − n`.

use std::fmt;
use std::ops::Deref;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Result};

pub type Word = u64;
pub const WORD_BITS: usize = Word::BITS as usize;

#[inline]
pub const fn words_for(len: usize) -> usize {
    len.div_ceil(WORD_BITS)
}

/// Mask selecting the valid bits of the last word for a vector of `len` bits.
#[inline]
const fn tail_mask(len: usize) -> Word {
    match len % WORD_BITS {
        0 => Word::MAX,
        r => (1 << r) - 1,
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitVector {
    len: usize,
    words: Vec<Word>,
}

impl BitVector {
    /// All −1.
    pub fn minus_ones(len: usize) -> Self {
        Self {
            len,
            words: vec![0; words_for(len)],
        }
    }

    /// All +1.
    pub fn plus_ones(len: usize) -> Self {
        let mut v = Self {
            len,
            words: vec![Word::MAX; words_for(len)],
        };
        v.clear_pad();
        v
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = Self::minus_ones(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                v.words[i / WORD_BITS] |= 1 << (i % WORD_BITS);
            }
        }
        v
    }

    /// Builds from ±1 values; any non-negative value is read as +1.
    pub fn from_pm1(values: &[i8]) -> Self {
        let mut v = Self::minus_ones(values.len());
        for (i, &x) in values.iter().enumerate() {
            if x >= 0 {
                v.words[i / WORD_BITS] |= 1 << (i % WORD_BITS);
            }
        }
        v
    }

    /// Reassembles a vector from raw words, zeroing any pad bits.
    pub fn from_words(len: usize, mut words: Vec<Word>) -> Result<Self> {
        ensure_dim("BitVector::from_words", words_for(len), words.len())?;
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(len);
        }
        Ok(Self { len, words })
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut v = Self {
            len,
            words: (0..words_for(len)).map(|_| rng.random::<Word>()).collect(),
        };
        v.clear_pad();
        v
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn words(&self) -> &[Word] {
        &self.words
    }

    /// True when element `i` is +1.
    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn get_pm1(&self, i: usize) -> i8 {
        if self.get(i) {
            1
        } else {
            -1
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, plus: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let bit = 1 << (i % WORD_BITS);
        if plus {
            self.words[i / WORD_BITS] |= bit;
        } else {
            self.words[i / WORD_BITS] &= !bit;
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.words[i / WORD_BITS] ^= 1 << (i % WORD_BITS);
    }

    pub fn negate(&self) -> Self {
        let mut v = Self {
            len: self.len,
            words: self.words.iter().map(|w| !w).collect(),
        };
        v.clear_pad();
        v
    }

    /// Number of +1 entries.
    #[inline]
    pub fn count_plus(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn to_pm1(&self) -> Vec<i8> {
        (0..self.len).map(|i| self.get_pm1(i)).collect()
    }

    pub fn iter_pm1(&self) -> impl Iterator<Item = i8> + '_ {
        (0..self.len).map(|i| self.get_pm1(i))
    }

    /// `[self; other]`.
    pub fn concat(&self, other: &BitVector) -> Self {
        let mut out = Self::minus_ones(self.len + other.len);
        out.words[..self.words.len()].copy_from_slice(&self.words);
        for i in 0..other.len {
            if other.get(i) {
                out.set(self.len + i, true);
            }
        }
        out
    }

    #[inline]
    fn clear_pad(&mut self) {
        let mask = tail_mask(self.len);
        if let Some(last) = self.words.last_mut() {
            *last &= mask;
        }
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector[{}](", self.len)?;
        for i in 0..self.len {
            f.write_str(if self.get(i) { "+" } else { "-" })?;
        }
        f.write_str(")")
    }
}

/// Binary gate: bit 1 passes, bit 0 blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GateVector(BitVector);

impl GateVector {
    pub fn all_pass(len: usize) -> Self {
        Self(BitVector::plus_ones(len))
    }

    pub fn all_blocked(len: usize) -> Self {
        Self(BitVector::minus_ones(len))
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        Self(BitVector::from_bools(bits))
    }

    #[inline]
    pub fn passes(&self, i: usize) -> bool {
        self.0.get(i)
    }

    pub fn count_pass(&self) -> usize {
        self.0.count_plus()
    }

    pub fn as_bits(&self) -> &BitVector {
        &self.0
    }
}

impl Deref for GateVector {
    type Target = BitVector;

    fn deref(&self) -> &BitVector {
        &self.0
    }
}

/// Signed integer pre-activations, logits and similar popcount results.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntVector(pub Vec<i32>);

impl IntVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0; len])
    }

    pub fn into_inner(self) -> Vec<i32> {
        self.0
    }
}

impl Deref for IntVector {
    type Target = [i32];

    fn deref(&self) -> &[i32] {
        &self.0
    }
}

impl From<Vec<i32>> for IntVector {
    fn from(v: Vec<i32>) -> Self {
        Self(v)
    }
}

/// Row-major packed ±1 matrix. Each row starts on a word boundary.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PackedBitMatrix {
    rows: usize,
    cols: usize,
    stride: usize,
    data: Vec<Word>,
}

impl PackedBitMatrix {
    /// All −1.
    pub fn minus_ones(rows: usize, cols: usize) -> Self {
        let stride = words_for(cols);
        Self {
            rows,
            cols,
            stride,
            data: vec![0; rows * stride],
        }
    }

    pub fn plus_ones(rows: usize, cols: usize) -> Self {
        let mut m = Self::minus_ones(rows, cols);
        m.data.fill(Word::MAX);
        m.clear_pad();
        m
    }

    pub fn from_rows(rows: &[BitVector]) -> Result<Self> {
        let cols = rows.first().map_or(0, BitVector::len);
        let mut m = Self::minus_ones(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            ensure_dim("PackedBitMatrix::from_rows", cols, r.len())?;
            m.row_words_mut(i).copy_from_slice(r.words());
        }
        Ok(m)
    }

    /// Row-major ±1 values; non-negative entries are +1.
    pub fn from_pm1(rows: usize, cols: usize, values: &[i8]) -> Result<Self> {
        ensure_dim("PackedBitMatrix::from_pm1", rows * cols, values.len())?;
        let mut m = Self::minus_ones(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                if values[i * cols + j] >= 0 {
                    m.set(i, j, true);
                }
            }
        }
        Ok(m)
    }

    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let mut m = Self::minus_ones(rows, cols);
        for w in &mut m.data {
            *w = rng.random();
        }
        m.clear_pad();
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row_stride_words(&self) -> usize {
        self.stride
    }

    #[inline]
    pub fn data(&self) -> &[Word] {
        &self.data
    }

    #[inline]
    pub fn row_words(&self, i: usize) -> &[Word] {
        &self.data[i * self.stride..(i + 1) * self.stride]
    }

    #[inline]
    pub(crate) fn row_words_mut(&mut self, i: usize) -> &mut [Word] {
        &mut self.data[i * self.stride..(i + 1) * self.stride]
    }

    pub fn row(&self, i: usize) -> BitVector {
        BitVector {
            len: self.cols,
            words: self.row_words(i).to_vec(),
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        debug_assert!(i < self.rows && j < self.cols);
        (self.data[i * self.stride + j / WORD_BITS] >> (j % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn get_pm1(&self, i: usize, j: usize) -> i8 {
        if self.get(i, j) {
            1
        } else {
            -1
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, plus: bool) {
        assert!(i < self.rows && j < self.cols, "({i},{j}) out of range");
        let bit = 1 << (j % WORD_BITS);
        let w = &mut self.data[i * self.stride + j / WORD_BITS];
        if plus {
            *w |= bit;
        } else {
            *w &= !bit;
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::minus_ones(self.cols, self.rows);
        for i in 0..self.rows {
            let row = self.row_words(i);
            for (wi, &word) in row.iter().enumerate() {
                let mut bits = word;
                while bits != 0 {
                    let b = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    let j = wi * WORD_BITS + b;
                    t.data[j * t.stride + i / WORD_BITS] |= 1 << (i % WORD_BITS);
                }
            }
        }
        t
    }

    /// Side-by-side concatenation `[self | right]`.
    pub fn hconcat(&self, right: &PackedBitMatrix) -> Result<Self> {
        ensure_dim("PackedBitMatrix::hconcat", self.rows, right.rows)?;
        let rows: Vec<BitVector> = (0..self.rows)
            .map(|i| self.row(i).concat(&right.row(i)))
            .collect();
        let mut m = Self::from_rows(&rows)?;
        if self.rows == 0 {
            m = Self::minus_ones(0, self.cols + right.cols);
        }
        Ok(m)
    }

    fn clear_pad(&mut self) {
        let mask = tail_mask(self.cols);
        if self.stride == 0 {
            return;
        }
        for i in 0..self.rows {
            self.data[i * self.stride + self.stride - 1] &= mask;
        }
    }
}

impl fmt::Debug for PackedBitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "PackedBitMatrix[{}x{}]", self.rows, self.cols)?;
        for i in 0..self.rows {
            for j in 0..self.cols {
                f.write_str(if self.get(i, j) { "+" } else { "-" })?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// XNOR-popcount over two equal-length word slices holding `len` bits.
#[inline]
fn dot_words(a: &[Word], b: &[Word], len: usize) -> i32 {
    let differ: u32 = a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum();
    // popcount(XNOR) = len − popcount(XOR) over the valid bits
    let agree = len as i32 - differ as i32;
    2 * agree - len as i32
}

/// `Σ a_i b_i` for ±1 vectors.
pub fn dot_pm1(a: &BitVector, b: &BitVector) -> Result<i32> {
    ensure_dim("dot_pm1", a.len(), b.len())?;
    Ok(dot_words(a.words(), b.words(), a.len()))
}

/// `W a` for a packed ±1 matrix and a ±1 vector.
pub fn matvec_pm1(w: &PackedBitMatrix, a: &BitVector) -> Result<IntVector> {
    ensure_dim("matvec_pm1", w.cols(), a.len())?;
    Ok(IntVector(
        (0..w.rows())
            .map(|i| dot_words(w.row_words(i), a.words(), w.cols()))
            .collect(),
    ))
}

/// Accumulates `W a` into `out` without allocating.
pub fn matvec_pm1_add_into(w: &PackedBitMatrix, a: &BitVector, out: &mut [i32]) -> Result<()> {
    ensure_dim("matvec_pm1_add_into", w.cols(), a.len())?;
    ensure_dim("matvec_pm1_add_into", w.rows(), out.len())?;
    for (i, o) in out.iter_mut().enumerate() {
        *o += dot_words(w.row_words(i), a.words(), w.cols());
    }
    Ok(())
}

/// `v_j = Σ_i g_i b_i W_ij`, given `W` in its natural orientation.
///
/// Transposes on every call; hot paths keep a cached transpose and call
/// [`gated_matvec_transposed`].
pub fn gated_matvec_transpose(
    w: &PackedBitMatrix,
    gate: &GateVector,
    b: &BitVector,
) -> Result<IntVector> {
    ensure_dim("gated_matvec_transpose", w.rows(), gate.len())?;
    ensure_dim("gated_matvec_transpose", w.rows(), b.len())?;
    gated_matvec_transposed(&w.transpose(), gate, b)
}

/// Same as [`gated_matvec_transpose`] but takes `Wᵀ` directly.
///
/// The ternary weights `g_i b_i` are kept as two bit planes: the gate is
/// the magnitude mask and `b` the sign plane. For column `j` the gated
/// agreement count is `popcount(g ∧ XNOR(b, Wᵀ_j))`.
pub fn gated_matvec_transposed(
    wt: &PackedBitMatrix,
    gate: &GateVector,
    b: &BitVector,
) -> Result<IntVector> {
    ensure_dim("gated_matvec_transposed", wt.cols(), gate.len())?;
    ensure_dim("gated_matvec_transposed", wt.cols(), b.len())?;
    let open = gate.count_pass() as i32;
    let g = gate.words();
    let bw = b.words();
    Ok(IntVector(
        (0..wt.rows())
            .map(|j| {
                let col = wt.row_words(j);
                let agree: u32 = col
                    .iter()
                    .zip(bw)
                    .zip(g)
                    .map(|((c, s), m)| (m & !(c ^ s)).count_ones())
                    .sum();
                2 * agree as i32 - open
            })
            .collect(),
    ))
}

/// Bit `i` is +1 iff `z_i ≥ 0`.
pub fn sign_to_bits(z: &[i32]) -> BitVector {
    let mut v = BitVector::minus_ones(z.len());
    for (wi, chunk) in z.chunks(WORD_BITS).enumerate() {
        let mut word = 0;
        for (b, &x) in chunk.iter().enumerate() {
            word |= ((x >= 0) as Word) << b;
        }
        v.words[wi] = word;
    }
    v
}

/// `u vᵀ` as a packed matrix.
pub fn outer_pm1(u: &BitVector, v: &BitVector) -> PackedBitMatrix {
    let neg = v.negate();
    let mut m = PackedBitMatrix::minus_ones(u.len(), v.len());
    for i in 0..u.len() {
        let src = if u.get(i) { v.words() } else { neg.words() };
        m.row_words_mut(i).copy_from_slice(src);
    }
    m
}
