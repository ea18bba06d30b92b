//! Fixed binary classifier built as a near-equiangular frame of class
//! prototypes.
//!
//! The search minimises `Σ_{i<j} g_ij + α·Var_{i<j}(g_ij)` over the Gram
//! entries `g_ij = ⟨ρ_i, ρ_j⟩` by greedy single-bit flips. The pair sum `S`
//! and square sum `Q` are tracked exactly as integers, so a flip's cost
//! change is `ΔS + α·(P·ΔQ − 2SΔS − ΔS²)/P²` with `P` the pair count.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bits::{dot_pm1, words_for, BitVector, IntVector, Word};
use crate::error::{ensure_dim, Error, Result};

pub const FRAME_MAGIC: &[u8; 4] = b"BEPF";
pub const FRAME_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct FrameSearchConfig {
    pub classes: usize,
    pub dim: usize,
    pub alpha: f64,
    pub iterations: u64,
    pub seed: u32,
}

impl FrameSearchConfig {
    pub const DEFAULT_ALPHA: f64 = 4.0;

    /// Default budget of `200·C·D` proposals.
    pub fn with_defaults(classes: usize, dim: usize, seed: u32) -> Self {
        Self {
            classes,
            dim,
            alpha: Self::DEFAULT_ALPHA,
            iterations: 200 * classes as u64 * dim as u64,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config("frame needs at least 2 classes".into()));
        }
        if self.classes > u16::MAX as usize || self.dim > u32::MAX as usize {
            return Err(Error::Config("frame dimensions exceed file format".into()));
        }
        if self.dim == 0 {
            return Err(Error::Config("frame dimension must be positive".into()));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::Config(format!(
                "alpha must be ≥ 0, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// The rows `ρ^c` of the fixed classifier, with their Gram matrix cached.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrototypeFrame {
    prototypes: Vec<BitVector>,
    gram: Vec<i32>,
    seed: u32,
}

impl PrototypeFrame {
    pub fn from_prototypes(prototypes: Vec<BitVector>, seed: u32) -> Result<Self> {
        if prototypes.len() < 2 {
            return Err(Error::Config("frame needs at least 2 prototypes".into()));
        }
        let dim = prototypes[0].len();
        for p in &prototypes {
            ensure_dim("PrototypeFrame", dim, p.len())?;
        }
        let c = prototypes.len();
        let mut gram = vec![0; c * c];
        for i in 0..c {
            for j in i..c {
                let g = dot_pm1(&prototypes[i], &prototypes[j])?;
                gram[i * c + j] = g;
                gram[j * c + i] = g;
            }
        }
        Ok(Self {
            prototypes,
            gram,
            seed,
        })
    }

    pub fn random<R: Rng + ?Sized>(classes: usize, dim: usize, rng: &mut R) -> Result<Self> {
        let rows = (0..classes).map(|_| BitVector::random(dim, rng)).collect();
        Self::from_prototypes(rows, 0)
    }

    #[inline]
    pub fn classes(&self) -> usize {
        self.prototypes.len()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.prototypes[0].len()
    }

    pub fn seed(&self) -> u32 {
        self.seed
    }

    #[inline]
    pub fn prototype(&self, c: usize) -> &BitVector {
        &self.prototypes[c]
    }

    pub fn prototypes(&self) -> &[BitVector] {
        &self.prototypes
    }

    #[inline]
    pub fn gram(&self, i: usize, j: usize) -> i32 {
        self.gram[i * self.classes() + j]
    }

    pub fn off_diagonal(&self) -> Vec<i32> {
        let c = self.classes();
        let mut out = Vec::with_capacity(c * (c - 1) / 2);
        for i in 0..c {
            for j in i + 1..c {
                out.push(self.gram(i, j));
            }
        }
        out
    }

    fn pair_stats(&self) -> PairStats {
        PairStats::from_values(&self.off_diagonal())
    }

    /// `ŷ = P a_L`.
    pub fn logits(&self, a_last: &BitVector) -> Result<IntVector> {
        ensure_dim("logits", self.dim(), a_last.len())?;
        self.prototypes
            .iter()
            .map(|p| dot_pm1(p, a_last))
            .collect::<Result<Vec<_>>>()
            .map(IntVector)
    }

    /// Writes the standalone frame file: 16-byte header then packed rows.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(FRAME_MAGIC)?;
        w.write_u16::<LittleEndian>(FRAME_VERSION)?;
        w.write_u16::<LittleEndian>(self.classes() as u16)?;
        w.write_u32::<LittleEndian>(self.dim() as u32)?;
        w.write_u32::<LittleEndian>(self.seed)?;
        for p in &self.prototypes {
            for &word in p.words() {
                w.write_u64::<LittleEndian>(word)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let bad = |e: std::io::Error| Error::Checkpoint(format!("frame: {e}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(bad)?;
        if &magic != FRAME_MAGIC {
            return Err(Error::Checkpoint("frame: bad magic".into()));
        }
        let version = r.read_u16::<LittleEndian>().map_err(bad)?;
        if version != FRAME_VERSION {
            return Err(Error::Checkpoint(format!(
                "frame: unsupported version {version}"
            )));
        }
        let classes = r.read_u16::<LittleEndian>().map_err(bad)? as usize;
        let dim = r.read_u32::<LittleEndian>().map_err(bad)? as usize;
        let seed = r.read_u32::<LittleEndian>().map_err(bad)?;
        let mut rows = Vec::with_capacity(classes);
        for _ in 0..classes {
            let words = (0..words_for(dim))
                .map(|_| r.read_u64::<LittleEndian>())
                .collect::<std::io::Result<Vec<Word>>>()
                .map_err(bad)?;
            let v = BitVector::from_words(dim, words.clone())?;
            if v.words() != words.as_slice() {
                return Err(Error::Checkpoint("frame: nonzero pad bits".into()));
            }
            rows.push(v);
        }
        Self::from_prototypes(rows, seed).map_err(|e| Error::Checkpoint(format!("frame: {e}")))
    }
}

/// Exact integer statistics of the off-diagonal Gram entries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct PairStats {
    pairs: i64,
    sum: i64,
    sum_sq: i64,
}

impl PairStats {
    fn from_values(values: &[i32]) -> Self {
        Self {
            pairs: values.len() as i64,
            sum: values.iter().map(|&g| g as i64).sum(),
            sum_sq: values.iter().map(|&g| (g as i64) * (g as i64)).sum(),
        }
    }

    /// `P²·Var = P·Q − S²`.
    fn scaled_variance(&self) -> i64 {
        self.pairs * self.sum_sq - self.sum * self.sum
    }

    fn cost<F: Float>(&self, alpha: F) -> F {
        let p2 = F::from(self.pairs * self.pairs).unwrap();
        F::from(self.sum).unwrap() + alpha * F::from(self.scaled_variance()).unwrap() / p2
    }
}

/// `Σ_{i<j} g_ij + α·Var_{i<j}(g_ij)` with population variance.
pub fn frame_cost<F: Float>(frame: &PrototypeFrame, alpha: F) -> F {
    frame.pair_stats().cost(alpha)
}

/// Outcome of a frame search.
#[derive(Clone, Debug)]
pub struct FrameSearch {
    pub frame: PrototypeFrame,
    pub initial_cost: f64,
    /// Cost after each accepted flip.
    pub cost_trace: Vec<f64>,
    pub accepted: u64,
}

pub fn search_frame(config: &FrameSearchConfig) -> Result<PrototypeFrame> {
    search_frame_traced(config).map(|s| s.frame)
}

pub fn search_frame_traced(config: &FrameSearchConfig) -> Result<FrameSearch> {
    config.validate()?;
    let (c, d) = (config.classes, config.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed as u64);
    let mut frame = PrototypeFrame::random(c, d, &mut rng)?;
    frame.seed = config.seed;

    let mut stats = frame.pair_stats();
    let p2 = (stats.pairs * stats.pairs) as f64;
    let initial_cost = stats.cost(config.alpha);
    let mut cost_trace = Vec::new();
    let mut accepted = 0;
    let mut deltas = vec![0i64; c];

    for _ in 0..config.iterations {
        let i = rng.random_range(0..c);
        let k = rng.random_range(0..d);
        let ri = frame.prototypes[i].get_pm1(k) as i64;

        let (mut d_sum, mut d_sq) = (0i64, 0i64);
        for (j, slot) in deltas.iter_mut().enumerate() {
            if j == i {
                continue;
            }
            let delta = -2 * ri * frame.prototypes[j].get_pm1(k) as i64;
            let g = frame.gram(i, j) as i64;
            *slot = delta;
            d_sum += delta;
            d_sq += 2 * g * delta + delta * delta;
        }
        let d_var = stats.pairs * d_sq - 2 * stats.sum * d_sum - d_sum * d_sum;
        let scaled = d_sum as f64 * p2 + config.alpha * d_var as f64;
        if scaled < 0.0 {
            frame.prototypes[i].flip(k);
            for (j, &delta) in deltas.iter().enumerate() {
                if j != i {
                    let g = frame.gram[i * c + j] + delta as i32;
                    frame.gram[i * c + j] = g;
                    frame.gram[j * c + i] = g;
                }
            }
            stats.sum += d_sum;
            stats.sum_sq += d_sq;
            accepted += 1;
            cost_trace.push(stats.cost(config.alpha));
        }
    }
    debug_assert_eq!(stats, frame.pair_stats());
    Ok(FrameSearch {
        frame,
        initial_cost,
        cost_trace,
        accepted,
    })
}
