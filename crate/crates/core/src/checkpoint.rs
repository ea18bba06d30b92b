//! Binary checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "BEPC" | version u16 | kind u8 | B u8 | seed u64
//! matrix count u32, then per matrix: fan_out u32 | fan_in u32 | step i32 |
//!     fan_out·fan_in hidden values of ceil(B/8) bytes each
//! s0 (recurrent only): length u32 | words u64…
//! frame: standalone frame file bytes
//! encoder flag u8; if set: bits_per_feature u32 | count u32 | f32… |
//!     expansion flag u8 [out u32 | in u32 | seed u64]
//! hyperparameters: length u32 | JSON
//! training state: length u32 | JSON
//! rng word positions: count u32 | (lo u64, hi u64)…, shuffle stream first
//! ```

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::bep::{GroupSchedule, Hyperparams, Network};
use crate::beptt::RnnModel;
use crate::bits::{words_for, BitVector};
use crate::encode::{ExpansionLayer, InputEncoder, ThermometerCodec};
use crate::error::{Error, Result};
use crate::frames::PrototypeFrame;
use crate::layer::Layer;
use crate::scalar::Stability;
use crate::train::{stream, TrainState, STREAM_REINFORCE, STREAM_SHUFFLE};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"BEPC";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mlp,
    Rnn,
}

#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug, PartialEq)]
pub enum Model<S> {
    Mlp(Network<S>),
    Rnn(RnnModel<S>),
}

impl<S: Stability> Model<S> {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Mlp(_) => ModelKind::Mlp,
            Model::Rnn(_) => ModelKind::Rnn,
        }
    }

    pub fn hyper(&self) -> &Hyperparams {
        match self {
            Model::Mlp(m) => m.hyper(),
            Model::Rnn(m) => m.hyper(),
        }
    }

    pub fn frame(&self) -> &PrototypeFrame {
        match self {
            Model::Mlp(m) => m.frame(),
            Model::Rnn(m) => m.frame(),
        }
    }

    fn matrices(&self) -> Vec<&Layer<S>> {
        match self {
            Model::Mlp(m) => m.layers().iter().collect(),
            Model::Rnn(m) => vec![m.input_layer(), m.recurrent_layer(), m.output_layer()],
        }
    }
}

/// Schedule, epoch counter and best validation score of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSnapshot {
    pub seed: u64,
    pub epoch: usize,
    pub last_error: (u64, u64),
    pub schedule: GroupSchedule,
    /// Best validation `(correct, total)` seen, and the epoch it came from.
    pub best_validation: Option<(u64, u64, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<S> {
    pub model: Model<S>,
    pub encoder: Option<InputEncoder<f32>>,
    pub train: TrainSnapshot,
    /// Word positions of the shuffle stream and each reinforcement stream.
    pub rng_positions: Vec<u128>,
}

impl<S> Checkpoint<S> {
    pub fn snapshot_state(
        state: &TrainState,
        best_validation: Option<(u64, u64, usize)>,
    ) -> (TrainSnapshot, Vec<u128>) {
        let mut pos = vec![state.shuffle_rng.get_word_pos()];
        pos.extend(state.reinforce_rngs.iter().map(|r| r.get_word_pos()));
        (
            TrainSnapshot {
                seed: state.seed,
                epoch: state.epoch,
                last_error: state.last_error,
                schedule: state.schedule.clone(),
                best_validation,
            },
            pos,
        )
    }

    /// Rebuilds the training state, with every stream at its saved position.
    pub fn restore_state(&self) -> TrainState {
        let seed = self.train.seed;
        let mut shuffle_rng = stream(seed, STREAM_SHUFFLE);
        let mut reinforce_rngs = Vec::new();
        for (k, &p) in self.rng_positions.iter().enumerate() {
            if k == 0 {
                shuffle_rng.set_word_pos(p);
            } else {
                let mut r = stream(seed, STREAM_REINFORCE + (k - 1) as u64);
                r.set_word_pos(p);
                reinforce_rngs.push(r);
            }
        }
        TrainState {
            epoch: self.train.epoch,
            last_error: self.train.last_error,
            schedule: self.train.schedule.clone(),
            shuffle_rng,
            reinforce_rngs,
            seed,
        }
    }
}

fn bad(e: std::io::Error) -> Error {
    Error::Checkpoint(e.to_string())
}

fn value_bytes(bits: u32) -> usize {
    bits.div_ceil(8) as usize
}

/// Reads `B` from a checkpoint header so callers can pick the weight type.
pub fn peek_bits(bytes: &[u8]) -> Result<u32> {
    if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    Ok(bytes[7] as u32)
}

fn write_json<W: Write, T: Serialize>(w: &mut W, v: &T) -> Result<()> {
    let s = serde_json::to_vec(v).map_err(|e| Error::Checkpoint(e.to_string()))?;
    w.write_u32::<LittleEndian>(s.len() as u32).map_err(bad)?;
    w.write_all(&s).map_err(bad)
}

fn read_json<R: Read, T: for<'de> Deserialize<'de>>(r: &mut R) -> Result<T> {
    let n = r.read_u32::<LittleEndian>().map_err(bad)? as usize;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf).map_err(bad)?;
    serde_json::from_slice(&buf).map_err(|e| Error::Checkpoint(e.to_string()))
}

fn read_dim<R: Read>(r: &mut R) -> Result<usize> {
    Ok(r.read_u32::<LittleEndian>().map_err(bad)? as usize)
}

impl<S: Stability> Checkpoint<S> {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Vec::new();
        let hyper = self.model.hyper();
        let bits = hyper.bits;
        w.extend_from_slice(CHECKPOINT_MAGIC);
        w.write_u16::<LittleEndian>(CHECKPOINT_VERSION)
            .map_err(bad)?;
        w.write_u8(match self.model.kind() {
            ModelKind::Mlp => 0,
            ModelKind::Rnn => 1,
        })
        .map_err(bad)?;
        w.write_u8(bits as u8).map_err(bad)?;
        w.write_u64::<LittleEndian>(self.train.seed).map_err(bad)?;

        let matrices = self.model.matrices();
        let width = value_bytes(bits);
        w.write_u32::<LittleEndian>(matrices.len() as u32)
            .map_err(bad)?;
        for m in matrices {
            w.write_u32::<LittleEndian>(m.fan_out() as u32)
                .map_err(bad)?;
            w.write_u32::<LittleEndian>(m.fan_in() as u32)
                .map_err(bad)?;
            w.write_i32::<LittleEndian>(m.step() as i32).map_err(bad)?;
            for h in m.hidden() {
                w.extend_from_slice(&h.widen().to_le_bytes()[..width]);
            }
        }
        if let Model::Rnn(m) = &self.model {
            w.write_u32::<LittleEndian>(m.s0().len() as u32)
                .map_err(bad)?;
            for &word in m.s0().words() {
                w.write_u64::<LittleEndian>(word).map_err(bad)?;
            }
        }
        self.model.frame().write_to(&mut w).map_err(bad)?;

        match &self.encoder {
            None => w.write_u8(0).map_err(bad)?,
            Some(enc) => {
                w.write_u8(1).map_err(bad)?;
                w.write_u32::<LittleEndian>(enc.codec.bits_per_feature() as u32)
                    .map_err(bad)?;
                w.write_u32::<LittleEndian>(enc.codec.thresholds().len() as u32)
                    .map_err(bad)?;
                for &t in enc.codec.thresholds() {
                    w.write_f32::<LittleEndian>(t).map_err(bad)?;
                }
                match &enc.expansion {
                    None => w.write_u8(0).map_err(bad)?,
                    Some(e) => {
                        w.write_u8(1).map_err(bad)?;
                        w.write_u32::<LittleEndian>(e.out_dim() as u32)
                            .map_err(bad)?;
                        w.write_u32::<LittleEndian>(e.in_dim() as u32)
                            .map_err(bad)?;
                        w.write_u64::<LittleEndian>(e.seed()).map_err(bad)?;
                    }
                }
            }
        }
        write_json(&mut w, hyper)?;
        write_json(&mut w, &self.train)?;
        w.write_u32::<LittleEndian>(self.rng_positions.len() as u32)
            .map_err(bad)?;
        for &p in &self.rng_positions {
            w.write_u64::<LittleEndian>(p as u64).map_err(bad)?;
            w.write_u64::<LittleEndian>((p >> 64) as u64).map_err(bad)?;
        }
        Ok(w)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(bad)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.read_u16::<LittleEndian>().map_err(bad)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let kind = match r.read_u8().map_err(bad)? {
            0 => ModelKind::Mlp,
            1 => ModelKind::Rnn,
            k => return Err(Error::Checkpoint(format!("unknown model kind {k}"))),
        };
        let bits = r.read_u8().map_err(bad)? as u32;
        if bits > S::MAX_BITS {
            return Err(Error::Checkpoint(format!(
                "B={bits} does not fit the {}-bit weight type",
                S::MAX_BITS
            )));
        }
        let seed = r.read_u64::<LittleEndian>().map_err(bad)?;

        let count = read_dim(&mut r)?;
        let width = value_bytes(bits);
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let fan_out = read_dim(&mut r)?;
            let fan_in = read_dim(&mut r)?;
            let step = r.read_i32::<LittleEndian>().map_err(bad)? as i64;
            let n = fan_out
                .checked_mul(fan_in)
                .filter(|&n| n.saturating_mul(width) <= r.len())
                .ok_or_else(|| Error::Checkpoint("weight blob truncated".into()))?;
            let mut hidden = Vec::with_capacity(n);
            for _ in 0..n {
                let v = r.read_int::<LittleEndian>(width).map_err(bad)?;
                hidden.push(S::narrow(v));
            }
            let layer = Layer::from_hidden(fan_out, fan_in, hidden, bits, step)
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
            layers.push(layer);
        }
        let s0 = if kind == ModelKind::Rnn {
            let len = read_dim(&mut r)?;
            let words = (0..words_for(len))
                .map(|_| r.read_u64::<LittleEndian>())
                .collect::<std::io::Result<Vec<_>>>()
                .map_err(bad)?;
            Some(BitVector::from_words(len, words)?)
        } else {
            None
        };
        let frame = PrototypeFrame::read_from(&mut r)?;

        let encoder = match r.read_u8().map_err(bad)? {
            0 => None,
            _ => {
                let bpf = read_dim(&mut r)?;
                let n = read_dim(&mut r)?;
                if n.saturating_mul(4) > r.len() {
                    return Err(Error::Checkpoint("encoder table truncated".into()));
                }
                let mut t = vec![0f32; n];
                r.read_f32_into::<LittleEndian>(&mut t).map_err(bad)?;
                let codec = ThermometerCodec::from_thresholds(bpf, t)
                    .map_err(|e| Error::Checkpoint(e.to_string()))?;
                let expansion = match r.read_u8().map_err(bad)? {
                    0 => None,
                    _ => {
                        let out = read_dim(&mut r)?;
                        let inp = read_dim(&mut r)?;
                        let s = r.read_u64::<LittleEndian>().map_err(bad)?;
                        Some(ExpansionLayer::new(out, inp, s))
                    }
                };
                Some(InputEncoder { codec, expansion })
            }
        };
        let hyper: Hyperparams = read_json(&mut r)?;
        if hyper.bits != bits {
            return Err(Error::Checkpoint(
                "header and hyperparameters disagree on B".into(),
            ));
        }
        let train: TrainSnapshot = read_json(&mut r)?;
        let n = read_dim(&mut r)?;
        let mut rng_positions = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            let lo = r.read_u64::<LittleEndian>().map_err(bad)? as u128;
            let hi = r.read_u64::<LittleEndian>().map_err(bad)? as u128;
            rng_positions.push(lo | (hi << 64));
        }
        if !r.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", r.len())));
        }
        if train.seed != seed {
            return Err(Error::Checkpoint(
                "header and state disagree on seed".into(),
            ));
        }

        let model = match kind {
            ModelKind::Mlp => Model::Mlp(Network::from_parts(layers, frame, hyper)?),
            ModelKind::Rnn => {
                let [input, recurrent, output]: [Layer<S>; 3] = layers
                    .try_into()
                    .map_err(|_| Error::Checkpoint("recurrent model needs 3 matrices".into()))?;
                let s0 = s0.expect("read for rnn");
                Model::Rnn(RnnModel::from_parts(
                    input, recurrent, output, frame, s0, hyper,
                )?)
            }
        };
        Ok(Self {
            model,
            encoder,
            train,
            rng_positions,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
