//! Stochastic reinforcement `h ← h + 2·sign(h)`.
//!
//! Each entry is hit independently with probability
//! `p_r·√E·√(2/(π·K))`, `K` being the layer width and `E` the last epoch's
//! training error. Hits are located by geometric gap sampling, which has
//! the same distribution as one Bernoulli draw per entry.

use rand::Rng;
use rand_distr::{Distribution, Geometric};

use crate::error::{Error, Result};
use crate::layer::Layer;
use crate::scalar::Stability;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReinforceStats {
    pub reinforced: u64,
    pub saturated: u64,
}

/// Per-entry reinforcement probability for a layer of width `width`.
pub fn reinforce_probability(p_r: f64, epoch_error: f64, width: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_r) || !(0.0..=1.0).contains(&epoch_error) {
        return Err(Error::Config(format!(
            "reinforcement needs p_r, E in [0, 1], got {p_r}, {epoch_error}"
        )));
    }
    if width == 0 {
        return Ok(0.0);
    }
    let p = p_r * epoch_error.sqrt() * (2.0 / (std::f64::consts::PI * width as f64)).sqrt();
    Ok(p.min(1.0))
}

pub fn reinforce<S: Stability, R: Rng + ?Sized>(
    layer: &mut Layer<S>,
    p_r: f64,
    epoch_error: f64,
    rng: &mut R,
) -> Result<ReinforceStats> {
    let p = reinforce_probability(p_r, epoch_error, layer.fan_out())?;
    let mut stats = ReinforceStats::default();
    if p <= 0.0 {
        return Ok(stats);
    }
    let total = (layer.fan_out() * layer.fan_in()) as u64;
    let gaps = Geometric::new(p).map_err(|e| Error::Config(e.to_string()))?;
    let mut idx = gaps.sample(rng);
    while idx < total {
        stats.reinforced += 1;
        stats.saturated += layer.reinforce_entry(idx as usize) as u64;
        idx = idx.saturating_add(1).saturating_add(gaps.sample(rng));
    }
    Ok(stats)
}
