//! Group-size schedule: step to the next larger divisor of the layer
//! width after `patience` epochs without accuracy improvement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn divisors(n: usize) -> Vec<usize> {
    (1..=n).filter(|d| n.is_multiple_of(*d)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSchedule {
    pub divisors: Vec<usize>,
    pub index: usize,
}

impl LayerSchedule {
    pub fn current(&self) -> usize {
        self.divisors[self.index]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSchedule {
    pub layers: Vec<LayerSchedule>,
    pub patience: usize,
    /// Best accuracy seen so far, as `(correct, total)`.
    pub best: Option<(u64, u64)>,
    pub since_improvement: usize,
}

impl GroupSchedule {
    /// `widths[k]` and `initial[k]` describe schedule slot `k`.
    pub fn new(widths: &[usize], initial: &[usize], patience: usize) -> Result<Self> {
        if widths.len() != initial.len() {
            return Err(Error::Config(format!(
                "expected {} initial group sizes, got {}",
                widths.len(),
                initial.len()
            )));
        }
        let layers = widths
            .iter()
            .zip(initial)
            .map(|(&k, &g)| {
                let divisors = divisors(k);
                let index = divisors.iter().position(|&d| d == g).ok_or_else(|| {
                    Error::Config(format!("initial group size {g} does not divide width {k}"))
                })?;
                Ok(LayerSchedule { divisors, index })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            layers,
            patience: patience.max(1),
            best: None,
            since_improvement: 0,
        })
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(LayerSchedule::current).collect()
    }

    /// Records one epoch's accuracy; returns true if group sizes advanced.
    pub fn step(&mut self, correct: u64, total: u64) -> bool {
        let improved = match self.best {
            None => true,
            // correct/total > bc/bt, cross-multiplied
            Some((bc, bt)) => (correct as u128) * (bt as u128) > (bc as u128) * (total as u128),
        };
        if improved {
            self.best = Some((correct, total));
            self.since_improvement = 0;
            return false;
        }
        self.since_improvement += 1;
        if self.since_improvement < self.patience {
            return false;
        }
        self.since_improvement = 0;
        let mut moved = false;
        for l in &mut self.layers {
            if l.index + 1 < l.divisors.len() {
                l.index += 1;
                moved = true;
            }
        }
        moved
    }
}
