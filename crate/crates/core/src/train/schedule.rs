use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constant learning rate, then exponential decay that lands exactly on
/// `min_lr` at the final epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub initial_lr: f64,
    pub min_lr: f64,
    pub epochs: usize,
    pub decay_start_epoch: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            initial_lr: 1e-3,
            min_lr: 1e-4,
            epochs: 4000,
            decay_start_epoch: 1000,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0 && self.min_lr > 0.0) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        if self.min_lr > self.initial_lr {
            return Err(Error::invalid("min_lr exceeds initial_lr"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.decay_start_epoch > self.epochs {
            return Err(Error::invalid("decay_start_epoch exceeds epochs"));
        }
        Ok(())
    }

    /// Learning rate for a zero-based epoch.
    pub fn lr(&self, epoch: usize) -> f64 {
        if epoch < self.decay_start_epoch {
            return self.initial_lr;
        }
        let last = self.epochs.saturating_sub(1);
        if last <= self.decay_start_epoch {
            return self.min_lr;
        }
        let span = (last - self.decay_start_epoch) as f64;
        let ratio = (self.min_lr / self.initial_lr).powf(1.0 / span);
        let lr = self.initial_lr * ratio.powf((epoch - self.decay_start_epoch) as f64);
        if epoch >= last {
            self.min_lr
        } else {
            lr.max(self.min_lr)
        }
    }
}

pub fn lr_schedule(epoch: usize, schedule: &Schedule) -> f64 {
    schedule.lr(epoch)
}
