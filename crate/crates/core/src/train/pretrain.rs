//! Full-batch VAE pretraining on encoded microdata.

use std::io::Write;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::lion::{lion_step, LionConfig, LionState};
use super::schedule::Schedule;
use crate::error::{Error, Result};
use crate::ingest::EncodedMatrix;
use crate::losses::{focal_loss, latent_kl, zero_fraction, FocalParams};
use crate::nn::{reparameterize, reparameterize_backward, Mode};
use crate::vae::VaeModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub schedule: Schedule,
    pub seed: u64,
    /// Weight of the latent KL term.
    pub beta: f64,
    /// `None` uses the fraction of zeros in the training matrix.
    pub focal_alpha: Option<f64>,
    pub focal_gamma: f64,
    pub lion: LionConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            schedule: Schedule::default(),
            seed: 0,
            beta: 1.0,
            focal_alpha: None,
            focal_gamma: 2.0,
            lion: LionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainRecord {
    pub epoch: usize,
    pub lr: f64,
    pub focal: f64,
    pub latent_kl: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PretrainHistory {
    pub focal_params: Option<FocalParams>,
    pub records: Vec<PretrainRecord>,
}

impl PretrainHistory {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::parse("<history>", e);
        w.write_record(["epoch", "lr", "focal", "latent_kl", "total"]).map_err(err)?;
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                r.lr.to_string(),
                r.focal.to_string(),
                r.latent_kl.to_string(),
                r.total.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io("<history>", e))
    }
}

/// Standard-normal noise for `epoch`, from a counter-based stream of `seed`.
pub fn epoch_noise(seed: u64, epoch: u64, rows: usize, cols: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut rng))
}

/// Trains all encoder and decoder parameters, one full-batch step per epoch.
pub fn pretrain(model: &mut VaeModel, data: &EncodedMatrix, config: &TrainConfig) -> Result<PretrainHistory> {
    config.schedule.validate()?;
    model.ensure_schema(&data.layout.schema)?;
    if data.n_rows() < 2 {
        return Err(Error::invalid("pretraining needs at least two households"));
    }
    let x = &data.values;
    let alpha = config.focal_alpha.unwrap_or_else(|| zero_fraction(x));
    let focal = FocalParams::new(alpha, config.focal_gamma)?;
    let mode = model.config.reparam;
    let mut state = LionState::new(config.lion)?;
    let mut history = PretrainHistory {
        focal_params: Some(focal),
        records: Vec::with_capacity(config.schedule.epochs),
    };

    for epoch in 0..config.schedule.epochs {
        let lr = config.schedule.lr(epoch);
        let (mu, logsig, enc_tape) = model.encode_with_tape(x, Mode::Train)?;
        let noise = epoch_noise(config.seed, epoch as u64, mu.nrows(), mu.ncols());
        let z = reparameterize(&mu, &logsig, &noise, mode)?;
        let (probs, dec_tape) = model.decode_with_tape(&z, Mode::Train)?;
        let rec = focal_loss(&probs, x, focal)?;
        let kl = latent_kl(&mu, &logsig)?;
        let total = rec.value + config.beta * kl.value;
        if !total.is_finite() {
            return Err(Error::NonFinite(format!("pretraining loss at epoch {epoch}")));
        }

        let mut grads = model.zero_grads();
        let dz = model.backward_decoder(&dec_tape, rec.grad, &mut grads.decoder)?;
        let (mut dmu, mut dlogsig) = reparameterize_backward(&logsig, &noise, mode, &dz)?;
        dmu.scaled_add(config.beta, &kl.grad_mu);
        dlogsig.scaled_add(config.beta, &kl.grad_logsig);
        model.backward_encoder(&enc_tape, dmu, dlogsig, &mut grads)?;
        model.commit_running_stats(&enc_tape, &dec_tape);

        let grad_blocks = grads.blocks();
        let mut params = model.param_blocks_mut();
        lion_step(&mut params, &grad_blocks, &mut state, lr)?;

        history.records.push(PretrainRecord {
            epoch,
            lr,
            focal: rec.value,
            latent_kl: kl.value,
            total,
        });
        if epoch % 100 == 0 {
            log::debug!("pretrain epoch {epoch}: focal {:.6} kl {:.6}", rec.value, kl.value);
        }
    }
    Ok(history)
}
