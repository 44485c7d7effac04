//! Latent-matrix fine-tuning through a frozen decoder.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::lion::{lion_step, LionConfig, LionState};
use super::schedule::Schedule;
use crate::error::{Error, Result};
use crate::ingest::{ColumnLayout, EncodedMatrix, Marginals, TargetMarginals};
use crate::losses::{dbce, marginal_rmse_loss};
use crate::nn::{reparameterize, Mode};
use crate::vae::VaeModel;

/// Trainable decoder input, one row per household to generate.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMatrix {
    pub z: Array2<f64>,
    pub seed: u64,
    pub state: Option<LionState>,
}

/// Rows drawn from the unit normal.
pub fn init_latent(n_households: usize, width: usize, seed: u64) -> Result<LatentMatrix> {
    if n_households == 0 {
        return Err(Error::invalid("latent matrix needs at least one household"));
    }
    if width == 0 {
        return Err(Error::invalid("latent width must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Array2::from_shape_simple_fn((n_households, width), || StandardNormal.sample(&mut rng));
    Ok(LatentMatrix { z, seed, state: None })
}

/// Encodes microdata in eval mode and draws one posterior sample per row.
pub fn posterior_latent(model: &VaeModel, data: &EncodedMatrix, seed: u64) -> Result<LatentMatrix> {
    model.ensure_schema(&data.layout.schema)?;
    if data.n_rows() == 0 {
        return Err(Error::invalid("latent matrix needs at least one household"));
    }
    let (mu, logsig) = model.encode(&data.values, Mode::Eval)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Array2::from_shape_simple_fn(mu.raw_dim(), || StandardNormal.sample(&mut rng));
    let z = reparameterize(&mu, &logsig, &noise, model.config.reparam)?;
    Ok(LatentMatrix { z, seed, state: None })
}

const LATENT_MAGIC: &[u8; 8] = b"TSYNLAT\0";

impl LatentMatrix {
    pub fn n_households(&self) -> usize {
        self.z.nrows()
    }

    /// Magic, version u32, rows u64, cols u64, seed u64, then f64 values
    /// row-major; all little-endian.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = Vec::with_capacity(36 + self.z.len() * 8);
        buf.extend_from_slice(LATENT_MAGIC);
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&(self.z.nrows() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.z.ncols() as u64).to_le_bytes());
        buf.extend_from_slice(&self.seed.to_le_bytes());
        for v in self.z.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf).map_err(|e| Error::io("<latent>", e))
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut buf = Vec::new();
        input.read_to_end(&mut buf).map_err(|e| Error::io("<latent>", e))?;
        let bad = |m: &str| Error::ModelFormat(format!("latent file: {m}"));
        if buf.len() < 36 || &buf[..8] != LATENT_MAGIC {
            return Err(bad("bad header"));
        }
        let word = |i: usize| u64::from_le_bytes(buf[i..i + 8].try_into().expect("8 bytes"));
        if u32::from_le_bytes(buf[8..12].try_into().expect("4 bytes")) != 1 {
            return Err(bad("unsupported version"));
        }
        let (rows, cols, seed) = (word(12) as usize, word(20) as usize, word(28));
        if buf.len() != 36 + rows * cols * 8 {
            return Err(bad("length does not match dimensions"));
        }
        let values = buf[36..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let z = Array2::from_shape_vec((rows, cols), values).map_err(|e| bad(&e.to_string()))?;
        Ok(LatentMatrix { z, seed, state: None })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub schedule: Schedule,
    pub seed: u64,
    pub w_marginal: f64,
    pub w_dbce: f64,
    pub w_norm_kl: f64,
    /// Softmin temperature on the per-column-mean BCE scale; `None` uses `1/D`.
    pub temperature: Option<f64>,
    /// Seeded subsample of microdata rows used as the D-BCE reference.
    pub reference_rows: Option<usize>,
    pub lion: LionConfig,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            schedule: Schedule::default(),
            seed: 0,
            w_marginal: 1.0,
            w_dbce: 1.0,
            w_norm_kl: 0.1,
            temperature: None,
            reference_rows: None,
            lion: LionConfig::default(),
        }
    }
}

impl FinetuneConfig {
    pub fn temperature_for(&self, width: usize) -> f64 {
        self.temperature.unwrap_or(1.0 / width as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinetuneRecord {
    pub epoch: usize,
    pub lr: f64,
    pub marginal_rmse: f64,
    pub dbce: f64,
    pub norm_kl: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneHistory {
    pub records: Vec<FinetuneRecord>,
    /// Soft marginals of the decoded batch after the final update.
    pub final_soft_marginals: Marginals,
    pub final_dbce: f64,
}

impl FinetuneHistory {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::parse("<history>", e);
        w.write_record(["epoch", "lr", "marginal_rmse", "dbce", "norm_kl", "total"]).map_err(err)?;
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                r.lr.to_string(),
                r.marginal_rmse.to_string(),
                r.dbce.to_string(),
                r.norm_kl.to_string(),
                r.total.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io("<history>", e))
    }
}

/// Seeded row subsample of the microdata, or all rows.
pub fn reference_rows(data: &Array2<f64>, rows: Option<usize>, seed: u64) -> Array2<f64> {
    match rows {
        Some(k) if k < data.nrows() => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_d8ce);
            let mut idx = rand::seq::index::sample(&mut rng, data.nrows(), k).into_vec();
            idx.sort_unstable();
            data.select(ndarray::Axis(0), &idx)
        }
        _ => data.clone(),
    }
}

/// D-BCE of the decoder output for `z` against `reference`.
pub fn decoded_dbce(model: &VaeModel, z: &Array2<f64>, reference: &Array2<f64>, temperature: f64) -> Result<f64> {
    let probs = model.decode(z, Mode::Eval)?;
    Ok(dbce(&probs, reference, temperature)?.dbce_loss)
}

/// Optimizes only `latent.z`; the decoder runs in eval mode and is never
/// written to.
pub fn finetune(
    model: &VaeModel,
    latent: &mut LatentMatrix,
    targets: &TargetMarginals,
    microdata: &EncodedMatrix,
    config: &FinetuneConfig,
) -> Result<FinetuneHistory> {
    config.schedule.validate()?;
    let layout: &ColumnLayout = &microdata.layout;
    model.ensure_schema(&layout.schema)?;
    targets.check_against(&layout.schema)?;
    if latent.z.ncols() != model.latent_dim() {
        return Err(Error::shape(format!(
            "latent width {} but decoder expects {}",
            latent.z.ncols(),
            model.latent_dim()
        )));
    }
    let reference = reference_rows(&microdata.values, config.reference_rows, config.seed);
    let temperature = config.temperature_for(layout.width);
    let mut state = match latent.state.take() {
        Some(s) => s,
        None => LionState::new(config.lion)?,
    };
    let mut scratch = model.decoder.zero_grads();
    let mut records = Vec::with_capacity(config.schedule.epochs);

    for epoch in 0..config.schedule.epochs {
        let lr = config.schedule.lr(epoch);
        let (probs, tape) = model.decode_with_tape(&latent.z, Mode::Eval)?;
        let marginal = marginal_rmse_loss(&probs, targets, layout)?;
        let d = dbce(&probs, &reference, temperature)?;
        let total = config.w_marginal * marginal.value + config.w_dbce * d.dbce_loss + config.w_norm_kl * d.norm_kl;
        if !total.is_finite() {
            return Err(Error::NonFinite(format!("fine-tuning loss at step {epoch}")));
        }
        let mut grad = marginal.grad * config.w_marginal;
        grad.scaled_add(config.w_dbce, &d.grad_loss);
        grad.scaled_add(config.w_norm_kl, &d.grad_norm_kl);
        let dz = model.backward_decoder(&tape, grad, &mut scratch)?;
        let z = latent.z.as_slice_mut().expect("standard layout");
        lion_step(&mut [z], &[dz.as_slice().expect("standard layout")], &mut state, lr)?;
        records.push(FinetuneRecord {
            epoch,
            lr,
            marginal_rmse: marginal.value,
            dbce: d.dbce_loss,
            norm_kl: d.norm_kl,
            total,
        });
        if epoch % 100 == 0 {
            log::debug!("finetune step {epoch}: rmse {:.6} dbce {:.6} kl {:.6}", marginal.value, d.dbce_loss, d.norm_kl);
        }
    }
    latent.state = Some(state);

    let probs = model.decode(&latent.z, Mode::Eval)?;
    let final_soft_marginals = marginal_rmse_loss(&probs, targets, layout)?.soft;
    let final_dbce = dbce(&probs, &reference, temperature)?.dbce_loss;
    Ok(FinetuneHistory {
        records,
        final_soft_marginals,
        final_dbce,
    })
}
