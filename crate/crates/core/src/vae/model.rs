//! Encoder/decoder stacks with mean and log-scale heads.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::{ColumnLayout, Schema};
use crate::nn::{Affine, BatchNorm, Gradients, Layer, Mode, ReparamMode, Sequential, Tape};

pub const N_BLOCKS: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VaeConfig {
    pub latent_dim: usize,
    pub encoder_widths: Vec<usize>,
    pub decoder_widths: Vec<usize>,
    pub reparam: ReparamMode,
}

impl Default for VaeConfig {
    fn default() -> Self {
        let encoder_widths = vec![512, 384, 256, 192, 128, 96];
        let decoder_widths = encoder_widths.iter().rev().copied().collect();
        VaeConfig {
            latent_dim: 64,
            encoder_widths,
            decoder_widths,
            reparam: ReparamMode::PaperLiteral,
        }
    }
}

impl VaeConfig {
    /// Encoder widths as given, decoder mirrored.
    pub fn mirrored(encoder_widths: Vec<usize>, latent_dim: usize, reparam: ReparamMode) -> Self {
        let decoder_widths = encoder_widths.iter().rev().copied().collect();
        VaeConfig {
            latent_dim,
            encoder_widths,
            decoder_widths,
            reparam,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub config: VaeConfig,
    pub schema_fingerprint: String,
    pub n_window: usize,
    /// Widths of the output softmax groups, in layout order.
    pub group_widths: Vec<usize>,
    pub encoder: Sequential,
    pub mu_head: Sequential,
    pub logsig_head: Sequential,
    /// Six blocks, then the output affine layer and group softmax.
    pub decoder: Sequential,
}

/// Tapes of one encoder pass: trunk and both heads.
#[derive(Debug, Clone)]
pub struct EncodeTape {
    trunk: Tape,
    mu: Tape,
    logsig: Tape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeGradients {
    pub encoder: Gradients,
    pub mu_head: Gradients,
    pub logsig_head: Gradients,
    pub decoder: Gradients,
}

impl VaeGradients {
    pub fn blocks(&self) -> Vec<&[f64]> {
        [&self.encoder, &self.mu_head, &self.logsig_head, &self.decoder]
            .into_iter()
            .flat_map(|g| g.blocks.iter().map(Vec::as_slice))
            .collect()
    }
}

fn blocks<R: rand::Rng>(input: usize, widths: &[usize], rng: &mut R) -> Vec<Layer> {
    let mut layers = Vec::with_capacity(widths.len() * 3);
    let mut prev = input;
    for &w in widths {
        layers.push(Layer::Affine(Affine::init(prev, w, rng)));
        layers.push(Layer::BatchNorm(BatchNorm::new(w)));
        layers.push(Layer::Relu);
        prev = w;
    }
    layers
}

fn head<R: rand::Rng>(input: usize, output: usize, rng: &mut R) -> Sequential {
    Sequential::new(vec![
        Layer::Affine(Affine::init(input, output, rng)),
        Layer::BatchNorm(BatchNorm::new(output)),
    ])
}

pub(crate) fn group_ranges(widths: &[usize]) -> Vec<std::ops::Range<usize>> {
    let mut start = 0;
    widths
        .iter()
        .map(|&w| {
            let r = start..start + w;
            start += w;
            r
        })
        .collect()
}

impl VaeModel {
    /// Deterministic initialization for a schema with a resolved window.
    pub fn init(schema: &Schema, config: VaeConfig, seed: u64) -> Result<Self> {
        let layout = ColumnLayout::new(schema)?;
        if config.latent_dim == 0 {
            return Err(Error::invalid("latent_dim must be at least 1"));
        }
        for (side, widths) in [("encoder", &config.encoder_widths), ("decoder", &config.decoder_widths)] {
            if widths.len() != N_BLOCKS {
                return Err(Error::invalid(format!(
                    "{side} needs {N_BLOCKS} hidden widths, got {}",
                    widths.len()
                )));
            }
            if widths.contains(&0) {
                return Err(Error::invalid(format!("{side} hidden widths must be positive")));
            }
        }
        let d = layout.width;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Sequential::new(blocks(d, &config.encoder_widths, &mut rng));
        let trunk_out = *config.encoder_widths.last().expect("six widths");
        let mu_head = head(trunk_out, config.latent_dim, &mut rng);
        let logsig_head = head(trunk_out, config.latent_dim, &mut rng);
        let mut dec = blocks(config.latent_dim, &config.decoder_widths, &mut rng);
        let dec_out = *config.decoder_widths.last().expect("six widths");
        dec.push(Layer::Affine(Affine::init(dec_out, d, &mut rng)));
        let group_widths: Vec<usize> = layout.groups.iter().map(|g| g.width).collect();
        dec.push(Layer::GroupSoftmax(group_ranges(&group_widths)));
        Ok(VaeModel {
            config,
            schema_fingerprint: schema.fingerprint(),
            n_window: layout.n_window(),
            group_widths,
            encoder,
            mu_head,
            logsig_head,
            decoder: Sequential::new(dec),
        })
    }

    pub fn data_width(&self) -> usize {
        self.group_widths.iter().sum()
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn ensure_schema(&self, schema: &Schema) -> Result<()> {
        let found = schema.fingerprint();
        if found != self.schema_fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: self.schema_fingerprint.clone(),
                found,
            });
        }
        Ok(())
    }

    fn check_width(&self, x: &Array2<f64>, expected: usize, what: &str) -> Result<()> {
        if x.ncols() != expected {
            return Err(Error::shape(format!("{what} width {} but model expects {expected}", x.ncols())));
        }
        Ok(())
    }

    pub fn encode_with_tape(&self, x: &Array2<f64>, mode: Mode) -> Result<(Array2<f64>, Array2<f64>, EncodeTape)> {
        self.check_width(x, self.data_width(), "encoder input")?;
        let (h, trunk) = self.encoder.forward(x, mode)?;
        let (mu, mu_tape) = self.mu_head.forward(&h, mode)?;
        let (logsig, ls_tape) = self.logsig_head.forward(&h, mode)?;
        Ok((
            mu,
            logsig,
            EncodeTape {
                trunk,
                mu: mu_tape,
                logsig: ls_tape,
            },
        ))
    }

    /// Returns `(mu, logsig)`, each `n × latent_dim`.
    pub fn encode(&self, x: &Array2<f64>, mode: Mode) -> Result<(Array2<f64>, Array2<f64>)> {
        let (mu, logsig, _) = self.encode_with_tape(x, mode)?;
        Ok((mu, logsig))
    }

    pub fn decode_with_tape(&self, z: &Array2<f64>, mode: Mode) -> Result<(Array2<f64>, Tape)> {
        self.check_width(z, self.latent_dim(), "latent")?;
        self.decoder.forward(z, mode)
    }

    /// Per-group probabilities, `n × D`.
    pub fn decode(&self, z: &Array2<f64>, mode: Mode) -> Result<Array2<f64>> {
        self.check_width(z, self.latent_dim(), "latent")?;
        self.decoder.infer(z, mode)
    }

    pub fn zero_grads(&self) -> VaeGradients {
        VaeGradients {
            encoder: self.encoder.zero_grads(),
            mu_head: self.mu_head.zero_grads(),
            logsig_head: self.logsig_head.zero_grads(),
            decoder: self.decoder.zero_grads(),
        }
    }

    /// Backpropagates head gradients through the encoder; returns `dx`.
    pub fn backward_encoder(
        &self,
        tape: &EncodeTape,
        dmu: Array2<f64>,
        dlogsig: Array2<f64>,
        grads: &mut VaeGradients,
    ) -> Result<Array2<f64>> {
        let dh_mu = self.mu_head.backward(&tape.mu, dmu, &mut grads.mu_head)?;
        let dh_ls = self.logsig_head.backward(&tape.logsig, dlogsig, &mut grads.logsig_head)?;
        self.encoder.backward(&tape.trunk, dh_mu + dh_ls, &mut grads.encoder)
    }

    /// Backpropagates through the decoder; returns `dz`.
    pub fn backward_decoder(&self, tape: &Tape, dy: Array2<f64>, grads: &mut Gradients) -> Result<Array2<f64>> {
        self.decoder.backward(tape, dy, grads)
    }

    pub fn commit_running_stats(&mut self, encode: &EncodeTape, decode: &Tape) {
        self.encoder.commit_running_stats(&encode.trunk);
        self.mu_head.commit_running_stats(&encode.mu);
        self.logsig_head.commit_running_stats(&encode.logsig);
        self.decoder.commit_running_stats(decode);
    }

    pub fn networks(&self) -> [&Sequential; 4] {
        [&self.encoder, &self.mu_head, &self.logsig_head, &self.decoder]
    }

    pub fn networks_mut(&mut self) -> [&mut Sequential; 4] {
        [
            &mut self.encoder,
            &mut self.mu_head,
            &mut self.logsig_head,
            &mut self.decoder,
        ]
    }

    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.networks_mut()
            .into_iter()
            .flat_map(|n| n.param_blocks_mut())
            .collect()
    }

    pub fn param_blocks(&self) -> Vec<&[f64]> {
        self.networks().into_iter().flat_map(|n| n.param_blocks()).collect()
    }

    /// SHA-256 over decoder parameters and running statistics.
    pub fn decoder_checksum(&self) -> String {
        let mut h = Sha256::new();
        for block in self.decoder.param_blocks().into_iter().chain(self.decoder.stat_blocks()) {
            for v in block {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_schema;

    fn schema() -> Schema {
        parse_schema(include_str!("../../data/table1_schema.toml"))
            .unwrap()
            .with_window(2)
            .unwrap()
    }

    fn small_config() -> VaeConfig {
        VaeConfig::mirrored(vec![16, 14, 12, 10, 8, 8], 4, ReparamMode::Standard)
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = VaeModel::init(&schema(), small_config(), 11).unwrap();
        let b = VaeModel::init(&schema(), small_config(), 11).unwrap();
        assert_eq!(a, b);
        let c = VaeModel::init(&schema(), small_config(), 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn bad_configs_rejected() {
        let mut cfg = small_config();
        cfg.latent_dim = 0;
        assert!(VaeModel::init(&schema(), cfg, 0).is_err());
        let mut cfg = small_config();
        cfg.encoder_widths.pop();
        assert!(VaeModel::init(&schema(), cfg, 0).is_err());
    }

    #[test]
    fn output_width_matches_schema() {
        let m = VaeModel::init(&schema(), small_config(), 0).unwrap();
        assert_eq!(m.data_width(), 24 + 2 * 28);
        let out = m.decode(&Array2::zeros((3, 4)), Mode::Eval).unwrap();
        assert_eq!(out.dim(), (3, 80));
        // tenure is a two-way group
        assert_eq!(m.group_widths[0], 2);
        let s = out[[0, 0]] + out[[0, 1]];
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn encode_shapes_and_eval_determinism() {
        let m = VaeModel::init(&schema(), small_config(), 0).unwrap();
        let x = Array2::from_shape_fn((5, 80), |(i, j)| ((i * 7 + j) % 3) as f64);
        let (mu, ls) = m.encode(&x, Mode::Eval).unwrap();
        assert_eq!(mu.dim(), (5, 4));
        assert_eq!(ls.dim(), (5, 4));
        let (mu2, _) = m.encode(&x, Mode::Eval).unwrap();
        assert_eq!(mu, mu2);
        assert!(m.encode(&Array2::zeros((2, 3)), Mode::Eval).is_err());
        assert!(m.decode(&Array2::zeros((2, 5)), Mode::Eval).is_err());
    }
}
