use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Matrix, Tape};
use crate::dataset::EncodedDataset;
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, HiddenActivation, MlpParams, MlpSpec, OutputActivation};
use crate::sampling::BatchStream;

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainConfig {
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            latent_dim: 256,
            hidden_dim: 512,
            epochs: 10,
            batch_size: 64,
            seed: 0,
            adam: AdamConfig::encoder_pretraining(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub encoder: MlpParams,
    /// Mean squared reconstruction error over the whole training set:
    /// entry 0 before training, then one entry per epoch.
    pub epoch_losses: Vec<f64>,
}

fn reconstruction_mse(encoder: &MlpParams, decoder: &MlpParams, x: &Matrix) -> Result<f64> {
    let z = encoder.forward_values(x)?;
    let r = decoder.forward_values(&z)?;
    Ok((r - x).mapv(|v| v * v).mean().unwrap_or(0.0))
}

/// Trains a dense autoencoder `d → hidden → latent (tanh) → hidden → d` on
/// the pooled unlabeled rows and returns the encoder half.
///
/// Only `representations` are read; labels and domain tags are ignored.
pub fn pretrain_autoencoder(data: &EncodedDataset, cfg: &PretrainConfig) -> Result<PretrainOutcome> {
    let d = data.dim();
    if cfg.latent_dim >= d {
        return Err(Error::Spec(format!(
            "latent dim {} must be smaller than input dim {d}",
            cfg.latent_dim
        )));
    }
    cfg.adam.validate()?;
    let x = &data.representations;
    let batch_size = cfg.batch_size.min(data.len());
    let mut stream = BatchStream::new((0..data.len()).collect(), batch_size)?;

    let enc_spec = MlpSpec::new(
        vec![d, cfg.hidden_dim, cfg.latent_dim],
        HiddenActivation::Relu,
        OutputActivation::Tanh,
    )?;
    let dec_spec = MlpSpec::new(
        vec![cfg.latent_dim, cfg.hidden_dim, d],
        HiddenActivation::Relu,
        OutputActivation::Linear,
    )?;
    let mut encoder = MlpParams::init(&enc_spec, cfg.seed)?;
    let mut decoder = MlpParams::init(&dec_spec, cfg.seed.wrapping_add(1))?;
    let mut enc_opt = AdamState::new(cfg.adam.clone(), &encoder);
    let mut dec_opt = AdamState::new(cfg.adam.clone(), &decoder);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_edae);

    let mut epoch_losses = vec![reconstruction_mse(&encoder, &decoder, x)?];
    for _ in 0..cfg.epochs {
        for _ in 0..stream.batches_per_epoch() {
            let rows = stream.next_batch(&mut rng);
            let batch = x.select(ndarray::Axis(0), &rows);

            let mut tape = Tape::new(cfg.seed);
            let enc = encoder.bind(&mut tape, true)?;
            let dec = decoder.bind(&mut tape, true)?;
            let input = tape.constant(batch)?;
            let z = enc.forward(&mut tape, input)?;
            let recon = dec.forward(&mut tape, z)?;
            let diff = tape.sub(recon, input)?;
            let sq = tape.mul(diff, diff)?;
            let loss = tape.mean(sq)?;
            if !tape.scalar(loss).is_finite() {
                return Err(Error::Numeric("reconstruction loss is not finite".into()));
            }
            tape.backward(loss)?;
            let (ge, gd) = (enc.grads(&tape), dec.grads(&tape));
            crate::nn::check_grads(&decoder, &gd)?;
            enc_opt.step(&mut encoder, &ge)?;
            dec_opt.step(&mut decoder, &gd)?;
        }
        epoch_losses.push(reconstruction_mse(&encoder, &decoder, x)?);
    }
    Ok(PretrainOutcome {
        encoder,
        epoch_losses,
    })
}

/// Maps every row through a frozen encoder, keeping labels and tags.
pub fn encode(encoder: &MlpParams, data: &EncodedDataset) -> Result<EncodedDataset> {
    EncodedDataset::new(
        encoder.forward_values(&data.representations)?,
        data.labels.clone(),
        data.domain_tags.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand_distr::{Distribution, Normal};

    fn synthetic(n: usize, d: usize, seed: u64) -> EncodedDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x = Array2::from_shape_simple_fn((n, d), || normal.sample(&mut rng));
        EncodedDataset::new(x, (0..n).map(|i| Some(i % 2)).collect(), vec![None; n]).unwrap()
    }

    #[test]
    fn latent_must_compress() {
        let data = synthetic(10, 8, 0);
        let cfg = PretrainConfig {
            latent_dim: 8,
            ..PretrainConfig::default()
        };
        assert!(matches!(pretrain_autoencoder(&data, &cfg), Err(Error::Spec(_))));
    }

    #[test]
    fn loss_is_non_increasing_and_shapes_hold() {
        let data = synthetic(100, 300, 1);
        let cfg = PretrainConfig {
            epochs: 10,
            seed: 5,
            ..PretrainConfig::default()
        };
        let out = pretrain_autoencoder(&data, &cfg).unwrap();
        assert_eq!(out.epoch_losses.len(), 11);
        for w in out.epoch_losses.windows(2) {
            assert!(w[1] <= w[0] * 1.05, "{:?}", out.epoch_losses);
        }
        let z = encode(&out.encoder, &data).unwrap();
        assert_eq!(z.representations.dim(), (100, 256));
        assert_eq!(z.labels, data.labels);
    }

    #[test]
    fn deterministic_and_label_blind() {
        let data = synthetic(40, 20, 2);
        let cfg = PretrainConfig {
            latent_dim: 6,
            hidden_dim: 16,
            epochs: 3,
            batch_size: 8,
            seed: 9,
            adam: AdamConfig::encoder_pretraining(),
        };
        let a = pretrain_autoencoder(&data, &cfg).unwrap();
        let b = pretrain_autoencoder(&data, &cfg).unwrap();
        let stripped = pretrain_autoencoder(&data.without_labels(), &cfg).unwrap();
        assert_eq!(a.encoder, b.encoder);
        assert_eq!(a.encoder, stripped.encoder);
        assert_eq!(a.epoch_losses, stripped.epoch_losses);
    }
}
