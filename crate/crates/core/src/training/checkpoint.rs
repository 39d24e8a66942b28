//! Binary checkpoint layout, all integers and floats little-endian:
//!
//! ```text
//! b"PNNS"  u32 version  u32 metadata length  metadata (UTF-8)
//! f64 × fourier_len      frozen Fourier matrix
//! f64 × trainable_count  weights and biases, layer by layer
//! f64 × trainable_count  Adam first moment
//! f64 × trainable_count  Adam second moment
//! ```
//!
//! The metadata block is the run-config text of the run, with `epochs`
//! holding the number of epochs completed, followed by `checkpoint.*` keys.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::{KeyValues, TrainRunConfig};
use crate::network::{ModelParams, Network};
use crate::rng;

use super::{AdamState, TrainingError};

pub const MAGIC: &[u8; 4] = b"PNNS";
pub const FORMAT_VERSION: u32 = 1;

/// Number of trailing epoch losses kept in the metadata.
pub const LOSS_TAIL: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Run configuration; `epochs` counts the epochs completed so far.
    pub run: TrainRunConfig,
    pub network: Network,
    pub adam: AdamState,
    /// Composite loss over the full training sets at save time.
    pub final_loss: f64,
    pub loss_tail: Vec<f64>,
}

impl Checkpoint {
    pub fn epoch(&self) -> usize {
        self.run.epochs
    }

    fn metadata(&self) -> String {
        let mut out = self.run.model_text();
        let tail: Vec<String> = self.loss_tail.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "checkpoint.rng = {}", rng::ALGORITHM);
        let _ = writeln!(out, "checkpoint.adam_step = {}", self.adam.step);
        let _ = writeln!(out, "checkpoint.final_loss = {:?}", self.final_loss);
        let _ = writeln!(out, "checkpoint.loss_tail = {}", tail.join(", "));
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = self.metadata();
        let params = &self.network.params;
        let floats = params.fourier().len() + 3 * params.trainable().len();
        let mut out = Vec::with_capacity(12 + meta.len() + 8 * floats);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        for block in [params.fourier(), params.trainable(), &self.adam.m, &self.adam.v] {
            for v in block {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainingError> {
        let corrupt = |msg: &str| TrainingError::CorruptCheckpoint(msg.to_string());
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(corrupt("missing PNNS magic"));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        let version = word(4);
        if version != FORMAT_VERSION {
            return Err(TrainingError::UnsupportedVersion(version));
        }
        let meta_len = word(8) as usize;
        let meta_end = 12usize
            .checked_add(meta_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| corrupt("truncated metadata"))?;
        let meta = std::str::from_utf8(&bytes[12..meta_end]).map_err(|_| corrupt("metadata is not UTF-8"))?;

        let mut kv = KeyValues::parse(meta)?;
        let run = TrainRunConfig::from_key_values(&mut kv)?;
        let algorithm = kv.take("checkpoint.rng").unwrap_or_default();
        if algorithm != rng::ALGORITHM {
            return Err(corrupt("unknown random generator"));
        }
        let adam_step: u64 = kv
            .take_parsed("checkpoint.adam_step")?
            .ok_or_else(|| corrupt("missing adam step"))?;
        let final_loss: f64 = kv
            .take_parsed("checkpoint.final_loss")?
            .ok_or_else(|| corrupt("missing final loss"))?;
        let tail_text = kv.take("checkpoint.loss_tail").unwrap_or_default();
        let loss_tail = tail_text
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| corrupt("bad loss tail")))
            .collect::<Result<Vec<_>, _>>()?;
        kv.finish()?;

        let fourier_len = run.network.fourier_len();
        let n = run.network.trainable_count();
        let body = &bytes[meta_end..];
        if body.len() != 8 * (fourier_len + 3 * n) {
            return Err(corrupt("parameter block has the wrong length"));
        }
        let mut floats = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut take = |k: usize| floats.by_ref().take(k).collect::<Vec<f64>>();
        let fourier = take(fourier_len);
        let trainable = take(n);
        let m = take(n);
        let v = take(n);

        let params = ModelParams::from_parts(&run.network, fourier, trainable)?;
        let network = Network::new(run.network.clone(), run.domain.normalizer(), params)?;
        let adam = AdamState {
            step: adam_step,
            m,
            v,
            ..AdamState::new(n, &run.optimizer)
        };
        Ok(Self {
            run,
            network,
            adam,
            final_loss,
            loss_tail,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainingError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainingError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkConfig;

    fn sample() -> Checkpoint {
        let run = TrainRunConfig {
            network: NetworkConfig {
                fourier_bins: 3,
                hidden_layers: 2,
                hidden_width: 5,
                ..NetworkConfig::default()
            },
            epochs: 12,
            seed: 42,
            ..TrainRunConfig::default()
        };
        let run = TrainRunConfig {
            sampling: crate::sampling::SamplingPlan {
                seed: 42,
                ..run.sampling
            },
            ..run
        };
        let network = Network::initialized(run.network.clone(), run.domain.normalizer(), run.seed).unwrap();
        let n = run.network.trainable_count();
        let mut adam = AdamState::new(n, &run.optimizer);
        adam.step = 36;
        adam.m = (0..n).map(|i| (i as f64).sin() * 1e-3).collect();
        adam.v = (0..n).map(|i| (i as f64).cos().powi(2) * 1e-6).collect();
        Checkpoint {
            run,
            network,
            adam,
            final_loss: 0.123456789012345,
            loss_tail: vec![0.5, 0.25, 1.0 / 3.0],
        }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let c = sample();
        let bytes = c.to_bytes();
        let loaded = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(loaded, c);
        assert_eq!(loaded.to_bytes(), bytes);
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..4], b"PNNS");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), FORMAT_VERSION);
        let meta_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let meta = std::str::from_utf8(&bytes[12..12 + meta_len]).unwrap();
        assert!(meta.contains("checkpoint.rng = chacha8"));
        assert!(meta.contains("epochs = 12"));
    }

    #[test]
    fn rejects_damage() {
        let bytes = sample().to_bytes();
        assert!(matches!(
            Checkpoint::from_bytes(b"nope"),
            Err(TrainingError::CorruptCheckpoint(_))
        ));
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&wrong_version),
            Err(TrainingError::UnsupportedVersion(9))
        ));
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 3]),
            Err(TrainingError::CorruptCheckpoint(_))
        ));
    }
}
