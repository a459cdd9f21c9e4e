//! Checkpoint serialization: parameters, optimizer state, RNG streams,
//! iteration counter and a config echo, in one CBOR file. Enough state to
//! resume training bit-exactly.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::losses::{AblationFlags, AdvLossKind, LossWeights};
use crate::model::{AdGanModel, GeneratorConfig, ModelError};
use crate::nn::ParamStore;
use crate::rng::RngState;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Mirror of `trainer::TrainConfig`, re-exported here to avoid a cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub total_iters: u64,
    /// LR is constant for this many iterations, then decays linearly to 0.
    pub const_lr_iters: u64,
    pub lr: f64,
    pub weight_decay: f64,
    pub adam_betas: [f64; 2],
    pub batch_size: usize,
    pub crop: usize,
    pub weights: LossWeights,
    pub flags: AblationFlags,
    pub adv_loss: AdvLossKind,
    pub seed: u64,
    pub checkpoint_interval: u64,
    /// Per-group gradient L2-norm ceiling; non-finite gradients skip the
    /// affected group's update for that iteration.
    pub max_grad_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_iters: 10_000,
            const_lr_iters: 5_000,
            lr: 1e-4,
            weight_decay: 1e-4,
            adam_betas: [0.5, 0.999],
            batch_size: 16,
            crop: 256,
            weights: LossWeights::default(),
            flags: AblationFlags::default(),
            adv_loss: AdvLossKind::Bce,
            seed: 0,
            checkpoint_interval: 1_000,
            max_grad_norm: 500.0,
        }
    }
}

impl TrainConfig {
    /// Desk-scale schedule: small batches and crops, 2k iterations with
    /// the same constant-then-linear LR shape.
    pub fn desk() -> Self {
        Self {
            total_iters: 2_000,
            const_lr_iters: 1_000,
            batch_size: 4,
            crop: 64,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.const_lr_iters > self.total_iters {
            return Err(format!(
                "const_lr_iters {} exceeds total_iters {}",
                self.const_lr_iters, self.total_iters
            ));
        }
        if self.lr < 0.0 || self.weight_decay < 0.0 {
            return Err("rates must be non-negative".into());
        }
        if self.batch_size == 0 {
            return Err("batch_size must be >= 1".into());
        }
        if self.crop == 0 || self.crop % 4 != 0 {
            return Err(format!("crop {} must be a positive multiple of 4", self.crop));
        }
        self.weights.validate()
    }
}

#[derive(Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub iteration: u64,
    pub generator: GeneratorConfig,
    pub train: TrainConfig,
    pub store: ParamStore,
    /// Adam step counters: encoder, decoder, style MLP, discriminator.
    pub adam_steps: [u64; 4],
    pub data_rng: RngState,
    pub aug_rng: RngState,
}

#[derive(Debug)]
pub enum CheckpointError {
    Io(std::io::Error),
    Encode(String),
    Decode(String),
    VersionMismatch { found: u32, expected: u32 },
    Model(ModelError),
}

impl fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckpointError::Io(e) => write!(f, "checkpoint i/o error: {e}"),
            CheckpointError::Encode(m) => write!(f, "checkpoint encode error: {m}"),
            CheckpointError::Decode(m) => write!(f, "checkpoint decode error: {m}"),
            CheckpointError::VersionMismatch { found, expected } => {
                write!(f, "checkpoint version {found}, this build reads {expected}")
            }
            CheckpointError::Model(e) => write!(f, "checkpoint model mismatch: {e}"),
        }
    }
}

impl std::error::Error for CheckpointError {}

impl From<std::io::Error> for CheckpointError {
    fn from(e: std::io::Error) -> Self {
        CheckpointError::Io(e)
    }
}

impl From<ModelError> for CheckpointError {
    fn from(e: ModelError) -> Self {
        CheckpointError::Model(e)
    }
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        if let Some(parent) = path.as_ref().parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = File::create(path.as_ref())?;
        ciborium::into_writer(self, BufWriter::new(file))
            .map_err(|e| CheckpointError::Encode(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let file = File::open(path.as_ref())?;
        let ckpt: Checkpoint = ciborium::from_reader(BufReader::new(file))
            .map_err(|e| CheckpointError::Decode(e.to_string()))?;
        if ckpt.format_version != CHECKPOINT_VERSION {
            return Err(CheckpointError::VersionMismatch {
                found: ckpt.format_version,
                expected: CHECKPOINT_VERSION,
            });
        }
        Ok(ckpt)
    }

    /// Rebuild the model from the stored parameters. Parameter inventory
    /// (names and shapes) must match a fresh construction of the config.
    pub fn restore_model(&self) -> Result<AdGanModel, CheckpointError> {
        let mut model = AdGanModel::new(self.generator, self.train.seed)?;
        if model.store.len() != self.store.len() {
            return Err(CheckpointError::Decode(format!(
                "parameter count mismatch: checkpoint {}, config {}",
                self.store.len(),
                model.store.len()
            )));
        }
        for ((_, fresh), (_, saved)) in model.store.iter().zip(self.store.iter()) {
            if fresh.name != saved.name || fresh.value.shape() != saved.value.shape() {
                return Err(CheckpointError::Decode(format!(
                    "parameter mismatch: {} {:?} vs {} {:?}",
                    fresh.name,
                    fresh.value.shape(),
                    saved.name,
                    saved.value.shape()
                )));
            }
        }
        model.store = self.store.clone();
        Ok(model)
    }

    /// Summary printed by the describe-checkpoint command.
    pub fn describe(&self) -> String {
        let mut out = format!(
            "iteration: {} / {}\nadam steps (enc/dec/mlp/disc): {:?}\n",
            self.iteration, self.train.total_iters, self.adam_steps
        );
        out.push_str(&format!(
            "generator: {:?} base {} content {}\n",
            self.generator.scale_preset,
            self.generator.base(),
            self.generator.content()
        ));
        let mut total = 0usize;
        for (_, p) in self.store.iter() {
            total += p.value.numel();
            out.push_str(&format!(
                "{:<14} {:<20} {:?}\n",
                p.group.label(),
                p.name,
                p.value.shape()
            ));
        }
        out.push_str(&format!("total parameters: {total}\n"));
        out
    }
}
