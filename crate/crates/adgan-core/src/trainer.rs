//! The training loop: alternating discriminator and generator updates with
//! the frozen-decoder routing, Adam with decoupled weight decay, a
//! constant-then-linear LR schedule, flip/rot90/crop augmentation, CSV
//! logging and periodic checkpoints.
//!
//! Update routing per iteration (aligned training on):
//!   1. discriminator step on detached generator outputs;
//!   2. one backward pass of the full generator objective, after which the
//!      encoder and style MLP take an Adam step. The decoder's gradient
//!      contains only the reconstruction term (cross-domain decoder calls
//!      are frozen at the call site), and its optimizer runs only when
//!      that term exists — so an adversarial-only step leaves every
//!      decoder parameter bit-identical.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CheckpointError, TrainConfig, CHECKPOINT_VERSION};
use crate::dataset::{load_training_folder, DatasetError, ImageFolder};
use crate::image_io::ImageTensor;
use crate::losses::{build_discriminator_loss, build_generator_forward, LossBreakdown};
use crate::model::{AdGanModel, GeneratorConfig, ModelError};
use crate::nn::{Adam, AdamConfig, ParamGroup, Tensor};
use crate::rng::{derive_seed, purpose, rng_from_seed, Rng, RngState};

#[derive(Debug)]
pub enum TrainError {
    Config(String),
    Dataset(DatasetError),
    Model(ModelError),
    Checkpoint(CheckpointError),
    Io(std::io::Error),
    /// Iteration outside [0, total_iters].
    IterationOutOfRange { iteration: u64, total: u64 },
    /// Image smaller than the training crop.
    CropTooLarge { height: usize, width: usize, crop: usize },
    /// Loss went non-finite; carries the diagnostic dump.
    NanLoss {
        iteration: u64,
        breakdown: LossBreakdown,
        grad_norms: Vec<(&'static str, f64)>,
    },
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Config(m) => write!(f, "invalid train config: {m}"),
            TrainError::Dataset(e) => write!(f, "{e}"),
            TrainError::Model(e) => write!(f, "{e}"),
            TrainError::Checkpoint(e) => write!(f, "{e}"),
            TrainError::Io(e) => write!(f, "i/o error: {e}"),
            TrainError::IterationOutOfRange { iteration, total } => {
                write!(f, "iteration {iteration} outside schedule [0, {total}]")
            }
            TrainError::CropTooLarge { height, width, crop } => {
                write!(f, "image {height}x{width} smaller than crop {crop}")
            }
            TrainError::NanLoss {
                iteration,
                breakdown,
                grad_norms,
            } => {
                write!(
                    f,
                    "non-finite loss at iteration {iteration}: {breakdown:?}; grad norms: {grad_norms:?}"
                )
            }
        }
    }
}

impl std::error::Error for TrainError {}

impl From<DatasetError> for TrainError {
    fn from(e: DatasetError) -> Self {
        TrainError::Dataset(e)
    }
}
impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        TrainError::Model(e)
    }
}
impl From<CheckpointError> for TrainError {
    fn from(e: CheckpointError) -> Self {
        TrainError::Checkpoint(e)
    }
}
impl From<std::io::Error> for TrainError {
    fn from(e: std::io::Error) -> Self {
        TrainError::Io(e)
    }
}

/// Learning rate at an iteration: constant for `const_lr_iters`, then
/// linear to exactly 0 at `total_iters`.
pub fn lr_at(config: &TrainConfig, iteration: u64) -> Result<f64, TrainError> {
    if iteration > config.total_iters {
        return Err(TrainError::IterationOutOfRange {
            iteration,
            total: config.total_iters,
        });
    }
    if iteration <= config.const_lr_iters {
        return Ok(config.lr);
    }
    let decay_span = (config.total_iters - config.const_lr_iters) as f64;
    let remaining = (config.total_iters - iteration) as f64;
    Ok(config.lr * remaining / decay_span)
}

fn flip_h(img: &ImageTensor) -> ImageTensor {
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            out.set(y, x, img.get(y, img.width - 1 - x));
        }
    }
    out
}

fn flip_v(img: &ImageTensor) -> ImageTensor {
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            out.set(y, x, img.get(img.height - 1 - y, x));
        }
    }
    out
}

/// Quarter-turn counter-clockwise; no interpolation, labels stay hard.
fn rot90(img: &ImageTensor) -> ImageTensor {
    let mut out = ImageTensor::filled(img.width, img.height, 0.0);
    for y in 0..img.height {
        for x in 0..img.width {
            out.set(img.width - 1 - x, y, img.get(y, x));
        }
    }
    out
}

/// Random flips, a rotation by a multiple of 90 degrees, then a random
/// crop to `crop` pixels. Draws exactly five values from the RNG.
pub fn augment(img: &ImageTensor, crop: usize, rng: &mut Rng) -> Result<ImageTensor, TrainError> {
    let do_h = rng.random_range(0..2u32) == 1;
    let do_v = rng.random_range(0..2u32) == 1;
    let quarter_turns = rng.random_range(0..4u32);

    let mut cur = img.clone();
    if do_h {
        cur = flip_h(&cur);
    }
    if do_v {
        cur = flip_v(&cur);
    }
    for _ in 0..quarter_turns {
        cur = rot90(&cur);
    }
    if cur.height < crop || cur.width < crop {
        return Err(TrainError::CropTooLarge {
            height: img.height,
            width: img.width,
            crop,
        });
    }
    let oy = rng.random_range(0..=(cur.height - crop) as u64) as usize;
    let ox = rng.random_range(0..=(cur.width - crop) as u64) as usize;
    let mut out = ImageTensor::filled(crop, crop, 0.0);
    for y in 0..crop {
        for x in 0..crop {
            out.set(y, x, cur.get(oy + y, ox + x));
        }
    }
    Ok(out)
}

/// One CSV row of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: u64,
    pub rec: f64,
    pub adv_d: f64,
    pub adv_g: f64,
    pub ctr: f64,
    pub cyc: f64,
    pub total: f64,
    pub lr: f64,
}

pub const LOG_HEADER: &str = "iteration,l_rec,l_adv_d,l_adv_g,l_ctr,l_cyc,total,lr";

impl LogRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.8}",
            self.iteration, self.rec, self.adv_d, self.adv_g, self.ctr, self.cyc, self.total, self.lr
        )
    }
}

/// Mutable training state: model, per-group optimizers, RNG streams.
pub struct TrainState {
    pub model: AdGanModel,
    pub config: TrainConfig,
    pub iteration: u64,
    pub adam_enc: Adam,
    pub adam_dec: Adam,
    pub adam_mlp: Adam,
    pub adam_disc: Adam,
    pub data_rng: Rng,
    pub aug_rng: Rng,
}

impl TrainState {
    pub fn new(gen_config: GeneratorConfig, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate().map_err(TrainError::Config)?;
        let model = AdGanModel::new(gen_config, config.seed)?;
        let adam_cfg = AdamConfig {
            beta1: config.adam_betas[0] as f32,
            beta2: config.adam_betas[1] as f32,
            eps: 1e-8,
            weight_decay: config.weight_decay as f32,
        };
        Ok(Self {
            model,
            iteration: 0,
            adam_enc: Adam::new(adam_cfg, ParamGroup::Encoder),
            adam_dec: Adam::new(adam_cfg, ParamGroup::Decoder),
            adam_mlp: Adam::new(adam_cfg, ParamGroup::StyleMlp),
            adam_disc: Adam::new(adam_cfg, ParamGroup::Discriminator),
            data_rng: rng_from_seed(derive_seed(config.seed, purpose::BATCH_SAMPLING, 0)),
            aug_rng: rng_from_seed(derive_seed(config.seed, purpose::AUGMENT, 0)),
            config,
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, TrainError> {
        let model = ckpt.restore_model()?;
        let adam_cfg = AdamConfig {
            beta1: ckpt.train.adam_betas[0] as f32,
            beta2: ckpt.train.adam_betas[1] as f32,
            eps: 1e-8,
            weight_decay: ckpt.train.weight_decay as f32,
        };
        let mk = |group: ParamGroup, steps: u64| {
            let mut a = Adam::new(adam_cfg, group);
            a.step_count = steps;
            a
        };
        Ok(Self {
            model,
            iteration: ckpt.iteration,
            adam_enc: mk(ParamGroup::Encoder, ckpt.adam_steps[0]),
            adam_dec: mk(ParamGroup::Decoder, ckpt.adam_steps[1]),
            adam_mlp: mk(ParamGroup::StyleMlp, ckpt.adam_steps[2]),
            adam_disc: mk(ParamGroup::Discriminator, ckpt.adam_steps[3]),
            data_rng: ckpt.data_rng.restore(),
            aug_rng: ckpt.aug_rng.restore(),
            config: ckpt.train.clone(),
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            iteration: self.iteration,
            generator: self.model.config,
            train: self.config.clone(),
            store: self.model.store.clone(),
            adam_steps: [
                self.adam_enc.step_count,
                self.adam_dec.step_count,
                self.adam_mlp.step_count,
                self.adam_disc.step_count,
            ],
            data_rng: RngState::capture(&self.data_rng),
            aug_rng: RngState::capture(&self.aug_rng),
        }
    }

    /// Whether the decoder takes an optimizer step this iteration. With
    /// aligned training, reconstruction is its only teacher.
    pub fn decoder_participates(&self) -> bool {
        self.config.flags.use_rec || !self.config.flags.aligned_training
    }

    /// Scale a group's gradient down to the configured L2-norm ceiling.
    /// Rare shock iterations (near-constant channels make the instance-norm
    /// backward steep) would otherwise blow up the parameters. Returns
    /// false when the gradient is non-finite; the group skips that step.
    fn clip_group(&mut self, group: ParamGroup) -> bool {
        let max = self.config.max_grad_norm;
        if max <= 0.0 {
            return true;
        }
        let mut sq = 0.0f64;
        for (_, p) in self.model.store.iter() {
            if p.group == group {
                for &g in p.grad.data() {
                    sq += (g as f64) * (g as f64);
                }
            }
        }
        if !sq.is_finite() {
            for (_, p) in self.model.store.iter_mut() {
                if p.group == group {
                    p.grad.data_mut().fill(0.0);
                }
            }
            return false;
        }
        let norm = sq.sqrt();
        if norm > max {
            let s = (max / norm) as f32;
            for (_, p) in self.model.store.iter_mut() {
                if p.group == group {
                    for g in p.grad.data_mut() {
                        *g *= s;
                    }
                }
            }
        }
        true
    }

    /// One full iteration: discriminator update, then generator update.
    pub fn train_step(
        &mut self,
        batch_x1: &Tensor,
        batch_x2: &Tensor,
    ) -> Result<LossBreakdown, TrainError> {
        let lr = lr_at(&self.config, self.iteration)? as f32;
        let flags = self.config.flags;
        let kind = self.config.adv_loss;

        // One generator forward serves both halves of the iteration: its
        // detached outputs feed the discriminator update, then the
        // adversarial heads are appended against the updated discriminator.
        let fwd = build_generator_forward(&self.model, batch_x1, batch_x2, &flags);
        let dgraph = build_discriminator_loss(&self.model, &fwd.detached_outputs(), kind);
        let adv_d = dgraph.value;
        self.model.store.zero_grads();
        dgraph.tape.backward(dgraph.root, &mut self.model.store);
        if self.clip_group(ParamGroup::Discriminator) {
            self.adam_disc.step(&mut self.model.store, lr);
        }
        drop(dgraph);

        // Generator step: one backward from the weighted total. Decoder
        // gradients can only come from the reconstruction term when
        // aligned training froze the cross-domain decoder calls.
        let ggraph = fwd.finish(&self.model, &self.config.weights, kind);
        let mut breakdown = ggraph.breakdown;
        breakdown.adv_d = adv_d;
        if !breakdown.is_finite() {
            return Err(TrainError::NanLoss {
                iteration: self.iteration,
                breakdown,
                grad_norms: self.model.store.grad_norms(),
            });
        }
        self.model.store.zero_grads();
        ggraph.tape.backward(ggraph.total, &mut self.model.store);
        if self.clip_group(ParamGroup::Encoder) {
            self.adam_enc.step(&mut self.model.store, lr);
        }
        if self.clip_group(ParamGroup::StyleMlp) {
            self.adam_mlp.step(&mut self.model.store, lr);
        }
        if self.decoder_participates() && self.clip_group(ParamGroup::Decoder) {
            self.adam_dec.step(&mut self.model.store, lr);
        }

        self.iteration += 1;
        Ok(breakdown)
    }

    /// Assemble a batch by sampling images uniformly and augmenting each.
    pub fn sample_batch(&mut self, folder: &ImageFolder) -> Result<Tensor, TrainError> {
        let crop = self.config.crop;
        let b = self.config.batch_size;
        let mut data = Vec::with_capacity(b * crop * crop);
        for _ in 0..b {
            let idx = self.data_rng.random_range(0..folder.images.len());
            let img = augment(&folder.images[idx], crop, &mut self.aug_rng)?;
            data.extend_from_slice(img.data());
        }
        Ok(Tensor::new(&[b, 1, crop, crop], data))
    }
}

#[derive(Debug)]
pub struct FitOutcome {
    pub rows: Vec<LogRow>,
    pub final_checkpoint: PathBuf,
    pub log_path: PathBuf,
}

/// Train from two unpaired directories, writing checkpoints and a CSV log
/// under `out_dir`. `resume` continues from a saved checkpoint with the
/// same RNG streams, reproducing the uninterrupted run exactly.
pub fn fit(
    images_dir: impl AsRef<Path>,
    masks_dir: impl AsRef<Path>,
    gen_config: GeneratorConfig,
    config: TrainConfig,
    out_dir: impl AsRef<Path>,
    resume: Option<&Path>,
) -> Result<FitOutcome, TrainError> {
    let out = out_dir.as_ref();
    fs::create_dir_all(out.join("checkpoints"))?;
    let x1 = load_training_folder(images_dir.as_ref())?;
    let x2 = load_training_folder(masks_dir.as_ref())?;

    let mut state = match resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            TrainState::from_checkpoint(&ckpt)?
        }
        None => TrainState::new(gen_config, config)?,
    };

    let log_path = out.join("training_log.csv");
    let mut log = if state.iteration == 0 {
        let mut f = fs::File::create(&log_path)?;
        writeln!(f, "{LOG_HEADER}")?;
        f
    } else {
        fs::OpenOptions::new().create(true).append(true).open(&log_path)?
    };

    let manifest = serde_json::json!({
        "images_dir": images_dir.as_ref().display().to_string(),
        "masks_dir": masks_dir.as_ref().display().to_string(),
        "generator": state.model.config,
        "train": state.config,
        "resumed_from": resume.map(|p| p.display().to_string()),
    });
    fs::write(out.join("run_manifest.json"), serde_json::to_string_pretty(&manifest).expect("json"))?;

    let mut rows = Vec::new();
    while state.iteration < state.config.total_iters {
        let b1 = state.sample_batch(&x1)?;
        let b2 = state.sample_batch(&x2)?;
        let lr = lr_at(&state.config, state.iteration)?;
        let iteration = state.iteration;
        let breakdown = state.train_step(&b1, &b2)?;
        let row = LogRow {
            iteration,
            rec: breakdown.rec,
            adv_d: breakdown.adv_d,
            adv_g: breakdown.adv_g,
            ctr: breakdown.ctr,
            cyc: breakdown.cyc,
            total: breakdown.total,
            lr,
        };
        writeln!(log, "{}", row.to_csv())?;
        rows.push(row);

        let k = state.config.checkpoint_interval;
        if k > 0 && state.iteration % k == 0 && state.iteration < state.config.total_iters {
            state
                .to_checkpoint()
                .save(out.join("checkpoints").join(format!("ckpt_{:06}.bin", state.iteration)))?;
        }
    }

    let final_path = out.join("checkpoints").join("ckpt_final.bin");
    state.to_checkpoint().save(&final_path)?;
    Ok(FitOutcome {
        rows,
        final_checkpoint: final_path,
        log_path,
    })
}
