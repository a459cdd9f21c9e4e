//! Unsupervised nuclei segmentation via unpaired image-to-mask translation.
//!
//! The pipeline trains a single auto-encoder generator shared by two
//! domains — microscopy images and synthetic ellipse masks — conditioned on
//! a one-hot domain label whose style is injected through AdaIN layers.
//! The decoder learns only from same-domain reconstruction; the
//! discriminator judges reconstructed against cross-domain generated
//! images, which forces the encoder to align the content representations
//! of both domains in one latent space. Segmentation is then just
//! image-to-mask translation plus watershed post-processing.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod diagnostics;
pub mod image_io;
pub mod inference;
pub mod losses;
pub mod masksynth;
pub mod metrics;
pub mod model;
pub mod morphology;
pub mod nn;
pub mod phantom;
pub mod rng;
pub mod trainer;
