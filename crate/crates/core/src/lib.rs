//! Augmentation of motion-sensor tap windows and a few-shot user
//! identification protocol for measuring whether augmentation helps.
//!
//! The pipeline is: windowed [`signal::Signal`]s (loaded with [`ingest`] or
//! generated by [`synth`]) are split per target user by [`protocol`], the
//! training windows are optionally augmented by an
//! [`augment::AugmentationPlan`], mapped to feature vectors by an
//! [`embedding::Provider`], and scored by a per-user binary [`svm`] whose bias
//! is calibrated to balance false acceptance and false rejection. Sweeps over
//! augmentation grids are described in TOML via [`config`] and written out as
//! tables by [`report`].

pub mod augment;
pub mod config;
pub mod embedding;
pub mod error;
pub mod ingest;
pub mod protocol;
pub mod report;
pub mod seed;
pub mod signal;
pub mod svm;
pub mod synth;

pub use error::{Error, Result};
