//! Synthetic users with known signatures.
//!
//! Each user owns a per-channel signature: a constant offset plus a bank of
//! sinusoids with user-specific frequencies, phases and amplitudes. Every
//! window of that user is the signature plus i.i.d. Gaussian jitter, so the
//! ratio of signature distance to jitter controls how separable users are.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::{Dataset, GestureSample};
use crate::seed::{mix, rng_from};
use crate::signal::Signal;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_users: usize,
    pub samples_per_user: usize,
    pub length: usize,
    pub n_channels: usize,
    /// Sinusoids per channel.
    pub components: usize,
    /// Frequency range of the sinusoids, in Hz.
    pub min_freq_hz: f64,
    pub max_freq_hz: f64,
    /// Scale of offsets and sinusoid amplitudes.
    pub amplitude: f64,
    /// Standard deviation of the per-sample jitter.
    pub jitter_std: f64,
    pub sample_rate_hz: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 100,
            samples_per_user: 200,
            length: 150,
            n_channels: 6,
            components: 4,
            min_freq_hz: 1.0,
            max_freq_hz: 10.0,
            amplitude: 1.0,
            jitter_std: 0.1,
            sample_rate_hz: 100.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_users", self.n_users),
            ("samples_per_user", self.samples_per_user),
            ("n_channels", self.n_channels),
            ("components", self.components),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.length < 2 {
            return Err(Error::config(format!("length must be >= 2, got {}", self.length)));
        }
        if !(self.jitter_std.is_finite() && self.jitter_std >= 0.0) {
            return Err(Error::config(format!(
                "jitter_std must be >= 0, got {}",
                self.jitter_std
            )));
        }
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return Err(Error::config(format!("amplitude must be > 0, got {}", self.amplitude)));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::config("sample_rate_hz must be > 0"));
        }
        if !(self.min_freq_hz > 0.0 && self.max_freq_hz >= self.min_freq_hz && self.max_freq_hz.is_finite()) {
            return Err(Error::config(format!(
                "frequency range [{}, {}] is invalid",
                self.min_freq_hz, self.max_freq_hz
            )));
        }
        Ok(())
    }

    pub fn user_id(&self, user: usize) -> String {
        let width = (self.n_users.saturating_sub(1)).to_string().len().max(3);
        format!("u{user:0width$}")
    }
}

struct Component {
    freq_hz: f64,
    phase: f64,
    amplitude: f64,
}

fn signature(cfg: &SynthConfig, user: usize) -> Vec<Vec<f64>> {
    let mut rng = rng_from(mix(cfg.seed, user as u64, 0));
    (0..cfg.n_channels)
        .map(|_| {
            let offset = rng.random_range(-cfg.amplitude..=cfg.amplitude);
            let bank: Vec<Component> = (0..cfg.components)
                .map(|_| Component {
                    freq_hz: rng.random_range(cfg.min_freq_hz..=cfg.max_freq_hz),
                    phase: rng.random_range(0.0..TAU),
                    amplitude: rng.random_range(0.5 * cfg.amplitude..=cfg.amplitude),
                })
                .collect();
            (0..cfg.length)
                .map(|t| {
                    let time = t as f64 / cfg.sample_rate_hz;
                    offset
                        + bank
                            .iter()
                            .map(|c| c.amplitude * (TAU * c.freq_hz * time + c.phase).sin())
                            .sum::<f64>()
                })
                .collect()
        })
        .collect()
}

/// Generates the dataset; identical configs give bit-identical output.
pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let per_user: Vec<Vec<GestureSample>> = (0..cfg.n_users)
        .into_par_iter()
        .map(|user| {
            let base = signature(cfg, user);
            let user_id = cfg.user_id(user);
            (0..cfg.samples_per_user)
                .map(|event| {
                    let values = if cfg.jitter_std == 0.0 {
                        base.clone()
                    } else {
                        let noise = Normal::new(0.0, cfg.jitter_std).expect("valid std");
                        let mut rng = rng_from(mix(cfg.seed, ((user as u64) << 32) | event as u64, 1));
                        base.iter()
                            .map(|ch| ch.iter().map(|v| v + noise.sample(&mut rng)).collect())
                            .collect()
                    };
                    Ok(GestureSample {
                        user_id: user_id.clone(),
                        event_index: event as u32,
                        signal: Signal::new(values, cfg.sample_rate_hz)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(per_user.into_iter().flatten().collect())
}
