//! Multi-channel sensor windows, linear resampling and piecewise-linear time
//! remapping.
//!
//! All channels of a [`Signal`] share one time axis. Resampling and time maps
//! are applied to every channel with the same source positions, so the axes of
//! a gesture stay aligned.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default sampling rate for motion windows, in Hz.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 100.0;

/// One fixed-length multi-channel window, stored as `values[channel][time]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    values: Vec<Vec<f64>>,
    sample_rate_hz: f64,
}

impl Signal {
    /// Builds a signal, checking that it has at least one channel, at least two
    /// samples, equal channel lengths and only finite values.
    pub fn new(values: Vec<Vec<f64>>, sample_rate_hz: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("signal needs at least one channel"));
        }
        let length = values[0].len();
        if length < 2 {
            return Err(Error::invalid(format!("signal length must be >= 2, got {length}")));
        }
        for (c, ch) in values.iter().enumerate() {
            if ch.len() != length {
                return Err(Error::invalid(format!(
                    "channel {c} has {} samples, expected {length}",
                    ch.len()
                )));
            }
            if let Some(t) = ch.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("non-finite value at channel {c}, sample {t}")));
            }
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::invalid(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        Ok(Signal { values, sample_rate_hz })
    }

    /// Single-channel signal at the default sample rate.
    pub fn from_channel(values: Vec<f64>) -> Result<Self> {
        Signal::new(vec![values], DEFAULT_SAMPLE_RATE_HZ)
    }

    pub fn n_channels(&self) -> usize {
        self.values.len()
    }

    pub fn len(&self) -> usize {
        self.values[0].len()
    }

    /// Always false; a valid signal has at least two samples.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.values
    }

    /// Same shape, every value replaced by `f(value)`.
    pub(crate) fn map_values(&self, mut f: impl FnMut(f64) -> f64) -> Signal {
        Signal {
            values: self
                .values
                .iter()
                .map(|ch| ch.iter().map(|&v| f(v)).collect())
                .collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// Builds a signal of the same rate from already validated channels.
    pub(crate) fn with_channels(&self, values: Vec<Vec<f64>>) -> Signal {
        debug_assert!(values.iter().all(|ch| ch.len() == values[0].len()));
        Signal {
            values,
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// Samples every channel at the given fractional source positions.
    fn sample_at(&self, positions: &[f64]) -> Signal {
        let values = self
            .values
            .iter()
            .map(|ch| positions.iter().map(|&p| interpolate(ch, p)).collect())
            .collect();
        self.with_channels(values)
    }
}

/// Linear interpolation of `xs` at fractional index `pos`, clamped to the
/// valid range `[0, len - 1]`.
pub fn interpolate(xs: &[f64], pos: f64) -> f64 {
    let last = xs.len() - 1;
    if pos <= 0.0 {
        return xs[0];
    }
    if pos >= last as f64 {
        return xs[last];
    }
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if frac == 0.0 {
        xs[i]
    } else {
        xs[i] + (xs[i + 1] - xs[i]) * frac
    }
}

/// Resamples every channel to `new_length` samples. Endpoints align: output
/// index `j` reads source position `j * (len - 1) / (new_length - 1)`.
pub fn resample_linear(s: &Signal, new_length: usize) -> Result<Signal> {
    if new_length < 2 {
        return Err(Error::invalid(format!(
            "resample length must be >= 2, got {new_length}"
        )));
    }
    if new_length == s.len() {
        return Ok(s.clone());
    }
    let span = (s.len() - 1) as f64;
    let denom = (new_length - 1) as f64;
    let positions: Vec<f64> = (0..new_length)
        .map(|j| {
            if j == new_length - 1 {
                span
            } else {
                j as f64 * span / denom
            }
        })
        .collect();
    Ok(s.sample_at(&positions))
}

/// A monotone piecewise-linear remapping of the time axis, given as
/// `(source_index, target_index)` knots.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeMap {
    knots: Vec<(f64, f64)>,
}

impl TimeMap {
    /// Knots must be finite and strictly increasing in both coordinates.
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::invalid("time map needs at least two knots"));
        }
        if knots.iter().any(|(s, t)| !s.is_finite() || !t.is_finite()) {
            return Err(Error::invalid("time map knots must be finite"));
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
                return Err(Error::invalid(format!(
                    "time map knots not strictly increasing: {:?} then {:?}",
                    w[0], w[1]
                )));
            }
        }
        Ok(TimeMap { knots })
    }

    /// The map `{(0, 0), (n - 1, n - 1)}`.
    pub fn identity(length: usize) -> Result<Self> {
        let last = length.saturating_sub(1) as f64;
        TimeMap::new(vec![(0.0, 0.0), (last, last)])
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// Source position that the map sends to `target`, by inverting the
    /// segment containing it.
    pub fn source_of(&self, target: f64) -> f64 {
        let k = &self.knots;
        let seg = k.windows(2).position(|w| target <= w[1].1).unwrap_or(k.len() - 2);
        let (s0, t0) = k[seg];
        let (s1, t1) = k[seg + 1];
        if target == t1 {
            return s1;
        }
        s0 + (target - t0) * (s1 - s0) / (t1 - t0)
    }
}

/// Resamples `s` through the inverse of `map`: output index `j` takes the value
/// of `s` at the source position that `map` sends to `j`.
pub fn apply_time_map(s: &Signal, map: &TimeMap) -> Result<Signal> {
    let last = (s.len() - 1) as f64;
    let first = map.knots[0];
    let end = map.knots[map.knots.len() - 1];
    if first.1 != 0.0 || end.1 != last {
        return Err(Error::invalid(format!(
            "time map targets span [{}, {}], signal needs [0, {last}]",
            first.1, end.1
        )));
    }
    if first.0 < 0.0 || end.0 > last {
        return Err(Error::invalid(format!(
            "time map sources [{}, {}] fall outside [0, {last}]",
            first.0, end.0
        )));
    }
    let positions: Vec<f64> = (0..s.len()).map(|j| map.source_of(j as f64)).collect();
    Ok(s.sample_at(&positions))
}
