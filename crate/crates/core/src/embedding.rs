//! Feature vectors for gesture windows.
//!
//! Two providers exist: a built-in statistical extractor that works on any
//! signal (including augmented ones), and lookup into a table of vectors
//! computed elsewhere, e.g. by a pretrained network.

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ingest::{load_embeddings, EmbeddingTable};
use crate::signal::Signal;

/// Number of statistical features computed per channel.
pub const FEATURES_PER_CHANNEL: usize = 10;

/// Feature names in output order, repeated for every channel.
pub const FEATURE_NAMES: [&str; FEATURES_PER_CHANNEL] = [
    "mean", "std", "min", "max", "rms", "mad1", "skewness", "kurtosis", "zcr", "iqr",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub vector: Vec<f64>,
    pub provider: String,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Ten descriptive statistics per channel, concatenated channel by channel in
/// [`FEATURE_NAMES`] order.
///
/// Standard deviation, skewness and kurtosis use population moments; kurtosis
/// is excess kurtosis. Both higher moments are 0 for a constant channel. The
/// zero-crossing feature counts sign changes between consecutive samples
/// (`x[t] * x[t+1] < 0`) divided by the channel length. The interquartile
/// range uses linearly interpolated quantiles.
pub fn extract_statistical(s: &Signal) -> Embedding {
    let mut vector = Vec::with_capacity(FEATURES_PER_CHANNEL * s.n_channels());
    for ch in s.channels() {
        vector.extend_from_slice(&channel_features(ch));
    }
    Embedding {
        vector,
        provider: "statistical".into(),
    }
}

fn channel_features(xs: &[f64]) -> [f64; FEATURES_PER_CHANNEL] {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;

    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let rms = (xs.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    let mad1 = xs.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (n - 1.0);
    let crossings = xs.windows(2).filter(|w| w[0] * w[1] < 0.0).count() as f64;

    // Rounding in the mean leaves a tiny residual variance on constant data.
    let scale = min.abs().max(max.abs());
    let flat = m2 <= (1e-12 * scale).powi(2);
    let (skew, kurt) = if flat {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    };

    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);

    [
        mean,
        if flat { 0.0 } else { m2.sqrt() },
        min,
        max,
        rms,
        mad1,
        skew,
        kurt,
        crossings / n,
        iqr,
    ]
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn lookup_embedding(table: &EmbeddingTable, user_id: &str, event_index: u32) -> Result<Embedding> {
    table
        .get(user_id, event_index)
        .map(|v| Embedding {
            vector: v.to_vec(),
            provider: format!("table:{}", table.source()),
        })
        .ok_or_else(|| Error::NotFound(format!("no embedding for ({user_id}, {event_index})")))
}

/// Where feature vectors come from.
#[derive(Debug, Clone)]
pub enum Provider {
    Statistical,
    Table(Arc<EmbeddingTable>),
}

impl Provider {
    /// Parses `statistical` or `table:<path>`, loading the table. Relative
    /// table paths resolve against `base_dir`.
    pub fn parse(spec: &str, base_dir: &Path) -> Result<Provider> {
        if spec == "statistical" {
            return Ok(Provider::Statistical);
        }
        if let Some(path) = spec.strip_prefix("table:") {
            let table = load_embeddings(base_dir.join(path))?;
            return Ok(Provider::Table(Arc::new(table)));
        }
        Err(Error::config(format!(
            "unknown embedding provider {spec:?} (expected \"statistical\" or \"table:<path>\")"
        )))
    }

    pub fn name(&self) -> String {
        match self {
            Provider::Statistical => "statistical".into(),
            Provider::Table(t) => format!("table:{}", t.source()),
        }
    }

    /// Whether the provider can embed signals that were never recorded, which
    /// augmentation requires.
    pub fn supports_augmentation(&self) -> bool {
        matches!(self, Provider::Statistical)
    }

    /// Embeds one window. Table providers ignore the signal and use the key.
    pub fn embed(&self, user_id: &str, event_index: u32, signal: &Signal) -> Result<Embedding> {
        match self {
            Provider::Statistical => Ok(extract_statistical(signal)),
            Provider::Table(t) => lookup_embedding(t, user_id, event_index),
        }
    }
}
