//! Windowed-sample and embedding files.
//!
//! Sample files hold one row per channel per gesture:
//!
//! ```text
//! # sample_rate_hz=100
//! user_id,event_index,channel,v1,v2,...,vN
//! u000,0,0,0.12,0.15,...
//! u000,0,1,-9.70,-9.68,...
//! ```
//!
//! The rows of one sample are contiguous and list channels `0..C` in order.
//! The optional `# sample_rate_hz=` comment defaults to 100 Hz. Embedding files
//! hold one row per gesture: `user_id,event_index,e1,...,eD`.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::{Signal, DEFAULT_SAMPLE_RATE_HZ};

/// Key of one tap gesture: `(user_id, event_index)`.
pub type SampleKey = (String, u32);

#[derive(Debug, Clone, PartialEq)]
pub struct GestureSample {
    pub user_id: String,
    pub event_index: u32,
    pub signal: Signal,
}

impl GestureSample {
    pub fn key(&self) -> SampleKey {
        (self.user_id.clone(), self.event_index)
    }
}

/// A validated collection of gestures sharing one window shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<GestureSample>,
    users: Vec<String>,
    by_user: HashMap<String, Vec<usize>>,
}

impl Dataset {
    /// Users are ordered by first appearance; each user's samples are indexed
    /// in ascending `event_index` order.
    pub fn new(samples: Vec<GestureSample>) -> Result<Self> {
        let mut users = Vec::new();
        let mut by_user: HashMap<String, Vec<usize>> = HashMap::new();
        let mut seen = HashSet::new();
        if let Some(first) = samples.first() {
            let shape = shape_of(&first.signal);
            for (i, s) in samples.iter().enumerate() {
                if shape_of(&s.signal) != shape {
                    return Err(Error::Data(format!(
                        "sample ({}, {}) has shape {:?}, dataset uses {:?}",
                        s.user_id,
                        s.event_index,
                        shape_of(&s.signal),
                        shape
                    )));
                }
                if !seen.insert((s.user_id.as_str(), s.event_index)) {
                    return Err(Error::Data(format!(
                        "duplicate sample key ({}, {})",
                        s.user_id, s.event_index
                    )));
                }
                by_user
                    .entry(s.user_id.clone())
                    .or_insert_with(|| {
                        users.push(s.user_id.clone());
                        Vec::new()
                    })
                    .push(i);
            }
        }
        for idx in by_user.values_mut() {
            idx.sort_by_key(|&i| samples[i].event_index);
        }
        Ok(Dataset {
            samples,
            users,
            by_user,
        })
    }

    pub fn samples(&self) -> &[GestureSample] {
        &self.samples
    }

    pub fn sample(&self, index: usize) -> &GestureSample {
        &self.samples[index]
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Indices of `user`'s samples sorted by event index (empty if unknown).
    pub fn user_samples(&self, user: &str) -> &[usize] {
        self.by_user.get(user).map(Vec::as_slice).unwrap_or(&[])
    }

    /// `(n_channels, length, sample_rate_hz)` shared by every sample.
    pub fn shape(&self) -> Option<(usize, usize, f64)> {
        self.samples.first().map(|s| shape_of(&s.signal))
    }

    pub fn summary(&self) -> DatasetSummary {
        let counts: Vec<usize> = self.users.iter().map(|u| self.user_samples(u).len()).collect();
        let (n_channels, length, sample_rate_hz) = self.shape().unwrap_or((0, 0, 0.0));
        DatasetSummary {
            samples: self.samples.len(),
            users: self.users.len(),
            n_channels,
            length,
            sample_rate_hz,
            min_per_user: counts.iter().copied().min().unwrap_or(0),
            max_per_user: counts.iter().copied().max().unwrap_or(0),
        }
    }

    /// Deviations from the reference layout (200 windows of 6 channels per
    /// user). Empty when the dataset conforms.
    pub fn reference_layout_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some((c, _, _)) = self.shape() {
            if c != 6 {
                out.push(format!("expected 6 channels, found {c}"));
            }
        }
        for u in &self.users {
            let n = self.user_samples(u).len();
            if n != 200 {
                out.push(format!("user {u} has {n} samples, expected 200"));
            }
        }
        out
    }
}

fn shape_of(s: &Signal) -> (usize, usize, f64) {
    (s.n_channels(), s.len(), s.sample_rate_hz())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub samples: usize,
    pub users: usize,
    pub n_channels: usize,
    pub length: usize,
    pub sample_rate_hz: f64,
    pub min_per_user: usize,
    pub max_per_user: usize,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Reads the leading `# key=value` comments, then returns a csv reader over
/// the remaining text. Comment lines are skipped by the reader itself.
fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn header_sample_rate(path: &Path, text: &str) -> Result<f64> {
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        let Some(comment) = line.strip_prefix('#') else {
            break;
        };
        if let Some(v) = comment.trim().strip_prefix("sample_rate_hz=") {
            let rate: f64 = v
                .trim()
                .parse()
                .map_err(|_| parse_err(path, i as u64 + 1, format!("bad sample rate {v:?}")))?;
            if !(rate.is_finite() && rate > 0.0) {
                return Err(parse_err(path, i as u64 + 1, "sample rate must be positive"));
            }
            return Ok(rate);
        }
    }
    Ok(DEFAULT_SAMPLE_RATE_HZ)
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

fn check_header(path: &Path, rec: &csv::StringRecord, fixed: &[&str], prefix: char) -> Result<usize> {
    let line = record_line(rec);
    for (k, name) in fixed.iter().enumerate() {
        if rec.get(k) != Some(*name) {
            return Err(parse_err(
                path,
                line,
                format!("header must start with {}", fixed.join(",")),
            ));
        }
    }
    let width = rec.len() - fixed.len();
    for (k, field) in rec.iter().skip(fixed.len()).enumerate() {
        if field != format!("{prefix}{}", k + 1) {
            return Err(parse_err(
                path,
                line,
                format!(
                    "header column {} should be {prefix}{}, found {field:?}",
                    fixed.len() + k + 1,
                    k + 1
                ),
            ));
        }
    }
    if width == 0 {
        return Err(parse_err(path, line, "header has no value columns"));
    }
    Ok(width)
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: u64, name: &str, field: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| parse_err(path, line, format!("bad {name} {field:?}")))
}

fn parse_values<'a>(path: &Path, line: u64, fields: impl Iterator<Item = &'a str>) -> Result<Vec<f64>> {
    fields
        .map(|f| {
            let v: f64 = parse_field(path, line, "value", f)?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_err(path, line, format!("non-finite value {f:?}")))
            }
        })
        .collect()
}

/// Loads and validates a windowed-sample file.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = read_text(path)?;
    parse_dataset(path, &text)
}

struct Pending {
    user_id: String,
    event_index: u32,
    first_line: u64,
    channels: Vec<Vec<f64>>,
}

pub(crate) fn parse_dataset(path: &Path, text: &str) -> Result<Dataset> {
    let rate = header_sample_rate(path, text)?;
    let mut reader = csv_reader(text);
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| parse_err(path, 0, e.to_string()))?,
        None => return Err(parse_err(path, 1, "missing header")),
    };
    let length = check_header(path, &header, &["user_id", "event_index", "channel"], 'v')?;
    if length < 2 {
        return Err(parse_err(path, record_line(&header), "windows need at least 2 values"));
    }

    let mut samples: Vec<GestureSample> = Vec::new();
    let mut seen: HashSet<SampleKey> = HashSet::new();
    let mut n_channels: Option<usize> = None;
    let mut pending: Option<Pending> = None;

    let mut finish = |p: Pending, samples: &mut Vec<GestureSample>| -> Result<()> {
        let count = p.channels.len();
        match n_channels {
            None => n_channels = Some(count),
            Some(c) if c != count => {
                return Err(parse_err(
                    path,
                    p.first_line,
                    format!(
                        "sample ({}, {}) has {count} channels, expected {c}",
                        p.user_id, p.event_index
                    ),
                ))
            }
            Some(_) => {}
        }
        let signal = Signal::new(p.channels, rate).map_err(|e| parse_err(path, p.first_line, e.to_string()))?;
        samples.push(GestureSample {
            user_id: p.user_id,
            event_index: p.event_index,
            signal,
        });
        Ok(())
    };

    for rec in records {
        let rec = rec.map_err(|e| parse_err(path, 0, e.to_string()))?;
        let line = record_line(&rec);
        if rec.len() != length + 3 {
            return Err(parse_err(
                path,
                line,
                format!(
                    "row has {} values, header declares {length}",
                    rec.len().saturating_sub(3)
                ),
            ));
        }
        let user_id = rec[0].to_string();
        if user_id.is_empty() {
            return Err(parse_err(path, line, "empty user_id"));
        }
        let event_index: u32 = parse_field(path, line, "event_index", &rec[1])?;
        let channel: usize = parse_field(path, line, "channel", &rec[2])?;
        let values = parse_values(path, line, rec.iter().skip(3))?;

        let continues = pending
            .as_ref()
            .is_some_and(|p| p.user_id == user_id && p.event_index == event_index);
        if continues {
            let p = pending.as_mut().expect("pending sample");
            if channel != p.channels.len() {
                return Err(parse_err(
                    path,
                    line,
                    format!("expected channel {}, found {channel}", p.channels.len()),
                ));
            }
            p.channels.push(values);
            continue;
        }
        if let Some(p) = pending.take() {
            finish(p, &mut samples)?;
        }
        let key = (user_id, event_index);
        if !seen.insert(key.clone()) {
            return Err(parse_err(
                path,
                line,
                format!("duplicate sample key ({}, {})", key.0, key.1),
            ));
        }
        if channel != 0 {
            return Err(parse_err(
                path,
                line,
                format!("sample must start at channel 0, found {channel}"),
            ));
        }
        pending = Some(Pending {
            user_id: key.0,
            event_index: key.1,
            first_line: line,
            channels: vec![values],
        });
    }
    if let Some(p) = pending.take() {
        finish(p, &mut samples)?;
    }
    Dataset::new(samples)
}

/// Serializes a dataset in the format read by [`load_dataset`].
pub fn write_dataset_to<W: Write>(out: W, dataset: &Dataset) -> Result<()> {
    let mut w = std::io::BufWriter::new(out);
    let wrap = |e: std::io::Error| Error::io("<dataset output>", e);
    let rate = dataset.shape().map(|s| s.2).unwrap_or(DEFAULT_SAMPLE_RATE_HZ);
    writeln!(w, "# sample_rate_hz={rate}").map_err(wrap)?;
    let length = dataset.shape().map(|s| s.1).unwrap_or(0);
    write!(w, "user_id,event_index,channel").map_err(wrap)?;
    for k in 1..=length {
        write!(w, ",v{k}").map_err(wrap)?;
    }
    writeln!(w).map_err(wrap)?;
    for s in dataset.samples() {
        for (c, ch) in s.signal.channels().iter().enumerate() {
            write!(w, "{},{},{c}", s.user_id, s.event_index).map_err(wrap)?;
            for v in ch {
                write!(w, ",{v}").map_err(wrap)?;
            }
            writeln!(w).map_err(wrap)?;
        }
    }
    w.flush().map_err(wrap)
}

pub fn write_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset_to(file, dataset).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Externally computed feature vectors keyed by gesture.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<SampleKey, Vec<f64>>,
    source: String,
}

impl EmbeddingTable {
    pub fn new(dim: usize, vectors: HashMap<SampleKey, Vec<f64>>, source: impl Into<String>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::Data("no embeddings".into()));
        }
        if let Some((k, v)) = vectors.iter().find(|(_, v)| v.len() != dim) {
            return Err(Error::Data(format!(
                "embedding ({}, {}) has dimension {}, expected {dim}",
                k.0,
                k.1,
                v.len()
            )));
        }
        Ok(EmbeddingTable {
            dim,
            vectors,
            source: source.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Where the table came from, usually a file path.
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn get(&self, user_id: &str, event_index: u32) -> Option<&[f64]> {
        self.vectors.get(&(user_id.to_string(), event_index)).map(Vec::as_slice)
    }
}

/// Loads an embedding file; all rows must share one dimension.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let text = read_text(path)?;
    parse_embeddings(path, &text)
}

pub(crate) fn parse_embeddings(path: &Path, text: &str) -> Result<EmbeddingTable> {
    let mut reader = csv_reader(text);
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| parse_err(path, 0, e.to_string()))?,
        None => return Err(Error::Data(format!("{}: no embeddings", path.display()))),
    };
    let dim = check_header(path, &header, &["user_id", "event_index"], 'e')?;
    let mut vectors = HashMap::new();
    for rec in records {
        let rec = rec.map_err(|e| parse_err(path, 0, e.to_string()))?;
        let line = record_line(&rec);
        if rec.len() != dim + 2 {
            return Err(parse_err(
                path,
                line,
                format!("row has {} components, expected {dim}", rec.len().saturating_sub(2)),
            ));
        }
        let user_id = rec[0].to_string();
        let event_index: u32 = parse_field(path, line, "event_index", &rec[1])?;
        let v = parse_values(path, line, rec.iter().skip(2))?;
        if vectors.insert((user_id.clone(), event_index), v).is_some() {
            return Err(parse_err(
                path,
                line,
                format!("duplicate embedding key ({user_id}, {event_index})"),
            ));
        }
    }
    if vectors.is_empty() {
        return Err(Error::Data(format!("{}: no embeddings", path.display())));
    }
    EmbeddingTable::new(dim, vectors, path.display().to_string())
}
