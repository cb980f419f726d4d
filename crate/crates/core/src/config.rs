//! Sweep configuration files.
//!
//! A sweep file is TOML. Every key is optional except where noted; omitted
//! grids fall back to the reference grids. Example:
//!
//! ```toml
//! seed = 7
//! mode = "reference"            # or "exploratory"
//!
//! [data]
//! path = "taps.csv"             # or a [data.synthetic] table
//!
//! [embedding]
//! provider = "statistical"      # or "table:<path>"
//!
//! [svm]
//! kernels = ["linear", "rbf"]
//! c = [1, 10, 100]
//! gamma = "auto"                # or a positive number
//! calibration = "evaluation"    # or "training"
//!
//! [protocol]
//! eval_users = "second-half"    # or a list of user ids
//! pool_rule = "alternating"
//!
//! [[augmentation]]
//! method = "noise"
//! sigma = [0.025, 0.05]
//! ratios = [1.0, 0.5]
//!
//! [[combined]]
//! label = "Random noise+Temporal scaling"
//! members = ["noise", "temporal"]   # best swept value of each family
//! ratio = 1.0
//! ```
//!
//! A combined member may also be a fixed spec such as
//! `{ method = "intensity", f_i = 1.05 }`. Relative paths resolve against
//! the directory of the configuration file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::augment::{AugmentationSpec, Method, WarpDirection, SCALE_GRID, SIGMA_GRID};
use crate::embedding::Provider;
use crate::error::{Error, Result};
use crate::ingest::{load_dataset, Dataset};
use crate::protocol::{
    reference_eval_users, CalibrationMode, CombinedCell, CombinedMember, ExperimentConfig, Family, IndependentCell,
    PoolRule, SplitSizes, SvmGrid,
};
use crate::svm::{Gamma, KernelKind, C_GRID};
use crate::synth::{generate, SynthConfig};

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawFile {
    seed: Option<u64>,
    mode: Option<String>,
    data: Option<RawData>,
    embedding: Option<RawEmbedding>,
    svm: Option<RawSvm>,
    protocol: Option<RawProtocol>,
    #[serde(default)]
    augmentation: Vec<RawAugmentation>,
    #[serde(default)]
    combined: Vec<RawCombined>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    path: Option<PathBuf>,
    synthetic: Option<RawSynth>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSynth {
    n_users: Option<usize>,
    samples_per_user: Option<usize>,
    length: Option<usize>,
    n_channels: Option<usize>,
    components: Option<usize>,
    amplitude: Option<f64>,
    jitter_std: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEmbedding {
    provider: String,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawGamma {
    Name(String),
    Value(f64),
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSvm {
    kernels: Option<Vec<String>>,
    c: Option<Vec<f64>>,
    gamma: Option<RawGamma>,
    tolerance: Option<f64>,
    max_iterations: Option<usize>,
    calibration: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawUsers {
    Rule(String),
    List(Vec<String>),
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawProtocol {
    eval_users: Option<RawUsers>,
    negative_users: Option<Vec<String>>,
    pool_rule: Option<String>,
    train_pos: Option<usize>,
    test_pos: Option<usize>,
    train_neg: Option<usize>,
    test_neg: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAugmentation {
    method: String,
    mu: Option<f64>,
    sigma: Option<Vec<f64>>,
    f_t: Option<Vec<f64>>,
    f_i: Option<Vec<f64>>,
    directions: Option<Vec<String>>,
    ratios: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    method: String,
    mu: Option<f64>,
    sigma: Option<f64>,
    f_t: Option<f64>,
    f_i: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawMember {
    Best(String),
    Fixed(RawSpec),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCombined {
    label: Option<String>,
    members: Vec<RawMember>,
    ratio: Option<f64>,
}

/// Where the windows come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    File(PathBuf),
    Synthetic(SynthConfig),
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::File(p) => load_dataset(p),
            DataSource::Synthetic(cfg) => generate(cfg),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvalUsers {
    SecondHalf,
    List(Vec<String>),
}

/// A validated sweep file. Dataset-dependent parts (user lists) are
/// resolved by [`SweepConfig::experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub seed: u64,
    pub reference_mode: bool,
    pub data: DataSource,
    pub provider: String,
    /// Directory relative provider paths resolve against.
    pub base_dir: PathBuf,
    pub grid: SvmGrid,
    pub calibration: CalibrationMode,
    pub eval_users: EvalUsers,
    pub negative_users: Option<Vec<String>>,
    pub pool_rule: PoolRule,
    pub sizes: SplitSizes,
    pub independent: Vec<IndependentCell>,
    pub combined: Vec<CombinedCell>,
}

fn nonempty<T>(name: &str, v: Option<Vec<T>>, default: impl FnOnce() -> Vec<T>) -> Result<Vec<T>> {
    match v {
        Some(v) if v.is_empty() => Err(Error::config(format!("{name} grid is empty"))),
        Some(v) => Ok(v),
        None => Ok(default()),
    }
}

fn parse_kernel(s: &str) -> Result<KernelKind> {
    match s.to_ascii_lowercase().as_str() {
        "linear" => Ok(KernelKind::Linear),
        "rbf" => Ok(KernelKind::Rbf),
        _ => Err(Error::config(format!(
            "unknown kernel {s:?} (expected \"linear\" or \"rbf\")"
        ))),
    }
}

fn parse_direction(s: &str) -> Result<WarpDirection> {
    match s {
        "L->R" | "lr" | "left-to-right" => Ok(WarpDirection::LeftToRight),
        "L<-R" | "rl" | "right-to-left" => Ok(WarpDirection::RightToLeft),
        _ => Err(Error::config(format!(
            "unknown warp direction {s:?} (expected \"lr\" or \"rl\")"
        ))),
    }
}

fn parse_spec(raw: &RawSpec) -> Result<AugmentationSpec> {
    let need = |name: &str, v: Option<f64>| v.ok_or_else(|| Error::config(format!("{} spec needs {name}", raw.method)));
    let spec = match raw.method.as_str() {
        "noise" => AugmentationSpec::noise_with_mean(raw.mu.unwrap_or(0.0), need("sigma", raw.sigma)?),
        "temporal" => AugmentationSpec::temporal(need("f_t", raw.f_t)?),
        "intensity" => AugmentationSpec::intensity(need("f_i", raw.f_i)?),
        other => match Method::from_cli_name(other) {
            Some(m @ (Method::WarpLeftToRight | Method::WarpRightToLeft)) => AugmentationSpec {
                method: m,
                ..AugmentationSpec::intensity(1.0)
            },
            _ => return Err(Error::config(format!("unknown augmentation method {other:?}"))),
        },
    };
    spec.validate().map_err(|e| Error::config(e.to_string()))?;
    Ok(spec)
}

fn expand_augmentation(raw: &RawAugmentation, reference: bool) -> Result<Vec<IndependentCell>> {
    let ratios = nonempty("ratios", raw.ratios.clone(), || vec![1.0, 0.5])?;
    let family = Family::parse(&raw.method).ok_or_else(|| {
        Error::config(format!(
            "unknown augmentation method {:?} (expected noise, temporal, intensity or warp)",
            raw.method
        ))
    })?;
    let unexpected = |field: &str, present: bool| {
        if present {
            Err(Error::config(format!(
                "{field} does not apply to method {}",
                raw.method
            )))
        } else {
            Ok(())
        }
    };
    let specs: Vec<AugmentationSpec> = match family {
        Family::Noise => {
            unexpected("f_t", raw.f_t.is_some())?;
            unexpected("f_i", raw.f_i.is_some())?;
            unexpected("directions", raw.directions.is_some())?;
            let mu = raw.mu.unwrap_or(0.0);
            if reference && mu != 0.0 {
                return Err(Error::config("reference mode uses zero-mean noise"));
            }
            nonempty("sigma", raw.sigma.clone(), || SIGMA_GRID.to_vec())?
                .into_iter()
                .map(|s| AugmentationSpec::noise_with_mean(mu, s))
                .collect()
        }
        Family::Temporal => {
            unexpected("sigma", raw.sigma.is_some())?;
            unexpected("f_i", raw.f_i.is_some())?;
            unexpected("directions", raw.directions.is_some())?;
            nonempty("f_t", raw.f_t.clone(), || SCALE_GRID.to_vec())?
                .into_iter()
                .map(AugmentationSpec::temporal)
                .collect()
        }
        Family::Intensity => {
            unexpected("sigma", raw.sigma.is_some())?;
            unexpected("f_t", raw.f_t.is_some())?;
            unexpected("directions", raw.directions.is_some())?;
            nonempty("f_i", raw.f_i.clone(), || SCALE_GRID.to_vec())?
                .into_iter()
                .map(AugmentationSpec::intensity)
                .collect()
        }
        Family::Warp => {
            unexpected("sigma", raw.sigma.is_some())?;
            unexpected("f_t", raw.f_t.is_some())?;
            unexpected("f_i", raw.f_i.is_some())?;
            let dirs = nonempty("directions", raw.directions.clone(), || vec!["lr".into(), "rl".into()])?;
            dirs.iter()
                .map(|d| parse_direction(d).map(AugmentationSpec::warp))
                .collect::<Result<_>>()?
        }
    };
    if raw.mu.is_some() && family != Family::Noise {
        return Err(Error::config(format!("mu does not apply to method {}", raw.method)));
    }
    for s in &specs {
        s.validate().map_err(|e| Error::config(e.to_string()))?;
    }
    let mut cells = Vec::new();
    for &ratio in &ratios {
        for &spec in &specs {
            cells.push(IndependentCell { spec, ratio });
        }
    }
    Ok(cells)
}

impl SweepConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<SweepConfig> {
        let raw: RawFile = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        let reference_mode = match raw.mode.as_deref() {
            None | Some("reference") => true,
            Some("exploratory") => false,
            Some(other) => {
                return Err(Error::config(format!(
                    "unknown mode {other:?} (expected \"reference\" or \"exploratory\")"
                )))
            }
        };
        let seed = raw.seed.unwrap_or(0);

        let data = match raw.data {
            Some(RawData {
                path: Some(p),
                synthetic: None,
            }) => DataSource::File(base_dir.join(p)),
            Some(RawData {
                path: None,
                synthetic: Some(s),
            }) => DataSource::Synthetic(synth_config(&s, seed)?),
            Some(_) => return Err(Error::config("[data] needs exactly one of path or synthetic")),
            None => return Err(Error::config("missing [data] section")),
        };

        let provider = raw.embedding.map_or_else(|| "statistical".to_string(), |e| e.provider);
        if provider != "statistical" && !provider.starts_with("table:") {
            return Err(Error::config(format!(
                "unknown embedding provider {provider:?} (expected \"statistical\" or \"table:<path>\")"
            )));
        }

        let svm = raw.svm.unwrap_or_default();
        let kernels = nonempty("kernels", svm.kernels, || vec!["linear".into(), "rbf".into()])?
            .iter()
            .map(|k| parse_kernel(k))
            .collect::<Result<Vec<_>>>()?;
        let gamma = match svm.gamma {
            None => Gamma::Auto,
            Some(RawGamma::Name(n)) if n == "auto" => Gamma::Auto,
            Some(RawGamma::Name(n)) => {
                return Err(Error::config(format!("gamma must be \"auto\" or a number, got {n:?}")))
            }
            Some(RawGamma::Value(g)) => Gamma::Value(g),
        };
        let grid = SvmGrid {
            kernels,
            cs: nonempty("C", svm.c, || C_GRID.to_vec())?,
            gamma,
            tolerance: svm.tolerance.unwrap_or(1e-6),
            max_iterations: svm.max_iterations.unwrap_or(10_000),
        };
        grid.validate()?;
        let calibration = match svm.calibration.as_deref() {
            None => CalibrationMode::Evaluation,
            Some(s) => CalibrationMode::parse(s).ok_or_else(|| {
                Error::config(format!(
                    "unknown calibration {s:?} (expected \"evaluation\" or \"training\")"
                ))
            })?,
        };

        let protocol = raw.protocol.unwrap_or_default();
        let eval_users = match protocol.eval_users {
            None => EvalUsers::SecondHalf,
            Some(RawUsers::Rule(r)) if r == "second-half" => EvalUsers::SecondHalf,
            Some(RawUsers::Rule(r)) => {
                return Err(Error::config(format!(
                    "eval_users must be \"second-half\" or a list, got {r:?}"
                )))
            }
            Some(RawUsers::List(l)) if l.is_empty() => return Err(Error::config("eval_users list is empty")),
            Some(RawUsers::List(l)) => EvalUsers::List(l),
        };
        let pool_rule = match protocol.pool_rule.as_deref() {
            None => PoolRule::Alternating,
            Some(s) => PoolRule::parse(s).ok_or_else(|| {
                Error::config(format!(
                    "unknown pool_rule {s:?} (expected \"alternating\" or \"halves\")"
                ))
            })?,
        };
        let r = SplitSizes::REFERENCE;
        let sizes = SplitSizes {
            train_pos: protocol.train_pos.unwrap_or(r.train_pos),
            test_pos: protocol.test_pos.unwrap_or(r.test_pos),
            train_neg: protocol.train_neg.unwrap_or(r.train_neg),
            test_neg: protocol.test_neg.unwrap_or(r.test_neg),
        };
        sizes.validate()?;
        if reference_mode && sizes != r {
            return Err(Error::config("reference mode uses split sizes 20/100/100/100"));
        }

        let mut independent = Vec::new();
        for a in &raw.augmentation {
            independent.extend(expand_augmentation(a, reference_mode)?);
        }
        let mut combined = Vec::new();
        for c in &raw.combined {
            let members = c
                .members
                .iter()
                .map(|m| match m {
                    RawMember::Best(name) => Family::parse(name)
                        .map(CombinedMember::Best)
                        .ok_or_else(|| Error::config(format!("unknown augmentation family {name:?}"))),
                    RawMember::Fixed(spec) => parse_spec(spec).map(CombinedMember::Fixed),
                })
                .collect::<Result<Vec<_>>>()?;
            if members.is_empty() {
                return Err(Error::config("combined augmentation has no members"));
            }
            let label = c.label.clone().unwrap_or_else(|| {
                members
                    .iter()
                    .map(|m| match m {
                        CombinedMember::Best(f) => f.label().to_string(),
                        CombinedMember::Fixed(s) => Family::of(s.method).label().to_string(),
                    })
                    .collect::<Vec<_>>()
                    .join("+")
            });
            combined.push(CombinedCell {
                label,
                members,
                ratio: c.ratio.unwrap_or(1.0),
            });
        }

        let cfg = SweepConfig {
            seed,
            reference_mode,
            data,
            provider,
            base_dir: base_dir.to_path_buf(),
            grid,
            calibration,
            eval_users,
            negative_users: protocol.negative_users,
            pool_rule,
            sizes,
            independent,
            combined,
        };
        cfg.check_static()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SweepConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Checks that need no dataset; the rest happens in
    /// [`ExperimentConfig::validate`].
    fn check_static(&self) -> Result<()> {
        if !self.provider.starts_with("statistical") && (!self.independent.is_empty() || !self.combined.is_empty()) {
            return Err(Error::config(format!(
                "provider {} cannot embed augmented signals; augmentation needs the statistical provider",
                self.provider
            )));
        }
        let probe = ExperimentConfig {
            base_seed: self.seed,
            calibration: self.calibration,
            grid: self.grid.clone(),
            eval_users: vec![],
            negative_candidates: None,
            pool_rule: self.pool_rule,
            sizes: self.sizes,
            independent: self.independent.clone(),
            combined: self.combined.clone(),
            reference_mode: self.reference_mode,
        };
        // validate everything except user lists against an empty dataset
        match probe.validate(&Dataset::new(Vec::new())?) {
            Err(Error::Config(m)) if m == "no evaluation users" => Ok(()),
            other => other,
        }
    }

    /// Resolves the embedding provider.
    pub fn provider(&self) -> Result<Provider> {
        Provider::parse(&self.provider, &self.base_dir)
    }

    /// The experiment over `dataset`, with `seed` overriding the file's seed.
    pub fn experiment(&self, dataset: &Dataset, seed: Option<u64>) -> Result<ExperimentConfig> {
        let eval_users = match &self.eval_users {
            EvalUsers::SecondHalf => reference_eval_users(dataset),
            EvalUsers::List(l) => l.clone(),
        };
        let cfg = ExperimentConfig {
            base_seed: seed.unwrap_or(self.seed),
            calibration: self.calibration,
            grid: self.grid.clone(),
            eval_users,
            negative_candidates: self.negative_users.clone(),
            pool_rule: self.pool_rule,
            sizes: self.sizes,
            independent: self.independent.clone(),
            combined: self.combined.clone(),
            reference_mode: self.reference_mode,
        };
        cfg.validate(dataset)?;
        Ok(cfg)
    }
}

fn synth_config(raw: &RawSynth, seed: u64) -> Result<SynthConfig> {
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        n_users: raw.n_users.unwrap_or(d.n_users),
        samples_per_user: raw.samples_per_user.unwrap_or(d.samples_per_user),
        length: raw.length.unwrap_or(d.length),
        n_channels: raw.n_channels.unwrap_or(d.n_channels),
        components: raw.components.unwrap_or(d.components),
        amplitude: raw.amplitude.unwrap_or(d.amplitude),
        jitter_std: raw.jitter_std.unwrap_or(0.1 * raw.amplitude.unwrap_or(d.amplitude)),
        seed: raw.seed.unwrap_or(seed),
        ..d
    };
    cfg.validate()?;
    Ok(cfg)
}

/// The full reference sweep on 100 synthetic users: every method over its
/// whole grid at ratios 1 and 0.5, plus the two combined mixtures at 1.
pub const REFERENCE_SWEEP: &str = r#"seed = 2021
mode = "reference"

[data.synthetic]
n_users = 100
samples_per_user = 200
length = 150
n_channels = 6
amplitude = 1.0
jitter_std = 0.1

[embedding]
provider = "statistical"

[svm]
kernels = ["linear", "rbf"]
c = [1, 10, 100]
gamma = "auto"
calibration = "evaluation"

[protocol]
eval_users = "second-half"
pool_rule = "alternating"

[[augmentation]]
method = "noise"
sigma = [0.0125, 0.025, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5]
ratios = [1.0, 0.5]

[[augmentation]]
method = "temporal"
f_t = [0.8, 0.9, 0.95, 0.975, 0.9875, 1.0125, 1.025, 1.05, 1.1, 1.2]
ratios = [1.0, 0.5]

[[augmentation]]
method = "intensity"
f_i = [0.8, 0.9, 0.95, 0.975, 0.9875, 1.0125, 1.025, 1.05, 1.1, 1.2]
ratios = [1.0, 0.5]

[[augmentation]]
method = "warp"
directions = ["lr", "rl"]
ratios = [1.0, 0.5]

[[combined]]
label = "All methods"
members = ["noise", "temporal", "intensity", "warp"]
ratio = 1.0

[[combined]]
label = "Random noise+Temporal scaling"
members = ["noise", "temporal"]
ratio = 1.0
"#;
