use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tapaug::augment::{AugmentationPlan, AugmentationSpec, Method};
use tapaug::config::{SweepConfig, REFERENCE_SWEEP};
use tapaug::ingest::{load_dataset, load_embeddings, write_dataset, Dataset, GestureSample};
use tapaug::protocol::run_experiment;
use tapaug::report::{read_tables, table1, table2, write_report};
use tapaug::synth::{generate, SynthConfig};
use tapaug::Error;

/// Motion-signal augmentation and few-shot user identification sweeps.
#[derive(Parser)]
#[command(name = "tapaug", version)]
struct Cli {
    /// Base seed; overrides any seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset file.
    Synth {
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long, default_value_t = 100)]
        users: usize,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 150)]
        length: usize,
        #[arg(long, default_value_t = 6)]
        channels: usize,
        /// Signature amplitude.
        #[arg(long, default_value_t = 1.0)]
        amplitude: f64,
        /// Within-user jitter std (default: 10% of the amplitude).
        #[arg(long)]
        jitter: Option<f64>,
    },
    /// Check a dataset or embedding file and print a summary.
    Validate {
        file: PathBuf,
        #[arg(long, value_enum)]
        kind: Option<FileKind>,
        /// Treat deviations from 200 windows x 6 channels per user as errors.
        #[arg(long)]
        reference: bool,
    },
    /// Augment every window of a dataset file.
    Augment {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        /// noise, temporal, intensity, warp-lr or warp-rl
        #[arg(long)]
        method: String,
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long = "f-t")]
        f_t: Option<f64>,
        #[arg(long = "f-i")]
        f_i: Option<f64>,
        /// Also write original and augmented series side by side.
        #[arg(long)]
        plot_data: Option<PathBuf>,
    },
    /// Run an experiment grid and write report tables.
    Sweep {
        #[arg(long, short, required_unless_present = "reference", conflicts_with = "reference")]
        config: Option<PathBuf>,
        /// Use the built-in reference sweep on synthetic data.
        #[arg(long)]
        reference: bool,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Print the tables of a sweep directory and re-check their markers.
    Report { dir: PathBuf },
    /// Print the built-in reference sweep configuration.
    ReferenceConfig,
}

#[derive(Clone, Copy, ValueEnum)]
enum FileKind {
    Dataset,
    Embeddings,
}

/// Failure with the exit status it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::InvalidArgument(_) | Error::Config(_) => 1,
            Error::NotConverged { .. } => 3,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn data(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    data(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let seed = cli.seed;
    match cli.command {
        Command::Synth {
            output,
            users,
            samples,
            length,
            channels,
            amplitude,
            jitter,
        } => {
            let cfg = SynthConfig {
                n_users: users,
                samples_per_user: samples,
                length,
                n_channels: channels,
                amplitude,
                jitter_std: jitter.unwrap_or(0.1 * amplitude),
                seed: seed.unwrap_or(0),
                ..SynthConfig::default()
            };
            let dataset = generate(&cfg)?;
            write_dataset(&output, &dataset)?;
            println!(
                "wrote {} windows from {} users to {}",
                dataset.len(),
                dataset.users().len(),
                output.display()
            );
            Ok(())
        }
        Command::Validate { file, kind, reference } => validate(&file, kind, reference),
        Command::Augment {
            input,
            output,
            method,
            mu,
            sigma,
            f_t,
            f_i,
            plot_data,
        } => {
            let spec = build_spec(&method, mu, sigma, f_t, f_i)?;
            let dataset = load_dataset(&input)?;
            let augmented = augment_dataset(&dataset, spec, seed.unwrap_or(0))?;
            write_dataset(&output, &augmented)?;
            if let Some(path) = plot_data {
                write_plot_data(&path, &dataset, &augmented)?;
            }
            println!("augmented {} windows with {}", augmented.len(), spec.value_label());
            Ok(())
        }
        Command::Sweep { config, reference, out } => {
            let cfg = match config {
                Some(path) => SweepConfig::load(path)?,
                None => {
                    debug_assert!(reference);
                    SweepConfig::parse(REFERENCE_SWEEP, Path::new("."))?
                }
            };
            let provider = cfg.provider()?;
            let dataset = cfg.data.load()?;
            let experiment = cfg.experiment(&dataset, seed)?;
            let report = run_experiment(&experiment, &dataset, &provider)?;
            write_report(&report, &out)?;
            print!("{}\n{}", table1(&report)?.to_text(), table2(&report)?.to_text());
            println!("\nreport written to {}", out.display());
            Ok(())
        }
        Command::Report { dir } => {
            let (t1, t2) = read_tables(&dir)?;
            print!("{}\n{}", t1.to_text(), t2.to_text());
            let violations: Vec<String> = t1
                .marker_violations()
                .into_iter()
                .map(|v| format!("table1: {v}"))
                .chain(t2.marker_violations().into_iter().map(|v| format!("table2: {v}")))
                .collect();
            if violations.is_empty() {
                println!("\nmarkers consistent with baseline accuracy");
                Ok(())
            } else {
                Err(data(format!("inconsistent markers:\n  {}", violations.join("\n  "))))
            }
        }
        Command::ReferenceConfig => {
            print!("{REFERENCE_SWEEP}");
            Ok(())
        }
    }
}

fn detect_kind(path: &Path) -> Result<FileKind, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let header = text
        .lines()
        .find(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .unwrap_or("");
    let fields: Vec<&str> = header.split(',').map(str::trim).collect();
    match fields.get(2) {
        Some(&"channel") => Ok(FileKind::Dataset),
        Some(f) if f.starts_with('e') => Ok(FileKind::Embeddings),
        _ => Err(data(format!(
            "{}: cannot tell dataset from embedding file by its header; pass --kind",
            path.display()
        ))),
    }
}

fn validate(file: &Path, kind: Option<FileKind>, reference: bool) -> Result<(), Failure> {
    let kind = match kind {
        Some(k) => k,
        None => detect_kind(file)?,
    };
    match kind {
        FileKind::Dataset => {
            let d = load_dataset(file)?;
            let s = d.summary();
            println!("{}: valid dataset", file.display());
            println!("  windows:      {}", s.samples);
            println!("  users:        {}", s.users);
            println!("  per user:     {}..={}", s.min_per_user, s.max_per_user);
            println!("  channels:     {}", s.n_channels);
            println!("  length:       {}", s.length);
            println!("  sample rate:  {} Hz", s.sample_rate_hz);
            let notes = d.reference_layout_violations();
            for n in &notes {
                println!("  note: {n}");
            }
            if reference && !notes.is_empty() {
                return Err(data(format!(
                    "{}: {} deviation(s) from the reference layout",
                    file.display(),
                    notes.len()
                )));
            }
        }
        FileKind::Embeddings => {
            let t = load_embeddings(file)?;
            println!("{}: valid embedding table", file.display());
            println!("  vectors:      {}", t.len());
            println!("  dimension:    {}", t.dim());
        }
    }
    Ok(())
}

fn build_spec(
    method: &str,
    mu: f64,
    sigma: Option<f64>,
    f_t: Option<f64>,
    f_i: Option<f64>,
) -> Result<AugmentationSpec, Failure> {
    let method = Method::from_cli_name(method).ok_or_else(|| {
        usage(format!(
            "unknown method {method:?} (expected noise, temporal, intensity, warp-lr or warp-rl)"
        ))
    })?;
    let need =
        |name: &str, v: Option<f64>| v.ok_or_else(|| usage(format!("--method {} needs --{name}", method.cli_name())));
    let spec = match method {
        Method::RandomNoise => AugmentationSpec::noise_with_mean(mu, need("sigma", sigma)?),
        Method::TemporalScaling => AugmentationSpec::temporal(need("f-t", f_t)?),
        Method::IntensityScaling => AugmentationSpec::intensity(need("f-i", f_i)?),
        Method::WarpLeftToRight | Method::WarpRightToLeft => AugmentationSpec {
            method,
            ..AugmentationSpec::intensity(1.0)
        },
    };
    spec.validate()?;
    Ok(spec)
}

/// Window `i` of the file gets the augmentation seeded from `(seed, i)`.
fn augment_dataset(dataset: &Dataset, spec: AugmentationSpec, seed: u64) -> Result<Dataset, Failure> {
    let plan = AugmentationPlan::single(spec, 1.0, seed)?;
    let samples = dataset
        .samples()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            Ok(GestureSample {
                user_id: s.user_id.clone(),
                event_index: s.event_index,
                signal: plan.augment_one(i, &s.signal)?,
            })
        })
        .collect::<tapaug::Result<Vec<_>>>()?;
    Ok(Dataset::new(samples)?)
}

/// Long format: one row per (window, channel, time step).
fn write_plot_data(path: &Path, original: &Dataset, augmented: &Dataset) -> Result<(), Failure> {
    let file = fs::File::create(path).map_err(|e| io_failure(path, e))?;
    let mut w = BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "user_id,event_index,channel,t,original,augmented")?;
        for (a, b) in original.samples().iter().zip(augmented.samples()) {
            for (c, (xa, xb)) in a.signal.channels().iter().zip(b.signal.channels()).enumerate() {
                for (t, (va, vb)) in xa.iter().zip(xb).enumerate() {
                    writeln!(w, "{},{},{c},{t},{va},{vb}", a.user_id, a.event_index)?;
                }
            }
        }
        w.flush()
    };
    body().map_err(|e| io_failure(path, e))
}
