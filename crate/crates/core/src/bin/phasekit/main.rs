//! `phasekit` command-line tool.
//!
//! Every subcommand accepts `--config FILE` with `key=value` lines whose keys
//! are long flag names (`window=5`, `strict=true`); flags given on the command
//! line win over the file.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use phasekit::Error;

#[derive(Debug, Parser)]
#[command(
    name = "phasekit",
    version,
    about = "InSAR phase simulation, filtering, coherence estimation and evaluation",
    args_override_self = true
)]
pub struct Cli {
    /// Worker threads (default: all cores). Never changes results.
    #[arg(long, global = true, env = "PHASEKIT_THREADS")]
    pub threads: Option<usize>,

    /// key=value file of default flag values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a clean scene: unwrapped truth, wrapped truth and coherence.
    Simulate(SimulateArgs),
    /// Add coherence-calibrated Gaussian phase noise to a phase raster.
    AddNoise(AddNoiseArgs),
    /// Train the network on a directory of noisy rasters.
    Train(TrainArgs),
    /// Filter a noisy raster.
    Filter(FilterArgs),
    /// Draw interferograms from the predicted per-pixel Gaussians.
    Sample(SampleArgs),
    /// Compare a filtered raster with the truth.
    Evaluate(EvaluateArgs),
    /// Render a phase or coherence raster as PNG.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SimulateArgs {
    /// Scene description (`width=`, `height=`, `bubble=`, `road=`, `building=`).
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Random scene width, used without --scene.
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    #[arg(long, default_value_t = 256)]
    pub height: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_truth: PathBuf,
    #[arg(long)]
    pub out_wrapped: PathBuf,
    #[arg(long)]
    pub out_coh: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct AddNoiseArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Uniform coherence in (0, 1].
    #[arg(long, conflicts_with = "gamma_map", required_unless_present = "gamma_map")]
    pub gamma: Option<f64>,
    /// Per-pixel coherence raster.
    #[arg(long)]
    pub gamma_map: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the coherence map the noise realises.
    #[arg(long)]
    pub out_coh: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Desk,
    Paper,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    /// Directory of `.igrd` training rasters (phase or complex).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    pub preset: Preset,
    #[arg(long, default_value_t = 2)]
    pub epochs: usize,
    /// Patches per epoch.
    #[arg(long, default_value_t = 100_000)]
    pub patches: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint, rewritten after every epoch.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss log (default: checkpoint path with `.csv`).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Continue from the optimizer state stored in this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Boxcar,
    Goldstein,
    Geninsar,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct FilterArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out_phase: PathBuf,
    #[arg(long)]
    pub out_coh: Option<PathBuf>,
    /// Boxcar window side.
    #[arg(long, default_value_t = 7)]
    pub window: usize,
    /// Goldstein patch side.
    #[arg(long, default_value_t = 32)]
    pub patch: usize,
    #[arg(long, default_value_t = 16)]
    pub overlap: usize,
    /// Goldstein spectral exponent.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Combiner pixels per work item.
    #[arg(long, default_value_t = 4096)]
    pub chunk: usize,
    /// Patch-by-patch inference with exact center zeroing.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SampleArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Spread multiplier on the predicted σ.
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 5)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Outputs are `<prefix><k>.igrd`.
    #[arg(long)]
    pub out_prefix: String,
    #[arg(long, default_value_t = 4096)]
    pub chunk: usize,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub truth: String,
    #[arg(long)]
    pub truth_coh: String,
    #[arg(long)]
    pub noisy: String,
    #[arg(long)]
    pub filtered: String,
    #[arg(long)]
    pub est_coh: Option<String>,
    /// Append rows to this CSV instead of printing.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub label: Option<String>,
    /// Treat every path as a glob pattern; matches are sorted and paired up,
    /// and a mean±std summary row is added.
    #[arg(long)]
    pub glob: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RasterKind {
    Phase,
    Coherence,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct RenderArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long = "type", value_enum)]
    pub kind: RasterKind,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Format { .. } | Error::Io { .. } | Error::NoResiduesToReduce => 3,
        Error::TrainingDiverged { .. } | Error::DegeneratePhasor { .. } => 4,
        _ => 2,
    }
}

/// Pulls `--config FILE` out of `argv` and splices the file's entries in
/// right after the subcommand, so later command-line flags override them.
fn apply_config(argv: Vec<OsString>) -> Result<(Vec<OsString>, Option<(PathBuf, Vec<phasekit::config::Entry>)>), Error> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut it = argv.into_iter();
    let prog = it.next().unwrap_or_else(|| "phasekit".into());
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            config = it.next().map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else {
        let mut out = vec![prog];
        out.extend(rest);
        return Ok((out, None));
    };
    let entries = phasekit::config::parse_file(&path)?;

    // first bare word not consumed by a global option is the subcommand
    let mut sub = None;
    let mut i = 0;
    while i < rest.len() {
        let s = rest[i].to_string_lossy();
        if s == "--threads" {
            i += 2;
            continue;
        }
        if !s.starts_with('-') {
            sub = Some(i);
            break;
        }
        i += 1;
    }
    let mut out = vec![prog];
    let injected: Vec<OsString> = entries
        .iter()
        .filter_map(|e| match e.value.as_str() {
            "true" => Some(format!("--{}", e.key)),
            "false" => None,
            v => Some(format!("--{}={v}", e.key)),
        })
        .map(OsString::from)
        .collect();
    match sub {
        Some(i) => {
            out.push(rest[i].clone());
            out.extend(injected);
            out.extend(rest[..i].iter().cloned());
            out.extend(rest[i + 1..].iter().cloned());
        }
        None => out.extend(rest),
    }
    Ok((out, Some((path, entries))))
}

fn main() -> ExitCode {
    let (argv, config) = match apply_config(std::env::args_os().collect()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let ctx = commands::Context {
        argv: argv.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
        config,
    };
    match commands::run(&cli.command, &ctx) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
