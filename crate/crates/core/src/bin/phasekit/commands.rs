use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use phasekit::config::Entry;
use phasekit::error::{Error, Result};
use phasekit::filters::{boxcar_filter, goldstein_filter, BoxcarConfig, GoldsteinConfig};
use phasekit::geninsar::{
    coherence_from_sigma, filtered_phase, predict_full, predict_strict, sample_interferogram,
    train, LossRecord, TrainConfig,
};
use phasekit::grid::{phase_to_phasor, ComplexField};
use phasekit::mdn::{load_checkpoint, save_checkpoint, Architecture, Checkpoint, NetworkWeights};
use phasekit::metrics::{evaluate, EvalInputs, EvalReport, Summary, CSV_HEADER};
use phasekit::raster::{read_raster, write_raster, Raster};
use phasekit::render::{render_coherence_png, render_phase_png};
use phasekit::rng::derive_seed;
use phasekit::simulator::{add_noise, generate_truth, NoiseSpec, SceneSpec};
use serde::Serialize;

use crate::{
    AddNoiseArgs, Command, EvaluateArgs, FilterArgs, Method, Preset, RasterKind, RenderArgs,
    SampleArgs, SimulateArgs, TrainArgs,
};

pub struct Context {
    pub argv: Vec<String>,
    pub config: Option<(PathBuf, Vec<Entry>)>,
}

/// Written next to the primary output of every command.
#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command_line: &'a [String],
    config_file: Option<String>,
    config: Vec<(String, String)>,
    seeds: Vec<u64>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    wall_time_s: f64,
}

struct Run<'a> {
    ctx: &'a Context,
    started: Instant,
    seeds: Vec<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl<'a> Run<'a> {
    fn new(ctx: &'a Context) -> Self {
        Self {
            ctx,
            started: Instant::now(),
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn finish(self) -> Result<()> {
        let Some(primary) = self.outputs.first() else {
            return Ok(());
        };
        let mut name: OsString = primary.as_os_str().to_owned();
        name.push(".manifest.json");
        let path = PathBuf::from(name);
        let show = |p: &PathBuf| p.display().to_string();
        let m = Manifest {
            tool: "phasekit",
            version: env!("CARGO_PKG_VERSION"),
            command_line: &self.ctx.argv,
            config_file: self.ctx.config.as_ref().map(|c| c.0.display().to_string()),
            config: self
                .ctx
                .config
                .iter()
                .flat_map(|c| c.1.iter().map(|e| (e.key.clone(), e.value.clone())))
                .collect(),
            seeds: self.seeds,
            inputs: self.inputs.iter().map(show).collect(),
            outputs: self.outputs.iter().map(show).collect(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::Io { path, source: e })
    }
}

pub fn run(cmd: &Command, ctx: &Context) -> Result<()> {
    let mut r = Run::new(ctx);
    match cmd {
        Command::Simulate(a) => simulate(a, &mut r)?,
        Command::AddNoise(a) => add_noise_cmd(a, &mut r)?,
        Command::Train(a) => train_cmd(a, &mut r)?,
        Command::Filter(a) => filter(a, &mut r)?,
        Command::Sample(a) => sample(a, &mut r)?,
        Command::Evaluate(a) => evaluate_cmd(a, &mut r)?,
        Command::Render(a) => render(a, &mut r)?,
    }
    r.finish()
}

fn write(r: &mut Run<'_>, path: &Path, raster: &Raster) -> Result<()> {
    write_raster(path, raster)?;
    r.outputs.push(path.to_path_buf());
    Ok(())
}

fn read(r: &mut Run<'_>, path: &Path) -> Result<Raster> {
    r.inputs.push(path.to_path_buf());
    read_raster(path)
}

/// A phase raster becomes unit phasors; a complex raster is used as is.
fn read_field(r: &mut Run<'_>, path: &Path) -> Result<ComplexField> {
    match read(r, path)? {
        Raster::Complex(c) => Ok(c),
        single => Ok(phase_to_phasor(&single.into_wrapped_phase()?)),
    }
}

fn simulate(a: &SimulateArgs, r: &mut Run<'_>) -> Result<()> {
    let spec = match &a.scene {
        Some(p) => {
            r.inputs.push(p.clone());
            SceneSpec::from_entries(&phasekit::config::parse_file(p)?)?
        }
        None => SceneSpec::random(a.width, a.height, a.seed),
    };
    r.seeds.push(spec.seed);
    let truth = generate_truth(&spec)?;
    write(r, &a.out_wrapped, &(&truth.wrapped).into())?;
    write(r, &a.out_truth, &(&truth.unwrapped).into())?;
    write(r, &a.out_coh, &(&truth.coherence).into())
}

fn add_noise_cmd(a: &AddNoiseArgs, r: &mut Run<'_>) -> Result<()> {
    let phase = read(r, &a.input)?.into_wrapped_phase()?;
    let spec = match (&a.gamma, &a.gamma_map) {
        (Some(g), _) => NoiseSpec::uniform(*g, a.seed),
        (None, Some(p)) => NoiseSpec::map(read(r, p)?.into_coherence()?, a.seed),
        (None, None) => return Err(Error::InvalidValue("one of --gamma / --gamma-map is required".into())),
    };
    r.seeds.push(a.seed);
    let truth_coh = spec.truth_coherence(phase.width(), phase.height())?;
    let noisy = add_noise(&phase, &spec)?;
    write(r, &a.out, &(&noisy).into())?;
    if let Some(p) = &a.out_coh {
        write(r, p, &(&truth_coh).into())?;
    }
    Ok(())
}

fn write_log(path: &Path, log: &[LossRecord]) -> Result<()> {
    let mut text = String::from("step,raw_loss,ema_loss\n");
    for rec in log {
        text += &format!("{},{:.6},{:.6}\n", rec.step, rec.raw_loss, rec.ema_loss);
    }
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn train_cmd(a: &TrainArgs, r: &mut Run<'_>) -> Result<()> {
    if !a.data.is_dir() {
        return Err(Error::InvalidValue(format!("data directory {} does not exist", a.data.display())));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(&a.data)
        .map_err(|e| Error::Io { path: a.data.clone(), source: e })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "igrd"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidValue(format!("no .igrd rasters in {}", a.data.display())));
    }
    let images = files.iter().map(|f| read_field(r, f)).collect::<Result<Vec<_>>>()?;

    let arch = match a.preset {
        Preset::Desk => Architecture::desk(),
        Preset::Paper => Architecture::paper(),
    };
    let cfg = TrainConfig {
        batch: a.batch,
        epochs: a.epochs,
        patches_per_epoch: a.patches,
        lr: a.lr,
        seed: a.seed,
        ..TrainConfig::new(arch)
    };
    r.seeds.push(a.seed);
    let resume = match &a.resume {
        Some(p) => {
            r.inputs.push(p.clone());
            Some(load_checkpoint(p)?)
        }
        None => None,
    };
    let log_path = a.log.clone().unwrap_or_else(|| a.out.with_extension("csv"));
    let result = train(&images, &cfg, resume, |ck, log| {
        save_checkpoint(&a.out, ck)?;
        write_log(&log_path, log)?;
        eprintln!(
            "epoch {} done; loss {}",
            ck.snapshot.as_ref().map_or(0, |s| s.epochs_done),
            log.last().map_or("n/a".into(), |l| format!("{:.4} (ema {:.4})", l.raw_loss, l.ema_loss))
        );
        Ok(())
    });
    r.outputs.push(a.out.clone());
    r.outputs.push(log_path.clone());
    match result {
        Ok(out) => {
            save_checkpoint(&a.out, &out.checkpoint())?;
            if out.log.is_empty() && a.resume.is_none() {
                write_log(&log_path, &[])?;
            }
            Ok(())
        }
        Err(Error::TrainingDiverged { step, last_good }) => {
            save_checkpoint(&a.out, &Checkpoint { weights: (*last_good).clone(), snapshot: None })?;
            Err(Error::TrainingDiverged { step, last_good })
        }
        Err(e) => Err(e),
    }
}

fn load_weights(r: &mut Run<'_>, path: &Path) -> Result<NetworkWeights<f32>> {
    r.inputs.push(path.to_path_buf());
    Ok(load_checkpoint(path)?.weights)
}

fn filter(a: &FilterArgs, r: &mut Run<'_>) -> Result<()> {
    if a.method == Method::Goldstein && a.out_coh.is_some() {
        return Err(Error::InvalidValue("the Goldstein filter outputs only phase; drop --out-coh".into()));
    }
    if a.method == Method::Geninsar && a.weights.is_none() {
        return Err(Error::InvalidValue("--method geninsar needs --weights".into()));
    }
    let field = read_field(r, &a.input)?;
    let (phase, coh) = match a.method {
        Method::Boxcar => {
            let (p, c) = boxcar_filter(&field, &BoxcarConfig { window: a.window })?;
            (p, Some(c))
        }
        Method::Goldstein => {
            let cfg = GoldsteinConfig {
                patch: a.patch,
                overlap: a.overlap,
                alpha: a.alpha,
                ..GoldsteinConfig::default()
            };
            (goldstein_filter(&field, &cfg)?, None)
        }
        Method::Geninsar => {
            let w = load_weights(r, a.weights.as_ref().unwrap())?;
            let g = if a.strict {
                predict_strict(&w, &field)?
            } else {
                predict_full(&w, &field, a.chunk)?
            };
            let (p, flags) = filtered_phase(&g);
            let n = flags.iter().filter(|&&f| f).count();
            if n > 0 {
                eprintln!("warning: {n} pixels had a zero predicted mean; their phase was set to 0");
            }
            (p, Some(coherence_from_sigma(&g)))
        }
    };
    write(r, &a.out_phase, &(&phase).into())?;
    if let (Some(path), Some(c)) = (&a.out_coh, &coh) {
        write(r, path, &c.into())?;
    }
    Ok(())
}

fn sample(a: &SampleArgs, r: &mut Run<'_>) -> Result<()> {
    let w = load_weights(r, &a.weights)?;
    let field = predict_full(&w, &read_field(r, &a.input)?, a.chunk)?;
    r.seeds.push(a.seed);
    for k in 0..a.count {
        let img = sample_interferogram(&field, a.alpha, derive_seed(a.seed, &[k as u64]))?;
        let path = PathBuf::from(format!("{}{k}.igrd", a.out_prefix));
        write(r, &path, &(&img).into())?;
    }
    Ok(())
}

fn expand(pattern: &str, glob_mode: bool) -> Result<Vec<PathBuf>> {
    if !glob_mode {
        return Ok(vec![PathBuf::from(pattern)]);
    }
    let bad = |m: String| Error::InvalidValue(format!("glob {pattern:?}: {m}"));
    let mut out: Vec<PathBuf> = glob::glob(pattern)
        .map_err(|e| bad(e.to_string()))?
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| bad(e.to_string()))?;
    out.sort();
    if out.is_empty() {
        return Err(bad("matched no files".into()));
    }
    Ok(out)
}

fn evaluate_cmd(a: &EvaluateArgs, r: &mut Run<'_>) -> Result<()> {
    let truth = expand(&a.truth, a.glob)?;
    let truth_coh = expand(&a.truth_coh, a.glob)?;
    let noisy = expand(&a.noisy, a.glob)?;
    let filtered = expand(&a.filtered, a.glob)?;
    let est = a.est_coh.as_deref().map(|p| expand(p, a.glob)).transpose()?;
    let n = filtered.len();
    let lens = [truth.len(), truth_coh.len(), noisy.len()];
    if lens.iter().any(|&l| l != n) || est.as_ref().is_some_and(|e| e.len() != n) {
        return Err(Error::InvalidValue(format!(
            "glob match counts differ: truth {}, truth-coh {}, noisy {}, filtered {n}",
            lens[0], lens[1], lens[2]
        )));
    }

    let mut rows = Vec::new();
    let mut reports: Vec<EvalReport> = Vec::new();
    for i in 0..n {
        let t0 = Instant::now();
        let tp = read(r, &truth[i])?.into_wrapped_phase()?;
        let tc = read(r, &truth_coh[i])?.into_coherence()?;
        let np = read(r, &noisy[i])?.into_wrapped_phase()?;
        let fp = read(r, &filtered[i])?.into_wrapped_phase()?;
        let ec = est.as_ref().map(|e| read(r, &e[i])?.into_coherence()).transpose()?;
        let report = evaluate(
            &EvalInputs {
                truth_phase: &tp,
                truth_coherence: &tc,
                noisy_phase: &np,
                filtered_phase: &fp,
                estimated_coherence: ec.as_ref(),
            },
            t0.elapsed().as_secs_f64(),
        )?;
        let label = match (&a.label, a.glob) {
            (Some(l), false) => l.clone(),
            _ => filtered[i].display().to_string(),
        };
        if !a.glob {
            println!("{report}");
        }
        rows.push(report.csv_row(&label));
        reports.push(report);
    }
    if a.glob {
        if let Some(s) = Summary::of(&reports) {
            let label = a.label.clone().unwrap_or_else(|| "mean±std".into());
            println!("{CSV_HEADER}");
            println!("{}", s.csv_row(&label));
            rows.push(s.csv_row(&label));
        }
    }
    match &a.csv {
        Some(path) => {
            let fresh = !path.exists();
            let mut f = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::Io { path: path.clone(), source: e })?;
            let mut text = String::new();
            if fresh {
                text += CSV_HEADER;
                text.push('\n');
            }
            for row in &rows {
                text += row;
                text.push('\n');
            }
            f.write_all(text.as_bytes())
                .map_err(|e| Error::Io { path: path.clone(), source: e })?;
            r.outputs.push(path.clone());
        }
        None if !a.glob => {
            println!("{CSV_HEADER}");
            rows.iter().for_each(|row| println!("{row}"));
        }
        None => {}
    }
    Ok(())
}

fn render(a: &RenderArgs, r: &mut Run<'_>) -> Result<()> {
    let raster = read(r, &a.input)?;
    match a.kind {
        RasterKind::Phase => render_phase_png(&raster.into_wrapped_phase()?, &a.out)?,
        RasterKind::Coherence => render_coherence_png(&raster.into_coherence()?, &a.out)?,
    }
    r.outputs.push(a.out.clone());
    Ok(())
}
