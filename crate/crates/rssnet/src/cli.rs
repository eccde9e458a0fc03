//! The `rssnet` subcommands.
//!
//! Every command takes `--out DIR` and writes `resolved_config.json` there
//! alongside its outputs; `--config FILE` and `--seed N` feed the layered
//! [`RunConfig`]. Errors carry the exit status from
//! [`Error::exit_code`](crate::Error::exit_code).

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rssnet_core::data::{synth_library, DatasetConfig, MixtureSample, Split, SplitSizes, SynthLibraryConfig};
use rssnet_core::metrics::{score_sample, ScoreReport};
use rssnet_core::model::{RssNet, RssNetConfig};
use rssnet_core::sparse::harness::{evaluate_baseline, Baseline};
use rssnet_core::train::{train, EpochRecord, Executor, TrainConfig, TrainState};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::checkpoint::{self, config_hash, Checkpoint};
use crate::config::{read_layer, set, RunConfig, RESOLVED_CONFIG_FILE};
use crate::dataset::{self, Dataset};
use crate::exec::Workers;
use crate::fsio::{create_dir, read, write};
use crate::library::{load_dictionary, load_intensities, load_library, spectrum_text, write_library_dir, write_packed_library};
use crate::report::write_report;
use crate::{sha256_hex, write_json, Error, Result};

pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const PROVENANCE_FILE: &str = "provenance.json";

#[derive(Debug, Parser)]
#[command(name = "rssnet", version, about = "Single-channel Raman spectrum unmixing")]
pub struct Cli {
    /// Print nothing but errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed of every random draw in the run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Config file, TOML (.toml) or JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic library of Raman-like spectra.
    SynthLibrary(SynthArgs),
    /// Generate a mixture dataset from a spectrum library.
    GenData(GenDataArgs),
    /// Train the separation network on a dataset.
    Train(TrainArgs),
    /// Score a checkpoint on one split of a dataset.
    Eval(EvalArgs),
    /// Separate one mixed spectrum into its components.
    Unmix(UnmixArgs),
    /// Score a dictionary-based solver on one split of a dataset.
    Baseline(BaselineArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 50)]
    pub families: usize,
    #[arg(long, default_value_t = 20)]
    pub members: usize,
    #[arg(long, default_value_t = 1024)]
    pub length: usize,
    /// Band count range per family, `LO,HI`.
    #[arg(long, value_parser = parse_pair::<usize>, default_value = "4,12")]
    pub bands: (usize, usize),
    /// Largest band-position shift between family members, in samples.
    #[arg(long, default_value_t = 2.0)]
    pub jitter: f64,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: Common,
    /// Library directory of spectrum files, or a packed library JSON file.
    #[arg(long)]
    pub library: PathBuf,
    /// Split sizes `TRAIN,VAL,TEST`.
    #[arg(long, value_parser = parse_sizes)]
    pub sizes: Option<SplitSizes>,
    /// SNR range in dB, `LO,HI`.
    #[arg(long, value_parser = parse_pair::<f64>)]
    pub snr: Option<(f64, f64)>,
    /// Grid every library spectrum is resampled to.
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub components: Option<usize>,
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model preset: reference, desk or tiny.
    #[arg(long)]
    pub preset: Option<String>,
    /// Override one model setting, `KEY=VALUE` (for example
    /// `dwconv-path=p2`); repeatable.
    #[arg(long = "ablation", value_name = "KEY=VALUE")]
    pub ablation: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Dataset directory written by gen-data.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Continue from `last.ckpt` in the output directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Score only the first N samples of the split.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct UnmixArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Mixed spectrum text file; read as-is, without clipping or scaling.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Sunsal,
    Nnomp,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Library directory or packed library file used as the dictionary.
    #[arg(long)]
    pub dictionary: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long)]
    pub limit: Option<usize>,
    /// SUnSAL sparsity weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// SUnSAL ADMM penalty (default: squared spectral norm of the dictionary).
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub sum_to_one: bool,
    /// Support threshold on coefficients (both methods).
    #[arg(long)]
    pub threshold: Option<f64>,
    /// NNOMP atom budget.
    #[arg(long)]
    pub max_atoms: Option<usize>,
    /// NNOMP residual stopping norm.
    #[arg(long)]
    pub residual_tol: Option<f64>,
}

fn parse_pair<T: std::str::FromStr>(s: &str) -> std::result::Result<(T, T), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => match (a.parse(), b.parse()) {
            (Ok(a), Ok(b)) => Ok((a, b)),
            _ => Err(format!("cannot parse {s:?} as two numbers")),
        },
        _ => Err(format!("expected two comma-separated values, got {s:?}")),
    }
}

fn parse_sizes(s: &str) -> std::result::Result<SplitSizes, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("bad split size {p:?}")))
        .collect::<std::result::Result<_, _>>()?;
    match parts.as_slice() {
        &[train, val, test] => Ok(SplitSizes { train, val, test }),
        _ => Err(format!("expected TRAIN,VAL,TEST, got {s:?}")),
    }
}

/// Value of an `--ablation` override: JSON literals (numbers, booleans)
/// as such, anything else as a string.
fn ablation_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.into()))
}

fn model_flags(flags: &mut Value, m: &ModelArgs) -> Result<()> {
    if let Some(p) = &m.preset {
        set(flags, "preset", json!(p));
    }
    for a in &m.ablation {
        let (k, v) = a
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("--ablation expects KEY=VALUE, got {a:?}")))?;
        set(flags, &format!("model.{}", k.trim().replace('-', "_")), ablation_value(v.trim()));
    }
    Ok(())
}

fn common_flags(c: &Common) -> Value {
    let mut flags = json!({});
    if let Some(s) = c.seed {
        set(&mut flags, "seed", json!(s));
    }
    flags
}

/// What every command snapshots next to its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub command: String,
    pub inputs: BTreeMap<String, PathBuf>,
    pub config: RunConfig,
}

fn snapshot(out: &Path, command: &str, inputs: &[(&str, &Path)], config: &RunConfig) -> Result<()> {
    let snap = Snapshot {
        command: command.into(),
        inputs: inputs.iter().map(|(k, p)| (k.to_string(), p.to_path_buf())).collect(),
        config: config.clone(),
    };
    write_json(&out.join(RESOLVED_CONFIG_FILE), &snap)
}

struct Console {
    quiet: bool,
}

impl Console {
    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let con = Console { quiet: cli.quiet };
    match cli.command {
        Command::SynthLibrary(a) => synth_library_cmd(a, &con),
        Command::GenData(a) => gen_data(a, &con),
        Command::Train(a) => train_cmd(a, &con),
        Command::Eval(a) => eval(a, &con),
        Command::Unmix(a) => unmix(a, &con),
        Command::Baseline(a) => baseline(a, &con),
    }
}

fn synth_library_cmd(a: SynthArgs, con: &Console) -> Result<()> {
    let cfg = RunConfig::resolve(a.common.config.as_deref(), &common_flags(&a.common))?;
    let synth = SynthLibraryConfig {
        families: a.families,
        members: a.members,
        length: a.length,
        bands: [a.bands.0, a.bands.1],
        jitter: a.jitter,
        seed: cfg.seed,
    };
    let lib = synth_library(&synth)?;
    let out = &a.common.out;
    write_library_dir(out, &lib)?;
    write_packed_library(&out.join("library.json"), &lib)?;
    write_json(&out.join("synth_config.json"), &synth)?;
    snapshot(out, "synth-library", &[], &cfg)?;
    con.say(format!("wrote {} spectra of length {} to {}", lib.len(), a.length, out.display()));
    Ok(())
}

fn gen_data(a: GenDataArgs, con: &Console) -> Result<()> {
    let mut flags = common_flags(&a.common);
    if let Some(s) = a.sizes {
        set(&mut flags, "data.sizes", json!(s));
    }
    if let Some((lo, hi)) = a.snr {
        set(&mut flags, "data.snr_db", json!([lo, hi]));
    }
    if let Some(l) = a.length {
        set(&mut flags, "data.length", json!(l));
    }
    if let Some(c) = a.components {
        set(&mut flags, "data.components", json!(c));
    }
    if let Some(n) = &a.name {
        set(&mut flags, "data.name", json!(n));
    }
    let cfg = RunConfig::resolve(a.common.config.as_deref(), &flags)?;
    let library = load_library(&a.library, Some(cfg.data.length))?;
    let dcfg = DatasetConfig {
        name: cfg.data.name.clone(),
        sizes: cfg.data.sizes,
        snr_db: cfg.data.snr_db,
        master_seed: cfg.seed,
        components: cfg.data.components,
        length: cfg.data.length,
    };
    let out = &a.common.out;
    let summary = dataset::generate(out, &dcfg, &library)?;
    snapshot(out, "gen-data", &[("library", &a.library)], &cfg)?;
    if let Some(w) = &summary.warning {
        eprintln!("warning: {w}");
    }
    con.say(format!("manifest: {}", summary.manifest.display()));
    con.say(format!(
        "samples: {} train, {} val, {} test ({} total) from {} library spectra",
        summary.train,
        summary.val,
        summary.test,
        summary.train + summary.val + summary.test,
        library.len()
    ));
    Ok(())
}

fn check_shapes(model: &RssNetConfig, data: &Dataset) -> Result<()> {
    let m = &data.manifest;
    if (m.length, m.components) != (model.length, model.sources) {
        return Err(Error::Core(rssnet_core::Error::Dimension {
            op: "dataset (sources, length) against model (C, L)",
            left: vec![m.components, m.length],
            right: vec![model.sources, model.length],
        }));
    }
    Ok(())
}

/// One line of `train_log.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    #[serde(flatten)]
    pub record: EpochRecord,
    /// Seconds since this process started training.
    pub wall_time_s: f64,
}

/// Training settings that must match for a resumed run to follow the same
/// trajectory; the epoch budget and validation cadence may change.
fn trajectory(t: &TrainConfig) -> TrainConfig {
    TrainConfig {
        epochs: 0,
        eval_every: 0,
        ..t.clone()
    }
}

fn train_cmd(a: TrainArgs, con: &Console) -> Result<()> {
    let mut flags = common_flags(&a.common);
    model_flags(&mut flags, &a.model)?;
    for (key, v) in [
        ("train.epochs", a.epochs.map(|v| json!(v))),
        ("train.batch_size", a.batch_size.map(|v| json!(v))),
        ("train.lr", a.lr.map(|v| json!(v))),
        ("train.clip_norm", a.clip_norm.map(|v| json!(v))),
        ("train.eval_every", a.eval_every.map(|v| json!(v))),
    ] {
        if let Some(v) = v {
            set(&mut flags, key, v);
        }
    }
    let cfg = RunConfig::resolve(a.common.config.as_deref(), &flags)?;
    let data = Dataset::open(&a.data)?;
    check_shapes(&cfg.model, &data)?;
    let train_set = data.samples(Split::Train)?;
    let val_set = data.samples(Split::Val)?;
    let out = &a.common.out;
    create_dir(out)?;
    let last = out.join(LAST_CHECKPOINT);
    let best = out.join(BEST_CHECKPOINT);
    let log_path = out.join(TRAIN_LOG_FILE);

    let mut state = if a.resume {
        let (stored, mut state) = checkpoint::load(&last, Some(&cfg.model))?.into_state()?;
        if trajectory(&stored) != trajectory(&cfg.train) {
            return Err(Error::Mismatch {
                what: "training settings of the resumed run".into(),
                expected: serde_json::to_string(&trajectory(&stored)).expect("serialises"),
                found: serde_json::to_string(&trajectory(&cfg.train)).expect("serialises"),
            });
        }
        if best.exists() {
            state.best_params = Some(checkpoint::load(&best, Some(&cfg.model))?.params);
        }
        con.say(format!("resuming after epoch {}", state.epochs_done));
        state
    } else {
        File::create(&log_path).map_err(|source| Error::Io {
            path: log_path.clone(),
            source,
        })?;
        TrainState::new(&cfg.model, cfg.seed)?
    };
    snapshot(out, "train", &[("data", &a.data)], &cfg)?;

    let exec = Workers::from_env()?;
    let mut log = OpenOptions::new().append(true).create(true).open(&log_path).map_err(|source| Error::Io {
        path: log_path.clone(),
        source,
    })?;
    let started = Instant::now();
    let total = cfg.train.epochs;
    let mut io_error: Option<Error> = None;
    let result = train(&cfg.model, &cfg.train, &mut state, &train_set, &val_set, &exec, |rec, st| {
        let mut step = || -> Result<()> {
            let line = LogLine {
                record: rec.clone(),
                wall_time_s: started.elapsed().as_secs_f64(),
            };
            let mut text = serde_json::to_string(&line).expect("log line serialises");
            text.push('\n');
            log.write_all(text.as_bytes()).map_err(|source| Error::Io {
                path: log_path.clone(),
                source,
            })?;
            checkpoint::save(&last, &Checkpoint::from_state(&cfg.model, &cfg.train, st))?;
            if rec.is_best {
                checkpoint::save(&best, &Checkpoint::params_only(&cfg.model, &st.params))?;
            }
            Ok(())
        };
        if let Err(e) = step() {
            io_error = Some(e);
            return Err(rssnet_core::Error::Contract("stopping: could not write training outputs".into()));
        }
        let val = match (rec.val_si_snr, rec.val_si_snri) {
            (Some(s), Some(i)) => format!("  val_si_snr {s:.3} dB  val_si_snri {i:.3} dB"),
            _ => String::new(),
        };
        con.say(format!(
            "epoch {}/{}  train_loss {:.4}{}{}",
            rec.epoch,
            total,
            rec.train_loss,
            val,
            if rec.is_best { "  [best]" } else { "" }
        ));
        Ok(())
    });
    if let Some(e) = io_error {
        return Err(e);
    }
    result?;
    if !best.exists() {
        // no validation split: the final parameters are the only candidate
        checkpoint::save(&best, &Checkpoint::params_only(&cfg.model, &state.params))?;
    }
    match state.best_epoch {
        Some(e) => con.say(format!("best epoch {e}; checkpoints in {}", out.display())),
        None => con.say(format!("no validation split; checkpoints in {}", out.display())),
    }
    Ok(())
}

/// Model config named on the command line or in a config file, if any.
fn declared_model(common: &Common, m: &ModelArgs) -> Result<Option<RssNetConfig>> {
    let mut flags = common_flags(common);
    model_flags(&mut flags, m)?;
    let file_declares = match &common.config {
        Some(p) => {
            let layer = read_layer(p)?;
            layer.get("preset").is_some() || layer.get("model").is_some()
        }
        None => false,
    };
    if m.preset.is_none() && m.ablation.is_empty() && !file_declares {
        return Ok(None);
    }
    Ok(Some(RunConfig::resolve(common.config.as_deref(), &flags)?.model))
}

/// Separates every sample and scores it against its sources.
pub fn score_network<E: Executor>(net: &RssNet, samples: &[MixtureSample], batch: usize, exec: &E) -> Result<ScoreReport> {
    let chunks: Vec<&[MixtureSample]> = samples.chunks(batch.max(1)).collect();
    let parts = exec.map(chunks.len(), |i| -> Result<Vec<_>> {
        let mixed: Vec<Vec<f64>> = chunks[i].iter().map(|s| s.mixed.clone()).collect();
        let est = net.separate(&mixed)?;
        chunks[i]
            .iter()
            .zip(&est)
            .map(|(s, e)| Ok(score_sample(s.index, e, &s.sources, &s.mixed)?))
            .collect()
    });
    let mut scores = Vec::with_capacity(samples.len());
    for p in parts {
        scores.extend(p?);
    }
    Ok(ScoreReport::new("rssnet", scores, None)?)
}

fn limited(mut samples: Vec<MixtureSample>, limit: Option<usize>) -> Vec<MixtureSample> {
    if let Some(n) = limit {
        samples.truncate(n);
    }
    samples
}

fn eval(a: EvalArgs, con: &Console) -> Result<()> {
    let expected = declared_model(&a.common, &a.model)?;
    let ck = checkpoint::load(&a.checkpoint, expected.as_ref())?;
    let mut cfg = RunConfig::resolve(a.common.config.as_deref(), &common_flags(&a.common))?;
    cfg.model = ck.model.clone();
    let data = Dataset::open(&a.data)?;
    check_shapes(&ck.model, &data)?;
    let samples = limited(data.samples(a.split.into())?, a.limit);
    let net = RssNet {
        config: ck.model,
        params: ck.params,
    };
    let batch = a.batch_size.unwrap_or(cfg.train.batch_size);
    let report = score_network(&net, &samples, batch, &Workers::from_env()?)?;
    let out = &a.common.out;
    let (json_path, _) = write_report(out, &report)?;
    snapshot(out, "eval", &[("checkpoint", &a.checkpoint), ("data", &a.data)], &cfg)?;
    summarize(con, &report, &json_path);
    Ok(())
}

fn summarize(con: &Console, r: &ScoreReport, path: &Path) {
    let g = &r.aggregates;
    con.say(format!(
        "{}: {} samples  SI-SNR {:.3} dB  SI-SNRi {:.3} dB  SID {:.4}  SAD {:.4}  RMSE {:.4}",
        r.method, r.count, g.si_snr.mean, g.si_snri.mean, g.sid.mean, g.sad.mean, g.rmse.mean
    ));
    if let Some(rate) = r.support_error_rate {
        con.say(format!("support error rate {rate:.3}"));
    }
    if let Some(c) = r.converged_fraction {
        con.say(format!("converged fraction {c:.3}"));
    }
    con.say(format!("report: {}", path.display()));
}

/// Provenance written next to unmixed spectra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub input: PathBuf,
    pub input_sha256: String,
    pub checkpoint: PathBuf,
    pub checkpoint_sha256: String,
    pub config_hash: String,
    pub model: RssNetConfig,
    pub outputs: Vec<PathBuf>,
}

fn unmix(a: UnmixArgs, con: &Console) -> Result<()> {
    let cfg = RunConfig::resolve(a.common.config.as_deref(), &common_flags(&a.common))?;
    let ck_bytes = read(&a.checkpoint)?;
    let ck = checkpoint::decode(&ck_bytes, &a.checkpoint, None)?;
    let y = load_intensities(&a.input)?;
    if y.len() != ck.model.length {
        return Err(Error::Core(rssnet_core::Error::Dimension {
            op: "unmix input length against model L",
            left: vec![y.len()],
            right: vec![ck.model.length],
        }));
    }
    let hash = config_hash(&ck.model);
    let net = RssNet {
        config: ck.model,
        params: ck.params,
    };
    let est = net.separate(std::slice::from_ref(&y))?.remove(0);
    let out = &a.common.out;
    let mut outputs = Vec::with_capacity(est.len());
    for (i, e) in est.iter().enumerate() {
        let path = out.join(format!("source_{}.txt", i + 1));
        let header = [format!("estimated source {} of {}", i + 1, a.input.display())];
        write(&path, spectrum_text(&header, e).as_bytes())?;
        outputs.push(path);
    }
    let prov = Provenance {
        input: a.input.clone(),
        input_sha256: sha256_hex(&read(&a.input)?),
        checkpoint: a.checkpoint.clone(),
        checkpoint_sha256: sha256_hex(&ck_bytes),
        config_hash: hash,
        model: net.config.clone(),
        outputs: outputs.clone(),
    };
    write_json(&out.join(PROVENANCE_FILE), &prov)?;
    let mut snap_cfg = cfg;
    snap_cfg.model = net.config;
    snapshot(out, "unmix", &[("checkpoint", &a.checkpoint), ("input", &a.input)], &snap_cfg)?;
    for p in &outputs {
        con.say(p.display().to_string());
    }
    Ok(())
}

fn baseline(a: BaselineArgs, con: &Console) -> Result<()> {
    type Flags<'a> = &'a [(&'a str, bool)];
    let (own, foreign): (Flags, Flags) = (
        &[
            ("--lambda", a.lambda.is_some()),
            ("--mu", a.mu.is_some()),
            ("--max-iter", a.max_iter.is_some()),
            ("--tol", a.tol.is_some()),
            ("--sum-to-one", a.sum_to_one),
        ],
        &[("--max-atoms", a.max_atoms.is_some()), ("--residual-tol", a.residual_tol.is_some())],
    );
    let conflicting = match a.method {
        Method::Sunsal => foreign,
        Method::Nnomp => own,
    };
    if let Some((flag, _)) = conflicting.iter().find(|(_, given)| *given) {
        return Err(Error::Usage(format!("{flag} does not apply to --method {:?}", a.method).to_lowercase()));
    }
    let mut flags = common_flags(&a.common);
    let opts: [(&str, Option<Value>); 9] = [
        ("sunsal.lambda", a.lambda.map(|v| json!(v))),
        ("sunsal.mu", a.mu.map(|v| json!(v))),
        ("sunsal.max_iter", a.max_iter.map(|v| json!(v))),
        ("sunsal.tol", a.tol.map(|v| json!(v))),
        ("sunsal.sum_to_one", a.sum_to_one.then_some(json!(true))),
        ("sunsal.threshold", a.threshold.filter(|_| a.method == Method::Sunsal).map(|v| json!(v))),
        ("nnomp.threshold", a.threshold.filter(|_| a.method == Method::Nnomp).map(|v| json!(v))),
        ("nnomp.max_atoms", a.max_atoms.map(|v| json!(v))),
        ("nnomp.residual_tol", a.residual_tol.map(|v| json!(v))),
    ];
    for (key, v) in opts {
        if let Some(v) = v {
            set(&mut flags, key, v);
        }
    }
    let cfg = RunConfig::resolve(a.common.config.as_deref(), &flags)?;
    let method = match a.method {
        Method::Sunsal => {
            cfg.sunsal.validate()?;
            Baseline::Sunsal(cfg.sunsal)
        }
        Method::Nnomp => Baseline::Nnomp(cfg.nnomp),
    };
    let data = Dataset::open(&a.data)?;
    let d = load_dictionary(&a.dictionary, data.manifest.length)?;
    let samples = limited(data.samples(a.split.into())?, a.limit);
    let mut truth = Vec::with_capacity(samples.len());
    for s in &samples {
        let rec = &data.manifest.records[s.index as usize];
        let pos = rec
            .source_ids
            .iter()
            .map(|id| {
                d.position(id).ok_or_else(|| {
                    Error::Usage(format!("dictionary {} lacks {id}, a source of sample {}", a.dictionary.display(), s.index))
                })
            })
            .collect::<Result<Vec<usize>>>()?;
        truth.push(pos);
    }
    let (report, _) = evaluate_baseline(&d, &samples, &truth, &method)?;
    let out = &a.common.out;
    let (json_path, _) = write_report(out, &report)?;
    snapshot(out, "baseline", &[("dictionary", &a.dictionary), ("data", &a.data)], &cfg)?;
    summarize(con, &report, &json_path);
    Ok(())
}
