//! Command-line interface: `pretrain`, `conceal`, and `sweep`.
//!
//! Configuration precedence, lowest to highest: built-in defaults, the
//! `--config` TOML file, the checkpoint (architecture fields only), then
//! individual flags. Flag names follow the model vocabulary used throughout
//! the crate: `--window` is the input window length L, `--timesteps` the
//! unrolled sequence length T, `--hidden` the units per layer H, `--passes`
//! the online training passes P.
//!
//! Exit codes: 0 success, 1 sweep finished with failing points, 2 bad
//! configuration or usage, 3 I/O or file-format problems, 4 numerical
//! failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checkpoint::{
    corpus_fingerprint, load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta,
};
use crate::config::{load_config, Precision, RunConfig};
use crate::engine::{generate_loss_pattern, LossMode, PlcSession};
use crate::eval::lost_frame_metrics;
use crate::numerics::Scalar;
use crate::predictor::pretrain;
use crate::sweep::{run_sweep, NamedSignal, SweepGrid, SweepInit, SweepSpec};
use crate::wav::{read_wav, segment_frames, write_wav, AudioBuffer};
use crate::{adam::AdamState, PlcError, Result};

#[derive(Parser, Debug)]
#[command(
    name = "plcnet",
    version,
    about = "Online-adaptive LSTM packet loss concealment for 8 kHz mono speech"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// One offline training epoch over a WAV corpus; writes a checkpoint.
    Pretrain(PretrainArgs),
    /// Simulate packet loss on a WAV file and conceal the lost frames.
    Conceal(ConcealArgs),
    /// Run the conceal pipeline over a hyperparameter grid.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PatternArg {
    Even,
    Random,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

/// Configuration knobs shared by every command.
#[derive(Args, Debug)]
pub struct CommonOpts {
    /// TOML run configuration; flags override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Stacked LSTM layers.
    #[arg(long)]
    pub layers: Option<usize>,
    /// Hidden units per layer (H).
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Input window length in samples (L).
    #[arg(long)]
    pub window: Option<usize>,
    /// Unrolled sequence length (T).
    #[arg(long)]
    pub timesteps: Option<usize>,
    /// Online training passes per received frame (P).
    #[arg(long)]
    pub passes: Option<usize>,
    /// Seed for parameter init and every derived random stream.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Adam learning rate.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Samples per frame.
    #[arg(long = "frame-len")]
    pub frame_len: Option<usize>,
    /// Expected input sample rate.
    #[arg(long = "sample-rate")]
    pub sample_rate: Option<u32>,
    /// Runtime float width.
    #[arg(long, value_enum)]
    pub precision: Option<PrecisionArg>,
}

#[derive(Args, Debug)]
pub struct LossOpts {
    /// Fraction of frames to drop, in [0, 1].
    #[arg(long = "loss-rate")]
    pub loss_rate: Option<f64>,
    /// Loss position pattern.
    #[arg(long, value_enum)]
    pub pattern: Option<PatternArg>,
    /// Seed for the random pattern (independent of the model seed).
    #[arg(long = "loss-seed")]
    pub loss_seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    /// Directory of training WAVs (or a single WAV file).
    #[arg(long, value_name = "DIR")]
    pub corpus: PathBuf,
    /// Checkpoint file to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: CommonOpts,
}

#[derive(Args, Debug)]
pub struct ConcealArgs {
    /// Input WAV (PCM 16-bit mono).
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Concealed output WAV.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Start from a pretrained checkpoint instead of random init.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Write the reference signal (whole-frame prefix of the input), for
    /// external comparison tools.
    #[arg(long = "ref-out", value_name = "FILE")]
    pub ref_out: Option<PathBuf>,
    /// Write the metrics report as JSON.
    #[arg(long, value_name = "FILE")]
    pub metrics: Option<PathBuf>,
    /// Write per-frame processing records as JSON lines.
    #[arg(long = "frame-log", value_name = "FILE")]
    pub frame_log: Option<PathBuf>,
    #[command(flatten)]
    pub loss: LossOpts,
    #[command(flatten)]
    pub common: CommonOpts,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Input WAV files or directories (repeatable).
    #[arg(long = "in", value_name = "PATH", num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    /// Directory for per-point reports and summary.tsv.
    #[arg(long = "out-dir", value_name = "DIR")]
    pub out_dir: PathBuf,
    /// Comma-separated layer counts.
    #[arg(long = "grid-layers", value_delimiter = ',')]
    pub grid_layers: Option<Vec<usize>>,
    /// Comma-separated pass counts.
    #[arg(long = "grid-passes", value_delimiter = ',')]
    pub grid_passes: Option<Vec<usize>>,
    /// Comma-separated hidden sizes (the window length follows each).
    #[arg(long = "grid-hidden", value_delimiter = ',')]
    pub grid_hidden: Option<Vec<usize>>,
    /// Comma-separated sequence lengths.
    #[arg(long = "grid-timesteps", value_delimiter = ',')]
    pub grid_timesteps: Option<Vec<usize>>,
    /// Pretrain each point on this corpus before concealing.
    #[arg(long = "pretrain-corpus", value_name = "DIR")]
    pub pretrain_corpus: Option<PathBuf>,
    #[command(flatten)]
    pub loss: LossOpts,
    #[command(flatten)]
    pub common: CommonOpts,
}

/// Parses the process arguments, runs the command, and returns the exit
/// code. Errors print to stderr.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Pretrain(args) => {
            let cfg = merged_config(&args.common, &None)?;
            match cfg.precision {
                Precision::F32 => cmd_pretrain::<f32>(&args, &cfg),
                Precision::F64 => cmd_pretrain::<f64>(&args, &cfg),
            }?;
            Ok(0)
        }
        Command::Conceal(args) => {
            let cfg = merged_config(&args.common, &Some(&args.loss))?;
            match cfg.precision {
                Precision::F32 => cmd_conceal::<f32>(&args, cfg),
                Precision::F64 => cmd_conceal::<f64>(&args, cfg),
            }?;
            Ok(0)
        }
        Command::Sweep(args) => {
            let cfg = merged_config(&args.common, &Some(&args.loss))?;
            let failed = match cfg.precision {
                Precision::F32 => cmd_sweep::<f32>(&args, &cfg),
                Precision::F64 => cmd_sweep::<f64>(&args, &cfg),
            }?;
            Ok(if failed == 0 { 0 } else { 1 })
        }
    }
}

/// Defaults, then the config file, then flags.
fn merged_config(common: &CommonOpts, loss: &Option<&LossOpts>) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    let p = &mut cfg.predictor;
    if let Some(v) = common.layers {
        p.num_layers = v;
    }
    if let Some(v) = common.hidden {
        p.hidden = v;
    }
    if let Some(v) = common.window {
        p.window_len = v;
    }
    if let Some(v) = common.timesteps {
        p.time_steps = v;
    }
    if let Some(v) = common.passes {
        p.passes = v;
    }
    if let Some(v) = common.seed {
        p.seed = v;
    }
    if let Some(v) = common.alpha {
        p.adam.alpha = v;
    }
    if let Some(v) = common.frame_len {
        p.frame_len = v;
    }
    if let Some(v) = common.sample_rate {
        cfg.sample_rate = v;
    }
    if let Some(v) = common.precision {
        cfg.precision = match v {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        };
    }
    if let Some(loss) = loss {
        if let Some(v) = loss.loss_rate {
            cfg.loss.rate = v;
        }
        if let Some(v) = loss.pattern {
            cfg.loss.mode = match v {
                PatternArg::Even => LossMode::Even,
                PatternArg::Random => LossMode::Random,
            };
        }
        if let Some(v) = loss.loss_seed {
            cfg.loss.seed = v;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// WAVs under `path` (sorted by name), or `path` itself when it is a file.
fn wav_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = std::fs::read_dir(path).map_err(|e| PlcError::io(path, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.is_file()
                && p.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("wav"))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn load_checked<S: Scalar>(path: &Path, cfg: &RunConfig) -> Result<AudioBuffer<S>> {
    let buf = read_wav::<S>(path)?;
    if buf.sample_rate != cfg.sample_rate {
        return Err(PlcError::Config(format!(
            "{} is sampled at {} Hz but the configuration expects {} Hz \
             (pass --sample-rate to change it; there is no resampler)",
            path.display(),
            buf.sample_rate,
            cfg.sample_rate
        )));
    }
    Ok(buf)
}

fn cmd_pretrain<S: Scalar>(args: &PretrainArgs, cfg: &RunConfig) -> Result<()> {
    let files = wav_files(&args.corpus)?;
    if files.is_empty() {
        return Err(PlcError::Config(format!(
            "no WAV files found in {}",
            args.corpus.display()
        )));
    }

    let mut streams: Vec<Vec<S>> = Vec::with_capacity(files.len());
    for f in &files {
        streams.push(load_checked::<S>(f, cfg)?.samples);
    }

    let pcfg = &cfg.predictor;
    let mut net = pcfg.build_network::<S>()?;
    let mut opt = AdamState::new(&net);
    let report = pretrain(&mut net, &mut opt, &streams, pcfg);

    println!("corpus: {} ({} files)", args.corpus.display(), files.len());
    for (f, loss) in files.iter().zip(&report.stream_losses) {
        let name = f.file_name().unwrap_or_default().to_string_lossy();
        match loss {
            Some(l) => println!("{name}\tmean loss {l:.6e}"),
            None => println!("{name}\tskipped (shorter than one frame)"),
        }
    }
    println!(
        "frames trained: {}, updates skipped: {}",
        report.frames_trained, report.updates_skipped
    );

    let ckpt = Checkpoint {
        config: pcfg.clone(),
        meta: CheckpointMeta { corpus_hash: corpus_fingerprint(&streams), epochs: 1 },
        net,
        opt: Some(opt),
    };
    save_checkpoint(&ckpt, &args.out)?;
    println!("wrote checkpoint: {}", args.out.display());
    Ok(())
}

/// Architecture fields are owned by the checkpoint: a conflicting explicit
/// flag is an error, anything unspecified adopts the checkpoint's value.
fn adopt_checkpoint_architecture(
    cfg: &mut RunConfig,
    args: &ConcealArgs,
    ck: &crate::predictor::PredictorConfig,
) -> Result<()> {
    let conflicts = [
        ("--layers", args.common.layers, ck.num_layers),
        ("--hidden", args.common.hidden, ck.hidden),
        ("--window", args.common.window, ck.window_len),
    ];
    for (flag, given, expected) in conflicts {
        if let Some(v) = given {
            if v != expected {
                return Err(PlcError::Config(format!(
                    "{flag} {v} conflicts with the checkpoint architecture ({expected})"
                )));
            }
        }
    }
    cfg.predictor.num_layers = ck.num_layers;
    cfg.predictor.hidden = ck.hidden;
    cfg.predictor.window_len = ck.window_len;
    Ok(())
}

fn cmd_conceal<S: Scalar>(args: &ConcealArgs, mut cfg: RunConfig) -> Result<()> {
    let loaded = match &args.checkpoint {
        Some(path) => {
            let ckpt: Checkpoint<S> = load_checkpoint(path)?;
            adopt_checkpoint_architecture(&mut cfg, args, &ckpt.config)?;
            Some(ckpt)
        }
        None => None,
    };

    let buf = load_checked::<S>(&args.input, &cfg)?;
    let total = buf.samples.len();
    let (stream, dropped) = segment_frames(&buf, cfg.predictor.frame_len);
    let frames = stream.num_frames();

    let pattern = generate_loss_pattern(frames, cfg.loss.rate, cfg.loss.mode, cfg.loss.seed);
    let stream = stream.with_availability(&pattern);

    // A fresh optimizer either way: online adaptation does not resume the
    // pretraining moments.
    let mut session = match loaded {
        Some(ckpt) => PlcSession::with_network(cfg.predictor.clone(), ckpt.net, None)?,
        None => PlcSession::new(cfg.predictor.clone())?,
    };
    let output = session.process_stream(&stream);

    write_wav(&AudioBuffer { samples: output.clone(), sample_rate: cfg.sample_rate }, &args.out)?;
    if let Some(ref_out) = &args.ref_out {
        write_wav(
            &AudioBuffer { samples: stream.reference().to_vec(), sample_rate: cfg.sample_rate },
            ref_out,
        )?;
    }

    let mut report =
        lost_frame_metrics(stream.reference(), &output, stream.availability(), cfg.predictor.frame_len);
    report.meta = serde_json::json!({
        "config": cfg.echo(),
        "input": args.input.display().to_string(),
        "checkpoint": args.checkpoint.as_ref().map(|p| p.display().to_string()),
        "dropped_samples": dropped,
    });

    println!(
        "input: {} ({} samples, {} frames of {}, {} trailing samples dropped)",
        args.input.display(),
        total,
        frames,
        cfg.predictor.frame_len,
        dropped
    );
    println!(
        "loss: {} rate {} -> {} lost frames ({} silent)",
        cfg.loss.mode, cfg.loss.rate, report.lost_frames, report.silent_lost_frames
    );
    match report.mean_mse {
        Some(m) => println!("mean mse: {m:.6e}"),
        None => println!("mean mse: n/a (no lost frames)"),
    }
    match report.seg_snr_db {
        Some(s) => println!("seg snr: {s:.2} dB"),
        None => println!("seg snr: n/a (no non-silent lost frames)"),
    }
    println!("wrote: {}", args.out.display());

    if let Some(path) = &args.metrics {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(path, json).map_err(|e| PlcError::io(path, e))?;
    }
    if let Some(path) = &args.frame_log {
        let mut lines = String::new();
        lines.push_str(&serde_json::json!({ "config": cfg.echo() }).to_string());
        lines.push('\n');
        for record in session.frame_log() {
            lines.push_str(&serde_json::to_string(record).expect("record serializes"));
            lines.push('\n');
        }
        std::fs::write(path, lines).map_err(|e| PlcError::io(path, e))?;
    }
    Ok(())
}

/// Returns the number of failed grid points.
fn cmd_sweep<S: Scalar>(args: &SweepArgs, cfg: &RunConfig) -> Result<usize> {
    let mut files = Vec::new();
    for input in &args.inputs {
        files.extend(wav_files(input)?);
    }
    if files.is_empty() {
        return Err(PlcError::Config("no input WAV files found".into()));
    }

    let mut inputs: Vec<NamedSignal<S>> = Vec::with_capacity(files.len());
    for f in &files {
        inputs.push(NamedSignal {
            name: f.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            samples: load_checked::<S>(f, cfg)?.samples,
        });
    }

    let init = match &args.pretrain_corpus {
        Some(dir) => {
            let corpus_files = wav_files(dir)?;
            if corpus_files.is_empty() {
                return Err(PlcError::Config(format!(
                    "no WAV files found in {}",
                    dir.display()
                )));
            }
            let mut streams = Vec::with_capacity(corpus_files.len());
            for f in &corpus_files {
                streams.push(load_checked::<S>(f, cfg)?.samples);
            }
            SweepInit::Pretrain(streams)
        }
        None => SweepInit::Random,
    };

    let defaults = SweepGrid::default();
    let grid = SweepGrid {
        layers: args.grid_layers.clone().unwrap_or(defaults.layers),
        passes: args.grid_passes.clone().unwrap_or(defaults.passes),
        hidden: args.grid_hidden.clone().unwrap_or_else(|| vec![cfg.predictor.hidden]),
        time_steps: args
            .grid_timesteps
            .clone()
            .unwrap_or_else(|| vec![cfg.predictor.time_steps]),
    };

    let spec = SweepSpec { base: cfg.clone(), grid, inputs: &inputs, init };
    let outcome = run_sweep(&spec, &args.out_dir)?;

    println!(
        "sweep: {} points over {} files -> {}",
        outcome.completed.len() + outcome.failed.len(),
        files.len(),
        args.out_dir.display()
    );
    for s in &outcome.completed {
        println!(
            "{}\tmse {}\tsnr {}\t{}",
            s.point.tag(),
            s.artifact.mean_mse.map_or("-".into(), |v| format!("{v:.6e}")),
            s.artifact.seg_snr_db.map_or("-".into(), |v| format!("{v:.2} dB")),
            if s.resumed { "resumed" } else { "ok" }
        );
    }
    for (p, msg) in &outcome.failed {
        println!("{}\tfailed: {msg}", p.tag());
    }
    println!("summary: {}", args.out_dir.join("summary.tsv").display());
    Ok(outcome.failed.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(args).expect("arguments parse")
    }

    #[test]
    fn conceal_flags_land_in_the_merged_config() {
        let cli = parse(&[
            "plcnet", "conceal", "--in", "a.wav", "--out", "b.wav", "--loss-rate", "0.1",
            "--pattern", "even", "--layers", "1", "--hidden", "80", "--window", "80",
            "--timesteps", "160", "--passes", "20", "--seed", "7",
        ]);
        let Command::Conceal(args) = cli.command else { panic!("expected conceal") };
        let cfg = merged_config(&args.common, &Some(&args.loss)).unwrap();
        assert_eq!(cfg.predictor.num_layers, 1);
        assert_eq!(cfg.predictor.hidden, 80);
        assert_eq!(cfg.predictor.window_len, 80);
        assert_eq!(cfg.predictor.time_steps, 160);
        assert_eq!(cfg.predictor.passes, 20);
        assert_eq!(cfg.predictor.seed, 7);
        assert_eq!(cfg.loss.rate, 0.1);
        assert_eq!(cfg.loss.mode, LossMode::Even);
    }

    #[test]
    fn defaults_survive_when_no_flags_are_given() {
        let cli = parse(&["plcnet", "conceal", "--in", "a.wav", "--out", "b.wav"]);
        let Command::Conceal(args) = cli.command else { panic!("expected conceal") };
        let cfg = merged_config(&args.common, &Some(&args.loss)).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn invalid_merged_config_is_rejected() {
        let cli = parse(&[
            "plcnet", "conceal", "--in", "a.wav", "--out", "b.wav", "--loss-rate", "1.5",
        ]);
        let Command::Conceal(args) = cli.command else { panic!("expected conceal") };
        assert!(matches!(
            merged_config(&args.common, &Some(&args.loss)),
            Err(PlcError::Config(_))
        ));
    }

    #[test]
    fn sweep_grid_flags_parse_comma_lists() {
        let cli = parse(&[
            "plcnet", "sweep", "--in", "a.wav", "--out-dir", "d", "--grid-passes", "0,20",
            "--grid-timesteps", "80,160",
        ]);
        let Command::Sweep(args) = cli.command else { panic!("expected sweep") };
        assert_eq!(args.grid_passes, Some(vec![0, 20]));
        assert_eq!(args.grid_timesteps, Some(vec![80, 160]));
        assert_eq!(args.grid_layers, None);
    }

    #[test]
    fn missing_required_flags_fail_parsing() {
        assert!(Cli::try_parse_from(["plcnet", "conceal", "--in", "a.wav"]).is_err());
        assert!(Cli::try_parse_from(["plcnet", "sweep", "--out-dir", "d"]).is_err());
    }
}
