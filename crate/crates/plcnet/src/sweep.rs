//! Hyperparameter grid sweeps.
//!
//! A sweep runs the full conceal-and-measure pipeline once per grid point
//! (cartesian product of the axis value lists) over a fixed set of input
//! signals, in parallel across points. Every point writes its own JSON
//! report; a finished sweep also writes `summary.tsv`, one row per point,
//! ready for a plotting tool.
//!
//! The per-point report doubles as a resume marker: rerunning a sweep into
//! the same directory skips any point whose report already parses, so an
//! interrupted sweep continues where it stopped. Each point derives its
//! seed from the base seed and its own axes, never from scheduling order,
//! so results are identical however the points are distributed over
//! threads.
//!
//! The window length is not a sweep axis: it tracks the hidden size (the
//! experimental convention everywhere in this crate), so a point's network
//! reads as many samples as it has units per layer.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adam::AdamState;
use crate::config::RunConfig;
use crate::engine::{generate_loss_pattern, FrameStream, PlcSession};
use crate::eval::lost_frame_metrics;
use crate::numerics::{mix_seed, Scalar};
use crate::predictor::{pretrain, PredictorConfig};
use crate::{PlcError, Result};

/// Axis value lists; the grid is their cartesian product.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub layers: Vec<usize>,
    pub passes: Vec<usize>,
    /// Hidden units per layer; also sets the window length.
    pub hidden: Vec<usize>,
    pub time_steps: Vec<usize>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid { layers: vec![1], passes: vec![0, 20], hidden: vec![80], time_steps: vec![160] }
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        for (name, axis) in [
            ("layers", &self.layers),
            ("passes", &self.passes),
            ("hidden", &self.hidden),
            ("time_steps", &self.time_steps),
        ] {
            if axis.is_empty() {
                return Err(PlcError::Config(format!("sweep axis {name} has no values")));
            }
        }
        Ok(())
    }

    /// All grid points in a fixed order: layers, then hidden, then
    /// time_steps, then passes, each ascending in list order.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for &layers in &self.layers {
            for &hidden in &self.hidden {
                for &time_steps in &self.time_steps {
                    for &passes in &self.passes {
                        out.push(SweepPoint { layers, passes, hidden, time_steps });
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub layers: usize,
    pub passes: usize,
    pub hidden: usize,
    pub time_steps: usize,
}

impl SweepPoint {
    /// Stable file-name tag, e.g. `l1_h80_t160_p20`.
    pub fn tag(&self) -> String {
        format!("l{}_h{}_t{}_p{}", self.layers, self.hidden, self.time_steps, self.passes)
    }

    /// The base predictor configuration with this point's axes applied.
    /// The window length follows the hidden size; the seed is mixed with
    /// the axes so every point trains a different but reproducible network.
    pub fn apply(&self, base: &PredictorConfig) -> PredictorConfig {
        let mut cfg = base.clone();
        cfg.num_layers = self.layers;
        cfg.passes = self.passes;
        cfg.hidden = self.hidden;
        cfg.window_len = self.hidden;
        cfg.time_steps = self.time_steps;
        cfg.seed = [self.layers, self.passes, self.hidden, self.time_steps]
            .iter()
            .fold(base.seed, |s, &v| mix_seed(s, v as u64));
        cfg
    }
}

/// An input signal with a name for reports.
#[derive(Clone, Debug)]
pub struct NamedSignal<S> {
    pub name: String,
    pub samples: Vec<S>,
}

/// How each point's network starts.
#[derive(Clone, Debug)]
pub enum SweepInit<S> {
    /// Seeded random parameters.
    Random,
    /// One pretraining epoch over these streams before concealing.
    Pretrain(Vec<Vec<S>>),
}

pub struct SweepSpec<'a, S: Scalar> {
    pub base: RunConfig,
    pub grid: SweepGrid,
    pub inputs: &'a [NamedSignal<S>],
    pub init: SweepInit<S>,
}

/// Per-file results inside a point report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FileResult {
    pub name: String,
    pub frames: usize,
    pub lost_frames: usize,
    pub mean_mse: Option<f64>,
    pub seg_snr_db: Option<f64>,
}

/// One grid point's report, written as `point_{tag}.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointArtifact {
    pub point: SweepPoint,
    pub per_file: Vec<FileResult>,
    /// Equal-weight mean over files that lost at least one frame.
    pub mean_mse: Option<f64>,
    pub seg_snr_db: Option<f64>,
    pub config: serde_json::Value,
}

#[derive(Clone, Debug)]
pub struct PointSummary {
    pub point: SweepPoint,
    pub artifact: PointArtifact,
    /// True when the point was skipped because its report already existed.
    pub resumed: bool,
}

#[derive(Debug, Default)]
pub struct SweepOutcome {
    pub completed: Vec<PointSummary>,
    pub failed: Vec<(SweepPoint, String)>,
}

impl SweepOutcome {
    pub fn all_ok(&self) -> bool {
        self.failed.is_empty()
    }
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.flatten().collect();
    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
}

fn run_point<S: Scalar>(spec: &SweepSpec<S>, point: SweepPoint) -> Result<PointArtifact> {
    let cfg = point.apply(&spec.base.predictor);
    cfg.validate()?;

    let mut net = cfg.build_network::<S>()?;
    if let SweepInit::Pretrain(streams) = &spec.init {
        let mut opt = AdamState::new(&net);
        pretrain(&mut net, &mut opt, streams, &cfg);
    }

    let mut per_file = Vec::with_capacity(spec.inputs.len());
    for input in spec.inputs {
        let whole = input.samples.len() - input.samples.len() % cfg.frame_len;
        if whole == 0 {
            return Err(PlcError::Config(format!(
                "input \"{}\" is shorter than one {}-sample frame",
                input.name, cfg.frame_len
            )));
        }
        let pattern = generate_loss_pattern(
            whole / cfg.frame_len,
            spec.base.loss.rate,
            spec.base.loss.mode,
            spec.base.loss.seed,
        );
        let stream = FrameStream::from_samples(&input.samples[..whole], cfg.frame_len, spec.base.sample_rate)
            .with_availability(&pattern);

        // Each file gets its own session starting from the shared initial
        // parameters, mirroring a fresh call per utterance.
        let mut session = PlcSession::with_network(cfg.clone(), net.clone(), None)?;
        let output = session.process_stream(&stream);
        let report = lost_frame_metrics(stream.reference(), &output, stream.availability(), cfg.frame_len);
        per_file.push(FileResult {
            name: input.name.clone(),
            frames: stream.num_frames(),
            lost_frames: report.lost_frames,
            mean_mse: report.mean_mse,
            seg_snr_db: report.seg_snr_db,
        });
    }

    let mean_mse = mean_of(per_file.iter().map(|f| f.mean_mse));
    let seg_snr_db = mean_of(per_file.iter().map(|f| f.seg_snr_db));
    let mut base_echo = spec.base.clone();
    base_echo.predictor = cfg;
    Ok(PointArtifact { point, per_file, mean_mse, seg_snr_db, config: base_echo.echo() })
}

fn point_path(out_dir: &Path, point: &SweepPoint) -> std::path::PathBuf {
    out_dir.join(format!("point_{}.json", point.tag()))
}

fn fmt_mse(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.6e}"))
}

fn fmt_snr(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.2}"))
}

/// Runs every grid point, writes per-point reports and `summary.tsv` into
/// `out_dir`, and returns what happened. Failing points are recorded and do
/// not stop the sweep; check [`SweepOutcome::all_ok`].
pub fn run_sweep<S: Scalar>(spec: &SweepSpec<S>, out_dir: &Path) -> Result<SweepOutcome> {
    spec.grid.validate()?;
    spec.base.validate()?;
    if spec.inputs.is_empty() {
        return Err(PlcError::Config("sweep needs at least one input signal".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| PlcError::io(out_dir, e))?;

    let points = spec.grid.points();
    let results: Vec<(SweepPoint, std::result::Result<PointSummary, String>)> = points
        .par_iter()
        .map(|&point| {
            let path = point_path(out_dir, &point);
            if let Ok(text) = std::fs::read_to_string(&path) {
                if let Ok(artifact) = serde_json::from_str::<PointArtifact>(&text) {
                    return (point, Ok(PointSummary { point, artifact, resumed: true }));
                }
            }
            match run_point(spec, point) {
                Ok(artifact) => {
                    let json = serde_json::to_string_pretty(&artifact).expect("report serializes");
                    match std::fs::write(&path, json) {
                        Ok(()) => (point, Ok(PointSummary { point, artifact, resumed: false })),
                        Err(e) => (point, Err(format!("writing {}: {e}", path.display()))),
                    }
                }
                Err(e) => (point, Err(e.to_string())),
            }
        })
        .collect();

    let mut outcome = SweepOutcome::default();
    let mut rows = Vec::new();
    for (point, result) in results {
        match result {
            Ok(summary) => {
                let a = &summary.artifact;
                rows.push(format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\tok",
                    point.layers,
                    point.hidden,
                    point.hidden,
                    point.time_steps,
                    point.passes,
                    a.per_file.len(),
                    a.per_file.iter().map(|f| f.lost_frames).sum::<usize>(),
                    fmt_mse(a.mean_mse),
                    fmt_snr(a.seg_snr_db),
                ));
                outcome.completed.push(summary);
            }
            Err(msg) => {
                let clean = msg.replace(['\t', '\n'], " ");
                rows.push(format!(
                    "{}\t{}\t{}\t{}\t{}\t-\t-\t-\t-\terror: {clean}",
                    point.layers, point.hidden, point.hidden, point.time_steps, point.passes,
                ));
                outcome.failed.push((point, msg));
            }
        }
    }

    let mut table = String::from(
        "layers\thidden\twindow\ttime_steps\tpasses\tfiles\tlost_frames\tmean_mse\tseg_snr_db\tstatus\n",
    );
    for row in rows {
        table.push_str(&row);
        table.push('\n');
    }
    let summary_path = out_dir.join("summary.tsv");
    std::fs::write(&summary_path, table).map_err(|e| PlcError::io(&summary_path, e))?;

    Ok(outcome)
}
