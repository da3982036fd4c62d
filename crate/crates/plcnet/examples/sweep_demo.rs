//! Runs a small hyperparameter sweep (passes x time steps) over two
//! synthetic utterances and prints the consolidated table.
//!
//! ```sh
//! cargo run --release --example sweep_demo
//! ```

use plcnet::config::RunConfig;
use plcnet::predictor::PredictorConfig;
use plcnet::sweep::{run_sweep, NamedSignal, SweepGrid, SweepInit, SweepSpec};
use plcnet::synth;

fn main() {
    let out_dir = std::env::temp_dir().join("plcnet_example").join("sweep");

    let mut base = RunConfig::default();
    base.predictor = PredictorConfig {
        frame_len: 80,
        window_len: 24,
        time_steps: 24,
        hidden: 24,
        seed: 4,
        ..PredictorConfig::default()
    };
    base.loss.rate = 0.1;

    let inputs: Vec<NamedSignal<f32>> = (0..2)
        .map(|k| NamedSignal {
            name: format!("utterance{k}.wav"),
            samples: synth::speech_like::<f32>(200 + k, 8000, 80 * 120),
        })
        .collect();

    let spec = SweepSpec {
        base,
        grid: SweepGrid {
            layers: vec![1],
            passes: vec![0, 4, 8],
            hidden: vec![24],
            time_steps: vec![24, 48],
        },
        inputs: &inputs,
        init: SweepInit::Random,
    };

    let outcome = run_sweep(&spec, &out_dir).unwrap();
    assert!(outcome.all_ok());

    println!("{}", std::fs::read_to_string(out_dir.join("summary.tsv")).unwrap());
    println!("per-point reports in {}", out_dir.display());
    println!("rerunning reuses finished points; delete the directory for a fresh sweep");
}
