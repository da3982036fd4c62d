//! Pretrains on a small synthetic corpus, saves a checkpoint, reloads it,
//! and shows that the pretrained model conceals better than a random one
//! from the first lost frame on.
//!
//! ```sh
//! cargo run --release --example pretrain_and_checkpoint
//! ```

use plcnet::adam::AdamState;
use plcnet::checkpoint::{
    corpus_fingerprint, load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta,
};
use plcnet::engine::{generate_loss_pattern, FrameStream, LossMode, PlcSession};
use plcnet::eval::lost_frame_metrics;
use plcnet::predictor::{pretrain, PredictorConfig};
use plcnet::synth;

fn main() {
    let sample_rate = 8000;
    let cfg = PredictorConfig {
        frame_len: 80,
        window_len: 32,
        time_steps: 32,
        hidden: 32,
        passes: 4,
        seed: 5,
        ..PredictorConfig::default()
    };

    // Eight half-second utterances from different synthesis seeds.
    let corpus: Vec<Vec<f32>> =
        (0..8).map(|k| synth::speech_like::<f32>(100 + k, sample_rate, 4000)).collect();

    let mut net = cfg.build_network::<f32>().unwrap();
    let mut opt = AdamState::new(&net);
    let report = pretrain(&mut net, &mut opt, &corpus, &cfg);
    let losses: Vec<f64> = report.stream_losses.iter().flatten().copied().collect();
    println!(
        "pretrained on {} frames; per-stream mean loss {:.3e} .. {:.3e}",
        report.frames_trained,
        losses.iter().cloned().fold(f64::INFINITY, f64::min),
        losses.iter().cloned().fold(0.0, f64::max),
    );

    let dir = std::env::temp_dir().join("plcnet_example");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("pretrained.plcn");
    let ckpt = Checkpoint {
        config: cfg.clone(),
        meta: CheckpointMeta { corpus_hash: corpus_fingerprint(&corpus), epochs: 1 },
        net,
        opt: Some(opt),
    };
    save_checkpoint(&ckpt, &path).unwrap();
    println!("checkpoint: {} ({} bytes)", path.display(), std::fs::metadata(&path).unwrap().len());

    let loaded: Checkpoint<f32> = load_checkpoint(&path).unwrap();
    assert_eq!(loaded.net.flatten(), ckpt.net.flatten(), "round trip is exact");
    println!(
        "reloaded: corpus hash {:#018x}, {} epoch(s)",
        loaded.meta.corpus_hash, loaded.meta.epochs
    );

    // A held-out utterance with 10% loss, concealed twice.
    let test = synth::speech_like::<f32>(999, sample_rate, 80 * 150);
    let pattern = generate_loss_pattern(150, 0.1, LossMode::Even, 0);
    let stream = FrameStream::from_samples(&test, 80, sample_rate).with_availability(&pattern);

    for (name, mut session) in [
        ("random init", PlcSession::<f32>::new(cfg.clone()).unwrap()),
        ("pretrained", PlcSession::with_network(cfg.clone(), loaded.net, None).unwrap()),
    ] {
        let out = session.process_stream(&stream);
        let r = lost_frame_metrics(stream.reference(), &out, stream.availability(), 80);
        println!(
            "{name:<12} mean mse {:.4e}, seg snr {:.2} dB",
            r.mean_mse.unwrap(),
            r.seg_snr_db.unwrap()
        );
    }
}
