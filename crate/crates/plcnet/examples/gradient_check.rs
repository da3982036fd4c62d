//! Checks the analytic BPTT gradients against central finite differences
//! on a handful of random small networks.
//!
//! ```sh
//! cargo run --example gradient_check
//! ```

use plcnet::lstm::{bptt_backward, network_forward, NetworkParams};
use plcnet::SeededRng;

fn masked_loss(net: &NetworkParams<f64>, windows: &[Vec<f64>], targets: &[Option<f64>]) -> f64 {
    let (preds, _) = network_forward(net, windows);
    let mut acc = 0.0;
    let mut count = 0usize;
    for (p, t) in preds.iter().zip(targets) {
        if let Some(t) = t {
            acc += (p - t).powi(2);
            count += 1;
        }
    }
    acc / count as f64
}

fn main() {
    let time_steps = 7;
    let mut worst = 0.0f64;

    for seed in 0..6u64 {
        let mut rng = SeededRng::new(seed);
        let layers = 1 + (seed % 2) as usize;
        let hidden = 4;
        let window = 5;
        let mut net = NetworkParams::<f64>::init(window, hidden, layers, 1.0, &mut rng);

        let windows: Vec<Vec<f64>> =
            (0..time_steps).map(|_| (0..window).map(|_| rng.uniform(-1.0, 1.0)).collect()).collect();
        let targets: Vec<Option<f64>> = (0..time_steps)
            .map(|t| (t == time_steps - 1 || rng.chance(0.4)).then(|| rng.uniform(-1.0, 1.0)))
            .collect();

        let (_, trace) = network_forward(&net, &windows);
        let (grads, _) = bptt_backward(&net, &trace, &targets);
        let analytic = grads.flatten();

        let eps = 1e-5;
        let theta = net.flatten();
        let mut max_rel = 0.0f64;
        for i in 0..theta.len() {
            let mut plus = theta.clone();
            plus[i] += eps;
            net.load_flat(&plus);
            let lp = masked_loss(&net, &windows, &targets);

            let mut minus = theta.clone();
            minus[i] -= eps;
            net.load_flat(&minus);
            let lm = masked_loss(&net, &windows, &targets);
            net.load_flat(&theta);

            let numeric = (lp - lm) / (2.0 * eps);
            let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-6);
            max_rel = max_rel.max(rel);
        }

        println!(
            "seed {seed}: {layers} layer(s), {} parameters, worst relative error {max_rel:.3e}",
            theta.len()
        );
        worst = worst.max(max_rel);
    }

    println!("\noverall worst relative error: {worst:.3e}");
    assert!(worst < 1e-5, "gradient mismatch");
    println!("analytic gradients agree with finite differences");
}
