//! Deterministic test signals.
//!
//! The predictor needs speech to chew on; this module synthesizes
//! speech-like material (voiced harmonic segments with drifting pitch,
//! fricative-like noise bursts, short silences) so every test, example, and
//! sweep can run self-contained on any machine from a seed alone.

use crate::numerics::{mix_seed, Scalar, SeededRng};

/// Pure tone: `amplitude * sin(2*pi*freq*t / rate + phase)`.
pub fn sine<S: Scalar>(freq_hz: f64, amplitude: f64, sample_rate: u32, num_samples: usize, phase: f64) -> Vec<S> {
    let step = 2.0 * std::f64::consts::PI * freq_hz / sample_rate as f64;
    (0..num_samples)
        .map(|i| S::from_f64(amplitude * (phase + step * i as f64).sin()))
        .collect()
}

const SYNTH_SALT: u64 = 0x53504545_4348; // "SPEECH"

/// Speech-like signal: a deterministic sequence of voiced, unvoiced, and
/// silent segments. Voiced segments are harmonic stacks on a fundamental
/// that drifts within 80-220 Hz, normalized so the waveform stays inside
/// the segment level; unvoiced segments are high-frequency-weighted noise.
pub fn speech_like<S: Scalar>(seed: u64, sample_rate: u32, num_samples: usize) -> Vec<S> {
    let fs = sample_rate as f64;
    let mut rng = SeededRng::new(mix_seed(seed, SYNTH_SALT));
    let mut out: Vec<f64> = Vec::with_capacity(num_samples);
    let fade = (0.015 * fs) as usize;

    while out.len() < num_samples {
        let seg_len = (rng.uniform(0.08, 0.24) * fs) as usize;
        let kind = rng.next_f64();
        if kind < 0.75 {
            // Voiced: harmonics of a drifting fundamental, coherent phase.
            let f0_a = rng.uniform(80.0, 220.0);
            let f0_b = (f0_a * rng.uniform(0.85, 1.15)).clamp(60.0, 240.0);
            let level = rng.uniform(0.15, 0.45);
            let max_k = ((fs / 2.0 - 1.0) / f0_a.max(f0_b)).floor() as usize;
            let k_count = max_k.clamp(1, 10);
            let rolloff = rng.uniform(0.7, 1.3);
            let mut amps: Vec<f64> = (1..=k_count)
                .map(|k| rng.uniform(0.5, 1.5) / (k as f64).powf(rolloff))
                .collect();
            let total: f64 = amps.iter().sum();
            for a in &mut amps {
                *a *= level / total;
            }
            let phases: Vec<f64> =
                (0..k_count).map(|_| rng.uniform(0.0, 2.0 * std::f64::consts::PI)).collect();

            let mut theta = rng.uniform(0.0, 2.0 * std::f64::consts::PI);
            for i in 0..seg_len {
                let frac = i as f64 / seg_len as f64;
                let f0 = f0_a + (f0_b - f0_a) * frac;
                theta += 2.0 * std::f64::consts::PI * f0 / fs;
                let mut s = 0.0;
                for (k, (&a, &p)) in amps.iter().zip(&phases).enumerate() {
                    s += a * ((k + 1) as f64 * theta + p).sin();
                }
                let env = envelope(i, seg_len, fade);
                out.push(s * env + rng.uniform(-0.002, 0.002));
                if out.len() == num_samples {
                    break;
                }
            }
        } else if kind < 0.9 {
            // Unvoiced: first-difference of white noise tilts energy upward
            // in frequency, a crude fricative.
            let level = rng.uniform(0.04, 0.12);
            let mut prev = rng.uniform(-1.0, 1.0);
            for i in 0..seg_len {
                let x = rng.uniform(-1.0, 1.0);
                let s = level * 0.5 * (x - prev);
                prev = x;
                out.push(s * envelope(i, seg_len, fade));
                if out.len() == num_samples {
                    break;
                }
            }
        } else {
            // Near-silence with a tiny noise floor.
            for _ in 0..seg_len {
                out.push(rng.uniform(-0.002, 0.002));
                if out.len() == num_samples {
                    break;
                }
            }
        }
    }

    out.into_iter().map(|x| S::from_f64(x.clamp(-0.95, 0.95))).collect()
}

/// Raised-cosine attack and release so segments never click.
fn envelope(i: usize, len: usize, fade: usize) -> f64 {
    let fade = fade.min(len / 2).max(1);
    let ramp = |d: usize| 0.5 - 0.5 * (std::f64::consts::PI * d as f64 / fade as f64).cos();
    if i < fade {
        ramp(i)
    } else if i + fade >= len {
        ramp(len - 1 - i)
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_has_expected_shape() {
        let v = sine::<f64>(1000.0, 0.5, 8000, 16, 0.0);
        assert_eq!(v.len(), 16);
        assert!(v[0].abs() < 1e-12);
        // 1 kHz at 8 kHz: quarter period is 2 samples.
        assert!((v[2] - 0.5).abs() < 1e-12);
        assert!(v.iter().all(|x| x.abs() <= 0.5 + 1e-12));
    }

    #[test]
    fn speech_like_is_deterministic_per_seed() {
        let a = speech_like::<f32>(5, 8000, 4000);
        let b = speech_like::<f32>(5, 8000, 4000);
        let c = speech_like::<f32>(6, 8000, 4000);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 4000);
    }

    #[test]
    fn speech_like_stays_in_range_and_is_not_silent() {
        for seed in 0..6 {
            let v = speech_like::<f64>(seed, 8000, 12000);
            assert!(v.iter().all(|x| x.abs() <= 0.95));
            let rms = (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
            assert!(rms > 0.02, "seed {seed}: rms {rms} too quiet");
        }
    }
}
