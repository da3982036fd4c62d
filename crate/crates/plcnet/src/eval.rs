//! Objective quality metrics over lost frames, plus two reference
//! concealers to compare against: silence substitution and pitch-repeat
//! extrapolation.
//!
//! Metrics are computed only where frames were lost; received frames pass
//! through every concealer unchanged and would dilute the comparison. Per
//! lost frame:
//!
//! ```text
//! mse    = mean((ref - out)^2)
//! snr_db = 10 * log10(sum(ref^2) / sum((ref - out)^2))
//! ```
//!
//! A frame whose reference energy is below 1e-12 is flagged silent and
//! excluded from the SNR average (the ratio is meaningless there); its MSE
//! still counts. Per-frame SNR is clamped to [-10, 35] dB before averaging
//! so a single perfectly reconstructed frame (infinite ratio) or a single
//! disaster cannot dominate the segmental mean.

use serde::{Deserialize, Serialize};

use crate::engine::FrameStream;
use crate::numerics::Scalar;

pub const SILENCE_ENERGY: f64 = 1e-12;
pub const SNR_FLOOR_DB: f64 = -10.0;
pub const SNR_CEIL_DB: f64 = 35.0;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub index: usize,
    pub mse: f64,
    /// Clamped SNR in dB; absent for silent reference frames.
    pub snr_db: Option<f64>,
    pub silent: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub lost_frames: usize,
    pub silent_lost_frames: usize,
    /// Mean MSE over all lost frames; absent when nothing was lost.
    pub mean_mse: Option<f64>,
    /// Mean clamped SNR over non-silent lost frames; absent when every lost
    /// frame was silent (or nothing was lost).
    pub seg_snr_db: Option<f64>,
    pub per_frame: Vec<FrameMetrics>,
    /// Free-form context (configuration echo, input path, ...) carried into
    /// serialized reports.
    #[serde(default)]
    pub meta: serde_json::Value,
}

/// Compares `output` against `reference` on the frames marked unavailable.
/// Both signals must cover `availability.len() * frame_len` samples.
pub fn lost_frame_metrics<S: Scalar>(
    reference: &[S],
    output: &[S],
    availability: &[bool],
    frame_len: usize,
) -> MetricsReport {
    assert_eq!(reference.len(), output.len(), "signals must have equal length");
    assert_eq!(
        reference.len(),
        availability.len() * frame_len,
        "signal length must match the frame grid"
    );

    let mut per_frame = Vec::new();
    let mut mse_sum = 0.0;
    let mut snr_sum = 0.0;
    let mut snr_count = 0usize;
    let mut silent = 0usize;

    for (i, &avail) in availability.iter().enumerate() {
        if avail {
            continue;
        }
        let r = &reference[i * frame_len..(i + 1) * frame_len];
        let o = &output[i * frame_len..(i + 1) * frame_len];
        let mut ref_energy = 0.0f64;
        let mut err_energy = 0.0f64;
        for (&rv, &ov) in r.iter().zip(o) {
            let rv = rv.to_f64_lossy();
            let e = rv - ov.to_f64_lossy();
            ref_energy += rv * rv;
            err_energy += e * e;
        }
        let mse = err_energy / frame_len as f64;
        mse_sum += mse;

        let is_silent = ref_energy < SILENCE_ENERGY;
        let snr_db = if is_silent {
            silent += 1;
            None
        } else {
            let raw = if err_energy == 0.0 {
                f64::INFINITY
            } else {
                10.0 * (ref_energy / err_energy).log10()
            };
            let clamped = raw.clamp(SNR_FLOOR_DB, SNR_CEIL_DB);
            snr_sum += clamped;
            snr_count += 1;
            Some(clamped)
        };
        per_frame.push(FrameMetrics { index: i, mse, snr_db, silent: is_silent });
    }

    let lost = per_frame.len();
    MetricsReport {
        lost_frames: lost,
        silent_lost_frames: silent,
        mean_mse: (lost > 0).then(|| mse_sum / lost as f64),
        seg_snr_db: (snr_count > 0).then(|| snr_sum / snr_count as f64),
        per_frame,
        meta: serde_json::Value::Null,
    }
}

/// Silence substitution: received frames pass through, lost frames become
/// zeros.
pub fn zero_fill<S: Scalar>(stream: &FrameStream<S>) -> Vec<S> {
    let n = stream.frame_len();
    let mut out = Vec::with_capacity(stream.num_frames() * n);
    for i in 0..stream.num_frames() {
        if stream.availability()[i] {
            out.extend_from_slice(stream.frame(i));
        } else {
            out.extend(std::iter::repeat(S::zero()).take(n));
        }
    }
    out
}

/// Pitch search range for [`periodic_extrapolation`], in samples.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PeriodicConfig {
    pub min_pitch: usize,
    pub max_pitch: usize,
}

impl Default for PeriodicConfig {
    fn default() -> Self {
        // 67..200 Hz at 8 kHz, the bulk of the speaking pitch range.
        PeriodicConfig { min_pitch: 40, max_pitch: 120 }
    }
}

/// Classic waveform-repetition concealment. For each lost frame: estimate
/// the pitch period over the recent output history by normalized
/// autocorrelation, repeat the last period, fade out the splice offset over
/// a quarter period, and attenuate by 0.2 per consecutive lost frame so
/// long bursts decay to silence instead of buzzing.
pub fn periodic_extrapolation<S: Scalar>(stream: &FrameStream<S>, cfg: &PeriodicConfig) -> Vec<S> {
    assert!(
        cfg.min_pitch >= 1 && cfg.min_pitch <= cfg.max_pitch,
        "pitch range must satisfy 1 <= min <= max"
    );
    let frame_len = stream.frame_len();
    let window = 2 * cfg.max_pitch;
    let mut out: Vec<S> = Vec::with_capacity(stream.num_frames() * frame_len);
    let mut burst = 0usize;

    for i in 0..stream.num_frames() {
        if stream.availability()[i] {
            out.extend_from_slice(stream.frame(i));
            burst = 0;
            continue;
        }
        burst += 1;
        let gain = (1.0 - 0.2 * (burst - 1) as f64).max(0.0);

        // Recent output history, left-padded with zeros when short.
        let mut hist = vec![0.0f64; window];
        let have = out.len().min(window);
        for (k, slot) in hist[window - have..].iter_mut().enumerate() {
            *slot = out[out.len() - have + k].to_f64_lossy();
        }

        if gain == 0.0 || hist.iter().all(|&x| x == 0.0) {
            out.extend(std::iter::repeat(S::zero()).take(frame_len));
            continue;
        }

        let pitch = estimate_pitch(&hist, cfg.min_pitch, cfg.max_pitch);

        // Continue the signal periodically from the end of the history.
        let mut synth: Vec<f64> =
            (0..frame_len).map(|k| hist[window - pitch + (k % pitch)]).collect();

        // The last emitted sample and the one a period earlier differ by the
        // cycle-to-cycle drift; fade that offset in over a quarter period so
        // the splice stays continuous.
        let fade = pitch.div_ceil(4).max(1);
        let offset = hist[window - 1] - hist[window - 1 - pitch];
        for (m, s) in synth.iter_mut().enumerate().take(fade.min(frame_len)) {
            *s += offset * (fade - m) as f64 / fade as f64;
        }

        for s in synth {
            let v = (s * gain).clamp(-1.0, 1.0);
            out.push(S::from_f64(v));
        }
    }
    out
}

/// Lag in [min, max] maximizing the normalized autocorrelation of `hist`.
/// Ties keep the shortest lag, so a harmonic never beats the fundamental.
fn estimate_pitch(hist: &[f64], min: usize, max: usize) -> usize {
    let w = hist.len();
    let max = max.min(w / 2);
    let mut best_lag = min;
    let mut best_score = f64::NEG_INFINITY;
    for lag in min..=max {
        let mut num = 0.0;
        let mut e1 = 0.0;
        let mut e2 = 0.0;
        for n in lag..w {
            num += hist[n] * hist[n - lag];
            e1 += hist[n] * hist[n];
            e2 += hist[n - lag] * hist[n - lag];
        }
        let score = num / (e1 * e2).sqrt().max(1e-30);
        if score > best_score {
            best_score = score;
            best_lag = lag;
        }
    }
    best_lag
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn hand_computed_frame_metrics() {
        let reference = [1.0f64, 0.0, 1.0, 0.0];
        let output = [0.5f64, 0.0, 0.5, 0.0];
        let report = lost_frame_metrics(&reference, &output, &[false], 4);
        assert_eq!(report.lost_frames, 1);
        assert_eq!(report.mean_mse, Some(0.125));
        let snr = report.seg_snr_db.unwrap();
        assert!((snr - 10.0 * 4.0f64.log10()).abs() < 1e-12, "snr {snr}");
        assert!((snr - 6.0206).abs() < 1e-3);
    }

    #[test]
    fn snr_is_clamped_at_both_ends() {
        let reference = [0.5f64; 8];
        let perfect = reference;
        let garbage = [100.0f64; 8];
        let avail = [false];

        let hi = lost_frame_metrics(&reference, &perfect, &avail, 8);
        assert_eq!(hi.seg_snr_db, Some(SNR_CEIL_DB));

        let lo = lost_frame_metrics(&reference, &garbage, &avail, 8);
        assert_eq!(lo.seg_snr_db, Some(SNR_FLOOR_DB));
    }

    #[test]
    fn silent_frames_are_flagged_and_excluded_from_snr() {
        let mut reference = vec![0.0f64; 8];
        reference.extend_from_slice(&[1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let output = vec![0.0f64; 16];
        let report = lost_frame_metrics(&reference, &output, &[false, false], 8);
        assert_eq!(report.lost_frames, 2);
        assert_eq!(report.silent_lost_frames, 1);
        assert!(report.per_frame[0].silent && report.per_frame[0].snr_db.is_none());
        assert_eq!(report.per_frame[0].mse, 0.0);
        // The non-silent frame: output all zeros, snr = 10*log10(4/4) = 0.
        assert_eq!(report.per_frame[1].snr_db, Some(0.0));
        assert_eq!(report.seg_snr_db, Some(0.0));
        assert_eq!(report.mean_mse, Some(0.25));
    }

    #[test]
    fn received_frames_are_ignored() {
        let reference = [1.0f64, 1.0, 0.3, 0.3];
        let output = [0.0f64, 0.0, 0.3, 0.3];
        let report = lost_frame_metrics(&reference, &output, &[false, true], 2);
        assert_eq!(report.lost_frames, 1);
        assert_eq!(report.per_frame[0].index, 0);

        let none = lost_frame_metrics(&reference, &output, &[true, true], 2);
        assert_eq!(none.lost_frames, 0);
        assert_eq!(none.mean_mse, None);
        assert_eq!(none.seg_snr_db, None);
    }

    #[test]
    fn zero_fill_silences_exactly_the_lost_frames() {
        let samples = synth::speech_like::<f32>(3, 8000, 40);
        let avail = [true, false, true, false, true];
        let stream = FrameStream::from_samples(&samples, 8, 8000).with_availability(&avail);
        let out = zero_fill(&stream);
        assert_eq!(out.len(), 40);
        for (i, &a) in avail.iter().enumerate() {
            let frame = &out[i * 8..(i + 1) * 8];
            if a {
                assert_eq!(frame, stream.frame(i));
            } else {
                assert!(frame.iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn periodic_baseline_reconstructs_a_pure_tone() {
        // 160 Hz at 8 kHz: exactly 50 samples per cycle, inside the pitch
        // search range, so repetition continues the waveform exactly.
        let samples = synth::sine::<f64>(160.0, 0.5, 8000, 80 * 12, 0.0);
        let mut avail = vec![true; 12];
        avail[6] = false;
        let stream = FrameStream::from_samples(&samples, 80, 8000).with_availability(&avail);
        let out = periodic_extrapolation(&stream, &PeriodicConfig::default());
        let report = lost_frame_metrics(stream.reference(), &out, &avail, 80);
        let snr = report.seg_snr_db.unwrap();
        assert!(snr > 30.0, "pure tone should extrapolate nearly perfectly, got {snr} dB");
    }

    #[test]
    fn long_bursts_decay_to_silence() {
        let samples = synth::sine::<f64>(160.0, 0.5, 8000, 80 * 12, 0.0);
        let mut avail = vec![true; 12];
        for a in avail.iter_mut().skip(4) {
            *a = false;
        }
        let stream = FrameStream::from_samples(&samples, 80, 8000).with_availability(&avail);
        let out = periodic_extrapolation(&stream, &PeriodicConfig::default());
        let frame_rms = |i: usize| {
            let f = &out[i * 80..(i + 1) * 80];
            (f.iter().map(|&x| x * x).sum::<f64>() / 80.0).sqrt()
        };
        // Gain steps 1.0, 0.8, 0.6, ... so each concealed frame is quieter.
        for i in 5..12 {
            assert!(
                frame_rms(i) <= frame_rms(i - 1) + 1e-9,
                "frame {i} rms {} vs {}",
                frame_rms(i),
                frame_rms(i - 1)
            );
        }
        assert_eq!(frame_rms(10), 0.0, "burst frame 7 and later are fully attenuated");
        assert!(frame_rms(5) > 0.1);
    }

    #[test]
    fn empty_history_yields_silence() {
        let samples = synth::sine::<f64>(160.0, 0.5, 8000, 80 * 3, 0.0);
        let avail = [false, true, true];
        let stream = FrameStream::from_samples(&samples, 80, 8000).with_availability(&avail);
        let out = periodic_extrapolation(&stream, &PeriodicConfig::default());
        assert!(out[..80].iter().all(|&x| x == 0.0));
        assert_eq!(&out[80..], &samples[80..]);
    }

    #[test]
    fn report_serializes_to_json_and_back() {
        let reference = [1.0f64, 0.0, 1.0, 0.0];
        let output = [0.5f64, 0.0, 0.5, 0.0];
        let mut report = lost_frame_metrics(&reference, &output, &[false], 4);
        report.meta = serde_json::json!({"input": "x.wav"});
        let text = serde_json::to_string(&report).unwrap();
        let back: MetricsReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.lost_frames, 1);
        assert_eq!(back.mean_mse, report.mean_mse);
        assert_eq!(back.meta["input"], "x.wav");
    }
}
