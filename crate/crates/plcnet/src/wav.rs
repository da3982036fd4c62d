//! Minimal WAV I/O: RIFF/WAVE, PCM, 16-bit, mono. Nothing else.
//!
//! Scaling is asymmetric on purpose: reading divides by 32768 so the full
//! int16 range maps into [-1, 1) with -32768 landing exactly on -1.0;
//! writing multiplies by 32767 (round half away from zero, then clamp) so
//! +1.0 never overflows. One read-write cycle can therefore move a sample
//! by at most one LSB; samples within half of full scale survive exactly.
//!
//! Unknown chunks are skipped (with the RIFF odd-length pad byte), so files
//! carrying LIST/INFO metadata read fine. The writer always emits the
//! canonical 44-byte header.

use std::fs;
use std::path::Path;

use crate::engine::FrameStream;
use crate::numerics::Scalar;
use crate::{PlcError, Result};

/// Decoded audio: normalized samples plus the file's sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioBuffer<S> {
    pub samples: Vec<S>,
    pub sample_rate: u32,
}

impl<S: Scalar> AudioBuffer<S> {
    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

fn u16_at(bytes: &[u8], pos: usize) -> u16 {
    u16::from_le_bytes([bytes[pos], bytes[pos + 1]])
}

fn u32_at(bytes: &[u8], pos: usize) -> u32 {
    u32::from_le_bytes([bytes[pos], bytes[pos + 1], bytes[pos + 2], bytes[pos + 3]])
}

/// Reads a PCM 16-bit mono WAV file. `int16 / 32768`, exactly.
pub fn read_wav<S: Scalar>(path: impl AsRef<Path>) -> Result<AudioBuffer<S>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| PlcError::io(path, e))?;
    let malformed = |detail: &str| PlcError::WavFormat { path: path.into(), detail: detail.into() };

    if bytes.len() < 12 {
        return Err(malformed("file too small for a RIFF header"));
    }
    if &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(malformed("not a RIFF/WAVE file"));
    }

    let mut pos = 12usize;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(&bytes, pos + 4) as usize;
        let body = pos + 8;
        if body + size > bytes.len() {
            return Err(malformed(&format!(
                "chunk {:?} claims {size} bytes but the file ends early",
                String::from_utf8_lossy(id)
            )));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(malformed("fmt chunk shorter than 16 bytes"));
                }
                let tag = u16_at(&bytes, body);
                let channels = u16_at(&bytes, body + 2);
                let rate = u32_at(&bytes, body + 4);
                let bits = u16_at(&bytes, body + 14);
                fmt = Some((tag, channels, rate, bits));
            }
            b"data" => {
                let (tag, channels, rate, bits) = fmt.ok_or_else(|| malformed("data chunk before fmt chunk"))?;
                let unsupported = |detail: String| PlcError::WavUnsupported { path: path.into(), detail };
                if tag != 1 {
                    return Err(unsupported(format!("format tag {tag}; only uncompressed PCM (tag 1) is supported")));
                }
                if channels != 1 {
                    return Err(unsupported(format!("expected mono, file has {channels} channels")));
                }
                if bits != 16 {
                    return Err(unsupported(format!("expected 16 bits per sample, file has {bits}")));
                }
                if size % 2 != 0 {
                    return Err(malformed("data chunk length is odd for 16-bit samples"));
                }
                let samples = bytes[body..body + size]
                    .chunks_exact(2)
                    .map(|b| S::from_f64(i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0))
                    .collect();
                return Ok(AudioBuffer { samples, sample_rate: rate });
            }
            _ => {}
        }
        pos = body + size + (size & 1);
    }
    Err(malformed("no data chunk found"))
}

/// `round(sample * 32767)` half away from zero, clamped to [-32767, 32767].
/// The writer never emits -32768; anything at or below -1.0 maps to -32767.
fn quantize<S: Scalar>(s: S) -> i16 {
    let v = (s.to_f64_lossy() * 32767.0).round();
    v.clamp(-32767.0, 32767.0) as i16
}

/// Writes a canonical 44-byte-header PCM 16-bit mono WAV file.
pub fn write_wav<S: Scalar>(buf: &AudioBuffer<S>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let data_len = (buf.samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&buf.sample_rate.to_le_bytes());
    out.extend_from_slice(&(buf.sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &buf.samples {
        out.extend_from_slice(&quantize(s).to_le_bytes());
    }
    fs::write(path, out).map_err(|e| PlcError::io(path, e))
}

/// Splits a buffer into complete frames of `frame_len` samples, all marked
/// available. Returns the stream and the count of trailing samples that did
/// not fill a frame and were dropped.
pub fn segment_frames<S: Scalar>(buf: &AudioBuffer<S>, frame_len: usize) -> (FrameStream<S>, usize) {
    assert!(frame_len > 0, "frame_len must be positive");
    let whole = buf.samples.len() / frame_len * frame_len;
    let dropped = buf.samples.len() - whole;
    (FrameStream::from_samples(&buf.samples[..whole], frame_len, buf.sample_rate), dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;
    use std::io::Write;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("plcnet-wav-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    /// Hand-assembled file so the reader is tested against raw bytes, not
    /// against our own writer.
    fn raw_wav(ints: &[i16], rate: u32, extra_chunk: bool) -> Vec<u8> {
        let mut data = Vec::new();
        for &i in ints {
            data.extend_from_slice(&i.to_le_bytes());
        }
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&0u32.to_le_bytes()); // deliberately lazy size
        out.extend_from_slice(b"WAVE");
        if extra_chunk {
            out.extend_from_slice(b"LIST");
            out.extend_from_slice(&5u32.to_le_bytes());
            out.extend_from_slice(b"INFOx"); // odd length, needs a pad byte
            out.push(0);
        }
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * 2).to_le_bytes());
        out.extend_from_slice(&2u16.to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(&data);
        out
    }

    #[test]
    fn reads_fixed_point_scaling_exactly() {
        let p = tmp("scaling.wav");
        std::fs::write(&p, raw_wav(&[0, 16384, -32768], 8000, false)).unwrap();
        let buf = read_wav::<f64>(&p).unwrap();
        assert_eq!(buf.sample_rate, 8000);
        assert_eq!(buf.samples, vec![0.0, 0.5, -1.0]);
    }

    #[test]
    fn skips_unknown_chunks_with_odd_padding() {
        let p = tmp("chunked.wav");
        std::fs::write(&p, raw_wav(&[100, -100], 16000, true)).unwrap();
        let buf = read_wav::<f32>(&p).unwrap();
        assert_eq!(buf.sample_rate, 16000);
        assert_eq!(buf.samples.len(), 2);
    }

    #[test]
    fn empty_data_chunk_is_a_valid_empty_buffer() {
        let p = tmp("empty.wav");
        std::fs::write(&p, raw_wav(&[], 8000, false)).unwrap();
        let buf = read_wav::<f32>(&p).unwrap();
        assert!(buf.samples.is_empty());
    }

    #[test]
    fn write_clamps_and_scales_endpoints() {
        let p = tmp("endpoints.wav");
        write_wav(&AudioBuffer { samples: vec![1.0f64, -1.0, 0.0, 2.0, -2.0], sample_rate: 8000 }, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let ints: Vec<i16> =
            bytes[44..].chunks_exact(2).map(|b| i16::from_le_bytes([b[0], b[1]])).collect();
        assert_eq!(ints, vec![32767, -32767, 0, 32767, -32767]);
    }

    #[test]
    fn header_arithmetic_for_one_second() {
        let p = tmp("second.wav");
        let buf = AudioBuffer { samples: vec![0.25f32; 8000], sample_rate: 8000 };
        write_wav(&buf, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 44 + 16000);
        assert_eq!(u32_at(&bytes, 4), 36 + 16000); // RIFF size
        assert_eq!(u32_at(&bytes, 24), 8000); // sample rate
        assert_eq!(u32_at(&bytes, 28), 16000); // byte rate
        assert_eq!(u32_at(&bytes, 40), 16000); // data size
        let back = read_wav::<f32>(&p).unwrap();
        assert!((back.duration_secs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn round_trip_is_exact_within_half_full_scale() {
        // Generated file whose samples stay within +-0.5: one decode-encode
        // cycle must reproduce the integer samples bit for bit.
        let p1 = tmp("rt1.wav");
        let p2 = tmp("rt2.wav");
        let mut rng = SeededRng::new(20);
        let ints: Vec<i16> = (0..2000).map(|_| rng.uniform(-16384.0, 16384.0) as i16).collect();
        std::fs::write(&p1, raw_wav(&ints, 8000, false)).unwrap();

        let first = read_wav::<f32>(&p1).unwrap();
        write_wav(&first, &p2).unwrap();
        let second = read_wav::<f32>(&p2).unwrap();
        assert_eq!(first.samples, second.samples, "round trip must be exact here");
    }

    #[test]
    fn round_trip_never_moves_a_sample_more_than_one_lsb() {
        // Full int16 sweep. The asymmetric 32768/32767 scaling can shift
        // large-magnitude samples by one code; never more.
        for i in (i16::MIN as i32..=i16::MAX as i32).step_by(1) {
            let s = i as f64 / 32768.0;
            let back = quantize(s) as i32;
            assert!((back - i).abs() <= 1, "{i} -> {back}");
        }
    }

    #[test]
    fn rejects_stereo_with_channel_count_in_message() {
        let p = tmp("stereo.wav");
        let mut bytes = raw_wav(&[1, 2, 3, 4], 8000, false);
        // Patch the channel count field (offset 22 without extra chunks).
        bytes[22] = 2;
        std::fs::write(&p, bytes).unwrap();
        match read_wav::<f32>(&p) {
            Err(PlcError::WavUnsupported { detail, .. }) => {
                assert!(detail.contains("2 channels"), "message was: {detail}")
            }
            other => panic!("expected unsupported error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_non_pcm_encoding() {
        let p = tmp("alaw.wav");
        let mut bytes = raw_wav(&[1, 2], 8000, false);
        bytes[20] = 6; // A-law format tag
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(read_wav::<f32>(&p), Err(PlcError::WavUnsupported { .. })));
    }

    #[test]
    fn rejects_truncated_and_malformed_files() {
        let p = tmp("trunc.wav");
        let bytes = raw_wav(&[1, 2, 3, 4], 8000, false);
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_wav::<f32>(&p), Err(PlcError::WavFormat { .. })));

        let p2 = tmp("notwav.wav");
        let mut f = std::fs::File::create(&p2).unwrap();
        f.write_all(b"definitely not a wav file").unwrap();
        assert!(matches!(read_wav::<f32>(&p2), Err(PlcError::WavFormat { .. })));

        let p3 = tmp("missing.wav");
        let _ = std::fs::remove_file(&p3);
        assert!(matches!(read_wav::<f32>(&p3), Err(PlcError::Io { .. })));
    }

    #[test]
    fn segment_frames_drops_the_tail() {
        let buf = AudioBuffer { samples: (0..107).map(|i| i as f32 / 200.0).collect(), sample_rate: 8000 };
        let (stream, dropped) = segment_frames(&buf, 20);
        assert_eq!(stream.num_frames(), 5);
        assert_eq!(dropped, 7);
        assert!(stream.availability().iter().all(|&a| a));
        assert_eq!(stream.frame(4)[19], 99.0 / 200.0);
    }
}
