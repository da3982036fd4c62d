//! Self-describing binary checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "PLCN"  magic
//! u16     format version (currently 1)
//! config  frame_len, window_len, time_steps, hidden, num_layers, passes
//!         (u32 each), seed (u64), supervision (u8), rollout (u8),
//!         init_bound (f64), adam alpha/beta1/beta2/epsilon (f64 each),
//!         clip flag (u8) + clip_norm (f64, present when flag = 1)
//! meta    corpus_hash (u64), epochs (u32)
//! tensors count (u32), then per tensor: name_len (u16), name bytes,
//!         rows (u32), cols (u32), rows*cols f32 values
//! adam    flag (u8); when 1: t (u64), then the m tensors and the v tensors
//!         as two tensor lists with the same names as the parameters
//! u32     CRC-32 (IEEE) of every preceding byte
//! ```
//!
//! Tensors appear as `layers.{i}.w_in`, `layers.{i}.w_rec`, `layers.{i}.bias`
//! (bias stored as a rows x 1 matrix), then `head.w_out`, `head.b_out`. The
//! loader verifies the checksum before touching any field, then requires the
//! exact expected names, order, and shapes, so a truncated, corrupted, or
//! reshuffled file fails loudly instead of producing a subtly wrong model.
//!
//! Values are stored as f32 regardless of the runtime scalar; saving an f64
//! network truncates, loading into f64 widens. A save/load/save cycle is
//! byte-identical.

use std::path::Path;

use crate::adam::AdamState;
use crate::lstm::{Gradients, LayerGradients, LstmLayerParams, NetworkParams};
use crate::numerics::{Matrix, Scalar};
use crate::predictor::{PredictorConfig, RolloutMode, Supervision};
use crate::{PlcError, Result};

pub const FORMAT_VERSION: u16 = 1;
const MAGIC: &[u8; 4] = b"PLCN";

/// Provenance counters carried alongside the weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct CheckpointMeta {
    /// Fingerprint of the pretraining corpus, 0 when untrained.
    pub corpus_hash: u64,
    /// Completed pretraining epochs.
    pub epochs: u32,
}

/// Everything a checkpoint file holds.
#[derive(Clone, Debug)]
pub struct Checkpoint<S: Scalar> {
    pub config: PredictorConfig,
    pub meta: CheckpointMeta,
    pub net: NetworkParams<S>,
    pub opt: Option<AdamState<S>>,
}

/// FNV-1a over the f32 bit patterns of each stream, with stream lengths
/// mixed in so reordering or splitting the corpus changes the hash.
pub fn corpus_fingerprint<S: Scalar>(streams: &[impl AsRef<[S]>]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    for stream in streams {
        let stream = stream.as_ref();
        eat(&(stream.len() as u64).to_le_bytes());
        for &s in stream {
            eat(&(s.to_f64_lossy() as f32).to_bits().to_le_bytes());
        }
    }
    h
}

const fn crc32_table() -> [u32; 256] {
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let mut c = i as u32;
        let mut k = 0;
        while k < 8 {
            c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
            k += 1;
        }
        table[i] = c;
        i += 1;
    }
    table
}

static CRC_TABLE: [u32; 256] = crc32_table();

pub(crate) fn crc32(bytes: &[u8]) -> u32 {
    let mut c = 0xFFFF_FFFFu32;
    for &b in bytes {
        c = CRC_TABLE[((c ^ b as u32) & 0xFF) as usize] ^ (c >> 8);
    }
    c ^ 0xFFFF_FFFF
}

fn push_tensor<S: Scalar>(out: &mut Vec<u8>, name: &str, rows: usize, cols: usize, data: &[S]) {
    debug_assert_eq!(rows * cols, data.len());
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for &v in data {
        out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
    }
}

/// The (name, rows, cols) sequence a network of this shape serializes to.
fn expected_tensors(cfg: &PredictorConfig) -> Vec<(String, usize, usize)> {
    let mut spec = Vec::new();
    for i in 0..cfg.num_layers {
        let input = if i == 0 { cfg.window_len } else { cfg.hidden };
        spec.push((format!("layers.{i}.w_in"), 4 * cfg.hidden, input));
        spec.push((format!("layers.{i}.w_rec"), 4 * cfg.hidden, cfg.hidden));
        spec.push((format!("layers.{i}.bias"), 4 * cfg.hidden, 1));
    }
    spec.push(("head.w_out".into(), 1, cfg.hidden));
    spec.push(("head.b_out".into(), 1, 1));
    spec
}

fn push_param_tensors<S: Scalar>(out: &mut Vec<u8>, net: &NetworkParams<S>) {
    out.extend_from_slice(&((net.layers.len() * 3 + 2) as u32).to_le_bytes());
    for (i, layer) in net.layers.iter().enumerate() {
        let w_in = &layer.w_in;
        let w_rec = &layer.w_rec;
        push_tensor(out, &format!("layers.{i}.w_in"), w_in.rows(), w_in.cols(), w_in.data());
        push_tensor(out, &format!("layers.{i}.w_rec"), w_rec.rows(), w_rec.cols(), w_rec.data());
        push_tensor(out, &format!("layers.{i}.bias"), layer.bias.len(), 1, &layer.bias);
    }
    push_tensor(out, "head.w_out", 1, net.w_out.len(), &net.w_out);
    push_tensor(out, "head.b_out", 1, 1, &[net.b_out]);
}

fn push_grad_tensors<S: Scalar>(out: &mut Vec<u8>, g: &Gradients<S>) {
    out.extend_from_slice(&((g.layers.len() * 3 + 2) as u32).to_le_bytes());
    for (i, layer) in g.layers.iter().enumerate() {
        let w_in = &layer.w_in;
        let w_rec = &layer.w_rec;
        push_tensor(out, &format!("layers.{i}.w_in"), w_in.rows(), w_in.cols(), w_in.data());
        push_tensor(out, &format!("layers.{i}.w_rec"), w_rec.rows(), w_rec.cols(), w_rec.data());
        push_tensor(out, &format!("layers.{i}.bias"), layer.bias.len(), 1, &layer.bias);
    }
    push_tensor(out, "head.w_out", 1, g.w_out.len(), &g.w_out);
    push_tensor(out, "head.b_out", 1, 1, &[g.b_out]);
}

fn encode<S: Scalar>(ckpt: &Checkpoint<S>) -> Vec<u8> {
    let cfg = &ckpt.config;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());

    for v in [cfg.frame_len, cfg.window_len, cfg.time_steps, cfg.hidden, cfg.num_layers, cfg.passes] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&cfg.seed.to_le_bytes());
    out.push(match cfg.supervision {
        Supervision::FinalStep => 0,
        Supervision::AllSteps => 1,
    });
    out.push(match cfg.rollout {
        RolloutMode::Carried => 0,
        RolloutMode::Fresh => 1,
    });
    out.extend_from_slice(&cfg.init_bound.to_le_bytes());
    for v in [cfg.adam.alpha, cfg.adam.beta1, cfg.adam.beta2, cfg.adam.epsilon] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    match cfg.adam.clip_norm {
        Some(c) => {
            out.push(1);
            out.extend_from_slice(&c.to_le_bytes());
        }
        None => out.push(0),
    }

    out.extend_from_slice(&ckpt.meta.corpus_hash.to_le_bytes());
    out.extend_from_slice(&ckpt.meta.epochs.to_le_bytes());

    push_param_tensors(&mut out, &ckpt.net);

    match &ckpt.opt {
        Some(opt) => {
            out.push(1);
            out.extend_from_slice(&opt.t.to_le_bytes());
            push_grad_tensors(&mut out, &opt.m);
            push_grad_tensors(&mut out, &opt.v);
        }
        None => out.push(0),
    }

    let crc = crc32(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn save_checkpoint<S: Scalar>(ckpt: &Checkpoint<S>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(ckpt)).map_err(|e| PlcError::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(PlcError::CheckpointIntegrity {
                path: self.path.to_path_buf(),
                detail: format!("unexpected end of data at byte {}", self.pos),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn bad(&self, detail: impl Into<String>) -> PlcError {
        PlcError::CheckpointIntegrity { path: self.path.to_path_buf(), detail: detail.into() }
    }

    /// Reads one tensor record and checks it against the expectation.
    fn tensor<S: Scalar>(&mut self, name: &str, rows: usize, cols: usize) -> Result<Vec<S>> {
        let name_len = self.u16()? as usize;
        let got_name = std::str::from_utf8(self.take(name_len)?)
            .map_err(|_| self.bad("tensor name is not valid UTF-8"))?;
        if got_name != name {
            return Err(self.bad(format!("expected tensor \"{name}\", found \"{got_name}\"")));
        }
        let got_rows = self.u32()? as usize;
        let got_cols = self.u32()? as usize;
        if got_rows != rows || got_cols != cols {
            return Err(self.bad(format!(
                "tensor \"{name}\" has shape {got_rows}x{got_cols}, expected {rows}x{cols}"
            )));
        }
        let raw = self.take(rows * cols * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| S::from_f64(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect())
    }

    /// Reads a full tensor list against the expected layout and rebuilds the
    /// per-layer triples plus head weights.
    fn tensor_list<S: Scalar>(
        &mut self,
        cfg: &PredictorConfig,
    ) -> Result<(Vec<(Matrix<S>, Matrix<S>, Vec<S>)>, Vec<S>, S)> {
        let spec = expected_tensors(cfg);
        let count = self.u32()? as usize;
        if count != spec.len() {
            return Err(self.bad(format!("{} tensors listed, expected {}", count, spec.len())));
        }
        let mut layers = Vec::with_capacity(cfg.num_layers);
        for i in 0..cfg.num_layers {
            let (n0, r0, c0) = &spec[i * 3];
            let (n1, r1, c1) = &spec[i * 3 + 1];
            let (n2, r2, _) = &spec[i * 3 + 2];
            let w_in = Matrix::from_vec(*r0, *c0, self.tensor(n0, *r0, *c0)?);
            let w_rec = Matrix::from_vec(*r1, *c1, self.tensor(n1, *r1, *c1)?);
            let bias = self.tensor(n2, *r2, 1)?;
            layers.push((w_in, w_rec, bias));
        }
        let (hn, hr, hc) = &spec[spec.len() - 2];
        let w_out = self.tensor(hn, *hr, *hc)?;
        let (bn, br, bc) = &spec[spec.len() - 1];
        let b_out = self.tensor(bn, *br, *bc)?[0];
        Ok((layers, w_out, b_out))
    }
}

pub fn load_checkpoint<S: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<S>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| PlcError::io(path, e))?;

    let integrity = |detail: &str| PlcError::CheckpointIntegrity {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    };

    if bytes.len() < MAGIC.len() + 2 + 4 {
        return Err(integrity("file is too short to be a checkpoint"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored_crc = u32::from_le_bytes(tail.try_into().unwrap());
    let actual_crc = crc32(body);
    if stored_crc != actual_crc {
        return Err(integrity(&format!(
            "checksum mismatch (stored {stored_crc:#010x}, computed {actual_crc:#010x})"
        )));
    }
    if &body[..4] != MAGIC {
        return Err(integrity("bad magic bytes"));
    }
    let version = u16::from_le_bytes(body[4..6].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(PlcError::CheckpointVersion {
            path: path.to_path_buf(),
            found: version,
            supported: FORMAT_VERSION,
        });
    }

    let mut cur = Cursor { bytes: body, pos: 6, path };

    let frame_len = cur.u32()? as usize;
    let window_len = cur.u32()? as usize;
    let time_steps = cur.u32()? as usize;
    let hidden = cur.u32()? as usize;
    let num_layers = cur.u32()? as usize;
    let passes = cur.u32()? as usize;
    let seed = cur.u64()?;
    let supervision = match cur.u8()? {
        0 => Supervision::FinalStep,
        1 => Supervision::AllSteps,
        v => return Err(cur.bad(format!("unknown supervision tag {v}"))),
    };
    let rollout = match cur.u8()? {
        0 => RolloutMode::Carried,
        1 => RolloutMode::Fresh,
        v => return Err(cur.bad(format!("unknown rollout tag {v}"))),
    };
    let init_bound = cur.f64()?;
    let mut adam = crate::adam::AdamConfig::default();
    adam.alpha = cur.f64()?;
    adam.beta1 = cur.f64()?;
    adam.beta2 = cur.f64()?;
    adam.epsilon = cur.f64()?;
    adam.clip_norm = match cur.u8()? {
        0 => None,
        1 => Some(cur.f64()?),
        v => return Err(cur.bad(format!("unknown clip flag {v}"))),
    };

    let config = PredictorConfig {
        frame_len,
        window_len,
        time_steps,
        hidden,
        num_layers,
        passes,
        adam,
        init_bound,
        seed,
        supervision,
        rollout,
    };
    config.validate()?;

    let meta = CheckpointMeta { corpus_hash: cur.u64()?, epochs: cur.u32()? };

    let (layer_parts, w_out, b_out) = cur.tensor_list::<S>(&config)?;
    let layers = layer_parts
        .into_iter()
        .map(|(w_in, w_rec, bias)| LstmLayerParams::from_parts(w_in, w_rec, bias))
        .collect::<Result<Vec<_>>>()?;
    let net = NetworkParams::from_parts(layers, w_out, b_out)?;

    let opt = match cur.u8()? {
        0 => None,
        1 => {
            let t = cur.u64()?;
            let (m_layers, m_w_out, m_b_out) = cur.tensor_list::<S>(&config)?;
            let (v_layers, v_w_out, v_b_out) = cur.tensor_list::<S>(&config)?;
            let to_grads = |parts: Vec<(Matrix<S>, Matrix<S>, Vec<S>)>, w_out, b_out| Gradients {
                layers: parts
                    .into_iter()
                    .map(|(w_in, w_rec, bias)| LayerGradients { w_in, w_rec, bias })
                    .collect(),
                w_out,
                b_out,
            };
            Some(AdamState {
                m: to_grads(m_layers, m_w_out, m_b_out),
                v: to_grads(v_layers, v_w_out, v_b_out),
                t,
            })
        }
        v => return Err(cur.bad(format!("unknown optimizer flag {v}"))),
    };

    if cur.pos != body.len() {
        return Err(cur.bad(format!("{} trailing bytes after the optimizer block", body.len() - cur.pos)));
    }

    Ok(Checkpoint { config, meta, net, opt })
}
