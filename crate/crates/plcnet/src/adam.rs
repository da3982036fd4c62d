//! Adam, in the original published form.
//!
//! Per step t (1-based) and per parameter theta with gradient g:
//!
//! ```text
//! m = b1*m + (1-b1)*g
//! v = b2*v + (1-b2)*g^2
//! m_hat = m / (1 - b1^t)
//! v_hat = v / (1 - b2^t)
//! theta -= alpha * m_hat / (sqrt(v_hat) + eps)
//! ```
//!
//! The bias corrections are applied unfused, exactly as written, so results
//! can be compared against an independent scalar implementation to tight
//! tolerances.

use serde::{Deserialize, Serialize};

use crate::lstm::{Gradients, NetworkParams};
use crate::numerics::Scalar;
use crate::{PlcError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global L2 gradient clipping threshold; `None` disables clipping.
    /// Online training defaults to 1.0, pretraining runs unclipped.
    /// In configuration files this is a plain number, with 0 meaning
    /// disabled (TOML cannot spell `None`).
    #[serde(with = "clip_serde")]
    pub clip_norm: Option<f64>,
}

mod clip_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(v.unwrap_or(0.0))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        let v = f64::deserialize(d)?;
        Ok(if v == 0.0 { None } else { Some(v) })
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { alpha: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, clip_norm: Some(1.0) }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(PlcError::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(PlcError::Config(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(PlcError::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if let Some(c) = self.clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return Err(PlcError::Config(format!("clip_norm must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

/// First and second moment estimates plus the step counter. Shapes mirror
/// the network. The state persists across frames during online training and
/// is reset at the pretraining/online boundary.
#[derive(Clone, Debug)]
pub struct AdamState<S> {
    pub m: Gradients<S>,
    pub v: Gradients<S>,
    /// Completed update count; the bias correction for the next update uses
    /// t + 1.
    pub t: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(net: &NetworkParams<S>) -> Self {
        AdamState { m: Gradients::zeros_like(net), v: Gradients::zeros_like(net), t: 0 }
    }

    /// Zeroes the moments and the step counter.
    pub fn reset(&mut self) {
        self.m.scale(S::zero());
        self.v.scale(S::zero());
        self.t = 0;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// The gradient contained NaN or infinity; parameters and optimizer
    /// state are untouched.
    SkippedNonFinite,
}

/// One Adam update of every tensor in place.
pub fn adam_step<S: Scalar>(
    params: &mut NetworkParams<S>,
    grads: &Gradients<S>,
    state: &mut AdamState<S>,
    cfg: &AdamConfig,
) -> StepOutcome {
    if !grads.all_finite() {
        return StepOutcome::SkippedNonFinite;
    }

    // Clipping scales the whole gradient so its global L2 norm is at most
    // clip_norm. The norm is accumulated in f64 regardless of S.
    let mut scale = 1.0f64;
    if let Some(clip) = cfg.clip_norm {
        let norm = grads.sq_norm().sqrt();
        if norm > clip {
            scale = clip / norm;
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);

    let b1 = S::from_f64(cfg.beta1);
    let b1c = S::from_f64(1.0 - cfg.beta1);
    let b2 = S::from_f64(cfg.beta2);
    let b2c = S::from_f64(1.0 - cfg.beta2);
    let alpha = S::from_f64(cfg.alpha);
    let eps = S::from_f64(cfg.epsilon);
    let inv_bc1 = S::from_f64(1.0 / bc1);
    let inv_bc2 = S::from_f64(1.0 / bc2);
    let gscale = S::from_f64(scale);

    let update = |theta: &mut [S], g: &[S], m: &mut [S], v: &mut [S]| {
        for (((th, &g0), m), v) in theta.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            let g = g0 * gscale;
            *m = b1 * *m + b1c * g;
            *v = b2 * *v + b2c * g * g;
            let m_hat = *m * inv_bc1;
            let v_hat = *v * inv_bc2;
            *th = *th - alpha * m_hat / (v_hat.sqrt() + eps);
        }
    };

    for ((lp, lg), (lm, lv)) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(state.m.layers.iter_mut().zip(state.v.layers.iter_mut()))
    {
        update(lp.w_in.data_mut(), lg.w_in.data(), lm.w_in.data_mut(), lv.w_in.data_mut());
        update(lp.w_rec.data_mut(), lg.w_rec.data(), lm.w_rec.data_mut(), lv.w_rec.data_mut());
        update(&mut lp.bias, &lg.bias, &mut lm.bias, &mut lv.bias);
    }
    update(&mut params.w_out, &grads.w_out, &mut state.m.w_out, &mut state.v.w_out);

    let mut b_out = [params.b_out];
    let mut mb = [state.m.b_out];
    let mut vb = [state.v.b_out];
    update(&mut b_out, &[grads.b_out], &mut mb, &mut vb);
    params.b_out = b_out[0];
    state.m.b_out = mb[0];
    state.v.b_out = vb[0];

    StepOutcome::Applied
}
