//! Velocity, contrastive and orthogonality losses, recorded on a tape.

use serde::{Deserialize, Serialize};

use crate::network::FeatureBundle;
use crate::tensor::{Result, Tape, TensorError, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_v: f64,
    pub lambda_c: f64,
    pub lambda_o: f64,
    pub tau: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_v: 1.0,
            lambda_c: 0.2,
            lambda_o: 0.05,
            tau: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("lambda_v", self.lambda_v),
            ("lambda_c", self.lambda_c),
            ("lambda_o", self.lambda_o),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(format!("tau must be positive, got {}", self.tau));
        }
        Ok(())
    }
}

/// How the orthogonality terms are summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrthMode {
    /// Plain sum of cosine similarities; can be negative.
    #[default]
    Literal,
    /// Sum of `max(0, cos)`.
    Clamped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_vel: f64,
    pub l_con: f64,
    pub l_orth: f64,
    pub total: f64,
    /// MSE of each velocity head, aggregated head first.
    pub per_head_vel_mse: Vec<f64>,
    pub orth_mode: OrthMode,
}

/// Weighted sum of already computed loss values.
pub fn total_loss(l_vel: f64, l_con: f64, l_orth: f64, w: &LossWeights) -> LossReport {
    LossReport {
        l_vel,
        l_con,
        l_orth,
        total: w.lambda_v * l_vel + w.lambda_c * l_con + w.lambda_o * l_orth,
        per_head_vel_mse: Vec::new(),
        orth_mode: OrthMode::default(),
    }
}

/// Mean over heads of the per-head MSE (itself a mean over the two
/// components). Returns the loss and the per-head MSE variables.
pub fn velocity_loss(tape: &mut Tape, velocities: &[Var], target: Var) -> Result<(Var, Vec<Var>)> {
    if velocities.is_empty() {
        return Err(TensorError::Degenerate {
            op: "velocity_loss",
            reason: "no velocity heads".into(),
        });
    }
    let per_head = velocities
        .iter()
        .map(|&v| tape.mse(v, target))
        .collect::<Result<Vec<_>>>()?;
    let sum = tape.add_all(&per_head)?;
    Ok((tape.scale(sum, 1.0 / per_head.len() as f32), per_head))
}

/// InfoNCE over one window's features. For each device `j` the positive pair
/// is `(H^0, H^j)`; the negatives, shared by every `j`, are `(H^0, H^k_pr)`
/// for all `k` and `(H^i_pr, H^k_pr)` for unordered pairs `i < k`.
pub fn contrastive_loss(tape: &mut Tape, f: &FeatureBundle, tau: f64) -> Result<Var> {
    if f.private.len() != f.shared.len() {
        return Err(TensorError::Contract(format!(
            "contrastive loss needs one private feature per device ({} shared, {} private)",
            f.shared.len(),
            f.private.len()
        )));
    }
    let inv_tau = (1.0 / tau) as f32;
    let mut negatives = Vec::new();
    for &p in &f.private {
        negatives.push(tape.cosine_similarity(f.aggregated, p)?);
    }
    for i in 0..f.private.len() {
        for k in i + 1..f.private.len() {
            negatives.push(tape.cosine_similarity(f.private[i], f.private[k])?);
        }
    }
    // -log(s_pos / (s_pos + sum s_neg)) = log(1 + sum exp((c_neg - c_pos) / tau)),
    // which stays accurate when the positive dominates
    let mut terms = Vec::with_capacity(f.shared.len());
    for &h in &f.shared {
        let pos = tape.cosine_similarity(f.aggregated, h)?;
        let mut ratios = Vec::with_capacity(negatives.len());
        for &n in &negatives {
            let d = tape.sub(n, pos)?;
            let d = tape.scale(d, inv_tau);
            ratios.push(tape.exp(d));
        }
        let sum = tape.add_all(&ratios)?;
        terms.push(tape.log1p(sum)?);
    }
    tape.add_all(&terms)
}

/// Sum of cosines between private features of different devices and
/// between each device's shared and private features.
pub fn orthogonality_loss(tape: &mut Tape, f: &FeatureBundle, mode: OrthMode) -> Result<Var> {
    if f.private.len() != f.shared.len() || f.private.is_empty() {
        return Err(TensorError::Contract(format!(
            "orthogonality loss needs one private feature per device ({} shared, {} private)",
            f.shared.len(),
            f.private.len()
        )));
    }
    let mut terms = Vec::new();
    for i in 0..f.private.len() {
        for k in i + 1..f.private.len() {
            terms.push(tape.cosine_similarity(f.private[i], f.private[k])?);
        }
    }
    for (&h, &p) in f.shared.iter().zip(&f.private) {
        terms.push(tape.cosine_similarity(h, p)?);
    }
    if mode == OrthMode::Clamped {
        for t in &mut terms {
            *t = tape.relu(*t);
        }
    }
    tape.add_all(&terms)
}

/// Loss variables for one window.
#[derive(Debug, Clone)]
pub struct WindowLoss {
    pub total: Var,
    pub vel: Var,
    pub per_head: Vec<Var>,
    /// Absent when the contrastive terms are disabled.
    pub con: Option<Var>,
    pub orth: Option<Var>,
}

/// Combined loss of one window. With `contrastive` false only the velocity
/// term contributes.
pub fn window_loss(
    tape: &mut Tape,
    features: &FeatureBundle,
    velocities: &[Var],
    target: Var,
    w: &LossWeights,
    mode: OrthMode,
    contrastive: bool,
) -> Result<WindowLoss> {
    let (vel, per_head) = velocity_loss(tape, velocities, target)?;
    let mut parts = vec![tape.scale(vel, w.lambda_v as f32)];
    let (mut con, mut orth) = (None, None);
    if contrastive {
        let c = contrastive_loss(tape, features, w.tau)?;
        let o = orthogonality_loss(tape, features, mode)?;
        parts.push(tape.scale(c, w.lambda_c as f32));
        parts.push(tape.scale(o, w.lambda_o as f32));
        con = Some(c);
        orth = Some(o);
    }
    let total = tape.add_all(&parts)?;
    Ok(WindowLoss {
        total,
        vel,
        per_head,
        con,
        orth,
    })
}
