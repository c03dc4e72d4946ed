//! Bi-level credit assignment: group-relative trajectory advantages,
//! rationale-class advantage modulation, token-level broadcast, the clipped
//! surrogate objective with asymmetric (clip-higher) bounds, and the
//! zero-variance group filter used by dynamic sampling.

use crate::reward::RewardBreakdown;
use crate::trace::Trace;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CreditError {
    #[error("modulator params violate the amplify/attenuate contract: {0}")]
    InvalidModulator(String),
    #[error("breakdown lists {fid} fidelity entries but the trace has {zooms} zoom steps")]
    MisalignedBreakdown { fid: usize, zooms: usize },
    #[error("token segmentation covers {seg} steps but the profile has {steps}")]
    BadSegmentation { seg: usize, steps: usize },
    #[error("importance ratio must be positive, got {0}")]
    NonPositiveRatio(f64),
}

/// Rationale class of a step, from the sign of its fidelity reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepClass {
    Textual,
    GoodVisual,
    BadVisual,
}

/// The four-cell advantage modulator table, indexed by rationale class and
/// the sign of the trajectory advantage.
///
/// In advantageous trajectories, credit is amplified for good visual
/// rationales and attenuated for bad ones; in disadvantageous trajectories,
/// blame is amplified for bad visual rationales and mitigated for good ones.
/// Textual steps always keep the unmodulated advantage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulatorParams {
    pub h_good_pos: f64,
    pub h_bad_pos: f64,
    pub h_good_neg: f64,
    pub h_bad_neg: f64,
}

impl ModulatorParams {
    pub fn new(
        h_good_pos: f64,
        h_bad_pos: f64,
        h_good_neg: f64,
        h_bad_neg: f64,
    ) -> Result<Self, CreditError> {
        let p = Self {
            h_good_pos,
            h_bad_pos,
            h_good_neg,
            h_bad_neg,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CreditError> {
        let all = [
            self.h_good_pos,
            self.h_bad_pos,
            self.h_good_neg,
            self.h_bad_neg,
        ];
        if all.iter().any(|h| !h.is_finite() || *h <= 0.0) {
            return Err(CreditError::InvalidModulator(
                "all multipliers must be finite and positive".into(),
            ));
        }
        if !(self.h_good_pos > 1.0 && 1.0 > self.h_bad_pos) {
            return Err(CreditError::InvalidModulator(format!(
                "need h_good_pos > 1 > h_bad_pos, got {} and {}",
                self.h_good_pos, self.h_bad_pos
            )));
        }
        if !(self.h_bad_neg > 1.0 && 1.0 > self.h_good_neg) {
            return Err(CreditError::InvalidModulator(format!(
                "need h_bad_neg > 1 > h_good_neg, got {} and {}",
                self.h_bad_neg, self.h_good_neg
            )));
        }
        Ok(())
    }
}

impl Default for ModulatorParams {
    fn default() -> Self {
        Self {
            h_good_pos: 1.2,
            h_bad_pos: 0.6,
            h_good_neg: 0.6,
            h_bad_neg: 1.2,
        }
    }
}

/// All rollouts of one prompt, scored.
#[derive(Debug, Clone)]
pub struct GroupRollout {
    pub task_id: String,
    pub rollouts: Vec<(Trace, RewardBreakdown)>,
}

impl GroupRollout {
    pub fn rewards(&self) -> Vec<f64> {
        self.rollouts.iter().map(|(_, b)| b.r_total).collect()
    }
}

/// Per-step adjusted advantage entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepAdvantage {
    pub step_index: usize,
    pub class: StepClass,
    pub a_hat: f64,
}

/// Trajectory advantage together with its per-step (and optionally per-token)
/// modulated form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageProfile {
    pub a_traj: f64,
    pub per_step: Vec<StepAdvantage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_token: Option<Vec<f64>>,
}

impl AdvantageProfile {
    /// Uniform credit: every step keeps the trajectory advantage. This is the
    /// baseline behavior when advantage modulation is disabled.
    pub fn uniform(a_traj: f64, classes: &[StepClass]) -> Self {
        Self {
            a_traj,
            per_step: classes
                .iter()
                .enumerate()
                .map(|(i, &class)| StepAdvantage {
                    step_index: i,
                    class,
                    a_hat: a_traj,
                })
                .collect(),
            per_token: None,
        }
    }
}

/// Group-relative trajectory advantages: each reward minus the group mean.
/// The output sums to zero up to floating-point error.
pub fn group_advantages(rewards: &[f64]) -> Vec<f64> {
    if rewards.is_empty() {
        return Vec::new();
    }
    let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
    rewards.iter().map(|r| r - mean).collect()
}

/// Mean-centered advantages additionally scaled by the group standard
/// deviation (comparison variant; the default pipeline uses plain mean
/// subtraction).
pub fn group_advantages_std_normalized(rewards: &[f64]) -> Vec<f64> {
    let centered = group_advantages(rewards);
    if centered.is_empty() {
        return centered;
    }
    let var = centered.iter().map(|a| a * a).sum::<f64>() / centered.len() as f64;
    let std = var.sqrt();
    if std <= 1e-12 {
        return vec![0.0; centered.len()];
    }
    centered.iter().map(|a| a / std).collect()
}

/// Classifies every step of a trace: a visual step is good iff its fidelity
/// reward is strictly positive; non-visual steps are textual.
pub fn classify_steps(
    trace: &Trace,
    breakdown: &RewardBreakdown,
) -> Result<Vec<StepClass>, CreditError> {
    let zooms = trace.zoom_count();
    if breakdown.per_step_fid.len() != zooms {
        return Err(CreditError::MisalignedBreakdown {
            fid: breakdown.per_step_fid.len(),
            zooms,
        });
    }
    let mut classes = Vec::with_capacity(trace.steps.len());
    let mut zoom_ix = 0usize;
    for step in &trace.steps {
        if step.is_zoom() {
            let fid = breakdown.per_step_fid[zoom_ix];
            zoom_ix += 1;
            classes.push(if fid > 0.0 {
                StepClass::GoodVisual
            } else {
                StepClass::BadVisual
            });
        } else {
            classes.push(StepClass::Textual);
        }
    }
    Ok(classes)
}

/// Modulates a trajectory advantage into per-step adjusted advantages.
///
/// The multiplier is looked up in the four-cell table by (class, sign of the
/// trajectory advantage); textual steps use 1. A zero trajectory advantage
/// yields zero everywhere.
pub fn modulate(a_traj: f64, classes: &[StepClass], p: &ModulatorParams) -> AdvantageProfile {
    let positive = a_traj > 0.0;
    let per_step = classes
        .iter()
        .enumerate()
        .map(|(i, &class)| {
            let h = match class {
                StepClass::Textual => 1.0,
                StepClass::GoodVisual => {
                    if positive {
                        p.h_good_pos
                    } else {
                        p.h_good_neg
                    }
                }
                StepClass::BadVisual => {
                    if positive {
                        p.h_bad_pos
                    } else {
                        p.h_bad_neg
                    }
                }
            };
            StepAdvantage {
                step_index: i,
                class,
                a_hat: if a_traj == 0.0 { 0.0 } else { a_traj * h },
            }
        })
        .collect();
    AdvantageProfile {
        a_traj,
        per_step,
        per_token: None,
    }
}

/// Broadcasts per-step advantages to tokens: every token of step `t` receives
/// that step's adjusted advantage. `seg` lists `(step_index, token_count)`
/// and must cover every step exactly once, in order.
pub fn broadcast_to_tokens(
    profile: &AdvantageProfile,
    seg: &[(usize, usize)],
) -> Result<Vec<f64>, CreditError> {
    if seg.len() != profile.per_step.len()
        || seg
            .iter()
            .zip(&profile.per_step)
            .any(|(&(ix, _), step)| ix != step.step_index)
    {
        return Err(CreditError::BadSegmentation {
            seg: seg.len(),
            steps: profile.per_step.len(),
        });
    }
    let total: usize = seg.iter().map(|&(_, n)| n).sum();
    let mut out = Vec::with_capacity(total);
    for (&(_, count), step) in seg.iter().zip(&profile.per_step) {
        out.extend(std::iter::repeat(step.a_hat).take(count));
    }
    Ok(out)
}

/// Per-token clipped surrogate value to be maximized:
/// `min(ratio * a_hat, clip(ratio, 1 - eps_low, 1 + eps_high) * a_hat)`.
///
/// Asymmetric bounds implement clip-higher (`eps_high >= eps_low` eases
/// positive-advantage updates). With `eps_low == eps_high` this is the
/// textbook symmetric clip.
pub fn clipped_surrogate(
    ratio: f64,
    a_hat: f64,
    eps_low: f64,
    eps_high: f64,
) -> Result<f64, CreditError> {
    if !(ratio > 0.0) {
        return Err(CreditError::NonPositiveRatio(ratio));
    }
    let clipped = ratio.clamp(1.0 - eps_low, 1.0 + eps_high);
    Ok((ratio * a_hat).min(clipped * a_hat))
}

/// Dynamic-sampling group filter: a group is kept iff its trajectory rewards
/// are not all equal. Zero-variance groups contribute no gradient and are
/// replaced by fresh sampling in the driver.
pub fn dynamic_sample_filter(group: &GroupRollout) -> bool {
    let rewards = group.rewards();
    match rewards.first() {
        None => false,
        Some(first) => rewards.iter().any(|r| r != first),
    }
}
