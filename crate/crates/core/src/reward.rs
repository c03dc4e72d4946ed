//! Scalar reward computation: per-step fidelity with a signed correctness
//! term and discrete refinement bonus, a smooth redundancy penalty over a
//! soft action budget, answer grading, the total-reward decomposition, and
//! the adaptive fidelity-threshold schedule.

use crate::geom::{iou, pad_box, BBox, GeomError};
use crate::task::Task;
use crate::trace::{format_reward, FormatParams, FormatVerdict, Trace, ZoomAction};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("answer key {0:?} is not among the task choices")]
    KeyNotInChoices(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// Parameters of the per-step fidelity reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityParams {
    /// Magnitude of the signed correctness term.
    pub r_base: f64,
    /// Refinement bonus granted per `dh` of alignment beyond `h0`.
    pub eta: f64,
    /// Soft alignment threshold separating good from bad zooms.
    pub h0: f64,
    /// Width of one refinement-bonus step.
    pub dh: f64,
}

impl Default for FidelityParams {
    fn default() -> Self {
        Self {
            r_base: 1.0,
            eta: 0.2,
            h0: 0.3,
            dh: 0.1,
        }
    }
}

/// Parameters of the redundancy penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RedundancyParams {
    /// Soft budget of zoom actions before the penalty ramps up.
    pub budget: usize,
    /// Penalty scale.
    pub lambda: f64,
    /// IoU above which two zooms count as repetitive.
    pub dup_iou: f64,
}

impl Default for RedundancyParams {
    fn default() -> Self {
        Self {
            budget: 2,
            lambda: 0.1,
            dup_iou: 0.8,
        }
    }
}

/// All knobs of the total reward, loadable from one config section.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardParams {
    pub fidelity: FidelityParams,
    pub redundancy: RedundancyParams,
    pub format: FormatParams,
}

/// Per-trace reward decomposition. The exact identity
/// `r_total = r_acc + r_fmt + r_fid_bar` always holds, and the per-step lists
/// have one entry per zoom action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_acc: f64,
    pub r_fmt: f64,
    pub per_step_fid: Vec<f64>,
    pub per_step_penalty: Vec<f64>,
    pub r_fid_bar: f64,
    pub r_total: f64,
}

/// Floors `x` after rounding to 9 decimals, so quotients like `0.7 / 0.1 =
/// 6.999...` land on the intended staircase step.
fn robust_floor(x: f64) -> f64 {
    ((x * 1e9).round() / 1e9).floor()
}

/// Per-step fidelity reward for an alignment `u` in `[0, 1]`.
///
/// A signed correctness term `r_base * sign(u - h0)` (with `sign(0) = 0`, so
/// the boundary action counts as bad without a discontinuous penalty) plus a
/// refinement bonus of `eta` for every `dh` of alignment beyond `h0`.
pub fn step_fidelity(u: f64, p: &FidelityParams) -> f64 {
    let d = u - p.h0;
    let sign = if d == 0.0 { 0.0 } else { d.signum() };
    let bonus_steps = robust_floor(d.max(0.0) / p.dh);
    p.r_base * sign + p.eta * bonus_steps
}

/// Repetition load of the `k`-th action (1-based): the number of actions so
/// far, plus one extra count for every earlier action that overlaps action
/// `k` beyond `dup_iou`.
fn repetition_count(k: usize, actions: &[&BBox], p: &RedundancyParams) -> usize {
    debug_assert!(k >= 1 && k <= actions.len());
    let current = actions[k - 1];
    let dups = actions[..k - 1]
        .iter()
        .filter(|b| iou(b, current) > p.dup_iou)
        .count();
    k + dups
}

/// Smooth redundancy penalty for the `k`-th action (1-based):
/// `lambda * max(0, C_k - budget)^2`, a C¹ ramp beyond the soft budget.
pub fn redundancy_penalty(k: usize, actions: &[ZoomAction], p: &RedundancyParams) -> f64 {
    let boxes: Vec<&BBox> = actions.iter().map(|a| &a.bbox).collect();
    penalty_from_count(repetition_count(k, &boxes, p), p)
}

fn penalty_from_count(c_k: usize, p: &RedundancyParams) -> f64 {
    let excess = c_k.saturating_sub(p.budget) as f64;
    p.lambda * excess * excess
}

/// Mean per-step fidelity net of redundancy penalties over the zoom actions
/// of a trajectory, plus the per-step component lists.
///
/// The mean runs over visual actions only; a trajectory with no zooms scores
/// 0 with empty lists. Each action is compared against `reference` (the
/// padded ground-truth rationale) by IoU.
pub fn trajectory_fidelity(
    actions: &[ZoomAction],
    reference: &BBox,
    fp: &FidelityParams,
    rp: &RedundancyParams,
) -> Result<(f64, Vec<f64>, Vec<f64>), RewardError> {
    if reference.area() <= 0.0 {
        return Err(GeomError::ZeroAreaGroundTruth.into());
    }
    let n = actions.len();
    if n == 0 {
        return Ok((0.0, Vec::new(), Vec::new()));
    }
    let boxes: Vec<&BBox> = actions.iter().map(|a| &a.bbox).collect();
    let mut fids = Vec::with_capacity(n);
    let mut pens = Vec::with_capacity(n);
    let mut sum = 0.0;
    for k in 1..=n {
        let u = iou(boxes[k - 1], reference);
        let fid = step_fidelity(u, fp);
        let pen = penalty_from_count(repetition_count(k, &boxes, rp), rp);
        sum += fid - pen;
        fids.push(fid);
        pens.push(pen);
    }
    Ok((sum / n as f64, fids, pens))
}

fn normalize(text: &str) -> String {
    text.trim().to_lowercase()
}

/// Grades an answer against the key: 1.0 for an exact normalized match of
/// either the choice letter or the full choice text, 0.0 otherwise.
pub fn answer_reward(
    trace_answer: Option<&str>,
    key: &str,
    choices: &[String],
) -> Result<f64, RewardError> {
    let key_index = choices
        .iter()
        .position(|c| c == key)
        .ok_or_else(|| RewardError::KeyNotInChoices(key.to_string()))?;
    let Some(answer) = trace_answer else {
        return Ok(0.0);
    };
    let answer = normalize(answer);
    let letter = normalize(&Task::choice_letter(key_index));
    if answer == letter || answer == normalize(key) {
        Ok(1.0)
    } else {
        Ok(0.0)
    }
}

/// Assembles the total reward: answer correctness, format compliance, and
/// mean process fidelity. The fidelity reference is the task rationale padded
/// by the task's `pad_frac` within its image bounds.
pub fn total_reward(
    trace: &Trace,
    verdict: &FormatVerdict,
    task: &Task,
    params: &RewardParams,
) -> Result<RewardBreakdown, RewardError> {
    let r_acc = answer_reward(trace.answer(), &task.key, &task.choices)?;
    let r_fmt = format_reward(verdict, &params.format);
    let reference = pad_box(&task.rationale, task.pad_frac, &task.image_bounds);
    let actions: Vec<ZoomAction> = trace.zoom_actions().cloned().collect();
    let (r_fid_bar, per_step_fid, per_step_penalty) =
        trajectory_fidelity(&actions, &reference, &params.fidelity, &params.redundancy)?;
    Ok(RewardBreakdown {
        r_acc,
        r_fmt,
        per_step_fid,
        per_step_penalty,
        r_fid_bar,
        r_total: r_acc + r_fmt + r_fid_bar,
    })
}

/// How the fidelity threshold tightens over training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleMode {
    /// Interpolate from `h0_start` to `h0_end` over `warmup_steps`, then hold.
    LinearByStep,
    /// Raise the threshold by `increment` each time the recent hit rate
    /// clears `promotion_bar`.
    CompetenceGated,
}

/// Adaptive fidelity-threshold schedule: lenient early, stricter as
/// competence grows. Advanced by the single training driver; the resolved
/// threshold is passed by value into reward evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSchedule {
    pub h0_start: f64,
    pub h0_end: f64,
    pub warmup_steps: usize,
    pub mode: ScheduleMode,
    /// Step size of a competence-gated promotion.
    pub increment: f64,
    /// Hit rate required to promote in competence-gated mode.
    pub promotion_bar: f64,
    /// Current threshold level (competence-gated state).
    current: f64,
}

impl ThresholdSchedule {
    pub fn new(h0_start: f64, h0_end: f64, warmup_steps: usize, mode: ScheduleMode) -> Self {
        Self {
            h0_start,
            h0_end,
            warmup_steps,
            mode,
            increment: 0.05,
            promotion_bar: 0.5,
            current: h0_start,
        }
    }

    /// Resolves the threshold for a training step; competence-gated mode also
    /// advances its internal level. Output always lies in `[h0_start, h0_end]`.
    pub fn schedule_h0(&mut self, train_step: usize, recent_hit_rate: f64) -> f64 {
        match self.mode {
            ScheduleMode::LinearByStep => {
                if self.warmup_steps == 0 {
                    return self.h0_end;
                }
                let t = (train_step as f64 / self.warmup_steps as f64).min(1.0);
                self.h0_start + (self.h0_end - self.h0_start) * t
            }
            ScheduleMode::CompetenceGated => {
                if recent_hit_rate > self.promotion_bar {
                    self.current = (self.current + self.increment).min(self.h0_end);
                }
                self.current.clamp(self.h0_start, self.h0_end)
            }
        }
    }
}

impl Default for ThresholdSchedule {
    fn default() -> Self {
        Self::new(0.2, 0.5, 150, ScheduleMode::LinearByStep)
    }
}
