//! The toy policy: a flat parametric scorer over a fixed multi-scale anchor
//! set plus an answer head conditioned on gathered evidence.
//!
//! At each round the policy samples one route decision from a softmax over
//! all anchor logits and a stop logit; stopping (or exhausting the round
//! budget) moves to the answer head, a softmax over choices whose logits
//! combine the revealed-evidence fraction per choice with a hint-match bonus.

use super::env::{EnvAction, EnvObservation, NeedleEnv, NeedleTask};
use super::SimError;
use crate::geom::BBox;
use crate::trace::{render_trace, Trace, TraceConfig, TraceStep, ZoomAction};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Policy parameters: learnable anchor and stop logits, plus the answer
/// head's fixed evidence-integrator calibration.
///
/// The answer head always conditions on what the zooms revealed; it cannot
/// learn to ignore gathered evidence. Misleading evidence therefore carries a
/// real answer cost, which is what gives zoom decisions their consequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub anchor_logits: Vec<f64>,
    pub stop_logit: f64,
    /// Answer-head weight on the evidence fraction of a choice (fixed).
    pub evid_weight: f64,
    /// Answer-head weight on matching the coarse hint (fixed).
    pub hint_weight: f64,
}

impl PolicyParams {
    pub fn is_finite(&self) -> bool {
        self.anchor_logits.iter().all(|l| l.is_finite())
            && self.stop_logit.is_finite()
            && self.evid_weight.is_finite()
            && self.hint_weight.is_finite()
    }
}

/// Initial parameter values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyInit {
    pub anchor_logit: f64,
    pub stop_logit: f64,
    pub evid_weight: f64,
    pub hint_weight: f64,
}

impl Default for PolicyInit {
    fn default() -> Self {
        Self {
            anchor_logit: 0.0,
            stop_logit: 1.5,
            evid_weight: 9.0,
            hint_weight: 5.0,
        }
    }
}

impl PolicyInit {
    pub fn build(&self, n_anchors: usize) -> PolicyParams {
        PolicyParams {
            anchor_logits: vec![self.anchor_logit; n_anchors],
            stop_logit: self.stop_logit,
            evid_weight: self.evid_weight,
            hint_weight: self.hint_weight,
        }
    }
}

/// Fixed multi-scale anchor set: square boxes of each scale at stride one,
/// optionally plus the full grid.
pub fn build_anchors(
    grid_w: usize,
    grid_h: usize,
    scales: &[usize],
    include_full: bool,
) -> Vec<BBox> {
    let mut anchors = Vec::new();
    for &s in scales {
        if s == 0 || s > grid_w || s > grid_h {
            continue;
        }
        for y in 0..=(grid_h - s) {
            for x in 0..=(grid_w - s) {
                anchors.push(
                    BBox::new(x as f64, y as f64, (x + s) as f64, (y + s) as f64)
                        .expect("anchor within grid"),
                );
            }
        }
    }
    if include_full {
        anchors.push(BBox::new(0.0, 0.0, grid_w as f64, grid_h as f64).expect("full box"));
    }
    anchors
}

/// Features the answer head saw when it sampled: per-choice evidence
/// fractions and the hint's choice index.
#[derive(Debug, Clone, PartialEq)]
pub struct AnswerFeatures {
    pub evid_frac: Vec<f64>,
    pub hint_index: usize,
}

/// One sampled decision, with everything needed to recompute its probability
/// under updated parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum DecisionKind {
    /// Index into `[anchors..., stop]`; `chosen == n_anchors` means stop.
    Route { chosen: usize },
    /// Answer choice index, with the features it conditioned on.
    Answer {
        chosen: usize,
        features: AnswerFeatures,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub kind: DecisionKind,
    /// Log-probability under the parameters that sampled it.
    pub old_logp: f64,
}

/// A sampled episode: its rendered trace plus the decision record needed for
/// gradient computation. `token_seg` maps each trace step to its decision
/// token count, in order, aligned with the flat `decisions` list.
#[derive(Debug, Clone)]
pub struct Episode {
    pub trace: Trace,
    pub raw: String,
    pub decisions: Vec<Decision>,
    pub token_seg: Vec<(usize, usize)>,
    pub answer_choice: usize,
    pub answer_correct: bool,
}

/// Softmax with temperature. `temperature <= 0` degenerates to argmax
/// (ties resolved to the lowest index).
pub(super) fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    if temperature <= 0.0 {
        let mut best = 0usize;
        for (i, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = i;
            }
        }
        let mut probs = vec![0.0; logits.len()];
        probs[best] = 1.0;
        return probs;
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| ((l - max) / temperature).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let draw: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if draw < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Route logits: all anchors followed by stop.
pub(super) fn route_logits(params: &PolicyParams) -> Vec<f64> {
    let mut logits = params.anchor_logits.clone();
    logits.push(params.stop_logit);
    logits
}

/// Answer logits for the given features.
pub(super) fn answer_logits(params: &PolicyParams, features: &AnswerFeatures) -> Vec<f64> {
    features
        .evid_frac
        .iter()
        .enumerate()
        .map(|(c, &frac)| {
            params.evid_weight * frac
                + if c == features.hint_index {
                    params.hint_weight
                } else {
                    0.0
                }
        })
        .collect()
}

/// Runs one episode of the policy in the environment and renders it through
/// the canonical trace grammar.
pub fn run_episode(
    params: &PolicyParams,
    anchors: &[BBox],
    task: &NeedleTask,
    trace_cfg: &TraceConfig,
    temperature: f64,
    rng: &mut impl Rng,
) -> Result<Episode, SimError> {
    let (mut env, coarse) = NeedleEnv::reset(task);
    let hint_index = match coarse {
        EnvObservation::Coarse { hint_class, .. } => task
            .choice_classes
            .iter()
            .position(|&c| c == hint_class)
            .expect("hint is always a choice class"),
        _ => unreachable!("reset yields the coarse view"),
    };

    let n_anchors = anchors.len();
    let mut revealed = vec![false; task.grid_w * task.grid_h];
    let mut class_counts = vec![0usize; task.choice_classes.len()];
    let mut total_revealed = 0usize;

    let mut steps: Vec<TraceStep> = Vec::new();
    let mut decisions: Vec<Decision> = Vec::new();
    let mut token_seg: Vec<(usize, usize)> = Vec::new();
    let mut answer_step_tokens = 0usize;

    loop {
        if env.zooms_used() == task.max_rounds {
            break; // forced answer: no route decision sampled
        }
        let probs = softmax(&route_logits(params), temperature);
        let chosen = sample_index(&probs, rng);
        decisions.push(Decision {
            kind: DecisionKind::Route { chosen },
            old_logp: probs[chosen].max(f64::MIN_POSITIVE).ln(),
        });
        if chosen == n_anchors {
            answer_step_tokens += 1; // the stop token belongs to the answer step
            break;
        }

        let bbox = anchors[chosen];
        match env.step(&EnvAction::Zoom(bbox))? {
            EnvObservation::ZoomView { cells } => {
                for (x, y, class) in cells {
                    let ix = y * task.grid_w + x;
                    if !revealed[ix] {
                        revealed[ix] = true;
                        total_revealed += 1;
                        if let Some(c) =
                            task.choice_classes.iter().position(|&cc| cc == class)
                        {
                            class_counts[c] += 1;
                        }
                    }
                }
            }
            other => unreachable!("zoom yields a zoom view, got {other:?}"),
        }
        let think = format!(
            "inspect region ({},{})-({},{})",
            bbox.x1(),
            bbox.y1(),
            bbox.x2(),
            bbox.y2()
        );
        steps.push(TraceStep::zoom(
            think,
            ZoomAction {
                name: trace_cfg.tool_name.clone(),
                bbox,
            },
        ));
        token_seg.push((steps.len() - 1, 1));
    }

    // Answer head.
    let evid_frac: Vec<f64> = class_counts
        .iter()
        .map(|&c| {
            if total_revealed == 0 {
                0.0
            } else {
                c as f64 / total_revealed as f64
            }
        })
        .collect();
    let features = AnswerFeatures {
        evid_frac,
        hint_index,
    };
    let probs = softmax(&answer_logits(params, &features), temperature);
    let answer_choice = sample_index(&probs, rng);
    decisions.push(Decision {
        kind: DecisionKind::Answer {
            chosen: answer_choice,
            features,
        },
        old_logp: probs[answer_choice].max(f64::MIN_POSITIVE).ln(),
    });
    answer_step_tokens += 1;

    let answer_correct = match env.step(&EnvAction::Answer(answer_choice))? {
        EnvObservation::Terminal { correct } => correct,
        other => unreachable!("answer terminates the episode, got {other:?}"),
    };

    let think = if steps.is_empty() {
        "answer directly from the coarse view".to_string()
    } else {
        "enough evidence gathered".to_string()
    };
    steps.push(TraceStep::answer(
        think,
        crate::task::Task::choice_letter(answer_choice),
    ));
    token_seg.push((steps.len() - 1, answer_step_tokens));

    let trace = Trace::new(steps);
    let raw = render_trace(&trace, trace_cfg)?;
    Ok(Episode {
        trace,
        raw,
        decisions,
        token_seg,
        answer_choice,
        answer_correct,
    })
}
