//! Three-stage process-grounded dataset curation — generation, verification,
//! and reasoning-centric filtering — plus multiple-choice repackaging.
//!
//! Model-dependent stages sit behind ports. The shipped backends are
//! deterministic synthetic stubs: a rule-based question generator over
//! structured captions, an oracle verifier reading a hidden consistency
//! field, and a seeded Bernoulli rollout stub for difficulty estimation.

use crate::geom::{nms, pad_box, BBox, ScoredBox};
use crate::rng::derive_rng;
use crate::task::Task;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipeError {
    #[error("port failure: {0}")]
    Port(String),
    #[error("distractor pool offers {available} distinct entries, need at least {needed}")]
    InsufficientPool { available: usize, needed: usize },
    #[error("candidate rationale lies outside the image bounds")]
    RationaleOutOfBounds,
}

/// Hidden consistency truth carried by synthetic records; the oracle verifier
/// reads it in place of a model-based consistency check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordQuality {
    pub answer_consistent: bool,
    pub rationale_consistent: bool,
}

impl Default for RecordQuality {
    fn default() -> Self {
        Self {
            answer_consistent: true,
            rationale_consistent: true,
        }
    }
}

fn default_quality() -> RecordQuality {
    RecordQuality::default()
}

/// A captioned region of an image: the synthetic stand-in for raw
/// region-caption data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRecord {
    pub id: String,
    pub global_caption: String,
    pub local_caption: String,
    pub region: BBox,
    pub bounds: BBox,
    /// Hidden consistency truth for the oracle verifier.
    #[serde(default = "default_quality")]
    pub quality: RecordQuality,
    /// Probability that the question is solvable without visual grounding.
    #[serde(default)]
    pub solvable_without_grounding: f64,
}

/// A generated question-answer-rationale triplet, before repackaging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskCandidate {
    pub question: String,
    pub answer: String,
    /// Rationale region, already padded for context.
    pub rationale: BBox,
    pub bounds: BBox,
    pub provenance: String,
    /// Selection confidence used for NMS deduplication.
    pub confidence: f64,
    /// Empty until multiple-choice repackaging.
    pub distractors: Vec<String>,
}

/// Outcome of a verification check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOutcome {
    pub answer_ok: bool,
    pub rationale_ok: bool,
}

/// Rollout condition for difficulty estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttemptMode {
    WithHint,
    WithoutGrounding,
}

/// Produces a task candidate from a region record, or nothing when the record
/// cannot support a question.
pub trait GeneratorPort {
    fn generate(&self, record: &RegionRecord) -> Result<Option<TaskCandidate>, PipeError>;
}

/// Checks a candidate for answer correctness and rationale consistency.
pub trait VerifierPort {
    fn verify(&self, cand: &TaskCandidate) -> Result<VerifyOutcome, PipeError>;
}

/// Attempts to solve a candidate under a rollout condition.
pub trait RolloutPort {
    fn attempt(&self, cand: &TaskCandidate, mode: AttemptMode) -> Result<bool, PipeError>;
}

/// Why a record or candidate left the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub stage: String,
    pub reason: String,
}

/// Per-stage counts and rejection reasons of one pipeline run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub seed: u64,
    pub records: usize,
    pub generated: usize,
    pub verified: usize,
    pub filtered: usize,
    pub tasks: usize,
    pub rejections: Vec<Rejection>,
}

/// Generation stage: per-record candidates from the port, rationales padded
/// by `pad_frac`, then NMS-deduplicated on rationale boxes by confidence
/// (ties keep input order). Failing records are skipped with a logged reason.
pub fn generate(
    records: &[RegionRecord],
    port: &dyn GeneratorPort,
    pad_frac: f64,
    nms_iou: f64,
    manifest: &mut PipelineManifest,
) -> Vec<TaskCandidate> {
    let mut cands: Vec<TaskCandidate> = Vec::new();
    for record in records {
        match port.generate(record) {
            Ok(Some(mut cand)) => {
                cand.rationale = pad_box(&cand.rationale, pad_frac, &record.bounds);
                cands.push(cand);
            }
            Ok(None) => manifest.rejections.push(Rejection {
                id: record.id.clone(),
                stage: "generate".into(),
                reason: "generator produced no candidate".into(),
            }),
            Err(e) => manifest.rejections.push(Rejection {
                id: record.id.clone(),
                stage: "generate".into(),
                reason: e.to_string(),
            }),
        }
    }

    let scored: Vec<ScoredBox> = cands
        .iter()
        .map(|c| ScoredBox::new(c.rationale, c.confidence))
        .collect();
    let kept_boxes = nms(&scored, nms_iou);

    // Recover candidates in input order from the kept set; NMS keeps at most
    // one candidate per surviving box identity.
    let mut kept_flags = vec![false; cands.len()];
    for kb in &kept_boxes {
        if let Some(ix) = cands
            .iter()
            .enumerate()
            .position(|(i, c)| !kept_flags[i] && c.rationale == kb.bbox && c.confidence == kb.score)
        {
            kept_flags[ix] = true;
        }
    }
    let mut out = Vec::new();
    for (i, cand) in cands.into_iter().enumerate() {
        if kept_flags[i] {
            out.push(cand);
        } else {
            manifest.rejections.push(Rejection {
                id: cand.provenance.clone(),
                stage: "generate".into(),
                reason: "suppressed by rationale NMS".into(),
            });
        }
    }
    out
}

/// Verification stage: keep a candidate iff both the answer and the rationale
/// check out. Port errors reject the candidate with a reason code.
pub fn verify(
    cands: Vec<TaskCandidate>,
    port: &dyn VerifierPort,
    manifest: &mut PipelineManifest,
) -> Vec<TaskCandidate> {
    let mut kept = Vec::new();
    for cand in cands {
        match port.verify(&cand) {
            Ok(v) if v.answer_ok && v.rationale_ok => kept.push(cand),
            Ok(v) => manifest.rejections.push(Rejection {
                id: cand.provenance.clone(),
                stage: "verify".into(),
                reason: format!("answer_ok={}, rationale_ok={}", v.answer_ok, v.rationale_ok),
            }),
            Err(e) => manifest.rejections.push(Rejection {
                id: cand.provenance.clone(),
                stage: "verify".into(),
                reason: e.to_string(),
            }),
        }
    }
    kept
}

/// Default difficulty weighting: linear in the no-grounding solve rate.
pub fn default_keep_prob(solve_rate: f64) -> f64 {
    1.0 - solve_rate
}

/// Reasoning-centric filtering: drop candidates whose rationale covers more
/// than `max_area_frac` of the image, then down-weight candidates solvable
/// without grounding, estimated over `attempts` rollouts. A weight of zero
/// drops the candidate.
pub fn filter_reasoning_centric(
    cands: Vec<TaskCandidate>,
    port: &dyn RolloutPort,
    max_area_frac: f64,
    attempts: usize,
    keep_prob_fn: impl Fn(f64) -> f64,
    manifest: &mut PipelineManifest,
) -> Vec<(TaskCandidate, f64)> {
    assert!(attempts >= 1, "difficulty estimation needs at least one attempt");
    let mut out = Vec::new();
    for cand in cands {
        let area_frac = cand.rationale.area() / cand.bounds.area().max(f64::MIN_POSITIVE);
        if area_frac > max_area_frac {
            manifest.rejections.push(Rejection {
                id: cand.provenance.clone(),
                stage: "filter".into(),
                reason: format!("rationale covers {area_frac:.3} of the image"),
            });
            continue;
        }
        let mut solved = 0usize;
        let mut failed = None;
        for _ in 0..attempts {
            match port.attempt(&cand, AttemptMode::WithoutGrounding) {
                Ok(true) => solved += 1,
                Ok(false) => {}
                Err(e) => {
                    failed = Some(e.to_string());
                    break;
                }
            }
        }
        if let Some(reason) = failed {
            manifest.rejections.push(Rejection {
                id: cand.provenance.clone(),
                stage: "filter".into(),
                reason,
            });
            continue;
        }
        let solve_rate = solved as f64 / attempts as f64;
        let weight = keep_prob_fn(solve_rate);
        if weight <= 0.0 {
            manifest.rejections.push(Rejection {
                id: cand.provenance.clone(),
                stage: "filter".into(),
                reason: format!("solvable without grounding (rate {solve_rate:.2})"),
            });
            continue;
        }
        out.push((cand, weight));
    }
    out
}

/// Repackages a candidate as a multiple-choice task: draws k in [3, 7]
/// distractors from the pool (seeded, clamped to the distinct supply),
/// shuffles the answer among them, and assigns letter labels by position.
pub fn repackage_mcq(
    cand: &TaskCandidate,
    weight: f64,
    distractor_pool: &[String],
    task_id: String,
    rng: &mut impl Rng,
) -> Result<Task, PipeError> {
    if !cand.bounds.contains(&cand.rationale) {
        return Err(PipeError::RationaleOutOfBounds);
    }
    let mut pool: Vec<&String> = distractor_pool
        .iter()
        .filter(|d| **d != cand.answer)
        .collect();
    pool.dedup_by(|a, b| a == b);
    let mut distinct: Vec<String> = Vec::new();
    for d in pool {
        if !distinct.contains(d) {
            distinct.push(d.clone());
        }
    }
    if distinct.len() < 3 {
        return Err(PipeError::InsufficientPool {
            available: distinct.len(),
            needed: 3,
        });
    }
    let k = rng.gen_range(3..=7usize).min(distinct.len());
    distinct.shuffle(rng);
    let mut choices: Vec<String> = distinct.into_iter().take(k).collect();
    choices.push(cand.answer.clone());
    choices.shuffle(rng);

    Ok(Task {
        task_id,
        question: cand.question.clone(),
        key: cand.answer.clone(),
        choices,
        image_bounds: cand.bounds,
        rationale: cand.rationale,
        pad_frac: 0.0, // candidate rationale is already padded
        weight,
    })
}

/// Draws `n` tasks with probability proportional to their weights; the
/// mechanism by which difficulty weights act as sampling probabilities.
pub fn sample_weighted<'a>(tasks: &'a [Task], n: usize, rng: &mut impl Rng) -> Vec<&'a Task> {
    let total: f64 = tasks.iter().map(|t| t.weight.max(0.0)).sum();
    if tasks.is_empty() || total <= 0.0 {
        return Vec::new();
    }
    (0..n)
        .map(|_| {
            let mut target = rng.gen::<f64>() * total;
            for t in tasks {
                target -= t.weight.max(0.0);
                if target <= 0.0 {
                    return t;
                }
            }
            tasks.last().unwrap()
        })
        .collect()
}

/// Pipeline settings; loadable from one config section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub pad_frac: f64,
    pub nms_iou: f64,
    pub max_area_frac: f64,
    pub attempts: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            pad_frac: 0.1,
            nms_iou: 0.8,
            max_area_frac: 0.25,
            attempts: 8,
        }
    }
}

/// Runs the full pipeline with the given ports: generate, verify, filter,
/// then repackage every survivor as a multiple-choice task. The distractor
/// pool for each candidate is the set of other candidates' answers.
pub fn run_pipeline(
    records: &[RegionRecord],
    generator: &dyn GeneratorPort,
    verifier: &dyn VerifierPort,
    rollout: &dyn RolloutPort,
    cfg: &PipelineConfig,
    seed: u64,
) -> (Vec<Task>, PipelineManifest) {
    let mut manifest = PipelineManifest {
        seed,
        records: records.len(),
        ..Default::default()
    };
    let generated = generate(records, generator, cfg.pad_frac, cfg.nms_iou, &mut manifest);
    manifest.generated = generated.len();

    let verified = verify(generated, verifier, &mut manifest);
    manifest.verified = verified.len();

    let pool: Vec<String> = {
        let mut answers: Vec<String> = verified.iter().map(|c| c.answer.clone()).collect();
        answers.sort();
        answers.dedup();
        answers
    };

    let weighted = filter_reasoning_centric(
        verified,
        rollout,
        cfg.max_area_frac,
        cfg.attempts,
        default_keep_prob,
        &mut manifest,
    );
    manifest.filtered = weighted.len();

    let mut tasks = Vec::new();
    for (ix, (cand, weight)) in weighted.into_iter().enumerate() {
        let mut rng = derive_rng(seed, "mcq", &[ix as u64]);
        let task_id = format!("task-{:05}", ix);
        match repackage_mcq(&cand, weight, &pool, task_id, &mut rng) {
            Ok(task) => tasks.push(task),
            Err(e) => manifest.rejections.push(Rejection {
                id: cand.provenance.clone(),
                stage: "repackage".into(),
                reason: e.to_string(),
            }),
        }
    }
    manifest.tasks = tasks.len();
    (tasks, manifest)
}

/// Rule-based question generator over structured captions.
#[derive(Debug, Default)]
pub struct SyntheticGenerator;

impl GeneratorPort for SyntheticGenerator {
    fn generate(&self, record: &RegionRecord) -> Result<Option<TaskCandidate>, PipeError> {
        let local = record.local_caption.trim();
        if local.is_empty() {
            return Ok(None);
        }
        let question = format!(
            "In the scene described as \"{}\", what does the highlighted region contain?",
            record.global_caption.trim()
        );
        Ok(Some(TaskCandidate {
            question,
            answer: local.to_string(),
            rationale: record.region,
            bounds: record.bounds,
            provenance: record.id.clone(),
            confidence: 1.0,
            distractors: Vec::new(),
        }))
    }
}

/// Oracle verifier: reads the record's hidden consistency truth and checks
/// that the padded rationale still contains the original region.
pub struct OracleVerifier {
    records: HashMap<String, RegionRecord>,
}

impl OracleVerifier {
    pub fn new(records: &[RegionRecord]) -> Self {
        Self {
            records: records.iter().map(|r| (r.id.clone(), r.clone())).collect(),
        }
    }
}

impl VerifierPort for OracleVerifier {
    fn verify(&self, cand: &TaskCandidate) -> Result<VerifyOutcome, PipeError> {
        let record = self
            .records
            .get(&cand.provenance)
            .ok_or_else(|| PipeError::Port(format!("unknown record {}", cand.provenance)))?;
        Ok(VerifyOutcome {
            answer_ok: record.quality.answer_consistent && !cand.answer.is_empty(),
            rationale_ok: record.quality.rationale_consistent
                && cand.rationale.contains(&record.region),
        })
    }
}

/// Seeded Bernoulli solver stub: succeeds without grounding at the record's
/// declared rate, independently per attempt.
pub struct BernoulliRollout {
    seed: u64,
    records: HashMap<String, RegionRecord>,
    counters: Mutex<HashMap<(String, AttemptMode), u64>>,
}

impl BernoulliRollout {
    pub fn new(seed: u64, records: &[RegionRecord]) -> Self {
        Self {
            seed,
            records: records.iter().map(|r| (r.id.clone(), r.clone())).collect(),
            counters: Mutex::new(HashMap::new()),
        }
    }
}

impl RolloutPort for BernoulliRollout {
    fn attempt(&self, cand: &TaskCandidate, mode: AttemptMode) -> Result<bool, PipeError> {
        let record = self
            .records
            .get(&cand.provenance)
            .ok_or_else(|| PipeError::Port(format!("unknown record {}", cand.provenance)))?;
        let p = match mode {
            AttemptMode::WithoutGrounding => record.solvable_without_grounding,
            AttemptMode::WithHint => (record.solvable_without_grounding + 0.5).min(1.0),
        };
        let attempt_ix = {
            let mut counters = self.counters.lock().expect("rollout counter lock");
            let entry = counters.entry((cand.provenance.clone(), mode)).or_insert(0);
            let ix = *entry;
            *entry += 1;
            ix
        };
        let mode_ix = match mode {
            AttemptMode::WithHint => 0,
            AttemptMode::WithoutGrounding => 1,
        };
        let mut rng = derive_rng(
            self.seed,
            "rollout-attempt",
            &[fnv1a(&cand.provenance), mode_ix, attempt_ix],
        );
        Ok(rng.gen::<f64>() < p)
    }
}

fn fnv1a(s: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn record(id: &str, local: &str, region: BBox) -> RegionRecord {
        RegionRecord {
            id: id.into(),
            global_caption: "a market street at dusk".into(),
            local_caption: local.into(),
            region,
            bounds: BBox::new(0.0, 0.0, 100.0, 100.0).unwrap(),
            quality: RecordQuality::default(),
            solvable_without_grounding: 0.0,
        }
    }

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn generate_pads_and_dedupes() {
        let records = vec![
            record("r0", "red lantern", b(10.0, 10.0, 20.0, 20.0)),
            record("r1", "red lantern", b(10.0, 10.0, 20.0, 20.0)),
            record("r2", "paper kite", b(60.0, 60.0, 80.0, 80.0)),
            record("r3", "", b(0.0, 0.0, 5.0, 5.0)),
        ];
        let mut manifest = PipelineManifest::default();
        let cands = generate(&records, &SyntheticGenerator, 0.1, 0.8, &mut manifest);
        // r0/r1 are identical regions: IoU 1 suppresses one; r3 is skipped.
        assert_eq!(cands.len(), 2);
        assert_eq!(cands[0].rationale, b(9.0, 9.0, 21.0, 21.0));
        assert_eq!(manifest.rejections.len(), 2);

        let empty = generate(&[], &SyntheticGenerator, 0.1, 0.8, &mut manifest);
        assert!(empty.is_empty());
    }

    #[test]
    fn verify_requires_both_flags() {
        let mut records = vec![
            record("ok", "lantern", b(10.0, 10.0, 20.0, 20.0)),
            record("bad-answer", "kite", b(30.0, 30.0, 40.0, 40.0)),
            record("bad-rationale", "drum", b(50.0, 50.0, 60.0, 60.0)),
        ];
        records[1].quality.answer_consistent = false;
        records[2].quality.rationale_consistent = false;

        let mut manifest = PipelineManifest::default();
        let cands = generate(&records, &SyntheticGenerator, 0.1, 0.8, &mut manifest);
        assert_eq!(cands.len(), 3);
        let verifier = OracleVerifier::new(&records);
        let kept = verify(cands, &verifier, &mut manifest);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].provenance, "ok");

        let none = verify(Vec::new(), &verifier, &mut manifest);
        assert!(none.is_empty());
    }

    #[test]
    fn filter_drops_large_and_trivially_solvable() {
        let mut records = vec![
            record("small-hard", "lantern", b(10.0, 10.0, 20.0, 20.0)),
            record("huge", "sky", b(0.0, 0.0, 90.0, 90.0)),
            record("easy", "sun", b(30.0, 30.0, 40.0, 40.0)),
        ];
        records[2].solvable_without_grounding = 1.0;

        let mut manifest = PipelineManifest::default();
        let cands = generate(&records, &SyntheticGenerator, 0.0, 0.8, &mut manifest);
        let rollout = BernoulliRollout::new(7, &records);
        let weighted =
            filter_reasoning_centric(cands, &rollout, 0.25, 8, default_keep_prob, &mut manifest);
        assert_eq!(weighted.len(), 1);
        assert_eq!(weighted[0].0.provenance, "small-hard");
        assert_eq!(weighted[0].1, 1.0); // solve rate 0 -> full weight
    }

    #[test]
    fn repackage_builds_valid_choice_sets() {
        let cand = TaskCandidate {
            question: "q".into(),
            answer: "lantern".into(),
            rationale: b(10.0, 10.0, 20.0, 20.0),
            bounds: b(0.0, 0.0, 100.0, 100.0),
            provenance: "r0".into(),
            confidence: 1.0,
            distractors: Vec::new(),
        };
        let pool: Vec<String> = ["kite", "drum", "fan", "bell", "mask", "rope", "lantern"]
            .iter()
            .map(|s| s.to_string())
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let task = repackage_mcq(&cand, 0.8, &pool, "t0".into(), &mut rng).unwrap();
        assert!(task.choices.len() >= 4 && task.choices.len() <= 8);
        assert_eq!(
            task.choices.iter().filter(|c| **c == task.key).count(),
            1
        );
        assert_eq!(task.weight, 0.8);

        // Same seed, same shuffle.
        let mut rng2 = ChaCha8Rng::seed_from_u64(3);
        let again = repackage_mcq(&cand, 0.8, &pool, "t0".into(), &mut rng2).unwrap();
        assert_eq!(again, task);

        // Exactly three distractors available: four total choices.
        let tight: Vec<String> = ["kite", "drum", "fan"].iter().map(|s| s.to_string()).collect();
        let mut rng3 = ChaCha8Rng::seed_from_u64(0);
        let t = repackage_mcq(&cand, 1.0, &tight, "t1".into(), &mut rng3).unwrap();
        assert_eq!(t.choices.len(), 4);

        let scarce: Vec<String> = vec!["kite".into(), "lantern".into()];
        let mut rng4 = ChaCha8Rng::seed_from_u64(0);
        assert!(repackage_mcq(&cand, 1.0, &scarce, "t2".into(), &mut rng4).is_err());
    }

    #[test]
    fn full_pipeline_is_monotone_and_deterministic() {
        let captions = ["lantern", "kite", "drum", "fan", "bell", "mask", "rope", "pole"];
        let mut records = Vec::new();
        for i in 0..24 {
            let x = (i % 6) as f64 * 15.0;
            let y = (i / 6) as f64 * 20.0;
            let mut r = record(
                &format!("r{i:02}"),
                captions[i % captions.len()],
                b(x, y, x + 10.0, y + 10.0),
            );
            if i % 7 == 0 {
                r.quality.answer_consistent = false;
            }
            if i % 5 == 0 {
                r.solvable_without_grounding = 1.0;
            }
            records.push(r);
        }
        let cfg = PipelineConfig::default();
        let verifier = OracleVerifier::new(&records);
        let rollout = BernoulliRollout::new(11, &records);
        let (tasks, manifest) =
            run_pipeline(&records, &SyntheticGenerator, &verifier, &rollout, &cfg, 11);

        assert!(manifest.records >= manifest.generated);
        assert!(manifest.generated >= manifest.verified);
        assert!(manifest.verified >= manifest.filtered);
        assert!(manifest.filtered >= manifest.tasks);
        assert!(!tasks.is_empty());
        for t in &tasks {
            assert!(t.choices.len() >= 4 && t.choices.len() <= 8);
            assert!(t.choices.contains(&t.key));
            assert!(t.image_bounds.contains(&t.rationale));
        }

        let verifier2 = OracleVerifier::new(&records);
        let rollout2 = BernoulliRollout::new(11, &records);
        let (tasks2, manifest2) =
            run_pipeline(&records, &SyntheticGenerator, &verifier2, &rollout2, &cfg, 11);
        assert_eq!(tasks, tasks2);
        assert_eq!(manifest, manifest2);
    }

    #[test]
    fn weighted_sampling_prefers_heavy_tasks() {
        let mk = |id: &str, w: f64| Task {
            task_id: id.into(),
            question: "q".into(),
            key: "a".into(),
            choices: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            image_bounds: b(0.0, 0.0, 10.0, 10.0),
            rationale: b(1.0, 1.0, 2.0, 2.0),
            pad_frac: 0.0,
            weight: w,
        };
        let tasks = vec![mk("heavy", 0.99), mk("light", 0.01)];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let picks = sample_weighted(&tasks, 200, &mut rng);
        let heavy = picks.iter().filter(|t| t.task_id == "heavy").count();
        assert!(heavy > 150, "heavy picked {heavy} of 200");
        assert!(sample_weighted(&[], 5, &mut rng).is_empty());
    }
}
