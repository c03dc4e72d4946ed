//! Evaluation metrics over scored trace corpora: answer accuracy, rationale
//! accuracy (ground-truth coverage of invoked zooms), rationale count, their
//! harmonic-mean F1, and illusion diagnostics.

use crate::geom::{coverage, GeomError};
use crate::reward::answer_reward;
use crate::task::Task;
use crate::trace::Trace;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("cannot aggregate an empty corpus")]
    EmptyCorpus,
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("answer grading failed: {0}")]
    Grading(String),
}

/// Per-trace evaluation summary.
///
/// `best_coverage` is the maximum over zooms of the fraction of ground-truth
/// area the zoom covers; it is present iff the trace invoked at least one
/// zoom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceScore {
    pub task_id: String,
    pub answer_correct: bool,
    pub zoom_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_coverage: Option<f64>,
}

/// Corpus-level report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    /// Fraction of traces with a correct answer.
    pub acc_ans: f64,
    /// Mean best coverage over traces with at least one zoom (0 when none).
    pub acc_rat: f64,
    /// Mean zoom count over all traces.
    pub c_rat: f64,
    /// Harmonic mean of `acc_ans` and `acc_rat`.
    pub f1: f64,
    pub right_with: usize,
    pub right_without: usize,
    pub wrong_with: usize,
    pub wrong_without: usize,
    /// Set when no trace invoked a rationale, making `acc_rat` vacuous.
    pub no_rationales: bool,
    /// Coverage threshold used to binarize rationale hits, when configured.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hit_threshold: Option<f64>,
}

impl CorpusReport {
    pub fn corpus_size(&self) -> usize {
        self.right_with + self.right_without + self.wrong_with + self.wrong_without
    }
}

/// Quadrant rates plus the illusion index: the fraction of rationale-bearing
/// traces that still answer wrong.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IllusionSummary {
    pub right_with_rate: f64,
    pub right_without_rate: f64,
    pub wrong_with_rate: f64,
    pub wrong_without_rate: f64,
    /// `wrong_with / max(1, traces_with_rationale)`.
    pub illusion_index: f64,
    /// Emitted when no trace used a rationale at all.
    pub rationale_usage_warning: bool,
}

/// Scores one trace against its task: grades the answer and takes the best
/// ground-truth coverage over its zooms.
pub fn score_trace(trace: &Trace, task: &Task) -> Result<TraceScore, MetricsError> {
    let r_acc = answer_reward(trace.answer(), &task.key, &task.choices)
        .map_err(|e| MetricsError::Grading(e.to_string()))?;
    let mut best: Option<f64> = None;
    for action in trace.zoom_actions() {
        let c = coverage(&action.bbox, &task.rationale)?;
        best = Some(best.map_or(c, |b: f64| b.max(c)));
    }
    Ok(TraceScore {
        task_id: task.task_id.clone(),
        answer_correct: r_acc == 1.0,
        zoom_count: trace.zoom_count(),
        best_coverage: best,
    })
}

/// Harmonic mean of answer accuracy and rationale accuracy; 0 when both are 0.
pub fn f1(acc_ans: f64, acc_rat: f64) -> f64 {
    if acc_ans + acc_rat == 0.0 {
        0.0
    } else {
        2.0 * acc_ans * acc_rat / (acc_ans + acc_rat)
    }
}

/// Aggregates per-trace scores into a corpus report.
///
/// Traces with zero zooms are excluded from the rationale-accuracy mean
/// (coverage is undefined without an invocation) but count toward the
/// rationale-count mean and the quadrants. When `hit_threshold` is given,
/// coverage is binarized at that threshold before averaging.
pub fn aggregate(
    scores: &[TraceScore],
    hit_threshold: Option<f64>,
) -> Result<CorpusReport, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let n = scores.len() as f64;
    let correct = scores.iter().filter(|s| s.answer_correct).count();
    let acc_ans = correct as f64 / n;
    let c_rat = scores.iter().map(|s| s.zoom_count as f64).sum::<f64>() / n;

    let rationale_values: Vec<f64> = scores
        .iter()
        .filter_map(|s| s.best_coverage)
        .map(|c| match hit_threshold {
            Some(t) => {
                if c >= t {
                    1.0
                } else {
                    0.0
                }
            }
            None => c,
        })
        .collect();
    let no_rationales = rationale_values.is_empty();
    let acc_rat = if no_rationales {
        0.0
    } else {
        rationale_values.iter().sum::<f64>() / rationale_values.len() as f64
    };

    let mut right_with = 0;
    let mut right_without = 0;
    let mut wrong_with = 0;
    let mut wrong_without = 0;
    for s in scores {
        let with = s.zoom_count >= 1;
        match (s.answer_correct, with) {
            (true, true) => right_with += 1,
            (true, false) => right_without += 1,
            (false, true) => wrong_with += 1,
            (false, false) => wrong_without += 1,
        }
    }

    Ok(CorpusReport {
        acc_ans,
        acc_rat,
        c_rat,
        f1: f1(acc_ans, acc_rat),
        right_with,
        right_without,
        wrong_with,
        wrong_without,
        no_rationales,
        hit_threshold,
    })
}

/// Quadrant rates and the illusion index of a corpus report.
pub fn diagnose(report: &CorpusReport) -> IllusionSummary {
    let n = report.corpus_size().max(1) as f64;
    let with_rationale = report.right_with + report.wrong_with;
    IllusionSummary {
        right_with_rate: report.right_with as f64 / n,
        right_without_rate: report.right_without as f64 / n,
        wrong_with_rate: report.wrong_with as f64 / n,
        wrong_without_rate: report.wrong_without as f64 / n,
        illusion_index: report.wrong_with as f64 / with_rationale.max(1) as f64,
        rationale_usage_warning: with_rationale == 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::BBox;
    use crate::trace::{TraceStep, ZoomAction};

    fn task() -> Task {
        Task {
            task_id: "t".into(),
            question: "q".into(),
            key: "B".into(),
            choices: vec!["A".into(), "B".into(), "C".into(), "D".into()],
            image_bounds: BBox::new(0.0, 0.0, 10.0, 10.0).unwrap(),
            rationale: BBox::new(2.0, 2.0, 4.0, 4.0).unwrap(),
            pad_frac: 0.1,
            weight: 1.0,
        }
    }

    fn zoom(x1: f64, y1: f64, x2: f64, y2: f64) -> TraceStep {
        TraceStep::zoom(
            "look",
            ZoomAction {
                name: "image_zoom_in".into(),
                bbox: BBox::new(x1, y1, x2, y2).unwrap(),
            },
        )
    }

    #[test]
    fn score_trace_cases() {
        let t = task();

        let containing = Trace::new(vec![zoom(1.0, 1.0, 5.0, 5.0), TraceStep::answer("a", "B")]);
        let s = score_trace(&containing, &t).unwrap();
        assert!(s.answer_correct);
        assert_eq!(s.best_coverage, Some(1.0));

        // Coverages 0.5 and 0.25: the max wins.
        let partial = Trace::new(vec![
            zoom(2.0, 2.0, 4.0, 3.0),
            zoom(2.0, 2.0, 3.0, 3.0),
            TraceStep::answer("a", "C"),
        ]);
        let s = score_trace(&partial, &t).unwrap();
        assert!(!s.answer_correct);
        assert_eq!(s.best_coverage, Some(0.5));
        assert_eq!(s.zoom_count, 2);

        let none = Trace::new(vec![TraceStep::answer("a", "B")]);
        let s = score_trace(&none, &t).unwrap();
        assert_eq!(s.zoom_count, 0);
        assert_eq!(s.best_coverage, None);
    }

    #[test]
    fn f1_reference_values() {
        // (acc_ans, acc_rat, published) from the reference evaluation rows.
        let rows = [
            (0.904, 0.873, 0.88),
            (0.714, 0.282, 0.40),
            (0.889, 0.782, 0.83),
            (0.799, 0.473, 0.59),
        ];
        for (a, r, want) in rows {
            assert!(
                (f1(a, r) - want).abs() <= 0.01,
                "f1({a}, {r}) = {} not within 0.01 of {want}",
                f1(a, r)
            );
        }
        assert_eq!(f1(0.7, 0.7), 0.7);
        assert_eq!(f1(1.0, 0.0), 0.0);
        assert_eq!(f1(0.0, 0.0), 0.0);
        assert_eq!(f1(0.3, 0.9), f1(0.9, 0.3));
    }

    fn score(correct: bool, zooms: usize, cov: Option<f64>) -> TraceScore {
        TraceScore {
            task_id: "t".into(),
            answer_correct: correct,
            zoom_count: zooms,
            best_coverage: cov,
        }
    }

    #[test]
    fn aggregate_perfect_corpus() {
        let scores = vec![score(true, 1, Some(1.0)), score(true, 2, Some(1.0))];
        let r = aggregate(&scores, None).unwrap();
        assert_eq!(r.acc_ans, 1.0);
        assert_eq!(r.acc_rat, 1.0);
        assert_eq!(r.f1, 1.0);
        assert_eq!(r.c_rat, 1.5);
        assert_eq!(r.right_with, 2);
        assert_eq!(r.corpus_size(), 2);
    }

    #[test]
    fn aggregate_excludes_zoomless_from_rationale_mean() {
        let scores = vec![
            score(true, 0, None),
            score(false, 1, Some(0.8)),
            score(true, 1, Some(0.4)),
        ];
        let r = aggregate(&scores, None).unwrap();
        assert!((r.acc_rat - 0.6).abs() < 1e-12);
        assert!((r.c_rat - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.right_without, 1);
        assert_eq!(r.wrong_with, 1);
        assert!(!r.no_rationales);
    }

    #[test]
    fn aggregate_flags_empty_rationale_set() {
        let scores = vec![score(true, 0, None), score(false, 0, None)];
        let r = aggregate(&scores, None).unwrap();
        assert_eq!(r.acc_rat, 0.0);
        assert!(r.no_rationales);
        assert!(aggregate(&[], None).is_err());
    }

    #[test]
    fn aggregate_hit_threshold_binarizes() {
        let scores = vec![score(true, 1, Some(0.7)), score(true, 1, Some(0.3))];
        let raw = aggregate(&scores, None).unwrap();
        assert!((raw.acc_rat - 0.5).abs() < 1e-12);
        let binary = aggregate(&scores, Some(0.5)).unwrap();
        assert!((binary.acc_rat - 0.5).abs() < 1e-12);
        let strict = aggregate(&scores, Some(0.8)).unwrap();
        assert_eq!(strict.acc_rat, 0.0);
    }

    #[test]
    fn diagnose_cases() {
        let all_right_without = aggregate(
            &[score(true, 0, None), score(true, 0, None)],
            None,
        )
        .unwrap();
        let d = diagnose(&all_right_without);
        assert_eq!(d.illusion_index, 0.0);
        assert!(d.rationale_usage_warning);

        // 10 rationale-bearing traces, 4 wrong.
        let mut scores = Vec::new();
        for i in 0..10 {
            scores.push(score(i >= 4, 1, Some(0.5)));
        }
        let d = diagnose(&aggregate(&scores, None).unwrap());
        assert!((d.illusion_index - 0.4).abs() < 1e-12);
        assert!(!d.rationale_usage_warning);
    }
}
