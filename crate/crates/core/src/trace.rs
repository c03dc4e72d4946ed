//! Grammar, parser, and serializer for multi-turn reasoning traces, plus the
//! format-compliance reward.
//!
//! A trace is one or more `<think>...</think> <tool_call>...</tool_call>`
//! steps terminated by `<think>...</think> <answer>...</answer>`. Whitespace
//! between tags is insignificant; tag contents are opaque text except tool
//! payloads, which must be JSON objects of the form
//! `{"name": "<tool>", "arguments": {"box": [x1, y1, x2, y2]}}`.
//!
//! Parsing never fails: malformed input yields the longest valid prefix plus
//! violation codes, so rollouts that produce garbage can still be scored and
//! penalized instead of crashing the training loop.

use crate::geom::BBox;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Parser and renderer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    /// Tool name a zoom payload must carry.
    pub tool_name: String,
    /// Maximum number of zoom steps a trace may contain.
    pub max_rounds: usize,
    /// When known, zoom boxes must lie within these bounds.
    pub image_bounds: Option<BBox>,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            tool_name: "image_zoom_in".to_string(),
            max_rounds: 6,
            image_bounds: None,
        }
    }
}

/// A zoom-in tool invocation on a region of the image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoomAction {
    pub name: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

/// What a step does after thinking: either a zoom call or the final answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepPayload {
    Zoom(ZoomAction),
    Answer(String),
}

/// One turn: a textual rationale plus exactly one of a tool call or an answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub think: String,
    #[serde(flatten)]
    pub payload: StepPayload,
}

impl TraceStep {
    pub fn zoom(think: impl Into<String>, action: ZoomAction) -> Self {
        Self {
            think: think.into(),
            payload: StepPayload::Zoom(action),
        }
    }

    pub fn answer(think: impl Into<String>, answer: impl Into<String>) -> Self {
        Self {
            think: think.into(),
            payload: StepPayload::Answer(answer.into()),
        }
    }

    pub fn is_zoom(&self) -> bool {
        matches!(self.payload, StepPayload::Zoom(_))
    }
}

/// An ordered multi-turn trajectory. Complete iff the final step answers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
}

impl Trace {
    pub fn new(steps: Vec<TraceStep>) -> Self {
        Self { steps }
    }

    /// The terminal answer, when present.
    pub fn answer(&self) -> Option<&str> {
        match self.steps.last().map(|s| &s.payload) {
            Some(StepPayload::Answer(a)) => Some(a.as_str()),
            _ => None,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.answer().is_some()
    }

    pub fn zoom_count(&self) -> usize {
        self.steps.iter().filter(|s| s.is_zoom()).count()
    }

    /// Zoom actions in trace order, without cloning.
    pub fn zoom_actions(&self) -> impl Iterator<Item = &ZoomAction> {
        self.steps.iter().filter_map(|s| match &s.payload {
            StepPayload::Zoom(z) => Some(z),
            StepPayload::Answer(_) => None,
        })
    }

    /// Checks the structural invariants `render_trace` relies on.
    pub fn validate(&self, cfg: &TraceConfig) -> Result<(), TraceError> {
        if self.steps.is_empty() {
            return Err(TraceError::EmptyTrace);
        }
        if self.zoom_count() > cfg.max_rounds {
            return Err(TraceError::TooManyRounds(self.zoom_count(), cfg.max_rounds));
        }
        for (i, step) in self.steps.iter().enumerate() {
            if step.think.trim().is_empty() {
                return Err(TraceError::EmptyThink(i));
            }
            if contains_reserved_tag(&step.think) {
                return Err(TraceError::ReservedText(i));
            }
            match &step.payload {
                StepPayload::Answer(a) => {
                    if i + 1 != self.steps.len() {
                        return Err(TraceError::AnswerNotTerminal(i));
                    }
                    if contains_reserved_tag(a) {
                        return Err(TraceError::ReservedText(i));
                    }
                }
                StepPayload::Zoom(z) => {
                    if z.name != cfg.tool_name {
                        return Err(TraceError::WrongToolName(z.name.clone()));
                    }
                    if let Some(bounds) = &cfg.image_bounds {
                        if !bounds.contains(&z.bbox) {
                            return Err(TraceError::ZoomOutOfBounds(i));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Grammar violations the parser reports. Serialized in kebab-case, e.g.
/// `"answer-with-tool"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Violation {
    /// An opened tag never closes.
    UnclosedTag,
    /// A step carries both a tool call and an answer.
    AnswerWithTool,
    /// A step lacks a (nonempty) think segment.
    MissingThink,
    /// Tool payload is not the canonical zoom object.
    BadToolPayload,
    /// Unexpected content where the grammar allows none.
    TrailingGarbage,
    /// More zoom steps than the configured round limit.
    OverRoundLimit,
    /// The trace ended without a terminal answer.
    MissingAnswer,
}

/// Outcome of format checking; feeds the format-compliance reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormatVerdict {
    pub well_formed: bool,
    pub violations: Vec<Violation>,
}

impl FormatVerdict {
    pub fn clean() -> Self {
        Self {
            well_formed: true,
            violations: Vec::new(),
        }
    }
}

/// Errors from rendering an invalid trace.
#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("trace has no steps")]
    EmptyTrace,
    #[error("step {0} has an empty think segment")]
    EmptyThink(usize),
    #[error("step {0} text contains a reserved tag token")]
    ReservedText(usize),
    #[error("answer at step {0} is not the final step")]
    AnswerNotTerminal(usize),
    #[error("{0} zoom steps exceed the round limit of {1}")]
    TooManyRounds(usize, usize),
    #[error("zoom action names tool {0:?}, which is not the configured tool")]
    WrongToolName(String),
    #[error("zoom box at step {0} lies outside the image bounds")]
    ZoomOutOfBounds(usize),
}

/// Reward granted for format compliance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormatParams {
    pub r_fmt_ok: f64,
    pub r_fmt_bad: f64,
}

impl Default for FormatParams {
    fn default() -> Self {
        Self {
            r_fmt_ok: 0.5,
            r_fmt_bad: -0.5,
        }
    }
}

/// Format-compliance term of the total reward.
pub fn format_reward(verdict: &FormatVerdict, params: &FormatParams) -> f64 {
    if verdict.well_formed {
        params.r_fmt_ok
    } else {
        params.r_fmt_bad
    }
}

/// Zoom actions of a trace, in order. Malformed traces contribute only the
/// actions of their parsed valid prefix.
pub fn extract_actions(trace: &Trace) -> Vec<ZoomAction> {
    trace.zoom_actions().cloned().collect()
}

const RESERVED_TAGS: [&str; 6] = [
    "<think>",
    "</think>",
    "<tool_call>",
    "</tool_call>",
    "<answer>",
    "</answer>",
];

fn contains_reserved_tag(text: &str) -> bool {
    RESERVED_TAGS.iter().any(|t| text.contains(t))
}

#[derive(Serialize, Deserialize)]
struct ToolPayload {
    name: String,
    arguments: ToolArguments,
}

#[derive(Serialize, Deserialize)]
struct ToolArguments {
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

struct Scanner<'a> {
    s: &'a str,
    pos: usize,
}

impl<'a> Scanner<'a> {
    fn new(s: &'a str) -> Self {
        Self { s, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.s[self.pos..]
    }

    fn eof(&self) -> bool {
        self.pos >= self.s.len()
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.s.len() - trimmed.len();
    }

    fn eat(&mut self, token: &str) -> bool {
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn peek_is(&self, token: &str) -> bool {
        self.rest().starts_with(token)
    }

    /// Content up to (and consuming) `close`, or `None` when it never occurs.
    fn take_until(&mut self, close: &str) -> Option<&'a str> {
        let rel = self.rest().find(close)?;
        let content = &self.s[self.pos..self.pos + rel];
        self.pos += rel + close.len();
        Some(content)
    }
}

/// Best-effort parse of a raw trace string.
///
/// Returns the longest valid prefix as a [`Trace`] together with a
/// [`FormatVerdict`]; well-formed input yields empty violations. Zoom steps
/// beyond the round limit are dropped and flagged.
pub fn parse_trace(raw: &str, cfg: &TraceConfig) -> (Trace, FormatVerdict) {
    let mut sc = Scanner::new(raw);
    let mut steps: Vec<TraceStep> = Vec::new();
    let mut violations: Vec<Violation> = Vec::new();
    let mut zoom_count = 0usize;
    let mut complete = false;

    loop {
        sc.skip_ws();
        if sc.eof() {
            violations.push(if steps.is_empty() {
                Violation::MissingThink
            } else {
                Violation::MissingAnswer
            });
            break;
        }
        if !sc.eat("<think>") {
            violations.push(Violation::MissingThink);
            break;
        }
        let think = match sc.take_until("</think>") {
            Some(t) => t,
            None => {
                violations.push(Violation::UnclosedTag);
                break;
            }
        };
        if think.trim().is_empty() {
            violations.push(Violation::MissingThink);
            break;
        }

        sc.skip_ws();
        if sc.eof() {
            // A think with nothing after it: the trace ended mid-step.
            violations.push(Violation::MissingAnswer);
            break;
        }
        if sc.eat("<tool_call>") {
            let payload = match sc.take_until("</tool_call>") {
                Some(p) => p,
                None => {
                    violations.push(Violation::UnclosedTag);
                    break;
                }
            };
            let action = match parse_payload(payload, cfg) {
                Some(a) => a,
                None => {
                    violations.push(Violation::BadToolPayload);
                    break;
                }
            };
            if zoom_count == cfg.max_rounds {
                violations.push(Violation::OverRoundLimit);
                break;
            }
            zoom_count += 1;
            steps.push(TraceStep::zoom(think, action));

            sc.skip_ws();
            if sc.peek_is("<answer>") {
                violations.push(Violation::AnswerWithTool);
                break;
            }
        } else if sc.eat("<answer>") {
            let ans = match sc.take_until("</answer>") {
                Some(a) => a,
                None => {
                    violations.push(Violation::UnclosedTag);
                    break;
                }
            };
            steps.push(TraceStep::answer(think, ans));
            complete = true;
            sc.skip_ws();
            if !sc.eof() {
                violations.push(Violation::TrailingGarbage);
            }
            break;
        } else {
            violations.push(Violation::TrailingGarbage);
            break;
        }
    }

    let verdict = FormatVerdict {
        well_formed: complete && violations.is_empty(),
        violations,
    };
    (Trace::new(steps), verdict)
}

fn parse_payload(payload: &str, cfg: &TraceConfig) -> Option<ZoomAction> {
    let parsed: ToolPayload = serde_json::from_str(payload.trim()).ok()?;
    if parsed.name != cfg.tool_name {
        return None;
    }
    let bbox = BBox::try_from(parsed.arguments.bbox).ok()?;
    if let Some(bounds) = &cfg.image_bounds {
        if !bounds.contains(&bbox) {
            return None;
        }
    }
    Some(ZoomAction {
        name: parsed.name,
        bbox,
    })
}

/// Serializes a trace into the canonical tag format.
///
/// For every complete trace `t` that satisfies the invariants,
/// `parse_trace(&render_trace(&t, cfg)?, cfg)` reproduces `t` with empty
/// violations.
pub fn render_trace(trace: &Trace, cfg: &TraceConfig) -> Result<String, TraceError> {
    trace.validate(cfg)?;
    let mut out = String::new();
    for (i, step) in trace.steps.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str("<think>");
        out.push_str(&step.think);
        out.push_str("</think> ");
        match &step.payload {
            StepPayload::Zoom(z) => {
                let payload = ToolPayload {
                    name: z.name.clone(),
                    arguments: ToolArguments {
                        bbox: z.bbox.corners(),
                    },
                };
                out.push_str("<tool_call>");
                out.push_str(&serde_json::to_string(&payload).expect("payload serializes"));
                out.push_str("</tool_call>");
            }
            StepPayload::Answer(a) => {
                out.push_str("<answer>");
                out.push_str(a);
                out.push_str("</answer>");
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> TraceConfig {
        TraceConfig::default()
    }

    fn zoom(x1: f64, y1: f64, x2: f64, y2: f64) -> ZoomAction {
        ZoomAction {
            name: "image_zoom_in".into(),
            bbox: BBox::new(x1, y1, x2, y2).unwrap(),
        }
    }

    #[test]
    fn minimal_answer_trace() {
        let (trace, verdict) = parse_trace("<think>x</think> <answer>B</answer>", &cfg());
        assert!(verdict.well_formed);
        assert!(verdict.violations.is_empty());
        assert_eq!(trace.steps.len(), 1);
        assert_eq!(trace.answer(), Some("B"));
    }

    #[test]
    fn zoom_then_answer() {
        let raw = "<think>x</think> <tool_call>{\"name\":\"image_zoom_in\",\"arguments\":{\"box\":[1,2,3,4]}}</tool_call>\
                   <think>y</think> <answer>A</answer>";
        let (trace, verdict) = parse_trace(raw, &cfg());
        assert!(verdict.well_formed, "violations: {:?}", verdict.violations);
        assert_eq!(trace.steps.len(), 2);
        assert_eq!(trace.zoom_count(), 1);
        let actions = extract_actions(&trace);
        assert_eq!(actions[0].bbox, BBox::new(1.0, 2.0, 3.0, 4.0).unwrap());
        assert_eq!(trace.answer(), Some("A"));
    }

    #[test]
    fn answer_in_tool_step_is_flagged() {
        let raw = "<think>x</think> <tool_call>{\"name\":\"image_zoom_in\",\"arguments\":{\"box\":[1,2,3,4]}}</tool_call> <answer>A</answer>";
        let (trace, verdict) = parse_trace(raw, &cfg());
        assert!(!verdict.well_formed);
        assert_eq!(verdict.violations, vec![Violation::AnswerWithTool]);
        // The zoom step itself was a valid prefix; the dangling answer is not.
        assert_eq!(trace.steps.len(), 1);
        assert_eq!(trace.answer(), None);
    }

    #[test]
    fn violation_fixtures() {
        let cases: Vec<(&str, Violation)> = vec![
            ("", Violation::MissingThink),
            ("<think>x</think>", Violation::MissingAnswer),
            ("<think>x</think> <tool_call>{\"name\":\"image_zoom_in\",\"arguments\":{\"box\":[0,0,1,1]}}</tool_call>", Violation::MissingAnswer),
            ("<think>x", Violation::UnclosedTag),
            ("<think>x</think> <answer>B", Violation::UnclosedTag),
            ("<think>x</think> <tool_call>{\"name\":\"nope\"}", Violation::UnclosedTag),
            ("<think> </think> <answer>B</answer>", Violation::MissingThink),
            ("hello <think>x</think>", Violation::MissingThink),
            ("<think>x</think> <tool_call>not json</tool_call>", Violation::BadToolPayload),
            ("<think>x</think> <tool_call>{\"name\":\"other_tool\",\"arguments\":{\"box\":[0,0,1,1]}}</tool_call>", Violation::BadToolPayload),
            ("<think>x</think> <tool_call>{\"name\":\"image_zoom_in\",\"arguments\":{\"box\":[0,0,1]}}</tool_call>", Violation::BadToolPayload),
            ("<think>x</think> <tool_call>{\"name\":\"image_zoom_in\",\"arguments\":{\"box\":[5,0,1,1]}}</tool_call>", Violation::BadToolPayload),
            ("<think>x</think> <answer>B</answer> extra", Violation::TrailingGarbage),
            ("<think>x</think> banana", Violation::TrailingGarbage),
        ];
        for (raw, expected) in cases {
            let (_, verdict) = parse_trace(raw, &cfg());
            assert!(!verdict.well_formed, "input {raw:?} should be malformed");
            assert!(
                verdict.violations.contains(&expected),
                "input {raw:?}: expected {expected:?}, got {:?}",
                verdict.violations
            );
        }
    }

    #[test]
    fn over_round_limit_truncates() {
        let step = "<think>t</think> <tool_call>{\"name\":\"image_zoom_in\",\"arguments\":{\"box\":[0,0,1,1]}}</tool_call>\n";
        let raw = format!("{}{}", step.repeat(7), "<think>f</think> <answer>A</answer>");
        let (trace, verdict) = parse_trace(&raw, &cfg());
        assert!(verdict.violations.contains(&Violation::OverRoundLimit));
        assert_eq!(trace.zoom_count(), 6);
        assert_eq!(trace.answer(), None);
    }

    #[test]
    fn bounds_checked_when_known() {
        let mut c = cfg();
        c.image_bounds = Some(BBox::new(0.0, 0.0, 4.0, 4.0).unwrap());
        let raw = "<think>x</think> <tool_call>{\"name\":\"image_zoom_in\",\"arguments\":{\"box\":[1,2,3,8]}}</tool_call><think>y</think> <answer>A</answer>";
        let (_, verdict) = parse_trace(raw, &c);
        assert!(verdict.violations.contains(&Violation::BadToolPayload));
    }

    #[test]
    fn render_rejects_invalid_traces() {
        let c = cfg();
        assert_eq!(
            render_trace(&Trace::default(), &c),
            Err(TraceError::EmptyTrace)
        );
        let mid_answer = Trace::new(vec![
            TraceStep::answer("a", "B"),
            TraceStep::zoom("b", zoom(0.0, 0.0, 1.0, 1.0)),
        ]);
        assert_eq!(
            render_trace(&mid_answer, &c),
            Err(TraceError::AnswerNotTerminal(0))
        );
        let empty_think = Trace::new(vec![TraceStep::answer("  ", "B")]);
        assert_eq!(
            render_trace(&empty_think, &c),
            Err(TraceError::EmptyThink(0))
        );
        let tagged = Trace::new(vec![TraceStep::answer("a </think> b", "B")]);
        assert_eq!(render_trace(&tagged, &c), Err(TraceError::ReservedText(0)));
    }

    #[test]
    fn round_trip_three_steps() {
        let trace = Trace::new(vec![
            TraceStep::zoom("first look", zoom(1.0, 2.0, 3.0, 4.0)),
            TraceStep::zoom("closer", zoom(1.5, 2.5, 2.5, 3.5)),
            TraceStep::answer("conclude", "C"),
        ]);
        let rendered = render_trace(&trace, &cfg()).unwrap();
        let (parsed, verdict) = parse_trace(&rendered, &cfg());
        assert!(verdict.well_formed);
        assert_eq!(parsed, trace);
    }

    #[test]
    fn format_reward_defaults() {
        let p = FormatParams::default();
        assert_eq!(format_reward(&FormatVerdict::clean(), &p), 0.5);
        let bad = FormatVerdict {
            well_formed: false,
            violations: vec![Violation::OverRoundLimit],
        };
        assert_eq!(format_reward(&bad, &p), -0.5);
    }

    #[test]
    fn extract_actions_cases() {
        let (answer_only, _) = parse_trace("<think>x</think> <answer>B</answer>", &cfg());
        assert!(extract_actions(&answer_only).is_empty());

        let raw = "<think>a</think> <tool_call>{\"name\":\"image_zoom_in\",\"arguments\":{\"box\":[0,0,1,1]}}</tool_call>\
                   <think>b</think> <tool_call>{\"name\":\"image_zoom_in\",\"arguments\":{\"box\":[2,2,3,3]}}</tool_call>\
                   <think>c</think> garbage";
        let (trace, verdict) = parse_trace(raw, &cfg());
        assert!(!verdict.well_formed);
        assert_eq!(extract_actions(&trace).len(), 2);
    }

    #[test]
    fn step_serialization_shape() {
        let step = TraceStep::zoom("t", zoom(1.0, 2.0, 3.0, 4.0));
        let json = serde_json::to_string(&step).unwrap();
        assert_eq!(
            json,
            "{\"think\":\"t\",\"zoom\":{\"name\":\"image_zoom_in\",\"box\":[1.0,2.0,3.0,4.0]}}"
        );
        let ans = TraceStep::answer("t", "B");
        assert_eq!(
            serde_json::to_string(&ans).unwrap(),
            "{\"think\":\"t\",\"answer\":\"B\"}"
        );
        let verdict = FormatVerdict {
            well_formed: false,
            violations: vec![Violation::AnswerWithTool],
        };
        assert!(serde_json::to_string(&verdict)
            .unwrap()
            .contains("answer-with-tool"));
    }

    fn arb_text() -> impl Strategy<Value = String> {
        "[a-zA-Z0-9 ,.;:()-]{1,40}".prop_filter("non-blank", |s| !s.trim().is_empty())
    }

    fn arb_action() -> impl Strategy<Value = ZoomAction> {
        (0.0..20.0f64, 0.0..20.0f64, 0.1..10.0f64, 0.1..10.0f64).prop_map(|(x, y, w, h)| ZoomAction {
            name: "image_zoom_in".into(),
            bbox: BBox::new(x, y, x + w, y + h).unwrap(),
        })
    }

    fn arb_trace() -> impl Strategy<Value = Trace> {
        (
            proptest::collection::vec((arb_text(), arb_action()), 0..=6),
            arb_text(),
            arb_text(),
        )
            .prop_map(|(zooms, final_think, answer)| {
                let mut steps: Vec<TraceStep> = zooms
                    .into_iter()
                    .map(|(think, action)| TraceStep::zoom(think, action))
                    .collect();
                steps.push(TraceStep::answer(final_think, answer.trim().to_string()));
                Trace::new(steps)
            })
    }

    proptest! {
        #[test]
        fn round_trip_identity(trace in arb_trace()) {
            let c = cfg();
            let rendered = render_trace(&trace, &c).unwrap();
            let (parsed, verdict) = parse_trace(&rendered, &c);
            prop_assert!(verdict.well_formed, "violations: {:?}", verdict.violations);
            prop_assert_eq!(parsed, trace);
        }

        #[test]
        fn parser_is_prefix_monotone(trace in arb_trace(), cut in 0usize..400, suffix in "[a-z<>/ ]{0,20}") {
            let c = cfg();
            let full = render_trace(&trace, &c).unwrap();
            let cut = cut.min(full.len());
            if !full.is_char_boundary(cut) {
                return Ok(());
            }
            let prefix = &full[..cut];
            let (short, _) = parse_trace(prefix, &c);
            let extended = format!("{prefix}{suffix}");
            let (long, _) = parse_trace(&extended, &c);
            prop_assert!(long.steps.len() >= short.steps.len());
            prop_assert_eq!(&long.steps[..short.steps.len()], &short.steps[..]);
        }
    }
}
