//! virl-core: a process-grounded reinforcement-learning engine for multi-turn
//! visual-rationale trajectories.
//!
//! The engine treats zoom-in actions as reasoning steps rather than optional
//! tool calls. It provides:
//!
//! 1. **Geometry** ([`geom`]): exact box arithmetic — IoU, ground-truth
//!    coverage, contextual padding, and non-maximum suppression.
//! 2. **Trace grammar** ([`trace`]): parser and serializer for the
//!    `<think>/<tool_call>/<answer>` multi-turn format, plus the format
//!    compliance reward.
//! 3. **Reward shaping** ([`reward`]): step fidelity with a signed correctness
//!    term and discrete refinement bonus, a smooth redundancy penalty over a
//!    soft action budget, and the total reward decomposition.
//! 4. **Credit assignment** ([`credit`]): group-relative trajectory advantages,
//!    rationale-class advantage modulation, token-level broadcast, and the
//!    clipped surrogate objective with asymmetric (clip-higher) bounds.
//! 5. **Simulation** ([`sim`]): a synthetic needle-search environment and toy
//!    policy whose training reproduces visual-thinking collapse under
//!    outcome-only reward, over-invocation under naive step rewards, and
//!    sparse-precise grounding under the full reward stack.
//! 6. **Metrics** ([`metrics`]): answer/rationale accuracy, rationale count,
//!    joint F1, and illusion diagnostics over scored trace corpora.
//! 7. **Data pipeline** ([`datapipe`]): generation, verification, and
//!    reasoning-centric filtering of process-grounded tasks over pluggable
//!    backends.

pub mod credit;
pub mod datapipe;
pub mod geom;
pub mod metrics;
pub mod reward;
pub mod rng;
pub mod sim;
pub mod task;
pub mod trace;

pub use geom::{BBox, ScoredBox};
pub use task::Task;
pub use trace::{FormatVerdict, Trace, TraceConfig, TraceStep, ZoomAction};
