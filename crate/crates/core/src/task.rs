//! The task record: a question with an answer key, candidate choices, and the
//! ground-truth rationale region that justifies the answer.

use crate::geom::BBox;
use serde::{Deserialize, Serialize};

fn default_pad_frac() -> f64 {
    0.1
}

fn default_weight() -> f64 {
    1.0
}

/// A multiple-choice question grounded in a reference evidence region.
///
/// Coordinates of `rationale` and `image_bounds` share one unit system
/// (pixels or cells); the dataset declares which.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub question: String,
    /// The correct choice text; must be an element of `choices`.
    pub key: String,
    pub choices: Vec<String>,
    /// Full extent of the image, `[0, 0, w, h]` in most datasets.
    pub image_bounds: BBox,
    /// Ground-truth rationale region (unpadded).
    pub rationale: BBox,
    /// Contextual padding applied to the rationale before fidelity scoring.
    #[serde(default = "default_pad_frac")]
    pub pad_frac: f64,
    /// Sampling weight assigned by difficulty balancing; 1.0 when unset.
    #[serde(default = "default_weight")]
    pub weight: f64,
}

impl Task {
    /// Letter label ("A", "B", ...) of a choice index.
    pub fn choice_letter(index: usize) -> String {
        char::from(b'A' + index as u8).to_string()
    }

    /// Index of the answer key within `choices`, if present.
    pub fn key_index(&self) -> Option<usize> {
        self.choices.iter().position(|c| c == &self.key)
    }
}
