//! The needle-search environment: a glyph grid whose target region holds the
//! answer class, a coarse observation offering a shortcut hint, and a
//! deterministic zoom that reveals ground-truth glyphs.

use super::SimError;
use crate::geom::BBox;
use crate::task::Task;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Environment shape and task-distribution knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub grid_w: usize,
    pub grid_h: usize,
    /// Number of answer choices (key plus distractor classes).
    pub n_choices: usize,
    /// Glyph vocabulary size; must be at least `n_choices`.
    pub n_classes: usize,
    /// Probability that the coarse hint equals the answer key.
    pub p_hint: f64,
    /// Bounds on the target area as a fraction of the grid area.
    pub min_gt_area_frac: f64,
    pub max_gt_area_frac: f64,
    /// Target centers scatter up to this many cells from the grid center.
    pub hotspot_jitter: usize,
    /// Fraction of background cells filled with one dominant decoy class.
    /// A missed zoom therefore yields concentrated, actively misleading
    /// evidence instead of diffuse noise.
    pub decoy_concentration: f64,
    /// Zoom-round budget per episode.
    pub max_rounds: usize,
    /// Contextual padding declared on emitted tasks.
    pub pad_frac: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            grid_w: 6,
            grid_h: 6,
            n_choices: 4,
            n_classes: 8,
            p_hint: 0.7,
            min_gt_area_frac: 0.1,
            max_gt_area_frac: 0.17,
            hotspot_jitter: 0,
            decoy_concentration: 0.9,
            max_rounds: 6,
            pad_frac: 0.1,
        }
    }
}

/// One evidence-search task: a glyph grid with a hidden target region.
///
/// The key class appears only inside the target box; every other cell holds
/// a distractor class drawn from the wrong answer choices, so a missed zoom
/// yields actively misleading evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct NeedleTask {
    pub task_id: String,
    pub grid_w: usize,
    pub grid_h: usize,
    /// Row-major glyph class ids.
    pub grid: Vec<u16>,
    /// Target region in cell units.
    pub gt: BBox,
    pub key_class: u16,
    /// Choice classes in letter order; contains `key_class` exactly once.
    pub choice_classes: Vec<u16>,
    /// Class visible in the coarse observation.
    pub prior_hint: u16,
    pub max_rounds: usize,
    pub pad_frac: f64,
}

impl NeedleTask {
    pub fn glyph_at(&self, x: usize, y: usize) -> u16 {
        self.grid[y * self.grid_w + x]
    }

    pub fn bounds(&self) -> BBox {
        BBox::new(0.0, 0.0, self.grid_w as f64, self.grid_h as f64).expect("grid bounds")
    }

    pub fn class_name(class: u16) -> String {
        format!("glyph-{class:02}")
    }

    /// Index of the key within the choice list.
    pub fn key_choice_index(&self) -> usize {
        self.choice_classes
            .iter()
            .position(|&c| c == self.key_class)
            .expect("key class is always among the choices")
    }

    /// Index of the hint within the choice list.
    pub fn hint_choice_index(&self) -> usize {
        self.choice_classes
            .iter()
            .position(|&c| c == self.prior_hint)
            .expect("hint class is always among the choices")
    }

    /// Renders the task as a gradable multiple-choice record.
    pub fn to_task(&self) -> Task {
        Task {
            task_id: self.task_id.clone(),
            question: "Which glyph class occupies the target region?".to_string(),
            key: Self::class_name(self.key_class),
            choices: self.choice_classes.iter().map(|&c| Self::class_name(c)).collect(),
            image_bounds: self.bounds(),
            rationale: self.gt,
            pad_frac: self.pad_frac,
            weight: 1.0,
        }
    }
}

/// Zoom or commit to an answer choice.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvAction {
    Zoom(BBox),
    Answer(usize),
}

/// What the environment shows back.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvObservation {
    /// Reset view: the lossy coarse summary.
    Coarse {
        hint_class: u16,
        grid_w: usize,
        grid_h: usize,
    },
    /// Exact glyphs inside a zoom box, as `(x, y, class)` in row-major order.
    ZoomView { cells: Vec<(usize, usize, u16)> },
    /// Episode over; answer graded against the key.
    Terminal { correct: bool },
}

/// Episode state over one task.
#[derive(Debug)]
pub struct NeedleEnv<'a> {
    task: &'a NeedleTask,
    zooms_used: usize,
    terminal: bool,
}

impl<'a> NeedleEnv<'a> {
    pub fn reset(task: &'a NeedleTask) -> (Self, EnvObservation) {
        let obs = EnvObservation::Coarse {
            hint_class: task.prior_hint,
            grid_w: task.grid_w,
            grid_h: task.grid_h,
        };
        (
            Self {
                task,
                zooms_used: 0,
                terminal: false,
            },
            obs,
        )
    }

    pub fn zooms_used(&self) -> usize {
        self.zooms_used
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    /// Applies an action. Zooming returns the ground-truth glyphs inside the
    /// box; answering terminates the episode.
    pub fn step(&mut self, action: &EnvAction) -> Result<EnvObservation, SimError> {
        if self.terminal {
            return Err(SimError::EpisodeTerminated);
        }
        match action {
            EnvAction::Zoom(bbox) => {
                if self.zooms_used >= self.task.max_rounds {
                    return Err(SimError::RoundLimitExceeded {
                        limit: self.task.max_rounds,
                    });
                }
                self.zooms_used += 1;
                Ok(EnvObservation::ZoomView {
                    cells: self.cells_in(bbox),
                })
            }
            EnvAction::Answer(choice) => {
                self.terminal = true;
                let correct = self
                    .task
                    .choice_classes
                    .get(*choice)
                    .is_some_and(|&c| c == self.task.key_class);
                Ok(EnvObservation::Terminal { correct })
            }
        }
    }

    /// Cells whose unit square overlaps the box with positive area.
    fn cells_in(&self, bbox: &BBox) -> Vec<(usize, usize, u16)> {
        let x_lo = bbox.x1().floor().max(0.0) as usize;
        let y_lo = bbox.y1().floor().max(0.0) as usize;
        let x_hi = (bbox.x2().ceil() as usize).min(self.task.grid_w);
        let y_hi = (bbox.y2().ceil() as usize).min(self.task.grid_h);
        let mut cells = Vec::new();
        for y in y_lo..y_hi {
            for x in x_lo..x_hi {
                let overlap_w = (bbox.x2().min((x + 1) as f64) - bbox.x1().max(x as f64)).max(0.0);
                let overlap_h = (bbox.y2().min((y + 1) as f64) - bbox.y1().max(y as f64)).max(0.0);
                if overlap_w * overlap_h > 0.0 {
                    cells.push((x, y, self.task.glyph_at(x, y)));
                }
            }
        }
        cells
    }
}

/// Draws a task from the configured distribution. Deterministic under the
/// supplied RNG stream.
pub fn generate_task(
    rng: &mut impl Rng,
    cfg: &EnvConfig,
    task_id: String,
) -> Result<NeedleTask, SimError> {
    if cfg.n_choices < 2 || cfg.n_classes < cfg.n_choices {
        return Err(SimError::InfeasibleConfig(format!(
            "need n_classes >= n_choices >= 2, got {} and {}",
            cfg.n_classes, cfg.n_choices
        )));
    }
    let grid_area = (cfg.grid_w * cfg.grid_h) as f64;
    let min_area = cfg.min_gt_area_frac * grid_area;
    let max_area = cfg.max_gt_area_frac * grid_area;

    // Feasible target shapes: at least 2 cells a side, area within bounds.
    let mut shapes: Vec<(usize, usize)> = Vec::new();
    for w in 2..=cfg.grid_w {
        for h in 2..=cfg.grid_h {
            let area = (w * h) as f64;
            if area >= min_area && area <= max_area {
                shapes.push((w, h));
            }
        }
    }
    let Some(&(w, h)) = shapes.as_slice().choose(rng) else {
        return Err(SimError::InfeasibleConfig(format!(
            "no target shape fits area fraction [{}, {}] on a {}x{} grid",
            cfg.min_gt_area_frac, cfg.max_gt_area_frac, cfg.grid_w, cfg.grid_h
        )));
    };

    // Center the target on the grid hotspot, jittered.
    let j = cfg.hotspot_jitter as i64;
    let dx = rng.gen_range(-j..=j);
    let dy = rng.gen_range(-j..=j);
    let x0 = ((cfg.grid_w as i64 - w as i64) / 2 + dx).clamp(0, (cfg.grid_w - w) as i64) as usize;
    let y0 = ((cfg.grid_h as i64 - h as i64) / 2 + dy).clamp(0, (cfg.grid_h - h) as i64) as usize;
    let gt = BBox::new(
        x0 as f64,
        y0 as f64,
        (x0 + w) as f64,
        (y0 + h) as f64,
    )
    .expect("target box within grid");

    // Key class plus distinct distractor classes, shuffled into letter order.
    let key_class = rng.gen_range(0..cfg.n_classes) as u16;
    let mut distractors: Vec<u16> = Vec::new();
    while distractors.len() < cfg.n_choices - 1 {
        let c = rng.gen_range(0..cfg.n_classes) as u16;
        if c != key_class && !distractors.contains(&c) {
            distractors.push(c);
        }
    }
    let mut choice_classes = distractors.clone();
    choice_classes.push(key_class);
    choice_classes.shuffle(rng);

    // The needle property: key glyphs fill the target; every other cell
    // holds a wrong-choice class, dominated by one decoy class so missed
    // zooms collect concentrated counter-evidence.
    let decoy = distractors[rng.gen_range(0..distractors.len())];
    let mut grid = vec![0u16; cfg.grid_w * cfg.grid_h];
    for y in 0..cfg.grid_h {
        for x in 0..cfg.grid_w {
            let inside = (x as f64) >= gt.x1()
                && ((x + 1) as f64) <= gt.x2()
                && (y as f64) >= gt.y1()
                && ((y + 1) as f64) <= gt.y2();
            grid[y * cfg.grid_w + x] = if inside {
                key_class
            } else if rng.gen::<f64>() < cfg.decoy_concentration {
                decoy
            } else {
                distractors[rng.gen_range(0..distractors.len())]
            };
        }
    }

    let prior_hint = if rng.gen::<f64>() < cfg.p_hint {
        key_class
    } else {
        distractors[rng.gen_range(0..distractors.len())]
    };

    Ok(NeedleTask {
        task_id,
        grid_w: cfg.grid_w,
        grid_h: cfg.grid_h,
        grid,
        gt,
        key_class,
        choice_classes,
        prior_hint,
        max_rounds: cfg.max_rounds,
        pad_frac: cfg.pad_frac,
    })
}
