//! Instance labeling of 3D parts from 2D detector boxes: cross-space
//! voting, the non-highest vote penalty, and per-part argmax.

use rayon::prelude::*;
use thiserror::Error;

use crate::backends::{BackendError, DetectionBox, Detector, TextPrompt};
use crate::extension::FailurePolicy;
use crate::geometry::{set_iou, PointIndexSet};
use crate::merging::Part3D;
use crate::multiview::{RenderProduct, RenderSet, EMPTY};

#[derive(Debug, Error)]
pub enum LabelingError {
    #[error("viewpoint {0}: {1}")]
    Backend(u32, #[source] BackendError),
    #[error("box from viewpoint {0} has no render")]
    MissingRender(u32),
    #[error("box class index {index} outside the {classes}-class prompt")]
    ClassIndex { index: usize, classes: usize },
}

/// Which spaces a box's best-matching part must agree in before it votes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VoteMode {
    /// Point-set match and box match must name the same part.
    #[default]
    Both,
    /// Box-vs-part-box IoU only.
    TwoD,
    /// Point-set IoU only.
    ThreeD,
}

impl std::str::FromStr for VoteMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "both" => Ok(Self::Both),
            "2d" => Ok(Self::TwoD),
            "3d" => Ok(Self::ThreeD),
            other => Err(format!("unknown vote mode `{other}` (expected both, 2d or 3d)")),
        }
    }
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl Rect {
    pub fn of_box(b: &DetectionBox) -> Self {
        Self { x0: b.x0, y0: b.y0, x1: b.x1, y1: b.y1 }
    }

    pub fn area(&self) -> u64 {
        (self.x1 - self.x0 + 1) as u64 * (self.y1 - self.y0 + 1) as u64
    }

    /// IoU counting covered pixels.
    pub fn iou(&self, other: &Rect) -> f64 {
        let (x0, y0) = (self.x0.max(other.x0), self.y0.max(other.y0));
        let (x1, y1) = (self.x1.min(other.x1), self.y1.min(other.y1));
        if x0 > x1 || y0 > y1 {
            return 0.0;
        }
        let inter = Rect { x0, y0, x1, y1 }.area();
        inter as f64 / (self.area() + other.area() - inter) as f64
    }
}

/// A box with no extent along some axis carries no area to vote with.
pub fn is_degenerate(b: &DetectionBox) -> bool {
    b.x0 >= b.x1 || b.y0 >= b.y1
}

/// Distinct points stored inside the box, clipped to the raster.
pub fn box_visible_points(bb: &DetectionBox, rp: &RenderProduct) -> PointIndexSet {
    let (w, h) = (rp.width() as u32, rp.height() as u32);
    if bb.x0 >= w || bb.y0 >= h {
        return PointIndexSet::new();
    }
    let (x1, y1) = (bb.x1.min(w - 1), bb.y1.min(h - 1));
    let map = rp.index_map();
    let mut out = Vec::new();
    for y in bb.y0..=y1 {
        let row = &map[(y * w) as usize..((y + 1) * w) as usize];
        out.extend(row[bb.x0 as usize..=x1 as usize].iter().copied().filter(|&i| i != EMPTY));
    }
    PointIndexSet::from_unsorted(out)
}

/// Tight box around the pixels the part's points won, `None` if the part is
/// invisible in `rp`.
pub fn part_box_2d(points: &PointIndexSet, rp: &RenderProduct) -> Option<Rect> {
    let w = rp.width() as u32;
    let mut r: Option<Rect> = None;
    for i in points {
        for &c in rp.cells_of(i) {
            let (x, y) = (c % w, c / w);
            r = Some(match r {
                None => Rect { x0: x, y0: y, x1: x, y1: y },
                Some(r) => Rect { x0: r.x0.min(x), y0: r.y0.min(y), x1: r.x1.max(x), y1: r.y1.max(y) },
            });
        }
    }
    r
}

/// Class-by-part vote counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteMatrix {
    rows: usize,
    cols: usize,
    cells: Vec<u32>,
}

impl VoteMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, cells: vec![0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<u32>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged vote matrix");
        Self { rows: rows.len(), cols, cells: rows.concat() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.cells[row * self.cols + col]
    }

    pub fn increment(&mut self, row: usize, col: usize) {
        self.cells[row * self.cols + col] += 1;
    }

    pub fn row(&self, row: usize) -> &[u32] {
        &self.cells[row * self.cols..(row + 1) * self.cols]
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().map(|&c| c as u64).sum()
    }

    pub fn to_rows(&self) -> Vec<Vec<u32>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }
}

/// Refined vote matrix from which labels are read.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionMatrix {
    rows: usize,
    cols: usize,
    cells: Vec<f64>,
}

impl From<&VoteMatrix> for DecisionMatrix {
    fn from(v: &VoteMatrix) -> Self {
        Self { rows: v.rows, cols: v.cols, cells: v.cells.iter().map(|&c| c as f64).collect() }
    }
}

impl DecisionMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.cells[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.cells[row * self.cols..(row + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    /// Applies the non-highest vote penalty to this matrix's own values.
    pub fn penalized(&self) -> Self {
        let mut cells = self.cells.clone();
        if self.cols > 0 {
            for row in cells.chunks_mut(self.cols) {
                penalize_row(row);
            }
        }
        Self { rows: self.rows, cols: self.cols, cells }
    }
}

fn penalize_row(row: &mut [f64]) {
    let max = row.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    for a in row.iter_mut() {
        *a = if *a == max {
            *a
        } else if 2.0 * *a >= max {
            *a / 2.0
        } else {
            0.0
        };
    }
}

/// Per row with maximum `m`: a vote equal to `m` is kept, one at least half
/// of `m` is halved, anything smaller is zeroed. All-zero rows stay zero.
pub fn cnvp(v: &VoteMatrix) -> DecisionMatrix {
    DecisionMatrix::from(v).penalized()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TdcmOutcome {
    pub votes: VoteMatrix,
    pub accepted: usize,
    pub discarded: usize,
}

/// Index (into `parts`) of the highest positive score, ties to the lower
/// part id. `None` when every score is zero.
fn best_part(parts: &[Part3D], scores: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.enumerate() {
        if s <= 0.0 {
            continue;
        }
        let better = match best {
            None => true,
            Some((b, bs)) => s > bs || (s == bs && parts[i].part_id < parts[b].part_id),
        };
        if better {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Matches every box to a part and tallies accepted votes by class (rows,
/// `classes` of them) and part (columns, in `parts` order). Degenerate boxes
/// and boxes without a positive match are discarded, as are boxes whose
/// point-set and box matches disagree under [`VoteMode::Both`].
pub fn tdcm_vote(
    boxes: &[DetectionBox],
    parts: &[Part3D],
    renders: &RenderSet,
    classes: usize,
    mode: VoteMode,
) -> Result<TdcmOutcome, LabelingError> {
    let mut votes = VoteMatrix::zeros(classes, parts.len());
    let mut part_boxes: std::collections::BTreeMap<u32, Vec<Option<Rect>>> = Default::default();
    let mut accepted = 0;
    for bb in boxes {
        if bb.class_index >= classes {
            return Err(LabelingError::ClassIndex { index: bb.class_index, classes });
        }
        let rp = renders.get(bb.viewpoint_id).ok_or(LabelingError::MissingRender(bb.viewpoint_id))?;
        if is_degenerate(bb) || parts.is_empty() {
            continue;
        }
        let s = (mode != VoteMode::TwoD)
            .then(|| {
                let f3d = box_visible_points(bb, rp);
                best_part(parts, parts.iter().map(|p| set_iou(&f3d, &p.points)))
            })
            .flatten();
        let t = (mode != VoteMode::ThreeD)
            .then(|| {
                let pboxes = part_boxes
                    .entry(bb.viewpoint_id)
                    .or_insert_with(|| parts.iter().map(|p| part_box_2d(&p.points, rp)).collect());
                let rect = Rect::of_box(bb);
                best_part(parts, pboxes.iter().map(|r| r.map_or(0.0, |r| rect.iou(&r))))
            })
            .flatten();
        let winner = match mode {
            VoteMode::Both => s.zip(t).filter(|(s, t)| s == t).map(|(s, _)| s),
            VoteMode::TwoD => t,
            VoteMode::ThreeD => s,
        };
        if let Some(col) = winner {
            votes.increment(bb.class_index, col);
            accepted += 1;
        }
    }
    Ok(TdcmOutcome { votes, accepted, discarded: boxes.len() - accepted })
}

/// Labels each part (column) with its highest-valued row, ties to the lower
/// row, and sets confidence to that value over the matrix maximum. Parts
/// whose column is all zero are left unlabeled with confidence 0.
pub fn assign_labels(d: &DecisionMatrix, parts: &[Part3D]) -> Vec<Part3D> {
    assert_eq!(d.cols(), parts.len(), "decision matrix and parts disagree");
    let global = d.cells.iter().copied().fold(0.0, f64::max);
    parts
        .iter()
        .enumerate()
        .map(|(col, p)| {
            let mut best: Option<(usize, f64)> = None;
            for row in 0..d.rows() {
                let v = d.get(row, col);
                if v > 0.0 && best.is_none_or(|(_, b)| v > b) {
                    best = Some((row, v));
                }
            }
            let (label, confidence) = match best {
                Some((row, v)) => (Some(row), v / global),
                None => (None, 0.0),
            };
            Part3D { label, confidence, ..p.clone() }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelingConfig {
    pub use_cnvp: bool,
    pub vote_mode: VoteMode,
    pub on_failure: FailurePolicy,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        Self { use_cnvp: true, vote_mode: VoteMode::Both, on_failure: FailurePolicy::Abort }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelingOutcome {
    pub parts: Vec<Part3D>,
    pub votes: VoteMatrix,
    pub decision: DecisionMatrix,
    pub boxes: usize,
    pub discarded: usize,
    pub failed_views: Vec<u32>,
}

/// Detects on every render, votes, optionally penalizes, and labels.
pub fn multi_model_labeling(
    parts: &[Part3D],
    renders: &RenderSet,
    detector: &dyn Detector,
    prompt: &TextPrompt,
    config: &LabelingConfig,
) -> Result<LabelingOutcome, LabelingError> {
    let per_view: Vec<(u32, Result<Vec<DetectionBox>, BackendError>)> = renders
        .iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|rp| (rp.viewpoint_id(), detector.detect(rp, prompt)))
        .collect();
    let mut boxes = Vec::new();
    let mut failed_views = Vec::new();
    for (id, res) in per_view {
        match res {
            Ok(b) => boxes.extend(b),
            Err(e) if config.on_failure == FailurePolicy::SkipView => {
                log::warn!("viewpoint {id}: detection skipped: {e}");
                failed_views.push(id);
            }
            Err(e) => return Err(LabelingError::Backend(id, e)),
        }
    }
    let outcome = tdcm_vote(&boxes, parts, renders, prompt.len(), config.vote_mode)?;
    log::info!("{} boxes, {} accepted, {} discarded", boxes.len(), outcome.accepted, outcome.discarded);
    let decision = if config.use_cnvp { cnvp(&outcome.votes) } else { DecisionMatrix::from(&outcome.votes) };
    Ok(LabelingOutcome {
        parts: assign_labels(&decision, parts),
        votes: outcome.votes,
        decision,
        boxes: boxes.len(),
        discarded: outcome.discarded,
        failed_views,
    })
}
