use std::collections::BTreeMap;
use std::sync::Arc;

use super::{check_in_bounds, BackendError, DetectionBox, Detector, GroundTruth, Mask2D, Segmenter, TextPrompt};
use crate::multiview::{Pixel, RenderProduct, EMPTY};

/// Cells of each annotated instance visible in `rp`, keyed by instance id.
pub(crate) fn instance_cells(rp: &RenderProduct, gt: &GroundTruth) -> BTreeMap<i32, Vec<u32>> {
    let mut out: BTreeMap<i32, Vec<u32>> = BTreeMap::new();
    for (cell, &point) in rp.index_map().iter().enumerate() {
        if point == EMPTY {
            continue;
        }
        if let Some(inst) = gt.instance_of(point) {
            out.entry(inst).or_default().push(cell as u32);
        }
    }
    out
}

fn cells_of_instance(rp: &RenderProduct, gt: &GroundTruth, instance: i32) -> Vec<u32> {
    rp.index_map()
        .iter()
        .enumerate()
        .filter(|&(_, &p)| p != EMPTY && gt.instance[p as usize] == instance)
        .map(|(c, _)| c as u32)
        .collect()
}

/// Instance hit by the most prompt points; ties go to the lower id.
fn majority_instance(rp: &RenderProduct, gt: &GroundTruth, points: &[Pixel]) -> Option<i32> {
    let mut votes: BTreeMap<i32, usize> = BTreeMap::new();
    for &p in points {
        if let Some(inst) = rp.index_at(p).and_then(|i| gt.instance_of(i)) {
            *votes.entry(inst).or_default() += 1;
        }
    }
    // BTreeMap iterates ascending, and max_by_key keeps the last maximum, so
    // walk in reverse to keep the lowest id among equals.
    votes.into_iter().rev().max_by_key(|&(_, n)| n).map(|(inst, _)| inst)
}

/// The ideal segmenter: every mask is exactly the visible pixels of one
/// ground-truth instance.
#[derive(Debug, Clone)]
pub struct OracleSegmenter {
    gt: Arc<GroundTruth>,
}

impl OracleSegmenter {
    pub fn new(gt: Arc<GroundTruth>) -> Self {
        Self { gt }
    }

    fn check_cloud(&self, rp: &RenderProduct) -> Result<(), BackendError> {
        if rp.num_points() != self.gt.num_points() {
            return Err(BackendError::Rejected(format!(
                "render covers {} points, ground truth {}",
                rp.num_points(),
                self.gt.num_points()
            )));
        }
        Ok(())
    }
}

impl Segmenter for OracleSegmenter {
    /// One mask per instance touched by a seed, or per visible instance when
    /// no seeds are given; ordered by instance id.
    fn segment_auto(&self, rp: &RenderProduct, seeds: &[Pixel]) -> Result<Vec<Mask2D>, BackendError> {
        self.check_cloud(rp)?;
        check_in_bounds(rp, seeds)?;
        let seeded: Option<std::collections::BTreeSet<i32>> = (!seeds.is_empty())
            .then(|| seeds.iter().filter_map(|&p| rp.index_at(p).and_then(|i| self.gt.instance_of(i))).collect());
        let (w, h) = (rp.width() as u32, rp.height() as u32);
        Ok(instance_cells(rp, &self.gt)
            .into_iter()
            .filter(|(inst, _)| seeded.as_ref().is_none_or(|s| s.contains(inst)))
            .map(|(_, cells)| Mask2D::from_cells(rp.viewpoint_id(), w, h, cells, 1.0))
            .collect())
    }

    fn segment_prompted(&self, rp: &RenderProduct, points: &[Pixel]) -> Result<Vec<Mask2D>, BackendError> {
        self.check_cloud(rp)?;
        check_in_bounds(rp, points)?;
        let Some(inst) = majority_instance(rp, &self.gt, points) else {
            return Ok(Vec::new());
        };
        let cells = cells_of_instance(rp, &self.gt, inst);
        Ok(vec![Mask2D::from_cells(rp.viewpoint_id(), rp.width() as u32, rp.height() as u32, cells, 1.0)])
    }
}

/// The ideal detector: one tight box per visible instance whose class the
/// prompt names, score 1.
#[derive(Debug, Clone)]
pub struct OracleDetector {
    gt: Arc<GroundTruth>,
}

impl OracleDetector {
    pub fn new(gt: Arc<GroundTruth>) -> Self {
        Self { gt }
    }
}

impl Detector for OracleDetector {
    fn detect(&self, rp: &RenderProduct, prompt: &TextPrompt) -> Result<Vec<DetectionBox>, BackendError> {
        if rp.num_points() != self.gt.num_points() {
            return Err(BackendError::Rejected("render and ground truth disagree on point count".into()));
        }
        let w = rp.width() as u32;
        let mut boxes = Vec::new();
        for (inst, cells) in instance_cells(rp, &self.gt) {
            let class = self.gt.class_of_instance(inst).expect("instance is annotated");
            let Some(class_index) = prompt.index_of(&self.gt.classes[class]) else { continue };
            let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
            for c in cells {
                let (x, y) = (c % w, c / w);
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
            boxes.push(DetectionBox { viewpoint_id: rp.viewpoint_id(), class_index, x0, y0, x1, y1, score: 1.0 });
        }
        Ok(boxes)
    }
}
