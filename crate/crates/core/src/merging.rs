//! Deduplication of self-extension groups into disjoint parts.

use crate::extension::Group3D;
use crate::geometry::{set_iou, PointIndexSet};

pub const DEFAULT_MERGE_THRESHOLD: f64 = 0.3;

/// A disjoint 3D part. `label` is a row of the prompt's class list once
/// labeling has run; `confidence` is meaningful only when labeled.
#[derive(Debug, Clone, PartialEq)]
pub struct Part3D {
    pub part_id: usize,
    pub points: PointIndexSet,
    pub label: Option<usize>,
    pub confidence: f64,
}

impl Part3D {
    pub fn unlabeled(part_id: usize, points: PointIndexSet) -> Self {
        Self { part_id, points, label: None, confidence: 0.0 }
    }
}

/// Merges groups given in creation order. See [`merge_point_sets`].
pub fn merge_groups(groups: &[Group3D], threshold: f64) -> Vec<Part3D> {
    let sets: Vec<&PointIndexSet> = groups.iter().map(|g| &g.points).collect();
    merge_point_sets(&sets, threshold)
}

/// Two-phase merge.
///
/// Phase 1 visits sets largest first (stable, so equal sizes keep input
/// order) and unions each into the first accumulated set it overlaps with
/// IoU above `threshold`, comparing against that set as grown so far;
/// otherwise it starts a new accumulated set.
///
/// Phase 2 emits accumulated sets in order, removing each one's points from
/// every part emitted before it, so smaller later sets keep contested points.
/// Parts left empty are dropped and the rest numbered from 0.
pub fn merge_point_sets<S: AsRef<PointIndexSet>>(sets: &[S], threshold: f64) -> Vec<Part3D> {
    let mut order: Vec<usize> = (0..sets.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(sets[i].as_ref().len()));

    let mut merged: Vec<PointIndexSet> = Vec::new();
    for i in order {
        let g = sets[i].as_ref();
        match merged.iter_mut().find(|m| set_iou(g, m) > threshold) {
            Some(m) => *m = m.union(g),
            None => merged.push(g.clone()),
        }
    }

    let mut parts: Vec<PointIndexSet> = Vec::with_capacity(merged.len());
    for m in merged {
        for earlier in parts.iter_mut() {
            if !earlier.is_disjoint(&m) {
                *earlier = earlier.difference(&m);
            }
        }
        parts.push(m);
    }
    parts.into_iter().filter(|p| !p.is_empty()).enumerate().map(|(id, p)| Part3D::unlabeled(id, p)).collect()
}
