//! Self-extension: lift automatic 2D masks from a start view into 3D groups,
//! then grow each group view by view along an extension sequence.

use rayon::prelude::*;
use thiserror::Error;

use crate::backends::{BackendError, Mask2D, Segmenter};
use crate::geometry::{closest_to_centroid, fps, set_iou, ColoredPointCloud, PointIndexSet};
use crate::multiview::{bip_backward, bip_forward_anchors, ExtensionSequence, RenderProduct, RenderSet, ViewError};

pub const DEFAULT_FPS_COUNT: usize = 256;
pub const DEFAULT_SVE_FPS_COUNT: usize = 8;
pub const DEFAULT_MIN_GROUP_SIZE: usize = 1;
pub const DEFAULT_MIN_VISIBLE: usize = 1;

#[derive(Debug, Error)]
pub enum ExtensionError {
    #[error("viewpoint {0}: {1}")]
    Backend(u32, #[source] BackendError),
    #[error(transparent)]
    View(#[from] ViewError),
}

impl ExtensionError {
    pub fn is_backend(&self) -> bool {
        matches!(self, Self::Backend(..))
    }
}

/// What to do when a backend call still fails after the client's retries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FailurePolicy {
    #[default]
    Abort,
    /// Log and carry on as if the view had produced nothing.
    SkipView,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtensionConfig {
    pub fps_count: usize,
    pub sve_fps_count: usize,
    pub min_group_size: usize,
    pub min_visible: usize,
    pub extend: bool,
    pub on_failure: FailurePolicy,
}

impl Default for ExtensionConfig {
    fn default() -> Self {
        Self {
            fps_count: DEFAULT_FPS_COUNT,
            sve_fps_count: DEFAULT_SVE_FPS_COUNT,
            min_group_size: DEFAULT_MIN_GROUP_SIZE,
            min_visible: DEFAULT_MIN_VISIBLE,
            extend: true,
            on_failure: FailurePolicy::Abort,
        }
    }
}

/// A growing point set born from one mask at a start viewpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Group3D {
    pub points: PointIndexSet,
    pub origin_start_viewpoint: u32,
    /// Creation order within its run.
    pub ordinal: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExtensionStats {
    pub groups: usize,
    pub sve_calls: usize,
    /// SVE calls that added at least one point.
    pub extensions: usize,
    pub failed_calls: usize,
}

impl std::ops::AddAssign for ExtensionStats {
    fn add_assign(&mut self, o: Self) {
        self.groups += o.groups;
        self.sve_calls += o.sve_calls;
        self.extensions += o.extensions;
        self.failed_calls += o.failed_calls;
    }
}

fn backprojected(mask: &Mask2D, rp: &RenderProduct) -> Result<PointIndexSet, ExtensionError> {
    bip_backward(&mask.pixels(), rp)
        .map_err(|e| ExtensionError::Backend(rp.viewpoint_id(), BackendError::Protocol(e.to_string())))
}

/// Automatic segmentation at a start view, prompted with the pixels of
/// `fps_count` farthest-point samples of the visible points. Each mask
/// becomes a group of the points it covers; groups smaller than
/// `min_group_size` are dropped.
pub fn guided_auto_segment(
    cloud: &ColoredPointCloud,
    rp: &RenderProduct,
    segmenter: &dyn Segmenter,
    config: &ExtensionConfig,
) -> Result<Vec<Group3D>, ExtensionError> {
    let visible = rp.visible();
    if visible.is_empty() {
        log::info!("viewpoint {}: nothing visible, no groups", rp.viewpoint_id());
        return Ok(Vec::new());
    }
    let keypoints = fps(cloud, visible, config.fps_count).expect("visible set is nonempty");
    let seeds = bip_forward_anchors(&keypoints, rp);
    let masks = segmenter.segment_auto(rp, &seeds).map_err(|e| ExtensionError::Backend(rp.viewpoint_id(), e))?;
    let mut groups = Vec::with_capacity(masks.len());
    for mask in &masks {
        let points = backprojected(mask, rp)?;
        if points.len() >= config.min_group_size {
            groups.push(Group3D { points, origin_start_viewpoint: rp.viewpoint_id(), ordinal: groups.len() });
        }
    }
    Ok(groups)
}

/// Single-viewpoint extension. Prompts the segmenter at the visible part of
/// `group` (its farthest-point samples plus the point nearest its centroid),
/// picks the candidate mask whose points best match that visible part, and
/// returns the group united with those points. Groups with fewer than
/// `min_visible` visible points (by default: none) come back unchanged.
pub fn sve(
    cloud: &ColoredPointCloud,
    group: &Group3D,
    rp: &RenderProduct,
    segmenter: &dyn Segmenter,
    config: &ExtensionConfig,
) -> Result<Group3D, ExtensionError> {
    sve_counted(cloud, group, rp, segmenter, config).map(|(g, _)| g)
}

/// [`sve`], also reporting whether the segmenter was consulted.
fn sve_counted(
    cloud: &ColoredPointCloud,
    group: &Group3D,
    rp: &RenderProduct,
    segmenter: &dyn Segmenter,
    config: &ExtensionConfig,
) -> Result<(Group3D, bool), ExtensionError> {
    let vis = group.points.intersection(rp.visible());
    if vis.len() < config.min_visible.max(1) {
        return Ok((group.clone(), false));
    }
    let mut prompt_points = fps(cloud, &vis, config.sve_fps_count).expect("nonempty").into_vec();
    prompt_points.push(closest_to_centroid(cloud, &vis).expect("nonempty"));
    let prompt = bip_forward_anchors(&PointIndexSet::from_unsorted(prompt_points), rp);
    let candidates =
        segmenter.segment_prompted(rp, &prompt).map_err(|e| ExtensionError::Backend(rp.viewpoint_id(), e))?;
    let mut best: Option<(f64, PointIndexSet)> = None;
    for mask in &candidates {
        let points = backprojected(mask, rp)?;
        let iou = set_iou(&points, &vis);
        if best.as_ref().is_none_or(|(b, _)| iou > *b) {
            best = Some((iou, points));
        }
    }
    let grown = match best {
        Some((_, points)) => Group3D { points: group.points.union(&points), ..group.clone() },
        None => group.clone(),
    };
    Ok((grown, true))
}

/// One self-extension run: automatic segmentation at `seq`'s start view,
/// then, unless `config.extend` is off, SVE of every group at each later
/// view in order. Groups within a view are extended in parallel.
pub fn self_extension(
    cloud: &ColoredPointCloud,
    seq: &ExtensionSequence,
    renders: &RenderSet,
    segmenter: &dyn Segmenter,
    config: &ExtensionConfig,
) -> Result<(Vec<Group3D>, ExtensionStats), ExtensionError> {
    let render_of = |id: u32| renders.get(id).ok_or(ViewError::UnknownViewpoint(id));
    let start = render_of(seq.start())?;
    let mut stats = ExtensionStats::default();
    let mut groups = match guided_auto_segment(cloud, start, segmenter, config) {
        Ok(g) => g,
        Err(e) if e.is_backend() && config.on_failure == FailurePolicy::SkipView => {
            log::warn!("start {}: skipping view: {e}", seq.start());
            stats.failed_calls += 1;
            Vec::new()
        }
        Err(e) => return Err(e),
    };
    stats.groups = groups.len();
    if !config.extend {
        return Ok((groups, stats));
    }
    for &id in &seq.as_slice()[1..] {
        let rp = render_of(id)?;
        let results: Vec<_> = groups.par_iter().map(|g| sve_counted(cloud, g, rp, segmenter, config)).collect();
        let mut next = Vec::with_capacity(groups.len());
        for (old, res) in groups.into_iter().zip(results) {
            match res {
                Ok((g, prompted)) => {
                    stats.sve_calls += usize::from(prompted);
                    stats.extensions += usize::from(g.points.len() > old.points.len());
                    next.push(g);
                }
                Err(e) if e.is_backend() && config.on_failure == FailurePolicy::SkipView => {
                    log::warn!("start {}: {e}; group {} not extended here", seq.start(), old.ordinal);
                    stats.failed_calls += 1;
                    next.push(old);
                }
                Err(e) => return Err(e),
            }
        }
        groups = next;
    }
    Ok((groups, stats))
}
