//! End-to-end orchestration: normalize, render, self-extend from every
//! start view, merge, then label.

use rayon::prelude::*;
use thiserror::Error;

use crate::backends::{Detector, Segmenter, TextPrompt};
use crate::extension::{self_extension, ExtensionConfig, ExtensionError, ExtensionStats, Group3D};
use crate::geometry::{normalize_to_unit_sphere, ColoredPointCloud, NormalizeRecord};
use crate::labeling::{multi_model_labeling, LabelingConfig, LabelingError, LabelingOutcome};
use crate::merging::{merge_groups, Part3D, DEFAULT_MERGE_THRESHOLD};
use crate::multiview::{
    build_view_graph, extension_sequence, place_viewpoints, render, RenderSet, RenderSettings, ViewError, ViewGraph,
    Viewpoint, DEFAULT_CAMERA_DISTANCE, DEFAULT_RESOLUTION, DEFAULT_SPLAT_RADIUS, DEFAULT_VIEW_COUNT,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    View(#[from] ViewError),
    #[error(transparent)]
    Extension(#[from] ExtensionError),
    #[error(transparent)]
    Labeling(#[from] LabelingError),
}

impl PipelineError {
    /// Whether a model backend, rather than the input, caused the failure.
    pub fn is_backend(&self) -> bool {
        matches!(self, Self::Extension(ExtensionError::Backend(..)) | Self::Labeling(LabelingError::Backend(..)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub views: usize,
    pub resolution: usize,
    pub splat_radius: u32,
    pub camera_distance: f64,
    pub extension: ExtensionConfig,
    pub merge_threshold: f64,
    pub labeling: LabelingConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            views: DEFAULT_VIEW_COUNT,
            resolution: DEFAULT_RESOLUTION,
            splat_radius: DEFAULT_SPLAT_RADIUS,
            camera_distance: DEFAULT_CAMERA_DISTANCE,
            extension: ExtensionConfig::default(),
            merge_threshold: DEFAULT_MERGE_THRESHOLD,
            labeling: LabelingConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn render_settings(&self) -> RenderSettings {
        RenderSettings { resolution: self.resolution, splat_radius: self.splat_radius }
    }
}

/// A normalized object with its cameras, view graph and renders.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub cloud: ColoredPointCloud,
    pub normalization: NormalizeRecord,
    pub viewpoints: Vec<Viewpoint>,
    pub graph: ViewGraph,
    pub renders: RenderSet,
}

impl Prepared {
    pub fn start_viewpoints(&self) -> impl Iterator<Item = &Viewpoint> {
        self.viewpoints.iter().filter(|v| v.is_start)
    }
}

pub fn prepare(cloud: &ColoredPointCloud, config: &PipelineConfig) -> Result<Prepared, PipelineError> {
    if config.resolution < 1 {
        return Err(ViewError::BadResolution.into());
    }
    let (cloud, normalization) = normalize_to_unit_sphere(cloud);
    let viewpoints = place_viewpoints(config.views, config.camera_distance)?;
    let graph = build_view_graph(&viewpoints);
    let settings = config.render_settings();
    let renders = RenderSet::new(viewpoints.par_iter().map(|vp| render(&cloud, vp, settings)).collect());
    Ok(Prepared { cloud, normalization, viewpoints, graph, renders })
}

#[derive(Debug, Clone)]
pub struct SegmentOutcome {
    /// Self-extension output of every run, in start-viewpoint order.
    pub groups: Vec<Group3D>,
    pub parts: Vec<Part3D>,
    pub stats: ExtensionStats,
}

/// Runs self-extension from every start viewpoint (concurrently) and
/// merges all resulting groups.
pub fn segment(
    prepared: &Prepared,
    segmenter: &dyn Segmenter,
    config: &PipelineConfig,
) -> Result<SegmentOutcome, PipelineError> {
    let (groups, stats) = extend_all(prepared, segmenter, &config.extension)?;
    let parts = merge_groups(&groups, config.merge_threshold);
    log::info!("{} groups merged into {} parts at T = {}", groups.len(), parts.len(), config.merge_threshold);
    Ok(SegmentOutcome { groups, parts, stats })
}

/// Self-extension from every start viewpoint, groups flattened in
/// start-viewpoint order.
pub fn extend_all(
    prepared: &Prepared,
    segmenter: &dyn Segmenter,
    config: &ExtensionConfig,
) -> Result<(Vec<Group3D>, ExtensionStats), PipelineError> {
    let starts: Vec<u32> = prepared.start_viewpoints().map(|v| v.id).collect();
    let runs: Vec<Result<(Vec<Group3D>, ExtensionStats), PipelineError>> = starts
        .par_iter()
        .map(|&s| {
            let seq = extension_sequence(&prepared.graph, s)?;
            Ok(self_extension(&prepared.cloud, &seq, &prepared.renders, segmenter, config)?)
        })
        .collect();
    let mut groups = Vec::new();
    let mut stats = ExtensionStats::default();
    for (start, run) in starts.iter().zip(runs) {
        let (g, s) = run?;
        log::info!(
            "start {start}: {} groups, {} SVE calls, {} extended, {} failed",
            s.groups,
            s.sve_calls,
            s.extensions,
            s.failed_calls
        );
        groups.extend(g);
        stats += s;
    }
    Ok((groups, stats))
}

pub fn label(
    prepared: &Prepared,
    parts: &[Part3D],
    detector: &dyn Detector,
    prompt: &TextPrompt,
    config: &PipelineConfig,
) -> Result<LabelingOutcome, PipelineError> {
    Ok(multi_model_labeling(parts, &prepared.renders, detector, prompt, &config.labeling)?)
}
