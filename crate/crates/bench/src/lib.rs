//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use partlift::backends::{Detector, OracleDetector, OracleSegmenter};
use partlift::pipeline::{prepare, segment, Prepared};
use partlift::scenes::{generate_scene, SceneSpec, Template};
use partlift::{DetectionBox, GroundTruth, Group3D, Part3D, PipelineConfig};

/// A prepared template with oracle backends and the intermediate products
/// each stage consumes.
pub struct Fixture {
    pub prepared: Prepared,
    pub gt: Arc<GroundTruth>,
    pub segmenter: OracleSegmenter,
    pub groups: Vec<Group3D>,
    pub parts: Vec<Part3D>,
    pub boxes: Vec<DetectionBox>,
    pub config: PipelineConfig,
}

pub fn fixture(template: Template, points: usize) -> Fixture {
    let (cloud, gt) = generate_scene(&SceneSpec::new(template, 1).with_points(points)).expect("template generates");
    let gt = Arc::new(gt);
    let config = PipelineConfig::default();
    let prepared = prepare(&cloud, &config).expect("default config is valid");
    let segmenter = OracleSegmenter::new(gt.clone());
    let out = segment(&prepared, &segmenter, &config).expect("oracle segmentation succeeds");
    let detector = OracleDetector::new(gt.clone());
    let prompt = gt.prompt().expect("template has classes");
    let boxes = prepared.renders.iter().flat_map(|rp| detector.detect(rp, &prompt).expect("oracle detects")).collect();
    Fixture { prepared, gt, segmenter, groups: out.groups, parts: out.parts, boxes, config }
}
