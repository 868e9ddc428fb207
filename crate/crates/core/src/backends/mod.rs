//! Interfaces to the 2D foundation models the pipeline drives: a promptable
//! segmenter and a text-grounded box detector.
//!
//! Three families implement them: oracle backends that read ground truth
//! through the render's index map, noisy wrappers around the oracles with
//! seeded perturbations, and an HTTP client for a model-serving bridge. The
//! pipeline only sees the traits.

mod noisy;
mod oracle;
pub mod protocol;
mod remote;
mod rle;

pub use noisy::{NoiseParams, NoisyDetector, NoisySegmenter};
pub use oracle::{OracleDetector, OracleSegmenter};
pub use remote::{RemoteClient, RetryPolicy};
pub use rle::{Rle, RleError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::PointIndexSet;
use crate::multiview::{Pixel, RenderProduct};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    /// Transport failure or model unavailable; worth retrying.
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("request rejected: {0}")]
    Rejected(String),
    #[error("malformed backend response: {0}")]
    Protocol(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Unavailable(_))
    }
}

/// A binary mask over one viewpoint's raster, stored run-length encoded.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask2D {
    pub viewpoint_id: u32,
    pub width: u32,
    pub height: u32,
    pub rle: Rle,
    pub score: f32,
}

impl Mask2D {
    /// `cells` are row-major linear offsets; they are sorted and deduplicated.
    pub fn from_cells(viewpoint_id: u32, width: u32, height: u32, mut cells: Vec<u32>, score: f32) -> Self {
        cells.sort_unstable();
        cells.dedup();
        debug_assert!(cells.last().is_none_or(|&c| (c as u64) < width as u64 * height as u64));
        Self { viewpoint_id, width, height, rle: Rle::encode(&cells), score }
    }

    pub fn from_pixels(viewpoint_id: u32, width: u32, height: u32, pixels: &[Pixel], score: f32) -> Self {
        let cells = pixels.iter().map(|p| p.y * width + p.x).collect();
        Self::from_cells(viewpoint_id, width, height, cells, score)
    }

    pub fn cells(&self) -> Vec<u32> {
        self.rle.decode()
    }

    pub fn pixels(&self) -> Vec<Pixel> {
        self.rle.decode().into_iter().map(|c| Pixel::new(c % self.width, c / self.width)).collect()
    }

    pub fn area(&self) -> usize {
        self.rle.area()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }
}

/// A detector box with inclusive pixel bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionBox {
    pub viewpoint_id: u32,
    pub class_index: usize,
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
    pub score: f32,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("prompt must name at least one part class")]
    Empty,
    #[error("blank part name at position {0}")]
    BlankName(usize),
}

/// Ordered part-class names given to the detector. Holds part names only;
/// the object category never appears in it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextPrompt {
    class_names: Vec<String>,
}

impl TextPrompt {
    pub fn new(class_names: Vec<String>) -> Result<Self, PromptError> {
        if class_names.is_empty() {
            return Err(PromptError::Empty);
        }
        let class_names: Vec<String> = class_names.into_iter().map(|s| s.trim().to_string()).collect();
        if let Some(pos) = class_names.iter().position(|s| s.is_empty()) {
            return Err(PromptError::BlankName(pos));
        }
        Ok(Self { class_names })
    }

    /// Parses a comma-separated list such as `"lid,handle,spout"`.
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        if text.trim().is_empty() {
            return Err(PromptError::Empty);
        }
        Self::new(text.split(',').map(str::to_string).collect())
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn len(&self) -> usize {
        self.class_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }

    /// Comma-joined form sent to a grounded detector.
    pub fn to_text(&self) -> String {
        self.class_names.join(",")
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroundTruthError {
    #[error("semantic ({semantic}) and instance ({instance}) arrays differ in length")]
    LengthMismatch { semantic: usize, instance: usize },
    #[error("point {point}: class index {class} outside the {classes}-entry class table")]
    BadClass { point: usize, class: i32, classes: usize },
    #[error("instance {instance} spans classes {first} and {second}")]
    MixedInstance { instance: i32, first: i32, second: i32 },
    #[error("point {0} has an instance id but no class")]
    UnclassedInstance(usize),
}

/// Per-point annotations for an object: semantic class index and instance
/// id, `-1` meaning unannotated. Serialized as the ground-truth sidecar
/// JSON (`{"classes": [...], "semantic": [...], "instance": [...]}`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub classes: Vec<String>,
    pub semantic: Vec<i32>,
    pub instance: Vec<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

impl GroundTruth {
    pub fn new(classes: Vec<String>, semantic: Vec<i32>, instance: Vec<i32>) -> Result<Self, GroundTruthError> {
        let gt = Self { classes, semantic, instance, category: None };
        gt.validate()?;
        Ok(gt)
    }

    pub fn with_category(mut self, category: impl Into<String>) -> Self {
        self.category = Some(category.into());
        self
    }

    pub fn validate(&self) -> Result<(), GroundTruthError> {
        if self.semantic.len() != self.instance.len() {
            return Err(GroundTruthError::LengthMismatch {
                semantic: self.semantic.len(),
                instance: self.instance.len(),
            });
        }
        let mut owner = std::collections::BTreeMap::new();
        for (point, (&class, &inst)) in self.semantic.iter().zip(&self.instance).enumerate() {
            if class < -1 || class >= self.classes.len() as i32 {
                return Err(GroundTruthError::BadClass { point, class, classes: self.classes.len() });
            }
            if inst < 0 {
                continue;
            }
            if class < 0 {
                return Err(GroundTruthError::UnclassedInstance(point));
            }
            let first = *owner.entry(inst).or_insert(class);
            if first != class {
                return Err(GroundTruthError::MixedInstance { instance: inst, first, second: class });
            }
        }
        Ok(())
    }

    pub fn num_points(&self) -> usize {
        self.instance.len()
    }

    /// Instance of `point`, `None` if unannotated.
    pub fn instance_of(&self, point: u32) -> Option<i32> {
        match self.instance[point as usize] {
            i if i < 0 => None,
            i => Some(i),
        }
    }

    /// Distinct annotated instance ids, ascending.
    pub fn instance_ids(&self) -> Vec<i32> {
        let set: std::collections::BTreeSet<i32> = self.instance.iter().copied().filter(|&i| i >= 0).collect();
        set.into_iter().collect()
    }

    pub fn instance_points(&self, instance: i32) -> PointIndexSet {
        PointIndexSet::from_sorted(
            (0..self.instance.len() as u32).filter(|&p| self.instance[p as usize] == instance).collect(),
        )
        .expect("ascending")
    }

    /// `(instance id, class index, points)` for every annotated instance.
    pub fn instances(&self) -> Vec<(i32, usize, PointIndexSet)> {
        let mut buckets: std::collections::BTreeMap<i32, (usize, Vec<u32>)> = Default::default();
        for (p, (&inst, &class)) in self.instance.iter().zip(&self.semantic).enumerate() {
            if inst >= 0 {
                buckets.entry(inst).or_insert_with(|| (class as usize, Vec::new())).1.push(p as u32);
            }
        }
        buckets
            .into_iter()
            .map(|(id, (class, pts))| (id, class, PointIndexSet::from_sorted(pts).expect("ascending")))
            .collect()
    }

    pub fn class_of_instance(&self, instance: i32) -> Option<usize> {
        self.instance.iter().position(|&i| i == instance).map(|p| self.semantic[p] as usize)
    }

    /// All annotated points.
    pub fn annotated(&self) -> PointIndexSet {
        PointIndexSet::from_sorted(
            (0..self.instance.len() as u32).filter(|&p| self.instance[p as usize] >= 0).collect(),
        )
        .expect("ascending")
    }

    /// Points whose semantic class is `class`.
    pub fn class_points(&self, class: usize) -> PointIndexSet {
        PointIndexSet::from_sorted(
            (0..self.semantic.len() as u32).filter(|&p| self.semantic[p as usize] == class as i32).collect(),
        )
        .expect("ascending")
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    /// Prompt listing every class, in table order.
    pub fn prompt(&self) -> Result<TextPrompt, PromptError> {
        TextPrompt::new(self.classes.clone())
    }
}

/// Promptable 2D segmenter.
pub trait Segmenter: Send + Sync {
    /// Automatic mode: segment everything the seed points touch. May return
    /// overlapping masks or none at all.
    fn segment_auto(&self, rp: &RenderProduct, seeds: &[Pixel]) -> Result<Vec<Mask2D>, BackendError>;

    /// Point-prompt mode: candidate masks for the region the prompt points
    /// indicate (a model may propose several granularities; the caller
    /// picks one).
    fn segment_prompted(&self, rp: &RenderProduct, points: &[Pixel]) -> Result<Vec<Mask2D>, BackendError>;
}

/// Text-grounded 2D box detector.
pub trait Detector: Send + Sync {
    fn detect(&self, rp: &RenderProduct, prompt: &TextPrompt) -> Result<Vec<DetectionBox>, BackendError>;
}

impl<T: Segmenter + ?Sized> Segmenter for std::sync::Arc<T> {
    fn segment_auto(&self, rp: &RenderProduct, seeds: &[Pixel]) -> Result<Vec<Mask2D>, BackendError> {
        (**self).segment_auto(rp, seeds)
    }

    fn segment_prompted(&self, rp: &RenderProduct, points: &[Pixel]) -> Result<Vec<Mask2D>, BackendError> {
        (**self).segment_prompted(rp, points)
    }
}

impl<T: Detector + ?Sized> Detector for std::sync::Arc<T> {
    fn detect(&self, rp: &RenderProduct, prompt: &TextPrompt) -> Result<Vec<DetectionBox>, BackendError> {
        (**self).detect(rp, prompt)
    }
}

fn check_in_bounds(rp: &RenderProduct, points: &[Pixel]) -> Result<(), BackendError> {
    match points.iter().find(|p| !rp.in_bounds(**p)) {
        Some(p) => Err(BackendError::Rejected(format!(
            "point ({}, {}) outside {}x{} raster",
            p.x,
            p.y,
            rp.width(),
            rp.height()
        ))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_parsing() {
        let p = TextPrompt::parse("lid, handle,spout").unwrap();
        assert_eq!(p.class_names(), &["lid", "handle", "spout"]);
        assert_eq!(p.index_of("spout"), Some(2));
        assert_eq!(p.to_text(), "lid,handle,spout");
        assert_eq!(TextPrompt::parse("  ").unwrap_err(), PromptError::Empty);
        assert_eq!(TextPrompt::parse("lid,,x").unwrap_err(), PromptError::BlankName(1));
    }

    #[test]
    fn ground_truth_validation() {
        let classes = vec!["a".to_string(), "b".to_string()];
        assert!(GroundTruth::new(classes.clone(), vec![0, 1, -1], vec![0, 1, -1]).is_ok());
        assert_eq!(
            GroundTruth::new(classes.clone(), vec![0, 1], vec![0, 0]).unwrap_err(),
            GroundTruthError::MixedInstance { instance: 0, first: 0, second: 1 }
        );
        assert!(matches!(
            GroundTruth::new(classes.clone(), vec![0, 2], vec![0, 1]).unwrap_err(),
            GroundTruthError::BadClass { point: 1, .. }
        ));
        assert!(GroundTruth::new(classes.clone(), vec![0], vec![0, 1]).is_err());
        assert_eq!(GroundTruth::new(classes, vec![-1], vec![3]).unwrap_err(), GroundTruthError::UnclassedInstance(0));
    }

    #[test]
    fn ground_truth_queries() {
        let gt =
            GroundTruth::new(vec!["leg".into(), "top".into()], vec![0, 1, 0, -1, 0], vec![2, 0, 5, -1, 2]).unwrap();
        assert_eq!(gt.instance_ids(), vec![0, 2, 5]);
        assert_eq!(gt.instance_points(2).as_slice(), &[0, 4]);
        assert_eq!(gt.class_of_instance(0), Some(1));
        assert_eq!(gt.annotated().as_slice(), &[0, 1, 2, 4]);
        assert_eq!(gt.class_points(0).as_slice(), &[0, 2, 4]);
        let inst = gt.instances();
        assert_eq!(inst.len(), 3);
        assert_eq!(inst[1], (2, 0, PointIndexSet::from_unsorted([0, 4])));
        let json = serde_json::to_string(&gt).unwrap();
        assert!(!json.contains("category"));
        let back: GroundTruth = serde_json::from_str(&json).unwrap();
        assert_eq!(back, gt);
    }

    #[test]
    fn mask_pixels_roundtrip() {
        let px = vec![Pixel::new(3, 0), Pixel::new(0, 1), Pixel::new(1, 1)];
        let m = Mask2D::from_pixels(4, 5, 3, &px, 0.5);
        assert_eq!(m.area(), 3);
        let mut sorted = px.clone();
        sorted.sort_by_key(|p| (p.y, p.x));
        assert_eq!(m.pixels(), sorted);
    }
}
