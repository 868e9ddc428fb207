//! Zero-shot 3D part segmentation of colored point clouds by lifting
//! promptable 2D segmentation across rendered views, with instance labels
//! voted from a grounded 2D detector.
//!
//! Model backends sit behind the [`backends::Segmenter`] and
//! [`backends::Detector`] traits; oracle and noisy implementations driven by
//! ground truth make the whole pipeline runnable without any model.

pub mod backends;
pub mod extension;
pub mod formats;
pub mod geometry;
pub mod labeling;
pub mod merging;
pub mod metrics;
pub mod multiview;
pub mod pipeline;
pub mod scenes;

pub use backends::{DetectionBox, GroundTruth, Mask2D, TextPrompt};
pub use extension::Group3D;
pub use geometry::{ColoredPointCloud, PointIndexSet};
pub use labeling::{DecisionMatrix, VoteMatrix};
pub use merging::Part3D;
pub use metrics::EvaluationReport;
pub use multiview::{RenderProduct, Viewpoint};
pub use pipeline::PipelineConfig;
