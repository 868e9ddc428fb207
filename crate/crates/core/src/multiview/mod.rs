//! Multi-view correspondence: viewpoint layout, point-cloud rendering with a
//! per-pixel point index map, bi-directional projection between pixels and
//! points, and the view graph that orders extension sequences.

mod camera;
mod graph;
mod raster;

pub use camera::Camera;
pub use graph::{build_view_graph, extension_sequence, ExtensionSequence, ViewGraph};
pub use raster::{
    bip_backward, bip_forward, bip_forward_anchors, render, visible_subset, Pixel, RenderProduct, RenderSet,
    RenderSettings, EMPTY,
};

use thiserror::Error;

pub const DEFAULT_VIEW_COUNT: usize = 20;
pub const DEFAULT_CAMERA_DISTANCE: f64 = 2.2;
pub const DEFAULT_RESOLUTION: usize = 800;
pub const DEFAULT_SPLAT_RADIUS: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ViewError {
    #[error("viewpoint count must be at least 1")]
    NoViewpoints,
    #[error("pixel outside raster: ({x}, {y}) in {width}x{height}")]
    PixelOutsideRaster { x: u32, y: u32, width: usize, height: usize },
    #[error("unknown viewpoint id {0}")]
    UnknownViewpoint(u32),
    #[error("unreachable viewpoints: {0:?}")]
    UnreachableViewpoints(Vec<u32>),
    #[error("index map entry {index} out of range for a cloud of {len} points")]
    IndexOutOfRange { index: u32, len: usize },
    #[error("raster buffers do not match {width}x{height}")]
    RasterShape { width: usize, height: usize },
    #[error("resolution must be at least 1")]
    BadResolution,
}

/// A virtual camera on a sphere around the normalized object, looking at
/// the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewpoint {
    pub id: u32,
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
    pub distance: f64,
    pub is_start: bool,
}

impl Viewpoint {
    pub fn new(id: u32, elevation_deg: f64, azimuth_deg: f64, distance: f64, is_start: bool) -> Self {
        Self { id, elevation_deg, azimuth_deg, distance, is_start }
    }

    /// Camera center in world coordinates (+z up, azimuth measured from +x
    /// towards +y).
    pub fn position(&self) -> nalgebra::Point3<f64> {
        let (e, a) = (self.elevation_deg.to_radians(), self.azimuth_deg.to_radians());
        nalgebra::Point3::new(
            self.distance * e.cos() * a.cos(),
            self.distance * e.cos() * a.sin(),
            self.distance * e.sin(),
        )
    }
}

/// The canonical 20-view layout: `(elevation, azimuth, is_start)` per id.
const CANONICAL_20: [(f64, f64, bool); 20] = [
    (35.0, -35.0, true),
    (35.0, 10.0, false),
    (35.0, 55.0, true),
    (35.0, 100.0, false),
    (35.0, 145.0, true),
    (35.0, 190.0, false),
    (35.0, 235.0, true),
    (35.0, 280.0, false),
    (-10.0, -35.0, false),
    (-10.0, 55.0, false),
    (-10.0, 145.0, false),
    (-10.0, 235.0, false),
    (-55.0, -35.0, true),
    (-55.0, 10.0, false),
    (-55.0, 55.0, true),
    (-55.0, 100.0, false),
    (-55.0, 145.0, true),
    (-55.0, 190.0, false),
    (-55.0, 235.0, true),
    (-55.0, 280.0, false),
];

/// Places `count` viewpoints at `distance` from the origin.
///
/// * 20: the canonical table, 8 of them start viewpoints.
/// * 8: only the 8 canonical start viewpoints, renumbered 1..=8.
/// * 4: elevations {35, -55} x azimuths {-35, 145}, all start viewpoints.
/// * anything else: a Fibonacci sphere, odd ids are start viewpoints.
pub fn place_viewpoints(count: usize, distance: f64) -> Result<Vec<Viewpoint>, ViewError> {
    let layout: Vec<(f64, f64, bool)> = match count {
        0 => return Err(ViewError::NoViewpoints),
        20 => CANONICAL_20.to_vec(),
        8 => CANONICAL_20.iter().copied().filter(|v| v.2).collect(),
        4 => vec![(35.0, -35.0, true), (35.0, 145.0, true), (-55.0, -35.0, true), (-55.0, 145.0, true)],
        n => fibonacci_layout(n),
    };
    Ok(layout
        .into_iter()
        .enumerate()
        .map(|(i, (elev, azim, start))| Viewpoint::new(i as u32 + 1, elev, azim, distance, start))
        .collect())
}

fn fibonacci_layout(n: usize) -> Vec<(f64, f64, bool)> {
    let golden = 180.0 * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = if n == 1 { 0.0 } else { 1.0 - 2.0 * (i as f64 + 0.5) / n as f64 };
            let elev = z.clamp(-1.0, 1.0).asin().to_degrees();
            let azim = (golden * i as f64).rem_euclid(360.0);
            (elev, azim, i % 2 == 0)
        })
        .collect()
}
