//! Procedural multi-part objects with per-point ground truth.
//!
//! Every template is built from open surfaces (cylinder walls, discs, torus
//! arcs, frusta, box shells) arranged so that almost no sampled point is
//! hidden from every canonical viewpoint.

use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::backends::{DetectionBox, GroundTruth};
use crate::geometry::{rotation_from_euler_deg, ColoredPointCloud, PointIndexSet};
use crate::labeling::part_box_2d;
use crate::multiview::{place_viewpoints, render, RenderProduct, RenderSettings, Viewpoint, DEFAULT_CAMERA_DISTANCE};

pub const MIN_SCENE_POINTS: usize = 1000;
pub const DEFAULT_SCENE_POINTS: usize = 20_000;
/// Visibility guarantee checked at generation: every instance shows at
/// least this many points ...
pub const MIN_VISIBLE_POINTS: usize = 50;
/// ... in at least this many of the canonical views.
pub const MIN_VISIBLE_VIEWS: usize = 4;
const FLOOR_SHARE: f64 = 0.06;

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("unknown template `{0}` (expected mug, table, kettle, stapler or lamp)")]
    UnknownTemplate(String),
    #[error("{0} points requested, at least {MIN_SCENE_POINTS} required")]
    TooFewPoints(usize),
    #[error("{given} per-part counts given, template has {expected} parts")]
    PartCounts { given: usize, expected: usize },
    #[error("instance {instance} has {MIN_VISIBLE_POINTS}+ visible points in only {views} canonical views")]
    Hidden { instance: usize, views: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Template {
    Mug,
    Table,
    Kettle,
    Stapler,
    Lamp,
}

impl Template {
    pub const ALL: [Template; 5] = [Self::Mug, Self::Table, Self::Kettle, Self::Stapler, Self::Lamp];

    pub fn name(self) -> &'static str {
        match self {
            Self::Mug => "mug",
            Self::Table => "table",
            Self::Kettle => "kettle",
            Self::Stapler => "stapler",
            Self::Lamp => "lamp",
        }
    }

    pub fn classes(self) -> &'static [&'static str] {
        match self {
            Self::Mug => &["body", "handle", "lid"],
            Self::Table => &["tabletop", "leg"],
            Self::Kettle => &["body", "lid", "spout", "handle"],
            Self::Stapler => &["body", "lid"],
            Self::Lamp => &["base", "pole", "shade"],
        }
    }

    fn instances(self) -> Vec<InstanceShape> {
        let at = |x: f64, y: f64, z: f64| Isometry3::from_parts(Translation3::new(x, y, z), UnitQuaternion::identity());
        let posed = |t: Vector3<f64>, axis: Vector3<f64>, deg: f64| {
            Isometry3::from_parts(Translation3::from(t), UnitQuaternion::from_scaled_axis(axis * deg.to_radians()))
        };
        let id = Isometry3::identity();
        // Torus arcs are built in the local xy plane around +x; this stands
        // them up in the xz plane.
        let upright = |t: Vector3<f64>, yaw_deg: f64| {
            Isometry3::from_parts(
                Translation3::from(t),
                UnitQuaternion::from_scaled_axis(Vector3::z() * yaw_deg.to_radians())
                    * UnitQuaternion::from_scaled_axis(Vector3::x() * (PI / 2.0)),
            )
        };
        use Surface::*;
        match self {
            Self::Mug => vec![
                InstanceShape::new(
                    0,
                    vec![
                        (CylinderWall { r: 0.5, z0: -0.6, z1: 0.6 }, id),
                        (Annulus { r_in: 0.0, r_out: 0.5, z: -0.6 }, id),
                    ],
                ),
                InstanceShape::new(
                    1,
                    vec![(
                        TorusArc { major: 0.3, minor: 0.07, half_arc_deg: 80.0 },
                        upright(Vector3::new(0.55, 0.0, 0.0), 0.0),
                    )],
                ),
                InstanceShape::new(
                    2,
                    vec![
                        (Annulus { r_in: 0.0, r_out: 0.54, z: 0.66 }, id),
                        (CylinderWall { r: 0.54, z0: 0.62, z1: 0.66 }, id),
                    ],
                ),
            ],
            Self::Table => {
                let mut v = vec![InstanceShape::new(
                    0,
                    vec![(BoxShell { half: Vector3::new(0.8, 0.5, 0.04) }, at(0.0, 0.0, 0.44))],
                )];
                for (x, y) in [(-0.7, -0.4), (0.7, -0.4), (-0.7, 0.4), (0.7, 0.4)] {
                    v.push(InstanceShape::new(
                        1,
                        vec![
                            (CylinderWall { r: 0.05, z0: -0.6, z1: 0.4 }, at(x, y, 0.0)),
                            (Annulus { r_in: 0.0, r_out: 0.05, z: -0.6 }, at(x, y, 0.0)),
                        ],
                    ));
                }
                v
            }
            Self::Kettle => vec![
                InstanceShape::new(
                    0,
                    vec![
                        (CylinderWall { r: 0.5, z0: -0.5, z1: 0.3 }, id),
                        (Annulus { r_in: 0.0, r_out: 0.5, z: -0.5 }, id),
                        (Annulus { r_in: 0.26, r_out: 0.5, z: 0.3 }, id),
                    ],
                ),
                InstanceShape::new(
                    1,
                    vec![
                        (Frustum { r0: 0.24, r1: 0.07, z0: 0.33, z1: 0.46 }, id),
                        (Annulus { r_in: 0.0, r_out: 0.07, z: 0.46 }, id),
                    ],
                ),
                InstanceShape::new(
                    2,
                    vec![(
                        Frustum { r0: 0.09, r1: 0.04, z0: 0.0, z1: 0.5 },
                        posed(Vector3::new(0.52, 0.0, -0.15), Vector3::y(), 45.0),
                    )],
                ),
                InstanceShape::new(
                    3,
                    vec![(
                        TorusArc { major: 0.28, minor: 0.06, half_arc_deg: 80.0 },
                        upright(Vector3::new(-0.55, 0.0, -0.1), 180.0),
                    )],
                ),
            ],
            Self::Stapler => vec![
                InstanceShape::new(0, vec![(BoxShell { half: Vector3::new(0.7, 0.18, 0.08) }, at(0.0, 0.0, -0.22))]),
                InstanceShape::new(
                    1,
                    vec![(
                        BoxShell { half: Vector3::new(0.65, 0.14, 0.06) },
                        posed(Vector3::new(0.02, 0.0, 0.0), Vector3::y(), -6.0),
                    )],
                ),
            ],
            Self::Lamp => vec![
                InstanceShape::new(
                    0,
                    vec![
                        (CylinderWall { r: 0.38, z0: -0.75, z1: -0.63 }, id),
                        (Annulus { r_in: 0.0, r_out: 0.38, z: -0.63 }, id),
                        (Annulus { r_in: 0.0, r_out: 0.38, z: -0.75 }, id),
                    ],
                ),
                InstanceShape::new(1, vec![(CylinderWall { r: 0.045, z0: -0.63, z1: 0.3 }, id)]),
                InstanceShape::new(2, vec![(Frustum { r0: 0.48, r1: 0.2, z0: 0.05, z1: 0.6 }, id)]),
            ],
        }
    }
}

impl FromStr for Template {
    type Err = SceneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| SceneError::UnknownTemplate(s.to_string()))
    }
}

impl std::fmt::Display for Template {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ColorScheme {
    /// One palette color per class, so same-class instances look alike.
    #[default]
    PerClass,
    Monochrome,
}

impl FromStr for ColorScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per-class" => Ok(Self::PerClass),
            "mono" => Ok(Self::Monochrome),
            other => Err(format!("unknown color scheme `{other}` (expected per-class or mono)")),
        }
    }
}

const PALETTE: [[u8; 3]; 6] =
    [[200, 60, 50], [60, 140, 200], [90, 170, 80], [220, 170, 40], [150, 90, 180], [80, 80, 80]];
const MONOCHROME: [u8; 3] = [150, 150, 150];

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub template: Template,
    pub points: usize,
    /// Explicit per-instance counts overriding the area-based split.
    pub part_points: Option<Vec<usize>>,
    pub colors: ColorScheme,
    pub seed: u64,
    /// Euler angles in degrees, applied about the origin.
    pub rotation: Option<[f64; 3]>,
}

impl SceneSpec {
    pub fn new(template: Template, seed: u64) -> Self {
        Self {
            template,
            points: DEFAULT_SCENE_POINTS,
            part_points: None,
            colors: ColorScheme::PerClass,
            seed,
            rotation: None,
        }
    }

    pub fn with_points(mut self, points: usize) -> Self {
        self.points = points;
        self
    }

    pub fn with_rotation(mut self, euler_deg: [f64; 3]) -> Self {
        self.rotation = Some(euler_deg);
        self
    }
}

#[derive(Debug, Clone, Copy)]
enum Surface {
    CylinderWall { r: f64, z0: f64, z1: f64 },
    Annulus { r_in: f64, r_out: f64, z: f64 },
    TorusArc { major: f64, minor: f64, half_arc_deg: f64 },
    Frustum { r0: f64, r1: f64, z0: f64, z1: f64 },
    BoxShell { half: Vector3<f64> },
}

impl Surface {
    fn area(&self) -> f64 {
        match *self {
            Self::CylinderWall { r, z0, z1 } => 2.0 * PI * r * (z1 - z0),
            Self::Annulus { r_in, r_out, .. } => PI * (r_out * r_out - r_in * r_in),
            Self::TorusArc { major, minor, half_arc_deg } => 2.0 * half_arc_deg.to_radians() * major * 2.0 * PI * minor,
            Self::Frustum { r0, r1, z0, z1 } => PI * (r0 + r1) * ((r1 - r0).powi(2) + (z1 - z0).powi(2)).sqrt(),
            Self::BoxShell { half: h } => 8.0 * (h.x * h.y + h.y * h.z + h.x * h.z),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Point3<f64> {
        match *self {
            Self::CylinderWall { r, z0, z1 } => {
                let t = rng.random_range(0.0..2.0 * PI);
                Point3::new(r * t.cos(), r * t.sin(), rng.random_range(z0..=z1))
            }
            Self::Annulus { r_in, r_out, z } => {
                let t = rng.random_range(0.0..2.0 * PI);
                let rad = (rng.random::<f64>() * (r_out * r_out - r_in * r_in) + r_in * r_in).sqrt();
                Point3::new(rad * t.cos(), rad * t.sin(), z)
            }
            Self::TorusArc { major, minor, half_arc_deg } => {
                let h = half_arc_deg.to_radians();
                let theta = rng.random_range(-h..=h);
                let phi = loop {
                    let phi = rng.random_range(0.0..2.0 * PI);
                    if rng.random::<f64>() * (major + minor) <= major + minor * phi.cos() {
                        break phi;
                    }
                };
                let ring = major + minor * phi.cos();
                Point3::new(ring * theta.cos(), ring * theta.sin(), minor * phi.sin())
            }
            Self::Frustum { r0, r1, z0, z1 } => {
                let t = loop {
                    let t: f64 = rng.random();
                    if rng.random::<f64>() * r0.max(r1) <= r0 + (r1 - r0) * t {
                        break t;
                    }
                };
                let rad = r0 + (r1 - r0) * t;
                let a = rng.random_range(0.0..2.0 * PI);
                Point3::new(rad * a.cos(), rad * a.sin(), z0 + (z1 - z0) * t)
            }
            Self::BoxShell { half: h } => {
                let faces = [h.y * h.z, h.y * h.z, h.x * h.z, h.x * h.z, h.x * h.y, h.x * h.y];
                let mut pick = rng.random::<f64>() * faces.iter().sum::<f64>();
                let face = faces.iter().position(|&a| {
                    pick -= a;
                    pick < 0.0
                });
                let (u, v) = (rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
                match face.unwrap_or(5) {
                    0 => Point3::new(-h.x, u * h.y, v * h.z),
                    1 => Point3::new(h.x, u * h.y, v * h.z),
                    2 => Point3::new(u * h.x, -h.y, v * h.z),
                    3 => Point3::new(u * h.x, h.y, v * h.z),
                    4 => Point3::new(u * h.x, v * h.y, -h.z),
                    _ => Point3::new(u * h.x, v * h.y, h.z),
                }
            }
        }
    }
}

struct InstanceShape {
    class: usize,
    surfaces: Vec<(Surface, Isometry3<f64>)>,
}

impl InstanceShape {
    fn new(class: usize, surfaces: Vec<(Surface, Isometry3<f64>)>) -> Self {
        Self { class, surfaces }
    }

    fn area(&self) -> f64 {
        self.surfaces.iter().map(|(s, _)| s.area()).sum()
    }
}

/// Splits `total` proportionally to `weights` by largest remainder.
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut out: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let short = total - out.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        out[i] += 1;
    }
    out
}

/// Per-instance counts: proportional to area, but no instance below
/// `FLOOR_SHARE` of the total.
fn instance_counts(total: usize, areas: &[f64]) -> Vec<usize> {
    let floor = (FLOOR_SHARE * total as f64).ceil() as usize;
    let mut fixed = vec![false; areas.len()];
    loop {
        let free_total = total - floor * fixed.iter().filter(|&&f| f).count();
        let weights: Vec<f64> = areas.iter().zip(&fixed).map(|(&a, &f)| if f { 0.0 } else { a }).collect();
        let split = apportion(free_total, &weights);
        let mut changed = false;
        for i in 0..areas.len() {
            if !fixed[i] && split[i] < floor {
                fixed[i] = true;
                changed = true;
            }
        }
        if !changed {
            return split.iter().zip(&fixed).map(|(&n, &f)| if f { floor } else { n }).collect();
        }
    }
}

/// Generates the object described by `spec`, deterministic in its seed, and
/// checks the per-instance visibility guarantee.
pub fn generate_scene(spec: &SceneSpec) -> Result<(ColoredPointCloud, GroundTruth), SceneError> {
    let shapes = spec.template.instances();
    let counts = match &spec.part_points {
        Some(c) if c.len() != shapes.len() => {
            return Err(SceneError::PartCounts { given: c.len(), expected: shapes.len() });
        }
        Some(c) => c.clone(),
        None => instance_counts(spec.points, &shapes.iter().map(InstanceShape::area).collect::<Vec<_>>()),
    };
    let total: usize = counts.iter().sum();
    if total < MIN_SCENE_POINTS {
        return Err(SceneError::TooFewPoints(total));
    }
    let rotation = spec.rotation.map(rotation_from_euler_deg);
    let mut positions = Vec::with_capacity(total);
    let mut colors = Vec::with_capacity(total);
    let mut semantic = Vec::with_capacity(total);
    let mut instance = Vec::with_capacity(total);
    for (inst, (shape, &n)) in shapes.iter().zip(&counts).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (inst as u64 + 1));
        let per_surface = apportion(n, &shape.surfaces.iter().map(|(s, _)| s.area()).collect::<Vec<_>>());
        let color = match spec.colors {
            ColorScheme::PerClass => PALETTE[shape.class % PALETTE.len()],
            ColorScheme::Monochrome => MONOCHROME,
        };
        for ((surface, pose), m) in shape.surfaces.iter().zip(per_surface) {
            for _ in 0..m {
                let p = pose * surface.sample(&mut rng);
                positions.push(rotation.map_or(p, |r| r * p));
                colors.push(color);
                semantic.push(shape.class as i32);
                instance.push(inst as i32);
            }
        }
    }
    let cloud = ColoredPointCloud::new(positions, colors).expect("lengths match");
    let classes = spec.template.classes().iter().map(|c| c.to_string()).collect();
    let gt = GroundTruth::new(classes, semantic, instance)
        .expect("template labels are consistent")
        .with_category(spec.template.name());
    check_visibility(&cloud, &gt)?;
    Ok((cloud, gt))
}

/// Renders the normalized cloud from the 20 canonical views and checks the
/// visibility guarantee for every instance.
pub fn check_visibility(cloud: &ColoredPointCloud, gt: &GroundTruth) -> Result<(), SceneError> {
    let (normalized, _) = crate::geometry::normalize_to_unit_sphere(cloud);
    let views = place_viewpoints(20, DEFAULT_CAMERA_DISTANCE).expect("canonical layout");
    let renders: Vec<RenderProduct> =
        views.iter().map(|vp| render(&normalized, vp, RenderSettings::default())).collect();
    for (id, _, points) in gt.instances() {
        let views = renders.iter().filter(|rp| points.intersection_len(rp.visible()) >= MIN_VISIBLE_POINTS).count();
        if views < MIN_VISIBLE_VIEWS {
            return Err(SceneError::Hidden { instance: id as usize, views });
        }
    }
    Ok(())
}

/// Two parallel plates facing a single camera: a sparse square frame in
/// front and a dense panel behind it, seen whole through the frame's hole.
/// A box drawn tightly around the frame matches the frame in 2D, but the
/// points inside it are mostly the panel's.
#[derive(Debug, Clone)]
pub struct OcclusionFixture {
    pub cloud: ColoredPointCloud,
    pub gt: GroundTruth,
    pub viewpoint: Viewpoint,
    pub render: RenderProduct,
    /// Tight box around the frame, labeled with the frame's class.
    pub frame_box: DetectionBox,
    pub frame: PointIndexSet,
    pub panel: PointIndexSet,
}

pub fn occlusion_fixture() -> OcclusionFixture {
    let mut positions = Vec::new();
    let mut instance = Vec::new();
    for i in 0..=30 {
        for j in 0..=30 {
            let (y, z) = (-0.6 + 0.04 * i as f64, -0.6 + 0.04 * j as f64);
            if y.abs() > 0.38 || z.abs() > 0.38 {
                positions.push(Point3::new(0.3, y, z));
                instance.push(0);
            }
        }
    }
    for i in 0..36 {
        for j in 0..36 {
            positions.push(Point3::new(-0.3, -0.35 + 0.02 * i as f64, -0.35 + 0.02 * j as f64));
            instance.push(1);
        }
    }
    let colors = instance.iter().map(|&i| PALETTE[i as usize]).collect();
    let cloud = ColoredPointCloud::new(positions, colors).expect("lengths match");
    let gt = GroundTruth::new(vec!["frame".into(), "panel".into()], instance.clone(), instance).expect("consistent");
    let viewpoint = Viewpoint::new(1, 0.0, 0.0, DEFAULT_CAMERA_DISTANCE, true);
    let render = render(&cloud, &viewpoint, RenderSettings::default());
    let frame = gt.instance_points(0);
    let panel = gt.instance_points(1);
    let r = part_box_2d(&frame, &render).expect("frame faces the camera");
    let frame_box =
        DetectionBox { viewpoint_id: 1, class_index: 0, x0: r.x0, y0: r.y0, x1: r.x1, y1: r.y1, score: 1.0 };
    OcclusionFixture { cloud, gt, viewpoint, render, frame_box, frame, panel }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apportion_is_exact() {
        assert_eq!(apportion(10, &[1.0, 1.0, 1.0]), vec![4, 3, 3]);
        assert_eq!(apportion(7, &[0.0, 2.0]), vec![0, 7]);
        let c = instance_counts(20_000, &[10.0, 0.01, 0.01]);
        assert_eq!(c.iter().sum::<usize>(), 20_000);
        assert_eq!(&c[1..], &[1200, 1200]);
    }

    #[test]
    fn template_names_roundtrip() {
        for t in Template::ALL {
            assert_eq!(t.name().parse::<Template>().unwrap(), t);
        }
        assert_eq!("teapot".parse::<Template>(), Err(SceneError::UnknownTemplate("teapot".into())));
    }

    #[test]
    fn too_few_points() {
        let spec = SceneSpec::new(Template::Mug, 1).with_points(999);
        assert_eq!(generate_scene(&spec).unwrap_err(), SceneError::TooFewPoints(999));
    }

    #[test]
    fn surface_samples_lie_on_surfaces() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p = Surface::TorusArc { major: 0.3, minor: 0.07, half_arc_deg: 80.0 }.sample(&mut rng);
            let ring = (p.x * p.x + p.y * p.y).sqrt();
            assert!(((ring - 0.3).powi(2) + p.z * p.z - 0.0049).abs() < 1e-9);
            assert!(p.x > 0.0);
            let p = Surface::Frustum { r0: 0.4, r1: 0.2, z0: 0.0, z1: 1.0 }.sample(&mut rng);
            assert!(((p.x * p.x + p.y * p.y).sqrt() - (0.4 - 0.2 * p.z)).abs() < 1e-9);
        }
    }
}
