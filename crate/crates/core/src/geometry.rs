//! Point-cloud types and the deterministic geometric primitives used across
//! the pipeline: normalization, farthest point sampling, centroid queries and
//! point-set IoU.

use nalgebra::{Point3, Rotation3, Vector3};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeometryError {
    #[error("positions ({positions}) and colors ({colors}) differ in length")]
    LengthMismatch { positions: usize, colors: usize },
    #[error("point cloud must contain at least one point")]
    EmptyCloud,
    #[error("empty sample domain")]
    EmptySampleDomain,
    #[error("point index {index} out of range for a cloud of {len} points")]
    IndexOutOfRange { index: u32, len: usize },
    #[error("point indices must be strictly increasing")]
    Unsorted,
}

/// An object point cloud: `N` positions with one 8-bit RGB color each.
#[derive(Debug, Clone, PartialEq)]
pub struct ColoredPointCloud {
    positions: Vec<Point3<f64>>,
    colors: Vec<[u8; 3]>,
}

impl ColoredPointCloud {
    pub fn new(positions: Vec<Point3<f64>>, colors: Vec<[u8; 3]>) -> Result<Self, GeometryError> {
        if positions.len() != colors.len() {
            return Err(GeometryError::LengthMismatch { positions: positions.len(), colors: colors.len() });
        }
        if positions.is_empty() {
            return Err(GeometryError::EmptyCloud);
        }
        Ok(Self { positions, colors })
    }

    /// Cloud with every point painted the same color.
    pub fn uniform(positions: Vec<Point3<f64>>, color: [u8; 3]) -> Result<Self, GeometryError> {
        let colors = vec![color; positions.len()];
        Self::new(positions, colors)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    /// Always false for a constructed cloud; provided for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point3<f64>] {
        &self.positions
    }

    pub fn colors(&self) -> &[[u8; 3]] {
        &self.colors
    }

    pub fn position(&self, index: u32) -> &Point3<f64> {
        &self.positions[index as usize]
    }

    pub fn color(&self, index: u32) -> [u8; 3] {
        self.colors[index as usize]
    }

    /// The set of every point index in the cloud.
    pub fn all_indices(&self) -> PointIndexSet {
        PointIndexSet::full(self.len())
    }

    /// Applies a rigid rotation about the origin; colors are untouched.
    pub fn rotated(&self, rotation: &Rotation3<f64>) -> Self {
        Self { positions: self.positions.iter().map(|p| rotation * p).collect(), colors: self.colors.clone() }
    }

    /// Arithmetic mean of the positions of `subset`.
    pub fn centroid_of(&self, subset: &PointIndexSet) -> Option<Point3<f64>> {
        if subset.is_empty() {
            return None;
        }
        let sum = subset.iter().fold(Vector3::zeros(), |acc, i| acc + self.position(i).coords);
        Some(Point3::from(sum / subset.len() as f64))
    }
}

/// Strictly increasing list of point indices into one cloud.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct PointIndexSet(Vec<u32>);

impl PointIndexSet {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    /// Wraps an already sorted, duplicate-free list.
    pub fn from_sorted(indices: Vec<u32>) -> Result<Self, GeometryError> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GeometryError::Unsorted);
        }
        Ok(Self(indices))
    }

    /// Sorts and deduplicates arbitrary input.
    pub fn from_unsorted<I: IntoIterator<Item = u32>>(indices: I) -> Self {
        let mut v: Vec<u32> = indices.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Self(v)
    }

    /// `{0, 1, ..., n - 1}`.
    pub fn full(n: usize) -> Self {
        Self((0..n as u32).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<u32> {
        self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.0.iter().copied()
    }

    pub fn contains(&self, index: u32) -> bool {
        self.0.binary_search(&index).is_ok()
    }

    /// Fails if any index is `>= n`.
    pub fn check_bounds(&self, n: usize) -> Result<(), GeometryError> {
        match self.0.last() {
            Some(&last) if last as usize >= n => Err(GeometryError::IndexOutOfRange { index: last, len: n }),
            _ => Ok(()),
        }
    }

    pub fn union(&self, other: &Self) -> Self {
        let (a, b) = (&self.0, &other.0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(a[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Self(out)
    }

    pub fn intersection(&self, other: &Self) -> Self {
        let mut out = Vec::new();
        self.merge_walk(other, |x| out.push(x));
        Self(out)
    }

    pub fn difference(&self, other: &Self) -> Self {
        let mut out = Vec::with_capacity(self.len());
        let b = &other.0;
        let mut j = 0;
        for &x in &self.0 {
            while j < b.len() && b[j] < x {
                j += 1;
            }
            if j >= b.len() || b[j] != x {
                out.push(x);
            }
        }
        Self(out)
    }

    pub fn intersection_len(&self, other: &Self) -> usize {
        let mut n = 0;
        self.merge_walk(other, |_| n += 1);
        n
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.intersection_len(other) == self.len()
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.intersection_len(other) == 0
    }

    /// Keeps only the indices for which `keep` returns true.
    pub fn filter(&self, mut keep: impl FnMut(u32) -> bool) -> Self {
        Self(self.0.iter().copied().filter(|&i| keep(i)).collect())
    }

    fn merge_walk(&self, other: &Self, mut on_common: impl FnMut(u32)) {
        let (a, b) = (&self.0, &other.0);
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    on_common(a[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
    }
}

impl FromIterator<u32> for PointIndexSet {
    fn from_iter<I: IntoIterator<Item = u32>>(iter: I) -> Self {
        Self::from_unsorted(iter)
    }
}

impl<'a> IntoIterator for &'a PointIndexSet {
    type Item = u32;
    type IntoIter = std::iter::Copied<std::slice::Iter<'a, u32>>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter().copied()
    }
}

impl AsRef<PointIndexSet> for PointIndexSet {
    fn as_ref(&self) -> &PointIndexSet {
        self
    }
}

/// `|a ∩ b| / |a ∪ b|`, or 0 when both sets are empty.
pub fn set_iou(a: &PointIndexSet, b: &PointIndexSet) -> f64 {
    let inter = a.intersection_len(b);
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Records the similarity transform applied by [`normalize_to_unit_sphere`]:
/// `normalized = (original - center) * scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizeRecord {
    pub center: Vector3<f64>,
    pub scale: f64,
}

impl NormalizeRecord {
    pub fn identity() -> Self {
        Self { center: Vector3::zeros(), scale: 1.0 }
    }

    pub fn is_identity(&self) -> bool {
        self.center == Vector3::zeros() && self.scale == 1.0
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from((p.coords - self.center) * self.scale)
    }

    pub fn invert(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(p.coords / self.scale + self.center)
    }
}

/// Centers the cloud on its centroid and scales it so the farthest point
/// lies on the unit sphere. A cloud that is already normalized (to within
/// 1e-12) is returned unchanged with an identity record; a degenerate cloud
/// (all points coincident) collapses onto the origin with unit scale.
pub fn normalize_to_unit_sphere(cloud: &ColoredPointCloud) -> (ColoredPointCloud, NormalizeRecord) {
    const SNAP: f64 = 1e-12;
    let n = cloud.len() as f64;
    let center = cloud.positions.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n;
    let max_norm = cloud.positions.iter().map(|p| (p.coords - center).norm()).fold(0.0, f64::max);

    if center.norm() < SNAP && (max_norm - 1.0).abs() < SNAP {
        return (cloud.clone(), NormalizeRecord::identity());
    }
    let scale = if max_norm > 0.0 { 1.0 / max_norm } else { 1.0 };
    let record = NormalizeRecord { center, scale };
    let positions = cloud.positions.iter().map(|p| record.apply(p)).collect();
    (ColoredPointCloud { positions, colors: cloud.colors.clone() }, record)
}

/// Index of the subset point nearest the subset centroid; ties go to the
/// lowest index.
pub fn closest_to_centroid(cloud: &ColoredPointCloud, subset: &PointIndexSet) -> Result<u32, GeometryError> {
    let centroid = cloud.centroid_of(subset).ok_or(GeometryError::EmptySampleDomain)?;
    let mut best = (f64::INFINITY, u32::MAX);
    for i in subset {
        let d = (cloud.position(i) - centroid).norm_squared();
        if d < best.0 {
            best = (d, i);
        }
    }
    Ok(best.1)
}

/// Farthest point sampling, returning points in selection order.
///
/// The seed is the centroid-closest point; every later pick maximizes the
/// distance to the nearest already-selected point, ties going to the lowest
/// index.
pub fn fps_order(cloud: &ColoredPointCloud, subset: &PointIndexSet, n: usize) -> Result<Vec<u32>, GeometryError> {
    let seed = closest_to_centroid(cloud, subset)?;
    let count = n.min(subset.len());
    if count == 0 {
        return Ok(Vec::new());
    }
    let members = subset.as_slice();
    let mut min_dist = vec![f64::INFINITY; members.len()];
    let mut taken = vec![false; members.len()];
    let mut order = Vec::with_capacity(count);

    let mut current = members.binary_search(&seed).expect("seed drawn from subset");
    loop {
        taken[current] = true;
        order.push(members[current]);
        if order.len() == count {
            break;
        }
        let anchor = cloud.position(members[current]);
        let mut next = (f64::NEG_INFINITY, usize::MAX);
        for (slot, &idx) in members.iter().enumerate() {
            if taken[slot] {
                continue;
            }
            let d = (cloud.position(idx) - anchor).norm_squared();
            if d < min_dist[slot] {
                min_dist[slot] = d;
            }
            if min_dist[slot] > next.0 {
                next = (min_dist[slot], slot);
            }
        }
        current = next.1;
    }
    Ok(order)
}

/// Farthest point sampling as a point set; see [`fps_order`].
pub fn fps(cloud: &ColoredPointCloud, subset: &PointIndexSet, n: usize) -> Result<PointIndexSet, GeometryError> {
    fps_order(cloud, subset, n).map(PointIndexSet::from_unsorted)
}

/// Rotation from XYZ Euler angles given in degrees.
pub fn rotation_from_euler_deg(angles: [f64; 3]) -> Rotation3<f64> {
    let [rx, ry, rz] = angles.map(f64::to_radians);
    Rotation3::from_euler_angles(rx, ry, rz)
}
