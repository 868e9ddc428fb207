//! Independent reference implementations used as test oracles. They share no
//! code with the library beyond plain data accessors and favour obviousness
//! over speed.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use nalgebra::{Point3, Vector3};
use partlift::geometry::ColoredPointCloud;
use partlift::{GroundTruth, Part3D, PointIndexSet};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn to_set(s: &PointIndexSet) -> BTreeSet<u32> {
    s.iter().collect()
}

pub fn from_set(s: &BTreeSet<u32>) -> PointIndexSet {
    PointIndexSet::from_unsorted(s.iter().copied())
}

pub fn ref_iou(a: &BTreeSet<u32>, b: &BTreeSet<u32>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Deduplication written straight from the pseudocode: sort by size
/// (insertion sort, so equal sizes keep their order), fold each group into
/// the first accumulated set it overlaps strongly enough, then hand
/// contested points to the later set and drop empties.
pub fn reference_merge(groups: &[BTreeSet<u32>], t: f64) -> Vec<BTreeSet<u32>> {
    let mut sorted: Vec<&BTreeSet<u32>> = Vec::new();
    for g in groups {
        let pos = sorted.iter().position(|s| s.len() < g.len()).unwrap_or(sorted.len());
        sorted.insert(pos, g);
    }
    let mut b: Vec<BTreeSet<u32>> = Vec::new();
    for g in sorted {
        let mut placed = false;
        for m in b.iter_mut() {
            if ref_iou(g, m) > t {
                m.extend(g.iter().copied());
                placed = true;
                break;
            }
        }
        if !placed {
            b.push(g.clone());
        }
    }
    let mut c: Vec<BTreeSet<u32>> = Vec::new();
    for m in b {
        for earlier in c.iter_mut() {
            earlier.retain(|p| !m.contains(p));
        }
        c.push(m);
    }
    c.retain(|s| !s.is_empty());
    c
}

pub fn reference_bfs(adjacency: &BTreeMap<u32, BTreeSet<u32>>, start: u32) -> Vec<u32> {
    let mut seen = HashSet::from([start]);
    let mut queue = VecDeque::from([start]);
    let mut order = Vec::new();
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &n in &adjacency[&v] {
            if seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    order
}

/// Every point whose splat covers each cell, with its view depth, for a
/// camera written out from spherical angles.
pub struct ReferenceRaster {
    pub width: usize,
    pub candidates: Vec<Vec<(u32, f64)>>,
}

pub fn reference_raster(
    cloud: &ColoredPointCloud,
    elevation_deg: f64,
    azimuth_deg: f64,
    distance: f64,
    resolution: usize,
    splat_radius: i64,
) -> ReferenceRaster {
    let (e, a) = (elevation_deg.to_radians(), azimuth_deg.to_radians());
    let eye = Point3::new(distance * e.cos() * a.cos(), distance * e.cos() * a.sin(), distance * e.sin());
    let forward = Vector3::new(-e.cos() * a.cos(), -e.cos() * a.sin(), -e.sin());
    let right = Vector3::new(-a.sin(), a.cos(), 0.0);
    let up = Vector3::new(-e.sin() * a.cos(), -e.sin() * a.sin(), e.cos());
    let focal = resolution as f64 / 2.0 * 2.2;
    let mut candidates = vec![Vec::new(); resolution * resolution];
    for (i, p) in cloud.positions().iter().enumerate() {
        let depth = (p - eye).dot(&forward);
        if depth <= 0.0 {
            continue;
        }
        let u = resolution as f64 / 2.0 + focal * p.coords.dot(&right) / depth;
        let v = resolution as f64 / 2.0 - focal * p.coords.dot(&up) / depth;
        let (cx, cy) = (u.floor() as i64, v.floor() as i64);
        for dy in -splat_radius..=splat_radius {
            for dx in -splat_radius..=splat_radius {
                if dx * dx + dy * dy > splat_radius * splat_radius + splat_radius {
                    continue;
                }
                let (x, y) = (cx + dx, cy + dy);
                if x >= 0 && y >= 0 && (x as usize) < resolution && (y as usize) < resolution {
                    candidates[y as usize * resolution + x as usize].push((i as u32, depth));
                }
            }
        }
    }
    ReferenceRaster { width: resolution, candidates }
}

/// Uniform random points in the unit ball with random colors.
pub fn random_ball_cloud(rng: &mut impl Rng, n: usize) -> ColoredPointCloud {
    let mut positions = Vec::with_capacity(n);
    while positions.len() < n {
        let p = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if p.norm() <= 1.0 {
            positions.push(Point3::from(p));
        }
    }
    let colors = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    ColoredPointCloud::new(positions, colors).unwrap()
}

/// Random subset where each of `0..n` is kept with probability `p`.
pub fn random_subset(rng: &mut impl Rng, n: usize, p: f64) -> BTreeSet<u32> {
    (0..n as u32).filter(|_| rng.random_bool(p)).collect()
}

/// Instance id -> (class, points).
type Instances = BTreeMap<i32, (usize, BTreeSet<u32>)>;

fn annotated_truth(gt: &GroundTruth) -> (HashSet<u32>, Instances) {
    let mut annotated = HashSet::new();
    let mut instances = Instances::new();
    for (p, (&inst, &class)) in gt.instance.iter().zip(&gt.semantic).enumerate() {
        if inst >= 0 {
            annotated.insert(p as u32);
            instances.entry(inst).or_insert_with(|| (class as usize, BTreeSet::new())).1.insert(p as u32);
        }
    }
    (annotated, instances)
}

fn restricted(parts: &[Part3D], annotated: &HashSet<u32>) -> Vec<BTreeSet<u32>> {
    parts.iter().map(|p| p.points.iter().filter(|i| annotated.contains(i)).collect()).collect()
}

pub fn naive_average_iou(parts: &[Part3D], gt: &GroundTruth) -> f64 {
    let (annotated, instances) = annotated_truth(gt);
    let preds = restricted(parts, &annotated);
    let mut total = 0.0;
    for (_, truth) in instances.values() {
        let mut best: f64 = 0.0;
        for p in &preds {
            best = best.max(ref_iou(p, truth));
        }
        total += best;
    }
    total / instances.len() as f64
}

pub fn naive_label_accuracy(parts: &[Part3D], gt: &GroundTruth) -> f64 {
    let (annotated, instances) = annotated_truth(gt);
    let preds = restricted(parts, &annotated);
    let mut correct = 0;
    for (class, truth) in instances.values() {
        let ious: Vec<f64> = preds.iter().map(|p| ref_iou(p, truth)).collect();
        let best = ious.iter().copied().fold(0.0, f64::max);
        if best > 0.0 {
            let first = ious.iter().position(|&x| x == best).unwrap();
            if parts[first].label == Some(*class) {
                correct += 1;
            }
        }
    }
    correct as f64 / instances.len() as f64
}
