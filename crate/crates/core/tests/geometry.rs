mod support;

use nalgebra::Point3;
use partlift::geometry::{
    closest_to_centroid, fps, fps_order, normalize_to_unit_sphere, rotation_from_euler_deg, set_iou, ColoredPointCloud,
    GeometryError,
};
use partlift::PointIndexSet;
use proptest::prelude::*;
use support::*;

fn arbitrary_cloud() -> impl Strategy<Value = ColoredPointCloud> {
    prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0), 1..200).prop_map(|pts| {
        ColoredPointCloud::uniform(pts.into_iter().map(|(x, y, z)| Point3::new(x, y, z)).collect(), [1, 2, 3]).unwrap()
    })
}

/// Farthest point sampling by recomputing every distance at every step.
fn naive_fps(cloud: &ColoredPointCloud, subset: &[u32], n: usize) -> Vec<u32> {
    if n == 0 {
        return Vec::new();
    }
    let mut chosen = vec![closest_to_centroid(cloud, &PointIndexSet::from_unsorted(subset.iter().copied())).unwrap()];
    while chosen.len() < n.min(subset.len()) {
        let mut best = (f64::NEG_INFINITY, u32::MAX);
        for &i in subset {
            if chosen.contains(&i) {
                continue;
            }
            let d = chosen
                .iter()
                .map(|&c| (cloud.position(i) - cloud.position(c)).norm_squared())
                .fold(f64::INFINITY, f64::min);
            if d > best.0 {
                best = (d, i);
            }
        }
        chosen.push(best.1);
    }
    chosen
}

proptest! {
    #[test]
    fn set_iou_matches_reference(a in prop::collection::btree_set(0u32..60, 0..40), b in prop::collection::btree_set(0u32..60, 0..40)) {
        let (x, y) = (from_set(&a), from_set(&b));
        prop_assert_eq!(set_iou(&x, &y), ref_iou(&a, &b));
        prop_assert_eq!(set_iou(&x, &y), set_iou(&y, &x));
        prop_assert_eq!(x.union(&y).len() + x.intersection(&y).len(), a.len() + b.len());
        prop_assert_eq!(to_set(&x.difference(&y)), a.difference(&b).copied().collect());
    }

    #[test]
    fn fps_is_a_deterministic_farthest_subset(cloud in arbitrary_cloud(), n in 0usize..40, p in 0.1f64..1.0, seed in any::<u64>()) {
        let subset = from_set(&random_subset(&mut rng(seed), cloud.len(), p));
        if subset.is_empty() {
            prop_assert_eq!(fps(&cloud, &subset, n), Err(GeometryError::EmptySampleDomain));
            return Ok(());
        }
        let order = fps_order(&cloud, &subset, n).unwrap();
        prop_assert_eq!(order.len(), n.min(subset.len()));
        prop_assert!(order.iter().all(|&i| subset.contains(i)));
        prop_assert_eq!(&order, &naive_fps(&cloud, subset.as_slice(), n));
        prop_assert_eq!(fps(&cloud, &subset, n).unwrap(), fps(&cloud, &subset, n).unwrap());
    }

    #[test]
    fn normalization_is_invertible(cloud in arbitrary_cloud()) {
        let (norm, record) = normalize_to_unit_sphere(&cloud);
        for (p, q) in cloud.positions().iter().zip(norm.positions()) {
            prop_assert!(q.coords.norm() <= 1.0 + 1e-9);
            let back = record.invert(q);
            prop_assert!((back - p).norm() <= 1e-6 * p.coords.norm().max(1.0));
        }
        let (again, second) = normalize_to_unit_sphere(&norm);
        prop_assert_eq!(norm.colors(), cloud.colors());
        if cloud.positions().iter().any(|p| p != &cloud.positions()[0]) {
            prop_assert!(second.is_identity() || (second.scale - 1.0).abs() < 1e-9);
            for (a, b) in again.positions().iter().zip(norm.positions()) {
                prop_assert!((a - b).norm() < 1e-9);
            }
        }
    }
}

#[test]
fn normalized_cloud_is_returned_unchanged() {
    let cloud =
        ColoredPointCloud::uniform(vec![Point3::new(1.0, 0.0, 0.0), Point3::new(-1.0, 0.0, 0.0)], [0; 3]).unwrap();
    let (same, record) = normalize_to_unit_sphere(&cloud);
    assert!(record.is_identity());
    assert_eq!(same, cloud);
}

#[test]
fn rotations_are_rigid() {
    let r = rotation_from_euler_deg([30.0, -45.0, 120.0]);
    let cloud =
        ColoredPointCloud::uniform(vec![Point3::new(1.0, 2.0, 3.0), Point3::new(-2.0, 0.5, 1.0)], [0; 3]).unwrap();
    let rotated = cloud.rotated(&r);
    let d = |c: &ColoredPointCloud| (c.positions()[0] - c.positions()[1]).norm();
    assert!((d(&cloud) - d(&rotated)).abs() < 1e-12);
    assert!((rotated.positions()[0].coords.norm() - cloud.positions()[0].coords.norm()).abs() < 1e-12);
}
