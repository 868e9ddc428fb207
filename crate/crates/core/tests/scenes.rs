use std::collections::BTreeSet;

use partlift::geometry::rotation_from_euler_deg;
use partlift::scenes::{generate_scene, ColorScheme, SceneError, SceneSpec, Template};

#[test]
fn templates_have_the_documented_instances() {
    let (cloud, gt) = generate_scene(&SceneSpec::new(Template::Mug, 7)).unwrap();
    assert_eq!(cloud.len(), 20_000);
    assert_eq!(gt.classes, ["body", "handle", "lid"]);
    assert_eq!(gt.instances().iter().map(|(_, c, _)| *c).collect::<Vec<_>>(), [0, 1, 2]);
    assert_eq!(gt.category.as_deref(), Some("mug"));

    let (_, table) = generate_scene(&SceneSpec::new(Template::Table, 7)).unwrap();
    let classes: Vec<usize> = table.instances().iter().map(|(_, c, _)| *c).collect();
    assert_eq!(classes, [0, 1, 1, 1, 1]);
    assert_eq!(table.classes[1], "leg");

    for t in Template::ALL {
        let (cloud, gt) = generate_scene(&SceneSpec::new(t, 1).with_points(5000)).unwrap();
        assert_eq!(cloud.len(), 5000);
        assert!(gt.instance.iter().all(|&i| i >= 0), "{t}: every point carries an instance");
        assert_eq!(t.name().parse::<Template>().unwrap(), t);
    }
    assert!("teapot".parse::<Template>().is_err());
}

#[test]
fn generation_is_deterministic_in_the_seed() {
    let spec = SceneSpec::new(Template::Kettle, 42).with_points(3000);
    let (a, ga) = generate_scene(&spec).unwrap();
    let (b, gb) = generate_scene(&spec).unwrap();
    assert_eq!(a, b);
    assert_eq!(ga, gb);
    let (c, _) = generate_scene(&SceneSpec::new(Template::Kettle, 43).with_points(3000)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn rotation_is_rigid_and_keeps_labels() {
    let angles = [20.0, -75.0, 140.0];
    let (base, gt) = generate_scene(&SceneSpec::new(Template::Lamp, 3).with_points(4000)).unwrap();
    let (rotated, rgt) =
        generate_scene(&SceneSpec::new(Template::Lamp, 3).with_points(4000).with_rotation(angles)).unwrap();
    assert_eq!(gt, rgt);
    let r = rotation_from_euler_deg(angles);
    for (p, q) in base.positions().iter().zip(rotated.positions()) {
        assert!((r * p - q).norm() < 1e-12);
    }
}

#[test]
fn color_schemes_and_counts() {
    let mut spec = SceneSpec::new(Template::Table, 2).with_points(2000);
    spec.colors = ColorScheme::Monochrome;
    let (cloud, _) = generate_scene(&spec).unwrap();
    assert_eq!(cloud.colors().iter().collect::<BTreeSet<_>>().len(), 1);

    let (cloud, gt) = generate_scene(&SceneSpec::new(Template::Table, 2).with_points(2000)).unwrap();
    for (_, class, points) in gt.instances() {
        let colors: BTreeSet<[u8; 3]> = points.iter().map(|i| cloud.color(i)).collect();
        assert_eq!(colors.len(), 1, "class {class}");
    }

    spec.part_points = Some(vec![400, 300, 300, 300, 300]);
    let (cloud, gt) = generate_scene(&spec).unwrap();
    assert_eq!(cloud.len(), 1600);
    assert_eq!(gt.instance_points(0).len(), 400);
    spec.part_points = Some(vec![1000]);
    assert!(matches!(generate_scene(&spec), Err(SceneError::PartCounts { .. })));
    assert!(matches!(
        generate_scene(&SceneSpec::new(Template::Mug, 0).with_points(999)),
        Err(SceneError::TooFewPoints(999))
    ));
}
