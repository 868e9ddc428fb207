mod support;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Point3;
use partlift::geometry::ColoredPointCloud;
use partlift::multiview::{
    bip_backward, bip_forward, build_view_graph, extension_sequence, place_viewpoints, render, Pixel, RenderSettings,
    ViewError, ViewGraph, Viewpoint, EMPTY,
};
use partlift::scenes::{generate_scene, SceneSpec, Template};
use partlift::RenderProduct;
use proptest::prelude::*;
use rand::Rng;
use support::*;

fn settings(resolution: usize) -> RenderSettings {
    RenderSettings { resolution, splat_radius: 1 }
}

/// The render agrees with the brute-force raster: a cell is empty exactly
/// when nothing covers it, and otherwise holds a covering point at the
/// nearest depth (up to the f32 depth buffer's precision).
fn assert_matches_reference(cloud: &ColoredPointCloud, vp: &Viewpoint, rp: &RenderProduct) {
    let reference = reference_raster(cloud, vp.elevation_deg, vp.azimuth_deg, vp.distance, rp.width(), 1);
    for (cell, cands) in reference.candidates.iter().enumerate() {
        let got = rp.index_map()[cell];
        if cands.is_empty() {
            assert_eq!(got, EMPTY, "cell {cell} should be empty");
            continue;
        }
        let nearest = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        let won = cands.iter().find(|c| c.0 == got);
        assert!(won.is_some_and(|w| w.1 <= nearest + 1e-5), "cell {cell}: {got} is not a nearest cover");
        assert_eq!(rp.image()[cell], cloud.color(got));
    }
}

#[test]
fn single_point_at_origin_splats_the_center() {
    let cloud = ColoredPointCloud::uniform(vec![Point3::origin()], [9, 9, 9]).unwrap();
    let vp = place_viewpoints(20, 2.2).unwrap()[0];
    let rp = render(&cloud, &vp, settings(64));
    assert_eq!(rp.index_at(Pixel::new(32, 32)), Some(0));
    let covered = rp.index_map().iter().filter(|&&i| i != EMPTY).count();
    assert_eq!(covered, 9);
    assert_eq!(rp.visible().as_slice(), &[0]);
}

#[test]
fn nearer_point_occludes_farther() {
    let vp = Viewpoint::new(1, 0.0, 0.0, 2.2, true);
    // Index 0 is farther along the ray through the image center.
    let cloud =
        ColoredPointCloud::uniform(vec![Point3::new(-0.5, 0.0, 0.0), Point3::new(0.5, 0.0, 0.0)], [0; 3]).unwrap();
    let rp = render(&cloud, &vp, settings(64));
    assert_eq!(rp.index_at(Pixel::new(32, 32)), Some(1));
    assert_eq!(rp.visible().as_slice(), &[1]);
}

#[test]
fn cube_corners_are_visible_at_their_projected_centers() {
    let corners: Vec<Point3<f64>> = (0..8)
        .map(|k| {
            Point3::new(
                if k & 1 == 0 { -0.5 } else { 0.5 },
                if k & 2 == 0 { -0.5 } else { 0.5 },
                if k & 4 == 0 { -0.5 } else { 0.5 },
            )
        })
        .collect();
    let cloud = ColoredPointCloud::uniform(corners, [0; 3]).unwrap();
    let vp = place_viewpoints(20, 2.2).unwrap()[0];
    let rp = render(&cloud, &vp, settings(800));
    let reference = reference_raster(&cloud, vp.elevation_deg, vp.azimuth_deg, vp.distance, 800, 0);
    for i in 0..8u32 {
        let cell = reference.candidates.iter().position(|c| c.iter().any(|&(p, _)| p == i)).unwrap();
        assert_eq!(rp.index_map()[cell], i, "corner {i}");
    }
    assert_eq!(rp.visible().len(), 8);
}

#[test]
fn mug_render_matches_reference_rasterizer() {
    let (cloud, _) = generate_scene(&SceneSpec::new(Template::Mug, 3)).unwrap();
    let vp = place_viewpoints(20, 2.2).unwrap()[0];
    let rp = render(&cloud, &vp, settings(800));
    assert_matches_reference(&cloud, &vp, &rp);
}

#[test]
fn render_is_deterministic() {
    let (cloud, _) = generate_scene(&SceneSpec::new(Template::Lamp, 5).with_points(3000)).unwrap();
    let vp = place_viewpoints(20, 2.2).unwrap()[4];
    let a = render(&cloud, &vp, settings(200));
    let b = render(&cloud, &vp, settings(200));
    assert_eq!(a.index_map(), b.index_map());
    assert_eq!(a.image(), b.image());
}

#[test]
fn bip_backward_rejects_pixels_outside_the_raster() {
    let cloud = ColoredPointCloud::uniform(vec![Point3::origin()], [0; 3]).unwrap();
    let rp = render(&cloud, &place_viewpoints(1, 2.2).unwrap()[0], settings(16));
    assert!(bip_backward(&[], &rp).unwrap().is_empty());
    assert!(matches!(bip_backward(&[Pixel::new(0, 16)], &rp), Err(ViewError::PixelOutsideRaster { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn render_matches_reference_on_random_clouds(
        seed in any::<u64>(),
        elevation in -89.0f64..89.0,
        azimuth in -180.0f64..360.0,
    ) {
        let mut r = rng(seed);
        let cloud = random_ball_cloud(&mut r, 400);
        let vp = Viewpoint::new(1, elevation, azimuth, 2.2, true);
        let rp = render(&cloud, &vp, settings(64));
        assert_matches_reference(&cloud, &vp, &rp);
    }

    #[test]
    fn bip_round_trips_and_separates(seed in any::<u64>(), view in 0usize..20, p in 0.0f64..1.0) {
        let mut r = rng(seed);
        let cloud = random_ball_cloud(&mut r, 600);
        let vp = place_viewpoints(20, 2.2).unwrap()[view];
        let rp = render(&cloud, &vp, settings(96));
        let x = from_set(&random_subset(&mut r, cloud.len(), p));
        let back = bip_backward(&bip_forward(&x, &rp), &rp).unwrap();
        prop_assert!(back.is_subset(&x));
        prop_assert_eq!(&back, &x.intersection(rp.visible()));

        let y = cloud.all_indices().difference(&x);
        let fx: BTreeSet<Pixel> = bip_forward(&x, &rp).into_iter().collect();
        prop_assert!(bip_forward(&y, &rp).iter().all(|px| !fx.contains(px)));

        let all: Vec<Pixel> = (0..rp.width() * rp.height()).map(|c| rp.pixel_at(c)).collect();
        prop_assert_eq!(&bip_backward(&all, &rp).unwrap(), rp.visible());
        let nonempty = rp.index_map().iter().filter(|&&i| i != EMPTY).count();
        prop_assert_eq!(bip_forward(&cloud.all_indices(), &rp).len(), nonempty);
    }
}

fn adjacency(g: &ViewGraph) -> BTreeMap<u32, BTreeSet<u32>> {
    g.nodes().map(|n| (n, g.neighbors(n).collect())).collect()
}

/// Random connected graph: a random spanning tree plus extra edges.
fn random_connected_graph(r: &mut impl Rng, n: u32) -> ViewGraph {
    let mut edges = Vec::new();
    for v in 2..=n {
        edges.push((v, r.random_range(1..v)));
    }
    for _ in 0..r.random_range(0..=n) {
        edges.push((r.random_range(1..=n), r.random_range(1..=n)));
    }
    ViewGraph::from_edges(1..=n, edges)
}

proptest! {
    #[test]
    fn bfs_matches_reference_and_co_views(seed in any::<u64>(), n in 1u32..30) {
        let mut r = rng(seed);
        let g = random_connected_graph(&mut r, n);
        let adj = adjacency(&g);
        for start in 1..=n {
            let seq = extension_sequence(&g, start).unwrap();
            prop_assert_eq!(seq.as_slice().to_vec(), reference_bfs(&adj, start));
            for j in 1..seq.len() {
                let v = seq.as_slice()[j];
                prop_assert!(seq.as_slice()[..j].iter().any(|&m| g.has_edge(m, v)));
            }
        }
    }
}

#[test]
fn canonical_graph_follows_the_ring_rule() {
    let vps = place_viewpoints(20, 2.2).unwrap();
    let g = build_view_graph(&vps);
    assert!(g.has_edge(2, 1) && g.has_edge(2, 3));
    // Viewpoint 2 sits at azimuth 10, equidistant from the -10 ring's -35 and 55.
    assert!(g.has_edge(2, 9) && g.has_edge(2, 10));
    assert!(g.has_edge(9, 1) && g.has_edge(9, 13));
    assert!(g.has_edge(8, 1), "the 35 ring wraps");
    assert!(!g.has_edge(1, 13), "rings are linked only through their neighbors");
    for count in [20, 8, 4] {
        assert!(build_view_graph(&place_viewpoints(count, 2.2).unwrap()).is_connected(), "{count} views");
    }
    let seq = extension_sequence(&g, 1).unwrap();
    assert_eq!(seq.as_slice(), reference_bfs(&adjacency(&g), 1).as_slice());
}

#[test]
fn small_sequences() {
    let single = ViewGraph::from_edges([4], []);
    assert_eq!(extension_sequence(&single, 4).unwrap().as_slice(), &[4]);
    let path = ViewGraph::from_edges([1, 2, 3], [(1, 2), (2, 3)]);
    assert_eq!(extension_sequence(&path, 2).unwrap().as_slice(), &[2, 1, 3]);
    let split = ViewGraph::from_edges([1, 2, 3], [(1, 2)]);
    assert_eq!(extension_sequence(&split, 1).unwrap_err(), ViewError::UnreachableViewpoints(vec![3]));
    let two = build_view_graph(&place_viewpoints(2, 2.2).unwrap());
    assert_eq!(two.edges().len(), 1);
}

#[test]
fn layouts_match_the_viewpoint_table() {
    let vps = place_viewpoints(20, 2.2).unwrap();
    assert_eq!((vps[0].elevation_deg, vps[0].azimuth_deg, vps[0].is_start), (35.0, -35.0, true));
    assert_eq!((vps[12].elevation_deg, vps[12].azimuth_deg, vps[12].is_start), (-55.0, -35.0, true));
    let starts: Vec<u32> = vps.iter().filter(|v| v.is_start).map(|v| v.id).collect();
    assert_eq!(starts, [1, 3, 5, 7, 13, 15, 17, 19]);
    let eight = place_viewpoints(8, 2.2).unwrap();
    assert!(eight.iter().all(|v| v.is_start && (v.elevation_deg == 35.0 || v.elevation_deg == -55.0)));
    assert_eq!(eight.iter().map(|v| v.id).collect::<Vec<_>>(), (1..=8).collect::<Vec<_>>());
    let four = place_viewpoints(4, 2.2).unwrap();
    let angles: BTreeSet<(i64, i64)> = four.iter().map(|v| (v.elevation_deg as i64, v.azimuth_deg as i64)).collect();
    assert_eq!(angles, BTreeSet::from([(35, -35), (35, 145), (-55, -35), (-55, 145)]));
    assert_eq!(place_viewpoints(0, 2.2).unwrap_err(), ViewError::NoViewpoints);
}
