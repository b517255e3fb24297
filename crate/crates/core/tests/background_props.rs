use proptest::prelude::*;
use stagelayout::background::{allocate_background, emit_background_spec, BackgroundError};
use stagelayout::projection::{occlusion_union, OcclusionBox};
use stagelayout::schema::BackgroundRequest;
use stagelayout::synth::random_scene;
use stagelayout::{place_scene, PlacementOptions, StageConfig};

fn request(label: &str, w: f64, h: f64) -> BackgroundRequest {
    BackgroundRequest {
        label: label.into(),
        width: w,
        height: h,
    }
}

#[test]
fn central_occlusion_two_requests() {
    let cfg = StageConfig::default();
    let occ = vec![OcclusionBox {
        entity_id: "c".into(),
        wall_x: [350.0, 650.0],
        wall_h: [0.0, 600.0],
    }];
    let placed = allocate_background(&[request("a", 200.0, 200.0), request("b", 200.0, 200.0)], &occ, &cfg, 1.0).unwrap();
    assert_eq!(placed.len(), 2);
    for p in &placed {
        assert_eq!(p.rect.intersection_area(&occ[0].rect()), 0.0);
    }
    assert_eq!(placed[0].rect.intersection_area(&placed[1].rect), 0.0);
}

#[test]
fn full_occlusion_is_no_space() {
    let cfg = StageConfig::default();
    let occ = vec![OcclusionBox {
        entity_id: "wall".into(),
        wall_x: [0.0, 1000.0],
        wall_h: [0.0, 1000.0],
    }];
    let err = allocate_background(&[request("sky", 10.0, 10.0)], &occ, &cfg, 1.0).unwrap_err();
    assert!(matches!(err, BackgroundError::NoSpace { .. }));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn regions_avoid_occlusions_and_round_trip(
        seed in 0u64..5000,
        n in 1usize..=22,
        reqs in prop::collection::vec((10.0..300.0f64, 10.0..300.0f64), 0..6),
        cell in prop::sample::select(vec![1.0, 2.5, 5.0]),
    ) {
        let cfg = StageConfig::default();
        let layout = place_scene(&random_scene(seed, n), &cfg, &PlacementOptions::default()).unwrap();
        let occ = occlusion_union(&layout, &cfg).unwrap();
        let requests: Vec<_> = reqs.iter().enumerate().map(|(i, (w, h))| request(&format!("r{i}"), *w, *h)).collect();
        let Ok(placed) = allocate_background(&requests, &occ, &cfg, cell) else { return Ok(()) };
        for (i, p) in placed.iter().enumerate() {
            for o in &occ {
                prop_assert_eq!(p.rect.intersection_area(&o.rect()), 0.0);
            }
            for q in &placed[i + 1..] {
                prop_assert_eq!(p.rect.intersection_area(&q.rect), 0.0);
            }
        }
        let spec = emit_background_spec("Night sky", &placed, &cfg, 512);
        for r in &spec.regions {
            prop_assert!(r.bbox.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(r.bbox[0] < r.bbox[2] && r.bbox[1] < r.bbox[3]);
        }
        for (back, orig) in spec.wall_boxes(cfg.stage_size).iter().zip(&placed) {
            let (a, b) = (back.rect, orig.rect);
            for (x, y) in [(a.x0, b.x0), (a.x1, b.x1), (a.h0, b.h0), (a.h1, b.h1)] {
                prop_assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0));
            }
        }
    }
}
