//! Seeded synthetic scenes for fixtures and benchmarks.
//!
//! Generated scenes always satisfy the scene-spec schema and place cleanly on
//! a default 1000 cm stage: anchors keep clear of the stage edges and of each
//! other, and every attached item is small relative to its anchor.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{intersection_volume, Aabb, StageConfig};
use crate::placement::{AnchorMode, LayoutState, PlacementOptions};
use crate::retrieval::{hash_embedding, normalize, AssetRecord};
use crate::schema::{
    BackgroundRequest, Dims, EntityKind, EntitySpec, Face, Facing, GroundTruthLayout, LayoutRecord, PlacementRelation,
    RelationMode, SceneSpec, FORMAT_TAG,
};

pub const CATEGORIES: [&str; 40] = [
    "table", "chair", "sofa", "bed", "wardrobe", "bookshelf", "desk", "lamp", "painting", "mirror", "clock", "vase",
    "teacup", "candle", "rug", "piano", "stool", "bench", "throne", "chest", "barrel", "crate", "tree", "bush",
    "statue", "column", "door", "window", "curtain", "fireplace", "cabinet", "plant", "book", "bottle", "plate",
    "basket", "lantern", "sign", "ladder", "cart",
];

const MARGIN: f64 = 60.0;
const MAX_ROLLS: usize = 200;

fn anchor_box(rng: &mut ChaCha8Rng, n: f64) -> Aabb {
    let l = rng.gen_range(8..=30) as f64 * 10.0;
    let w = rng.gen_range(6..=15) as f64 * 10.0;
    let h = rng.gen_range(8..=30) as f64 * 10.0;
    let x0 = rng.gen_range(0.0..=(n - 2.0 * MARGIN - l)).round() + MARGIN;
    let y0 = rng.gen_range(0.0..=(n - 2.0 * MARGIN - w)).round() + MARGIN;
    Aabb::new(x0, y0, x0 + l, y0 + w, 0.0, h).expect("positive extents")
}

fn grown(b: &Aabb, m: f64) -> Aabb {
    Aabb {
        x0: b.x0 - m,
        y0: b.y0 - m,
        x1: b.x1 + m,
        y1: b.y1 + m,
        h0: b.h0,
        h1: b.h1,
    }
}

fn entity(id: String, category: &str, kind: EntityKind) -> EntitySpec {
    EntitySpec {
        name: category.replace('_', " "),
        description: format!("a {category} for the stage"),
        id,
        category: category.to_string(),
        kind,
        dims: None,
        anchor_box: None,
        relation: None,
        anchor_ref: None,
        facing: Facing::TowardAudience,
    }
}

fn roll_attached(rng: &mut ChaCha8Rng, id: String, category: &str, kind: EntityKind, anchors: &[Aabb]) -> EntitySpec {
    let mut e = entity(id, category, kind);
    let ai = rng.gen_range(0..anchors.len());
    let a = anchors[ai];
    let (mode, dims, face, mount) = match rng.gen_range(0..3) {
        0 => {
            let d = [rng.gen_range(3..=8) as f64 * 10.0, rng.gen_range(3..=8) as f64 * 10.0, rng.gen_range(4..=15) as f64 * 10.0];
            (RelationMode::OnFloorNear, d, None, None)
        }
        1 => {
            let l = (rng.gen_range(2..=5) as f64 * 10.0).min(a.length() / 3.0).max(5.0);
            let ht = (rng.gen_range(2..=5) as f64 * 10.0).min(a.height() / 3.0).max(5.0);
            let face = *[Face::Front, Face::Left, Face::Right].choose(rng).expect("non-empty");
            let lo = a.h0 + ht / 2.0;
            let hi = a.h1 - ht / 2.0;
            let mount = rng.gen_range(lo..=hi).round().clamp(lo.ceil(), hi.floor());
            let l = if face == Face::Front { l } else { l.min(a.width() / 3.0).max(5.0) };
            (RelationMode::OnSurface, [l.round(), 5.0, ht.round()], Some(face), Some(mount))
        }
        _ => {
            let side = (a.length().min(a.width()) / 4.0).floor().max(5.0);
            let d = [rng.gen_range(5.0..=side).round(), rng.gen_range(5.0..=side).round(), rng.gen_range(5..=40) as f64];
            (RelationMode::OnTop, d, None, None)
        }
    };
    e.dims = Some(Dims(dims));
    e.relation = Some(PlacementRelation {
        mode,
        face,
        mount_height: mount,
    });
    e.anchor_ref = Some(format!("a{ai}"));
    e
}

/// Random scene with `n_entities` entities (1–4 anchors) drawing categories
/// from `categories`. Entities are listed in placement order and each one is
/// re-rolled until it fits next to those before it, so the whole scene places
/// cleanly with default options.
pub fn random_scene_with(seed: u64, n_entities: usize, categories: &[&str]) -> SceneSpec {
    assert!(n_entities >= 1 && !categories.is_empty());
    let cfg = StageConfig::default();
    let n = cfg.stage_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_anchors = rng.gen_range(1..=4usize).min(n_entities);
    let mut anchors: Vec<Aabb> = Vec::new();
    while anchors.len() < n_anchors {
        let b = anchor_box(&mut rng, n);
        if anchors.iter().all(|a| intersection_volume(&grown(a, MARGIN), &b).cm3() == 0.0) {
            anchors.push(b);
        }
    }
    let pick = |rng: &mut ChaCha8Rng| *categories.choose(rng).expect("non-empty");
    let mut entities = Vec::with_capacity(n_entities);
    for (i, b) in anchors.iter().enumerate() {
        let mut e = entity(format!("a{i}"), pick(&mut rng), EntityKind::Anchor);
        e.anchor_box = Some(*b);
        entities.push(e);
    }
    let mut state = LayoutState::new(&cfg, &PlacementOptions::default()).expect("default config is valid");
    state
        .validate_anchors(&entities, AnchorMode::Strict)
        .expect("anchors are disjoint and inside the stage");

    let mut kinds: Vec<EntityKind> = (n_anchors..n_entities)
        .map(|_| if rng.gen_bool(0.6) { EntityKind::NonAnchor } else { EntityKind::Ornament })
        .collect();
    kinds.sort_by_key(|k| *k == EntityKind::Ornament);
    for (i, kind) in (n_anchors..n_entities).zip(kinds) {
        let category = pick(&mut rng);
        let e = (0..MAX_ROLLS)
            .map(|_| roll_attached(&mut rng, format!("e{i}"), category, kind, &anchors))
            .find(|e| state.place_entity(e).is_ok())
            .unwrap_or_else(|| panic!("seed {seed}: no placeable entity {i} after {MAX_ROLLS} rolls"));
        entities.push(e);
    }
    let background_requests = (0..rng.gen_range(0..=3))
        .map(|k| BackgroundRequest {
            label: format!("backdrop{k}"),
            width: rng.gen_range(5..=20) as f64 * 10.0,
            height: rng.gen_range(5..=15) as f64 * 10.0,
        })
        .collect();
    SceneSpec {
        format: FORMAT_TAG.to_string(),
        title: format!("synthetic-{seed:04}"),
        imagery: "A quiet evening lit by lanterns".to_string(),
        entities,
        background_requests,
    }
}

pub fn random_scene(seed: u64, n_entities: usize) -> SceneSpec {
    random_scene_with(seed, n_entities, &CATEGORIES)
}

/// Scene whose entities use exactly `unique` distinct categories.
pub fn scene_with_unique_categories(seed: u64, unique: usize) -> SceneSpec {
    assert!((1..=CATEGORIES.len()).contains(&unique));
    let mut scene = random_scene_with(seed, unique, &CATEGORIES[..1]);
    for (e, c) in scene.entities.iter_mut().zip(CATEGORIES.iter()) {
        e.category = c.to_string();
        e.name = c.to_string();
    }
    scene
}

/// Ground truth derived from a layout by shifting every box by up to
/// `max_shift` cm on x and y (integer amounts).
pub fn jittered_ground_truth(layout: &GroundTruthLayout, seed: u64, max_shift: i32) -> GroundTruthLayout {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GroundTruthLayout {
        format: FORMAT_TAG.to_string(),
        stage_id: layout.stage_id.clone(),
        stage_size: None,
        entities: layout
            .entities
            .iter()
            .map(|e| LayoutRecord {
                id: None,
                category: e.category.clone(),
                kind: None,
                bbox: e.bbox.translated(
                    rng.gen_range(-max_shift..=max_shift) as f64,
                    rng.gen_range(-max_shift..=max_shift) as f64,
                    0.0,
                ),
                supported_by: None,
            })
            .collect(),
    }
}

/// Asset index of `n` records cycling through [`CATEGORIES`]. Each image
/// embedding is `0.6·e(category) + 0.8·noise`, so a category-name query scores
/// its own assets around 60 under the stub provider and others around 0.
pub fn synthetic_index(seed: u64, n: usize, dim: usize) -> Vec<AssetRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let category = CATEGORIES[i % CATEGORIES.len()];
            let base = hash_embedding(category, dim);
            let noise: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let noise = normalize(&noise);
            let mixed: Vec<f64> = base.iter().zip(&noise).map(|(b, e)| 0.6 * *b as f64 + 0.8 * *e as f64).collect();
            AssetRecord {
                asset_id: format!("asset-{i:05}"),
                name: format!("{category} {}", i / CATEGORIES.len()),
                dims: [
                    rng.gen_range(1..=20) as f64 * 10.0,
                    rng.gen_range(1..=20) as f64 * 10.0,
                    rng.gen_range(1..=20) as f64 * 10.0,
                ],
                image_embedding: normalize(&mixed),
                tags: vec![category.to_string()],
            }
        })
        .collect()
}
