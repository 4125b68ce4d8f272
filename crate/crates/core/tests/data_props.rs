//! Property tests for the dataset tooling: patch coverage, manifest and
//! annotation round trips, remapping, and exact-affine augmentations.

mod common;

use common::random_convex_quad;
use quadet::data::{
    augment, parse_annotations, parse_manifest, remap_annotations, split_patches,
    write_annotations, write_manifest, AnnotatedObject, AnnotationSet, Augment, ClassList,
};
use quadet::rng::CounterRng;

fn random_set(rng: &mut CounterRng, n: usize, w: i64, h: i64) -> AnnotationSet {
    let classes = ["plane", "ship", "car"];
    let objects = (0..n)
        .map(|_| {
            let class_id = rng.below(3) as i32;
            AnnotatedObject {
                quad: random_convex_quad(rng),
                class_id,
                class_name: classes[class_id as usize].to_string(),
                difficult: rng.next_bool(),
            }
        })
        .collect();
    AnnotationSet {
        image_id: "img".into(),
        image_w: w,
        image_h: h,
        objects,
    }
}

#[test]
fn patch_layout_covers_every_pixel() {
    let mut rng = CounterRng::new(401);
    for _ in 0..200 {
        let w = 300 + rng.below(3000) as i64;
        let h = 300 + rng.below(3000) as i64;
        let patches = split_patches(w, h, 1024, 200);
        // sampled pixels must fall in at least one patch
        for _ in 0..50 {
            let px = rng.below(w as u64) as i64;
            let py = rng.below(h as u64) as i64;
            assert!(
                patches.iter().any(|p| {
                    px >= p.x && px < p.x + p.size && py >= p.y && py < p.y + p.size
                }),
                "pixel ({px},{py}) uncovered in {w}x{h}"
            );
        }
        // patches never start outside the image
        for p in &patches {
            assert!(p.x >= 0 && p.y >= 0);
            assert!(p.x < w.max(1) && p.y < h.max(1));
        }
    }
}

#[test]
fn annotation_round_trip_is_fixed_point() {
    let classes = ClassList::new(vec!["plane", "ship", "car"]);
    let mut rng = CounterRng::new(402);
    for _ in 0..100 {
        let set = random_set(&mut rng, 5, 1024, 1024);
        let text = write_annotations(&set.objects);
        let parsed = parse_annotations(&text, &classes).unwrap();
        assert_eq!(parsed.len(), set.objects.len());
        let text2 = write_annotations(&parsed);
        assert_eq!(text, text2, "write/parse/write not a fixed point");
    }
}

#[test]
fn manifest_round_trip() {
    let mut rng = CounterRng::new(403);
    for _ in 0..100 {
        let w = 1024 + rng.below(4000) as i64;
        let h = 1024 + rng.below(4000) as i64;
        let patches = split_patches(w, h, 1024, 200);
        let text = write_manifest("scene", &patches);
        let parsed = parse_manifest(&text).unwrap();
        assert_eq!(parsed.len(), patches.len());
        for ((id, p), q) in parsed.iter().zip(&patches) {
            assert_eq!(id, "scene");
            assert_eq!(p, q);
        }
    }
}

#[test]
fn remap_keeps_centroid_objects_and_translates() {
    let mut rng = CounterRng::new(404);
    for _ in 0..100 {
        let set = random_set(&mut rng, 6, 2048, 2048);
        for patch in split_patches(2048, 2048, 1024, 200) {
            let remapped = remap_annotations(&set, &patch);
            assert!(
                remapped.image_id.starts_with("img__"),
                "patch id {}",
                remapped.image_id
            );
            for obj in &remapped.objects {
                // kept objects have their centroid inside the patch window
                let c = obj.quad.centroid();
                assert!(c.x >= 0.0 && c.x < patch.size as f64);
                assert!(c.y >= 0.0 && c.y < patch.size as f64);
            }
            // count matches the centroid rule
            let expected = set
                .objects
                .iter()
                .filter(|o| {
                    let c = o.quad.centroid();
                    c.x >= patch.x as f64
                        && c.x < (patch.x + patch.size) as f64
                        && c.y >= patch.y as f64
                        && c.y < (patch.y + patch.size) as f64
                })
                .count();
            assert_eq!(remapped.objects.len(), expected);
        }
    }
}

#[test]
fn double_flip_is_identity() {
    let mut rng = CounterRng::new(405);
    for t in [Augment::HFlip, Augment::VFlip, Augment::Rot180] {
        for _ in 0..50 {
            let set = random_set(&mut rng, 3, 512, 512);
            let twice = augment(t, &augment(t, &set));
            for (a, b) in twice.objects.iter().zip(&set.objects) {
                for (x, y) in a.quad.coords().iter().zip(b.quad.coords()) {
                    assert!((x - y).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn four_quarter_turns_are_identity() {
    let mut rng = CounterRng::new(406);
    for _ in 0..50 {
        let set = random_set(&mut rng, 3, 512, 512);
        let mut cur = set.clone();
        for _ in 0..4 {
            cur = augment(Augment::Rot90, &cur);
        }
        for (a, b) in cur.objects.iter().zip(&set.objects) {
            for (x, y) in a.quad.coords().iter().zip(b.quad.coords()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn augment_preserves_area() {
    let mut rng = CounterRng::new(407);
    for t in [
        Augment::HFlip,
        Augment::VFlip,
        Augment::Rot90,
        Augment::Rot180,
        Augment::Rot270,
    ] {
        let set = random_set(&mut rng, 4, 512, 512);
        let out = augment(t, &set);
        for (a, b) in out.objects.iter().zip(&set.objects) {
            assert!(
                (quadet::geometry::area(&a.quad) - quadet::geometry::area(&b.quad)).abs() < 1e-9
            );
        }
    }
}
