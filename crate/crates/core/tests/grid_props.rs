//! Property tests for the pyramid grid: encode/decode round trips on every
//! level and the location-mapping layout.

mod common;

use common::random_convex_quad;
use quadet::grid::{
    decode_target, encode_target, grid_shape, location_to_image, GridLocation, LEVELS,
};
use quadet::rng::CounterRng;

#[test]
fn encode_decode_round_trip_all_levels() {
    let mut rng = CounterRng::new(201);
    for _ in 0..500 {
        let q = random_convex_quad(&mut rng);
        for level in LEVELS {
            let x = rng.below(8) as u32;
            let y = rng.below(8) as u32;
            let loc = GridLocation::new(level, x, y);
            let t = encode_target(&q, &loc);
            let back = decode_target(&t, &loc).unwrap();
            for (a, b) in back.coords().iter().zip(q.coords()) {
                assert!((a - b).abs() < 1e-9, "level {level:?}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn location_mapping_is_affine_in_cell_index() {
    for level in LEVELS {
        let s = level.stride();
        let p00 = location_to_image(s, 0, 0);
        let p10 = location_to_image(s, 1, 0);
        let p01 = location_to_image(s, 0, 1);
        assert_eq!(p10.x - p00.x, s as f64);
        assert_eq!(p01.y - p00.y, s as f64);
        assert_eq!(p00.x, ((s + 1) / 2) as f64);
    }
}

#[test]
fn every_pixel_has_exactly_one_cell_per_level() {
    // each cell is responsible for an s x s tile; tiles partition the image
    for level in LEVELS {
        let s = level.stride() as i64;
        let (rows, cols) = grid_shape(level, 96, 160).unwrap();
        assert_eq!(rows as i64, (96 + s - 1) / s);
        assert_eq!(cols as i64, (160 + s - 1) / s);
        for px in [0i64, 1, (s - 1).min(95), 95] {
            let y = px / s;
            assert!(y < rows as i64);
        }
    }
}

#[test]
fn grid_shape_rejects_bad_dimensions() {
    assert!(grid_shape(LEVELS[0], 0, 128).is_err());
    assert!(grid_shape(LEVELS[0], 128, -1).is_err());
}
