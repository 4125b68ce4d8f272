//! FPN level arithmetic: strides, location grids, mapping back to image
//! coordinates, and stride-normalized corner target encoding/decoding.

use crate::geometry::{GeometryError, Point, Quad};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("invalid image dimensions {0}x{1}")]
    InvalidImage(i64, i64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A pyramid output level P3..P7 with stride `2^l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FpnLevel {
    P3,
    P4,
    P5,
    P6,
    P7,
}

/// All production levels in ascending order.
pub const LEVELS: [FpnLevel; 5] = [
    FpnLevel::P3,
    FpnLevel::P4,
    FpnLevel::P5,
    FpnLevel::P6,
    FpnLevel::P7,
];

impl FpnLevel {
    pub fn level(self) -> u32 {
        match self {
            FpnLevel::P3 => 3,
            FpnLevel::P4 => 4,
            FpnLevel::P5 => 5,
            FpnLevel::P6 => 6,
            FpnLevel::P7 => 7,
        }
    }

    pub fn stride(self) -> u32 {
        1 << self.level()
    }

    pub fn from_level(l: u32) -> Option<FpnLevel> {
        match l {
            3 => Some(FpnLevel::P3),
            4 => Some(FpnLevel::P4),
            5 => Some(FpnLevel::P5),
            6 => Some(FpnLevel::P6),
            7 => Some(FpnLevel::P7),
            _ => None,
        }
    }
}

/// A feature-map cell on one pyramid level, with its image-space point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridLocation {
    pub level: FpnLevel,
    pub cell: (u32, u32),
    pub image_point: Point,
}

impl GridLocation {
    pub fn new(level: FpnLevel, x: u32, y: u32) -> GridLocation {
        GridLocation {
            level,
            cell: (x, y),
            image_point: location_to_image(level.stride(), x, y),
        }
    }

    pub fn stride(&self) -> f64 {
        self.level.stride() as f64
    }
}

/// Feature-map shape `(rows, cols)` for an image of the given size.
pub fn grid_shape(level: FpnLevel, image_h: i64, image_w: i64) -> Result<(u32, u32), GridError> {
    if image_h <= 0 || image_w <= 0 {
        return Err(GridError::InvalidImage(image_h, image_w));
    }
    let s = level.stride() as i64;
    Ok((((image_h + s - 1) / s) as u32, ((image_w + s - 1) / s) as u32))
}

/// Maps cell `(x, y)` at stride `s` to `(ceil(s/2) + x*s, ceil(s/2) + y*s)`.
pub fn location_to_image(stride: u32, x: u32, y: u32) -> Point {
    let half = (stride + 1) / 2;
    Point::new(
        (half + x * stride) as f64,
        (half + y * stride) as f64,
    )
}

/// Stride-normalized corner offsets of a quad from a location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionTarget(pub [f64; 8]);

/// Encodes corner offsets `(v_i - location) / s` against an arbitrary
/// stride. Stride 1 is intended for hand-checkable tests only.
pub fn encode_at(quad: &Quad, point: Point, stride: f64) -> RegressionTarget {
    let c = quad.coords();
    let mut t = [0.0; 8];
    for i in 0..4 {
        t[2 * i] = (c[2 * i] - point.x) / stride;
        t[2 * i + 1] = (c[2 * i + 1] - point.y) / stride;
    }
    RegressionTarget(t)
}

/// Inverse of [`encode_at`]. Fails when the decoded quad is degenerate or
/// non-convex, signalling a bad prediction.
pub fn decode_at(t: &RegressionTarget, point: Point, stride: f64) -> Result<Quad, GridError> {
    let mut c = [0.0; 8];
    for i in 0..4 {
        c[2 * i] = point.x + stride * t.0[2 * i];
        c[2 * i + 1] = point.y + stride * t.0[2 * i + 1];
    }
    Ok(Quad::from_coords(c)?)
}

/// Encodes a quad relative to a grid location at the level's stride.
pub fn encode_target(quad: &Quad, loc: &GridLocation) -> RegressionTarget {
    encode_at(quad, loc.image_point, loc.stride())
}

/// Decodes stride-normalized offsets back to an absolute quad.
pub fn decode_target(t: &RegressionTarget, loc: &GridLocation) -> Result<Quad, GridError> {
    decode_at(t, loc.image_point, loc.stride())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shape_examples() {
        assert_eq!(grid_shape(FpnLevel::P5, 128, 128).unwrap(), (4, 4));
        assert_eq!(grid_shape(FpnLevel::P3, 128, 128).unwrap(), (16, 16));
        assert_eq!(grid_shape(FpnLevel::P7, 1024, 1024).unwrap(), (8, 8));
        assert_eq!(
            grid_shape(FpnLevel::P3, 0, 128),
            Err(GridError::InvalidImage(0, 128))
        );
    }

    #[test]
    fn grid_shape_ceiling_division() {
        assert_eq!(grid_shape(FpnLevel::P3, 130, 121).unwrap(), (17, 16));
    }

    #[test]
    fn location_mapping_examples() {
        assert_eq!(location_to_image(32, 0, 0), Point::new(16.0, 16.0));
        assert_eq!(location_to_image(32, 1, 1), Point::new(48.0, 48.0));
        assert_eq!(location_to_image(8, 1, 2), Point::new(12.0, 20.0));
    }

    #[test]
    fn location_mapping_monotone() {
        for s in [8u32, 16, 32, 64, 128] {
            for i in 0..10 {
                let p0 = location_to_image(s, i, i);
                let p1 = location_to_image(s, i + 1, i + 1);
                assert!(p1.x > p0.x && p1.y > p0.y);
            }
        }
    }

    #[test]
    fn encode_examples() {
        let sq = Quad::from_coords([0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0]).unwrap();
        let t = encode_at(&sq, Point::new(0.5, 0.5), 1.0);
        assert_eq!(t.0, [-0.5, -0.5, 0.5, -0.5, 0.5, 0.5, -0.5, 0.5]);

        // Location on p0: first offset pair is zero.
        let t = encode_at(&sq, Point::new(0.0, 0.0), 16.0);
        assert_eq!((t.0[0], t.0[1]), (0.0, 0.0));

        // Side-8 square centered on a stride-8 location.
        let sq8 = Quad::from_coords([12.0, 12.0, 20.0, 12.0, 20.0, 20.0, 12.0, 20.0]).unwrap();
        let t = encode_at(&sq8, Point::new(16.0, 16.0), 8.0);
        assert_eq!(t.0, [-0.5, -0.5, 0.5, -0.5, 0.5, 0.5, -0.5, 0.5]);
        let back = decode_at(&t, Point::new(16.0, 16.0), 8.0).unwrap();
        assert_eq!(back, sq8);
    }

    #[test]
    fn decode_degenerate() {
        let t = RegressionTarget([0.0; 8]);
        let e = decode_at(&t, Point::new(16.0, 16.0), 8.0);
        assert!(e.is_err());
    }

    #[test]
    fn responsibility_tiling() {
        // Every pixel belongs to exactly one cell per level.
        let (h, w) = (130i64, 96i64);
        for level in LEVELS {
            let s = level.stride() as i64;
            let (rows, cols) = grid_shape(level, h, w).unwrap();
            for py in 0..h {
                for px in 0..w {
                    let cx = px / s;
                    let cy = py / s;
                    assert!(cx < cols as i64 && cy < rows as i64);
                }
            }
        }
    }
}
