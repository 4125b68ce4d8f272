//! Corner prediction strategies: direct, offset (single base anchor),
//! iterative (chained corner conditioning), and center-to-corner. Pure
//! transforms from head outputs to decoded quads.

use crate::geometry::{Point, Quad};
use crate::grid::{self, GridError, GridLocation, RegressionTarget};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StrategyError {
    #[error("parameter shape mismatch: expected input width {expected}, got {got}")]
    InvalidParams { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    Direct,
    Offset,
    Iterative,
    CenterToCorner,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Direct,
        StrategyKind::Offset,
        StrategyKind::Iterative,
        StrategyKind::CenterToCorner,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Direct => "direct",
            StrategyKind::Offset => "offset",
            StrategyKind::Iterative => "iterative",
            StrategyKind::CenterToCorner => "center-to-corner",
        }
    }

    pub fn parse(s: &str) -> Option<StrategyKind> {
        match s {
            "direct" => Some(StrategyKind::Direct),
            "offset" => Some(StrategyKind::Offset),
            "iterative" => Some(StrategyKind::Iterative),
            "center-to-corner" => Some(StrategyKind::CenterToCorner),
            _ => None,
        }
    }
}

/// Default side of the offset strategy's base anchor, in strides.
pub const DEFAULT_ANCHOR_SCALE: f64 = 4.0;

/// Decodes raw stride-normalized corner offsets directly.
pub fn direct_decode(raw_corners: &[f64; 8], loc: &GridLocation) -> Result<Quad, GridError> {
    grid::decode_target(&RegressionTarget(*raw_corners), loc)
}

/// Stride-normalized corner offsets of the axis-aligned square base anchor
/// of side `anchor_scale * s` centered at the location, in canonical CCW
/// vertex order.
pub fn anchor_corners(anchor_scale: f64) -> [f64; 8] {
    let h = anchor_scale / 2.0;
    [-h, -h, h, -h, h, h, -h, h]
}

/// Adds predicted offsets to the base anchor's corners, then decodes.
pub fn offset_decode(
    raw_corners: &[f64; 8],
    loc: &GridLocation,
    anchor_scale: f64,
) -> Result<Quad, GridError> {
    let anchor = anchor_corners(anchor_scale);
    let mut t = [0.0; 8];
    for i in 0..8 {
        t[i] = raw_corners[i] + anchor[i];
    }
    grid::decode_target(&RegressionTarget(t), loc)
}

/// A per-location affine map (the desk-scale stand-in for a 1x1
/// convolution): `y = W x + b` with `W` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub weights: Vec<f64>, // out_dim x in_dim, row-major
    pub bias: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl AffineMap {
    pub fn zeros(in_dim: usize, out_dim: usize) -> AffineMap {
        AffineMap {
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }

    pub fn apply(&self, input: &[f64], output: &mut [f64]) {
        debug_assert_eq!(input.len(), self.in_dim);
        debug_assert_eq!(output.len(), self.out_dim);
        for (o, out) in output.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.bias[o];
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            *out = acc;
        }
    }
}

/// The four chained heads of the iterative strategy. Head `i` consumes the
/// tower features concatenated with the `2i` previously predicted corner
/// coordinates (widths F, F+2, F+4, F+6).
#[derive(Debug, Clone, PartialEq)]
pub struct IterativeHeadParams {
    pub heads: [AffineMap; 4],
}

impl IterativeHeadParams {
    pub fn zeros(feature_width: usize) -> IterativeHeadParams {
        IterativeHeadParams {
            heads: [
                AffineMap::zeros(feature_width, 2),
                AffineMap::zeros(feature_width + 2, 2),
                AffineMap::zeros(feature_width + 4, 2),
                AffineMap::zeros(feature_width + 6, 2),
            ],
        }
    }

    pub fn feature_width(&self) -> usize {
        self.heads[0].in_dim
    }
}

/// Predicts the 8 stride-normalized corner coordinates one corner at a
/// time, feeding each predicted corner into the next head's input.
pub fn iterative_decode(
    features: &[f64],
    params: &IterativeHeadParams,
) -> Result<[f64; 8], StrategyError> {
    let f = params.feature_width();
    if features.len() != f {
        return Err(StrategyError::InvalidParams {
            expected: f,
            got: features.len(),
        });
    }
    for (i, head) in params.heads.iter().enumerate() {
        if head.in_dim != f + 2 * i || head.out_dim != 2 {
            return Err(StrategyError::InvalidParams {
                expected: f + 2 * i,
                got: head.in_dim,
            });
        }
    }
    let mut corners = [0.0; 8];
    let mut input: Vec<f64> = Vec::with_capacity(f + 6);
    input.extend_from_slice(features);
    for (i, head) in params.heads.iter().enumerate() {
        let mut out = [0.0; 2];
        head.apply(&input, &mut out);
        corners[2 * i] = out[0];
        corners[2 * i + 1] = out[1];
        if i < 3 {
            input.push(out[0]);
            input.push(out[1]);
        }
    }
    Ok(corners)
}

/// Broadcast-adds the center prediction to every corner pair, decodes the
/// quad, and returns the absolute center point alongside. The center is
/// returned even when the decoded quad is degenerate.
pub fn center_to_corner_decode(
    raw_center: &[f64; 2],
    raw_corners: &[f64; 8],
    loc: &GridLocation,
) -> (Point, Result<Quad, GridError>) {
    let s = loc.stride();
    let center = Point::new(
        loc.image_point.x + s * raw_center[0],
        loc.image_point.y + s * raw_center[1],
    );
    let mut t = [0.0; 8];
    for i in 0..4 {
        t[2 * i] = raw_corners[2 * i] + raw_center[0];
        t[2 * i + 1] = raw_corners[2 * i + 1] + raw_center[1];
    }
    let quad = grid::decode_target(&RegressionTarget(t), loc);
    (center, quad)
}
