//! Exact quadrilateral geometry: perpendicular distances, center-ness
//! functions, areas, convex intersection, and IoU.
//!
//! All operations are pure functions over `f64` values. Quads are convex,
//! counter-clockwise, and canonicalized to a deterministic starting vertex.

use thiserror::Error;

/// Absolute tolerance for coordinate equality and degeneracy checks.
pub const GEOM_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("degenerate edge: endpoints coincide within {GEOM_EPS}")]
    DegenerateEdge,
    #[error("point lies outside the box")]
    OutsideBox,
    #[error("degenerate box: opposite-edge distance pair is zero")]
    DegenerateBox,
    #[error("invalid quad: {0}")]
    InvalidQuad(&'static str),
}

/// A 2-D point in image pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// 2-D cross product of (b - a) and (c - a).
#[inline]
pub fn cross(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// An oriented bounding box stored as four ordered vertices.
///
/// Invariants (enforced by [`Quad::new`]): finite coordinates, strictly
/// convex, counter-clockwise, positive area, starting vertex minimizing
/// (y, then x).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad {
    vertices: [Point; 4],
}

impl Quad {
    /// Canonicalizes four vertices into a valid `Quad`.
    ///
    /// The input must trace a simple convex polygon in either winding.
    /// Output is CCW starting from the vertex minimizing (y, then x).
    pub fn new(vertices: [Point; 4]) -> Result<Quad, GeometryError> {
        canonicalize(vertices)
    }

    /// Constructs a quad from `[x0, y0, ..., x3, y3]`.
    pub fn from_coords(c: [f64; 8]) -> Result<Quad, GeometryError> {
        Quad::new([
            Point::new(c[0], c[1]),
            Point::new(c[2], c[3]),
            Point::new(c[4], c[5]),
            Point::new(c[6], c[7]),
        ])
    }

    pub fn vertices(&self) -> [Point; 4] {
        self.vertices
    }

    pub fn coords(&self) -> [f64; 8] {
        let v = self.vertices;
        [v[0].x, v[0].y, v[1].x, v[1].y, v[2].x, v[2].y, v[3].x, v[3].y]
    }

    /// Mean of the four vertices.
    pub fn centroid(&self) -> Point {
        let v = self.vertices;
        Point::new(
            (v[0].x + v[1].x + v[2].x + v[3].x) / 4.0,
            (v[0].y + v[1].y + v[2].y + v[3].y) / 4.0,
        )
    }

    /// Translates every vertex by (dx, dy).
    pub fn translate(&self, dx: f64, dy: f64) -> Quad {
        // Translation preserves canonical order.
        let v = self.vertices;
        Quad {
            vertices: [
                Point::new(v[0].x + dx, v[0].y + dy),
                Point::new(v[1].x + dx, v[1].y + dy),
                Point::new(v[2].x + dx, v[2].y + dy),
                Point::new(v[3].x + dx, v[3].y + dy),
            ],
        }
    }
}

/// Reorders four vertices CCW starting from the vertex minimizing (y, x).
///
/// Rejects non-convex and self-intersecting inputs.
pub fn canonicalize(vertices: [Point; 4]) -> Result<Quad, GeometryError> {
    for v in &vertices {
        if !v.is_finite() {
            return Err(GeometryError::InvalidQuad("non-finite coordinate"));
        }
    }

    // Signed area decides winding; near-zero area is degenerate.
    let signed = signed_area(&vertices);
    if signed.abs() <= GEOM_EPS {
        return Err(GeometryError::InvalidQuad("zero area"));
    }
    let mut v = vertices;
    if signed < 0.0 {
        v.reverse();
    }

    // Strict convexity: every consecutive turn must be a left turn.
    for i in 0..4 {
        let turn = cross(v[i], v[(i + 1) % 4], v[(i + 2) % 4]);
        if turn <= GEOM_EPS {
            return Err(GeometryError::InvalidQuad("non-convex or self-intersecting"));
        }
    }

    let start = (0..4)
        .min_by(|&i, &j| {
            (v[i].y, v[i].x)
                .partial_cmp(&(v[j].y, v[j].x))
                .expect("finite coordinates")
        })
        .unwrap();
    let rotated = [
        v[start],
        v[(start + 1) % 4],
        v[(start + 2) % 4],
        v[(start + 3) % 4],
    ];
    Ok(Quad { vertices: rotated })
}

fn signed_area(v: &[Point; 4]) -> f64 {
    let mut acc = 0.0;
    for i in 0..4 {
        let a = v[i];
        let b = v[(i + 1) % 4];
        acc += a.x * b.y - b.x * a.y;
    }
    acc / 2.0
}

/// Perpendicular distance from `q` to the infinite line through `p0`, `p1`.
pub fn perp_distance(p0: Point, p1: Point, q: Point) -> Result<f64, GeometryError> {
    let len = p0.distance(&p1);
    if len <= GEOM_EPS {
        return Err(GeometryError::DegenerateEdge);
    }
    let num = ((p1.x - p0.x) * (p0.y - q.y) - (p0.x - q.x) * (p1.y - p0.y)).abs();
    Ok(num / len)
}

/// The four perpendicular distances from a point to a quad's edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeDistances {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

/// Distances from `q` to the edges (p0,p1), (p1,p2), (p2,p3), (p3,p0).
pub fn edge_distances(quad: &Quad, q: Point) -> Result<EdgeDistances, GeometryError> {
    let v = quad.vertices();
    Ok(EdgeDistances {
        a: perp_distance(v[0], v[1], q)?,
        b: perp_distance(v[1], v[2], q)?,
        c: perp_distance(v[2], v[3], q)?,
        d: perp_distance(v[3], v[0], q)?,
    })
}

/// Oriented center-ness of `q` w.r.t. `quad` with decay exponent `1/alpha`.
///
/// Value is `(min(a,c)/max(a,c) * min(b,d)/max(b,d))^(1/alpha)`: 0 on an
/// edge, 1 where opposite-edge distances balance.
pub fn oriented_centerness(quad: &Quad, q: Point, alpha: f64) -> Result<f64, GeometryError> {
    if !contains(quad, q) {
        return Err(GeometryError::OutsideBox);
    }
    let d = edge_distances(quad, q)?;
    let ac = d.a.max(d.c);
    let bd = d.b.max(d.d);
    if ac <= GEOM_EPS || bd <= GEOM_EPS {
        return Err(GeometryError::DegenerateBox);
    }
    let raw = (d.a.min(d.c) / ac) * (d.b.min(d.d) / bd);
    Ok(raw.powf(1.0 / alpha))
}

/// FCOS-style center-ness of `q` applied to the quad's axis-aligned hull.
pub fn aa_centerness(quad: &Quad, q: Point) -> Result<f64, GeometryError> {
    let (min_x, min_y, max_x, max_y) = bounds(quad);
    if q.x < min_x || q.x > max_x || q.y < min_y || q.y > max_y {
        return Err(GeometryError::OutsideBox);
    }
    let l = q.x - min_x;
    let r = max_x - q.x;
    let t = q.y - min_y;
    let b = max_y - q.y;
    let lr = l.max(r);
    let tb = t.max(b);
    if lr <= GEOM_EPS || tb <= GEOM_EPS {
        return Err(GeometryError::DegenerateBox);
    }
    Ok(((l.min(r) / lr) * (t.min(b) / tb)).sqrt())
}

/// Shoelace area. Positive for the canonical CCW order.
pub fn area(quad: &Quad) -> f64 {
    signed_area(&quad.vertices())
}

fn bounds(quad: &Quad) -> (f64, f64, f64, f64) {
    let v = quad.vertices();
    let min_x = v.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let max_x = v.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let min_y = v.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let max_y = v.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    (min_x, min_y, max_x, max_y)
}

/// Axis-aligned bounding rectangle as a Quad.
pub fn axis_aligned_hull(quad: &Quad) -> Quad {
    let (min_x, min_y, max_x, max_y) = bounds(quad);
    // Already CCW starting at the (min y, min x) corner.
    Quad {
        vertices: [
            Point::new(min_x, min_y),
            Point::new(max_x, min_y),
            Point::new(max_x, max_y),
            Point::new(min_x, max_y),
        ],
    }
}

/// True iff `q` is inside or on the boundary of `quad`.
pub fn contains(quad: &Quad, q: Point) -> bool {
    let v = quad.vertices();
    (0..4).all(|i| cross(v[i], v[(i + 1) % 4], q) >= -GEOM_EPS)
}

/// True iff `q` is strictly inside `quad` (boundary excluded).
pub fn contains_strict(quad: &Quad, q: Point) -> bool {
    let v = quad.vertices();
    (0..4).all(|i| cross(v[i], v[(i + 1) % 4], q) > GEOM_EPS)
}

/// Area of the convex intersection of two quads via half-plane clipping.
pub fn intersection_area(a: &Quad, b: &Quad) -> f64 {
    let mut poly: Vec<Point> = a.vertices().to_vec();
    let clip = b.vertices();
    for i in 0..4 {
        let e0 = clip[i];
        let e1 = clip[(i + 1) % 4];
        poly = clip_halfplane(&poly, e0, e1);
        if poly.len() < 3 {
            return 0.0;
        }
    }
    polygon_area(&poly)
}

/// Keeps the part of `poly` on the left of directed edge e0 -> e1.
fn clip_halfplane(poly: &[Point], e0: Point, e1: Point) -> Vec<Point> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    let n = poly.len();
    for i in 0..n {
        let s = poly[i];
        let e = poly[(i + 1) % n];
        let sc = cross(e0, e1, s);
        let ec = cross(e0, e1, e);
        let s_in = sc >= 0.0;
        let e_in = ec >= 0.0;
        match (s_in, e_in) {
            (true, true) => out.push(e),
            (true, false) | (false, true) => {
                let denom = sc - ec;
                if denom.abs() > GEOM_EPS {
                    let t = sc / denom;
                    out.push(Point::new(s.x + (e.x - s.x) * t, s.y + (e.y - s.y) * t));
                }
                if e_in {
                    out.push(e);
                }
            }
            (false, false) => {}
        }
    }
    out
}

fn polygon_area(poly: &[Point]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    (acc / 2.0).abs()
}

/// Intersection over union of two convex quads.
pub fn iou(a: &Quad, b: &Quad) -> f64 {
    let inter = intersection_area(a, b);
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}
