//! Shared helpers for the integration test suites: deterministic random
//! convex quads and detections built on the counter RNG.
// not every test binary uses every helper
#![allow(dead_code)]

use quadet::geometry;
use quadet::postprocess::Detection;
use quadet::rng::CounterRng;
use quadet::{Point, Quad};

/// Random strictly convex quad: four distinct sorted angles on an ellipse,
/// rotated and translated. Points on an ellipse in angular order are
/// always strictly convex.
pub fn random_convex_quad(rng: &mut CounterRng) -> Quad {
    loop {
        let cx = rng.uniform(30.0, 220.0);
        let cy = rng.uniform(30.0, 220.0);
        let a = rng.uniform(6.0, 45.0);
        let b = rng.uniform(6.0, 45.0);
        let rot = rng.uniform(0.0, std::f64::consts::TAU);
        let mut angles = [0.0f64; 4];
        for v in &mut angles {
            *v = rng.uniform(0.0, std::f64::consts::TAU);
        }
        angles.sort_by(|x, y| x.partial_cmp(y).unwrap());
        // reject nearly coincident vertices
        let mut ok = true;
        for i in 0..4 {
            let gap = if i == 3 {
                angles[0] + std::f64::consts::TAU - angles[3]
            } else {
                angles[i + 1] - angles[i]
            };
            if gap < 0.25 {
                ok = false;
            }
        }
        if !ok {
            continue;
        }
        let (sr, cr) = rot.sin_cos();
        let mut coords = [0.0; 8];
        for (i, ang) in angles.iter().enumerate() {
            let (s, c) = ang.sin_cos();
            let (x, y) = (a * c, b * s);
            coords[2 * i] = cx + x * cr - y * sr;
            coords[2 * i + 1] = cy + x * sr + y * cr;
        }
        if let Ok(q) = Quad::from_coords(coords) {
            return q;
        }
    }
}

/// Strictly interior point as a convex combination with bounded-away
/// weights.
pub fn interior_point(rng: &mut CounterRng, quad: &Quad) -> Point {
    let mut w = [0.0f64; 4];
    let mut sum = 0.0;
    for v in &mut w {
        *v = rng.uniform(0.1, 1.0);
        sum += *v;
    }
    let verts = quad.vertices();
    let mut x = 0.0;
    let mut y = 0.0;
    for i in 0..4 {
        x += w[i] / sum * verts[i].x;
        y += w[i] / sum * verts[i].y;
    }
    Point::new(x, y)
}

/// Rotates a quad and point together around the quad centroid.
pub fn rotate_about_centroid(quad: &Quad, p: Point, angle: f64) -> (Quad, Point) {
    let c = quad.centroid();
    let (s, co) = angle.sin_cos();
    let rot = |q: Point| {
        Point::new(
            c.x + (q.x - c.x) * co - (q.y - c.y) * s,
            c.y + (q.x - c.x) * s + (q.y - c.y) * co,
        )
    };
    let v = quad.vertices();
    let rq = Quad::new([rot(v[0]), rot(v[1]), rot(v[2]), rot(v[3])]).expect("rotation preserves convexity");
    (rq, rot(p))
}

pub fn random_detection(rng: &mut CounterRng, image_id: &str, n_classes: i32) -> Detection {
    let quad = random_convex_quad(rng);
    let p = rng.uniform(0.01, 1.0);
    let o = rng.uniform(0.01, 1.0);
    let class_id = rng.below(n_classes as u64) as i32;
    Detection {
        image_id: image_id.to_string(),
        class_id,
        class_name: format!("c{class_id}"),
        quad,
        confidence: p,
        centerness: o,
        score: (p * o).sqrt(),
    }
}

/// Monte-Carlo IoU estimate over the pair's joint bounding box.
pub fn monte_carlo_iou(a: &Quad, b: &Quad, samples: usize, rng: &mut CounterRng) -> f64 {
    let pts: Vec<Point> = a.vertices().iter().chain(b.vertices().iter()).copied().collect();
    let min_x = pts.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let max_x = pts.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let min_y = pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let max_y = pts.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let box_area = (max_x - min_x) * (max_y - min_y);
    let mut hits = 0usize;
    for _ in 0..samples {
        let p = Point::new(rng.uniform(min_x, max_x), rng.uniform(min_y, max_y));
        if geometry::contains(a, p) && geometry::contains(b, p) {
            hits += 1;
        }
    }
    let inter = hits as f64 / samples as f64 * box_area;
    let union = geometry::area(a) + geometry::area(b) - inter;
    inter / union
}
