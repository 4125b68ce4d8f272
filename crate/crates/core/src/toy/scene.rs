//! Synthetic oriented-rectangle scenes for the desk-scale trainer.
//!
//! Each scene is a small 3-channel raster with 1-3 rotated rectangles of 3
//! classes, each class drawn with its own fill pattern. Generation is a
//! pure function of the generator state.

use crate::data::{AnnotatedObject, AnnotationSet, Augment, ClassList};
use crate::geometry::{contains, Point, Quad};
use crate::rng::CounterRng;

/// Default class names for synthetic scenes.
pub fn toy_classes() -> ClassList {
    ClassList::new(vec!["solid", "striped", "checkered"])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub size: i64,
    pub min_objects: usize,
    pub max_objects: usize,
    pub n_classes: usize,
    /// Shorter rectangle side range in pixels.
    pub min_side: f64,
    pub max_side: f64,
    /// Long/short side ratio range.
    pub max_ratio: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            size: 128,
            min_objects: 1,
            max_objects: 3,
            n_classes: 3,
            min_side: 8.0,
            max_side: 16.0,
            max_ratio: 5.0,
        }
    }
}

/// A 3-channel float image in [0, 1], row-major, channel-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub w: usize,
    pub h: usize,
    pub data: Vec<f64>, // len = w * h * 3
}

impl Raster {
    pub fn new(w: usize, h: usize) -> Raster {
        Raster {
            w,
            h,
            data: vec![0.0; w * h * 3],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.w + x) * 3 + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.w + x) * 3 + c] = v;
    }

    /// Applies the same flip/rotation the annotation augment applies.
    pub fn augmented(&self, t: Augment) -> Raster {
        let (nw, nh) = if t.swaps_dims() {
            (self.h, self.w)
        } else {
            (self.w, self.h)
        };
        let mut out = Raster::new(nw, nh);
        for y in 0..self.h {
            for x in 0..self.w {
                // map the pixel center and floor back to a cell
                let p = t.map_point(
                    Point::new(x as f64 + 0.5, y as f64 + 0.5),
                    self.w as f64,
                    self.h as f64,
                );
                let nx = (p.x.floor() as usize).min(nw - 1);
                let ny = (p.y.floor() as usize).min(nh - 1);
                for c in 0..3 {
                    out.set(nx, ny, c, self.get(x, y, c));
                }
            }
        }
        out
    }
}

/// Per-channel summed-area table for O(1) window means.
pub struct IntegralImage {
    w: usize,
    h: usize,
    /// (w+1) * (h+1) per channel.
    sums: [Vec<f64>; 3],
}

impl IntegralImage {
    pub fn build(raster: &Raster) -> IntegralImage {
        let (w, h) = (raster.w, raster.h);
        let mut sums: [Vec<f64>; 3] = [
            vec![0.0; (w + 1) * (h + 1)],
            vec![0.0; (w + 1) * (h + 1)],
            vec![0.0; (w + 1) * (h + 1)],
        ];
        for c in 0..3 {
            let s = &mut sums[c];
            for y in 0..h {
                let mut row = 0.0;
                for x in 0..w {
                    row += raster.get(x, y, c);
                    s[(y + 1) * (w + 1) + (x + 1)] = s[y * (w + 1) + (x + 1)] + row;
                }
            }
        }
        IntegralImage { w, h, sums }
    }

    /// Mean over the pixel rectangle [x0, x1) x [y0, y1) intersected with
    /// the image; area outside the image counts as zero.
    pub fn window_mean(&self, c: usize, x0: i64, y0: i64, x1: i64, y1: i64) -> f64 {
        let full_area = ((x1 - x0) * (y1 - y0)) as f64;
        if full_area <= 0.0 {
            return 0.0;
        }
        let cx0 = x0.clamp(0, self.w as i64) as usize;
        let cx1 = x1.clamp(0, self.w as i64) as usize;
        let cy0 = y0.clamp(0, self.h as i64) as usize;
        let cy1 = y1.clamp(0, self.h as i64) as usize;
        if cx1 <= cx0 || cy1 <= cy0 {
            return 0.0;
        }
        let s = &self.sums[c];
        let stride = self.w + 1;
        let total = s[cy1 * stride + cx1] - s[cy0 * stride + cx1] - s[cy1 * stride + cx0]
            + s[cy0 * stride + cx0];
        total / full_area
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub raster: Raster,
    pub annotations: AnnotationSet,
}

/// Class fill color: channel `class` bright, the others dim.
fn class_color(class: usize) -> [f64; 3] {
    let mut c = [0.15; 3];
    c[class] = 0.9;
    c
}

/// Deterministic scene for a given generator state.
pub fn generate_scene(rng: &mut CounterRng, cfg: &SceneConfig) -> SyntheticScene {
    let size = cfg.size as usize;
    let mut raster = Raster::new(size, size);

    // dark noisy background
    for y in 0..size {
        for x in 0..size {
            for c in 0..3 {
                raster.set(x, y, c, 0.05 + 0.05 * rng.next_f64());
            }
        }
    }

    let n_objects =
        cfg.min_objects + rng.below((cfg.max_objects - cfg.min_objects + 1) as u64) as usize;
    let mut objects: Vec<AnnotatedObject> = Vec::with_capacity(n_objects);
    let classes = toy_classes();

    for _ in 0..n_objects {
        // retry until the rectangle fits fully inside the image and does
        // not overlap an existing object too much
        let mut placed = None;
        for _attempt in 0..40 {
            let class = rng.below(cfg.n_classes as u64) as usize;
            let short = rng.uniform(cfg.min_side, cfg.max_side);
            let ratio = rng.uniform(1.0, cfg.max_ratio);
            let long = short * ratio;
            let angle = rng.uniform(0.0, std::f64::consts::PI);
            let half_diag = 0.5 * (short * short + long * long).sqrt();
            let margin = half_diag + 2.0;
            if 2.0 * margin >= cfg.size as f64 {
                continue;
            }
            let cx = rng.uniform(margin, cfg.size as f64 - margin);
            let cy = rng.uniform(margin, cfg.size as f64 - margin);
            let (sin, cos) = angle.sin_cos();
            let (hl, hs) = (long / 2.0, short / 2.0);
            let corner = |u: f64, v: f64| {
                Point::new(cx + u * cos - v * sin, cy + u * sin + v * cos)
            };
            let quad = Quad::new([
                corner(-hl, -hs),
                corner(hl, -hs),
                corner(hl, hs),
                corner(-hl, hs),
            ])
            .expect("sampled rectangle is convex");
            let overlaps = objects
                .iter()
                .any(|o| crate::geometry::iou(&o.quad, &quad) > 0.05);
            if !overlaps {
                placed = Some((class, quad, cx, cy, angle));
                break;
            }
        }
        let Some((class, quad, cx, cy, angle)) = placed else {
            continue;
        };
        paint_object(&mut raster, &quad, class, cx, cy, angle);
        objects.push(AnnotatedObject {
            quad,
            class_id: class as i32,
            class_name: classes.name_of(class as i32).unwrap().to_string(),
            difficult: false,
        });
    }

    SyntheticScene {
        raster,
        annotations: AnnotationSet {
            image_id: "toy".into(),
            image_w: cfg.size,
            image_h: cfg.size,
            objects,
        },
    }
}

fn paint_object(raster: &mut Raster, quad: &Quad, class: usize, cx: f64, cy: f64, angle: f64) {
    let color = class_color(class);
    let coords = quad.coords();
    let min_x = coords.iter().step_by(2).fold(f64::INFINITY, |a, &b| a.min(b));
    let max_x = coords.iter().step_by(2).fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let min_y = coords.iter().skip(1).step_by(2).fold(f64::INFINITY, |a, &b| a.min(b));
    let max_y = coords.iter().skip(1).step_by(2).fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let (sin, cos) = angle.sin_cos();
    let x0 = (min_x.floor().max(0.0)) as usize;
    let x1 = (max_x.ceil().min(raster.w as f64)) as usize;
    let y0 = (min_y.floor().max(0.0)) as usize;
    let y1 = (max_y.ceil().min(raster.h as f64)) as usize;
    for py in y0..y1 {
        for px in x0..x1 {
            let p = Point::new(px as f64 + 0.5, py as f64 + 0.5);
            if !contains(quad, p) {
                continue;
            }
            // pattern coordinate along the object's long axis
            let u = (p.x - cx) * cos + (p.y - cy) * sin;
            let v = -(p.x - cx) * sin + (p.y - cy) * cos;
            let tex = match class {
                1 => {
                    if ((u / 4.0).floor() as i64).rem_euclid(2) == 0 {
                        1.0
                    } else {
                        0.55
                    }
                }
                2 => {
                    let a = ((u / 4.0).floor() as i64).rem_euclid(2);
                    let b = ((v / 4.0).floor() as i64).rem_euclid(2);
                    if a == b {
                        1.0
                    } else {
                        0.55
                    }
                }
                _ => 1.0,
            };
            for c in 0..3 {
                raster.set(px, py, c, color[c] * tex);
            }
        }
    }
}
