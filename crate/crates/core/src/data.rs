//! Dataset tooling: annotation text format, overlapping patch splitting,
//! geometric augmentations, and patch-to-image detection merging.
//!
//! The annotation format is one object per line,
//! `x1 y1 x2 y2 x3 y3 x4 y4 class difficult`, with optional header lines
//! starting with `imagesource` or `gsd` that are skipped.

use crate::geometry::{self, GeometryError, Point, Quad};
use crate::postprocess::{rotated_nms, Detection};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("line {line}: unknown class '{name}'")]
    UnknownClass { line: usize, name: String },
    #[error("line {line}: invalid quad: {source}")]
    BadQuad {
        line: usize,
        source: GeometryError,
    },
}

/// One annotated ground-truth object.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedObject {
    pub quad: Quad,
    pub class_id: i32,
    pub class_name: String,
    pub difficult: bool,
}

/// Parsed ground truth for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    pub image_id: String,
    pub image_w: i64,
    pub image_h: i64,
    pub objects: Vec<AnnotatedObject>,
}

/// Declared category list; class ids are indices into it.
#[derive(Debug, Clone)]
pub struct ClassList {
    names: Vec<String>,
}

impl ClassList {
    pub fn new<S: Into<String>>(names: Vec<S>) -> ClassList {
        ClassList {
            names: names.into_iter().map(Into::into).collect(),
        }
    }

    pub fn id_of(&self, name: &str) -> Option<i32> {
        self.names.iter().position(|n| n == name).map(|i| i as i32)
    }

    pub fn name_of(&self, id: i32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Repairs slightly non-convex vertex lists by taking the convex hull when
/// it still has four vertices; anything else is rejected.
pub fn repair_quad(points: [Point; 4]) -> Result<Quad, GeometryError> {
    match Quad::new(points) {
        Ok(q) => Ok(q),
        Err(_) => {
            let hull = convex_hull(&points);
            if hull.len() == 4 {
                Quad::new([hull[0], hull[1], hull[2], hull[3]])
            } else {
                Err(GeometryError::InvalidQuad("convex hull has fewer than 4 vertices"))
            }
        }
    }
}

/// Andrew monotone chain over up to four points.
fn convex_hull(points: &[Point; 4]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
    pts.dedup_by(|a, b| a.distance(b) <= 1e-12);
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2
            && geometry::cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 1e-12
        {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2
            && geometry::cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 1e-12
        {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Parses annotation text into objects, canonicalizing every quad.
pub fn parse_annotations(
    text: &str,
    classes: &ClassList,
) -> Result<Vec<AnnotatedObject>, DataError> {
    let mut objects = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty()
            || trimmed.starts_with("imagesource")
            || trimmed.starts_with("gsd")
        {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 10 {
            return Err(DataError::Parse {
                line,
                col: 1,
                msg: format!("expected 10 fields, found {}", fields.len()),
            });
        }
        let mut coords = [0.0f64; 8];
        for (i, f) in fields[..8].iter().enumerate() {
            coords[i] = f.parse().map_err(|_| DataError::Parse {
                line,
                col: i + 1,
                msg: format!("malformed coordinate '{f}'"),
            })?;
        }
        let name = fields[8];
        let class_id = classes.id_of(name).ok_or_else(|| DataError::UnknownClass {
            line,
            name: name.to_string(),
        })?;
        let difficult = match fields[9] {
            "0" => false,
            "1" => true,
            other => {
                return Err(DataError::Parse {
                    line,
                    col: 10,
                    msg: format!("difficult flag must be 0 or 1, found '{other}'"),
                })
            }
        };
        let pts = [
            Point::new(coords[0], coords[1]),
            Point::new(coords[2], coords[3]),
            Point::new(coords[4], coords[5]),
            Point::new(coords[6], coords[7]),
        ];
        let quad = repair_quad(pts).map_err(|source| DataError::BadQuad { line, source })?;
        objects.push(AnnotatedObject {
            quad,
            class_id,
            class_name: name.to_string(),
            difficult,
        });
    }
    Ok(objects)
}

/// Serializes objects in the annotation text format. `parse -> write ->
/// parse` is a fixed point.
pub fn write_annotations(objects: &[AnnotatedObject]) -> String {
    let mut out = String::new();
    for obj in objects {
        let c = obj.quad.coords();
        for v in c {
            out.push_str(&format!("{v} "));
        }
        out.push_str(&format!(
            "{} {}\n",
            obj.class_name,
            if obj.difficult { 1 } else { 0 }
        ));
    }
    out
}

/// One crop window of a source image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchSpec {
    pub x: i64,
    pub y: i64,
    pub size: i64,
}

/// Splits an image into overlapping patches with full coverage. Origins
/// advance by `size - overlap`; the final patch is back-shifted to end
/// exactly at the image border.
pub fn split_patches(image_w: i64, image_h: i64, size: i64, overlap: i64) -> Vec<PatchSpec> {
    assert!(size > overlap && overlap >= 0, "require 0 <= overlap < size");
    let stride = size - overlap;
    let origins = |dim: i64| -> Vec<i64> {
        if dim <= size {
            return vec![0];
        }
        let mut out = Vec::new();
        let mut o = 0;
        while o + size < dim {
            out.push(o);
            o += stride;
        }
        let last = dim - size;
        if out.last() != Some(&last) {
            out.push(last);
        }
        out
    };
    let xs = origins(image_w);
    let ys = origins(image_h);
    let mut patches = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            patches.push(PatchSpec { x, y, size });
        }
    }
    patches
}

/// Writes a patch manifest: `image_id x y size` per line.
pub fn write_manifest(image_id: &str, patches: &[PatchSpec]) -> String {
    let mut out = String::new();
    for p in patches {
        out.push_str(&format!("{image_id} {} {} {}\n", p.x, p.y, p.size));
    }
    out
}

/// Parses a patch manifest back into `(image_id, PatchSpec)` records.
pub fn parse_manifest(text: &str) -> Result<Vec<(String, PatchSpec)>, DataError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 4 {
            return Err(DataError::Parse {
                line,
                col: 1,
                msg: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let parse_i = |i: usize| -> Result<i64, DataError> {
            fields[i].parse().map_err(|_| DataError::Parse {
                line,
                col: i + 1,
                msg: format!("malformed integer '{}'", fields[i]),
            })
        };
        out.push((
            fields[0].to_string(),
            PatchSpec {
                x: parse_i(1)?,
                y: parse_i(2)?,
                size: parse_i(3)?,
            },
        ));
    }
    Ok(out)
}

/// Translates annotations into patch coordinates, keeping an object iff
/// its vertex centroid lies inside the patch. Kept quads are not clipped.
pub fn remap_annotations(set: &AnnotationSet, patch: &PatchSpec) -> AnnotationSet {
    let x0 = patch.x as f64;
    let y0 = patch.y as f64;
    let x1 = (patch.x + patch.size) as f64;
    let y1 = (patch.y + patch.size) as f64;
    let objects = set
        .objects
        .iter()
        .filter(|obj| {
            let c = obj.quad.centroid();
            c.x >= x0 && c.x < x1 && c.y >= y0 && c.y < y1
        })
        .map(|obj| AnnotatedObject {
            quad: obj.quad.translate(-x0, -y0),
            ..obj.clone()
        })
        .collect();
    AnnotationSet {
        image_id: format!("{}__{}_{}", set.image_id, patch.x, patch.y),
        image_w: patch.size.min(set.image_w - patch.x),
        image_h: patch.size.min(set.image_h - patch.y),
        objects,
    }
}

/// Deterministic geometric augmentations. rot90/rot270 rotate clockwise /
/// counter-clockwise and swap the image dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Augment {
    HFlip,
    VFlip,
    Rot90,
    Rot180,
    Rot270,
}

impl Augment {
    /// Maps a point; `w`/`h` are the source image dimensions.
    pub fn map_point(self, p: Point, w: f64, h: f64) -> Point {
        match self {
            Augment::HFlip => Point::new(w - p.x, p.y),
            Augment::VFlip => Point::new(p.x, h - p.y),
            Augment::Rot90 => Point::new(h - p.y, p.x),
            Augment::Rot180 => Point::new(w - p.x, h - p.y),
            Augment::Rot270 => Point::new(p.y, w - p.x),
        }
    }

    pub fn swaps_dims(self) -> bool {
        matches!(self, Augment::Rot90 | Augment::Rot270)
    }
}

/// Applies one exact affine augmentation to every annotation quad.
pub fn augment(transform: Augment, set: &AnnotationSet) -> AnnotationSet {
    let w = set.image_w as f64;
    let h = set.image_h as f64;
    let objects = set
        .objects
        .iter()
        .map(|obj| {
            let v = obj.quad.vertices();
            let mapped = [
                transform.map_point(v[0], w, h),
                transform.map_point(v[1], w, h),
                transform.map_point(v[2], w, h),
                transform.map_point(v[3], w, h),
            ];
            AnnotatedObject {
                quad: Quad::new(mapped).expect("rigid map preserves convexity"),
                ..obj.clone()
            }
        })
        .collect();
    let (image_w, image_h) = if transform.swaps_dims() {
        (set.image_h, set.image_w)
    } else {
        (set.image_w, set.image_h)
    };
    AnnotationSet {
        image_id: set.image_id.clone(),
        image_w,
        image_h,
        objects,
    }
}

/// Translates per-patch detections into source-image coordinates and
/// deduplicates across overlapping patches with rotated NMS.
pub fn merge_patch_detections(
    per_patch: &[(PatchSpec, Vec<Detection>)],
    t_nms: f64,
) -> Vec<Detection> {
    let mut all = Vec::new();
    for (patch, dets) in per_patch {
        for d in dets {
            let mut moved = d.clone();
            moved.quad = d.quad.translate(patch.x as f64, patch.y as f64);
            all.push(moved);
        }
    }
    rotated_nms(&all, t_nms)
}
