//! Test-time pipeline: center-ness score adjustment, confidence
//! thresholding, top-k filtering, and greedy per-class rotated NMS, plus
//! the line-oriented detection dump format.

use crate::geometry::{iou, GeometryError, Quad};
use thiserror::Error;

/// Pipeline defaults.
pub const DEFAULT_CONF_THRESHOLD: f64 = 0.05;
pub const DEFAULT_TOP_K: usize = 2000;
pub const DEFAULT_NMS_THRESHOLD: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum PostprocessError {
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: invalid quad: {source}")]
    BadQuad {
        line: usize,
        source: GeometryError,
    },
}

/// One scored oriented detection.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: String,
    pub class_id: i32,
    pub class_name: String,
    pub quad: Quad,
    /// Classification confidence p.
    pub confidence: f64,
    /// Predicted center-ness o.
    pub centerness: f64,
    /// Ranking score s = sqrt(p * o).
    pub score: f64,
}

/// Geometric-mean score adjustment `s = sqrt(p * o)`.
pub fn adjust_score(p: f64, o: f64) -> Result<f64, PostprocessError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(PostprocessError::InvalidProbability(p));
    }
    if !(0.0..=1.0).contains(&o) {
        return Err(PostprocessError::InvalidProbability(o));
    }
    Ok((p * o).sqrt())
}

/// Removes detections with confidence strictly below `t`; stable order.
pub fn filter_threshold(dets: &[Detection], t: f64) -> Vec<Detection> {
    dets.iter().filter(|d| d.confidence >= t).cloned().collect()
}

/// Keeps the `k` highest-confidence detections. Ties break by
/// (class_id, insertion index) so the result is deterministic.
pub fn top_k(dets: &[Detection], k: usize) -> Vec<Detection> {
    let mut indexed: Vec<(usize, &Detection)> = dets.iter().enumerate().collect();
    indexed.sort_by(|(ia, a), (ib, b)| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap()
            .then(a.class_id.cmp(&b.class_id))
            .then(ia.cmp(ib))
    });
    indexed.truncate(k);
    // restore input order among the survivors
    indexed.sort_by_key(|(i, _)| *i);
    indexed.into_iter().map(|(_, d)| d.clone()).collect()
}

/// Greedy per-class rotated NMS. Detections are visited in descending
/// score (ties by confidence, class id, insertion index); a detection is
/// suppressed when its IoU with an already-kept same-class detection is
/// strictly greater than `t_nms`.
pub fn rotated_nms(dets: &[Detection], t_nms: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap()
            .then(dets[b].confidence.partial_cmp(&dets[a].confidence).unwrap())
            .then(dets[a].class_id.cmp(&dets[b].class_id))
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        let suppressed = kept.iter().any(|&j| {
            dets[j].class_id == dets[i].class_id && iou(&dets[j].quad, &dets[i].quad) > t_nms
        });
        if !suppressed {
            kept.push(i);
        }
    }
    kept.into_iter().map(|i| dets[i].clone()).collect()
}

/// Full test-time pipeline with the production defaults.
pub fn postprocess(dets: &[Detection]) -> Vec<Detection> {
    let filtered = filter_threshold(dets, DEFAULT_CONF_THRESHOLD);
    let top = top_k(&filtered, DEFAULT_TOP_K);
    rotated_nms(&top, DEFAULT_NMS_THRESHOLD)
}

/// Serializes detections: one record per line,
/// `image_id class_name p o s x0 y0 x1 y1 x2 y2 x3 y3`.
/// Floats use the shortest round-trip representation, so
/// `write -> parse -> write` is byte-identical.
pub fn write_detections(dets: &[Detection]) -> String {
    let mut out = String::new();
    for d in dets {
        out.push_str(&format!(
            "{} {} {} {} {}",
            d.image_id, d.class_name, d.confidence, d.centerness, d.score
        ));
        for c in d.quad.coords() {
            out.push_str(&format!(" {c}"));
        }
        out.push('\n');
    }
    out
}

/// Parses the detection dump format. Class ids are resolved against the
/// given class list when a name is known, else -1.
pub fn parse_detections(
    text: &str,
    classes: &crate::data::ClassList,
) -> Result<Vec<Detection>, PostprocessError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 13 {
            return Err(PostprocessError::Parse {
                line,
                msg: format!("expected 13 fields, found {}", fields.len()),
            });
        }
        let parse_f = |i: usize| -> Result<f64, PostprocessError> {
            fields[i].parse().map_err(|_| PostprocessError::Parse {
                line,
                msg: format!("malformed number '{}'", fields[i]),
            })
        };
        let mut coords = [0.0; 8];
        for (k, c) in coords.iter_mut().enumerate() {
            *c = parse_f(5 + k)?;
        }
        let quad = Quad::from_coords(coords)
            .map_err(|source| PostprocessError::BadQuad { line, source })?;
        out.push(Detection {
            image_id: fields[0].to_string(),
            class_name: fields[1].to_string(),
            class_id: classes.id_of(fields[1]).unwrap_or(-1),
            confidence: parse_f(2)?,
            centerness: parse_f(3)?,
            score: parse_f(4)?,
            quad,
        });
    }
    Ok(out)
}
