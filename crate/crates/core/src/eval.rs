//! Evaluation: greedy VOC matching, 11-point interpolated average
//! precision, mAP, and the confidence-vs-IoU true-positive heatmap.

use crate::data::AnnotationSet;
use crate::geometry::iou;
use crate::postprocess::Detection;

/// Outcome of matching one image's detections against its ground truth.
#[derive(Debug, Clone)]
pub struct MatchResult {
    /// Per detection, in the order given: true positive flag and, for TPs,
    /// the matched IoU.
    pub detections: Vec<DetectionMatch>,
    /// Number of non-difficult ground-truth objects per class id.
    pub n_gt: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionMatch {
    pub class_id: i32,
    pub confidence: f64,
    pub score: f64,
    pub kind: MatchKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatchKind {
    TruePositive { iou: f64 },
    FalsePositive,
    /// Matched a difficult ground-truth object; excluded from scoring.
    Ignored,
}

/// Greedy VOC matching for one image. Detections are processed in
/// descending score; each matches the highest-IoU unmatched same-class
/// ground truth with IoU >= `iou_thresh`. Difficult ground truths are
/// excluded from `n_gt` and absorb detections without generating FPs.
pub fn match_detections(
    dets: &[Detection],
    gts: &AnnotationSet,
    n_classes: usize,
    iou_thresh: f64,
) -> MatchResult {
    let mut n_gt = vec![0usize; n_classes];
    for obj in &gts.objects {
        if !obj.difficult && obj.class_id >= 0 {
            n_gt[obj.class_id as usize] += 1;
        }
    }

    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap()
            .then(a.cmp(&b))
    });

    let mut gt_used = vec![false; gts.objects.len()];
    let mut results = vec![
        DetectionMatch {
            class_id: -1,
            confidence: 0.0,
            score: 0.0,
            kind: MatchKind::FalsePositive,
        };
        dets.len()
    ];
    for &i in &order {
        let det = &dets[i];
        let mut best: Option<(usize, f64)> = None;
        for (j, obj) in gts.objects.iter().enumerate() {
            if gt_used[j] || obj.class_id != det.class_id {
                continue;
            }
            let overlap = iou(&det.quad, &obj.quad);
            if overlap >= iou_thresh {
                let better = match best {
                    None => true,
                    Some((_, b)) => overlap > b,
                };
                if better {
                    best = Some((j, overlap));
                }
            }
        }
        let kind = match best {
            Some((j, overlap)) => {
                gt_used[j] = true;
                if gts.objects[j].difficult {
                    MatchKind::Ignored
                } else {
                    MatchKind::TruePositive { iou: overlap }
                }
            }
            None => MatchKind::FalsePositive,
        };
        results[i] = DetectionMatch {
            class_id: det.class_id,
            confidence: det.confidence,
            score: det.score,
            kind,
        };
    }
    MatchResult {
        detections: results,
        n_gt,
    }
}

/// Merges per-image match results into one pool.
pub fn merge_matches(results: &[MatchResult], n_classes: usize) -> MatchResult {
    let mut detections = Vec::new();
    let mut n_gt = vec![0usize; n_classes];
    for r in results {
        detections.extend(r.detections.iter().cloned());
        for (acc, &n) in n_gt.iter_mut().zip(&r.n_gt) {
            *acc += n;
        }
    }
    MatchResult { detections, n_gt }
}

/// VOC07 11-point interpolated average precision for one class.
///
/// `tp_flags` are (score, is_tp) pairs for every non-ignored detection of
/// the class. With no ground truth, AP is 1 when there are no detections
/// (vacuous class) and 0 otherwise.
pub fn average_precision(tp_flags: &[(f64, bool)], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return if tp_flags.is_empty() { 1.0 } else { 0.0 };
    }
    let mut ranked: Vec<(f64, bool)> = tp_flags.to_vec();
    ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

    let mut tp_cum = 0usize;
    let mut fp_cum = 0usize;
    let mut curve: Vec<(f64, f64)> = Vec::with_capacity(ranked.len()); // (recall, precision)
    for &(_, is_tp) in &ranked {
        if is_tp {
            tp_cum += 1;
        } else {
            fp_cum += 1;
        }
        let recall = tp_cum as f64 / n_gt as f64;
        let precision = tp_cum as f64 / (tp_cum + fp_cum) as f64;
        curve.push((recall, precision));
    }

    let mut sum = 0.0;
    for i in 0..=10 {
        let r = i as f64 / 10.0;
        let p_max = curve
            .iter()
            .filter(|(recall, _)| *recall >= r - 1e-12)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        sum += p_max;
    }
    sum / 11.0
}

/// Per-class AP from a pooled match result.
pub fn per_class_ap(matches: &MatchResult) -> Vec<f64> {
    let n_classes = matches.n_gt.len();
    (0..n_classes)
        .map(|c| {
            let flags: Vec<(f64, bool)> = matches
                .detections
                .iter()
                .filter(|d| d.class_id == c as i32)
                .filter_map(|d| match d.kind {
                    MatchKind::TruePositive { .. } => Some((d.score, true)),
                    MatchKind::FalsePositive => Some((d.score, false)),
                    MatchKind::Ignored => None,
                })
                .collect();
            average_precision(&flags, matches.n_gt[c])
        })
        .collect()
}

/// Arithmetic mean over per-class APs.
pub fn mean_ap(aps: &[f64]) -> f64 {
    assert!(!aps.is_empty(), "mean_ap needs at least one class");
    aps.iter().sum::<f64>() / aps.len() as f64
}

/// 2-D histogram of (confidence, IoU) pairs over true positives.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapGrid {
    pub bins: usize,
    /// Row-major counts; row = IoU bin, column = confidence bin.
    pub counts: Vec<u64>,
}

impl HeatmapGrid {
    pub fn new(bins: usize) -> HeatmapGrid {
        HeatmapGrid {
            bins,
            counts: vec![0; bins * bins],
        }
    }

    fn bin(&self, v: f64) -> usize {
        ((v * self.bins as f64) as usize).min(self.bins - 1)
    }

    pub fn add(&mut self, confidence: f64, iou: f64) {
        let c = self.bin(confidence.clamp(0.0, 1.0));
        let r = self.bin(iou.clamp(0.0, 1.0));
        self.counts[r * self.bins + c] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Plain-text grid: one row of counts per line, IoU bin 0 first.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in 0..self.bins {
            let row: Vec<String> = (0..self.bins)
                .map(|c| self.counts[r * self.bins + c].to_string())
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// Binary PGM grey-map, brightness proportional to density. The image
    /// is flipped so IoU grows upward.
    pub fn to_pgm(&self) -> Vec<u8> {
        let max = self.counts.iter().copied().max().unwrap_or(0).max(1);
        let mut out = format!("P5\n{} {}\n255\n", self.bins, self.bins).into_bytes();
        for r in (0..self.bins).rev() {
            for c in 0..self.bins {
                let v = self.counts[r * self.bins + c];
                out.push(((v * 255) / max) as u8);
            }
        }
        out
    }
}

/// Bins raw confidence p (never the adjusted score) against IoU for every
/// true positive. Returns one grid per class when `per_class` is set,
/// otherwise a single pooled grid.
pub fn collect_heatmap(matches: &MatchResult, bins: usize, per_class: bool) -> Vec<HeatmapGrid> {
    let n_grids = if per_class { matches.n_gt.len() } else { 1 };
    let mut grids = vec![HeatmapGrid::new(bins); n_grids];
    for d in &matches.detections {
        if let MatchKind::TruePositive { iou } = d.kind {
            let g = if per_class { d.class_id as usize } else { 0 };
            grids[g].add(d.confidence, iou);
        }
    }
    grids
}
