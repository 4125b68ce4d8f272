//! Training objective: focal classification loss, SmoothL1 corner
//! regression with eight-point modulation, binary cross-entropy for
//! center-ness, and the normalized weighted total. Every loss returns an
//! analytic gradient with respect to its inputs.

use thiserror::Error;

pub const FOCAL_ALPHA: f64 = 0.25;
pub const FOCAL_GAMMA: f64 = 2.0;
pub const SMOOTH_L1_BETA: f64 = 1.0 / 9.0;
/// Probabilities are clamped into `[PROB_EPS, 1 - PROB_EPS]` before logs.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("probability {0} outside (0, 1)")]
    InvalidProbability(f64),
}

/// A scalar loss value together with its gradient w.r.t. the inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerm {
    pub value: f64,
    pub gradient: Vec<f64>,
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Focal loss for one probability/label pair.
///
/// Positives: `-alpha (1-p)^gamma ln p`; negatives:
/// `-(1-alpha) p^gamma ln(1-p)`.
pub fn focal_loss(
    prob: f64,
    is_positive: bool,
    alpha: f64,
    gamma: f64,
) -> Result<LossTerm, LossError> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(LossError::InvalidProbability(prob));
    }
    let (value, grad) = if is_positive {
        let q = 1.0 - prob;
        let v = -alpha * q.powf(gamma) * prob.ln();
        // d/dp [-a (1-p)^g ln p] = a g (1-p)^(g-1) ln p - a (1-p)^g / p
        let g = alpha * gamma * q.powf(gamma - 1.0) * prob.ln() - alpha * q.powf(gamma) / prob;
        (v, g)
    } else {
        let q = 1.0 - prob;
        let v = -(1.0 - alpha) * prob.powf(gamma) * q.ln();
        let g = -(1.0 - alpha) * gamma * prob.powf(gamma - 1.0) * q.ln()
            + (1.0 - alpha) * prob.powf(gamma) / q;
        (v, g)
    };
    Ok(LossTerm {
        value,
        gradient: vec![grad],
    })
}

/// SmoothL1 (Huber-style) loss on a scalar difference.
pub fn smooth_l1(diff: f64, beta: f64) -> LossTerm {
    let (value, grad) = if diff.abs() < beta {
        (diff * diff / (2.0 * beta), diff / beta)
    } else {
        (diff.abs() - beta / 2.0, diff.signum())
    };
    LossTerm {
        value,
        gradient: vec![grad],
    }
}

/// Cyclic shift of the 8-vector target by `shift` vertices.
fn shift_target(target: &[f64; 8], shift: usize) -> [f64; 8] {
    let mut out = [0.0; 8];
    for i in 0..4 {
        let j = (i + shift) % 4;
        out[2 * i] = target[2 * j];
        out[2 * i + 1] = target[2 * j + 1];
    }
    out
}

/// Minimum SmoothL1 sum over the four cyclic vertex reorderings of the
/// target. The gradient flows through the argmin shift only.
pub fn eight_point_loss(pred: &[f64; 8], target: &[f64; 8], beta: f64) -> LossTerm {
    let mut best_value = f64::INFINITY;
    let mut best_grad = [0.0; 8];
    for shift in 0..4 {
        let shifted = shift_target(target, shift);
        let mut value = 0.0;
        let mut grad = [0.0; 8];
        for i in 0..8 {
            let term = smooth_l1(pred[i] - shifted[i], beta);
            value += term.value;
            grad[i] = term.gradient[0];
        }
        if value < best_value {
            best_value = value;
            best_grad = grad;
        }
    }
    LossTerm {
        value: best_value,
        gradient: best_grad.to_vec(),
    }
}

/// Binary cross-entropy; `pred` is clamped before the logarithms.
pub fn bce_loss(pred: f64, target: f64) -> LossTerm {
    let p = clamp_prob(pred);
    let value = -(target * p.ln() + (1.0 - target) * (1.0 - p).ln());
    let grad = if pred <= PROB_EPS || pred >= 1.0 - PROB_EPS {
        0.0 // clamped region is flat
    } else {
        -(target / p) + (1.0 - target) / (1.0 - p)
    };
    LossTerm {
        value,
        gradient: vec![grad],
    }
}

/// Loss term weights, normalized so that the active weights sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_cls: f64,
    pub lambda_reg: f64,
    pub lambda_ctr: f64,
    pub lambda_center: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_cls: 10.0,
            lambda_reg: 1.0,
            lambda_ctr: 1.0,
            lambda_center: 1.0,
        }
    }
}

impl LossWeights {
    /// Normalized weights for the active terms. `use_ctr` toggles the
    /// center-ness term, `use_center` the direct center term of the
    /// center-to-corner strategy.
    pub fn normalized(&self, use_ctr: bool, use_center: bool) -> (f64, f64, f64, f64) {
        let mut sum = self.lambda_cls + self.lambda_reg;
        if use_ctr {
            sum += self.lambda_ctr;
        }
        if use_center {
            sum += self.lambda_center;
        }
        (
            self.lambda_cls / sum,
            self.lambda_reg / sum,
            if use_ctr { self.lambda_ctr / sum } else { 0.0 },
            if use_center { self.lambda_center / sum } else { 0.0 },
        )
    }
}

/// Predictions for one location: per-class probabilities, stride-normalized
/// corner offsets, optional center-ness probability, optional center offset.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationPrediction {
    pub class_probs: Vec<f64>,
    pub corners: [f64; 8],
    pub centerness: Option<f64>,
    pub center: Option<[f64; 2]>,
}

/// Targets for one location, mirroring `assignment::LocationTarget` but
/// kept independent of the grid layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationGroundTruth {
    pub class_id: i32, // -1 = background
    pub corners: Option<[f64; 8]>,
    pub centerness: Option<f64>,
    pub center: Option<[f64; 2]>,
}

/// Gradients of the total loss w.r.t. every prediction input, matching the
/// layout of the input slice.
#[derive(Debug, Clone)]
pub struct TotalLossGrad {
    pub d_class: Vec<Vec<f64>>,
    pub d_corners: Vec<[f64; 8]>,
    pub d_centerness: Vec<f64>,
    pub d_center: Vec<[f64; 2]>,
}

/// Total training objective over a batch of locations.
///
/// Classification is summed over all locations and classes and divided by
/// the positive count (floor 1); regression, center-ness, and center terms
/// average over positives. Weights are normalized over the active terms.
pub fn total_loss(
    predictions: &[LocationPrediction],
    targets: &[LocationGroundTruth],
    weights: &LossWeights,
    use_ctr: bool,
    use_center: bool,
) -> Result<(f64, TotalLossGrad), LossError> {
    assert_eq!(predictions.len(), targets.len());
    let n = predictions.len();
    let (w_cls, w_reg, w_ctr, w_center) = weights.normalized(use_ctr, use_center);

    let n_pos = targets.iter().filter(|t| t.class_id >= 0).count();
    let pos_norm = (n_pos.max(1)) as f64;

    let mut grad = TotalLossGrad {
        d_class: predictions.iter().map(|p| vec![0.0; p.class_probs.len()]).collect(),
        d_corners: vec![[0.0; 8]; n],
        d_centerness: vec![0.0; n],
        d_center: vec![[0.0; 2]; n],
    };

    let mut cls_terms = Vec::new();
    let mut reg_terms = Vec::new();
    let mut ctr_terms = Vec::new();
    let mut center_terms = Vec::new();

    for (i, (pred, tgt)) in predictions.iter().zip(targets).enumerate() {
        // one-vs-all focal loss over every class channel
        for (c, &p) in pred.class_probs.iter().enumerate() {
            let pc = clamp_prob(p);
            let is_pos = tgt.class_id == c as i32;
            let term = focal_loss(pc, is_pos, FOCAL_ALPHA, FOCAL_GAMMA)?;
            cls_terms.push(term.value);
            grad.d_class[i][c] = w_cls * term.gradient[0] / pos_norm;
        }
        if tgt.class_id >= 0 {
            let target_corners = tgt.corners.expect("positive target has corners");
            let term = eight_point_loss(&pred.corners, &target_corners, SMOOTH_L1_BETA);
            reg_terms.push(term.value);
            for k in 0..8 {
                grad.d_corners[i][k] = w_reg * term.gradient[k] / pos_norm;
            }
            if use_ctr {
                let p = pred.centerness.expect("center-ness prediction required");
                let t = tgt.centerness.expect("positive target has center-ness");
                let term = bce_loss(p, t);
                ctr_terms.push(term.value);
                grad.d_centerness[i] = w_ctr * term.gradient[0] / pos_norm;
            }
            if use_center {
                let pc = pred.center.expect("center prediction required");
                let tc = tgt.center.expect("positive target has center");
                let mut v = 0.0;
                for k in 0..2 {
                    let term = smooth_l1(pc[k] - tc[k], SMOOTH_L1_BETA);
                    v += term.value;
                    grad.d_center[i][k] = w_center * term.gradient[0] / pos_norm;
                }
                center_terms.push(v);
            }
        }
    }

    let value = w_cls * pairwise_sum(&cls_terms) / pos_norm
        + w_reg * pairwise_sum(&reg_terms) / pos_norm
        + w_ctr * pairwise_sum(&ctr_terms) / pos_norm
        + w_center * pairwise_sum(&center_terms) / pos_norm;
    Ok((value, grad))
}

/// Pairwise tree reduction: deterministic and better-conditioned than a
/// running sum for long batches.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn focal_examples() {
        let t = focal_loss(0.5, true, FOCAL_ALPHA, FOCAL_GAMMA).unwrap();
        assert!((t.value - (-0.25 * 0.25 * 0.5f64.ln())).abs() < 1e-12);
        assert!((t.value - 0.043322).abs() < 1e-6);

        let t = focal_loss(1.0 - 1e-9, true, FOCAL_ALPHA, FOCAL_GAMMA).unwrap();
        assert!(t.value < 1e-12);

        let t = focal_loss(0.5, false, FOCAL_ALPHA, FOCAL_GAMMA).unwrap();
        assert!((t.value - 0.129966).abs() < 1e-6);

        assert!(focal_loss(0.0, true, FOCAL_ALPHA, FOCAL_GAMMA).is_err());
        assert!(focal_loss(1.0, false, FOCAL_ALPHA, FOCAL_GAMMA).is_err());
    }

    #[test]
    fn focal_monotone() {
        let mut prev_pos = f64::INFINITY;
        let mut prev_neg = 0.0;
        for i in 1..100 {
            let p = i as f64 / 100.0;
            let pos = focal_loss(p, true, FOCAL_ALPHA, FOCAL_GAMMA).unwrap().value;
            let neg = focal_loss(p, false, FOCAL_ALPHA, FOCAL_GAMMA).unwrap().value;
            assert!(pos < prev_pos);
            assert!(neg > prev_neg);
            prev_pos = pos;
            prev_neg = neg;
        }
    }

    #[test]
    fn smooth_l1_examples() {
        assert_eq!(smooth_l1(0.0, SMOOTH_L1_BETA).value, 0.0);
        let t = smooth_l1(1.0, SMOOTH_L1_BETA);
        assert!((t.value - 17.0 / 18.0).abs() < 1e-12);
        let t = smooth_l1(1.0 / 9.0, SMOOTH_L1_BETA);
        assert!((t.value - 1.0 / 18.0).abs() < 1e-12);
    }

    #[test]
    fn smooth_l1_c1_at_beta() {
        let b = SMOOTH_L1_BETA;
        let below = smooth_l1(b - 1e-12, b);
        let above = smooth_l1(b + 1e-12, b);
        assert!((below.value - above.value).abs() < 1e-9);
        assert!((below.gradient[0] - 1.0).abs() < 1e-9);
        assert!((above.gradient[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eight_point_examples() {
        let t = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
        assert_eq!(eight_point_loss(&t, &t, SMOOTH_L1_BETA).value, 0.0);

        // pred equals target cyclically shifted by one vertex
        let shifted = shift_target(&t, 1);
        assert_eq!(eight_point_loss(&shifted, &t, SMOOTH_L1_BETA).value, 0.0);

        let plus_one: [f64; 8] = std::array::from_fn(|i| t[i] + 1.0);
        // the unshifted alignment is optimal here
        let v = eight_point_loss(&plus_one, &t, SMOOTH_L1_BETA).value;
        assert!(v <= 8.0 * (17.0 / 18.0) + 1e-12);
    }

    #[test]
    fn eight_point_symmetric_plus_one() {
        // a target whose cyclic shifts are all far away: shifting changes
        // coordinates by more than 1, so +1 on every coordinate keeps the
        // identity shift optimal and the loss is exactly 8 * (1 - 1/18)
        let t = [0.0, 0.0, 10.0, 0.0, 10.0, 10.0, 0.0, 10.0];
        let plus_one: [f64; 8] = std::array::from_fn(|i| t[i] + 1.0);
        let v = eight_point_loss(&plus_one, &t, SMOOTH_L1_BETA).value;
        assert!((v - 8.0 * (17.0 / 18.0)).abs() < 1e-12);
    }

    #[test]
    fn eight_point_never_exceeds_plain_sum() {
        let pred = [0.3, -0.2, 1.0, 0.7, -0.5, 0.1, 0.9, -1.1];
        let target = [0.0, 0.5, -0.3, 0.2, 0.8, -0.6, 0.4, 0.0];
        let plain: f64 = (0..8)
            .map(|i| smooth_l1(pred[i] - target[i], SMOOTH_L1_BETA).value)
            .sum();
        assert!(eight_point_loss(&pred, &target, SMOOTH_L1_BETA).value <= plain + 1e-12);
    }

    #[test]
    fn bce_examples() {
        assert!(bce_loss(1.0, 1.0).value < 1e-6);
        assert!((bce_loss(0.5, 0.5).value - 2.0f64.ln()).abs() < 1e-12);
        assert!((bce_loss(0.5, 1.0).value - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn weight_normalization() {
        let w = LossWeights::default();
        let (c, r, o, z) = w.normalized(true, false);
        assert!((c - 10.0 / 12.0).abs() < 1e-12);
        assert!((r - 1.0 / 12.0).abs() < 1e-12);
        assert!((o - 1.0 / 12.0).abs() < 1e-12);
        assert_eq!(z, 0.0);
        let (c, r, o, z) = w.normalized(true, true);
        assert!((c - 10.0 / 13.0).abs() < 1e-12);
        assert!((r - 1.0 / 13.0).abs() < 1e-12);
        assert!((o - 1.0 / 13.0).abs() < 1e-12);
        assert!((z - 1.0 / 13.0).abs() < 1e-12);
        assert!((c + r + o + z - 1.0).abs() < 1e-12);
    }

    fn sample_batch() -> (Vec<LocationPrediction>, Vec<LocationGroundTruth>) {
        let pos = LocationPrediction {
            class_probs: vec![0.9, 0.1, 0.2],
            corners: [0.1; 8],
            centerness: Some(0.7),
            center: Some([0.05, -0.02]),
        };
        let neg = LocationPrediction {
            class_probs: vec![0.1, 0.05, 0.02],
            corners: [0.0; 8],
            centerness: Some(0.3),
            center: Some([0.0, 0.0]),
        };
        let pos_t = LocationGroundTruth {
            class_id: 0,
            corners: Some([0.12; 8]),
            centerness: Some(0.8),
            center: Some([0.0, 0.0]),
        };
        let neg_t = LocationGroundTruth {
            class_id: -1,
            corners: None,
            centerness: None,
            center: None,
        };
        (vec![pos, neg], vec![pos_t, neg_t])
    }

    #[test]
    fn total_loss_perfect_predictions_near_zero() {
        let t = LocationGroundTruth {
            class_id: 1,
            corners: Some([0.5; 8]),
            centerness: Some(1.0),
            center: Some([0.1, 0.1]),
        };
        let p = LocationPrediction {
            class_probs: vec![1e-7, 1.0 - 1e-7, 1e-7],
            corners: [0.5; 8],
            centerness: Some(1.0 - 1e-7),
            center: Some([0.1, 0.1]),
        };
        let (v, _) = total_loss(
            &[p],
            &[t],
            &LossWeights::default(),
            true,
            true,
        )
        .unwrap();
        assert!(v < 1e-5, "total {v}");
    }

    #[test]
    fn total_loss_permutation_invariant() {
        let (p, t) = sample_batch();
        let (v1, _) = total_loss(&p, &t, &LossWeights::default(), true, true).unwrap();
        let p2 = vec![p[1].clone(), p[0].clone()];
        let t2 = vec![t[1].clone(), t[0].clone()];
        let (v2, _) = total_loss(&p2, &t2, &LossWeights::default(), true, true).unwrap();
        assert!((v1 - v2).abs() < 1e-12);
    }

    #[test]
    fn total_loss_zero_positives_uses_divisor_one() {
        let p = LocationPrediction {
            class_probs: vec![0.5, 0.5, 0.5],
            corners: [0.0; 8],
            centerness: Some(0.5),
            center: None,
        };
        let t = LocationGroundTruth {
            class_id: -1,
            corners: None,
            centerness: None,
            center: None,
        };
        let (v, _) = total_loss(&[p], &[t], &LossWeights::default(), true, false).unwrap();
        // classification-only with divisor 1
        let per_channel = focal_loss(0.5, false, FOCAL_ALPHA, FOCAL_GAMMA)
            .unwrap()
            .value;
        let (w_cls, _, _, _) = LossWeights::default().normalized(true, false);
        assert!((v - w_cls * 3.0 * per_channel).abs() < 1e-12);
    }
}
