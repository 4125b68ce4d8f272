//! Desk-scale detection model: a per-location affine tower with tanh
//! nonlinearities over pooled pixel windows, plus classification,
//! center-ness, and strategy-specific regression heads. All gradients are
//! computed by hand.

use crate::grid::GridLocation;
use crate::rng::CounterRng;
use crate::strategies::{AffineMap, IterativeHeadParams, StrategyKind};
use crate::toy::scene::IntegralImage;

/// Which center-ness variant the model trains and predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CenternessMode {
    None,
    AxisAligned,
    Oriented,
}

impl CenternessMode {
    pub const ALL: [CenternessMode; 3] = [
        CenternessMode::None,
        CenternessMode::AxisAligned,
        CenternessMode::Oriented,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CenternessMode::None => "none",
            CenternessMode::AxisAligned => "axis-aligned",
            CenternessMode::Oriented => "oriented",
        }
    }

    pub fn parse(s: &str) -> Option<CenternessMode> {
        match s {
            "none" => Some(CenternessMode::None),
            "axis-aligned" => Some(CenternessMode::AxisAligned),
            "oriented" => Some(CenternessMode::Oriented),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub feature_width: usize,
    pub tower_depth: usize,
    pub n_classes: usize,
    /// Pooled window grid resolution per channel.
    pub pool_grid: usize,
    /// Window extent in strides (window side = window_strides * s).
    pub window_strides: f64,
    pub strategy: StrategyKind,
    pub centerness: CenternessMode,
    pub anchor_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            feature_width: 64,
            tower_depth: 2,
            n_classes: 3,
            pool_grid: 6,
            window_strides: 4.0,
            strategy: StrategyKind::Direct,
            centerness: CenternessMode::Oriented,
            anchor_scale: 4.0,
        }
    }
}

impl ModelConfig {
    pub fn input_dim(&self) -> usize {
        self.pool_grid * self.pool_grid * 3
    }
}

/// Regression-head parameters for the active strategy.
#[derive(Debug, Clone, PartialEq)]
pub enum StrategyParams {
    Direct(AffineMap),
    Offset(AffineMap),
    Iterative(IterativeHeadParams),
    CenterToCorner { center: AffineMap, corners: AffineMap },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub config: ModelConfig,
    pub tower: Vec<AffineMap>,
    pub class_head: AffineMap,
    pub ctr_head: Option<AffineMap>,
    pub strategy: StrategyParams,
}

fn init_affine(rng: &mut CounterRng, in_dim: usize, out_dim: usize) -> AffineMap {
    let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
    let mut m = AffineMap::zeros(in_dim, out_dim);
    for w in &mut m.weights {
        *w = rng.uniform(-bound, bound);
    }
    m
}

impl ToyModel {
    pub fn new(config: ModelConfig, rng: &mut CounterRng) -> ToyModel {
        let f = config.feature_width;
        let mut tower = Vec::with_capacity(config.tower_depth);
        let mut in_dim = config.input_dim();
        for _ in 0..config.tower_depth {
            tower.push(init_affine(rng, in_dim, f));
            in_dim = f;
        }
        let mut class_head = init_affine(rng, f, config.n_classes);
        // prior-probability bias so early training is not swamped by the
        // background focal term
        let prior = 0.01f64;
        for b in &mut class_head.bias {
            *b = -((1.0 - prior) / prior).ln();
        }
        let ctr_head = match config.centerness {
            CenternessMode::None => None,
            _ => Some(init_affine(rng, f, 1)),
        };
        let strategy = match config.strategy {
            StrategyKind::Direct => StrategyParams::Direct(init_affine(rng, f, 8)),
            StrategyKind::Offset => StrategyParams::Offset(init_affine(rng, f, 8)),
            StrategyKind::Iterative => {
                let mut params = IterativeHeadParams::zeros(f);
                for (i, head) in params.heads.iter_mut().enumerate() {
                    *head = init_affine(rng, f + 2 * i, 2);
                }
                StrategyParams::Iterative(params)
            }
            StrategyKind::CenterToCorner => StrategyParams::CenterToCorner {
                center: init_affine(rng, f, 2),
                corners: init_affine(rng, f, 8),
            },
        };
        ToyModel {
            config,
            tower,
            class_head,
            ctr_head,
            strategy,
        }
    }

    pub fn param_count(&self) -> usize {
        self.visit_params(|_| {}).0
    }

    /// Walks every parameter tensor in a fixed order; returns (count, n_tensors).
    fn visit_params(&self, mut f: impl FnMut(&AffineMap)) -> (usize, usize) {
        let mut count = 0;
        let mut tensors = 0;
        let mut visit = |m: &AffineMap| {
            count += m.weights.len() + m.bias.len();
            tensors += 1;
            f(m);
        };
        for layer in &self.tower {
            visit(layer);
        }
        visit(&self.class_head);
        if let Some(h) = &self.ctr_head {
            visit(h);
        }
        match &self.strategy {
            StrategyParams::Direct(h) | StrategyParams::Offset(h) => visit(h),
            StrategyParams::Iterative(p) => {
                for h in &p.heads {
                    visit(h);
                }
            }
            StrategyParams::CenterToCorner { center, corners } => {
                visit(center);
                visit(corners);
            }
        }
        (count, tensors)
    }

    /// All parameter tensors in deterministic order.
    pub fn params(&self) -> Vec<&AffineMap> {
        let mut out = Vec::new();
        for layer in &self.tower {
            out.push(layer);
        }
        out.push(&self.class_head);
        if let Some(h) = &self.ctr_head {
            out.push(h);
        }
        match &self.strategy {
            StrategyParams::Direct(h) | StrategyParams::Offset(h) => out.push(h),
            StrategyParams::Iterative(p) => out.extend(p.heads.iter()),
            StrategyParams::CenterToCorner { center, corners } => {
                out.push(center);
                out.push(corners);
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut AffineMap> {
        let mut out: Vec<&mut AffineMap> = Vec::new();
        for layer in &mut self.tower {
            out.push(layer);
        }
        out.push(&mut self.class_head);
        if let Some(h) = &mut self.ctr_head {
            out.push(h);
        }
        match &mut self.strategy {
            StrategyParams::Direct(h) | StrategyParams::Offset(h) => out.push(h),
            StrategyParams::Iterative(p) => out.extend(p.heads.iter_mut()),
            StrategyParams::CenterToCorner { center, corners } => {
                out.push(center);
                out.push(corners);
            }
        }
        out
    }

    /// Pooled window features for one grid location.
    pub fn extract_input(&self, integral: &IntegralImage, loc: &GridLocation) -> Vec<f64> {
        let g = self.config.pool_grid;
        let s = loc.stride();
        let half = 0.5 * self.config.window_strides * s;
        let x0 = loc.image_point.x - half;
        let y0 = loc.image_point.y - half;
        let cell = 2.0 * half / g as f64;
        let mut input = Vec::with_capacity(g * g * 3);
        for gy in 0..g {
            let wy0 = (y0 + gy as f64 * cell).round() as i64;
            let wy1 = (y0 + (gy + 1) as f64 * cell).round() as i64;
            for gx in 0..g {
                let wx0 = (x0 + gx as f64 * cell).round() as i64;
                let wx1 = (x0 + (gx + 1) as f64 * cell).round() as i64;
                for c in 0..3 {
                    // center the [0, 1] pixel range roughly on zero
                    input.push(2.0 * (integral.window_mean(c, wx0, wy0, wx1, wy1) - 0.25));
                }
            }
        }
        input
    }
}

/// Raw head outputs for one location, before any decoding.
#[derive(Debug, Clone)]
pub struct RawOutput {
    pub class_probs: Vec<f64>,
    pub ctr_prob: Option<f64>,
    /// Stride-normalized corner offsets in the loss/decode frame (anchor
    /// or center already added where the strategy calls for it).
    pub corners: [f64; 8],
    /// Raw center prediction (center-to-corner only).
    pub center: Option<[f64; 2]>,
}

/// Forward activations kept for the backward pass.
pub struct ForwardCache {
    pub input: Vec<f64>,
    /// Post-tanh activations of every tower layer.
    pub tower_acts: Vec<Vec<f64>>,
    pub class_logits: Vec<f64>,
    pub ctr_logit: Option<f64>,
    /// Raw per-head corner outputs before anchor/center adjustment.
    pub raw_corners: [f64; 8],
    pub raw_center: Option<[f64; 2]>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl ToyModel {
    pub fn forward(&self, input: Vec<f64>) -> (RawOutput, ForwardCache) {
        let mut tower_acts: Vec<Vec<f64>> = Vec::with_capacity(self.tower.len());
        {
            let mut x: &[f64] = &input;
            for layer in &self.tower {
                let mut out = vec![0.0; layer.out_dim];
                layer.apply(x, &mut out);
                for v in &mut out {
                    *v = v.tanh();
                }
                tower_acts.push(out);
                x = tower_acts.last().unwrap();
            }
        }
        let feats = tower_acts.last().expect("tower has at least one layer");

        let mut class_logits = vec![0.0; self.class_head.out_dim];
        self.class_head.apply(feats, &mut class_logits);
        let class_probs: Vec<f64> = class_logits.iter().map(|&l| sigmoid(l)).collect();

        let (ctr_logit, ctr_prob) = match &self.ctr_head {
            Some(h) => {
                let mut out = [0.0];
                h.apply(feats, &mut out);
                (Some(out[0]), Some(sigmoid(out[0])))
            }
            None => (None, None),
        };

        let (raw_corners, raw_center, corners) = match &self.strategy {
            StrategyParams::Direct(h) => {
                let mut raw = [0.0; 8];
                h.apply(feats, &mut raw);
                (raw, None, raw)
            }
            StrategyParams::Offset(h) => {
                let mut raw = [0.0; 8];
                h.apply(feats, &mut raw);
                let anchor = crate::strategies::anchor_corners(self.config.anchor_scale);
                let mut adjusted = [0.0; 8];
                for i in 0..8 {
                    adjusted[i] = raw[i] + anchor[i];
                }
                (raw, None, adjusted)
            }
            StrategyParams::Iterative(p) => {
                let raw = crate::strategies::iterative_decode(feats, p)
                    .expect("head widths match the tower");
                (raw, None, raw)
            }
            StrategyParams::CenterToCorner { center, corners: ch } => {
                let mut c = [0.0; 2];
                center.apply(feats, &mut c);
                let mut raw = [0.0; 8];
                ch.apply(feats, &mut raw);
                let mut adjusted = [0.0; 8];
                for i in 0..4 {
                    adjusted[2 * i] = raw[2 * i] + c[0];
                    adjusted[2 * i + 1] = raw[2 * i + 1] + c[1];
                }
                (raw, Some(c), adjusted)
            }
        };

        (
            RawOutput {
                class_probs,
                ctr_prob,
                corners,
                center: raw_center,
            },
            ForwardCache {
                input,
                tower_acts,
                class_logits,
                ctr_logit,
                raw_corners,
                raw_center,
            },
        )
    }
}

/// Gradient accumulator mirroring the model's parameter tensors, in the
/// same deterministic order as [`ToyModel::params`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub tensors: Vec<AffineMap>,
}

impl Gradients {
    pub fn zeros_like(model: &ToyModel) -> Gradients {
        Gradients {
            tensors: model
                .params()
                .iter()
                .map(|m| AffineMap::zeros(m.in_dim, m.out_dim))
                .collect(),
        }
    }

    pub fn clear(&mut self) {
        for t in &mut self.tensors {
            t.weights.iter_mut().for_each(|w| *w = 0.0);
            t.bias.iter_mut().for_each(|b| *b = 0.0);
        }
    }
}

/// Loss gradients w.r.t. one location's outputs, in probability space for
/// the sigmoid heads and raw offset space for the corners.
#[derive(Debug, Clone)]
pub struct OutputGrad {
    pub d_class_probs: Vec<f64>,
    pub d_ctr_prob: f64,
    /// Gradient w.r.t. the adjusted corner vector (the one used in the loss).
    pub d_corners: [f64; 8],
    /// Gradient w.r.t. the raw center prediction from the direct center loss.
    pub d_center: [f64; 2],
}

/// Accumulates dense-layer gradients for `d_out` at input `x` and returns
/// the gradient w.r.t. `x`.
fn backward_affine(
    layer: &AffineMap,
    grad: &mut AffineMap,
    x: &[f64],
    d_out: &[f64],
    d_in: &mut [f64],
) {
    for o in 0..layer.out_dim {
        let g = d_out[o];
        if g == 0.0 {
            continue;
        }
        grad.bias[o] += g;
        let row = &mut grad.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
        let wrow = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
        for i in 0..layer.in_dim {
            row[i] += g * x[i];
            d_in[i] += g * wrow[i];
        }
    }
}

impl ToyModel {
    /// Backpropagates one location's output gradients into `grads`.
    pub fn backward(&self, cache: &ForwardCache, out_grad: &OutputGrad, grads: &mut Gradients) {
        let feats = cache.tower_acts.last().unwrap();
        let f = feats.len();
        let mut d_feats = vec![0.0; f];

        let mut idx = self.tower.len(); // index into grads.tensors

        // classification head: d_prob -> d_logit through the sigmoid
        {
            let d_logits: Vec<f64> = cache
                .class_logits
                .iter()
                .zip(&out_grad.d_class_probs)
                .map(|(&l, &dp)| {
                    let p = sigmoid(l);
                    dp * p * (1.0 - p)
                })
                .collect();
            backward_affine(
                &self.class_head,
                &mut grads.tensors[idx],
                feats,
                &d_logits,
                &mut d_feats,
            );
            idx += 1;
        }

        if let Some(h) = &self.ctr_head {
            let l = cache.ctr_logit.unwrap();
            let p = sigmoid(l);
            let d_logit = [out_grad.d_ctr_prob * p * (1.0 - p)];
            backward_affine(h, &mut grads.tensors[idx], feats, &d_logit, &mut d_feats);
            idx += 1;
        }

        match &self.strategy {
            StrategyParams::Direct(h) | StrategyParams::Offset(h) => {
                // anchor offset is a constant shift: identity gradient
                backward_affine(
                    h,
                    &mut grads.tensors[idx],
                    feats,
                    &out_grad.d_corners,
                    &mut d_feats,
                );
            }
            StrategyParams::Iterative(p) => {
                // rebuild the concatenated input and run the chain backward
                let mut chain_input: Vec<f64> = Vec::with_capacity(f + 6);
                chain_input.extend_from_slice(feats);
                for i in 0..3 {
                    chain_input.push(cache.raw_corners[2 * i]);
                    chain_input.push(cache.raw_corners[2 * i + 1]);
                }
                // d w.r.t. each predicted corner, accumulated as the chain
                // unwinds (later heads feed gradient back into earlier corners)
                let mut d_corner = out_grad.d_corners;
                for i in (0..4).rev() {
                    let head = &p.heads[i];
                    let in_dim = head.in_dim;
                    let x = &chain_input[..in_dim];
                    let d_out = [d_corner[2 * i], d_corner[2 * i + 1]];
                    let mut d_in = vec![0.0; in_dim];
                    backward_affine(head, &mut grads.tensors[idx + i], x, &d_out, &mut d_in);
                    for (df, di) in d_feats.iter_mut().zip(&d_in[..f]) {
                        *df += di;
                    }
                    for j in 0..(in_dim - f) {
                        d_corner[j] += d_in[f + j];
                    }
                }
            }
            StrategyParams::CenterToCorner { center, corners } => {
                // corners head sees d_corners directly; center head sums the
                // broadcast plus its own direct loss gradient
                backward_affine(
                    corners,
                    &mut grads.tensors[idx + 1],
                    feats,
                    &out_grad.d_corners,
                    &mut d_feats,
                );
                let mut d_c = out_grad.d_center;
                for i in 0..4 {
                    d_c[0] += out_grad.d_corners[2 * i];
                    d_c[1] += out_grad.d_corners[2 * i + 1];
                }
                backward_affine(center, &mut grads.tensors[idx], feats, &d_c, &mut d_feats);
            }
        }

        // tower backward through the tanh layers
        let mut d_act = d_feats;
        for li in (0..self.tower.len()).rev() {
            let act = &cache.tower_acts[li];
            // tanh'(z) = 1 - tanh(z)^2
            let d_pre: Vec<f64> = d_act
                .iter()
                .zip(act)
                .map(|(&d, &a)| d * (1.0 - a * a))
                .collect();
            let x: &[f64] = if li == 0 {
                &cache.input
            } else {
                &cache.tower_acts[li - 1]
            };
            let mut d_in = vec![0.0; x.len()];
            backward_affine(&self.tower[li], &mut grads.tensors[li], x, &d_pre, &mut d_in);
            d_act = d_in;
        }
    }
}
