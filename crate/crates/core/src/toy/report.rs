//! Experiment reports over the desk-scale trainer: the strategy x
//! center-ness comparison grid and the tower-depth capacity sweep, both
//! emitted as CSV plus confidence/IoU heatmaps.

use crate::eval::{collect_heatmap, merge_matches, HeatmapGrid, MatchResult};
use crate::rng::CounterRng;
use crate::strategies::StrategyKind;
use crate::toy::model::{CenternessMode, ToyModel};
use crate::toy::train::{train, validate_full, DivergenceError, TrainConfig};

pub const HEATMAP_BINS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub strategy: StrategyKind,
    pub mode: CenternessMode,
    pub seed: u64,
    pub map: f64,
    pub corner_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSummary {
    pub strategy: StrategyKind,
    pub mode: CenternessMode,
    pub mean_map: f64,
    pub std_map: f64,
    pub mean_corner_error: f64,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub summaries: Vec<ComparisonSummary>,
    /// Aggregated true-positive heatmaps for the first strategy, one per
    /// evaluated center-ness mode.
    pub heatmaps: Vec<(CenternessMode, HeatmapGrid)>,
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Trains every (strategy, mode, seed) combination and reports per-run and
/// aggregate validation metrics. Heatmaps cover the first strategy only.
pub fn run_comparison(
    strategies: &[StrategyKind],
    modes: &[CenternessMode],
    seeds: &[u64],
    base: &TrainConfig,
) -> Result<ComparisonReport, DivergenceError> {
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut heatmaps = Vec::new();
    for &strategy in strategies {
        for &mode in modes {
            let mut maps = Vec::with_capacity(seeds.len());
            let mut corner_errors = Vec::with_capacity(seeds.len());
            let mut matches: Vec<MatchResult> = Vec::new();
            for &seed in seeds {
                let cfg = TrainConfig {
                    seed,
                    strategy,
                    centerness: mode,
                    val_every: 0,
                    ..base.clone()
                };
                let result = train(&cfg)?;
                maps.push(result.final_val.map);
                corner_errors.push(result.final_val.corner_error);
                rows.push(ComparisonRow {
                    strategy,
                    mode,
                    seed,
                    map: result.final_val.map,
                    corner_error: result.final_val.corner_error,
                });
                if strategy == strategies[0] {
                    let (_, m) = validate_full(&result.model, &cfg, cfg.iterations);
                    matches.push(m);
                }
            }
            let (mean_map, std_map) = mean_std(&maps);
            let (mean_corner_error, _) = mean_std(&corner_errors);
            summaries.push(ComparisonSummary {
                strategy,
                mode,
                mean_map,
                std_map,
                mean_corner_error,
            });
            if !matches.is_empty() {
                let merged = merge_matches(&matches, base.scene.n_classes);
                let grid = collect_heatmap(&merged, HEATMAP_BINS, false)
                    .pop()
                    .expect("single aggregate grid");
                heatmaps.push((mode, grid));
            }
        }
    }
    Ok(ComparisonReport {
        rows,
        summaries,
        heatmaps,
    })
}

impl ComparisonReport {
    pub fn rows_csv(&self) -> String {
        let mut out = String::from("strategy,mode,seed,map,corner_error\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.strategy.name(),
                r.mode.name(),
                r.seed,
                r.map,
                r.corner_error
            ));
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("strategy,mode,mean_map,std_map,mean_corner_error\n");
        for s in &self.summaries {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.strategy.name(),
                s.mode.name(),
                s.mean_map,
                s.std_map,
                s.mean_corner_error
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityRow {
    pub depth: usize,
    pub params: usize,
    pub map: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityReport {
    pub rows: Vec<CapacityRow>,
}

/// Trains the direct strategy at each tower depth and reports validation
/// mAP per (depth, seed).
pub fn capacity_sweep(
    depths: &[usize],
    seeds: &[u64],
    base: &TrainConfig,
) -> Result<CapacityReport, DivergenceError> {
    let mut rows = Vec::new();
    for &depth in depths {
        for &seed in seeds {
            let cfg = TrainConfig {
                seed,
                tower_depth: depth,
                strategy: StrategyKind::Direct,
                val_every: 0,
                ..base.clone()
            };
            let params = ToyModel::new(cfg.model_config(), &mut CounterRng::new(0)).param_count();
            let result = train(&cfg)?;
            rows.push(CapacityRow {
                depth,
                params,
                map: result.final_val.map,
                seed,
            });
        }
    }
    Ok(CapacityReport { rows })
}

impl CapacityReport {
    pub fn csv(&self) -> String {
        let mut out = String::from("depth,params,map,seed\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.depth, r.params, r.map, r.seed));
        }
        out
    }

    /// Mean mAP per depth, in the row order depths were given.
    pub fn mean_map_by_depth(&self) -> Vec<(usize, f64)> {
        let mut depths: Vec<usize> = Vec::new();
        for r in &self.rows {
            if !depths.contains(&r.depth) {
                depths.push(r.depth);
            }
        }
        depths
            .into_iter()
            .map(|d| {
                let maps: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.depth == d)
                    .map(|r| r.map)
                    .collect();
                (d, mean_std(&maps).0)
            })
            .collect()
    }
}
