//! Command-line surface over the detection math core.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O error, 3 data/format error,
//! 4 numeric failure (training divergence).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use quadet::data::{
    parse_annotations, remap_annotations, split_patches, write_annotations, write_manifest,
    AnnotationSet, ClassList, PatchSpec,
};
use quadet::eval::{collect_heatmap, match_detections, mean_ap, merge_matches, per_class_ap};
use quadet::geometry::{self, Quad};
use quadet::postprocess::{
    filter_threshold, parse_detections, rotated_nms, top_k, write_detections,
    DEFAULT_CONF_THRESHOLD, DEFAULT_NMS_THRESHOLD, DEFAULT_TOP_K,
};
use quadet::strategies::StrategyKind;
use quadet::toy::model::CenternessMode;
use quadet::toy::report::{capacity_sweep, run_comparison};
use quadet::toy::train::{save_checkpoint, train, TrainConfig};

#[derive(Parser)]
#[command(name = "quadet", version, about = "oriented quad detection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split an image's annotations into overlapping square patches.
    Split(SplitArgs),
    /// Remap one annotation file into a single patch window.
    Remap(RemapArgs),
    /// Score detections against ground truth (per-class AP and mAP).
    Eval(EvalArgs),
    /// Run the detection post-processing pipeline on a dump file.
    Nms(NmsArgs),
    /// Render a center-ness map over a quad as a PGM image.
    CenternessRender(CenternessRenderArgs),
    /// Export confidence/IoU true-positive heatmaps.
    Heatmap(HeatmapArgs),
    /// Train the desk-scale model on synthetic scenes.
    Toytrain(ToytrainArgs),
    /// Sweep feature tower depth and report validation mAP per depth.
    CapacitySweep(CapacitySweepArgs),
}

#[derive(Args)]
struct SplitArgs {
    /// Annotation file for the source image.
    #[arg(long)]
    annotations: PathBuf,
    /// Source image width in pixels.
    #[arg(long)]
    width: i64,
    /// Source image height in pixels.
    #[arg(long)]
    height: i64,
    #[arg(long, default_value_t = 1024)]
    size: i64,
    #[arg(long, default_value_t = 200)]
    overlap: i64,
    /// Manifest output path.
    #[arg(long)]
    manifest: PathBuf,
    /// Directory for per-patch annotation files.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RemapArgs {
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    width: i64,
    #[arg(long)]
    height: i64,
    /// Patch origin x.
    #[arg(long)]
    x: i64,
    /// Patch origin y.
    #[arg(long)]
    y: i64,
    #[arg(long, default_value_t = 1024)]
    size: i64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Detection dump file.
    #[arg(long)]
    dets: PathBuf,
    /// Directory of per-image ground-truth annotation files.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    /// Optional heatmap output prefix (writes .pgm and .txt).
    #[arg(long)]
    heatmap: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    bins: usize,
}

#[derive(Args)]
struct NmsArgs {
    #[arg(long)]
    dets: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_NMS_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = DEFAULT_CONF_THRESHOLD)]
    conf: f64,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    top_k: usize,
}

#[derive(Args)]
struct CenternessRenderArgs {
    /// Quad as 8 comma-separated coordinates x0,y0,...,x3,y3.
    #[arg(long)]
    quad: String,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// oriented | axis
    #[arg(long, default_value = "oriented")]
    mode: String,
    /// PGM output path; a .txt grid with raw values is written alongside.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct HeatmapArgs {
    #[arg(long)]
    dets: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    #[arg(long, default_value_t = 16)]
    bins: usize,
    /// Output prefix; per-class grids get the class name appended.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    per_class: bool,
}

#[derive(Args)]
struct ToytrainArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 6000)]
    iterations: usize,
    /// direct | offset | iterative | center-to-corner (single run), or a
    /// comma list / "all" for a comparison grid.
    #[arg(long, default_value = "direct")]
    strategies: String,
    /// none | axis-aligned | oriented, comma list, or "all".
    #[arg(long, default_value = "oriented")]
    modes: String,
    /// Comma-separated seed list for comparison grids; overrides --seed.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long, default_value_t = 4.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    /// Loss log CSV output (single-run mode).
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Checkpoint output (single-run mode).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Comparison CSV output prefix (grid mode; writes _rows.csv,
    /// _summary.csv, and per-mode heatmaps).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CapacitySweepArgs {
    #[arg(long, default_value = "1,2,3,4")]
    depths: String,
    #[arg(long, default_value = "1")]
    seeds: String,
    #[arg(long, default_value_t = 6000)]
    iterations: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Error wrapper mapping to the documented exit codes.
enum CliError {
    Io(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Io(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
}

/// Collects class names in first-appearance order from annotation text.
fn infer_classes(texts: &[String]) -> ClassList {
    let mut names: Vec<String> = Vec::new();
    for text in texts {
        for raw in text.lines() {
            let t = raw.trim();
            if t.is_empty() || t.starts_with("imagesource") || t.starts_with("gsd") {
                continue;
            }
            let fields: Vec<&str> = t.split_whitespace().collect();
            if fields.len() == 10 && !names.iter().any(|n| n == fields[8]) {
                names.push(fields[8].to_string());
            }
        }
    }
    ClassList::new(names)
}

fn image_id_from(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".to_string())
}

fn cmd_split(args: SplitArgs) -> Result<(), CliError> {
    let text = read_file(&args.annotations)?;
    let classes = infer_classes(std::slice::from_ref(&text));
    let objects =
        parse_annotations(&text, &classes).map_err(|e| CliError::Data(e.to_string()))?;
    let image_id = image_id_from(&args.annotations);
    let set = AnnotationSet {
        image_id: image_id.clone(),
        image_w: args.width,
        image_h: args.height,
        objects,
    };
    if args.size <= args.overlap || args.overlap < 0 {
        return Err(CliError::Data(format!(
            "invalid patch geometry: size {} overlap {}",
            args.size, args.overlap
        )));
    }
    let patches = split_patches(args.width, args.height, args.size, args.overlap);
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", args.out_dir.display())))?;
    for patch in &patches {
        let remapped = remap_annotations(&set, patch);
        let out = args.out_dir.join(format!("{}.txt", remapped.image_id));
        write_file(&out, write_annotations(&remapped.objects))?;
    }
    write_file(&args.manifest, write_manifest(&image_id, &patches))?;
    println!(
        "split {} into {} patches (size {}, overlap {})",
        image_id,
        patches.len(),
        args.size,
        args.overlap
    );
    Ok(())
}

fn cmd_remap(args: RemapArgs) -> Result<(), CliError> {
    let text = read_file(&args.annotations)?;
    let classes = infer_classes(std::slice::from_ref(&text));
    let objects =
        parse_annotations(&text, &classes).map_err(|e| CliError::Data(e.to_string()))?;
    let set = AnnotationSet {
        image_id: image_id_from(&args.annotations),
        image_w: args.width,
        image_h: args.height,
        objects,
    };
    let patch = PatchSpec {
        x: args.x,
        y: args.y,
        size: args.size,
    };
    let remapped = remap_annotations(&set, &patch);
    write_file(&args.out, write_annotations(&remapped.objects))?;
    println!("remapped {} objects into {}", remapped.objects.len(), remapped.image_id);
    Ok(())
}

/// Loads every ground-truth file in a directory, keyed by image id.
fn load_gt_dir(
    dir: &Path,
) -> Result<(BTreeMap<String, AnnotationSet>, ClassList), CliError> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    entries.sort();
    let texts: Vec<String> = entries
        .iter()
        .map(|p| read_file(p))
        .collect::<Result<_, _>>()?;
    let classes = infer_classes(&texts);
    let mut sets = BTreeMap::new();
    for (path, text) in entries.iter().zip(&texts) {
        let objects =
            parse_annotations(text, &classes).map_err(|e| {
                CliError::Data(format!("{}: {e}", path.display()))
            })?;
        let id = image_id_from(path);
        sets.insert(
            id.clone(),
            AnnotationSet {
                image_id: id,
                image_w: 0,
                image_h: 0,
                objects,
            },
        );
    }
    Ok((sets, classes))
}

fn matches_for(
    dets_path: &Path,
    gt_dir: &Path,
    iou: f64,
) -> Result<(quadet::eval::MatchResult, ClassList), CliError> {
    let (gts, classes) = load_gt_dir(gt_dir)?;
    let dets_text = read_file(dets_path)?;
    let dets =
        parse_detections(&dets_text, &classes).map_err(|e| CliError::Data(e.to_string()))?;
    let mut by_image: BTreeMap<&str, Vec<quadet::Detection>> = BTreeMap::new();
    for d in &dets {
        by_image.entry(d.image_id.as_str()).or_default().push(d.clone());
    }
    let empty = AnnotationSet {
        image_id: String::new(),
        image_w: 0,
        image_h: 0,
        objects: vec![],
    };
    let mut results = Vec::new();
    for (id, gt) in &gts {
        let image_dets = by_image.remove(id.as_str()).unwrap_or_default();
        results.push(match_detections(&image_dets, gt, classes.len(), iou));
    }
    // detections for unknown images are all false positives
    for (_, image_dets) in by_image {
        results.push(match_detections(&image_dets, &empty, classes.len(), iou));
    }
    Ok((merge_matches(&results, classes.len()), classes))
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let (merged, classes) = matches_for(&args.dets, &args.gt, args.iou)?;
    let aps = per_class_ap(&merged);
    println!("class ap n_gt");
    for (i, ap) in aps.iter().enumerate() {
        println!(
            "{} {:.4} {}",
            classes.name_of(i as i32).unwrap_or("?"),
            ap,
            merged.n_gt[i]
        );
    }
    println!("mAP {:.4}", mean_ap(&aps));
    if let Some(prefix) = &args.heatmap {
        write_heatmaps(&merged, &classes, args.bins, prefix, false)?;
    }
    Ok(())
}

fn write_heatmaps(
    merged: &quadet::eval::MatchResult,
    classes: &ClassList,
    bins: usize,
    prefix: &Path,
    per_class: bool,
) -> Result<(), CliError> {
    let grids = collect_heatmap(merged, bins, per_class);
    for (i, grid) in grids.iter().enumerate() {
        let suffix = if per_class {
            format!("_{}", classes.name_of(i as i32).unwrap_or("unknown"))
        } else {
            String::new()
        };
        let base = format!("{}{}", prefix.display(), suffix);
        write_file(Path::new(&format!("{base}.pgm")), grid.to_pgm())?;
        write_file(Path::new(&format!("{base}.txt")), grid.to_text())?;
        println!("wrote {base}.pgm ({} true positives)", grid.total());
    }
    Ok(())
}

fn cmd_nms(args: NmsArgs) -> Result<(), CliError> {
    let text = read_file(&args.dets)?;
    // class ids come from first appearance of each class name in the dump
    let mut names: Vec<String> = Vec::new();
    for line in text.lines() {
        if let Some(name) = line.split_whitespace().nth(1) {
            if !names.iter().any(|n| n == name) {
                names.push(name.to_string());
            }
        }
    }
    let classes = ClassList::new(names);
    let dets = parse_detections(&text, &classes).map_err(|e| CliError::Data(e.to_string()))?;
    let filtered = filter_threshold(&dets, args.conf);
    let kept = rotated_nms(&top_k(&filtered, args.top_k), args.threshold);
    write_file(&args.out, write_detections(&kept))?;
    println!("kept {} of {} detections", kept.len(), dets.len());
    Ok(())
}

fn cmd_centerness_render(args: CenternessRenderArgs) -> Result<(), CliError> {
    let coords: Vec<f64> = args
        .quad
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Data(format!("bad quad coordinates: {e}")))?;
    if coords.len() != 8 {
        return Err(CliError::Data(format!(
            "expected 8 quad coordinates, found {}",
            coords.len()
        )));
    }
    let quad = Quad::from_coords(coords.try_into().unwrap())
        .map_err(|e| CliError::Data(format!("invalid quad: {e}")))?;
    let hull = geometry::axis_aligned_hull(&quad);
    let hv = hull.vertices();
    let (min_x, min_y) = (hv[0].x.floor(), hv[0].y.floor());
    let (max_x, max_y) = (hv[2].x.ceil(), hv[2].y.ceil());
    let w = (max_x - min_x).max(1.0) as usize;
    let h = (max_y - min_y).max(1.0) as usize;
    let mut values = vec![0.0f64; w * h];
    for row in 0..h {
        for col in 0..w {
            let p = quadet::Point::new(min_x + col as f64 + 0.5, min_y + row as f64 + 0.5);
            let v = match args.mode.as_str() {
                "oriented" => geometry::oriented_centerness(&quad, p, args.alpha).unwrap_or(0.0),
                "axis" => geometry::aa_centerness(&hull, p).unwrap_or(0.0),
                other => return Err(CliError::Data(format!("unknown mode '{other}'"))),
            };
            values[row * w + col] = v;
        }
    }
    let mut pgm = format!("P5\n{w} {h}\n255\n").into_bytes();
    pgm.extend(values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    write_file(&args.out, pgm)?;
    let mut text = String::new();
    for row in 0..h {
        let line: Vec<String> = (0..w).map(|c| format!("{}", values[row * w + c])).collect();
        text.push_str(&line.join(" "));
        text.push('\n');
    }
    write_file(&args.out.with_extension("txt"), text)?;
    println!("rendered {w}x{h} {} center-ness map", args.mode);
    Ok(())
}

fn cmd_heatmap(args: HeatmapArgs) -> Result<(), CliError> {
    let (merged, classes) = matches_for(&args.dets, &args.gt, args.iou)?;
    write_heatmaps(&merged, &classes, args.bins, &args.out, args.per_class)
}

fn parse_list<T, F: Fn(&str) -> Option<T>>(
    raw: &str,
    what: &str,
    all: &[T],
    parse: F,
) -> Result<Vec<T>, CliError>
where
    T: Clone,
{
    if raw == "all" {
        return Ok(all.to_vec());
    }
    raw.split(',')
        .map(|s| {
            parse(s.trim()).ok_or_else(|| CliError::Data(format!("unknown {what} '{s}'")))
        })
        .collect()
}

fn parse_seeds(raw: &str) -> Result<Vec<u64>, CliError> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| CliError::Data(format!("bad seed '{s}'")))
        })
        .collect()
}

fn cmd_toytrain(args: ToytrainArgs) -> Result<(), CliError> {
    let strategies = parse_list(
        &args.strategies,
        "strategy",
        &StrategyKind::ALL,
        StrategyKind::parse,
    )?;
    let modes = parse_list(
        &args.modes,
        "centerness mode",
        &CenternessMode::ALL,
        CenternessMode::parse,
    )?;
    let base = TrainConfig {
        seed: args.seed,
        iterations: args.iterations,
        base_lr: args.lr,
        alpha: args.alpha,
        feature_width: args.width,
        tower_depth: args.depth,
        ..TrainConfig::default()
    };

    let grid_mode = args.seeds.is_some() || strategies.len() > 1 || modes.len() > 1;
    if grid_mode {
        let seeds = match &args.seeds {
            Some(raw) => parse_seeds(raw)?,
            None => vec![args.seed],
        };
        println!("# seeds: {seeds:?}");
        let report = run_comparison(&strategies, &modes, &seeds, &base)
            .map_err(|e| CliError::Numeric(e.to_string()))?;
        print!("{}", report.summary_csv());
        if let Some(prefix) = &args.report {
            write_file(
                Path::new(&format!("{}_rows.csv", prefix.display())),
                report.rows_csv(),
            )?;
            write_file(
                Path::new(&format!("{}_summary.csv", prefix.display())),
                report.summary_csv(),
            )?;
            for (mode, grid) in &report.heatmaps {
                let base_name = format!("{}_heatmap_{}", prefix.display(), mode.name());
                write_file(Path::new(&format!("{base_name}.pgm")), grid.to_pgm())?;
                write_file(Path::new(&format!("{base_name}.txt")), grid.to_text())?;
            }
        }
        return Ok(());
    }

    let cfg = TrainConfig {
        strategy: strategies[0],
        centerness: modes[0],
        ..base
    };
    println!("# seed: {}", cfg.seed);
    let result = train(&cfg).map_err(|e| CliError::Numeric(e.to_string()))?;
    println!(
        "final: map {:.4} corner_error {:.4} loss {:.4}",
        result.final_val.map,
        result.final_val.corner_error,
        result.losses.last().map(|l| l.loss).unwrap_or(f64::NAN)
    );
    if let Some(path) = &args.metrics {
        let mut csv = String::from("iteration,lr,loss\n");
        for l in &result.losses {
            csv.push_str(&format!("{},{},{}\n", l.iteration, l.lr, l.loss));
        }
        csv.push_str("# iteration,map,corner_error\n");
        for v in &result.vals {
            csv.push_str(&format!("# {},{},{}\n", v.iteration, v.map, v.corner_error));
        }
        write_file(path, csv)?;
    }
    if let Some(path) = &args.checkpoint {
        save_checkpoint(&result.model, path).map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(())
}

fn cmd_capacity_sweep(args: CapacitySweepArgs) -> Result<(), CliError> {
    let depths: Vec<usize> = args
        .depths
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .ok()
                .filter(|&d| (1..=32).contains(&d))
                .ok_or_else(|| CliError::Data(format!("bad depth '{s}' (expected 1-32)")))
        })
        .collect::<Result<_, _>>()?;
    let seeds = parse_seeds(&args.seeds)?;
    println!("# seeds: {seeds:?}");
    let base = TrainConfig {
        iterations: args.iterations,
        ..TrainConfig::default()
    };
    let report =
        capacity_sweep(&depths, &seeds, &base).map_err(|e| CliError::Numeric(e.to_string()))?;
    print!("{}", report.csv());
    if let Some(path) = &args.out {
        write_file(path, report.csv())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are not usage errors
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Split(args) => cmd_split(args),
        Command::Remap(args) => cmd_remap(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Nms(args) => cmd_nms(args),
        Command::CenternessRender(args) => cmd_centerness_render(args),
        Command::Heatmap(args) => cmd_heatmap(args),
        Command::Toytrain(args) => cmd_toytrain(args),
        Command::CapacitySweep(args) => cmd_capacity_sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
