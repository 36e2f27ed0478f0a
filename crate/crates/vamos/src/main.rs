//! Command-line front end for the synthesis toolkit.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use vamos::detect::{dice_true_positives, match_lesions, sensitivity_fp, stratify, LesionMeta, MatchTable};
use vamos::distance::distance_transform;
use vamos::fidelity::{fidelity_experiment, FidelityOptions};
use vamos::graph::{build_graph, prune_spurs, VesselGraph};
use vamos::io::{read_mask, read_volume, write_mask, write_volume};
use vamos::phantom::{straight_tube, tof_like_source, y_tube};
use vamos::pipeline::{
    extract_training_patches, gen_dataset, gen_patch, GenerationConfig, GenerationSite, SourceModel,
};
use vamos::skeleton::skeletonize;
use vamos::spline::{fit_spline, perturb_spline, BranchSpline};
use vamos::volume::{Dims, GRAY_MAX};
use vamos::{Result, VamosError};

#[derive(Parser)]
#[command(name = "vamos", version, about = "Synthetic cerebrovascular TOF-MRA patch modeling")]
struct Cli {
    /// JSON generation config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit a documented test phantom (vessel mask, optionally a TOF-like gray source).
    Phantom(PhantomArgs),
    /// Thin a vessel mask to its centerline skeleton.
    Skeletonize(SkeletonizeArgs),
    /// Build the centerline graph (nodes + branches with radii) from a vessel mask.
    Graph(GraphArgs),
    /// Fit (and optionally perturb) per-branch centerline splines.
    FitSplines(FitSplinesArgs),
    /// Synthesize one labeled patch from a source segmentation.
    SynthPatch(SynthPatchArgs),
    /// Generate a dataset of labeled patches with a manifest.
    GenDataset(GenDatasetArgs),
    /// Extract positive/negative training crops from a labeled volume.
    ExtractPatches(ExtractPatchesArgs),
    /// Compare source patches against modeled patches (three-group experiment).
    Fidelity(FidelityArgs),
    /// Score detector output masks lesion by lesion.
    EvalDetections(EvalDetectionsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PhantomKind {
    YTube,
    StraightTube,
}

#[derive(Args)]
struct PhantomArgs {
    #[arg(value_enum)]
    kind: PhantomKind,
    /// Output base path (writes <out>.vvol.json/.raw, and <out>_gray.* with --with-gray).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 96)]
    dims: usize,
    #[arg(long, default_value_t = 0.4)]
    spacing: f64,
    #[arg(long, default_value_t = 2.5)]
    radius_vox: f64,
    /// Daughter half-angle for the Y phantom, degrees.
    #[arg(long, default_value_t = 40.0)]
    half_angle: f64,
    /// Also write a TOF-like gray source volume.
    #[arg(long)]
    with_gray: bool,
}

#[derive(Args)]
struct SkeletonizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long)]
    input: PathBuf,
    /// Output graph JSON.
    #[arg(long)]
    out: PathBuf,
    /// Spur-pruning threshold, mm.
    #[arg(long, default_value_t = 4.0)]
    prune_mm: f64,
}

#[derive(Args)]
struct FitSplinesArgs {
    /// Graph JSON produced by the `graph` subcommand.
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    smoothing: Option<f64>,
    /// Perturbation amplitude, voxels; 0 disables.
    #[arg(long)]
    amplitude: Option<f64>,
}

#[derive(Args)]
struct SynthPatchArgs {
    /// Source vessel segmentation (VVOL mask).
    #[arg(long)]
    vessels: PathBuf,
    /// Optional source gray volume for matter statistics.
    #[arg(long)]
    gray: Option<PathBuf>,
    /// Bifurcation node id; the first bifurcation when omitted.
    #[arg(long)]
    node: Option<usize>,
    /// Sample index fed into the per-sample RNG derivation.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Output base path (writes <out>.vvol.*, <out>_gt.vvol.*, <out>_meta.json).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenDatasetArgs {
    /// Source vessel segmentation; repeatable.
    #[arg(long, required = true)]
    vessels: Vec<PathBuf>,
    /// Optional gray volume per source, matched by position; repeatable.
    #[arg(long)]
    gray: Vec<PathBuf>,
    /// Optional location label per source, matched by position; repeatable.
    #[arg(long)]
    location: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractPatchesArgs {
    /// Gray volume to crop from.
    #[arg(long)]
    volume: PathBuf,
    /// Ground-truth lesion mask.
    #[arg(long)]
    lesions: PathBuf,
    /// Vessel mask (negative crops are vessel-centered).
    #[arg(long)]
    vessels: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FidelityArgs {
    /// Source (ground-truth) patch; repeatable, order defines indices.
    #[arg(long, required = true)]
    source: Vec<PathBuf>,
    /// Modeled patch; repeatable.
    #[arg(long)]
    model: Vec<PathBuf>,
    /// Comma-separated source index per model (defaults to identity).
    #[arg(long)]
    pairing: Option<String>,
    #[arg(long, default_value_t = GRAY_MAX as f64)]
    data_range: f64,
    /// Evaluate full volumes instead of random axial slices.
    #[arg(long)]
    full_volumes: bool,
    /// Output prefix (writes <out>.csv and <out>.json).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalDetectionsArgs {
    /// Directory of predicted masks (VVOL).
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground-truth masks with matching file names.
    #[arg(long)]
    gt: PathBuf,
    /// Optional lesion metadata CSV: volume_id,lesion_id,radius_mm,location_group.
    #[arg(long)]
    meta: Option<PathBuf>,
    /// Output report JSON.
    #[arg(long)]
    out: PathBuf,
}

fn io_err(path: &Path, e: std::io::Error) -> VamosError {
    VamosError::Io { path: path.display().to_string(), source: e }
}

fn load_config(cli: &Cli) -> Result<GenerationConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            serde_json::from_str(&text)?
        }
        None => GenerationConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn run_phantom(args: &PhantomArgs, cfg: &GenerationConfig) -> Result<()> {
    let dims = Dims::cubic(args.dims);
    let spacing = [args.spacing; 3];
    let mask = match args.kind {
        PhantomKind::YTube => y_tube(dims, spacing, args.radius_vox, args.half_angle, args.dims as f64 * 0.35).mask,
        PhantomKind::StraightTube => straight_tube(
            dims,
            spacing,
            args.radius_vox,
            [args.dims / 2, args.dims / 2],
            [args.dims / 8, args.dims - args.dims / 8],
        ),
    };
    write_mask(&mask, &args.out)?;
    if args.with_gray {
        let gray = tof_like_source(&mask, cfg.vessel_gray);
        let mut base = args.out.as_os_str().to_owned();
        base.push("_gray");
        write_volume(&gray, PathBuf::from(base))?;
    }
    Ok(())
}

fn build_source(vessels: &Path, gray: Option<&Path>, cfg: &GenerationConfig) -> Result<SourceModel> {
    let mask = read_mask(vessels)?;
    let gray = gray.map(read_volume).transpose()?;
    SourceModel::from_segmentation(mask, gray, cfg.min_branch_mm)
}

#[derive(Serialize)]
struct FittedBranch {
    branch_id: usize,
    spline: BranchSpline,
    perturbed: Option<BranchSpline>,
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Phantom(args) => run_phantom(args, &cfg),
        Command::Skeletonize(args) => {
            let mask = read_mask(&args.input)?;
            write_mask(&skeletonize(&mask), &args.out)
        }
        Command::Graph(args) => {
            let mask = read_mask(&args.input)?;
            let skeleton = skeletonize(&mask);
            let radii = distance_transform(&mask);
            let graph = prune_spurs(&build_graph(&skeleton, &radii)?, args.prune_mm);
            write_json(&graph, &args.out)
        }
        Command::FitSplines(args) => {
            let text = fs::read_to_string(&args.graph).map_err(|e| io_err(&args.graph, e))?;
            let graph: VesselGraph = serde_json::from_str(&text)?;
            let degree = args.degree.unwrap_or(cfg.spline_degree);
            let smoothing = args.smoothing.unwrap_or(cfg.spline_smoothing);
            let amplitude = args.amplitude.unwrap_or(cfg.perturb_amplitude_vox);
            let mut fitted = Vec::new();
            for branch in &graph.branches {
                if branch.points.len() < 2 {
                    continue;
                }
                let pts: Vec<[f64; 3]> = branch
                    .points
                    .iter()
                    .map(|p| [p[0] as f64, p[1] as f64, p[2] as f64])
                    .collect();
                let spline = fit_spline(&pts, degree, smoothing)?;
                let perturbed = (amplitude > 0.0).then(|| {
                    perturb_spline(&spline, amplitude, cfg.master_seed ^ branch.id as u64, true)
                });
                fitted.push(FittedBranch { branch_id: branch.id, spline, perturbed });
            }
            write_json(&fitted, &args.out)
        }
        Command::SynthPatch(args) => {
            let source = build_source(&args.vessels, args.gray.as_deref(), &cfg)?;
            let node = match args.node {
                Some(n) => n,
                None => *source
                    .bifurcation_ids()
                    .first()
                    .ok_or_else(|| VamosError::Pipeline("source has no bifurcations".into()))?,
            };
            let sample = gen_patch(&source, 0, node, None, &cfg, args.index)?;
            write_volume(&sample.gray, &args.out)?;
            let mut gt_base = args.out.as_os_str().to_owned();
            gt_base.push("_gt");
            write_mask(&sample.gt, PathBuf::from(gt_base))?;
            let mut meta_path = args.out.as_os_str().to_owned();
            meta_path.push("_meta.json");
            write_json(&sample.meta, Path::new(&meta_path))
        }
        Command::GenDataset(args) => {
            let mut sources = Vec::new();
            let mut sites = Vec::new();
            for (i, vessels) in args.vessels.iter().enumerate() {
                let source = build_source(vessels, args.gray.get(i).map(|p| p.as_path()), &cfg)?;
                for node_id in source.bifurcation_ids() {
                    sites.push(GenerationSite {
                        source: i,
                        node_id,
                        location: args.location.get(i).cloned(),
                    });
                }
                sources.push(source);
            }
            let manifest = gen_dataset(&sources, &sites, &cfg, &args.out)?;
            println!(
                "wrote {} samples to {} ({} with aneurysm)",
                manifest.samples.len(),
                args.out.display(),
                manifest.samples.iter().filter(|s| s.aneurysm_present).count()
            );
            Ok(())
        }
        Command::ExtractPatches(args) => {
            let vol = read_volume(&args.volume)?;
            let lesions = read_mask(&args.lesions)?;
            let vessels = read_mask(&args.vessels)?;
            let patches = extract_training_patches(&vol, &lesions, &vessels, &cfg, cfg.master_seed)?;
            fs::create_dir_all(args.out.join("patches"))
                .map_err(|e| io_err(&args.out.join("patches"), e))?;
            fs::create_dir_all(args.out.join("masks")).map_err(|e| io_err(&args.out.join("masks"), e))?;
            let mut records = Vec::new();
            for (i, p) in patches.iter().enumerate() {
                let kind = if p.positive { "pos" } else { "neg" };
                let id = format!("{kind}{i:04}");
                write_volume(&p.gray, args.out.join("patches").join(&id))?;
                write_mask(&p.gt, args.out.join("masks").join(&id))?;
                records.push(serde_json::json!({
                    "id": id,
                    "positive": p.positive,
                    "center": p.center,
                }));
            }
            write_json(&records, &args.out.join("manifest.json"))
        }
        Command::Fidelity(args) => {
            let sources: Vec<_> = args.source.iter().map(read_volume).collect::<Result<_>>()?;
            let models: Vec<_> = args.model.iter().map(read_volume).collect::<Result<_>>()?;
            let pairing: Vec<usize> = match &args.pairing {
                Some(text) => text
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<usize>()
                            .map_err(|e| VamosError::Manifest(format!("bad pairing entry {s:?}: {e}")))
                    })
                    .collect::<Result<_>>()?,
                None => (0..models.len()).collect(),
            };
            let opts = FidelityOptions {
                data_range: args.data_range,
                use_2d_slices: !args.full_volumes,
                slices_per_pair: 8,
                seed: cfg.master_seed,
            };
            let report = fidelity_experiment(&sources, &models, &pairing, &opts)?;
            let mut csv_path = args.out.as_os_str().to_owned();
            csv_path.push(".csv");
            fs::write(Path::new(&csv_path), report.to_csv()).map_err(|e| io_err(Path::new(&csv_path), e))?;
            let mut json_path = args.out.as_os_str().to_owned();
            json_path.push(".json");
            write_json(&report.summaries, Path::new(&json_path))
        }
        Command::EvalDetections(args) => {
            let mut names: Vec<String> = fs::read_dir(&args.pred)
                .map_err(|e| io_err(&args.pred, e))?
                .filter_map(|e| e.ok())
                .filter_map(|e| {
                    let name = e.file_name().to_string_lossy().into_owned();
                    name.strip_suffix(".vvol.json").map(str::to_string)
                })
                .collect();
            names.sort();
            if names.is_empty() {
                return Err(VamosError::Manifest("no .vvol.json predictions found".into()));
            }
            let mut tables: Vec<MatchTable> = Vec::new();
            let mut dices = Vec::new();
            for name in &names {
                let pred = read_mask(args.pred.join(name))?;
                let gt = read_mask(args.gt.join(name))?;
                let table = match_lesions(&pred, &gt)?;
                dices.extend(
                    dice_true_positives(&table, &pred, &gt)?
                        .into_iter()
                        .map(|(lesion, dice)| serde_json::json!({
                            "volume": name,
                            "lesion": lesion,
                            "dice": dice,
                        })),
                );
                tables.push(table);
            }
            let aggregate = sensitivity_fp(&tables)?;
            let strata = match &args.meta {
                Some(path) => {
                    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
                    let meta = parse_lesion_meta(&text, &names)?;
                    Some(stratify(&tables, &meta)?)
                }
                None => None,
            };
            write_json(
                &serde_json::json!({
                    "volumes": names,
                    "aggregate": aggregate,
                    "dice_true_positives": dices,
                    "strata": strata,
                }),
                &args.out,
            )
        }
    }
}

/// CSV columns: volume_id,lesion_id,radius_mm,location_group (header optional).
fn parse_lesion_meta(text: &str, volume_names: &[String]) -> Result<Vec<LesionMeta>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("volume_id") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(VamosError::Manifest(format!("metadata line {} too short", ln + 1)));
        }
        let volume = volume_names
            .iter()
            .position(|n| n == fields[0])
            .ok_or_else(|| VamosError::Manifest(format!("unknown volume id {:?}", fields[0])))?;
        out.push(LesionMeta {
            volume,
            lesion_id: fields[1]
                .parse()
                .map_err(|e| VamosError::Manifest(format!("bad lesion id: {e}")))?,
            radius_mm: fields[2]
                .parse()
                .map_err(|e| VamosError::Manifest(format!("bad radius: {e}")))?,
            location_group: fields.get(3).filter(|s| !s.is_empty()).map(|s| s.to_string()),
        });
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
