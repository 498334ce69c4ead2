//! Command-line surface: one subcommand per pipeline stage, flag-driven,
//! reproducible. Diagnostics go to stderr; machine-readable output goes to
//! files or stdout. Exit codes: 0 success, 1 usage, 2 I/O or format,
//! 3 network, 4 validation.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::geodata::{
    build_overpass_query, fetch_roads, parse_geojson, parse_overpass_response, write_geojson,
    GeoBBox, LocalProjection, DEFAULT_HIGHWAY_CLASSES,
};
use crate::maskgen::{rasterize_buffered_polylines, rasterize_polygons, BufferSpec};
use crate::nn::{checkpoint_read, checkpoint_write};
use crate::patches::{archive_write, extract_patches, split_assign, PatchArchive, PatchSpec};
use crate::pipeline::predict::ones_mask;
use crate::pipeline::{
    evaluate_masked, generate_synthetic_scene, predict_tiled, train, MaskMode, TrainConfig,
};
use crate::raster::{
    export_preview, grid_from_json, rras_read, rras_write, Dtype, GridTransform, PreviewOptions,
    Samples,
};

#[derive(Parser)]
#[command(name = "maskseg", version, about = "Road-masked tree segmentation pipeline")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download drivable roads from an Overpass endpoint as local-plane GeoJSON
    FetchRoads(FetchRoadsArgs),
    /// Buffer road polylines into a binary validity mask raster
    BuildMask(BuildMaskArgs),
    /// Burn crown polygons into a binary label raster
    RasterizeLabels(RasterizeLabelsArgs),
    /// Slice image/mask/label rasters into a patch archive with splits
    ExtractPatches(ExtractPatchesArgs),
    /// Train the U-Net on a patch archive
    Train(TrainArgs),
    /// Tiled inference over a full raster
    Predict(PredictArgs),
    /// Masked metrics of a prediction raster against labels
    Evaluate(EvaluateArgs),
    /// Generate a synthetic scene (image + roads + crowns)
    Synth(SynthArgs),
    /// Export an RRAS raster as a PGM/PPM preview
    ExportPpm(ExportPpmArgs),
}

#[derive(Args)]
struct FetchRoadsArgs {
    /// Bounding box as south,west,north,east (decimal degrees)
    #[arg(long, value_parser = parse_bbox)]
    bbox: GeoBBox,
    /// Output GeoJSON path (local-plane coordinates)
    #[arg(long)]
    out: PathBuf,
    /// Overpass API endpoint
    #[arg(long, default_value = "https://overpass-api.de/api/interpreter")]
    endpoint: String,
    /// Comma-separated highway classes
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_HIGHWAY_CLASSES.iter().map(|s| s.to_string()))]
    classes: Vec<String>,
    /// Projection origin lon0,lat0; defaults to the bbox center
    #[arg(long, value_parser = parse_lon_lat)]
    proj: Option<(f64, f64)>,
}

#[derive(Args)]
struct BuildMaskArgs {
    /// Roads GeoJSON (planar coordinates)
    #[arg(long)]
    roads: PathBuf,
    /// Take the grid from this RRAS raster
    #[arg(long, conflicts_with = "grid")]
    like: Option<PathBuf>,
    /// Take the grid from this grid JSON file
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Buffer radius in meters
    #[arg(long, default_value_t = 5.0)]
    buffer: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RasterizeLabelsArgs {
    /// Crowns GeoJSON (planar coordinates)
    #[arg(long)]
    crowns: PathBuf,
    /// Take the grid from this RRAS raster
    #[arg(long)]
    like: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractPatchesArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 256)]
    size: usize,
    #[arg(long, default_value_t = 128)]
    stride: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// train,val,test fractions
    #[arg(long, value_parser = parse_fractions, default_value = "0.6,0.2,0.2")]
    fractions: (f64, f64, f64),
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    patches: PathBuf,
    /// TrainConfig JSON file
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint output; falls back to the config's checkpoint field
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-epoch history as JSON lines
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    image: PathBuf,
    /// Validity mask raster
    #[arg(long, conflicts_with = "ones")]
    mask: Option<PathBuf>,
    /// Use an all-ones mask (predict beyond the road network)
    #[arg(long)]
    ones: bool,
    /// Probability raster output (f32)
    #[arg(long)]
    out: PathBuf,
    /// Optional thresholded binary raster output
    #[arg(long)]
    out_binary: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    threshold: f32,
    /// How the mask enters the model: channel, premultiply or fill:<v>
    #[arg(long, value_parser = parse_mask_mode, default_value = "channel")]
    mask_mode: MaskMode,
    #[arg(long, default_value_t = 256)]
    tile: usize,
    #[arg(long, default_value_t = 128)]
    tile_stride: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Probability (f32) or binary (u8) prediction raster
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f32,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    #[arg(long)]
    trees: usize,
    #[arg(long)]
    roads: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ExportPpmArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Band indices; defaults to 0,1,2 for 3+ bands, else 0
    #[arg(long, value_delimiter = ',')]
    bands: Option<Vec<usize>>,
    /// Multiply u8 samples by 255 (for {0,1} masks)
    #[arg(long)]
    scale_binary: bool,
}

fn parse_bbox(s: &str) -> std::result::Result<GeoBBox, String> {
    let parts = parse_f64_list(s, 4)?;
    GeoBBox::new(parts[0], parts[1], parts[2], parts[3]).map_err(|e| e.to_string())
}

fn parse_lon_lat(s: &str) -> std::result::Result<(f64, f64), String> {
    let parts = parse_f64_list(s, 2)?;
    Ok((parts[0], parts[1]))
}

fn parse_fractions(s: &str) -> std::result::Result<(f64, f64, f64), String> {
    let parts = parse_f64_list(s, 3)?;
    Ok((parts[0], parts[1], parts[2]))
}

fn parse_f64_list(s: &str, expected: usize) -> std::result::Result<Vec<f64>, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad number {p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if parts.len() != expected {
        return Err(format!("expected {expected} comma-separated numbers, got {}", parts.len()));
    }
    Ok(parts)
}

fn parse_mask_mode(s: &str) -> std::result::Result<MaskMode, String> {
    match s {
        "channel" => Ok(MaskMode::Channel),
        "premultiply" => Ok(MaskMode::Premultiply),
        other => match other.strip_prefix("fill:") {
            Some(v) => v
                .parse::<f32>()
                .map(MaskMode::FixedFill)
                .map_err(|e| format!("bad fill value {v:?}: {e}")),
            None => Err(format!("unknown mask mode {other:?} (channel|premultiply|fill:<v>)")),
        },
    }
}

/// Parse argv and run; the exit code follows the error taxonomy.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints --help/--version on stdout with status 0
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::FetchRoads(args) => cmd_fetch_roads(args),
        Command::BuildMask(args) => cmd_build_mask(args),
        Command::RasterizeLabels(args) => cmd_rasterize_labels(args),
        Command::ExtractPatches(args) => cmd_extract_patches(args),
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Synth(args) => cmd_synth(args),
        Command::ExportPpm(args) => cmd_export_ppm(args),
    }
}

fn read_features(path: &Path) -> Result<crate::geodata::FeatureSet> {
    let text = std::fs::read_to_string(path)?;
    let parsed = parse_geojson(&text)?;
    if parsed.skipped > 0 {
        eprintln!("warning: skipped {} unsupported geometries in {}", parsed.skipped, path.display());
    }
    Ok(parsed.features)
}

fn cmd_fetch_roads(args: FetchRoadsArgs) -> Result<()> {
    let (lon0, lat0) = args.proj.unwrap_or_else(|| args.bbox.center());
    let proj = LocalProjection::new(lon0, lat0)?;
    // validate the query before any network traffic
    build_overpass_query(&args.bbox, &args.classes)?;
    let bytes = fetch_roads(&args.endpoint, &args.bbox, &args.classes)?;
    let features = parse_overpass_response(&bytes, &proj)?;
    eprintln!("fetched {} road polylines", features.polylines.len());
    std::fs::write(&args.out, write_geojson(&features))?;
    Ok(())
}

fn load_grid(like: &Option<PathBuf>, grid: &Option<PathBuf>) -> Result<GridTransform> {
    match (like, grid) {
        (Some(path), _) => Ok(rras_read(path)?.grid),
        (None, Some(path)) => grid_from_json(&std::fs::read_to_string(path)?),
        (None, None) => Err(Error::Usage("one of --like or --grid is required".into())),
    }
}

fn cmd_build_mask(args: BuildMaskArgs) -> Result<()> {
    let grid = load_grid(&args.like, &args.grid)?;
    let features = read_features(&args.roads)?;
    let spec = BufferSpec::new(args.buffer)?;
    let mask = rasterize_buffered_polylines(&features.polylines, &grid, &spec);
    rras_write(&mask, &args.out)?;
    Ok(())
}

fn cmd_rasterize_labels(args: RasterizeLabelsArgs) -> Result<()> {
    let grid = rras_read(&args.like)?.grid;
    let features = read_features(&args.crowns)?;
    let labels = rasterize_polygons(&features.polygons, &grid)?;
    rras_write(&labels, &args.out)?;
    Ok(())
}

fn cmd_extract_patches(args: ExtractPatchesArgs) -> Result<()> {
    let image = rras_read(&args.image)?;
    let mask = rras_read(&args.mask)?;
    let labels = rras_read(&args.labels)?;
    let spec = PatchSpec::new(args.size, args.stride)?;
    let patches = extract_patches(&image, &mask, &labels, &spec)?;
    let assignment = split_assign(patches.len(), args.fractions, args.seed)?;
    let archive = PatchArchive::new(spec, image.grid, assignment, patches)?;
    archive_write(&archive, &args.out)?;
    eprintln!("wrote {} patches", archive.patches.len());
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let config: TrainConfig = serde_json::from_str(&std::fs::read_to_string(&args.config)?)
        .map_err(|e| Error::format(format!("bad train config: {e}")))?;
    let out_path = args
        .out
        .clone()
        .or_else(|| config.checkpoint.as_ref().map(PathBuf::from))
        .ok_or_else(|| Error::Usage("no checkpoint path: pass --out or set it in the config".into()))?;
    let archive = crate::patches::archive_read(&args.patches)?;
    let outcome = train(&config, &archive)?;
    checkpoint_write(&outcome.best_params, &outcome.config, &out_path)?;
    if let Some(history_path) = &args.history {
        let mut lines = String::new();
        for record in &outcome.history {
            lines.push_str(&serde_json::to_string(record).expect("record serialization"));
            lines.push('\n');
        }
        std::fs::write(history_path, lines)?;
    }
    eprintln!(
        "best epoch {} (val accuracy {:?})",
        outcome.best_epoch,
        outcome.history[outcome.best_epoch].val_accuracy
    );
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let (config, params) = checkpoint_read(&args.model)?;
    let image = rras_read(&args.image)?;
    let mask = match (&args.mask, args.ones) {
        (Some(path), false) => rras_read(path)?,
        (None, true) => ones_mask(&image),
        (None, false) => return Err(Error::Usage("pass --mask or --ones".into())),
        (Some(_), true) => unreachable!("clap conflicts_with"),
    };
    let out = predict_tiled(
        &config,
        &params,
        args.mask_mode,
        &image,
        &mask,
        args.tile,
        args.tile_stride,
        args.threshold,
    )?;
    rras_write(&out.probability, &args.out)?;
    if let Some(path) = &args.out_binary {
        rras_write(&out.binary, path)?;
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let pred = rras_read(&args.pred)?;
    let labels = rras_read(&args.labels)?;
    let mask = rras_read(&args.mask)?;
    if pred.grid != labels.grid || pred.grid != mask.grid {
        return Err(Error::validation("prediction, labels and mask grids differ"));
    }
    if !labels.is_binary_mask() || !mask.is_binary_mask() {
        return Err(Error::validation("labels and mask must be binary rasters"));
    }
    let probs: Vec<f32> = match (&pred.data, pred.bands, pred.dtype()) {
        (Samples::F32(v), 1, _) => v.clone(),
        (Samples::U8(v), 1, Dtype::U8) => v.iter().map(|&s| s as f32).collect(),
        _ => return Err(Error::validation("prediction must be a single-band raster")),
    };
    let labels_data = match &labels.data {
        Samples::U8(v) => v,
        _ => unreachable!("is_binary_mask checked u8"),
    };
    let mask_data = match &mask.data {
        Samples::U8(v) => v,
        _ => unreachable!("is_binary_mask checked u8"),
    };
    let report = evaluate_masked(&probs, labels_data, mask_data, args.threshold)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serialization"));
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let scene =
        generate_synthetic_scene(args.seed, args.width, args.height, args.trees, args.roads)?;
    std::fs::create_dir_all(&args.out_dir)?;
    rras_write(&scene.image, &args.out_dir.join("image.rras"))?;
    std::fs::write(args.out_dir.join("roads.geojson"), write_geojson(&scene.roads))?;
    std::fs::write(args.out_dir.join("crowns.geojson"), write_geojson(&scene.crowns))?;
    Ok(())
}

fn cmd_export_ppm(args: ExportPpmArgs) -> Result<()> {
    let raster = rras_read(&args.input)?;
    let bands = args.bands.unwrap_or_else(|| {
        if raster.bands >= 3 {
            vec![0, 1, 2]
        } else {
            vec![0]
        }
    });
    export_preview(&raster, &args.out, &PreviewOptions { bands, scale_binary: args.scale_binary })
}
