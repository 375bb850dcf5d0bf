//! The `detect` subcommand: read tile time series, run the pipeline, write
//! GeoJSON regions plus a provenance-carrying run report.

use std::path::{Path, PathBuf};

use kiln_detect::{run_pipeline, PipelineConfig, ThresholdScope, TileFailure, TileInput};
use kiln_raster::geojson::{write_geojson, VectorFeature};
use kiln_raster::kgrd::read_grid;
use kiln_raster::tile::read_rgb_tile;
use serde::Serialize;

use crate::config::{config_sha256, load_run_config};
use crate::{CliError, DetectArgs};

/// On-disk run report: the pipeline summary prefixed with provenance.
#[derive(Serialize)]
struct DetectReport {
    toolkit_version: &'static str,
    config_sha256: String,
    #[serde(flatten)]
    pipeline: kiln_detect::RunReport,
}

fn apply_overrides(cfg: &mut PipelineConfig, args: &DetectArgs) -> Result<(), CliError> {
    if let Some(p) = args.percentile {
        cfg.percentile = p;
    }
    if let Some(w) = args.window {
        cfg.window = w;
    }
    if let Some(b) = args.bins {
        cfg.bins = b;
    }
    if let Some(r) = args.se_radius {
        cfg.se_radius = r;
    }
    if let Some(scope) = &args.threshold_scope {
        cfg.threshold_scope = match scope.as_str() {
            "scene" => ThresholdScope::Scene,
            "tile" => ThresholdScope::Tile,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown threshold scope `{other}` (expected scene or tile)"
                )))
            }
        };
    }
    if args.heights.is_some() {
        cfg.height_filter = true;
    }
    Ok(())
}

/// Frame subdirectories in name order; each frame's tiles keyed by PNG stem.
fn scan_frames(input: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(input)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", input.display())))?;
    let mut frames: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    frames.sort();
    Ok(frames)
}

fn tile_stems(frame_dirs: &[PathBuf]) -> Vec<String> {
    let mut stems: Vec<String> = frame_dirs
        .iter()
        .flat_map(|dir| {
            std::fs::read_dir(dir)
                .into_iter()
                .flatten()
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x == "png"))
                .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
        })
        .collect();
    stems.sort();
    stems.dedup();
    stems
}

/// Assemble per-tile frame stacks. A tile missing from any frame, or failing
/// to read, becomes a recorded failure rather than aborting the run.
fn load_tiles(frame_dirs: &[PathBuf], stems: &[String]) -> (Vec<TileInput>, Vec<TileFailure>) {
    let mut tiles = Vec::new();
    let mut failures = Vec::new();
    'tiles: for stem in stems {
        let mut frames = Vec::with_capacity(frame_dirs.len());
        for dir in frame_dirs {
            let png = dir.join(format!("{stem}.png"));
            let sidecar = dir.join(format!("{stem}.json"));
            if !png.exists() {
                failures.push(TileFailure {
                    tile: stem.clone(),
                    error: format!("missing from frame directory {}", dir.display()),
                });
                continue 'tiles;
            }
            match read_rgb_tile(&png, &sidecar, true) {
                Ok(grid) => frames.push(grid),
                Err(e) => {
                    failures.push(TileFailure {
                        tile: stem.clone(),
                        error: e.to_string(),
                    });
                    continue 'tiles;
                }
            }
        }
        tiles.push(TileInput {
            name: stem.clone(),
            frames,
        });
    }
    (tiles, failures)
}

fn default_report_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "detect".to_string());
    out.with_file_name(format!("{stem}.report.json"))
}

pub fn run(args: DetectArgs) -> Result<(), CliError> {
    let mut cfg = load_run_config(args.config.as_deref())?.detect;
    apply_overrides(&mut cfg, &args)?;
    if cfg.height_filter && args.heights.is_none() {
        return Err(CliError::Usage(
            "height filter enabled but no --heights grid given".into(),
        ));
    }

    let frame_dirs = scan_frames(&args.input)?;
    let stems = tile_stems(&frame_dirs);
    if stems.is_empty() {
        return Err(CliError::Usage("no tiles found".into()));
    }
    let (tiles, read_failures) = load_tiles(&frame_dirs, &stems);

    let heights = match &args.heights {
        Some(p) => Some(read_grid(p).map_err(|e| {
            CliError::Usage(format!("cannot read heights {}: {e}", p.display()))
        })?),
        None => None,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot build worker pool: {e}")))?;
    let output = pool
        .install(|| run_pipeline(&tiles, heights.as_ref(), &cfg))
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let features: Vec<VectorFeature> = output
        .tiles
        .iter()
        .flat_map(|t| &t.regions)
        .map(|r| VectorFeature {
            rings: r.polygon.clone(),
            area_px: r.pixels.len() as u64,
            score: r.score,
        })
        .collect();
    write_geojson(&features, &args.out)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", args.out.display())))?;

    let mut report = output.report;
    let mut failures = read_failures;
    failures.append(&mut report.failures);
    report.failures = failures;

    let report_path = args.report.clone().unwrap_or_else(|| default_report_path(&args.out));
    let on_disk = DetectReport {
        toolkit_version: env!("CARGO_PKG_VERSION"),
        config_sha256: config_sha256(&cfg),
        pipeline: report,
    };
    let json = serde_json::to_string_pretty(&on_disk).expect("report serialization cannot fail");
    std::fs::write(&report_path, json)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", report_path.display())))?;

    println!(
        "{} tiles, {} regions ({} rejected by height), {} failures -> {}",
        on_disk.pipeline.tiles_processed,
        on_disk.pipeline.regions_total,
        on_disk.pipeline.regions_rejected_by_height,
        on_disk.pipeline.failures.len(),
        args.out.display()
    );
    if on_disk.pipeline.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Partial(format!(
            "{} of {} tiles failed; see {}",
            on_disk.pipeline.failures.len(),
            stems.len(),
            report_path.display()
        )))
    }
}
