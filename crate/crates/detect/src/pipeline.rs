//! End-to-end tile processing with deterministic parallelism.

use std::collections::BTreeMap;

use kiln_raster::RasterGrid;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::spectral::{fill_histogram, otsu_from_histogram, value_range, Histogram};
use crate::{
    connected_components, grow_footprints, height_filter, morphological_closing, ndbki,
    otsu_threshold, percentile_composite, region_score, seeds_with_threshold, vectorize,
    DetectError, DetectionRegion, NdbkiStack, Result,
};

/// Where the Otsu threshold is computed: pooled over the whole scene's
/// composites, or independently per tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdScope {
    Scene,
    Tile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Temporal composite percentile.
    pub percentile: f64,
    /// Local-maximum window side (odd).
    pub window: usize,
    /// Otsu histogram bin count.
    pub bins: usize,
    /// Closing structuring-element radius (square side 2r+1).
    pub se_radius: u32,
    pub threshold_scope: ThresholdScope,
    /// Reject built-up regions using the height grid. Requires one.
    pub height_filter: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            percentile: 80.0,
            window: 9,
            bins: 256,
            se_radius: 4,
            threshold_scope: ThresholdScope::Scene,
            height_filter: false,
        }
    }
}

/// One tile's RGB time series. Frames must share a single layout; the tile
/// name keys the run report.
#[derive(Debug, Clone)]
pub struct TileInput {
    pub name: String,
    pub frames: Vec<RasterGrid>,
}

/// Per-tile pipeline product: surviving regions (relabeled 1..n within the
/// tile) plus the threshold that produced them.
#[derive(Debug, Clone)]
pub struct TileResult {
    pub name: String,
    pub transform: kiln_geo::GeoTransform,
    pub threshold: f64,
    pub regions: Vec<DetectionRegion>,
    pub rejected_by_height: usize,
}

/// Machine-readable run summary, serialized alongside the GeoJSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tiles_processed: usize,
    pub regions_total: usize,
    pub regions_rejected_by_height: usize,
    pub threshold_per_tile: BTreeMap<String, f64>,
    pub failures: Vec<TileFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileFailure {
    pub tile: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub tiles: Vec<TileResult>,
    pub report: RunReport,
}

/// Scene-scope sentinel used in the failure list when no tile-specific
/// threshold could be derived at all.
const SCENE: &str = "<scene>";

/// Run the full chain — index, composite, threshold, seeds, growth, closing,
/// components, height filter, vectorize — over every tile. Tiles are
/// processed in parallel but merged in input order, so the output is a pure
/// function of (tiles, heights, config) no matter the worker count. A tile
/// that fails is reported and skipped, never fatal.
pub fn run_pipeline(
    tiles: &[TileInput],
    heights: Option<&RasterGrid>,
    config: &PipelineConfig,
) -> Result<PipelineOutput> {
    if config.height_filter && heights.is_none() {
        return Err(DetectError::MissingHeightGrid);
    }

    // Stage 1: per-tile composites.
    let composites: Vec<std::result::Result<RasterGrid, String>> = tiles
        .par_iter()
        .map(|tile| composite_tile(tile, config).map_err(|e| e.to_string()))
        .collect();

    // Stage 2: thresholds.
    let mut failures: Vec<TileFailure> = Vec::new();
    let thresholds: Vec<Option<f64>> = match config.threshold_scope {
        ThresholdScope::Tile => composites
            .par_iter()
            .map(|c| match c {
                Ok(grid) => otsu_threshold(grid, config.bins).ok(),
                Err(_) => None,
            })
            .collect(),
        ThresholdScope::Scene => {
            let range = composites
                .iter()
                .flatten()
                .filter_map(value_range)
                .reduce(|(lo0, hi0), (lo1, hi1)| (lo0.min(lo1), hi0.max(hi1)));
            let scene_threshold = range.and_then(|(min, max)| {
                if min == max {
                    return None;
                }
                let partials: Vec<Histogram> = composites
                    .par_iter()
                    .map(|c| {
                        let mut h = Histogram::empty(config.bins, min, max);
                        if let Ok(grid) = c {
                            fill_histogram(&mut h, grid);
                        }
                        h
                    })
                    .collect();
                let mut merged = Histogram::empty(config.bins, min, max);
                for p in &partials {
                    merged.merge(p);
                }
                otsu_from_histogram(&merged).ok()
            });
            if scene_threshold.is_none() && !tiles.is_empty() {
                failures.push(TileFailure {
                    tile: SCENE.to_string(),
                    error: DetectError::DegenerateHistogram.to_string(),
                });
            }
            vec![scene_threshold; tiles.len()]
        }
    };

    // Stage 3: spatial consolidation per tile.
    let results: Vec<std::result::Result<TileResult, String>> = tiles
        .par_iter()
        .zip(&composites)
        .zip(&thresholds)
        .map(|((tile, composite), threshold)| {
            let composite = composite.as_ref().map_err(Clone::clone)?;
            let threshold = threshold.ok_or_else(|| {
                if matches!(config.threshold_scope, ThresholdScope::Tile) {
                    DetectError::DegenerateHistogram.to_string()
                } else {
                    "no scene threshold available".to_string()
                }
            })?;
            consolidate_tile(tile, composite, threshold, heights, config)
                .map_err(|e| e.to_string())
        })
        .collect();

    let mut out_tiles = Vec::new();
    let mut report = RunReport {
        tiles_processed: 0,
        regions_total: 0,
        regions_rejected_by_height: 0,
        threshold_per_tile: BTreeMap::new(),
        failures,
    };
    for (tile, result) in tiles.iter().zip(results) {
        match result {
            Ok(tr) => {
                report.tiles_processed += 1;
                report.regions_total += tr.regions.len();
                report.regions_rejected_by_height += tr.rejected_by_height;
                report.threshold_per_tile.insert(tr.name.clone(), tr.threshold);
                out_tiles.push(tr);
            }
            Err(error) => {
                // Scene-level threshold failure is already reported once.
                if !(matches!(config.threshold_scope, ThresholdScope::Scene)
                    && error == "no scene threshold available")
                {
                    report.failures.push(TileFailure {
                        tile: tile.name.clone(),
                        error,
                    });
                }
            }
        }
    }
    Ok(PipelineOutput {
        tiles: out_tiles,
        report,
    })
}

fn composite_tile(tile: &TileInput, config: &PipelineConfig) -> Result<RasterGrid> {
    let indexed: Vec<RasterGrid> = tile
        .frames
        .iter()
        .map(ndbki)
        .collect::<Result<_>>()?;
    percentile_composite(&NdbkiStack::new(indexed)?, config.percentile)
}

fn consolidate_tile(
    tile: &TileInput,
    composite: &RasterGrid,
    threshold: f64,
    heights: Option<&RasterGrid>,
    config: &PipelineConfig,
) -> std::result::Result<TileResult, String> {
    let seeds = seeds_with_threshold(composite, config.window, threshold).map_err(|e| e.to_string())?;
    let grown = grow_footprints(&seeds, composite, threshold);
    let closed = morphological_closing(&grown, config.se_radius).map_err(|e| e.to_string())?;
    let mut regions = connected_components(&closed);
    for r in regions.iter_mut() {
        r.score = region_score(r, composite);
    }
    let mut rejected = 0usize;
    if config.height_filter {
        let grid = heights.expect("checked before the parallel stage");
        regions.retain(|r| {
            let keep = height_filter(r, grid, &composite.transform);
            if !keep {
                rejected += 1;
            }
            keep
        });
    }
    for (i, r) in regions.iter_mut().enumerate() {
        r.label_id = i as u32 + 1;
        r.polygon = vectorize(r, &composite.transform);
    }
    Ok(TileResult {
        name: tile.name.clone(),
        transform: composite.transform,
        threshold,
        regions,
        rejected_by_height: rejected,
    })
}
