//! Seed extraction and binary morphology on candidate masks.

use std::collections::VecDeque;

use kiln_raster::{BinaryMask, RasterGrid};

use crate::spectral::otsu_threshold;
use crate::{DetectError, Result};

/// Mark pixels that are >= every valid pixel in the odd `window`-sized square
/// around them (plateaus count as maxima). Neighborhoods are truncated at the
/// image border; NoData pixels are never maxima and never suppress neighbors.
pub fn local_maxima(grid: &RasterGrid, window: usize) -> Result<BinaryMask> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(DetectError::BadWindow(window));
    }
    let (w, h) = (grid.width(), grid.height());
    let r = (window / 2) as i64;
    let mut mask = BinaryMask::new(w, h);
    for row in 0..h {
        for col in 0..w {
            let center = grid.get(0, col, row);
            if grid.is_nodata_value(center) {
                continue;
            }
            let mut is_max = true;
            'scan: for nr in (row as i64 - r).max(0)..=(row as i64 + r).min(h as i64 - 1) {
                for nc in (col as i64 - r).max(0)..=(col as i64 + r).min(w as i64 - 1) {
                    let v = grid.get(0, nc as u32, nr as u32);
                    if !grid.is_nodata_value(v) && center < v {
                        is_max = false;
                        break 'scan;
                    }
                }
            }
            if is_max {
                mask.set(col, row, true);
            }
        }
    }
    Ok(mask)
}

/// Seed mask for a known threshold: strictly-above-threshold AND local
/// maximum.
pub fn seeds_with_threshold(
    grid: &RasterGrid,
    window: usize,
    threshold: f64,
) -> Result<BinaryMask> {
    let maxima = local_maxima(grid, window)?;
    let (w, h) = (grid.width(), grid.height());
    let mut mask = BinaryMask::new(w, h);
    for row in 0..h {
        for col in 0..w {
            let v = grid.get(0, col, row);
            if maxima.get(col, row) && !grid.is_nodata_value(v) && v > threshold {
                mask.set(col, row, true);
            }
        }
    }
    Ok(mask)
}

/// Seed mask from the grid's own Otsu threshold. Returns the mask together
/// with the threshold that produced it.
pub fn candidate_seeds(grid: &RasterGrid, window: usize) -> Result<(BinaryMask, f64)> {
    let threshold = otsu_threshold(grid, 256)?;
    Ok((seeds_with_threshold(grid, window, threshold)?, threshold))
}

/// Expand seeds into the 8-connected above-threshold components that contain
/// them; unseeded components vanish.
pub fn grow_footprints(seeds: &BinaryMask, grid: &RasterGrid, threshold: f64) -> BinaryMask {
    let (w, h) = (grid.width(), grid.height());
    let above = |col: u32, row: u32| {
        let v = grid.get(0, col, row);
        !grid.is_nodata_value(v) && v > threshold
    };
    let mut out = BinaryMask::new(w, h);
    let mut queue = VecDeque::new();
    for row in 0..h {
        for col in 0..w {
            if seeds.get(col, row) && above(col, row) && !out.get(col, row) {
                out.set(col, row, true);
                queue.push_back((col, row));
                while let Some((c, r)) = queue.pop_front() {
                    for dr in -1i64..=1 {
                        for dc in -1i64..=1 {
                            let (nc, nr) = (c as i64 + dc, r as i64 + dr);
                            if nc < 0 || nr < 0 || nc >= w as i64 || nr >= h as i64 {
                                continue;
                            }
                            let (nc, nr) = (nc as u32, nr as u32);
                            if !out.get(nc, nr) && above(nc, nr) {
                                out.set(nc, nr, true);
                                queue.push_back((nc, nr));
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Square-structuring-element dilation implemented as separable row/column
/// max filters. Out-of-image cells count as background.
fn dilate(mask: &BinaryMask, radius: u32) -> BinaryMask {
    separable_pass(mask, radius, true)
}

/// Square-structuring-element erosion: a pixel survives when every in-image
/// cell of its window is set (the clipped window ignores out-of-image cells).
fn erode(mask: &BinaryMask, radius: u32) -> BinaryMask {
    separable_pass(mask, radius, false)
}

fn separable_pass(mask: &BinaryMask, radius: u32, dilating: bool) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let r = radius as i64;
    let combine = |acc: bool, v: bool| if dilating { acc || v } else { acc && v };
    let mut horiz = BinaryMask::new(w, h);
    for row in 0..h {
        for col in 0..w {
            let mut acc = !dilating;
            for nc in (col as i64 - r).max(0)..=(col as i64 + r).min(w as i64 - 1) {
                acc = combine(acc, mask.get(nc as u32, row));
            }
            horiz.set(col, row, acc);
        }
    }
    let mut out = BinaryMask::new(w, h);
    for row in 0..h {
        for col in 0..w {
            let mut acc = !dilating;
            for nr in (row as i64 - r).max(0)..=(row as i64 + r).min(h as i64 - 1) {
                acc = combine(acc, horiz.get(col, nr as u32));
            }
            out.set(col, row, acc);
        }
    }
    out
}

/// Morphological closing (dilation then erosion) with a (2r+1)^2 square
/// structuring element. Extensive and idempotent.
pub fn morphological_closing(mask: &BinaryMask, se_radius: u32) -> Result<BinaryMask> {
    if se_radius == 0 {
        return Err(DetectError::BadRadius(se_radius));
    }
    Ok(erode(&dilate(mask, se_radius), se_radius))
}
