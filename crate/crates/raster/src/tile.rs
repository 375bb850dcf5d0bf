//! Ingest 8-bit RGB PNG tiles with a georeferencing sidecar.
//!
//! A tile is a PNG plus a JSON sidecar next to it describing where the tile
//! sits on the globe. The sidecar keeps the PNG reader dumb: no embedded
//! metadata chunks to parse.

use crate::{RasterError, RasterGrid};
use kiln_geo::GeoTransform;
use serde::Deserialize;
use std::path::Path;

/// Expected tile edge length unless the caller overrides.
pub const DEFAULT_TILE_SIZE: u32 = 256;

/// Georeferencing sidecar schema. The origin refers to the center of pixel
/// (0, 0), matching the rest of the toolkit.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub pixel_width: f64,
    pub pixel_height: f64,
}

/// Read an 8-bit RGB PNG and its sidecar into a 3-band grid with values in
/// [0, 255].
///
/// Tiles must be square `DEFAULT_TILE_SIZE` unless `allow_any_size` is set.
pub fn read_rgb_tile(
    png_path: &Path,
    sidecar_path: &Path,
    allow_any_size: bool,
) -> Result<RasterGrid, RasterError> {
    if !sidecar_path.exists() {
        return Err(RasterError::MissingSidecar(
            sidecar_path.display().to_string(),
        ));
    }
    let sidecar: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path)?)?;
    let transform = GeoTransform::new(
        sidecar.origin_lon,
        sidecar.origin_lat,
        sidecar.pixel_width,
        sidecar.pixel_height,
    )?;

    let img = image::open(png_path)?;
    let rgb = match img {
        image::DynamicImage::ImageRgb8(buf) => buf,
        _ => return Err(RasterError::UnsupportedPixelFormat),
    };
    let (w, h) = rgb.dimensions();
    if !allow_any_size && (w != DEFAULT_TILE_SIZE || h != DEFAULT_TILE_SIZE) {
        return Err(RasterError::DimensionMismatch {
            got_w: w,
            got_h: h,
            want: DEFAULT_TILE_SIZE,
        });
    }

    // Interleaved RGB to band-sequential planes.
    let plane = w as usize * h as usize;
    let mut data = vec![0.0f64; plane * 3];
    for (i, px) in rgb.pixels().enumerate() {
        data[i] = px.0[0] as f64;
        data[plane + i] = px.0[1] as f64;
        data[2 * plane + i] = px.0[2] as f64;
    }
    RasterGrid::from_data(w, h, 3, data, transform)
}

/// Write a 3-band grid (values clamped to [0, 255]) as an RGB PNG plus a
/// sidecar. The inverse of [`read_rgb_tile`] for in-range integral values.
pub fn write_rgb_tile(
    grid: &RasterGrid,
    png_path: &Path,
    sidecar_path: &Path,
) -> Result<(), RasterError> {
    if grid.bands() != 3 {
        return Err(RasterError::BandOutOfRange {
            band: 2,
            bands: grid.bands(),
        });
    }
    let (w, h) = (grid.width(), grid.height());
    let plane = grid.plane_len();
    let data = grid.data();
    let mut buf = image::RgbImage::new(w, h);
    for (i, px) in buf.pixels_mut().enumerate() {
        for b in 0..3 {
            px.0[b] = data[b * plane + i].clamp(0.0, 255.0).round() as u8;
        }
    }
    buf.save_with_format(png_path, image::ImageFormat::Png)?;

    let t = grid.transform;
    let sidecar = serde_json::json!({
        "origin_lon": t.origin_lon,
        "origin_lat": t.origin_lat,
        "pixel_width": t.pixel_width,
        "pixel_height": t.pixel_height,
    });
    std::fs::write(sidecar_path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}
