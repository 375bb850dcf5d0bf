//! Brick-kiln candidate detection from RGB time series.
//!
//! The pipeline is spectral first, temporal second, spatial last: each frame
//! is reduced to a redness index (NDBKI), the frames collapse into an
//! 80th-percentile composite, an Otsu threshold plus local-maximum test marks
//! seed pixels, seeds grow into above-threshold footprints, morphological
//! closing consolidates fragments, connected components become regions, a
//! height filter removes built-up confusers, and surviving regions are traced
//! into lon/lat polygons. Every stage is a pure function, so a fixed input
//! and configuration always reproduce byte-identical outputs, regardless of
//! how many worker threads process the tiles.

use kiln_raster::RasterGrid;

mod morphology;
mod pipeline;
mod regions;
mod spectral;

pub use morphology::{
    candidate_seeds, grow_footprints, local_maxima, morphological_closing, seeds_with_threshold,
};
pub use pipeline::{
    run_pipeline, PipelineConfig, PipelineOutput, RunReport, ThresholdScope, TileFailure,
    TileInput, TileResult,
};
pub use regions::{connected_components, height_filter, region_score, vectorize};
pub use spectral::{ndbki, otsu_threshold, percentile_composite, NDBKI_NODATA};

#[derive(Debug, thiserror::Error)]
pub enum DetectError {
    #[error("expected a 3-band RGB grid, got {got} band(s)")]
    BandCountMismatch { got: u16 },
    #[error("stack has no frames")]
    EmptyStack,
    #[error("frame {index} does not match the first frame's layout")]
    FrameMismatch { index: usize },
    #[error("percentile must lie in (0, 100], got {0}")]
    BadPercentile(f64),
    #[error("all valid pixels share one value; no threshold separates them")]
    DegenerateHistogram,
    #[error("window must be odd and >= 3, got {0}")]
    BadWindow(usize),
    #[error("structuring-element radius must be >= 1, got {0}")]
    BadRadius(u32),
    #[error("height filtering requested but no height grid was provided")]
    MissingHeightGrid,
    #[error("raster error: {0}")]
    Raster(#[from] kiln_raster::RasterError),
    #[error("geometry error: {0}")]
    Geo(#[from] kiln_geo::GeoError),
}

pub type Result<T> = std::result::Result<T, DetectError>;

/// An ordered set of single-band index grids, one per timestamp, sharing one
/// pixel layout, transform, and NoData sentinel.
#[derive(Debug, Clone)]
pub struct NdbkiStack {
    frames: Vec<RasterGrid>,
}

impl NdbkiStack {
    pub fn new(frames: Vec<RasterGrid>) -> Result<Self> {
        let first = frames.first().ok_or(DetectError::EmptyStack)?;
        if first.bands() != 1 {
            return Err(DetectError::BandCountMismatch { got: first.bands() });
        }
        for (index, f) in frames.iter().enumerate().skip(1) {
            let matches = f.bands() == 1
                && f.width() == first.width()
                && f.height() == first.height()
                && f.transform == first.transform
                && f.nodata == first.nodata;
            if !matches {
                return Err(DetectError::FrameMismatch { index });
            }
        }
        Ok(NdbkiStack { frames })
    }

    pub fn frames(&self) -> &[RasterGrid] {
        &self.frames
    }
}

/// One connected candidate region in a tile's pixel space. `pixels` is kept
/// sorted by (row, col); the bbox is half-open ([x0, y0, x1, y1] with
/// x1/y1 one past the last pixel), so its area equals the pixel count for
/// axis-aligned blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRegion {
    pub label_id: u32,
    pub pixels: Vec<(u32, u32)>,
    pub polygon: Vec<Vec<(f64, f64)>>,
    pub bbox: [f64; 4],
    pub score: f64,
}

impl DetectionRegion {
    /// Number of pixels in the region.
    pub fn area_px(&self) -> u64 {
        self.pixels.len() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use kiln_geo::GeoTransform;

    fn frame(w: u32, h: u32) -> RasterGrid {
        let t = GeoTransform::new(74.0, 31.0, 0.001, -0.001).unwrap();
        RasterGrid::filled(w, h, 1, 0.0, t).unwrap()
    }

    #[test]
    fn empty_stack_is_rejected() {
        assert!(matches!(NdbkiStack::new(vec![]), Err(DetectError::EmptyStack)));
    }

    #[test]
    fn mismatched_frame_is_rejected_with_index() {
        let err = NdbkiStack::new(vec![frame(4, 4), frame(4, 4), frame(5, 4)]).unwrap_err();
        assert!(matches!(err, DetectError::FrameMismatch { index: 2 }));
    }

    #[test]
    fn multiband_frame_is_rejected() {
        let t = GeoTransform::new(74.0, 31.0, 0.001, -0.001).unwrap();
        let rgb = RasterGrid::filled(4, 4, 3, 0.0, t).unwrap();
        assert!(matches!(
            NdbkiStack::new(vec![rgb]),
            Err(DetectError::BandCountMismatch { got: 3 })
        ));
    }
}
