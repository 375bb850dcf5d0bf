//! Grid and vector IO for the detection toolkit.
//!
//! The central type is [`RasterGrid`]: a georeferenced multi-band grid held as
//! float64 planes with NoData sentinel semantics. Grids round-trip losslessly
//! through the KGRD binary format ([`kgrd`]), can be ingested from 8-bit RGB
//! PNG tiles with a georeferencing sidecar ([`tile`]), and detection polygons
//! are emitted as GeoJSON ([`geojson`]).

pub mod geojson;
pub mod kgrd;
pub mod tile;

use kiln_geo::GeoTransform;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("bad magic bytes: not a KGRD file")]
    BadMagic,
    #[error("file truncated: expected {expected} bytes, got {got}")]
    TruncatedFile { expected: u64, got: u64 },
    #[error("unsupported KGRD version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),
    #[error("KGRD transform has nonzero rotation terms; only axis-aligned grids are supported")]
    RotatedTransform,
    #[error("trailing bytes after sample data")]
    TrailingBytes,
    #[error("tile is {got_w}x{got_h}, expected {want}x{want} (pass the size override to accept)")]
    DimensionMismatch { got_w: u32, got_h: u32, want: u32 },
    #[error("georeferencing sidecar not found: {0}")]
    MissingSidecar(String),
    #[error("unsupported pixel format: expected 8-bit RGB")]
    UnsupportedPixelFormat,
    #[error("grid dimensions invalid: {width}x{height}x{bands}")]
    BadDimensions { width: u32, height: u32, bands: u16 },
    #[error("data length {got} does not match {want} (width*height*bands)")]
    DataLengthMismatch { got: usize, want: usize },
    #[error("band index {band} out of range ({bands} bands)")]
    BandOutOfRange { band: u16, bands: u16 },
    #[error("polygon ring must be closed with at least 4 vertices")]
    InvalidRing,
    #[error("not a FeatureCollection of Polygon features: {0}")]
    BadGeoJson(String),
    #[error(transparent)]
    Geo(#[from] kiln_geo::GeoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error("sidecar JSON invalid: {0}")]
    Sidecar(#[from] serde_json::Error),
}

/// Storage element type of a grid file. Values are always float64 in memory;
/// the dtype only controls on-disk width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, RasterError> {
        match code {
            1 => Ok(Dtype::F32),
            2 => Ok(Dtype::F64),
            other => Err(RasterError::UnsupportedDtype(other)),
        }
    }
}

/// Georeferenced multi-band float grid.
///
/// Samples are stored band-sequentially: band 0's full row-major plane, then
/// band 1's, and so on. NoData is an exact sentinel value: a pixel is NoData
/// iff its stored bits compare equal to the sentinel.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    width: u32,
    height: u32,
    bands: u16,
    pub dtype: Dtype,
    pub nodata: Option<f64>,
    pub transform: GeoTransform,
    data: Vec<f64>,
}

impl RasterGrid {
    /// Grid filled with a constant value.
    pub fn filled(
        width: u32,
        height: u32,
        bands: u16,
        fill: f64,
        transform: GeoTransform,
    ) -> Result<Self, RasterError> {
        if width == 0 || height == 0 || bands == 0 {
            return Err(RasterError::BadDimensions {
                width,
                height,
                bands,
            });
        }
        let len = width as usize * height as usize * bands as usize;
        Ok(RasterGrid {
            width,
            height,
            bands,
            dtype: Dtype::F64,
            nodata: None,
            transform,
            data: vec![fill; len],
        })
    }

    /// Grid from pre-laid-out band-sequential data.
    pub fn from_data(
        width: u32,
        height: u32,
        bands: u16,
        data: Vec<f64>,
        transform: GeoTransform,
    ) -> Result<Self, RasterError> {
        if width == 0 || height == 0 || bands == 0 {
            return Err(RasterError::BadDimensions {
                width,
                height,
                bands,
            });
        }
        let want = width as usize * height as usize * bands as usize;
        if data.len() != want {
            return Err(RasterError::DataLengthMismatch {
                got: data.len(),
                want,
            });
        }
        Ok(RasterGrid {
            width,
            height,
            bands,
            dtype: Dtype::F64,
            nodata: None,
            transform,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bands(&self) -> u16 {
        self.bands
    }

    /// Number of pixels per band.
    pub fn plane_len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    fn index(&self, band: u16, col: u32, row: u32) -> usize {
        debug_assert!(band < self.bands && col < self.width && row < self.height);
        band as usize * self.plane_len() + row as usize * self.width as usize + col as usize
    }

    pub fn get(&self, band: u16, col: u32, row: u32) -> f64 {
        self.data[self.index(band, col, row)]
    }

    pub fn set(&mut self, band: u16, col: u32, row: u32, value: f64) {
        let i = self.index(band, col, row);
        self.data[i] = value;
    }

    /// Whether a value equals the NoData sentinel (exact comparison).
    pub fn is_nodata_value(&self, value: f64) -> bool {
        self.nodata == Some(value)
    }

    pub fn is_nodata_at(&self, band: u16, col: u32, row: u32) -> bool {
        self.is_nodata_value(self.get(band, col, row))
    }

    /// Immutable view of one band's row-major plane.
    pub fn band(&self, band: u16) -> Result<&[f64], RasterError> {
        if band >= self.bands {
            return Err(RasterError::BandOutOfRange {
                band,
                bands: self.bands,
            });
        }
        let n = self.plane_len();
        let start = band as usize * n;
        Ok(&self.data[start..start + n])
    }

    pub fn band_mut(&mut self, band: u16) -> Result<&mut [f64], RasterError> {
        if band >= self.bands {
            return Err(RasterError::BandOutOfRange {
                band,
                bands: self.bands,
            });
        }
        let n = self.plane_len();
        let start = band as usize * n;
        Ok(&mut self.data[start..start + n])
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// True when another grid shares dimensions and transform, i.e. the two
    /// are pixel-aligned.
    pub fn same_layout(&self, other: &RasterGrid) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.transform == other.transform
    }
}

/// Row-major boolean mask over a grid's pixel lattice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    fn index(&self, col: u32, row: u32) -> usize {
        debug_assert!(col < self.width && row < self.height);
        row as usize * self.width as usize + col as usize
    }

    pub fn get(&self, col: u32, row: u32) -> bool {
        self.bits[self.index(col, row)]
    }

    pub fn set(&mut self, col: u32, row: u32, value: bool) {
        let i = self.index(col, row);
        self.bits[i] = value;
    }

    pub fn count_true(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// True when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self
                .bits
                .iter()
                .zip(&other.bits)
                .all(|(&a, &b)| !a || b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt() -> GeoTransform {
        GeoTransform::new(74.0, 31.5, 0.001, -0.001).unwrap()
    }

    #[test]
    fn grid_get_set_band_planes() {
        let mut g = RasterGrid::filled(4, 3, 2, 0.0, gt()).unwrap();
        g.set(0, 1, 2, 5.0);
        g.set(1, 1, 2, 7.0);
        assert_eq!(g.get(0, 1, 2), 5.0);
        assert_eq!(g.get(1, 1, 2), 7.0);
        // Band planes are independent.
        assert_eq!(g.band(0).unwrap().iter().sum::<f64>(), 5.0);
        assert_eq!(g.band(1).unwrap().iter().sum::<f64>(), 7.0);
    }

    #[test]
    fn zero_dimensions_rejected() {
        assert!(RasterGrid::filled(0, 3, 1, 0.0, gt()).is_err());
        assert!(RasterGrid::filled(3, 0, 1, 0.0, gt()).is_err());
        assert!(RasterGrid::filled(3, 3, 0, 0.0, gt()).is_err());
    }

    #[test]
    fn data_length_validated() {
        let r = RasterGrid::from_data(2, 2, 1, vec![0.0; 3], gt());
        assert!(matches!(
            r,
            Err(RasterError::DataLengthMismatch { got: 3, want: 4 })
        ));
    }

    #[test]
    fn nodata_sentinel_is_exact() {
        let mut g = RasterGrid::filled(2, 2, 1, 0.0, gt()).unwrap();
        g.nodata = Some(-9999.0);
        g.set(0, 0, 0, -9999.0);
        assert!(g.is_nodata_at(0, 0, 0));
        g.set(0, 0, 0, -9998.999999);
        assert!(!g.is_nodata_at(0, 0, 0));
    }

    #[test]
    fn mask_subset() {
        let mut a = BinaryMask::new(3, 3);
        let mut b = BinaryMask::new(3, 3);
        a.set(1, 1, true);
        b.set(1, 1, true);
        b.set(2, 2, true);
        assert!(a.is_subset_of(&b));
        assert!(!b.is_subset_of(&a));
    }
}
