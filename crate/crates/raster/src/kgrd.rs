//! The KGRD binary grid format.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "KGRD"
//!      4     2  u16 version (currently 1)
//!      6     4  u32 width
//!     10     4  u32 height
//!     14     2  u16 bands
//!     16     1  u8  dtype code (1 = f32, 2 = f64)
//!     17     1  u8  nodata-present flag
//!     18     8  f64 nodata value (zero when absent)
//!     26    48  six f64 geotransform fields
//!     74     -  band-sequential samples, row-major within each band
//! ```
//!
//! The six geotransform fields follow the conventional affine ordering
//! (origin_lon, pixel_width, row_rotation, origin_lat, col_rotation,
//! pixel_height); the rotation terms must be zero — only axis-aligned lon/lat
//! grids exist in this toolkit. The origin refers to the center of pixel
//! (0, 0).

use crate::{Dtype, RasterError, RasterGrid};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use kiln_geo::GeoTransform;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"KGRD";
const VERSION: u16 = 1;
const HEADER_LEN: u64 = 74;

/// Write a grid to a KGRD file. Samples are narrowed to f32 when the grid's
/// dtype says so; otherwise stored as f64 bit patterns.
pub fn write_grid(grid: &RasterGrid, path: &Path) -> Result<(), RasterError> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);

    w.write_all(MAGIC)?;
    w.write_u16::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(grid.width())?;
    w.write_u32::<LittleEndian>(grid.height())?;
    w.write_u16::<LittleEndian>(grid.bands())?;
    w.write_u8(grid.dtype.code())?;
    w.write_u8(grid.nodata.is_some() as u8)?;
    w.write_f64::<LittleEndian>(grid.nodata.unwrap_or(0.0))?;

    let t = grid.transform;
    for v in [
        t.origin_lon,
        t.pixel_width,
        0.0,
        t.origin_lat,
        0.0,
        t.pixel_height,
    ] {
        w.write_f64::<LittleEndian>(v)?;
    }

    match grid.dtype {
        Dtype::F32 => {
            for &v in grid.data() {
                w.write_f32::<LittleEndian>(v as f32)?;
            }
        }
        Dtype::F64 => {
            for &v in grid.data() {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a KGRD file back into a grid.
pub fn read_grid(path: &Path) -> Result<RasterGrid, RasterError> {
    let file = File::open(path)?;
    let file_len = file.metadata()?.len();
    let mut r = BufReader::new(file);

    if file_len < HEADER_LEN {
        return Err(RasterError::TruncatedFile {
            expected: HEADER_LEN,
            got: file_len,
        });
    }

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(RasterError::BadMagic);
    }
    let version = r.read_u16::<LittleEndian>()?;
    if version != VERSION {
        return Err(RasterError::UnsupportedVersion(version));
    }
    let width = r.read_u32::<LittleEndian>()?;
    let height = r.read_u32::<LittleEndian>()?;
    let bands = r.read_u16::<LittleEndian>()?;
    let dtype = Dtype::from_code(r.read_u8()?)?;
    let nodata_present = r.read_u8()? != 0;
    let nodata_value = r.read_f64::<LittleEndian>()?;

    let mut gt = [0.0f64; 6];
    for v in gt.iter_mut() {
        *v = r.read_f64::<LittleEndian>()?;
    }
    if gt[2] != 0.0 || gt[4] != 0.0 {
        return Err(RasterError::RotatedTransform);
    }
    let transform = GeoTransform::new(gt[0], gt[3], gt[1], gt[5])?;

    if width == 0 || height == 0 || bands == 0 {
        return Err(RasterError::BadDimensions {
            width,
            height,
            bands,
        });
    }
    let n = width as usize * height as usize * bands as usize;
    let sample_bytes = match dtype {
        Dtype::F32 => 4u64,
        Dtype::F64 => 8u64,
    };
    let expected = HEADER_LEN + n as u64 * sample_bytes;
    if file_len < expected {
        return Err(RasterError::TruncatedFile {
            expected,
            got: file_len,
        });
    }
    if file_len > expected {
        return Err(RasterError::TrailingBytes);
    }

    let mut data = Vec::with_capacity(n);
    match dtype {
        Dtype::F32 => {
            for _ in 0..n {
                data.push(r.read_f32::<LittleEndian>()? as f64);
            }
        }
        Dtype::F64 => {
            for _ in 0..n {
                data.push(r.read_f64::<LittleEndian>()?);
            }
        }
    }

    let mut grid = RasterGrid::from_data(width, height, bands, data, transform)?;
    grid.dtype = dtype;
    grid.nodata = nodata_present.then_some(nodata_value);
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt() -> GeoTransform {
        GeoTransform::new(74.0, 31.5, 0.001, -0.001).unwrap()
    }

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("kgrd-unit-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn round_trip_3x3_bitwise() {
        let mut g = RasterGrid::filled(3, 3, 1, 0.0, gt()).unwrap();
        for row in 0..3 {
            for col in 0..3 {
                g.set(0, col, row, (row * 3 + col) as f64 * 0.125 - 0.5);
            }
        }
        g.nodata = Some(-9999.0);
        g.set(0, 2, 2, -9999.0);

        let path = tmp("roundtrip_3x3.kgrd");
        write_grid(&g, &path).unwrap();
        let back = read_grid(&path).unwrap();
        assert_eq!(g, back);
        assert!(back.is_nodata_at(0, 2, 2));
    }

    #[test]
    fn round_trip_256x256x3_preserves_transform() {
        let mut g = RasterGrid::filled(256, 256, 3, 0.0, gt()).unwrap();
        for b in 0..3u16 {
            for i in 0..256u32 {
                g.set(b, i, i, b as f64 + i as f64 / 7.0);
            }
        }
        let path = tmp("roundtrip_256.kgrd");
        write_grid(&g, &path).unwrap();
        let back = read_grid(&path).unwrap();
        assert_eq!(back.transform, g.transform);
        assert_eq!(back, g);
    }

    #[test]
    fn f32_storage_round_trips_f32_values() {
        let mut g = RasterGrid::filled(2, 2, 1, 0.0, gt()).unwrap();
        g.dtype = Dtype::F32;
        // Values chosen representable in f32.
        g.set(0, 0, 0, 0.5);
        g.set(0, 1, 0, -3.25);
        g.set(0, 0, 1, 1024.0);
        let path = tmp("roundtrip_f32.kgrd");
        write_grid(&g, &path).unwrap();
        let back = read_grid(&path).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn short_file_is_truncated() {
        let path = tmp("short.kgrd");
        std::fs::write(&path, b"KGRD\x01\x00").unwrap();
        assert!(matches!(
            read_grid(&path),
            Err(RasterError::TruncatedFile { .. })
        ));
    }

    #[test]
    fn wrong_magic_rejected() {
        let path = tmp("notkgrd.kgrd");
        std::fs::write(&path, vec![0u8; 200]).unwrap();
        assert!(matches!(read_grid(&path), Err(RasterError::BadMagic)));
    }

    #[test]
    fn future_version_rejected() {
        let g = RasterGrid::filled(2, 2, 1, 1.0, gt()).unwrap();
        let path = tmp("version.kgrd");
        write_grid(&g, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 9;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_grid(&path),
            Err(RasterError::UnsupportedVersion(9))
        ));
    }

    #[test]
    fn truncated_samples_detected() {
        let g = RasterGrid::filled(4, 4, 1, 1.0, gt()).unwrap();
        let path = tmp("cut.kgrd");
        write_grid(&g, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(
            read_grid(&path),
            Err(RasterError::TruncatedFile { .. })
        ));
    }
}
