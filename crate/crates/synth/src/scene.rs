//! Raster-scene synthesis: red kiln disks over a noisy green background,
//! optional tall distractor roofs, a co-registered height grid, and exact
//! per-kiln ground truth.

use std::path::Path;

use kiln_geo::GeoTransform;
use kiln_raster::geojson::{write_geojson, VectorFeature};
use kiln_raster::kgrd::write_grid;
use kiln_raster::tile::{write_rgb_tile, DEFAULT_TILE_SIZE};
use kiln_raster::RasterGrid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Result, SceneSpec, SynthError, SynthSpec};

/// Fixed geo anchor for synthetic scenes; pixel (0, 0) centers here.
const SCENE_ORIGIN: (f64, f64) = (74.0, 31.5);
/// Degrees per pixel (negative height: rows run southward).
const PIXEL_SIZE: f64 = 1e-4;

/// Extra clearance (pixels) between an object's extent and any tile edge,
/// and half the extra gap enforced between objects. Sized to exceed the
/// default closing radius so morphology can neither bridge two objects nor
/// push one across a tile boundary.
const EDGE_CLEARANCE: u32 = 6;

/// Rejection-sampling attempts per requested object before giving up.
const ATTEMPTS_PER_OBJECT: usize = 1000;

/// Height (meters) painted under distractor roofs; anything over 3 m reads
/// as tall construction downstream.
const ROOF_HEIGHT_M: f64 = 6.0;

/// One planted kiln: pixel placement plus its exact geo bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct KilnTruth {
    pub center_px: (u32, u32),
    pub radius_px: u32,
    /// Disk pixel count.
    pub area_px: u64,
    /// [min_lon, min_lat, max_lon, max_lat] of the disk's pixel extent.
    pub bbox_geo: [f64; 4],
    /// Closed counterclockwise ring of the bounding box.
    pub ring_geo: Vec<(f64, f64)>,
}

/// One spatial tile of the scene with its full time series.
#[derive(Debug, Clone)]
pub struct SceneTile {
    /// Row-major grid name, e.g. `tile_r00_c01`; sorts in scan order.
    pub name: String,
    /// One 3-band RGB grid per frame.
    pub frames: Vec<RasterGrid>,
}

/// A generated scene: tiles in scan order, a scene-wide height grid, and the
/// planted-kiln ground truth (distractors are deliberately absent from it).
#[derive(Debug, Clone)]
pub struct RasterScene {
    pub tiles: Vec<SceneTile>,
    pub heights: RasterGrid,
    pub truth: Vec<KilnTruth>,
}

#[derive(Clone, Copy)]
struct Placed {
    col: u32,
    row: u32,
    /// Half-extent: disk radius for kilns, half-side for square roofs.
    radius: u32,
    is_kiln: bool,
}

fn validate(scene: &SceneSpec) -> Result<()> {
    if scene.width == 0 || scene.height == 0 {
        return Err(SynthError::BadSpec("scene dimensions must be positive".into()));
    }
    if scene.frames == 0 {
        return Err(SynthError::BadSpec("frames must be >= 1".into()));
    }
    if scene.kiln_radius_px == 0 {
        return Err(SynthError::BadSpec("kiln_radius_px must be >= 1".into()));
    }
    if !(scene.activity_probability > 0.0 && scene.activity_probability <= 1.0) {
        return Err(SynthError::BadSpec(format!(
            "activity_probability must be in (0, 1], got {}",
            scene.activity_probability
        )));
    }
    if !(scene.noise_amplitude >= 0.0 && scene.noise_amplitude.is_finite()) {
        return Err(SynthError::BadSpec("noise_amplitude must be finite and >= 0".into()));
    }
    for &v in scene.background_rgb.iter().chain(scene.kiln_rgb.iter()) {
        if !(0.0..=255.0).contains(&v) {
            return Err(SynthError::BadSpec(format!(
                "channel values must lie in [0, 255], got {v}"
            )));
        }
    }
    Ok(())
}

/// True when the interval `[center - reach, center + reach]` stays inside one
/// tile of the scan grid and inside the scene.
fn clear_of_boundaries(center: u32, reach: u32, extent: u32) -> bool {
    let c = i64::from(center);
    let r = i64::from(reach);
    if c - r < 0 || c + r >= i64::from(extent) {
        return false;
    }
    let tile = i64::from(DEFAULT_TILE_SIZE);
    (c - r) / tile == (c + r) / tile
}

fn place_objects(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Placed>> {
    let requested = spec.kiln_count + spec.distractor_count;
    let mut placed: Vec<Placed> = Vec::with_capacity(requested);
    let mut attempts = requested * ATTEMPTS_PER_OBJECT;
    for index in 0..requested {
        let is_kiln = index < spec.kiln_count;
        let radius = spec.kiln_radius_px;
        let reach = radius + EDGE_CLEARANCE;
        loop {
            if attempts == 0 {
                return Err(SynthError::PlacementFailure {
                    placed: placed.len(),
                    requested,
                });
            }
            attempts -= 1;
            let col = rng.gen_range(0..spec.width);
            let row = rng.gen_range(0..spec.height);
            if !clear_of_boundaries(col, reach, spec.width)
                || !clear_of_boundaries(row, reach, spec.height)
            {
                continue;
            }
            let far_enough = placed.iter().all(|p| {
                let dc = f64::from(col) - f64::from(p.col);
                let dr = f64::from(row) - f64::from(p.row);
                let min_sep = f64::from(radius + p.radius + 2 * EDGE_CLEARANCE);
                dc * dc + dr * dr >= min_sep * min_sep
            });
            if far_enough {
                placed.push(Placed {
                    col,
                    row,
                    radius,
                    is_kiln,
                });
                break;
            }
        }
    }
    Ok(placed)
}

fn paint_disk(grid: &mut RasterGrid, p: Placed, rgb: [f64; 3]) {
    let (cx, cy, r) = (i64::from(p.col), i64::from(p.row), i64::from(p.radius));
    for row in cy - r..=cy + r {
        for col in cx - r..=cx + r {
            let (dc, dr) = (col - cx, row - cy);
            if dc * dc + dr * dr <= r * r {
                for (band, &v) in rgb.iter().enumerate() {
                    grid.set(band as u16, col as u32, row as u32, v);
                }
            }
        }
    }
}

fn paint_square(grid: &mut RasterGrid, p: Placed, rgb: [f64; 3]) {
    let (cx, cy, r) = (i64::from(p.col), i64::from(p.row), i64::from(p.radius));
    for row in cy - r..=cy + r {
        for col in cx - r..=cx + r {
            for (band, &v) in rgb.iter().enumerate() {
                grid.set(band as u16, col as u32, row as u32, v);
            }
        }
    }
}

fn disk_truth(p: Placed, transform: &GeoTransform) -> KilnTruth {
    let r = i64::from(p.radius);
    let mut area = 0u64;
    for row in -r..=r {
        for col in -r..=r {
            if col * col + row * row <= r * r {
                area += 1;
            }
        }
    }
    let (min_col, max_col) = (f64::from(p.col) - f64::from(p.radius), f64::from(p.col) + f64::from(p.radius));
    let (min_row, max_row) = (f64::from(p.row) - f64::from(p.radius), f64::from(p.row) + f64::from(p.radius));
    // Pixel centers sit at integer coordinates, so the box spans the outer
    // half-pixel corners; rows run southward, flipping latitude order.
    let (x0, y_north) = transform.pixel_to_geo_f(min_col - 0.5, min_row - 0.5);
    let (x1, y_south) = transform.pixel_to_geo_f(max_col + 0.5, max_row + 0.5);
    let (min_lat, max_lat) = (y_south.min(y_north), y_south.max(y_north));
    KilnTruth {
        center_px: (p.col, p.row),
        radius_px: p.radius,
        area_px: area,
        bbox_geo: [x0, min_lat, x1, max_lat],
        ring_geo: vec![
            (x0, min_lat),
            (x1, min_lat),
            (x1, max_lat),
            (x0, max_lat),
            (x0, min_lat),
        ],
    }
}

fn crop(grid: &RasterGrid, c0: u32, r0: u32, w: u32, h: u32) -> Result<RasterGrid> {
    let bands = grid.bands();
    let mut data = Vec::with_capacity(w as usize * h as usize * usize::from(bands));
    for band in 0..bands {
        for row in r0..r0 + h {
            for col in c0..c0 + w {
                data.push(grid.get(band, col, row));
            }
        }
    }
    let (lon, lat) = grid.transform.pixel_to_geo(i64::from(c0), i64::from(r0));
    let t = GeoTransform::new(lon, lat, grid.transform.pixel_width, grid.transform.pixel_height)?;
    Ok(RasterGrid::from_data(w, h, bands, data, t)?)
}

/// Generate the full scene from `spec.seed` and `spec.scene`.
///
/// Randomness is consumed in a fixed order — kiln placements, distractor
/// placements, the kiln-by-frame activity table, then per-frame background
/// noise in row-major, channel-minor order — so every output is a pure
/// function of the spec. Kilns appear in a frame only when active;
/// distractor roofs appear in every frame and carry tall heights. All
/// channel values are rounded to integers so the written 8-bit tiles read
/// back bit-identical to the in-memory grids.
pub fn gen_raster_scene(spec: &SynthSpec) -> Result<RasterScene> {
    let scene = &spec.scene;
    validate(scene)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let transform = GeoTransform::new(SCENE_ORIGIN.0, SCENE_ORIGIN.1, PIXEL_SIZE, -PIXEL_SIZE)?;

    let placed = place_objects(scene, &mut rng)?;
    let kilns: Vec<Placed> = placed.iter().copied().filter(|p| p.is_kiln).collect();
    let roofs: Vec<Placed> = placed.iter().copied().filter(|p| !p.is_kiln).collect();

    let active: Vec<Vec<bool>> = kilns
        .iter()
        .map(|_| {
            (0..scene.frames)
                .map(|_| rng.gen_bool(scene.activity_probability))
                .collect()
        })
        .collect();

    let background: [f64; 3] = std::array::from_fn(|b| scene.background_rgb[b].round());
    let kiln_rgb: [f64; 3] = std::array::from_fn(|b| scene.kiln_rgb[b].round());

    let mut scene_frames: Vec<RasterGrid> = Vec::with_capacity(scene.frames);
    for frame in 0..scene.frames {
        let mut grid = RasterGrid::filled(scene.width, scene.height, 3, 0.0, transform)?;
        for row in 0..scene.height {
            for col in 0..scene.width {
                for (band, &base) in background.iter().enumerate() {
                    let jitter =
                        rng.gen_range(-scene.noise_amplitude..=scene.noise_amplitude);
                    grid.set(band as u16, col, row, (base + jitter).round().clamp(0.0, 255.0));
                }
            }
        }
        for (kiln, frames_active) in kilns.iter().zip(&active) {
            if frames_active[frame] {
                paint_disk(&mut grid, *kiln, kiln_rgb);
            }
        }
        for roof in &roofs {
            paint_square(&mut grid, *roof, kiln_rgb);
        }
        scene_frames.push(grid);
    }

    let mut heights = RasterGrid::filled(scene.width, scene.height, 1, 0.0, transform)?;
    for roof in &roofs {
        let (cx, cy, r) = (i64::from(roof.col), i64::from(roof.row), i64::from(roof.radius));
        for row in cy - r..=cy + r {
            for col in cx - r..=cx + r {
                heights.set(0, col as u32, row as u32, ROOF_HEIGHT_M);
            }
        }
    }

    let tiles_x = scene.width.div_ceil(DEFAULT_TILE_SIZE);
    let tiles_y = scene.height.div_ceil(DEFAULT_TILE_SIZE);
    let mut tiles = Vec::with_capacity(tiles_x as usize * tiles_y as usize);
    for ty in 0..tiles_y {
        for tx in 0..tiles_x {
            let c0 = tx * DEFAULT_TILE_SIZE;
            let r0 = ty * DEFAULT_TILE_SIZE;
            let w = DEFAULT_TILE_SIZE.min(scene.width - c0);
            let h = DEFAULT_TILE_SIZE.min(scene.height - r0);
            let frames = scene_frames
                .iter()
                .map(|g| crop(g, c0, r0, w, h))
                .collect::<Result<Vec<_>>>()?;
            tiles.push(SceneTile {
                name: format!("tile_r{ty:02}_c{tx:02}"),
                frames,
            });
        }
    }

    let truth = kilns.iter().map(|&k| disk_truth(k, &transform)).collect();
    Ok(RasterScene {
        tiles,
        heights,
        truth,
    })
}

/// Write ground-truth boxes as a GeoJSON FeatureCollection (score 1.0).
pub fn write_truth_geojson(kilns: &[KilnTruth], path: &Path) -> Result<()> {
    let features: Vec<VectorFeature> = kilns
        .iter()
        .map(|k| VectorFeature {
            rings: vec![k.ring_geo.clone()],
            area_px: k.area_px,
            score: 1.0,
        })
        .collect();
    write_geojson(&features, path)?;
    Ok(())
}

/// Lay a scene out on disk in the layout the detector consumes:
/// `frame_NN/<tile>.png` + georeferencing sidecars per frame directory,
/// `heights.kgrd`, and `truth.geojson` at the top level.
pub fn write_scene(scene: &RasterScene, dir: &Path) -> Result<()> {
    let frame_count = scene.tiles.first().map_or(0, |t| t.frames.len());
    for frame in 0..frame_count {
        let frame_dir = dir.join(format!("frame_{frame:02}"));
        std::fs::create_dir_all(&frame_dir)?;
        for tile in &scene.tiles {
            write_rgb_tile(
                &tile.frames[frame],
                &frame_dir.join(format!("{}.png", tile.name)),
                &frame_dir.join(format!("{}.json", tile.name)),
            )?;
        }
    }
    std::fs::create_dir_all(dir)?;
    write_grid(&scene.heights, &dir.join("heights.kgrd"))?;
    write_truth_geojson(&scene.truth, &dir.join("truth.geojson"))?;
    Ok(())
}
