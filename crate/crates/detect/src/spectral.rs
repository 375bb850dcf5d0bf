//! Spectral index, temporal compositing, and histogram thresholding.

use kiln_raster::RasterGrid;

use crate::{DetectError, NdbkiStack, Result};

/// NoData sentinel written into index grids derived from rasters that carry a
/// NoData value. Far outside the index's [-1, 1] range.
pub const NDBKI_NODATA: f64 = -9999.0;

/// Normalized Difference Brick Kiln Index: (R - max(G, B)) / (R + max(G, B))
/// per pixel, with a zero denominator mapping to 0 (black is not kiln).
/// NoData in any input band makes the output pixel NoData.
pub fn ndbki(rgb: &RasterGrid) -> Result<RasterGrid> {
    if rgb.bands() != 3 {
        return Err(DetectError::BandCountMismatch { got: rgb.bands() });
    }
    let mut out = RasterGrid::filled(rgb.width(), rgb.height(), 1, 0.0, rgb.transform)?;
    out.nodata = rgb.nodata.map(|_| NDBKI_NODATA);
    for row in 0..rgb.height() {
        for col in 0..rgb.width() {
            let r = rgb.get(0, col, row);
            let g = rgb.get(1, col, row);
            let b = rgb.get(2, col, row);
            let v = if rgb.is_nodata_value(r) || rgb.is_nodata_value(g) || rgb.is_nodata_value(b)
            {
                NDBKI_NODATA
            } else {
                let m = g.max(b);
                let denom = r + m;
                if denom == 0.0 {
                    0.0
                } else {
                    (r - m) / denom
                }
            };
            out.set(0, col, row, v);
        }
    }
    Ok(out)
}

/// Per-pixel nearest-rank percentile over the valid frames of the stack: the
/// value at 1-based index ceil(p/100 * n) of the sorted sample. A pixel is
/// NoData only when it is NoData in every frame.
pub fn percentile_composite(stack: &NdbkiStack, p: f64) -> Result<RasterGrid> {
    if !(p > 0.0 && p <= 100.0) {
        return Err(DetectError::BadPercentile(p));
    }
    let frames = stack.frames();
    let first = &frames[0];
    let mut out = RasterGrid::filled(first.width(), first.height(), 1, 0.0, first.transform)?;
    out.nodata = first.nodata;
    let mut sample = Vec::with_capacity(frames.len());
    for row in 0..first.height() {
        for col in 0..first.width() {
            sample.clear();
            for f in frames {
                let v = f.get(0, col, row);
                if !f.is_nodata_value(v) {
                    sample.push(v);
                }
            }
            let v = if sample.is_empty() {
                first.nodata.unwrap_or(0.0)
            } else {
                sample.sort_by(f64::total_cmp);
                let rank = ((p / 100.0) * sample.len() as f64).ceil() as usize;
                sample[rank.clamp(1, sample.len()) - 1]
            };
            out.set(0, col, row, v);
        }
    }
    Ok(out)
}

/// Counts and value sums per histogram bin, mergeable across tiles.
#[derive(Debug, Clone)]
pub(crate) struct Histogram {
    pub counts: Vec<u64>,
    pub sums: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

impl Histogram {
    pub fn empty(bins: usize, min: f64, max: f64) -> Self {
        Histogram {
            counts: vec![0; bins],
            sums: vec![0.0; bins],
            min,
            max,
        }
    }

    pub fn add(&mut self, v: f64) {
        let bins = self.counts.len();
        let width = (self.max - self.min) / bins as f64;
        let idx = (((v - self.min) / width) as usize).min(bins - 1);
        self.counts[idx] += 1;
        self.sums[idx] += v;
    }

    pub fn merge(&mut self, other: &Histogram) {
        for (c, oc) in self.counts.iter_mut().zip(&other.counts) {
            *c += oc;
        }
        for (s, os) in self.sums.iter_mut().zip(&other.sums) {
            *s += os;
        }
    }
}

/// Valid-value range of a grid, `None` when every pixel is NoData.
pub(crate) fn value_range(grid: &RasterGrid) -> Option<(f64, f64)> {
    let mut range: Option<(f64, f64)> = None;
    for row in 0..grid.height() {
        for col in 0..grid.width() {
            let v = grid.get(0, col, row);
            if grid.is_nodata_value(v) {
                continue;
            }
            range = Some(match range {
                None => (v, v),
                Some((lo, hi)) => (lo.min(v), hi.max(v)),
            });
        }
    }
    range
}

pub(crate) fn fill_histogram(hist: &mut Histogram, grid: &RasterGrid) {
    for row in 0..grid.height() {
        for col in 0..grid.width() {
            let v = grid.get(0, col, row);
            if !grid.is_nodata_value(v) {
                hist.add(v);
            }
        }
    }
}

/// Otsu's threshold from per-bin counts and sums: the bin edge maximizing the
/// between-class variance w0*w1*(mu0 - mu1)^2, ties resolved toward the
/// lowest edge. Class 0 holds bins below the edge.
pub(crate) fn otsu_from_histogram(hist: &Histogram) -> Result<f64> {
    let bins = hist.counts.len();
    let total: u64 = hist.counts.iter().sum();
    let total_sum: f64 = hist.sums.iter().sum();
    let nonempty = hist.counts.iter().filter(|&&c| c > 0).count();
    if total == 0 || nonempty < 2 {
        return Err(DetectError::DegenerateHistogram);
    }
    let width = (hist.max - hist.min) / bins as f64;

    let mut best_k = 0usize;
    let mut best_var = f64::NEG_INFINITY;
    let mut n0 = 0u64;
    let mut s0 = 0.0;
    for k in 1..bins {
        n0 += hist.counts[k - 1];
        s0 += hist.sums[k - 1];
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let mu0 = s0 / n0 as f64;
        let mu1 = (total_sum - s0) / n1 as f64;
        let w0 = n0 as f64 / total as f64;
        let w1 = n1 as f64 / total as f64;
        let var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if var > best_var {
            best_var = var;
            best_k = k;
        }
    }
    Ok(hist.min + best_k as f64 * width)
}

/// Otsu's method over one grid: a 256-bin (by default) equal-width histogram
/// spanning the grid's observed [min, max].
pub fn otsu_threshold(grid: &RasterGrid, bins: usize) -> Result<f64> {
    let (min, max) = value_range(grid).ok_or(DetectError::DegenerateHistogram)?;
    if min == max {
        return Err(DetectError::DegenerateHistogram);
    }
    let mut hist = Histogram::empty(bins, min, max);
    fill_histogram(&mut hist, grid);
    otsu_from_histogram(&hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use kiln_geo::GeoTransform;

    fn transform() -> GeoTransform {
        GeoTransform::new(74.0, 31.0, 0.001, -0.001).unwrap()
    }

    fn rgb_pixel(r: f64, g: f64, b: f64) -> RasterGrid {
        let mut grid = RasterGrid::filled(1, 1, 3, 0.0, transform()).unwrap();
        grid.set(0, 0, 0, r);
        grid.set(1, 0, 0, g);
        grid.set(2, 0, 0, b);
        grid
    }

    fn index_grid(values: &[f64], w: u32, h: u32) -> RasterGrid {
        let mut g = RasterGrid::filled(w, h, 1, 0.0, transform()).unwrap();
        for row in 0..h {
            for col in 0..w {
                g.set(0, col, row, values[(row * w + col) as usize]);
            }
        }
        g
    }

    #[test]
    fn gray_pixel_scores_zero() {
        let out = ndbki(&rgb_pixel(100.0, 100.0, 100.0)).unwrap();
        assert_eq!(out.get(0, 0, 0), 0.0);
    }

    #[test]
    fn red_pixel_matches_hand_arithmetic() {
        let out = ndbki(&rgb_pixel(100.0, 50.0, 40.0)).unwrap();
        assert_relative_eq!(out.get(0, 0, 0), 50.0 / 150.0, epsilon = 1e-15);
    }

    #[test]
    fn black_pixel_uses_zero_denominator_rule() {
        let out = ndbki(&rgb_pixel(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(out.get(0, 0, 0), 0.0);
    }

    #[test]
    fn nodata_band_propagates() {
        let mut grid = rgb_pixel(100.0, -1.0, 40.0);
        grid.nodata = Some(-1.0);
        let out = ndbki(&grid).unwrap();
        assert!(out.is_nodata_at(0, 0, 0));
        assert_eq!(out.nodata, Some(NDBKI_NODATA));
    }

    #[test]
    fn ndbki_stays_in_unit_interval() {
        for (r, g, b) in [(255.0, 0.0, 0.0), (0.0, 255.0, 10.0), (3.0, 200.0, 255.0)] {
            let v = ndbki(&rgb_pixel(r, g, b)).unwrap().get(0, 0, 0);
            assert!((-1.0..=1.0).contains(&v), "{v} out of range");
        }
    }

    #[test]
    fn two_band_grid_is_rejected() {
        let grid = RasterGrid::filled(1, 1, 2, 0.0, transform()).unwrap();
        assert!(matches!(
            ndbki(&grid),
            Err(DetectError::BandCountMismatch { got: 2 })
        ));
    }

    #[test]
    fn constant_stack_composites_to_the_constant() {
        let frames: Vec<RasterGrid> = (0..4)
            .map(|_| index_grid(&[0.25, 0.25], 2, 1))
            .collect();
        let out = percentile_composite(&NdbkiStack::new(frames).unwrap(), 80.0).unwrap();
        assert_eq!(out.get(0, 0, 0), 0.25);
        assert_eq!(out.get(0, 1, 0), 0.25);
    }

    #[test]
    fn percentile_80_of_1_to_10_is_8() {
        let frames: Vec<RasterGrid> =
            (1..=10).map(|v| index_grid(&[v as f64], 1, 1)).collect();
        let out = percentile_composite(&NdbkiStack::new(frames).unwrap(), 80.0).unwrap();
        assert_eq!(out.get(0, 0, 0), 8.0);
    }

    #[test]
    fn percentile_skips_nodata_frames() {
        let mut frames = vec![
            index_grid(&[5.0], 1, 1),
            index_grid(&[-1.0], 1, 1),
            index_grid(&[3.0], 1, 1),
        ];
        for f in &mut frames {
            f.nodata = Some(-1.0);
        }
        let out = percentile_composite(&NdbkiStack::new(frames).unwrap(), 80.0).unwrap();
        assert_eq!(out.get(0, 0, 0), 5.0);
    }

    #[test]
    fn all_nodata_pixel_stays_nodata() {
        let mut f = index_grid(&[-1.0], 1, 1);
        f.nodata = Some(-1.0);
        let out = percentile_composite(&NdbkiStack::new(vec![f]).unwrap(), 80.0).unwrap();
        assert!(out.is_nodata_at(0, 0, 0));
    }

    #[test]
    fn extreme_percentiles_are_min_and_max() {
        let frames: Vec<RasterGrid> = [4.0, -2.0, 9.0, 1.0]
            .iter()
            .map(|&v| index_grid(&[v], 1, 1))
            .collect();
        let stack = NdbkiStack::new(frames).unwrap();
        assert_eq!(percentile_composite(&stack, 100.0).unwrap().get(0, 0, 0), 9.0);
        assert_eq!(percentile_composite(&stack, 1e-9).unwrap().get(0, 0, 0), -2.0);
    }

    #[test]
    fn out_of_range_percentile_is_rejected() {
        let stack = NdbkiStack::new(vec![index_grid(&[1.0], 1, 1)]).unwrap();
        assert!(matches!(
            percentile_composite(&stack, 0.0),
            Err(DetectError::BadPercentile(_))
        ));
        assert!(matches!(
            percentile_composite(&stack, 101.0),
            Err(DetectError::BadPercentile(_))
        ));
    }

    #[test]
    fn half_and_half_grid_is_split_exactly() {
        let mut values = vec![0.0; 32];
        for v in values.iter_mut().skip(16) {
            *v = 1.0;
        }
        let t = otsu_threshold(&index_grid(&values, 8, 4), 256).unwrap();
        assert!(t > 0.0 && t <= 1.0, "threshold {t}");
        let below = values.iter().filter(|&&v| v <= t).count();
        assert_eq!(below, 16);
    }

    #[test]
    fn constant_grid_is_degenerate() {
        let g = index_grid(&[0.7; 9], 3, 3);
        assert!(matches!(
            otsu_threshold(&g, 256),
            Err(DetectError::DegenerateHistogram)
        ));
    }

    fn bimodal_values(seed: u64) -> Vec<f64> {
        use rand::distributions::Distribution;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let unit = rand::distributions::Uniform::new(f64::MIN_POSITIVE, 1.0);
        // Box-Muller standard normals.
        let mut normal = |mu: f64, sigma: f64| {
            let u1: f64 = unit.sample(&mut rng);
            let u2: f64 = unit.sample(&mut rng);
            mu + sigma * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        };
        let n = 10_000;
        let mut values = Vec::with_capacity(2 * n);
        for _ in 0..n {
            values.push(normal(0.2, 0.05));
        }
        for _ in 0..n {
            values.push(normal(0.8, 0.05));
        }
        values
    }

    #[test]
    fn bimodal_gaussians_threshold_lands_between_modes() {
        let g = index_grid(&bimodal_values(42), 200, 100);
        let t = otsu_threshold(&g, 256).unwrap();
        assert!((0.4..=0.6).contains(&t), "threshold {t}");
    }

    #[test]
    fn bimodal_threshold_matches_exhaustive_search() {
        let values = bimodal_values(7);
        let g = index_grid(&values, 200, 100);
        let t = otsu_threshold(&g, 64).unwrap();
        // Recompute by brute force over every candidate edge.
        let (min, max) = value_range(&g).unwrap();
        let width = (max - min) / 64.0;
        let mut best = (f64::NEG_INFINITY, 0usize);
        for k in 1..64usize {
            let (mut n0, mut s0, mut n1, mut s1) = (0u64, 0.0f64, 0u64, 0.0f64);
            for &v in &values {
                let bin = (((v - min) / width) as usize).min(63);
                if bin < k {
                    n0 += 1;
                    s0 += v;
                } else {
                    n1 += 1;
                    s1 += v;
                }
            }
            if n0 == 0 || n1 == 0 {
                continue;
            }
            let total = (n0 + n1) as f64;
            let (w0, w1) = (n0 as f64 / total, n1 as f64 / total);
            let var = w0 * w1 * (s0 / n0 as f64 - s1 / n1 as f64).powi(2);
            if var > best.0 {
                best = (var, k);
            }
        }
        assert_eq!(t, min + best.1 as f64 * width);
    }
}
