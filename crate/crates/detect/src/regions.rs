//! Region extraction, filtering, and polygon tracing.

use std::collections::{HashMap, HashSet, VecDeque};

use kiln_geo::GeoTransform;
use kiln_raster::{BinaryMask, RasterGrid};

use crate::DetectionRegion;

/// Label the mask's 8-connected components. Regions come back ordered by
/// (min row, min col) of their pixel sets, labeled from 1; polygon and score
/// are left for later stages.
pub fn connected_components(mask: &BinaryMask) -> Vec<DetectionRegion> {
    let (w, h) = (mask.width(), mask.height());
    let mut visited = BinaryMask::new(w, h);
    let mut components: Vec<Vec<(u32, u32)>> = Vec::new();
    let mut queue = VecDeque::new();
    for row in 0..h {
        for col in 0..w {
            if !mask.get(col, row) || visited.get(col, row) {
                continue;
            }
            let mut pixels = Vec::new();
            visited.set(col, row, true);
            queue.push_back((col, row));
            while let Some((c, r)) = queue.pop_front() {
                pixels.push((c, r));
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let (nc, nr) = (c as i64 + dc, r as i64 + dr);
                        if nc < 0 || nr < 0 || nc >= w as i64 || nr >= h as i64 {
                            continue;
                        }
                        let (nc, nr) = (nc as u32, nr as u32);
                        if mask.get(nc, nr) && !visited.get(nc, nr) {
                            visited.set(nc, nr, true);
                            queue.push_back((nc, nr));
                        }
                    }
                }
            }
            pixels.sort_unstable_by_key(|&(c, r)| (r, c));
            components.push(pixels);
        }
    }
    components.sort_by_key(|px| {
        let min_row = px.iter().map(|&(_, r)| r).min().unwrap();
        let min_col = px.iter().map(|&(c, _)| c).min().unwrap();
        (min_row, min_col)
    });
    components
        .into_iter()
        .enumerate()
        .map(|(i, pixels)| {
            let min_col = pixels.iter().map(|&(c, _)| c).min().unwrap();
            let max_col = pixels.iter().map(|&(c, _)| c).max().unwrap();
            let min_row = pixels.iter().map(|&(_, r)| r).min().unwrap();
            let max_row = pixels.iter().map(|&(_, r)| r).max().unwrap();
            DetectionRegion {
                label_id: i as u32 + 1,
                pixels,
                polygon: Vec::new(),
                bbox: [
                    min_col as f64,
                    min_row as f64,
                    max_col as f64 + 1.0,
                    max_row as f64 + 1.0,
                ],
                score: 0.0,
            }
        })
        .collect()
}

/// Mean composite value over the region's pixels (NoData pixels excluded;
/// 0 when nothing is valid).
pub fn region_score(region: &DetectionRegion, composite: &RasterGrid) -> f64 {
    let mut sum = 0.0;
    let mut count = 0u64;
    for &(c, r) in &region.pixels {
        let v = composite.get(0, c, r);
        if !composite.is_nodata_value(v) {
            sum += v;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Keep/reject by built-environment evidence: building pixels are heights
/// above 0.5 m; the region is rejected when strictly more than 10% of them
/// exceed 3 m. No buildings means keep.
pub fn height_filter(region: &DetectionRegion, heights: &RasterGrid, region_transform: &GeoTransform) -> bool {
    let mut buildings = 0u64;
    let mut tall = 0u64;
    for &(c, r) in &region.pixels {
        let (lon, lat) = region_transform.pixel_to_geo(c as i64, r as i64);
        let (hc, hr) = heights.transform.geo_to_pixel(lon, lat);
        if hc < 0 || hr < 0 || hc >= heights.width() as i64 || hr >= heights.height() as i64 {
            continue;
        }
        let h = heights.get(0, hc as u32, hr as u32);
        if heights.is_nodata_value(h) {
            continue;
        }
        if h > 0.5 {
            buildings += 1;
            if h > 3.0 {
                tall += 1;
            }
        }
    }
    if buildings == 0 {
        return true;
    }
    // Strict inequality: exactly 10% tall still passes.
    tall * 10 <= buildings
}

/// Trace the region's boundary into closed lon/lat rings: one outer ring
/// wound counterclockwise, holes wound clockwise. Vertices sit on pixel
/// corners (pixel centers are at integer coordinates, so corners lie at
/// half-integers); collinear runs are merged, and each ring starts at its
/// lexicographically smallest corner.
pub fn vectorize(region: &DetectionRegion, transform: &GeoTransform) -> Vec<Vec<(f64, f64)>> {
    let set: HashSet<(i64, i64)> = region
        .pixels
        .iter()
        .map(|&(c, r)| (c as i64, r as i64))
        .collect();

    // Directed boundary edges between corner-grid points; corner (i, j) sits
    // at pixel coordinate (i - 0.5, j - 0.5).
    let mut edges: HashMap<(i64, i64), Vec<(i64, i64)>> = HashMap::new();
    let mut push = |from: (i64, i64), to: (i64, i64)| {
        edges.entry(from).or_default().push(to);
    };
    let mut starts: Vec<(i64, i64)> = Vec::new();
    for &(c, r) in &set {
        if !set.contains(&(c, r - 1)) {
            push((c, r), (c + 1, r));
            starts.push((c, r));
        }
        if !set.contains(&(c + 1, r)) {
            push((c + 1, r), (c + 1, r + 1));
        }
        if !set.contains(&(c, r + 1)) {
            push((c + 1, r + 1), (c, r + 1));
        }
        if !set.contains(&(c - 1, r)) {
            push((c, r + 1), (c, r));
        }
    }
    for outs in edges.values_mut() {
        outs.sort_unstable();
    }
    starts.sort_unstable();

    let mut rings_px: Vec<Vec<(i64, i64)>> = Vec::new();
    for start in starts {
        // The edge may have been consumed by an earlier loop.
        let first = match edges.get_mut(&start).and_then(|v| v.pop()) {
            Some(next) => next,
            None => continue,
        };
        let mut ring = vec![start, first];
        let mut prev = start;
        loop {
            let at = *ring.last().unwrap();
            if at == start {
                ring.pop();
                break;
            }
            let outs = edges.get_mut(&at).expect("boundary edges form closed loops");
            // At a pinch corner several continuations exist; turning
            // sharpest-left relative to the incoming direction keeps the
            // trace on its own contour. Directions are axis-aligned units.
            let dir = (at.0 - prev.0, at.1 - prev.1);
            let left = (dir.1, -dir.0);
            let right = (-dir.1, dir.0);
            let pick = [left, dir, right]
                .iter()
                .filter_map(|d| {
                    let target = (at.0 + d.0, at.1 + d.1);
                    outs.iter().position(|&t| t == target)
                })
                .next()
                .expect("every entered corner has a continuation");
            let next = outs.remove(pick);
            prev = at;
            ring.push(next);
        }
        rings_px.push(ring);
    }

    // Classify before merging collinear runs: with the emission rule above,
    // outer contours carry positive pixel-space signed area, holes negative.
    let mut outer: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut holes: Vec<Vec<(f64, f64)>> = Vec::new();
    for ring in rings_px {
        let n = ring.len();
        let px_area: i64 = (0..n)
            .map(|i| {
                let (x0, y0) = ring[i];
                let (x1, y1) = ring[(i + 1) % n];
                x0 * y1 - x1 * y0
            })
            .sum();
        let mut simplified: Vec<(i64, i64)> = Vec::with_capacity(n);
        for i in 0..n {
            let prev = ring[(i + n - 1) % n];
            let here = ring[i];
            let next = ring[(i + 1) % n];
            let din = (here.0 - prev.0, here.1 - prev.1);
            let dout = (next.0 - here.0, next.1 - here.1);
            if din != dout {
                simplified.push(here);
            }
        }
        let smallest = (0..simplified.len())
            .min_by_key(|&i| simplified[i])
            .unwrap();
        simplified.rotate_left(smallest);

        let mut geo: Vec<(f64, f64)> = simplified
            .iter()
            .map(|&(i, j)| transform.pixel_to_geo_f(i as f64 - 0.5, j as f64 - 0.5))
            .collect();
        let geo_area: f64 = (0..geo.len())
            .map(|i| {
                let (x0, y0) = geo[i];
                let (x1, y1) = geo[(i + 1) % geo.len()];
                x0 * y1 - x1 * y0
            })
            .sum();
        let want_ccw = px_area > 0;
        if (geo_area > 0.0) != want_ccw {
            geo[1..].reverse();
        }
        geo.push(geo[0]);
        if want_ccw {
            outer.push(geo);
        } else {
            holes.push(geo);
        }
    }
    outer.extend(holes);
    outer
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mask_from(bits: &[u8], w: u32, h: u32) -> BinaryMask {
        let mut m = BinaryMask::new(w, h);
        for row in 0..h {
            for col in 0..w {
                if bits[(row * w + col) as usize] != 0 {
                    m.set(col, row, true);
                }
            }
        }
        m
    }

    fn unit_transform() -> GeoTransform {
        // One degree per pixel keeps hand arithmetic easy; north-up.
        GeoTransform::new(0.0, 0.0, 1.0, -1.0).unwrap()
    }

    fn heights_like(values: &[f64], w: u32, h: u32) -> RasterGrid {
        let mut g = RasterGrid::filled(w, h, 1, 0.0, unit_transform()).unwrap();
        for row in 0..h {
            for col in 0..w {
                g.set(0, col, row, values[(row * w + col) as usize]);
            }
        }
        g
    }

    #[test]
    fn empty_mask_has_no_components() {
        assert!(connected_components(&BinaryMask::new(4, 4)).is_empty());
    }

    #[test]
    fn diagonal_pixels_are_one_component() {
        let m = mask_from(&[1, 0, 0, 1], 2, 2);
        let regions = connected_components(&m);
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].pixels, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn checkerboard_is_one_component() {
        let m = mask_from(&[1, 0, 1, 0, 0, 1, 0, 1, 1, 0, 1, 0, 0, 1, 0, 1], 4, 4);
        assert_eq!(connected_components(&m).len(), 1);
    }

    #[test]
    fn regions_order_by_min_row_then_min_col_with_labels_from_one() {
        let m = mask_from(
            &[
                0, 0, 0, 0, 1, //
                0, 1, 0, 0, 0, //
                0, 0, 0, 0, 1, //
            ],
            5,
            3,
        );
        let regions = connected_components(&m);
        assert_eq!(regions.len(), 3);
        assert_eq!(regions[0].pixels, vec![(4, 0)]);
        assert_eq!(regions[1].pixels, vec![(1, 1)]);
        assert_eq!(regions[2].pixels, vec![(4, 2)]);
        assert_eq!(
            regions.iter().map(|r| r.label_id).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
    }

    #[test]
    fn bbox_is_half_open_and_tight() {
        let m = mask_from(&[0, 1, 1, 0, 1, 1, 0, 0, 0], 3, 3);
        let regions = connected_components(&m);
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].bbox, [1.0, 0.0, 3.0, 2.0]);
    }

    #[test]
    fn all_zero_heights_keep_region() {
        let m = mask_from(&[1, 1, 1, 1], 2, 2);
        let region = &connected_components(&m)[0];
        let h = heights_like(&[0.0; 4], 2, 2);
        assert!(height_filter(region, &h, &unit_transform()));
    }

    #[test]
    fn twenty_percent_tall_rejects() {
        // 10 building pixels (h = 1 m), 2 of them 5 m: ratio 0.2 > 0.1.
        let mut vals = vec![1.0; 10];
        vals[0] = 5.0;
        vals[1] = 5.0;
        vals.extend([0.0, 0.0]);
        let m = mask_from(&[1; 12], 4, 3);
        let region = &connected_components(&m)[0];
        let h = heights_like(&vals, 4, 3);
        assert!(!height_filter(region, &h, &unit_transform()));
    }

    #[test]
    fn exactly_ten_percent_tall_keeps() {
        let mut vals = vec![1.0; 10];
        vals[0] = 5.0;
        vals.extend([0.0, 0.0]);
        let m = mask_from(&[1; 12], 4, 3);
        let region = &connected_components(&m)[0];
        let h = heights_like(&vals, 4, 3);
        assert!(height_filter(region, &h, &unit_transform()));
    }

    #[test]
    fn score_is_mean_composite_over_pixels() {
        let m = mask_from(&[1, 1, 0, 0], 2, 2);
        let region = &connected_components(&m)[0];
        let grid = heights_like(&[0.2, 0.6, 9.0, 9.0], 2, 2);
        assert_relative_eq!(region_score(region, &grid), 0.4);
    }

    #[test]
    fn single_pixel_traces_five_vertex_square() {
        let m = mask_from(&[0, 0, 0, 0, 1, 0, 0, 0, 0], 3, 3);
        let region = &connected_components(&m)[0];
        let rings = vectorize(region, &unit_transform());
        assert_eq!(rings.len(), 1);
        let ring = &rings[0];
        assert_eq!(ring.len(), 5);
        assert_eq!(ring[0], ring[4]);
        // Pixel (1,1) spans corners 0.5..1.5 in both axes; lat = -row.
        let lons: Vec<f64> = ring.iter().map(|&(x, _)| x).collect();
        let lats: Vec<f64> = ring.iter().map(|&(_, y)| y).collect();
        assert_relative_eq!(lons.iter().cloned().fold(f64::INFINITY, f64::min), 0.5);
        assert_relative_eq!(lons.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.5);
        assert_relative_eq!(lats.iter().cloned().fold(f64::INFINITY, f64::min), -1.5);
        assert_relative_eq!(lats.iter().cloned().fold(f64::NEG_INFINITY, f64::max), -0.5);
        // Counterclockwise in lon/lat.
        let area: f64 = (0..4)
            .map(|i| ring[i].0 * ring[i + 1].1 - ring[i + 1].0 * ring[i].1)
            .sum();
        assert!(area > 0.0, "outer ring must be CCW, signed area {area}");
    }

    #[test]
    fn two_by_two_block_traces_doubled_square() {
        let m = mask_from(&[1, 1, 1, 1], 2, 2);
        let region = &connected_components(&m)[0];
        let rings = vectorize(region, &unit_transform());
        assert_eq!(rings.len(), 1);
        assert_eq!(rings[0].len(), 5);
        let lons: Vec<f64> = rings[0].iter().map(|&(x, _)| x).collect();
        assert_relative_eq!(lons.iter().cloned().fold(f64::INFINITY, f64::min), -0.5);
        assert_relative_eq!(lons.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.5);
    }

    #[test]
    fn ring_block_emits_outer_ring_and_hole() {
        let m = mask_from(&[1, 1, 1, 1, 0, 1, 1, 1, 1], 3, 3);
        let region = &connected_components(&m)[0];
        let rings = vectorize(region, &unit_transform());
        assert_eq!(rings.len(), 2);
        assert_eq!(rings[0].len(), 5);
        assert_eq!(rings[1].len(), 5);
        let signed = |ring: &[(f64, f64)]| -> f64 {
            (0..ring.len() - 1)
                .map(|i| ring[i].0 * ring[i + 1].1 - ring[i + 1].0 * ring[i].1)
                .sum()
        };
        assert!(signed(&rings[0]) > 0.0, "outer CCW");
        assert!(signed(&rings[1]) < 0.0, "hole CW");
        // The hole is the unit square around the missing center pixel (1,1).
        let lons: Vec<f64> = rings[1].iter().map(|&(x, _)| x).collect();
        assert_relative_eq!(lons.iter().cloned().fold(f64::INFINITY, f64::min), 0.5);
        assert_relative_eq!(lons.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.5);
    }

    #[test]
    fn l_shape_merges_collinear_vertices() {
        let m = mask_from(&[1, 0, 1, 0, 1, 1], 2, 3);
        let region = &connected_components(&m)[0];
        let rings = vectorize(region, &unit_transform());
        assert_eq!(rings.len(), 1);
        // An L of three pixels has six corners: 6 + closing vertex.
        assert_eq!(rings[0].len(), 7);
    }
}
