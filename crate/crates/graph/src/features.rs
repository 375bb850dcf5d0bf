//! Raster feature sampling with buffered-mean imputation, and feature
//! standardization against stored statistics.

use kiln_geo::GeoPoint;
use kiln_raster::RasterGrid;
use serde::{Deserialize, Serialize};

use crate::PoiNode;

/// Sampled values for one node plus any fallback warnings raised on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    pub values: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Per-feature mean and population standard deviation, stored at training
/// time and reapplied verbatim at prediction time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Read one value per raster band at the node's pixel. A NoData hit falls
/// back to the mean of valid pixels in the (2*buffer+1)^2 window, then to the
/// valid mean of the whole band, then to 0 with a warning.
pub fn sample_features(node: &PoiNode, rasters: &[RasterGrid], buffer_px: u32) -> SampleOutcome {
    let mut values = Vec::new();
    let mut warnings = Vec::new();
    for (ri, raster) in rasters.iter().enumerate() {
        for band in 0..raster.bands() {
            let (v, warn) = band_value(raster, band, node.location, buffer_px);
            if warn {
                warnings.push(format!(
                    "node {}: raster {ri} band {band} has no valid pixels; using 0",
                    node.id
                ));
            }
            values.push(v);
        }
    }
    SampleOutcome { values, warnings }
}

/// Fill NaN-flagged feature cells from the rasters' bands, matching feature
/// position j to the j-th band across the raster list. Returns warnings for
/// cells that bottomed out at the 0 fallback.
pub fn impute_features(
    nodes: &mut [PoiNode],
    rasters: &[RasterGrid],
    buffer_px: u32,
) -> Vec<String> {
    let bands: Vec<(&RasterGrid, u16)> = rasters
        .iter()
        .flat_map(|r| (0..r.bands()).map(move |b| (r, b)))
        .collect();
    let mut warnings = Vec::new();
    for node in nodes.iter_mut() {
        let location = node.location;
        let id = node.id;
        for (j, cell) in node.features.iter_mut().enumerate() {
            if !cell.is_nan() {
                continue;
            }
            match bands.get(j) {
                Some(&(raster, band)) => {
                    let (v, warn) = band_value(raster, band, location, buffer_px);
                    *cell = v;
                    if warn {
                        warnings.push(format!(
                            "node {id}: feature {j} imputed from an all-NoData band; using 0"
                        ));
                    }
                }
                None => {
                    *cell = 0.0;
                    warnings.push(format!(
                        "node {id}: feature {j} has no matching raster band; using 0"
                    ));
                }
            }
        }
    }
    warnings
}

/// The per-band fallback chain. The boolean reports whether the final
/// 0-with-warning fallback fired.
fn band_value(raster: &RasterGrid, band: u16, location: GeoPoint, buffer_px: u32) -> (f64, bool) {
    let (col, row) = raster.transform.geo_to_pixel(location.lon, location.lat);
    let in_bounds =
        col >= 0 && row >= 0 && (col as u64) < raster.width() as u64 && (row as u64) < raster.height() as u64;
    if in_bounds {
        let v = raster.get(band, col as u32, row as u32);
        if !raster.is_nodata_value(v) {
            return (v, false);
        }
    }

    let b = buffer_px as i64;
    let c0 = (col - b).max(0);
    let c1 = (col + b).min(raster.width() as i64 - 1);
    let r0 = (row - b).max(0);
    let r1 = (row + b).min(raster.height() as i64 - 1);
    let mut sum = 0.0;
    let mut count = 0u64;
    if c0 <= c1 && r0 <= r1 {
        for r in r0..=r1 {
            for c in c0..=c1 {
                let v = raster.get(band, c as u32, r as u32);
                if !raster.is_nodata_value(v) {
                    sum += v;
                    count += 1;
                }
            }
        }
    }
    if count > 0 {
        return (sum / count as f64, false);
    }

    let plane = raster.band(band).expect("band index checked by caller");
    let mut sum = 0.0;
    let mut count = 0u64;
    for &v in plane {
        if !raster.is_nodata_value(v) {
            sum += v;
            count += 1;
        }
    }
    if count > 0 {
        (sum / count as f64, false)
    } else {
        (0.0, true)
    }
}

/// Z-score every feature column in place. Statistics come from the nodes at
/// `train` (all nodes when `None`) using the population standard deviation;
/// zero-variance columns are set to 0. The stats are returned for reuse via
/// [`apply_feature_stats`].
pub fn standardize_features(nodes: &mut [PoiNode], train: Option<&[usize]>) -> FeatureStats {
    let dim = nodes.first().map_or(0, |n| n.features.len());
    let all: Vec<usize> = (0..nodes.len()).collect();
    let train = train.unwrap_or(&all);
    debug_assert!(
        train
            .iter()
            .all(|&i| nodes[i].features.iter().all(|v| !v.is_nan())),
        "impute before standardizing"
    );

    let mut mean = vec![0.0; dim];
    let mut std = vec![0.0; dim];
    if !train.is_empty() {
        for &i in train {
            for (m, &v) in mean.iter_mut().zip(&nodes[i].features) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= train.len() as f64;
        }
        for &i in train {
            for (s, (&v, &m)) in std.iter_mut().zip(nodes[i].features.iter().zip(&mean)) {
                *s += (v - m) * (v - m);
            }
        }
        for s in std.iter_mut() {
            *s = (*s / train.len() as f64).sqrt();
        }
    }

    let stats = FeatureStats { mean, std };
    apply_feature_stats(nodes, &stats);
    stats
}

/// Apply stored standardization statistics to every node's features.
/// Columns whose stored std is 0 go to 0.
pub fn apply_feature_stats(nodes: &mut [PoiNode], stats: &FeatureStats) {
    for node in nodes.iter_mut() {
        for (j, v) in node.features.iter_mut().enumerate() {
            *v = if stats.std[j] == 0.0 {
                0.0
            } else {
                (*v - stats.mean[j]) / stats.std[j]
            };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use kiln_geo::GeoTransform;
    use proptest::prelude::*;

    fn grid_1band(width: u32, height: u32, fill: f64, nodata: Option<f64>) -> RasterGrid {
        let transform = GeoTransform::new(74.0, 31.0, 0.001, -0.001).unwrap();
        let mut g = RasterGrid::filled(width, height, 1, fill, transform).unwrap();
        g.nodata = nodata;
        g
    }

    fn node_at(lon: f64, lat: f64, features: Vec<f64>) -> PoiNode {
        PoiNode {
            id: 1,
            location: GeoPoint::new(lon, lat).unwrap(),
            features,
            label: None,
        }
    }

    #[test]
    fn direct_read_returns_pixel_value() {
        let mut g = grid_1band(3, 3, 0.0, None);
        g.set(0, 1, 1, 7.5);
        // Pixel (1,1) center sits at origin + 1 step in each axis.
        let n = node_at(74.001, 30.999, vec![]);
        let out = sample_features(&n, &[g], 3);
        assert_eq!(out.values, vec![7.5]);
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn nodata_center_takes_window_mean() {
        let mut g = grid_1band(3, 3, -1.0, Some(-1.0));
        g.set(0, 0, 0, 2.0);
        g.set(0, 2, 2, 4.0);
        let n = node_at(74.001, 30.999, vec![]);
        let out = sample_features(&n, &[g], 3);
        assert_eq!(out.values, vec![3.0]);
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn empty_window_falls_back_to_global_band_mean() {
        let mut g = grid_1band(40, 40, 5.0, Some(-1.0));
        // Poison the window around the node's pixel (roughly the top-left
        // corner) so only the global mean can answer.
        for r in 0..8 {
            for c in 0..8 {
                g.set(0, c, r, -1.0);
            }
        }
        let n = node_at(74.001, 30.999, vec![]);
        let out = sample_features(&n, &[g], 3);
        assert_relative_eq!(out.values[0], 5.0);
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn all_nodata_band_yields_zero_with_warning() {
        let g = grid_1band(3, 3, -1.0, Some(-1.0));
        let n = node_at(74.001, 30.999, vec![]);
        let out = sample_features(&n, &[g], 3);
        assert_eq!(out.values, vec![0.0]);
        assert_eq!(out.warnings.len(), 1);
        assert!(out.warnings[0].contains("no valid pixels"));
    }

    #[test]
    fn node_outside_extent_uses_global_mean() {
        let g = grid_1band(3, 3, 9.0, Some(-1.0));
        let n = node_at(100.0, 10.0, vec![]);
        let out = sample_features(&n, &[g], 3);
        assert_relative_eq!(out.values[0], 9.0);
    }

    #[test]
    fn impute_fills_only_nan_cells() {
        let mut g = grid_1band(3, 3, -1.0, Some(-1.0));
        g.set(0, 0, 0, 2.0);
        g.set(0, 2, 2, 4.0);
        let mut nodes = vec![node_at(74.001, 30.999, vec![1.25, f64::NAN])];
        let warnings = impute_features(&mut nodes, &[grid_1band(3, 3, 0.0, None), g], 3);
        assert_eq!(nodes[0].features, vec![1.25, 3.0]);
        assert!(warnings.is_empty());
    }

    #[test]
    fn impute_without_matching_band_warns_and_zeroes() {
        let mut nodes = vec![node_at(74.001, 30.999, vec![f64::NAN])];
        let warnings = impute_features(&mut nodes, &[], 3);
        assert_eq!(nodes[0].features, vec![0.0]);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("no matching raster band"));
    }

    #[test]
    fn two_point_column_becomes_plus_minus_one() {
        let mut nodes = vec![
            node_at(74.0, 31.0, vec![1.0]),
            node_at(74.1, 31.0, vec![3.0]),
        ];
        let stats = standardize_features(&mut nodes, None);
        assert_eq!(nodes[0].features, vec![-1.0]);
        assert_eq!(nodes[1].features, vec![1.0]);
        assert_eq!(stats.mean, vec![2.0]);
        assert_eq!(stats.std, vec![1.0]);
    }

    #[test]
    fn constant_column_goes_to_zero() {
        let mut nodes = vec![
            node_at(74.0, 31.0, vec![4.0, 1.0]),
            node_at(74.1, 31.0, vec![4.0, 2.0]),
            node_at(74.2, 31.0, vec![4.0, 3.0]),
        ];
        let stats = standardize_features(&mut nodes, None);
        assert_eq!(stats.std[0], 0.0);
        for n in &nodes {
            assert_eq!(n.features[0], 0.0);
        }
    }

    #[test]
    fn stored_stats_reapply_identically() {
        let raw = vec![
            node_at(74.0, 31.0, vec![1.0, 10.0]),
            node_at(74.1, 31.0, vec![3.0, 30.0]),
            node_at(74.2, 31.0, vec![5.0, 20.0]),
        ];
        let mut a = raw.clone();
        let stats = standardize_features(&mut a, None);
        let mut b = raw.clone();
        apply_feature_stats(&mut b, &stats);
        let mut c = raw;
        apply_feature_stats(&mut c, &stats);
        assert_eq!(a, b);
        assert_eq!(b, c);
    }

    #[test]
    fn train_subset_statistics_apply_to_every_node() {
        let mut nodes = vec![
            node_at(74.0, 31.0, vec![1.0]),
            node_at(74.1, 31.0, vec![3.0]),
            node_at(74.2, 31.0, vec![100.0]),
        ];
        let stats = standardize_features(&mut nodes, Some(&[0, 1]));
        assert_eq!(stats.mean, vec![2.0]);
        assert_eq!(nodes[0].features, vec![-1.0]);
        assert_eq!(nodes[1].features, vec![1.0]);
        assert_eq!(nodes[2].features, vec![98.0]);
    }

    proptest! {
        #[test]
        fn standardized_train_columns_have_zero_mean_unit_std(
            cols in (3usize..20, 1usize..4).prop_flat_map(|(n, f)| {
                proptest::collection::vec(
                    proptest::collection::vec(-50.0f64..50.0, n),
                    f,
                )
            }),
        ) {
            let n = cols[0].len();
            let mut nodes: Vec<PoiNode> = (0..n)
                .map(|i| node_at(74.0 + 0.01 * i as f64, 31.0, cols.iter().map(|c| c[i]).collect()))
                .collect();
            let stats = standardize_features(&mut nodes, None);
            for j in 0..cols.len() {
                if stats.std[j] == 0.0 {
                    continue;
                }
                let mean: f64 = nodes.iter().map(|nd| nd.features[j]).sum::<f64>() / n as f64;
                let var: f64 =
                    nodes.iter().map(|nd| nd.features[j].powi(2)).sum::<f64>() / n as f64;
                prop_assert!(mean.abs() < 1e-9);
                prop_assert!((var.sqrt() - 1.0).abs() < 1e-9);
            }
        }
    }
}
