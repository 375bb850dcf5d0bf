//! Spatial-graph synthesis: seeded point scatters with nearest-neighbor
//! edges, labeled either by neighbor-bearing geometry or by separable
//! feature clusters.

use kiln_geo::GeoPoint;
use kiln_graph::{knn_edges, PoiNode, SpatialGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Result, SynthError, SynthSpec};

/// Longitude span of the scatter box.
const LON_RANGE: (f64, f64) = (74.0, 74.5);
/// Latitude span of the scatter box.
const LAT_RANGE: (f64, f64) = (31.0, 31.5);
/// Noise (or Gaussian-cluster) feature channels per node.
const NOISE_FEATURES: usize = 4;

fn validate(spec: &SynthSpec) -> Result<()> {
    let g = &spec.graph;
    if g.node_count < 20 {
        return Err(SynthError::BadSpec(format!(
            "node_count must be >= 20 for graph generation, got {}",
            g.node_count
        )));
    }
    if g.k == 0 || g.k >= g.node_count {
        return Err(SynthError::BadSpec(format!(
            "k must satisfy 1 <= k < node_count, got k={} with {} nodes",
            g.k, g.node_count
        )));
    }
    if !g.anisotropy_axis_deg.is_finite() {
        return Err(SynthError::BadSpec("anisotropy_axis_deg must be finite".into()));
    }
    Ok(())
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// True when `bearing` lies within a quarter turn of the axis *as a line*:
/// direction and its opposite count the same, so the acceptance cone covers
/// half of all headings.
fn aligned_with_axis(bearing_rad: f64, axis_rad: f64) -> bool {
    let folded = (bearing_rad - axis_rad).rem_euclid(std::f64::consts::PI);
    folded.min(std::f64::consts::PI - folded) <= std::f64::consts::FRAC_PI_4
}

/// Class for one node given its outgoing-edge bearings: 1 when at least
/// half align with the axis, else 0. An exact half counts as aligned —
/// nearest-neighbor directions repel each other enough that requiring a
/// strict majority at even k would skew the classes well away from balance.
pub fn bearing_cone_label(bearings: &[f64], axis_deg: f64) -> usize {
    if bearings.is_empty() {
        return 0;
    }
    let axis = axis_deg.to_radians();
    let aligned = bearings
        .iter()
        .filter(|&&b| aligned_with_axis(b, axis))
        .count();
    usize::from(2 * aligned >= bearings.len())
}

/// Recompute every node's bearing-majority class from the edges actually in
/// the graph. The generator's labels must equal this by construction.
pub fn recompute_bearing_labels(graph: &SpatialGraph, axis_deg: f64) -> Vec<usize> {
    let mut bearings: Vec<Vec<f64>> = vec![Vec::new(); graph.nodes.len()];
    for e in &graph.edges {
        bearings[e.src].push(e.bearing_rad);
    }
    bearings
        .iter()
        .map(|b| bearing_cone_label(b, axis_deg))
        .collect()
}

fn scatter_positions(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<Vec<GeoPoint>> {
    (0..spec.graph.node_count)
        .map(|_| {
            let lon = rng.gen_range(LON_RANGE.0..LON_RANGE.1);
            let lat = rng.gen_range(LAT_RANGE.0..LAT_RANGE.1);
            Ok(GeoPoint::new(lon, lat)?)
        })
        .collect()
}

/// Generate a graph whose classes depend only on edge geometry.
///
/// Nodes scatter uniformly over a fixed box; features are pure noise plus a
/// constant-one channel, so nothing in the feature matrix predicts the
/// class. A node is class 1 exactly when at least half of its k neighbor
/// bearings fall within +/-45 degrees of the anisotropy axis (counting a
/// bearing and its opposite as the same orientation; an exact half counts).
/// Per node the generator draws lon, lat, then the noise features.
pub fn gen_anisotropic_graph(spec: &SynthSpec) -> Result<SpatialGraph> {
    validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut nodes = Vec::with_capacity(spec.graph.node_count);
    for (i, _) in (0..spec.graph.node_count).enumerate() {
        let lon = rng.gen_range(LON_RANGE.0..LON_RANGE.1);
        let lat = rng.gen_range(LAT_RANGE.0..LAT_RANGE.1);
        let mut features: Vec<f64> = (0..NOISE_FEATURES)
            .map(|_| standard_normal(&mut rng))
            .collect();
        features.push(1.0);
        nodes.push(PoiNode {
            id: i as u64,
            location: GeoPoint::new(lon, lat)?,
            features,
            label: None,
        });
    }
    let mut graph = knn_edges(nodes, spec.graph.k)?;
    let labels = recompute_bearing_labels(&graph, spec.graph.anisotropy_axis_deg);
    for (node, label) in graph.nodes.iter_mut().zip(&labels) {
        node.label = Some(*label);
    }
    graph.feature_names = (0..NOISE_FEATURES)
        .map(|i| format!("noise_{i}"))
        .chain(std::iter::once("const_one".to_string()))
        .collect();
    Ok(graph)
}

/// Generate a graph whose classes are trivially recoverable from features.
///
/// Labels alternate 0/1 by node index (an exact balanced split, independent
/// of geometry); each feature channel is then drawn from a Gaussian at +1
/// for class 1 and -1 for class 0 with sigma 0.5, which a linear rule
/// separates almost perfectly. Positions scatter over the same box as the
/// anisotropic generator and edges are the same nearest-neighbor set.
pub fn gen_feature_separable_graph(spec: &SynthSpec) -> Result<SpatialGraph> {
    validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let positions = scatter_positions(spec, &mut rng)?;
    let mut nodes = Vec::with_capacity(spec.graph.node_count);
    for (i, location) in positions.into_iter().enumerate() {
        let label = i % 2;
        let mean = if label == 1 { 1.0 } else { -1.0 };
        let features: Vec<f64> = (0..NOISE_FEATURES)
            .map(|_| mean + 0.5 * standard_normal(&mut rng))
            .collect();
        nodes.push(PoiNode {
            id: i as u64,
            location,
            features,
            label: Some(label),
        });
    }
    let mut graph = knn_edges(nodes, spec.graph.k)?;
    graph.feature_names = (0..NOISE_FEATURES).map(|i| format!("cluster_{i}")).collect();
    Ok(graph)
}
