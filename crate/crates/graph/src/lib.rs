//! Spatial POI graphs for kiln classification.
//!
//! A graph is built in stages: load points of interest from CSV, connect each
//! one to its nearest neighbors by great-circle distance (edges carry the
//! distance and the forward bearing), attach per-node feature vectors sampled
//! from raster bands, and z-score the features against training statistics.
//! Construction is deterministic: the same input bytes always produce the
//! same graph, byte for byte, when serialized.

use kiln_geo::{GeoError, GeoPoint};
use serde::{Deserialize, Serialize};

mod build;
mod features;
mod io;

pub use build::knn_edges;
pub use features::{
    apply_feature_stats, impute_features, sample_features, standardize_features, FeatureStats,
    SampleOutcome,
};
pub use io::{load_pois, load_pois_from_reader, PoiLoadResult};

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("required column `{0}` not found in header")]
    MissingColumn(String),
    #[error("non-numeric value in column `{column}` on line {line}")]
    NonNumericCell { line: u64, column: String },
    #[error("duplicate node id {0}")]
    DuplicateId(u64),
    #[error("need at least two nodes to build edges, got {0}")]
    SinglePoint(usize),
    #[error("coordinates on line {line} are invalid: {source}")]
    BadCoordinate { line: u64, source: GeoError },
    #[error("label {label} on line {line} is negative")]
    NegativeLabel { line: u64, label: i64 },
    #[error("geometry error: {0}")]
    Geo(#[from] GeoError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// One point of interest: a located candidate site with a feature vector and
/// an optional class label. Feature cells awaiting imputation hold NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiNode {
    pub id: u64,
    #[serde(flatten)]
    pub location: GeoPoint,
    pub features: Vec<f64>,
    pub label: Option<usize>,
}

/// A directed edge from a node to one of its selected neighbors. `src` and
/// `dst` index into the graph's node list; the bearing is measured at `src`
/// toward `dst` and lies in (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub src: usize,
    pub dst: usize,
    pub distance_m: f64,
    pub bearing_rad: f64,
}

/// The assembled neighborhood graph. Each node has out-edges to its
/// min(k, N-1) nearest others; edges are sorted by (src, distance, dst) and
/// never loop back to their source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialGraph {
    pub nodes: Vec<PoiNode>,
    pub edges: Vec<GraphEdge>,
    pub k: usize,
    pub feature_names: Vec<String>,
}

impl SpatialGraph {
    /// Serialize to the interchange JSON document.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parse a graph previously written by [`SpatialGraph::to_json`].
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Number of distinct feature channels per node.
    pub fn feature_dim(&self) -> usize {
        self.nodes.first().map_or(0, |n| n.features.len())
    }
}
