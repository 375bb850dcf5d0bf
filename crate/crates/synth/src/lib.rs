//! Seeded synthetic data for exercising the detection and classification
//! stacks without any real imagery or survey labels.
//!
//! Two families of output share one spec type: raster scenes (RGB tile
//! stacks with a height grid and per-kiln ground truth) and spatial graphs
//! (either direction-labeled or feature-separable). Every value is a pure
//! function of the spec, so identical specs produce byte-identical files.

mod graphgen;
mod scene;

use thiserror::Error;

pub use graphgen::{
    bearing_cone_label, gen_anisotropic_graph, gen_feature_separable_graph,
    recompute_bearing_labels,
};
pub use scene::{
    gen_raster_scene, write_scene, write_truth_geojson, KilnTruth, RasterScene, SceneTile,
};

#[derive(Debug, Error)]
pub enum SynthError {
    /// The spec fails validation before any generation starts.
    #[error("invalid spec: {0}")]
    BadSpec(String),
    /// Rejection sampling could not fit all requested objects into the scene.
    #[error("placed only {placed} of {requested} objects; scene too crowded for the separation rules")]
    PlacementFailure { placed: usize, requested: usize },
    #[error(transparent)]
    Geo(#[from] kiln_geo::GeoError),
    #[error(transparent)]
    Raster(#[from] kiln_raster::RasterError),
    #[error(transparent)]
    Graph(#[from] kiln_graph::GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// Root spec: one seed drives both the scene and graph generators.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub seed: u64,
    pub scene: SceneSpec,
    pub graph: GraphSpec,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            scene: SceneSpec::default(),
            graph: GraphSpec::default(),
        }
    }
}

impl SynthSpec {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| SynthError::BadSpec(e.to_string()))
    }
}

/// Raster-scene knobs. Distractor roofs are always-present red squares with
/// tall height values, placed to be indistinguishable from kilns in the
/// imagery so only the height filter can remove them.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub frames: usize,
    pub kiln_count: usize,
    pub kiln_radius_px: u32,
    pub background_rgb: [f64; 3],
    pub kiln_rgb: [f64; 3],
    /// Per-frame probability that a kiln is visibly firing.
    pub activity_probability: f64,
    pub distractor_count: usize,
    /// Uniform +/- amplitude added to each background channel per pixel.
    pub noise_amplitude: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            width: 512,
            height: 512,
            frames: 5,
            kiln_count: 12,
            kiln_radius_px: 8,
            background_rgb: [60.0, 160.0, 70.0],
            kiln_rgb: [200.0, 60.0, 50.0],
            activity_probability: 0.6,
            distractor_count: 0,
            noise_amplitude: 6.0,
        }
    }
}

/// How graph node classes are assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassRule {
    /// Class 1 when most of a node's neighbor bearings align with the axis.
    BearingMajority,
    /// Classes drawn first, features from class-conditional Gaussians.
    FeatureSeparable,
}

impl std::fmt::Display for ClassRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClassRule::BearingMajority => "bearing_majority",
            ClassRule::FeatureSeparable => "feature_separable",
        })
    }
}

impl std::str::FromStr for ClassRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bearing_majority" => Ok(ClassRule::BearingMajority),
            "feature_separable" => Ok(ClassRule::FeatureSeparable),
            other => Err(format!(
                "unknown class rule `{other}` (expected bearing_majority or feature_separable)"
            )),
        }
    }
}

/// Graph-generation knobs.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphSpec {
    pub node_count: usize,
    /// Out-degree of the nearest-neighbor edge set.
    pub k: usize,
    /// Orientation (degrees, 0 = east) whose aligned neighbors vote class 1.
    pub anisotropy_axis_deg: f64,
    pub class_rule: ClassRule,
}

impl Default for GraphSpec {
    fn default() -> Self {
        GraphSpec {
            node_count: 1000,
            k: 8,
            anisotropy_axis_deg: 0.0,
            class_rule: ClassRule::BearingMajority,
        }
    }
}
