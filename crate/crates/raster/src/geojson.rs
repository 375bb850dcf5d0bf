//! GeoJSON FeatureCollection output for detection polygons, plus a minimal
//! reader that recovers bounding boxes for evaluation.

use crate::RasterError;
use serde::Serialize;
use std::path::Path;

/// One polygon feature ready for serialization: an outer ring followed by any
/// hole rings, each closed (first vertex repeated last).
#[derive(Debug, Clone)]
pub struct VectorFeature {
    /// Rings in lon/lat; `rings[0]` is the exterior.
    pub rings: Vec<Vec<(f64, f64)>>,
    /// Pixel count of the originating region.
    pub area_px: u64,
    /// Detection score (mean composite index over the region).
    pub score: f64,
}

#[derive(Serialize)]
struct FeatureCollection {
    #[serde(rename = "type")]
    kind: &'static str,
    features: Vec<Feature>,
}

#[derive(Serialize)]
struct Feature {
    #[serde(rename = "type")]
    kind: &'static str,
    geometry: Geometry,
    properties: Properties,
}

#[derive(Serialize)]
struct Geometry {
    #[serde(rename = "type")]
    kind: &'static str,
    coordinates: Vec<Vec<[f64; 2]>>,
}

#[derive(Serialize)]
struct Properties {
    id: u64,
    area_px: u64,
    score: f64,
}

/// Serialize features to a GeoJSON string. Feature ids are assigned 0.. in
/// input order. An empty input produces an empty FeatureCollection.
pub fn geojson_string(features: &[VectorFeature]) -> Result<String, RasterError> {
    let mut out = Vec::with_capacity(features.len());
    for (id, f) in features.iter().enumerate() {
        for ring in &f.rings {
            if ring.len() < 4 || ring.first() != ring.last() {
                return Err(RasterError::InvalidRing);
            }
        }
        out.push(Feature {
            kind: "Feature",
            geometry: Geometry {
                kind: "Polygon",
                coordinates: f
                    .rings
                    .iter()
                    .map(|ring| ring.iter().map(|&(x, y)| [x, y]).collect())
                    .collect(),
            },
            properties: Properties {
                id: id as u64,
                area_px: f.area_px,
                score: f.score,
            },
        });
    }
    let fc = FeatureCollection {
        kind: "FeatureCollection",
        features: out,
    };
    Ok(serde_json::to_string(&fc).expect("geojson serialization cannot fail"))
}

/// Write features as a GeoJSON file.
pub fn write_geojson(features: &[VectorFeature], path: &Path) -> Result<(), RasterError> {
    std::fs::write(path, geojson_string(features)?)?;
    Ok(())
}

/// A bounding box recovered from a GeoJSON feature, with its score property
/// when present.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub score: Option<f64>,
}

/// Read a FeatureCollection of Polygon features and reduce each to its
/// axis-aligned bounding box (normalized so x0 <= x1, y0 <= y1).
pub fn read_geojson_boxes(path: &Path) -> Result<Vec<GeoBox>, RasterError> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let features = value
        .get("features")
        .and_then(|f| f.as_array())
        .ok_or_else(|| RasterError::BadGeoJson("missing features array".into()))?;

    let mut boxes = Vec::with_capacity(features.len());
    for (i, feat) in features.iter().enumerate() {
        let geom = feat
            .get("geometry")
            .ok_or_else(|| RasterError::BadGeoJson(format!("feature {i}: no geometry")))?;
        let kind = geom.get("type").and_then(|t| t.as_str()).unwrap_or("");
        if kind != "Polygon" {
            return Err(RasterError::BadGeoJson(format!(
                "feature {i}: geometry type {kind:?}, expected Polygon"
            )));
        }
        let rings = geom
            .get("coordinates")
            .and_then(|c| c.as_array())
            .ok_or_else(|| RasterError::BadGeoJson(format!("feature {i}: no coordinates")))?;
        let outer = rings
            .first()
            .and_then(|r| r.as_array())
            .ok_or_else(|| RasterError::BadGeoJson(format!("feature {i}: empty polygon")))?;

        let mut x0 = f64::INFINITY;
        let mut y0 = f64::INFINITY;
        let mut x1 = f64::NEG_INFINITY;
        let mut y1 = f64::NEG_INFINITY;
        for pt in outer {
            let pair = pt
                .as_array()
                .filter(|p| p.len() >= 2)
                .ok_or_else(|| RasterError::BadGeoJson(format!("feature {i}: bad vertex")))?;
            let x = pair[0].as_f64().unwrap_or(f64::NAN);
            let y = pair[1].as_f64().unwrap_or(f64::NAN);
            if !x.is_finite() || !y.is_finite() {
                return Err(RasterError::BadGeoJson(format!(
                    "feature {i}: non-finite vertex"
                )));
            }
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        if outer.is_empty() {
            return Err(RasterError::BadGeoJson(format!("feature {i}: empty ring")));
        }
        let score = feat
            .get("properties")
            .and_then(|p| p.get("score"))
            .and_then(|s| s.as_f64());
        boxes.push(GeoBox {
            x0,
            y0,
            x1,
            y1,
            score,
        });
    }
    Ok(boxes)
}
