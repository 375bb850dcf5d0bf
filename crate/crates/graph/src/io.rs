//! POI ingestion from CSV.
//!
//! Expected schema: a header row containing `id`, `lon`, `lat`, optionally a
//! label column, and any number of feature columns. Empty cells mean missing:
//! missing coordinates drop the row (reported by line number), missing labels
//! leave the node unlabeled, and missing feature cells are flagged NaN for
//! later imputation.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use kiln_geo::GeoPoint;

use crate::{GraphError, PoiNode, Result};

/// Loaded nodes plus the report of anything skipped or flagged on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct PoiLoadResult {
    pub nodes: Vec<PoiNode>,
    /// 1-based file line numbers of rows dropped for missing coordinates.
    pub rejected_lines: Vec<u64>,
    pub warnings: Vec<String>,
}

/// Load POIs from a CSV file on disk. See [`load_pois_from_reader`].
pub fn load_pois(
    path: &Path,
    feature_columns: &[String],
    label_column: Option<&str>,
) -> Result<PoiLoadResult> {
    load_pois_from_reader(File::open(path)?, feature_columns, label_column)
}

/// Load POIs from any CSV byte stream. Rows missing `lon` or `lat` are
/// dropped and reported; malformed numbers and duplicate ids abort the load.
pub fn load_pois_from_reader<R: Read>(
    reader: R,
    feature_columns: &[String],
    label_column: Option<&str>,
) -> Result<PoiLoadResult> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| GraphError::MissingColumn(name.to_string()))
    };
    let id_col = find("id")?;
    let lon_col = find("lon")?;
    let lat_col = find("lat")?;
    let label_col = label_column.map(&find).transpose()?;
    let feat_cols: Vec<(usize, &str)> = feature_columns
        .iter()
        .map(|c| find(c).map(|i| (i, c.as_str())))
        .collect::<Result<_>>()?;

    let mut nodes = Vec::new();
    let mut rejected_lines = Vec::new();
    let mut warnings = Vec::new();
    let mut seen_ids = std::collections::HashSet::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let cell = |i: usize| record.get(i).unwrap_or("").trim();

        if cell(lon_col).is_empty() || cell(lat_col).is_empty() {
            rejected_lines.push(line);
            warnings.push(format!("line {line}: missing lon/lat, row dropped"));
            continue;
        }
        let parse_f64 = |i: usize, name: &str| -> Result<f64> {
            cell(i).parse().map_err(|_| GraphError::NonNumericCell {
                line,
                column: name.to_string(),
            })
        };

        let id: u64 = cell(id_col).parse().map_err(|_| GraphError::NonNumericCell {
            line,
            column: "id".to_string(),
        })?;
        if !seen_ids.insert(id) {
            return Err(GraphError::DuplicateId(id));
        }
        let lon = parse_f64(lon_col, "lon")?;
        let lat = parse_f64(lat_col, "lat")?;
        let location =
            GeoPoint::new(lon, lat).map_err(|source| GraphError::BadCoordinate { line, source })?;

        let label = match label_col {
            Some(i) if !cell(i).is_empty() => {
                let raw: i64 = cell(i).parse().map_err(|_| GraphError::NonNumericCell {
                    line,
                    column: label_column.unwrap_or("label").to_string(),
                })?;
                if raw < 0 {
                    return Err(GraphError::NegativeLabel { line, label: raw });
                }
                Some(raw as usize)
            }
            _ => None,
        };

        let mut features = Vec::with_capacity(feat_cols.len());
        for &(i, name) in &feat_cols {
            if cell(i).is_empty() {
                features.push(f64::NAN);
            } else {
                features.push(parse_f64(i, name)?);
            }
        }
        nodes.push(PoiNode {
            id,
            location,
            features,
            label,
        });
    }
    Ok(PoiLoadResult {
        nodes,
        rejected_lines,
        warnings,
    })
}
