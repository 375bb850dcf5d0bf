//! The `graph-build` subcommand: POI CSV in, nearest-neighbor graph JSON out.

use kiln_graph::{knn_edges, load_pois};

use crate::config::load_run_config;
use crate::{CliError, GraphBuildArgs};

pub fn run(args: GraphBuildArgs) -> Result<(), CliError> {
    let cfg = load_run_config(args.config.as_deref())?.graph;
    let k = args.k.unwrap_or(cfg.k);
    let feature_columns: Vec<String> = match &args.features {
        Some(list) => list
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
        None => cfg.feature_columns.clone(),
    };
    let label_column = args.label.clone().or(cfg.label_column);

    let loaded = load_pois(&args.pois, &feature_columns, label_column.as_deref())
        .map_err(|e| CliError::Usage(format!("cannot load {}: {e}", args.pois.display())))?;
    for warning in &loaded.warnings {
        eprintln!("warning: {warning}");
    }
    let dropped = loaded.rejected_lines.len();

    let node_count = loaded.nodes.len();
    let mut graph = knn_edges(loaded.nodes, k)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    // The builder names features positionally; the CSV header names are
    // better when we have them.
    if !feature_columns.is_empty() {
        graph.feature_names = feature_columns;
    }

    let json = graph.to_json().map_err(|e| CliError::Usage(e.to_string()))?;
    std::fs::write(&args.out, json)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", args.out.display())))?;
    println!(
        "{} nodes ({} rows dropped), {} edges, k={} -> {}",
        node_count,
        dropped,
        graph.edges.len(),
        k,
        args.out.display()
    );
    Ok(())
}
