//! Evaluation subcommands: node-classification and detection-box scoring.

use kiln_graph::SpatialGraph;
use kiln_metrics::{
    match_detections, node_classification_report, BBox, MetricsReport, ScoredBox,
};
use kiln_model::NodePrediction;
use kiln_raster::geojson::read_geojson_boxes;

use crate::config::load_run_config;
use crate::{CliError, EvalDetectionsArgs, EvalNodesArgs};

fn write_report(report: &MetricsReport, path: Option<&std::path::Path>) -> Result<(), CliError> {
    let Some(path) = path else { return Ok(()) };
    let json = serde_json::to_string_pretty(report).expect("report serialization cannot fail");
    std::fs::write(path, json)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

pub fn eval_nodes(args: EvalNodesArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.graph)
        .map_err(|e| CliError::Usage(format!("cannot read graph {}: {e}", args.graph.display())))?;
    let graph = SpatialGraph::from_json(&text)
        .map_err(|e| CliError::Usage(format!("bad graph {}: {e}", args.graph.display())))?;
    let text = std::fs::read_to_string(&args.pred)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.pred.display())))?;
    let predictions: Vec<NodePrediction> = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("bad predictions {}: {e}", args.pred.display())))?;

    let by_id: std::collections::BTreeMap<u64, usize> =
        predictions.iter().map(|p| (p.node_id, p.class)).collect();

    // Only labeled nodes are scoreable; every one of them must be predicted.
    let mut pred_labels = Vec::new();
    let mut true_labels = Vec::new();
    for node in &graph.nodes {
        let Some(label) = node.label else { continue };
        let Some(&class) = by_id.get(&node.id) else {
            return Err(CliError::Usage(format!(
                "labeled node {} has no prediction",
                node.id
            )));
        };
        pred_labels.push(class);
        true_labels.push(label);
    }
    if true_labels.is_empty() {
        return Err(CliError::Usage("graph has no labeled nodes to score".into()));
    }

    let classes = pred_labels
        .iter()
        .chain(&true_labels)
        .max()
        .expect("nonempty")
        + 1;
    let report = node_classification_report(&pred_labels, &true_labels, classes)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    print!("{}", report.to_table());
    write_report(&report, args.out.as_deref())
}

pub fn eval_detections(args: EvalDetectionsArgs) -> Result<(), CliError> {
    let cfg = load_run_config(args.config.as_deref())?.eval;
    let threshold = args.iou.unwrap_or(cfg.iou_threshold);
    if !(threshold.is_finite() && 0.0 < threshold && threshold <= 1.0) {
        return Err(CliError::Usage(format!(
            "IoU threshold must lie in (0, 1], got {threshold}"
        )));
    }

    let preds: Vec<ScoredBox> = read_geojson_boxes(&args.pred)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.pred.display())))?
        .into_iter()
        .map(|b| ScoredBox {
            bbox: BBox {
                x0: b.x0,
                y0: b.y0,
                x1: b.x1,
                y1: b.y1,
            },
            score: b.score.unwrap_or(1.0),
        })
        .collect();
    let truths: Vec<BBox> = read_geojson_boxes(&args.truth)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.truth.display())))?
        .into_iter()
        .map(|b| BBox {
            x0: b.x0,
            y0: b.y0,
            x1: b.x1,
            y1: b.y1,
        })
        .collect();

    let matched = match_detections(&preds, &truths, threshold);
    let report = MetricsReport::from_detection_counts(matched.tp, matched.fp, matched.fn_);
    print!("{}", report.to_table());
    write_report(&report, args.out.as_deref())
}
