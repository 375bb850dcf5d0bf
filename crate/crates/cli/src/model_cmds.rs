//! Model-facing subcommands: `train`, `predict`, and `gradcheck`.

use kiln_geo::GeoPoint;
use kiln_graph::{knn_edges, PoiNode, SpatialGraph};
use kiln_model::{
    gradient_check, predict as model_predict, train as model_train, write_metrics_csv,
    Checkpoint, ClassWeightMode, ModelError, ModelKind, TrainConfig, TrainOutput,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::load_run_config;
use crate::{CliError, GradcheckArgs, PredictArgs, TrainArgs};

/// Training failures that signal a diverged or non-finite computation exit
/// with the numerical code; everything else is a usage problem.
fn map_model_error(e: ModelError) -> CliError {
    match e {
        ModelError::NonFiniteLoss { .. } | ModelError::Diff(_) => {
            CliError::Numerical(e.to_string())
        }
        other => CliError::Usage(other.to_string()),
    }
}

fn load_graph(path: &std::path::Path) -> Result<SpatialGraph, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read graph {}: {e}", path.display())))?;
    SpatialGraph::from_json(&text)
        .map_err(|e| CliError::Usage(format!("bad graph {}: {e}", path.display())))
}

fn apply_overrides(cfg: &mut TrainConfig, args: &TrainArgs) -> Result<(), CliError> {
    if let Some(model) = &args.model {
        cfg.model = model.parse::<ModelKind>().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        cfg.epochs = epochs;
    }
    if let Some(lr) = args.learning_rate {
        cfg.learning_rate = lr;
    }
    if let Some(h) = args.hidden_dim {
        cfg.hidden_dim = h;
    }
    if let Some(l) = args.layers {
        cfg.layers = l;
    }
    if let Some(l) = args.harmonics {
        cfg.harmonics = l;
    }
    if let Some(mode) = &args.class_weights {
        cfg.class_weight_mode = match mode.as_str() {
            "uniform" => ClassWeightMode::Uniform,
            "inverse_frequency" => ClassWeightMode::InverseFrequency,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown class weighting `{other}` (expected uniform or inverse_frequency)"
                )))
            }
        };
    }
    Ok(())
}

fn test_macro_f1(out: &TrainOutput) -> Result<f64, CliError> {
    out.test_report
        .as_ref()
        .map(|r| r.macro_f1)
        .ok_or_else(|| CliError::Usage("test split is empty; no test macro-F1 to report".into()))
}

fn write_artifacts(args: &TrainArgs, out: &TrainOutput) -> Result<(), CliError> {
    if let Some(path) = &args.out {
        let json = out.checkpoint.to_json().map_err(map_model_error)?;
        std::fs::write(path, json)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
    }
    if let Some(path) = &args.metrics {
        let file = std::fs::File::create(path)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
        write_metrics_csv(&out.log, file).map_err(map_model_error)?;
    }
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    if args.replicates == 0 {
        return Err(CliError::Usage("--replicates must be at least 1".into()));
    }
    let mut cfg = load_run_config(args.config.as_deref())?.train;
    apply_overrides(&mut cfg, &args)?;
    let graph = load_graph(&args.graph)?;

    if args.replicates == 1 {
        let out = model_train(&graph, &cfg).map_err(map_model_error)?;
        write_artifacts(&args, &out)?;
        println!(
            "{} on {} nodes, seed {}: best epoch {} (val macro-F1 {:.4})",
            cfg.model,
            graph.nodes.len(),
            cfg.seed,
            out.checkpoint.epoch,
            out.checkpoint.val_macro_f1
        );
        if let Some(report) = &out.test_report {
            print!("{}", report.to_table());
            println!("test macro-F1: {:.4}", report.macro_f1);
        } else {
            println!("test split is empty; no test report");
        }
        return Ok(());
    }

    // Replicates rerun the whole pipeline — splits, init, training — under
    // consecutive seeds, isolating seed sensitivity from everything else.
    let base = cfg.seed;
    let mut scores = Vec::with_capacity(args.replicates);
    for r in 0..args.replicates {
        let mut rep_cfg = cfg.clone();
        rep_cfg.seed = base + r as u64;
        let out = model_train(&graph, &rep_cfg).map_err(map_model_error)?;
        let f1 = test_macro_f1(&out)?;
        println!("replicate {r} (seed {}): test macro-F1 {:.4}", rep_cfg.seed, f1);
        if r == 0 {
            write_artifacts(&args, &out)?;
        }
        scores.push(f1);
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    println!(
        "{}: test macro-F1 {:.4} +/- {:.4} over {} replicates",
        cfg.model,
        mean,
        var.sqrt(),
        args.replicates
    );
    Ok(())
}

pub fn predict(args: PredictArgs) -> Result<(), CliError> {
    let graph = load_graph(&args.graph)?;
    let text = std::fs::read_to_string(&args.checkpoint).map_err(|e| {
        CliError::Usage(format!("cannot read checkpoint {}: {e}", args.checkpoint.display()))
    })?;
    let checkpoint = Checkpoint::from_json(&text).map_err(|e| {
        CliError::Usage(format!("bad checkpoint {}: {e}", args.checkpoint.display()))
    })?;
    let predictions = model_predict(&graph, &checkpoint).map_err(map_model_error)?;
    let json = serde_json::to_string_pretty(&predictions)
        .expect("prediction serialization cannot fail");
    std::fs::write(&args.out, json)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", args.out.display())))?;
    println!("{} nodes classified -> {}", predictions.len(), args.out.display());
    Ok(())
}

/// The fixed graph the gradient check runs on: a dozen scattered nodes with
/// two noise features and alternating labels, small enough that perturbing
/// every parameter stays fast.
fn check_graph(seed: u64) -> Result<SpatialGraph, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = Vec::with_capacity(12);
    for i in 0..12u64 {
        let lon = rng.gen_range(74.0..74.1);
        let lat = rng.gen_range(31.0..31.1);
        let features = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let location = GeoPoint::new(lon, lat)
            .map_err(|e| CliError::Usage(format!("cannot build check graph: {e}")))?;
        nodes.push(PoiNode {
            id: i,
            location,
            features,
            label: Some((i % 2) as usize),
        });
    }
    knn_edges(nodes, 3).map_err(|e| CliError::Usage(format!("cannot build check graph: {e}")))
}

pub fn gradcheck(args: GradcheckArgs) -> Result<(), CliError> {
    let graph = check_graph(args.seed)?;
    let cfg = TrainConfig {
        seed: args.seed,
        ..TrainConfig::default()
    };
    let err = gradient_check(&graph, &cfg, args.eps).map_err(map_model_error)?;
    println!("max relative error: {err:.3e}");
    if err < 1e-4 {
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "gradient check failed: max relative error {err:.3e} >= 1e-4"
        )))
    }
}
