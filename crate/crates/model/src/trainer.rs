//! Training loop, splits, class weighting, checkpoints, and prediction.

use std::collections::BTreeMap;

use kiln_autodiff::{finite_difference_check, DiffError, Tape};
use kiln_graph::{apply_feature_stats, standardize_features, FeatureStats, SpatialGraph};
use kiln_metrics::{node_classification_report, MetricsReport};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::forward::{forward_on_tape, GraphTensors, ParamLeaves};
use crate::params::ClimateGraphParams;
use crate::{ModelError, ModelKind, Result};

/// Hyperparameters and split layout for one training run. The defaults are
/// the shipped configuration; every field can be overridden from a JSON
/// config document or the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub layers: usize,
    pub hidden_dim: usize,
    pub harmonics: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub class_weight_mode: ClassWeightMode,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub leaky_slope: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::ClimateGraph,
            layers: 2,
            hidden_dim: 32,
            harmonics: 4,
            learning_rate: 1e-3,
            epochs: 300,
            seed: 0,
            class_weight_mode: ClassWeightMode::InverseFrequency,
            train_fraction: 0.6,
            val_fraction: 0.2,
            test_fraction: 0.2,
            leaky_slope: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(ModelError::BadConfig("layers must be at least 1".into()));
        }
        if self.hidden_dim == 0 {
            return Err(ModelError::BadConfig("hidden_dim must be at least 1".into()));
        }
        if self.harmonics == 0 {
            return Err(ModelError::BadConfig("harmonics must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::BadConfig(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(ModelError::BadConfig("epochs must be at least 1".into()));
        }
        let fracs = [self.train_fraction, self.val_fraction, self.test_fraction];
        if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(ModelError::BadConfig(
                "split fractions must lie in [0, 1]".into(),
            ));
        }
        let sum: f64 = fracs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ModelError::BadConfig(format!(
                "split fractions must sum to 1, got {sum}"
            )));
        }
        if self.train_fraction <= 0.0 || self.val_fraction <= 0.0 {
            return Err(ModelError::BadConfig(
                "train and validation fractions must be positive".into(),
            ));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return Err(ModelError::BadConfig(format!(
                "leaky_slope must be non-negative, got {}",
                self.leaky_slope
            )));
        }
        Ok(())
    }

    /// Feature widths through the network for a given input width.
    pub fn dims(&self, input_dim: usize) -> Vec<usize> {
        let mut dims = vec![input_dim];
        dims.extend(std::iter::repeat(self.hidden_dim).take(self.layers));
        dims
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeightMode {
    Uniform,
    InverseFrequency,
}

/// Label-stratified node-index splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits labeled nodes into train/val/test, stratified by label: each
/// class is shuffled and sliced separately, so class proportions carry over.
/// Validation and test take the floor of their fractional share; the
/// remainder goes to train, which therefore always keeps at least one node
/// of every present class.
pub fn stratified_splits(
    labeled: &[(usize, usize)],
    val_fraction: f64,
    test_fraction: f64,
    rng: &mut ChaCha8Rng,
) -> SplitIndices {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(idx, label) in labeled {
        by_class.entry(label).or_default().push(idx);
    }
    let mut splits = SplitIndices {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (_, mut members) in by_class {
        members.shuffle(rng);
        let n = members.len();
        let n_val = (n as f64 * val_fraction).floor() as usize;
        let n_test = (n as f64 * test_fraction).floor() as usize;
        let n_train = n - n_val - n_test;
        splits.train.extend(&members[..n_train]);
        splits.val.extend(&members[n_train..n_train + n_val]);
        splits.test.extend(&members[n_train + n_val..]);
    }
    splits.train.sort_unstable();
    splits.val.sort_unstable();
    splits.test.sort_unstable();
    splits
}

/// Loss weight per class over `n_classes` classes.
///
/// `InverseFrequency` uses `w_c = n / (C * count_c)`, which averages to 1
/// under the empirical label distribution; `Uniform` weights every class 1.
/// Both modes reject a class with no labels.
pub fn class_weights(labels: &[usize], mode: ClassWeightMode, n_classes: usize) -> Result<Vec<f64>> {
    let mut counts = vec![0u64; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(ModelError::MissingClass(missing));
    }
    Ok(match mode {
        ClassWeightMode::Uniform => vec![1.0; n_classes],
        ClassWeightMode::InverseFrequency => {
            let n = labels.len() as f64;
            counts
                .iter()
                .map(|&c| n / (n_classes as f64 * c as f64))
                .collect()
        }
    })
}

/// Distance normalizer for edge geometry: the 95th percentile (nearest rank)
/// of the distances of edges whose aggregating node lies in `subset` (every
/// edge when `None`). Falls back to 1 when no edge qualifies or the
/// percentile is not positive.
pub fn distance_scale(graph: &SpatialGraph, subset: Option<&[usize]>) -> f64 {
    let member: Option<Vec<bool>> = subset.map(|idxs| {
        let mut m = vec![false; graph.nodes.len()];
        for &i in idxs {
            m[i] = true;
        }
        m
    });
    let mut distances: Vec<f64> = graph
        .edges
        .iter()
        .filter(|e| member.as_ref().map_or(true, |m| m[e.src]))
        .map(|e| e.distance_m)
        .collect();
    if distances.is_empty() {
        if subset.is_some() {
            return distance_scale(graph, None);
        }
        return 1.0;
    }
    distances.sort_by(f64::total_cmp);
    let rank = ((0.95 * distances.len() as f64).ceil() as usize).clamp(1, distances.len());
    let p95 = distances[rank - 1];
    if p95 > 0.0 {
        p95
    } else {
        1.0
    }
}

/// One epoch's row of the metrics log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_macro_f1: f64,
}

/// Frozen model state: everything prediction needs, serialized as JSON with
/// the parameters as named flat arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: TrainConfig,
    /// Model input width: raw feature count plus the constant bias channel.
    pub input_dim: usize,
    pub n_classes: usize,
    pub feature_stats: FeatureStats,
    pub distance_scale: f64,
    pub epoch: usize,
    pub val_macro_f1: f64,
    pub params: BTreeMap<String, Vec<f64>>,
}

impl Checkpoint {
    pub fn dims(&self) -> Vec<usize> {
        self.config.dims(self.input_dim)
    }

    pub fn model_params(&self) -> Result<ClimateGraphParams> {
        ClimateGraphParams::from_named(
            &self.params,
            &self.dims(),
            self.config.harmonics,
            self.n_classes,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochMetrics>,
    pub splits: SplitIndices,
    /// Classification report on the held-out test split with the
    /// best-validation parameters; absent when the test split is empty.
    pub test_report: Option<MetricsReport>,
}

/// Preprocessed training inputs shared by `train` and `gradient_check`.
struct Prepared {
    tensors: GraphTensors,
    labels: Vec<usize>,
    weights: Vec<f64>,
    splits: SplitIndices,
    stats: FeatureStats,
    scale: f64,
    n_classes: usize,
    rng: ChaCha8Rng,
}

fn prepare(graph: &SpatialGraph, config: &TrainConfig) -> Result<Prepared> {
    config.validate()?;
    for node in &graph.nodes {
        if node.features.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteFeature { node_id: node.id });
        }
    }
    let labeled: Vec<(usize, usize)> = graph
        .nodes
        .iter()
        .enumerate()
        .filter_map(|(i, n)| n.label.map(|l| (i, l)))
        .collect();
    let distinct: std::collections::BTreeSet<usize> =
        labeled.iter().map(|&(_, l)| l).collect();
    if distinct.len() < 2 {
        return Err(ModelError::TooFewClasses(distinct.len()));
    }
    let n_classes = distinct.iter().max().unwrap() + 1;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let splits = stratified_splits(&labeled, config.val_fraction, config.test_fraction, &mut rng);

    let mut nodes = graph.nodes.clone();
    let stats = standardize_features(&mut nodes, Some(&splits.train));
    // The constant input channel is appended after standardization on
    // purpose: z-scoring maps any constant column to zero, so the bias
    // channel must bypass it to survive.
    for node in &mut nodes {
        node.features.push(1.0);
    }
    let work = SpatialGraph {
        nodes,
        edges: graph.edges.clone(),
        k: graph.k,
        feature_names: graph.feature_names.clone(),
    };
    let scale = distance_scale(graph, Some(&splits.train));
    let tensors = GraphTensors::new(&work, scale);

    let mut labels = vec![0usize; graph.nodes.len()];
    for &(i, l) in &labeled {
        labels[i] = l;
    }
    let train_labels: Vec<usize> = splits.train.iter().map(|&i| labels[i]).collect();
    let weights = class_weights(&train_labels, config.class_weight_mode, n_classes)?;

    Ok(Prepared {
        tensors,
        labels,
        weights,
        splits,
        stats,
        scale,
        n_classes,
        rng,
    })
}

fn argmax_rows(logits: &[f64], n_classes: usize, rows: &[usize]) -> Vec<usize> {
    rows.iter()
        .map(|&i| {
            let row = &logits[i * n_classes..(i + 1) * n_classes];
            let mut best = 0usize;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Adam optimizer state over the canonical parameter arrays.
struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: usize,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &ClimateGraphParams, lr: f64) -> Self {
        let shapes: Vec<usize> = params.arrays().iter().map(|a| a.len()).collect();
        Adam {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut ClimateGraphParams, grads: &[Vec<f64>]) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t as i32);
        let bc2 = 1.0 - Self::BETA2.powi(self.t as i32);
        for (pi, arr) in params.arrays_mut().into_iter().enumerate() {
            for (ci, p) in arr.iter_mut().enumerate() {
                let g = grads[pi][ci];
                let m = &mut self.m[pi][ci];
                let v = &mut self.v[pi][ci];
                *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
            }
        }
    }
}

/// Trains the configured model on the graph's labeled nodes.
///
/// Each epoch records the loss over the training mask, the loss and macro-F1
/// over the validation mask, then applies one Adam update. The checkpoint
/// keeps the parameters from the first epoch achieving the best validation
/// macro-F1.
pub fn train(graph: &SpatialGraph, config: &TrainConfig) -> Result<TrainOutput> {
    let mut prep = prepare(graph, config)?;
    let mut params = ClimateGraphParams::init(
        prep.tensors.feature_dim,
        config.hidden_dim,
        config.layers,
        config.harmonics,
        prep.n_classes,
        &mut prep.rng,
    );
    let mut adam = Adam::new(&params, config.learning_rate);

    let mut best: Option<(ClimateGraphParams, usize, f64)> = None;
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let epoch_result: std::result::Result<(f64, f64, f64, Vec<Vec<f64>>), DiffError> = (|| {
            let tape = Tape::new();
            let leaves = ParamLeaves::push(&tape, &params)?;
            let out = forward_on_tape(
                &tape,
                &prep.tensors,
                &leaves,
                config.model,
                config.leaky_slope,
            )?;
            let train_loss_t = tape.weighted_cross_entropy(
                out.logits,
                &prep.labels,
                &prep.weights,
                &prep.splits.train,
            )?;
            let val_loss_t = tape.weighted_cross_entropy(
                out.logits,
                &prep.labels,
                &prep.weights,
                &prep.splits.val,
            )?;
            let logits = tape.value(out.logits);
            tape.backward(train_loss_t)?;
            let grads = leaves.grads(&tape);
            Ok((
                tape.value(train_loss_t)[0],
                tape.value(val_loss_t)[0],
                {
                    let pred = argmax_rows(&logits, prep.n_classes, &prep.splits.val);
                    let truth: Vec<usize> = prep.splits.val.iter().map(|&i| prep.labels[i]).collect();
                    match node_classification_report(&pred, &truth, prep.n_classes) {
                        Ok(report) => report.macro_f1,
                        Err(_) => 0.0,
                    }
                },
                grads,
            ))
        })();
        let (train_loss, val_loss, val_macro_f1, grads) = match epoch_result {
            Ok(v) => v,
            Err(DiffError::NumericalError { .. }) => {
                return Err(ModelError::NonFiniteLoss { epoch })
            }
            Err(e) => return Err(e.into()),
        };

        if best.as_ref().map_or(true, |&(_, _, f)| val_macro_f1 > f) {
            best = Some((params.clone(), epoch, val_macro_f1));
        }
        adam.step(&mut params, &grads);
        log.push(EpochMetrics {
            epoch,
            train_loss,
            val_loss,
            val_macro_f1,
        });
    }

    let (best_params, best_epoch, best_f1) = best.unwrap();
    let checkpoint = Checkpoint {
        config: config.clone(),
        input_dim: prep.tensors.feature_dim,
        n_classes: prep.n_classes,
        feature_stats: prep.stats,
        distance_scale: prep.scale,
        epoch: best_epoch,
        val_macro_f1: best_f1,
        params: best_params.to_named(),
    };

    let test_report = if prep.splits.test.is_empty() {
        None
    } else {
        let tape = Tape::new();
        let leaves = ParamLeaves::push(&tape, &best_params)?;
        let out = forward_on_tape(
            &tape,
            &prep.tensors,
            &leaves,
            config.model,
            config.leaky_slope,
        )?;
        let logits = tape.value(out.logits);
        let pred = argmax_rows(&logits, prep.n_classes, &prep.splits.test);
        let truth: Vec<usize> = prep.splits.test.iter().map(|&i| prep.labels[i]).collect();
        Some(node_classification_report(&pred, &truth, prep.n_classes)?)
    };

    Ok(TrainOutput {
        checkpoint,
        log,
        splits: prep.splits,
        test_report,
    })
}

/// One node's prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodePrediction {
    pub node_id: u64,
    pub class: usize,
    pub probs: Vec<f64>,
}

/// Applies a trained checkpoint to a graph: stored feature statistics, the
/// bias channel, and the stored distance scale, then softmax over the
/// logits. Ties in the argmax resolve to the lowest class index.
pub fn predict(graph: &SpatialGraph, checkpoint: &Checkpoint) -> Result<Vec<NodePrediction>> {
    let feature_dim = graph.nodes.first().map_or(0, |n| n.features.len());
    if feature_dim + 1 != checkpoint.input_dim {
        return Err(ModelError::FeatureDimMismatch {
            got: feature_dim,
            want: checkpoint.input_dim - 1,
        });
    }
    for node in &graph.nodes {
        if node.features.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteFeature { node_id: node.id });
        }
    }
    let mut nodes = graph.nodes.clone();
    apply_feature_stats(&mut nodes, &checkpoint.feature_stats);
    for node in &mut nodes {
        node.features.push(1.0);
    }
    let work = SpatialGraph {
        nodes,
        edges: graph.edges.clone(),
        k: graph.k,
        feature_names: graph.feature_names.clone(),
    };
    let tensors = GraphTensors::new(&work, checkpoint.distance_scale);
    let params = checkpoint.model_params()?;

    let tape = Tape::new();
    let leaves = ParamLeaves::push(&tape, &params)?;
    let out = forward_on_tape(
        &tape,
        &tensors,
        &leaves,
        checkpoint.config.model,
        checkpoint.config.leaky_slope,
    )?;
    let logits = tape.value(out.logits);

    let c = checkpoint.n_classes;
    Ok(graph
        .nodes
        .iter()
        .enumerate()
        .map(|(i, node)| {
            let row = &logits[i * c..(i + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
            let denom: f64 = exps.iter().sum();
            let probs: Vec<f64> = exps.iter().map(|&e| e / denom).collect();
            let mut class = 0usize;
            for (ci, &p) in probs.iter().enumerate() {
                if p > probs[class] {
                    class = ci;
                }
            }
            NodePrediction {
                node_id: node.id,
                class,
                probs,
            }
        })
        .collect())
}

/// Central finite-difference validation of the full training gradient on a
/// (small) graph: every parameter of a freshly initialized model is
/// perturbed and the analytic gradient of the training loss compared. Returns
/// the maximum relative error.
pub fn gradient_check(graph: &SpatialGraph, config: &TrainConfig, eps: f64) -> Result<f64> {
    let mut prep = prepare(graph, config)?;
    let params = ClimateGraphParams::init(
        prep.tensors.feature_dim,
        config.hidden_dim,
        config.layers,
        config.harmonics,
        prep.n_classes,
        &mut prep.rng,
    );
    let flat: Vec<Vec<f64>> = params.arrays().into_iter().cloned().collect();
    let rebuild = |arrays: &[Vec<f64>]| {
        let mut p = params.clone();
        for (dst, src) in p.arrays_mut().into_iter().zip(arrays) {
            dst.copy_from_slice(src);
        }
        p
    };
    let loss_of = |arrays: &[Vec<f64>]| -> std::result::Result<f64, DiffError> {
        let p = rebuild(arrays);
        let tape = Tape::new();
        let leaves = ParamLeaves::push(&tape, &p)?;
        let out = forward_on_tape(&tape, &prep.tensors, &leaves, config.model, config.leaky_slope)?;
        let loss = tape.weighted_cross_entropy(
            out.logits,
            &prep.labels,
            &prep.weights,
            &prep.splits.train,
        )?;
        Ok(tape.value(loss)[0])
    };
    let grads_of = |arrays: &[Vec<f64>]| -> std::result::Result<Vec<Vec<f64>>, DiffError> {
        let p = rebuild(arrays);
        let tape = Tape::new();
        let leaves = ParamLeaves::push(&tape, &p)?;
        let out = forward_on_tape(&tape, &prep.tensors, &leaves, config.model, config.leaky_slope)?;
        let loss = tape.weighted_cross_entropy(
            out.logits,
            &prep.labels,
            &prep.weights,
            &prep.splits.train,
        )?;
        tape.backward(loss)?;
        Ok(leaves.grads(&tape))
    };
    Ok(finite_difference_check(&flat, loss_of, grads_of, eps)?)
}

/// Writes the per-epoch metrics log as CSV with a fixed four-column header.
pub fn write_metrics_csv<W: std::io::Write>(log: &[EpochMetrics], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch", "train_loss", "val_loss", "val_macro_f1"])?;
    for m in log {
        w.write_record([
            m.epoch.to_string(),
            m.train_loss.to_string(),
            m.val_loss.to_string(),
            m.val_macro_f1.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
