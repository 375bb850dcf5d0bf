//! Structural properties of the forward pass and the analytic gradients.

use kiln_autodiff::Tape;
use kiln_geo::GeoPoint;
use kiln_graph::{knn_edges, PoiNode, SpatialGraph};
use kiln_model::{
    distance_scale, forward_on_tape, gradient_check, ClimateGraphParams, GraphTensors, LayerParams,
    ModelKind, ParamLeaves, TrainConfig,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_nodes(rng: &mut ChaCha8Rng, n: usize, features: usize, labeled: bool) -> Vec<PoiNode> {
    (0..n)
        .map(|i| PoiNode {
            id: i as u64 + 1,
            location: GeoPoint::new(
                74.0 + rng.gen_range(0.0..0.5),
                31.0 + rng.gen_range(0.0..0.5),
            )
            .unwrap(),
            features: (0..features).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            label: labeled.then(|| i % 2),
        })
        .collect()
}

#[test]
fn permuting_nodes_permutes_logits_rows() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let n = rng.gen_range(4..=12);
        let k = rng.gen_range(1..=3.min(n - 1));
        let nodes = random_nodes(&mut rng, n, 2, false);

        let graph = knn_edges(nodes.clone(), k).unwrap();
        let perm: Vec<usize> = {
            use rand::seq::SliceRandom;
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(&mut rng);
            p
        };
        let permuted_nodes: Vec<PoiNode> = perm.iter().map(|&old| nodes[old].clone()).collect();
        let permuted = knn_edges(permuted_nodes, k).unwrap();

        let mut init_rng = ChaCha8Rng::seed_from_u64(7);
        let params = ClimateGraphParams::init(2, 5, 2, 3, 2, &mut init_rng);
        let logits_of = |g: &SpatialGraph| {
            let gt = GraphTensors::new(g, distance_scale(g, None));
            let tape = Tape::new();
            let leaves = ParamLeaves::push(&tape, &params).unwrap();
            let out = forward_on_tape(&tape, &gt, &leaves, ModelKind::ClimateGraph, 0.2).unwrap();
            tape.value(out.logits)
        };
        let base = logits_of(&graph);
        let moved = logits_of(&permuted);
        for (new_idx, &old_idx) in perm.iter().enumerate() {
            for c in 0..2 {
                let a = base[old_idx * 2 + c];
                let b = moved[new_idx * 2 + c];
                assert!(
                    (a - b).abs() < 1e-12,
                    "seed {seed}: node {old_idx} class {c}: {a} vs {b}"
                );
            }
        }
    }
}

#[test]
fn attention_weights_sum_to_one_per_aggregating_node() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let n = rng.gen_range(3..=15);
        let k = rng.gen_range(1..=3.min(n - 1));
        let graph = knn_edges(random_nodes(&mut rng, n, 2, false), k).unwrap();
        let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ClimateGraphParams::init(2, 4, 2, 4, 2, &mut init_rng);

        let gt = GraphTensors::new(&graph, distance_scale(&graph, None));
        let tape = Tape::new();
        let leaves = ParamLeaves::push(&tape, &params).unwrap();
        let out = forward_on_tape(&tape, &gt, &leaves, ModelKind::ClimateGraph, 0.2).unwrap();
        assert_eq!(out.attention.len(), 2);
        for layer_alpha in &out.attention {
            let alpha = tape.value(*layer_alpha);
            let mut per_node = vec![0.0f64; n];
            for (e, edge) in graph.edges.iter().enumerate() {
                per_node[edge.src] += alpha[e];
            }
            let has_out: Vec<bool> = {
                let mut h = vec![false; n];
                for e in &graph.edges {
                    h[e.src] = true;
                }
                h
            };
            for (i, &sum) in per_node.iter().enumerate() {
                if has_out[i] {
                    assert!((sum - 1.0).abs() < 1e-12, "seed {seed} node {i}: {sum}");
                }
            }
        }
    }
}

#[test]
fn forced_isotropic_parameters_reduce_to_neighbor_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let f = 3;
    let graph = knn_edges(random_nodes(&mut rng, 9, f, false), 3).unwrap();

    // Identity message transform, zero self term, uniform attention via
    // a = 0, unit kernel: one layer then an identity classifier.
    let mut wn = vec![0.0; f * f];
    for i in 0..f {
        wn[i * f + i] = 1.0;
    }
    let params = ClimateGraphParams {
        layers: vec![LayerParams {
            w0: vec![0.0; f * f],
            wn: wn.clone(),
            wh: vec![0.3; f * f],
            a_src: vec![0.0; f],
            a_dst: vec![0.0; f],
            a_geo: vec![0.0; 3],
            kappa: vec![1.0, 0.0, 0.0, 0.0],
            mu: vec![0.0; 4],
        }],
        wc: wn,
        bc: vec![0.0; f],
        dims: vec![f, f],
        n_classes: f,
    };

    let gt = GraphTensors::new(&graph, distance_scale(&graph, None));
    let tape = Tape::new();
    let leaves = ParamLeaves::push(&tape, &params).unwrap();
    let out = forward_on_tape(&tape, &gt, &leaves, ModelKind::ClimateGraph, 0.2).unwrap();
    let logits = tape.value(out.logits);

    for (i, node) in graph.nodes.iter().enumerate() {
        let neighbors: Vec<usize> = graph
            .edges
            .iter()
            .filter(|e| e.src == i)
            .map(|e| e.dst)
            .collect();
        assert!(!neighbors.is_empty());
        let _ = node;
        for c in 0..f {
            let mean: f64 = neighbors
                .iter()
                .map(|&j| graph.nodes[j].features[c])
                .sum::<f64>()
                / neighbors.len() as f64;
            assert!(
                (logits[i * f + c] - mean).abs() < 1e-9,
                "node {i} feature {c}"
            );
        }
    }
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let graph = knn_edges(random_nodes(&mut rng, 12, 2, true), 3).unwrap();
    let config = TrainConfig {
        seed: 5,
        ..TrainConfig::default()
    };
    let start = std::time::Instant::now();
    let max_rel = gradient_check(&graph, &config, 1e-5).unwrap();
    let elapsed = start.elapsed();
    assert!(max_rel < 1e-4, "max relative error {max_rel}");
    assert!(
        elapsed.as_secs() < 10,
        "gradient check took {elapsed:?}"
    );
}
