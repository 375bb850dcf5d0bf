//! The tape-recorded forward pass shared by training, prediction, and the
//! gradient checker.

use kiln_autodiff::{DiffError, Tape, Tensor};
use kiln_graph::SpatialGraph;

use crate::params::ClimateGraphParams;
use crate::ModelKind;

/// Precomputed per-edge geometry: the clipped normalized distance and the
/// bearing with its sine and cosine.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGeometry {
    pub distance: f64,
    pub theta: f64,
    pub sin_theta: f64,
    pub cos_theta: f64,
}

/// Edge geometry for every edge of `graph`, in edge order. Distances are
/// divided by `distance_scale` and clipped to `[0, 2]` so they stay
/// commensurate with the trigonometric components.
pub fn edge_geometry(graph: &SpatialGraph, distance_scale: f64) -> Vec<EdgeGeometry> {
    graph
        .edges
        .iter()
        .map(|e| EdgeGeometry {
            distance: (e.distance_m / distance_scale).clamp(0.0, 2.0),
            theta: e.bearing_rad,
            sin_theta: e.bearing_rad.sin(),
            cos_theta: e.bearing_rad.cos(),
        })
        .collect()
}

/// Graph data flattened into the arrays the tape consumes. Features are taken
/// from the nodes as-is; any standardization or bias channel is the caller's
/// business.
#[derive(Debug, Clone)]
pub struct GraphTensors {
    pub n: usize,
    pub feature_dim: usize,
    /// Row-major `[n * feature_dim]` node features.
    pub features: Vec<f64>,
    /// Aggregating node per edge.
    pub srcs: Vec<usize>,
    /// Message-sending neighbor per edge.
    pub dsts: Vec<usize>,
    pub geometry: Vec<EdgeGeometry>,
    /// Compact segment id per edge for the attention softmax; segments
    /// enumerate only nodes that have at least one out-edge.
    seg_of_edge: Vec<usize>,
    n_segments: usize,
    /// `1 / out_degree(src)` per edge, the uniform attention weight.
    uniform_weights: Vec<f64>,
}

impl GraphTensors {
    pub fn new(graph: &SpatialGraph, distance_scale: f64) -> Self {
        let n = graph.nodes.len();
        let feature_dim = graph.nodes.first().map_or(0, |nd| nd.features.len());
        let mut features = Vec::with_capacity(n * feature_dim);
        for node in &graph.nodes {
            features.extend_from_slice(&node.features);
        }
        let srcs: Vec<usize> = graph.edges.iter().map(|e| e.src).collect();
        let dsts: Vec<usize> = graph.edges.iter().map(|e| e.dst).collect();
        let mut outdeg = vec![0usize; n];
        for &s in &srcs {
            outdeg[s] += 1;
        }
        let mut seg_id = vec![usize::MAX; n];
        let mut n_segments = 0;
        for (i, &d) in outdeg.iter().enumerate() {
            if d > 0 {
                seg_id[i] = n_segments;
                n_segments += 1;
            }
        }
        let seg_of_edge: Vec<usize> = srcs.iter().map(|&s| seg_id[s]).collect();
        let uniform_weights: Vec<f64> = srcs.iter().map(|&s| 1.0 / outdeg[s] as f64).collect();
        GraphTensors {
            n,
            feature_dim,
            features,
            srcs,
            dsts,
            geometry: edge_geometry(graph, distance_scale),
            seg_of_edge,
            n_segments,
            uniform_weights,
        }
    }

    fn theta_column(&self) -> Vec<f64> {
        self.geometry.iter().map(|g| g.theta).collect()
    }

    fn phi_rows(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.geometry.len() * 3);
        for g in &self.geometry {
            out.extend_from_slice(&[g.distance, g.sin_theta, g.cos_theta]);
        }
        out
    }
}

/// One layer's parameters as tape leaves.
pub struct LayerLeaves {
    pub w0: Tensor,
    pub wn: Tensor,
    pub wh: Tensor,
    pub a_src: Tensor,
    pub a_dst: Tensor,
    pub a_geo: Tensor,
    pub kappa: Tensor,
    pub mu: Tensor,
}

/// Every parameter as a tape leaf, in the same canonical order as
/// [`ClimateGraphParams::arrays`].
pub struct ParamLeaves {
    pub layers: Vec<LayerLeaves>,
    pub wc: Tensor,
    pub bc: Tensor,
}

impl ParamLeaves {
    pub fn push(tape: &Tape, params: &ClimateGraphParams) -> Result<Self, DiffError> {
        let mut layers = Vec::with_capacity(params.layers.len());
        for (l, lp) in params.layers.iter().enumerate() {
            let (f_in, f_out) = (params.dims[l], params.dims[l + 1]);
            let d = f_out;
            layers.push(LayerLeaves {
                w0: tape.leaf(f_in, f_out, lp.w0.clone())?,
                wn: tape.leaf(f_in, f_out, lp.wn.clone())?,
                wh: tape.leaf(f_in, d, lp.wh.clone())?,
                a_src: tape.leaf(d, 1, lp.a_src.clone())?,
                a_dst: tape.leaf(d, 1, lp.a_dst.clone())?,
                a_geo: tape.leaf(3, 1, lp.a_geo.clone())?,
                kappa: tape.leaf(lp.kappa.len(), 1, lp.kappa.clone())?,
                mu: tape.leaf(lp.mu.len(), 1, lp.mu.clone())?,
            });
        }
        let f_last = *params.dims.last().unwrap();
        Ok(ParamLeaves {
            layers,
            wc: tape.leaf(f_last, params.n_classes, params.wc.clone())?,
            bc: tape.leaf(1, params.n_classes, params.bc.clone())?,
        })
    }

    /// Gradients read back in canonical array order.
    pub fn grads(&self, tape: &Tape) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for l in &self.layers {
            for t in [l.w0, l.wn, l.wh, l.a_src, l.a_dst, l.a_geo, l.kappa, l.mu] {
                out.push(tape.grad(t));
            }
        }
        out.push(tape.grad(self.wc));
        out.push(tape.grad(self.bc));
        out
    }
}

/// Forward-pass handles a caller may want beyond the logits.
pub struct ForwardArtifacts {
    pub logits: Tensor,
    /// Per layer, the `[edges x 1]` attention weights actually applied.
    pub attention: Vec<Tensor>,
}

/// Runs the model on the tape and returns the `[n x classes]` logits along
/// with the per-layer attention columns.
///
/// Hidden layers apply a LeakyReLU with `slope`; the last layer's output
/// feeds the classifier untransformed. A node with no out-edges is updated
/// from its self term alone.
pub fn forward_on_tape(
    tape: &Tape,
    gt: &GraphTensors,
    leaves: &ParamLeaves,
    kind: ModelKind,
    slope: f64,
) -> Result<ForwardArtifacts, DiffError> {
    let n_layers = leaves.layers.len();
    let e = gt.srcs.len();
    let x = tape.leaf(gt.n, gt.feature_dim, gt.features.clone())?;

    let theta = if e > 0 && kind != ModelKind::IsotropicMean {
        Some(tape.leaf(e, 1, gt.theta_column())?)
    } else {
        None
    };
    let phi = if e > 0 && kind == ModelKind::ClimateGraph {
        Some(tape.leaf(e, 3, gt.phi_rows())?)
    } else {
        None
    };

    let mut h = x;
    let mut attention = Vec::new();
    for (li, layer) in leaves.layers.iter().enumerate() {
        let self_term = tape.matmul(h, layer.w0)?;
        let pre = if e == 0 {
            self_term
        } else {
            let neighbor = tape.gather_rows(h, &gt.dsts)?;
            let msg = tape.matmul(neighbor, layer.wn)?;
            let alpha = match kind {
                ModelKind::ClimateGraph => {
                    let proj = tape.matmul(h, layer.wh)?;
                    let s_src = tape.matmul(proj, layer.a_src)?;
                    let s_dst = tape.matmul(proj, layer.a_dst)?;
                    let per_src = tape.gather_rows(s_src, &gt.srcs)?;
                    let per_dst = tape.gather_rows(s_dst, &gt.dsts)?;
                    let geo = tape.matmul(phi.unwrap(), layer.a_geo)?;
                    let scores = tape.add(tape.add(per_src, per_dst)?, geo)?;
                    let scores = tape.leaky_relu(scores, slope)?;
                    tape.segment_softmax(scores, &gt.seg_of_edge, gt.n_segments)?
                }
                ModelKind::UniformAttention | ModelKind::IsotropicMean => {
                    tape.leaf(e, 1, gt.uniform_weights.clone())?
                }
            };
            attention.push(alpha);
            let mut weighted = tape.mul(msg, alpha)?;
            if kind != ModelKind::IsotropicMean {
                let theta = theta.unwrap();
                let mut kernel: Option<Tensor> = None;
                let harmonics = {
                    let (rows, _) = tape.shape(layer.kappa);
                    rows
                };
                for l in 0..harmonics {
                    let mu_l = tape.gather_rows(layer.mu, &[l])?;
                    let cosine = tape.cos_shifted(theta, l as f64, mu_l)?;
                    let kappa_l = tape.gather_rows(layer.kappa, &[l])?;
                    let term = tape.mul(cosine, kappa_l)?;
                    kernel = Some(match kernel {
                        None => term,
                        Some(acc) => tape.add(acc, term)?,
                    });
                }
                weighted = tape.mul(weighted, kernel.unwrap())?;
            }
            let agg = tape.segment_sum(weighted, &gt.srcs, gt.n)?;
            tape.add(self_term, agg)?
        };
        h = if li + 1 == n_layers {
            pre
        } else {
            tape.leaky_relu(pre, slope)?
        };
    }

    let logits = tape.add(tape.matmul(h, leaves.wc)?, leaves.bc)?;
    Ok(ForwardArtifacts { logits, attention })
}

#[cfg(test)]
mod tests {
    use super::*;
    use kiln_geo::GeoPoint;
    use kiln_graph::{GraphEdge, PoiNode, SpatialGraph};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn node(id: u64, lon: f64, lat: f64, features: Vec<f64>) -> PoiNode {
        PoiNode {
            id,
            location: GeoPoint::new(lon, lat).unwrap(),
            features,
            label: None,
        }
    }

    /// Two nodes pointing at each other, scalar features 2 and 3.
    fn two_node_graph() -> SpatialGraph {
        SpatialGraph {
            nodes: vec![
                node(1, 74.0, 31.0, vec![2.0]),
                node(2, 74.001, 31.0, vec![3.0]),
            ],
            edges: vec![
                GraphEdge {
                    src: 0,
                    dst: 1,
                    distance_m: 95.0,
                    bearing_rad: 0.0,
                },
                GraphEdge {
                    src: 1,
                    dst: 0,
                    distance_m: 95.0,
                    bearing_rad: std::f64::consts::PI,
                },
            ],
            k: 1,
            feature_names: vec!["f_0".into()],
        }
    }

    /// Scalar-weight parameters that make the update hand-traceable.
    fn scalar_params(w0: f64, wn: f64) -> ClimateGraphParams {
        ClimateGraphParams {
            layers: vec![crate::params::LayerParams {
                w0: vec![w0],
                wn: vec![wn],
                wh: vec![1.0],
                a_src: vec![0.0],
                a_dst: vec![0.0],
                a_geo: vec![0.0, 0.0, 0.0],
                kappa: vec![1.0],
                mu: vec![0.0],
            }],
            wc: vec![1.0],
            bc: vec![0.0],
            dims: vec![1, 1],
            n_classes: 1,
        }
    }

    #[test]
    fn hand_traced_two_node_update() {
        // h_a' = 0.5*2 + 1 * K(0) * 0.25*3 = 1.75
        // h_b' = 0.5*3 + 1 * K(pi) * 0.25*2 = 2.0  (K constant 1)
        let graph = two_node_graph();
        let gt = GraphTensors::new(&graph, 100.0);
        let tape = Tape::new();
        let leaves = ParamLeaves::push(&tape, &scalar_params(0.5, 0.25)).unwrap();
        let out = forward_on_tape(&tape, &gt, &leaves, ModelKind::ClimateGraph, 0.2).unwrap();
        let logits = tape.value(out.logits);
        assert!((logits[0] - 1.75).abs() < 1e-12);
        assert!((logits[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_attention_vector_gives_uniform_weights() {
        // With a = 0 every edge scores 0, so each softmax segment is uniform.
        let mut graph = two_node_graph();
        graph.nodes.push(node(3, 74.0, 31.001, vec![5.0]));
        graph.edges = vec![
            GraphEdge { src: 0, dst: 1, distance_m: 95.0, bearing_rad: 0.1 },
            GraphEdge { src: 0, dst: 2, distance_m: 111.0, bearing_rad: 1.5 },
            GraphEdge { src: 1, dst: 0, distance_m: 95.0, bearing_rad: -3.0 },
            GraphEdge { src: 2, dst: 0, distance_m: 111.0, bearing_rad: -1.6 },
        ];
        let gt = GraphTensors::new(&graph, 100.0);
        let tape = Tape::new();
        let leaves = ParamLeaves::push(&tape, &scalar_params(0.0, 1.0)).unwrap();
        let out = forward_on_tape(&tape, &gt, &leaves, ModelKind::ClimateGraph, 0.2).unwrap();
        let alpha = tape.value(out.attention[0]);
        assert!((alpha[0] - 0.5).abs() < 1e-12);
        assert!((alpha[1] - 0.5).abs() < 1e-12);
        assert!((alpha[2] - 1.0).abs() < 1e-12);
        assert!((alpha[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_node_uses_only_the_self_term() {
        let graph = SpatialGraph {
            nodes: vec![node(1, 74.0, 31.0, vec![4.0])],
            edges: vec![],
            k: 0,
            feature_names: vec!["f_0".into()],
        };
        let gt = GraphTensors::new(&graph, 1.0);
        let tape = Tape::new();
        let leaves = ParamLeaves::push(&tape, &scalar_params(0.5, 9.9)).unwrap();
        let out = forward_on_tape(&tape, &gt, &leaves, ModelKind::ClimateGraph, 0.2).unwrap();
        assert_eq!(tape.value(out.logits), vec![2.0]);
        assert!(out.attention.is_empty());
    }

    #[test]
    fn geometry_trig_is_consistent() {
        let graph = two_node_graph();
        for g in edge_geometry(&graph, 50.0) {
            assert!((g.sin_theta * g.sin_theta + g.cos_theta * g.cos_theta - 1.0).abs() < 1e-12);
            assert!((0.0..=2.0).contains(&g.distance));
        }
        // 95 m at scale 50 clips to the upper bound.
        assert_eq!(edge_geometry(&graph, 50.0)[0].distance, 95.0 / 50.0);
        assert_eq!(edge_geometry(&graph, 10.0)[0].distance, 2.0);
    }

    #[test]
    fn attention_logit_matches_hand_arithmetic() {
        // F=1, D=1, every weight 1, both features 1, phi = (0.5, 0, 1):
        // e = LeakyReLU(1 + 1 + 0.5 + 0 + 1) = 3.5. A second edge drives its
        // pre-activation to -2, so slope 0.2 maps it to -0.4.
        let params = ClimateGraphParams {
            layers: vec![crate::params::LayerParams {
                w0: vec![1.0],
                wn: vec![1.0],
                wh: vec![1.0],
                a_src: vec![1.0],
                a_dst: vec![1.0],
                a_geo: vec![1.0, 1.0, 1.0],
                kappa: vec![1.0],
                mu: vec![0.0],
            }],
            wc: vec![1.0],
            bc: vec![0.0],
            dims: vec![1, 1],
            n_classes: 1,
        };
        let graph = SpatialGraph {
            nodes: vec![
                node(1, 74.0, 31.0, vec![1.0]),
                node(2, 74.001, 31.0, vec![1.0]),
                node(3, 74.0, 31.001, vec![-4.5]),
            ],
            edges: vec![
                // phi = (0.5, sin 0, cos 0) = (0.5, 0, 1) at distance 50, scale 100.
                GraphEdge { src: 0, dst: 1, distance_m: 50.0, bearing_rad: 0.0 },
                // Projected neighbor h_j = -4.5 pushes the score to
                // 1 + (-4.5) + 0.5 + 0 + 1 = -2 exactly.
                GraphEdge { src: 0, dst: 2, distance_m: 50.0, bearing_rad: 0.0 },
            ],
            k: 1,
            feature_names: vec!["f_0".into()],
        };
        let gt = GraphTensors::new(&graph, 100.0);
        let tape = Tape::new();
        let leaves = ParamLeaves::push(&tape, &params).unwrap();
        // Rebuild just the score column the forward pass uses.
        let x = tape.leaf(3, 1, gt.features.clone()).unwrap();
        let proj = tape.matmul(x, leaves.layers[0].wh).unwrap();
        let s_src = tape.matmul(proj, leaves.layers[0].a_src).unwrap();
        let s_dst = tape.matmul(proj, leaves.layers[0].a_dst).unwrap();
        let per_src = tape.gather_rows(s_src, &gt.srcs).unwrap();
        let per_dst = tape.gather_rows(s_dst, &gt.dsts).unwrap();
        let phi = tape.leaf(2, 3, gt.phi_rows()).unwrap();
        let geo = tape.matmul(phi, leaves.layers[0].a_geo).unwrap();
        let scores = tape.add(tape.add(per_src, per_dst).unwrap(), geo).unwrap();
        let acts = tape.value(tape.leaky_relu(scores, 0.2).unwrap());
        assert!((acts[0] - 3.5).abs() < 1e-12);
        assert!((acts[1] + 0.4).abs() < 1e-12);
    }

    #[test]
    fn uniform_and_isotropic_agree_under_unit_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut params = ClimateGraphParams::init(2, 4, 2, 4, 2, &mut rng);
        for layer in &mut params.layers {
            layer.kappa = vec![1.0, 0.0, 0.0, 0.0];
            layer.mu = vec![0.0; 4];
        }
        let graph = SpatialGraph {
            nodes: vec![
                node(1, 74.0, 31.0, vec![0.3, -1.2]),
                node(2, 74.002, 31.0, vec![1.0, 0.4]),
                node(3, 74.0, 31.002, vec![-0.7, 2.0]),
            ],
            edges: vec![
                GraphEdge { src: 0, dst: 1, distance_m: 190.0, bearing_rad: 0.0 },
                GraphEdge { src: 0, dst: 2, distance_m: 222.0, bearing_rad: 1.57 },
                GraphEdge { src: 1, dst: 0, distance_m: 190.0, bearing_rad: 3.1 },
                GraphEdge { src: 2, dst: 0, distance_m: 222.0, bearing_rad: -1.57 },
            ],
            k: 1,
            feature_names: vec!["f_0".into(), "f_1".into()],
        };
        let gt = GraphTensors::new(&graph, 200.0);
        let mut outputs = Vec::new();
        for kind in [ModelKind::UniformAttention, ModelKind::IsotropicMean] {
            let tape = Tape::new();
            let leaves = ParamLeaves::push(&tape, &params).unwrap();
            let out = forward_on_tape(&tape, &gt, &leaves, kind, 0.2).unwrap();
            outputs.push(tape.value(out.logits));
        }
        for (a, b) in outputs[0].iter().zip(&outputs[1]) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
