//! Nearest-neighbor edge construction over great-circle distances.

use kiln_geo::{bearing, haversine_distance};

use crate::{GraphEdge, GraphError, PoiNode, Result, SpatialGraph};

/// Connect every node to its `k` nearest others (clipped to N-1) by haversine
/// distance. Distance ties are broken toward the smaller node id, and the
/// final edge list is sorted by (src, distance, dst).
pub fn knn_edges(nodes: Vec<PoiNode>, k: usize) -> Result<SpatialGraph> {
    let n = nodes.len();
    if n < 2 {
        return Err(GraphError::SinglePoint(n));
    }
    debug_assert!(
        nodes.windows(2).all(|w| w[0].features.len() == w[1].features.len()),
        "feature length must be uniform across the graph"
    );
    let keep = k.min(n - 1);
    let by_distance_then_id = |a: &(f64, u64, usize), b: &(f64, u64, usize)| {
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
    };

    let mut edges = Vec::with_capacity(n * keep);
    for i in 0..n {
        let mut cand: Vec<(f64, u64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                (
                    haversine_distance(nodes[i].location, nodes[j].location),
                    nodes[j].id,
                    j,
                )
            })
            .collect();
        cand.select_nth_unstable_by(keep - 1, by_distance_then_id);
        cand.truncate(keep);
        cand.sort_by(by_distance_then_id);
        for (d, _, j) in cand {
            edges.push(GraphEdge {
                src: i,
                dst: j,
                distance_m: d,
                bearing_rad: bearing(nodes[i].location, nodes[j].location)?,
            });
        }
    }
    edges.sort_by(|a, b| {
        a.src
            .cmp(&b.src)
            .then(a.distance_m.total_cmp(&b.distance_m))
            .then(a.dst.cmp(&b.dst))
    });

    let feature_names = (0..nodes[0].features.len())
        .map(|f| format!("f_{f}"))
        .collect();
    Ok(SpatialGraph {
        nodes,
        edges,
        k,
        feature_names,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use kiln_geo::GeoPoint;
    use proptest::prelude::*;

    fn node(id: u64, lon: f64, lat: f64) -> PoiNode {
        PoiNode {
            id,
            location: GeoPoint::new(lon, lat).unwrap(),
            features: vec![],
            label: None,
        }
    }

    #[test]
    fn two_nodes_large_k_yields_one_edge_each() {
        let g = knn_edges(vec![node(0, 74.0, 31.0), node(1, 74.2, 31.1)], 8).unwrap();
        assert_eq!(g.edges.len(), 2);
        assert_eq!((g.edges[0].src, g.edges[0].dst), (0, 1));
        assert_eq!((g.edges[1].src, g.edges[1].dst), (1, 0));
    }

    #[test]
    fn single_point_is_rejected() {
        let err = knn_edges(vec![node(0, 74.0, 31.0)], 8).unwrap_err();
        assert!(matches!(err, GraphError::SinglePoint(1)));
    }

    #[test]
    fn collinear_chain_middle_nodes_take_both_sides() {
        // Four equally spaced points along the equator; with k = 2 the middle
        // two must pick their immediate left and right neighbors.
        let nodes = vec![
            node(0, 10.0, 0.0),
            node(1, 10.1, 0.0),
            node(2, 10.2, 0.0),
            node(3, 10.3, 0.0),
        ];
        let g = knn_edges(nodes, 2).unwrap();
        let out = |src: usize| -> Vec<usize> {
            let mut v: Vec<usize> = g
                .edges
                .iter()
                .filter(|e| e.src == src)
                .map(|e| e.dst)
                .collect();
            v.sort_unstable();
            v
        };
        assert_eq!(out(1), vec![0, 2]);
        assert_eq!(out(2), vec![1, 3]);
        assert_eq!(out(0), vec![1, 2]);
        assert_eq!(out(3), vec![1, 2]);
    }

    #[test]
    fn equidistant_tie_goes_to_smaller_id() {
        // Nodes 5 and 3 sit symmetrically east/west of node 1; the haversine
        // distances agree bit for bit, so the id decides.
        let nodes = vec![node(1, 74.0, 31.0), node(5, 74.3, 31.0), node(3, 73.7, 31.0)];
        let g = knn_edges(nodes, 1).unwrap();
        let first = g.edges.iter().find(|e| e.src == 0).unwrap();
        assert_eq!(first.dst, 2, "smaller id 3 (index 2) should win the tie");
    }

    #[test]
    fn bearings_match_recomputation() {
        let nodes = vec![
            node(0, 74.0, 31.0),
            node(1, 74.15, 31.05),
            node(2, 73.9, 30.9),
            node(3, 74.4, 31.2),
        ];
        let g = knn_edges(nodes, 3).unwrap();
        for e in &g.edges {
            let b = bearing(g.nodes[e.src].location, g.nodes[e.dst].location).unwrap();
            assert!((b - e.bearing_rad).abs() < 1e-12);
            assert!(e.bearing_rad > -std::f64::consts::PI);
            assert!(e.bearing_rad <= std::f64::consts::PI);
        }
    }

    proptest! {
        #[test]
        fn out_degree_is_exactly_min_k_nm1(
            seeds in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..40),
            k in 1usize..10,
        ) {
            let nodes: Vec<PoiNode> = seeds
                .iter()
                .enumerate()
                .map(|(i, &(a, b))| node(i as u64, 74.0 + a, 31.0 + b))
                .collect();
            // Random draws virtually never coincide, but guard the bearing
            // degeneracy anyway.
            prop_assume!(nodes.iter().enumerate().all(|(i, p)| {
                nodes[..i].iter().all(|q| q.location != p.location)
            }));
            let n = nodes.len();
            let g = knn_edges(nodes, k).unwrap();
            for i in 0..n {
                let deg = g.edges.iter().filter(|e| e.src == i).count();
                prop_assert_eq!(deg, k.min(n - 1));
            }
            for e in &g.edges {
                prop_assert_ne!(e.src, e.dst);
            }
            let mut sorted = g.edges.clone();
            sorted.sort_by(|a, b| {
                a.src.cmp(&b.src)
                    .then(a.distance_m.total_cmp(&b.distance_m))
                    .then(a.dst.cmp(&b.dst))
            });
            prop_assert_eq!(sorted, g.edges);
        }
    }
}
