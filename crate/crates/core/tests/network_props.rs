mod common;

use proptest::prelude::*;

use common::*;
use ridematch_core::network::{GridSpec, NodeId, RoadNetwork};

fn grid(rows: usize, cols: usize, block: f64, speed: f64) -> RoadNetwork {
    RoadNetwork::grid(GridSpec {
        rows,
        cols,
        block_m: block,
        speed_mps: speed,
    })
    .unwrap()
}

/// Every simple path from `a` to `b`, as (time, length).
fn all_simple_paths(net: &RoadNetwork, a: NodeId, b: NodeId) -> Vec<(f64, f64)> {
    fn go(
        net: &RoadNetwork,
        at: NodeId,
        b: NodeId,
        seen: &mut Vec<NodeId>,
        acc: (f64, f64),
        out: &mut Vec<(f64, f64)>,
    ) {
        if at == b {
            out.push(acc);
            return;
        }
        for l in net.links().iter().filter(|l| l.from == at) {
            if !seen.contains(&l.to) {
                seen.push(l.to);
                go(
                    net,
                    l.to,
                    b,
                    seen,
                    (acc.0 + l.travel_time, acc.1 + l.length),
                    out,
                );
                seen.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(net, a, b, &mut vec![a], (0.0, 0.0), &mut out);
    out
}

#[test]
fn corner_to_corner_on_three_by_three() {
    let net = grid(3, 3, 100.0, 10.0);
    let paths = all_simple_paths(&net, 0, 8);
    let best = paths
        .iter()
        .cloned()
        .fold((f64::INFINITY, 0.0), |b, p| if p.0 < b.0 { p } else { b });
    assert_eq!(best, (40.0, 400.0));
    let p = net.shortest_path(0, 8).unwrap();
    assert!((p.travel_time - 40.0).abs() < 1e-9);
    assert!((p.distance - 400.0).abs() < 1e-9);
    assert_eq!(p.links.len(), 4);
}

#[test]
fn grid_link_counts() {
    for (r, c) in [(2, 2), (3, 5), (10, 10)] {
        let net = grid(r, c, 100.0, 10.0);
        assert_eq!(net.node_count(), r * c);
        assert_eq!(net.link_count(), 2 * (r * (c - 1) + c * (r - 1)));
    }
}

#[test]
fn k_hop_diamond_sizes() {
    let net = grid(9, 9, 100.0, 10.0);
    let centre = 40;
    for k in 0..=3u32 {
        // 1 + 2k(k+1) nodes within Manhattan radius k
        let expect = 1 + 2 * k * (k + 1);
        assert_eq!(net.k_hop_neighbors(centre, k).unwrap().len() as u32, expect);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn times_agree_with_floyd_warshall(seed in any::<u64>()) {
        let net = random_network(&mut rng(seed));
        let fw = Times::new(&net);
        let ids: Vec<NodeId> = net.node_ids().collect();
        for &a in &ids {
            for &b in &ids {
                let t = net.travel_time(a, b);
                prop_assert!((t - fw.get(a, b)).abs() < 1e-9);
                let p = net.shortest_path(a, b).unwrap();
                prop_assert!((p.travel_time - t).abs() < 1e-9);
                let mut at = a;
                let mut sum = 0.0;
                for l in &p.links {
                    let l = net.link(*l).unwrap();
                    prop_assert_eq!(l.from, at);
                    at = l.to;
                    sum += l.travel_time;
                }
                prop_assert_eq!(at, b);
                prop_assert!((sum - t).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn triangle_inequality(seed in any::<u64>()) {
        let net = random_network(&mut rng(seed));
        let ids: Vec<NodeId> = net.node_ids().collect();
        for &a in &ids {
            for &b in &ids {
                for &c in &ids {
                    prop_assert!(
                        net.travel_time(a, c) <= net.travel_time(a, b) + net.travel_time(b, c) + 1e-9
                    );
                }
            }
        }
    }

    #[test]
    fn uniform_grids_are_symmetric(rows in 2usize..6, cols in 2usize..6, block in 50.0f64..300.0) {
        let net = grid(rows, cols, block, 10.0);
        let ids: Vec<NodeId> = net.node_ids().collect();
        for &a in &ids {
            for &b in &ids {
                prop_assert!((net.travel_time(a, b) - net.travel_time(b, a)).abs() < 1e-9);
                prop_assert_eq!(net.hop_distance(a, b), net.hop_distance(b, a));
            }
        }
    }

    #[test]
    fn k_hop_sets_grow_with_k(seed in any::<u64>()) {
        let net = random_network(&mut rng(seed));
        for a in net.node_ids() {
            let mut prev = net.k_hop_neighbors(a, 0).unwrap();
            prop_assert_eq!(prev.len(), 1);
            for k in 1..=4 {
                let cur = net.k_hop_neighbors(a, k).unwrap();
                prop_assert!(prev.is_subset(&cur));
                for n in &cur {
                    prop_assert!(net.hop_distance(a, *n).unwrap() <= k);
                }
                prev = cur;
            }
        }
    }
}
