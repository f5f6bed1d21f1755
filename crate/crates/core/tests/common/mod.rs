//! Brute-force reference implementations and random case generators shared
//! by the property tests and the acceptance suite.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ridematch_core::demand::{Request, RequestId};
use ridematch_core::fleet::{
    Constraints, Position, RiderTerms, Stop, StopKind, Vehicle, CONSTRAINT_EPS,
};
use ridematch_core::matching::CostMatrix;
use ridematch_core::network::{Link, Node, NodeId, RoadNetwork};

// ---------------------------------------------------------------- assignment

/// Best (assigned count, total cost) over all partial assignments, by DP
/// over rows and the set of used columns. More rows assigned beats cheaper.
pub fn assignment_oracle(m: &CostMatrix) -> (usize, f64) {
    let (rows, cols) = (m.rows(), m.cols());
    assert!(cols <= 16);
    let better = |a: (usize, f64), b: (usize, f64)| a.0 > b.0 || (a.0 == b.0 && a.1 < b.1);
    // best[mask] after processing the first r rows
    let mut best: Vec<Option<(usize, f64)>> = vec![None; 1 << cols];
    best[0] = Some((0, 0.0));
    for r in 0..rows {
        let mut next: Vec<Option<(usize, f64)>> = vec![None; 1 << cols];
        for mask in 0..(1usize << cols) {
            let Some(cur) = best[mask] else { continue };
            let mut offer = |mask: usize, v: (usize, f64)| {
                if next[mask].is_none_or(|o| better(v, o)) {
                    next[mask] = Some(v);
                }
            };
            offer(mask, cur);
            for c in 0..cols {
                if mask & (1 << c) == 0 {
                    if let Some(cost) = m.get(r, c) {
                        offer(mask | (1 << c), (cur.0 + 1, cur.1 + cost));
                    }
                }
            }
        }
        best = next;
    }
    best.into_iter()
        .flatten()
        .fold((0, 0.0), |acc, v| if better(v, acc) { v } else { acc })
}

pub fn random_matrix(rng: &mut ChaCha8Rng, max_dim: usize, infeasible_p: f64) -> CostMatrix {
    let rows = rng.gen_range(0..=max_dim);
    let cols = rng.gen_range(0..=max_dim);
    let integral = rng.gen_bool(0.5);
    CostMatrix::from_rows(
        (0..rows)
            .map(|_| {
                (0..cols)
                    .map(|_| {
                        if rng.gen_bool(infeasible_p) {
                            None
                        } else if integral {
                            Some(rng.gen_range(0..20) as f64)
                        } else {
                            Some(rng.gen_range(0.0..500.0))
                        }
                    })
                    .collect()
            })
            .collect(),
    )
    .with_shape(rows, cols)
}

trait WithShape {
    fn with_shape(self, rows: usize, cols: usize) -> Self;
}

impl WithShape for CostMatrix {
    /// `from_rows` cannot express a 0-row matrix with columns; rebuild.
    fn with_shape(self, rows: usize, cols: usize) -> Self {
        if self.rows() == rows && self.cols() == cols {
            return self;
        }
        CostMatrix::new(rows, cols)
    }
}

// ------------------------------------------------------------------ matching

/// Maximum total weight of a matching in a graph on `n <= 16` vertices,
/// by DP over vertex subsets.
pub fn matching_oracle(n: usize, edges: &[(usize, usize, i64)]) -> i64 {
    assert!(n <= 16);
    let mut w = vec![vec![None::<i64>; n]; n];
    for &(a, b, x) in edges {
        if a != b {
            let e = w[a][b].map_or(x, |y: i64| y.max(x));
            w[a][b] = Some(e);
            w[b][a] = Some(e);
        }
    }
    let full = (1usize << n) - 1;
    let mut f = vec![0i64; 1 << n];
    for mask in 1..=full {
        let v = mask.trailing_zeros() as usize;
        let rest = mask & !(1 << v);
        let mut best = f[rest];
        let mut others = rest;
        while others != 0 {
            let u = others.trailing_zeros() as usize;
            others &= others - 1;
            if let Some(x) = w[v][u] {
                best = best.max(x + f[rest & !(1 << u)]);
            }
        }
        f[mask] = best;
    }
    f[full]
}

pub fn random_graph(rng: &mut ChaCha8Rng, max_n: usize) -> (usize, Vec<(usize, usize, i64)>) {
    let n = rng.gen_range(0..=max_n);
    let p = rng.gen_range(0.2..0.9);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(p) {
                let (x, y) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
                edges.push((x, y, rng.gen_range(1..30)));
            }
        }
    }
    edges.shuffle(rng);
    (n, edges)
}

/// `pairs` is a valid matching using only listed edges; returns its weight.
pub fn matching_weight(
    n: usize,
    edges: &[(usize, usize, i64)],
    pairs: &[(usize, usize)],
) -> Option<i64> {
    let mut used = vec![false; n];
    let mut total = 0;
    for &(a, b) in pairs {
        if a >= n || b >= n || a == b || used[a] || used[b] {
            return None;
        }
        used[a] = true;
        used[b] = true;
        total += edges
            .iter()
            .filter(|e| (e.0 == a && e.1 == b) || (e.0 == b && e.1 == a))
            .map(|e| e.2)
            .max()?;
    }
    Some(total)
}

// ----------------------------------------------------------------- insertion

/// All-pairs shortest times by Floyd–Warshall over the link list.
pub struct Times {
    index: BTreeMap<NodeId, usize>,
    t: Vec<Vec<f64>>,
}

impl Times {
    pub fn new(net: &RoadNetwork) -> Self {
        let index: BTreeMap<NodeId, usize> = net
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id, i))
            .collect();
        let n = index.len();
        let mut t = vec![vec![f64::INFINITY; n]; n];
        for (i, row) in t.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        for l in net.links() {
            let (a, b) = (index[&l.from], index[&l.to]);
            t[a][b] = t[a][b].min(l.length / l.speed);
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = t[i][k] + t[k][j];
                    if via < t[i][j] {
                        t[i][j] = via;
                    }
                }
            }
        }
        Times { index, t }
    }

    pub fn get(&self, a: NodeId, b: NodeId) -> f64 {
        self.t[self.index[&a]][self.index[&b]]
    }
}

/// A route candidate in the oracle: feasibility, added time, pickup time.
#[derive(Debug, Clone, Copy)]
pub struct OracleBest {
    pub added: f64,
    pub pickup_time: f64,
}

fn anchor(v: &Vehicle, net: &RoadNetwork, now: f64) -> (NodeId, f64) {
    match v.position {
        Position::AtNode(n) => (n, now),
        Position::OnLink { link, offset_m } => {
            let l = net.link(link).unwrap();
            (l.to, now + (l.length - offset_m) / l.speed)
        }
    }
}

/// Walks `route` from the anchor; `None` when any guarantee breaks.
/// Returns the finish time and the planned time of each stop.
fn walk(
    times: &Times,
    v: &Vehicle,
    start: (NodeId, f64),
    route: &[Stop],
    newcomer: &Request,
    c: &Constraints,
) -> Option<(f64, Vec<f64>)> {
    let (mut at, mut t) = start;
    let mut load = v.onboard.len();
    let mut planned = Vec::new();
    let mut picked: BTreeMap<RequestId, f64> = v
        .riders
        .iter()
        .filter_map(|(&id, r)| r.pickup_time.map(|p| (id, p)))
        .collect();
    for s in route {
        t += times.get(at, s.node);
        at = s.node;
        planned.push(t);
        let (req_t, direct) = if s.request_id == newcomer.id {
            (newcomer.request_time, newcomer.direct_time)
        } else {
            let r = &v.riders[&s.request_id];
            (r.request_time, r.direct_time)
        };
        match s.kind {
            StopKind::Pickup => {
                load += 1;
                if load > v.capacity || t - req_t > c.max_wait + CONSTRAINT_EPS {
                    return None;
                }
                picked.insert(s.request_id, t);
            }
            StopKind::Dropoff => {
                load -= 1;
                if t - picked[&s.request_id] > c.max_detour_factor * direct + CONSTRAINT_EPS {
                    return None;
                }
            }
        }
    }
    Some((t, planned))
}

/// Enumerates every placement of the newcomer's pickup and dropoff slots in
/// a route of length `n + 2` (old stops keep their order) and returns the
/// cheapest feasible one, ties to the earliest pickup.
pub fn insertion_oracle(
    times: &Times,
    net: &RoadNetwork,
    v: &Vehicle,
    req: &Request,
    c: &Constraints,
    now: f64,
) -> Option<OracleBest> {
    let start = anchor(v, net, now);
    let mut old_end = start.1;
    let mut at = start.0;
    for s in &v.route {
        old_end += times.get(at, s.node);
        at = s.node;
    }
    let old = old_end - start.1;
    let pick = Stop {
        kind: StopKind::Pickup,
        request_id: req.id,
        node: req.origin,
        planned_time: 0.0,
    };
    let drop = Stop {
        kind: StopKind::Dropoff,
        request_id: req.id,
        node: req.destination,
        planned_time: 0.0,
    };
    let len = v.route.len() + 2;
    let mut best: Option<OracleBest> = None;
    for p in 0..len {
        for d in p + 1..len {
            let mut old_stops = v.route.iter();
            let route: Vec<Stop> = (0..len)
                .map(|slot| {
                    if slot == p {
                        pick
                    } else if slot == d {
                        drop
                    } else {
                        *old_stops.next().unwrap()
                    }
                })
                .collect();
            let Some((end, planned)) = walk(times, v, start, &route, req, c) else {
                continue;
            };
            let cand = OracleBest {
                added: ((end - start.1) - old).max(0.0),
                pickup_time: planned[p],
            };
            best = match best {
                None => Some(cand),
                Some(b) if cand.added < b.added - 1e-9 => Some(cand),
                Some(b)
                    if cand.added <= b.added + 1e-9 && cand.pickup_time < b.pickup_time - 1e-9 =>
                {
                    Some(cand)
                }
                keep => keep,
            };
        }
    }
    best
}

/// A connected grid with randomly perturbed link lengths, so shortest paths
/// are mostly unique.
pub fn random_network(rng: &mut ChaCha8Rng) -> RoadNetwork {
    let rows = rng.gen_range(2..=4);
    let cols = rng.gen_range(2..=4);
    let id = |r: usize, c: usize| (r * cols + c) as NodeId;
    let mut nodes = Vec::new();
    let mut links = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            nodes.push(Node {
                id: id(r, c),
                x: c as f64 * 100.0,
                y: r as f64 * 100.0,
            });
            let mut add = |to: NodeId, rng: &mut ChaCha8Rng| {
                let len = rng.gen_range(50.0..200.0);
                let speed = rng.gen_range(5.0..15.0);
                links.push(Link::new(links.len() as u32, id(r, c), to, len, speed));
            };
            if c + 1 < cols {
                add(id(r, c + 1), rng);
            }
            if c > 0 {
                add(id(r, c - 1), rng);
            }
            if r + 1 < rows {
                add(id(r + 1, c), rng);
            }
            if r > 0 {
                add(id(r - 1, c), rng);
            }
        }
    }
    RoadNetwork::new(nodes, links).unwrap()
}

/// A vehicle with up to four planned stops (mix of onboard and waiting
/// riders) and a newcomer request.
pub fn random_insertion_case(
    rng: &mut ChaCha8Rng,
    net: &RoadNetwork,
) -> (Vehicle, Request, Constraints, f64) {
    let ids: Vec<NodeId> = net.node_ids().collect();
    let node = |rng: &mut ChaCha8Rng| ids[rng.gen_range(0..ids.len())];
    let od = |rng: &mut ChaCha8Rng| loop {
        let (o, d) = (node(rng), node(rng));
        if o != d {
            return (o, d);
        }
    };
    let now = 1000.0;
    let c = Constraints {
        max_wait: rng.gen_range(30.0..400.0),
        max_detour_factor: rng.gen_range(1.0..2.5),
        max_insertion_positions: None,
    };
    let mut v = Vehicle::new(0, rng.gen_range(1..=4), node(rng));
    if rng.gen_bool(0.4) {
        let l = &net.links()[rng.gen_range(0..net.link_count())];
        v.position = Position::OnLink {
            link: l.id,
            offset_m: rng.gen_range(0.0..l.length),
        };
    }
    let mut stops = 0;
    let mut next_id: RequestId = 1;
    // route as a list of per-rider stop sequences, interleaved below
    let mut seqs: Vec<Vec<Stop>> = Vec::new();
    while stops < 4 && rng.gen_bool(0.7) {
        let (o, d) = od(rng);
        let r = Request::new(next_id, now - rng.gen_range(0.0..200.0), o, d, net).unwrap();
        let mut terms = RiderTerms::from(&r);
        let drop = Stop {
            kind: StopKind::Dropoff,
            request_id: r.id,
            node: d,
            planned_time: 0.0,
        };
        if (v.onboard.len() < v.capacity && rng.gen_bool(0.5)) || stops == 3 {
            if v.onboard.len() >= v.capacity {
                break;
            }
            terms.pickup_time = Some(now - rng.gen_range(0.0..100.0));
            v.onboard.insert(r.id);
            seqs.push(vec![drop]);
            stops += 1;
        } else {
            v.assigned.insert(r.id);
            let pick = Stop {
                kind: StopKind::Pickup,
                request_id: r.id,
                node: o,
                planned_time: 0.0,
            };
            seqs.push(vec![pick, drop]);
            stops += 2;
        }
        v.riders.insert(r.id, terms);
        next_id += 1;
    }
    // random interleaving that keeps each rider's pickup before dropoff
    let mut cursors = vec![0usize; seqs.len()];
    loop {
        let open: Vec<usize> = (0..seqs.len())
            .filter(|&i| cursors[i] < seqs[i].len())
            .collect();
        let Some(&i) = open.choose(rng) else { break };
        v.route.push(seqs[i][cursors[i]]);
        cursors[i] += 1;
    }
    let (o, d) = od(rng);
    let req = Request::new(next_id, now - rng.gen_range(0.0..60.0), o, d, net).unwrap();
    (v, req, c, now)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
