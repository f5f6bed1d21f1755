//! Two-step batch matching.
//!
//! Step 1 builds a request-by-vehicle cost matrix from insertion costs and
//! solves it as an assignment problem, so each vehicle takes at most one new
//! request. Step 2 looks at the vehicles that received a request and asks,
//! for every pair, how much travel time is saved if one of them hands its new
//! request to the other. Those savings weight an undirected vehicle graph
//! whose maximum-weight matching decides which hand-overs happen.
//!
//! Nothing here mutates the caller's fleet: all work happens on shadow
//! copies, and the result carries the final shadow of every vehicle whose
//! route changed.

use std::collections::{BTreeMap, BTreeSet};

use crate::demand::{Request, RequestId};
use crate::fleet::{try_insert, Constraints, InsertionResult, Vehicle, VehicleId};
use crate::network::RoadNetwork;

use super::blossom::max_weight_matching;
use super::hungarian::{hungarian, CostMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MatchOptions {
    /// Re-run both steps on still-unmatched requests until a pass assigns
    /// nothing new.
    pub repeat_until_stable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step1Pair {
    pub request: RequestId,
    pub vehicle: VehicleId,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub donor: VehicleId,
    pub receiver: VehicleId,
    pub request: RequestId,
    pub saving: f64,
}

/// Counters describing the size of the work done, in the terms used by the
/// complexity analysis: requests, candidate vehicles, insertion positions,
/// cost-matrix size and vehicle-graph size.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MatchStats {
    pub requests: usize,
    pub max_candidates: usize,
    pub insertions: usize,
    pub positions_scanned: usize,
    pub matrix_rows: usize,
    pub matrix_cols: usize,
    pub graph_vertices: usize,
    pub graph_edges: usize,
}

impl MatchStats {
    /// Deterministic proxy for computational effort; reading the inbox
    /// costs one unit per request even when no vehicle is available.
    pub fn work_units(&self) -> u64 {
        let n = self.matrix_rows as u64;
        let m = (self.matrix_cols + self.matrix_rows) as u64;
        let v = self.graph_vertices as u64;
        let e = self.graph_edges as u64;
        self.requests as u64 + self.positions_scanned as u64 + n * n * m + v * v * e
    }

    fn absorb(&mut self, other: &MatchStats) {
        self.requests = self.requests.max(other.requests);
        self.max_candidates = self.max_candidates.max(other.max_candidates);
        self.insertions += other.insertions;
        self.positions_scanned += other.positions_scanned;
        self.matrix_rows += other.matrix_rows;
        self.matrix_cols += other.matrix_cols;
        self.graph_vertices += other.graph_vertices;
        self.graph_edges += other.graph_edges;
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    pub assignments: BTreeMap<RequestId, VehicleId>,
    pub step1: Vec<Step1Pair>,
    pub merges: Vec<Merge>,
    pub unmatched: Vec<RequestId>,
    /// Sum over touched vehicles of new minus old planned route duration.
    pub total_added_time: f64,
    /// Final shadow state of every vehicle whose route changed.
    pub updated: BTreeMap<VehicleId, Vehicle>,
    pub stats: MatchStats,
}

/// Undirected vehicle graph of step 2. Each edge remembers which vehicle
/// donates its request and the insertion that realizes the merge.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleGraph {
    pub vertices: Vec<VehicleId>,
    pub edges: Vec<GraphEdge>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
    pub donor: VehicleId,
    pub receiver: VehicleId,
    pub insertion: InsertionResult,
}

fn planned_duration(v: &Vehicle, net: &RoadNetwork, now: f64) -> f64 {
    v.route_duration(net, now)
}

/// One-to-one assignment of requests to candidate vehicles.
///
/// `candidates[i]` lists the vehicles request `i` may use; every listed id
/// must be present in `fleet`. Requests with no feasible insertion are
/// pruned before the assignment is solved and reported unmatched.
pub fn gmomatch_step1(
    requests: &[Request],
    candidates: &[Vec<VehicleId>],
    fleet: &BTreeMap<VehicleId, Vehicle>,
    net: &RoadNetwork,
    constraints: &Constraints,
    now: f64,
) -> MatchResult {
    assert_eq!(
        requests.len(),
        candidates.len(),
        "one candidate list per request"
    );
    let mut stats = MatchStats {
        requests: requests.len(),
        max_candidates: candidates.iter().map(Vec::len).max().unwrap_or(0),
        ..MatchStats::default()
    };
    let cols: Vec<VehicleId> = candidates
        .iter()
        .flatten()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let col_of: BTreeMap<VehicleId, usize> =
        cols.iter().enumerate().map(|(i, &v)| (v, i)).collect();

    let mut options: Vec<BTreeMap<usize, InsertionResult>> = Vec::with_capacity(requests.len());
    for (req, cands) in requests.iter().zip(candidates) {
        let mut row = BTreeMap::new();
        for vid in cands {
            let vehicle = &fleet[vid];
            let ins = try_insert(vehicle, req, net, constraints, now);
            stats.insertions += 1;
            stats.positions_scanned += ins.positions_scanned;
            if ins.feasible {
                row.insert(col_of[vid], ins);
            }
        }
        options.push(row);
    }

    let rows: Vec<usize> = (0..requests.len())
        .filter(|&i| !options[i].is_empty())
        .collect();
    let mut matrix = CostMatrix::new(rows.len(), cols.len());
    for (r, &i) in rows.iter().enumerate() {
        for (&c, ins) in &options[i] {
            matrix.set(r, c, Some(ins.added_travel_time));
        }
    }
    stats.matrix_rows = rows.len();
    stats.matrix_cols = cols.len();
    let solution = hungarian(&matrix);

    let mut result = MatchResult {
        stats,
        ..MatchResult::default()
    };
    let mut matched = BTreeSet::new();
    for (r, col) in solution.row_to_col.iter().enumerate() {
        let Some(c) = *col else { continue };
        let i = rows[r];
        let req = &requests[i];
        let vid = cols[c];
        let ins = &options[i][&c];
        let mut shadow = fleet[&vid].clone();
        shadow
            .apply_insertion(req, ins)
            .expect("feasible insertion into a fresh shadow");
        result.step1.push(Step1Pair {
            request: req.id,
            vehicle: vid,
            cost: ins.added_travel_time,
        });
        result.assignments.insert(req.id, vid);
        result.updated.insert(vid, shadow);
        matched.insert(i);
    }
    result.step1.sort_by_key(|p| p.vehicle);
    result.unmatched = (0..requests.len())
        .filter(|i| !matched.contains(i))
        .map(|i| requests[i].id)
        .collect();
    result.total_added_time = result
        .updated
        .iter()
        .map(|(vid, v)| planned_duration(v, net, now) - planned_duration(&fleet[vid], net, now))
        .sum();
    result
}

/// Builds the step-2 vehicle graph over the vehicles assigned in step 1.
pub fn build_vehicle_graph(
    step1: &MatchResult,
    requests: &[Request],
    net: &RoadNetwork,
    constraints: &Constraints,
    now: f64,
    stats: &mut MatchStats,
) -> VehicleGraph {
    let by_id: BTreeMap<RequestId, &Request> = requests.iter().map(|r| (r.id, r)).collect();
    let vertices: Vec<VehicleId> = step1.step1.iter().map(|p| p.vehicle).collect();
    let mut edges = Vec::new();
    for a in 0..vertices.len() {
        for b in a + 1..vertices.len() {
            let pa = step1.step1[a];
            let pb = step1.step1[b];
            // a donates into b, then b into a
            let mut best: Option<(f64, VehicleId, VehicleId, InsertionResult)> = None;
            for (donor, receiver) in [(pa, pb), (pb, pa)] {
                let shadow = &step1.updated[&receiver.vehicle];
                let ins = try_insert(shadow, by_id[&donor.request], net, constraints, now);
                stats.insertions += 1;
                stats.positions_scanned += ins.positions_scanned;
                if !ins.feasible {
                    continue;
                }
                let saving = donor.cost - ins.added_travel_time;
                let replace = match &best {
                    None => true,
                    Some((s, _, r, _)) => saving > *s || (saving == *s && receiver.vehicle < *r),
                };
                if replace {
                    best = Some((saving, donor.vehicle, receiver.vehicle, ins));
                }
            }
            if let Some((saving, donor, receiver, insertion)) = best {
                if saving > 0.0 {
                    edges.push(GraphEdge {
                        a,
                        b,
                        weight: saving,
                        donor,
                        receiver,
                        insertion,
                    });
                }
            }
        }
    }
    stats.graph_vertices += vertices.len();
    stats.graph_edges += edges.len();
    VehicleGraph { vertices, edges }
}

/// Merges pairs of step-1 vehicles whose combined service saves travel
/// time. The donor gives up its step-1 request and reverts to its state in
/// `fleet`; the receiver serves both.
pub fn gmomatch_step2(
    step1: MatchResult,
    requests: &[Request],
    fleet: &BTreeMap<VehicleId, Vehicle>,
    net: &RoadNetwork,
    constraints: &Constraints,
    now: f64,
) -> MatchResult {
    let mut result = step1;
    if result.step1.len() < 2 {
        return result;
    }
    let mut stats = result.stats;
    let graph = build_vehicle_graph(&result, requests, net, constraints, now, &mut stats);
    result.stats = stats;
    let weighted: Vec<(usize, usize, f64)> =
        graph.edges.iter().map(|e| (e.a, e.b, e.weight)).collect();
    let pairs = max_weight_matching(graph.vertices.len(), &weighted);
    let by_id: BTreeMap<RequestId, &Request> = requests.iter().map(|r| (r.id, r)).collect();
    for (a, b) in pairs {
        let edge = graph
            .edges
            .iter()
            .find(|e| e.a == a && e.b == b)
            .expect("matched pair is an edge");
        let donor_req = result
            .step1
            .iter()
            .find(|p| p.vehicle == edge.donor)
            .map(|p| p.request)
            .expect("donor has a step-1 request");
        let receiver = result
            .updated
            .get_mut(&edge.receiver)
            .expect("receiver shadow");
        receiver
            .apply_insertion(by_id[&donor_req], &edge.insertion)
            .expect("merge insertion is feasible on an untouched shadow");
        result.updated.remove(&edge.donor);
        result.assignments.insert(donor_req, edge.receiver);
        result.merges.push(Merge {
            donor: edge.donor,
            receiver: edge.receiver,
            request: donor_req,
            saving: edge.weight,
        });
    }
    result.merges.sort_by_key(|m| m.donor);
    result.total_added_time = result
        .updated
        .iter()
        .map(|(vid, v)| planned_duration(v, net, now) - planned_duration(&fleet[vid], net, now))
        .sum();
    result
}

/// Step 1 followed by step 2. Unmatched requests are reported for retry in a
/// later round.
pub fn gmomatch(
    requests: &[Request],
    candidates: &[Vec<VehicleId>],
    fleet: &BTreeMap<VehicleId, Vehicle>,
    net: &RoadNetwork,
    constraints: &Constraints,
    now: f64,
    options: MatchOptions,
) -> MatchResult {
    let first = gmomatch_step2(
        gmomatch_step1(requests, candidates, fleet, net, constraints, now),
        requests,
        fleet,
        net,
        constraints,
        now,
    );
    if !options.repeat_until_stable {
        return first;
    }

    let mut total = first;
    loop {
        if total.unmatched.is_empty() {
            break;
        }
        let mut current = fleet.clone();
        for (vid, v) in &total.updated {
            current.insert(*vid, v.clone());
        }
        let pending: BTreeSet<RequestId> = total.unmatched.iter().copied().collect();
        let (reqs, cands): (Vec<Request>, Vec<Vec<VehicleId>>) = requests
            .iter()
            .zip(candidates)
            .filter(|(r, _)| pending.contains(&r.id))
            .map(|(r, c)| (r.clone(), c.clone()))
            .unzip();
        let pass = gmomatch_step2(
            gmomatch_step1(&reqs, &cands, &current, net, constraints, now),
            &reqs,
            &current,
            net,
            constraints,
            now,
        );
        if pass.assignments.is_empty() {
            total.stats.absorb(&pass.stats);
            break;
        }
        total
            .assignments
            .extend(pass.assignments.iter().map(|(r, v)| (*r, *v)));
        total.step1.extend(pass.step1.iter().copied());
        total.merges.extend(pass.merges.iter().copied());
        total.updated.extend(pass.updated);
        total.unmatched = pass.unmatched;
        total.stats.absorb(&pass.stats);
    }
    total.total_added_time = total
        .updated
        .iter()
        .map(|(vid, v)| planned_duration(v, net, now) - planned_duration(&fleet[vid], net, now))
        .sum();
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> RoadNetwork {
        RoadNetwork::line(n, 100.0, 10.0).unwrap()
    }

    fn fleet(vs: Vec<Vehicle>) -> BTreeMap<VehicleId, Vehicle> {
        vs.into_iter().map(|v| (v.id, v)).collect()
    }

    #[test]
    fn single_request_single_vehicle() {
        let net = line(4);
        let r = Request::new(0, 0.0, 1, 3, &net).unwrap();
        let f = fleet(vec![Vehicle::new(0, 4, 1)]);
        let res = gmomatch_step1(
            std::slice::from_ref(&r),
            &[vec![0]],
            &f,
            &net,
            &Constraints::default(),
            0.0,
        );
        assert_eq!(res.assignments[&0], 0);
        assert_eq!(res.step1[0].cost, r.direct_time);
    }

    #[test]
    fn pigeonhole_keeps_cheaper_request() {
        let net = line(5);
        let near = Request::new(0, 0.0, 1, 2, &net).unwrap();
        let far = Request::new(1, 0.0, 4, 3, &net).unwrap();
        let f = fleet(vec![Vehicle::new(0, 1, 0)]);
        let res = gmomatch_step1(
            &[near, far],
            &[vec![0], vec![0]],
            &f,
            &net,
            &Constraints::default(),
            0.0,
        );
        assert_eq!(res.assignments.len(), 1);
        assert_eq!(res.assignments.get(&0), Some(&0));
        assert_eq!(res.unmatched, vec![1]);
    }

    #[test]
    fn identical_trips_merge() {
        let net = line(5);
        let a = Request::new(0, 0.0, 0, 4, &net).unwrap();
        let b = Request::new(1, 0.0, 0, 4, &net).unwrap();
        let f = fleet(vec![Vehicle::new(0, 4, 0), Vehicle::new(1, 4, 0)]);
        let reqs = [a, b];
        let cands = [vec![0, 1], vec![0, 1]];
        let res = gmomatch(
            &reqs,
            &cands,
            &f,
            &net,
            &Constraints::default(),
            0.0,
            MatchOptions::default(),
        );
        assert_eq!(res.merges.len(), 1);
        let m = res.merges[0];
        // equal savings both ways: the smaller id receives
        assert_eq!(m.receiver, 0);
        assert_eq!(m.saving, 40.0);
        assert!(res.assignments.values().all(|&v| v == 0));
        assert_eq!(res.total_added_time, 40.0);
        assert!(!res.updated.contains_key(&1));
    }

    #[test]
    fn opposite_directions_do_not_merge() {
        let net = line(5);
        let east = Request::new(0, 0.0, 2, 4, &net).unwrap();
        let west = Request::new(1, 0.0, 2, 0, &net).unwrap();
        let f = fleet(vec![Vehicle::new(0, 4, 2), Vehicle::new(1, 4, 2)]);
        let c = Constraints {
            max_detour_factor: 1.5,
            ..Constraints::default()
        };
        let res = gmomatch(
            &[east, west],
            &[vec![0, 1], vec![0, 1]],
            &f,
            &net,
            &c,
            0.0,
            MatchOptions::default(),
        );
        assert!(res.merges.is_empty());
        assert_eq!(res.assignments.len(), 2);
    }

    #[test]
    fn zero_requests() {
        let net = line(3);
        let f = fleet(vec![Vehicle::new(0, 4, 0)]);
        let res = gmomatch(
            &[],
            &[],
            &f,
            &net,
            &Constraints::default(),
            0.0,
            MatchOptions::default(),
        );
        assert!(res.assignments.is_empty() && res.unmatched.is_empty() && res.merges.is_empty());
    }

    #[test]
    fn one_request_two_vehicles_picks_closer() {
        let net = line(5);
        let r = Request::new(0, 0.0, 3, 4, &net).unwrap();
        let f = fleet(vec![Vehicle::new(0, 4, 0), Vehicle::new(1, 4, 2)]);
        let res = gmomatch(
            &[r],
            &[vec![0, 1]],
            &f,
            &net,
            &Constraints::default(),
            0.0,
            MatchOptions::default(),
        );
        assert_eq!(res.assignments[&0], 1);
        assert!(res.merges.is_empty());
    }

    #[test]
    fn repeat_knob_reuses_freed_vehicles() {
        let net = line(5);
        // three identical trips, two vehicles: one pass leaves one unmatched,
        // but after the merge a vehicle is free again
        let reqs: Vec<Request> = (0..3)
            .map(|i| Request::new(i, 0.0, 0, 4, &net).unwrap())
            .collect();
        let cands = vec![vec![0, 1]; 3];
        let f = fleet(vec![Vehicle::new(0, 4, 0), Vehicle::new(1, 4, 0)]);
        let once = gmomatch(
            &reqs,
            &cands,
            &f,
            &net,
            &Constraints::default(),
            0.0,
            MatchOptions::default(),
        );
        assert_eq!(once.unmatched.len(), 1);
        let again = gmomatch(
            &reqs,
            &cands,
            &f,
            &net,
            &Constraints::default(),
            0.0,
            MatchOptions {
                repeat_until_stable: true,
            },
        );
        assert!(again.unmatched.is_empty());
        assert_eq!(again.assignments.len(), 3);
    }
}
