//! Vehicles, stop sequences, the insertion heuristic and kinematics.
//!
//! A vehicle's route is an ordered list of pickup and dropoff stops. Planned
//! stop times are measured from the vehicle's *anchor*: the node it is
//! standing on, or the head of the link it is traversing together with the
//! time it will arrive there. Free-flow travel times make planned times exact,
//! so the constraints checked at insertion time still hold when the stops are
//! actually reached.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::demand::{Request, RequestId};
use crate::error::{Error, Result};
use crate::network::{LinkId, NodeId, RoadNetwork};

pub type VehicleId = u32;

/// Slack applied to wait and detour bounds to absorb float accumulation.
pub const CONSTRAINT_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopKind {
    Pickup,
    Dropoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub kind: StopKind,
    pub request_id: RequestId,
    pub node: NodeId,
    pub planned_time: f64,
}

/// What a vehicle needs to know about each passenger it carries or will
/// collect in order to keep their service guarantees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiderTerms {
    pub request_time: f64,
    pub direct_time: f64,
    pub origin: NodeId,
    pub destination: NodeId,
    /// Set once the passenger is onboard.
    pub pickup_time: Option<f64>,
}

impl From<&Request> for RiderTerms {
    fn from(r: &Request) -> Self {
        RiderTerms {
            request_time: r.request_time,
            direct_time: r.direct_time,
            origin: r.origin,
            destination: r.destination,
            pickup_time: r.pickup_time,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Position {
    AtNode(NodeId),
    /// Traversing `link`, `offset_m` meters from its tail.
    OnLink {
        link: LinkId,
        offset_m: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    pub max_wait: f64,
    pub max_detour_factor: f64,
    /// Scan only the first `n` route positions for pickup and dropoff.
    pub max_insertion_positions: Option<usize>,
}

impl Default for Constraints {
    fn default() -> Self {
        Constraints {
            max_wait: 600.0,
            max_detour_factor: 1.5,
            max_insertion_positions: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InsertionResult {
    pub feasible: bool,
    /// Empty when infeasible.
    pub new_route: Vec<Stop>,
    pub added_travel_time: f64,
    pub pickup_time: f64,
    /// Positions in the old route before which pickup and dropoff were placed.
    pub pickup_index: usize,
    pub dropoff_index: usize,
    /// Number of (pickup, dropoff) position pairs evaluated.
    pub positions_scanned: usize,
}

impl InsertionResult {
    fn infeasible(positions_scanned: usize) -> Self {
        InsertionResult {
            feasible: false,
            new_route: Vec::new(),
            added_travel_time: f64::INFINITY,
            pickup_time: f64::INFINITY,
            pickup_index: 0,
            dropoff_index: 0,
            positions_scanned,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleEventKind {
    Pickup,
    Dropoff,
    /// Route finished; the vehicle waits at its last stop.
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleEvent {
    pub time: f64,
    pub kind: VehicleEventKind,
    pub vehicle: VehicleId,
    pub request: Option<RequestId>,
    pub node: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: VehicleId,
    pub capacity: usize,
    pub onboard: BTreeSet<RequestId>,
    /// Assigned but not yet picked up.
    pub assigned: BTreeSet<RequestId>,
    pub riders: BTreeMap<RequestId, RiderTerms>,
    pub position: Position,
    pub route: Vec<Stop>,
    /// Meters driven.
    pub odometer: f64,
    /// Seconds spent with a non-empty route.
    pub busy_time: f64,
}

/// End-of-run vehicle totals, as persisted in `vehicles.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleSummary {
    pub id: VehicleId,
    pub capacity: usize,
    pub odometer_m: f64,
    pub busy_time_s: f64,
}

impl From<&Vehicle> for VehicleSummary {
    fn from(v: &Vehicle) -> Self {
        VehicleSummary {
            id: v.id,
            capacity: v.capacity,
            odometer_m: v.odometer,
            busy_time_s: v.busy_time,
        }
    }
}

impl Vehicle {
    pub fn new(id: VehicleId, capacity: usize, node: NodeId) -> Self {
        Vehicle {
            id,
            capacity,
            onboard: BTreeSet::new(),
            assigned: BTreeSet::new(),
            riders: BTreeMap::new(),
            position: Position::AtNode(node),
            route: Vec::new(),
            odometer: 0.0,
            busy_time: 0.0,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.route.is_empty()
    }

    /// Committed passengers (onboard plus assigned) below capacity.
    pub fn has_spare_capacity(&self) -> bool {
        self.onboard.len() + self.assigned.len() < self.capacity
    }

    /// The node from which the route is planned and the time the vehicle is
    /// there.
    pub fn anchor(&self, net: &RoadNetwork, now: f64) -> (NodeId, f64) {
        match self.position {
            Position::AtNode(n) => (n, now),
            Position::OnLink { link, offset_m } => {
                let l = net.link(link).expect("vehicle on known link");
                (l.to, now + (l.length - offset_m).max(0.0) / l.speed)
            }
        }
    }

    /// Planned duration of the current route from the anchor, seconds.
    pub fn route_duration(&self, net: &RoadNetwork, now: f64) -> f64 {
        let (node, t0) = self.anchor(net, now);
        route_end_time(net, node, t0, &self.route) - t0
    }

    /// Recomputes planned stop times from the current anchor.
    pub fn retime(&mut self, net: &RoadNetwork, now: f64) {
        let (mut at, mut t) = self.anchor(net, now);
        for stop in &mut self.route {
            t += net.travel_time(at, stop.node);
            stop.planned_time = t;
            at = stop.node;
        }
    }

    /// Commits an insertion computed by [`try_insert`] for `request`.
    pub fn apply_insertion(&mut self, request: &Request, ins: &InsertionResult) -> Result<()> {
        if !ins.feasible {
            return Err(Error::Consistency(format!(
                "vehicle {}: applying infeasible insertion of request {}",
                self.id, request.id
            )));
        }
        if self.riders.contains_key(&request.id) {
            return Err(Error::Consistency(format!(
                "vehicle {} already serves request {}",
                self.id, request.id
            )));
        }
        self.riders.insert(request.id, RiderTerms::from(request));
        self.assigned.insert(request.id);
        self.route = ins.new_route.clone();
        Ok(())
    }

    /// Drops an assigned (not yet picked up) request and its two stops.
    pub fn remove_assigned(
        &mut self,
        request_id: RequestId,
        net: &RoadNetwork,
        now: f64,
    ) -> Result<()> {
        if !self.assigned.remove(&request_id) {
            return Err(Error::Consistency(format!(
                "vehicle {}: request {} is not assigned-but-waiting",
                self.id, request_id
            )));
        }
        self.riders.remove(&request_id);
        self.route.retain(|s| s.request_id != request_id);
        self.retime(net, now);
        Ok(())
    }

    /// Moves the vehicle for `dt` seconds starting at `now`, serving stops as
    /// they are reached. Several stops at the same node are served in route
    /// order within one call.
    pub fn advance(&mut self, dt: f64, net: &RoadNetwork, now: f64) -> Result<Vec<VehicleEvent>> {
        if !(dt > 0.0) {
            return Err(Error::Argument(format!("dt must be positive, got {dt}")));
        }
        let mut events = Vec::new();
        let mut left = dt;
        loop {
            let Some(stop) = self.route.first().copied() else {
                break;
            };
            match self.position {
                Position::AtNode(node) if node == stop.node => {
                    let time = now + (dt - left);
                    self.serve(stop, time)?;
                    self.route.remove(0);
                    events.push(VehicleEvent {
                        time,
                        kind: match stop.kind {
                            StopKind::Pickup => VehicleEventKind::Pickup,
                            StopKind::Dropoff => VehicleEventKind::Dropoff,
                        },
                        vehicle: self.id,
                        request: Some(stop.request_id),
                        node,
                    });
                    if self.route.is_empty() {
                        events.push(VehicleEvent {
                            time,
                            kind: VehicleEventKind::Idle,
                            vehicle: self.id,
                            request: None,
                            node,
                        });
                    }
                }
                Position::AtNode(node) => {
                    if left <= 0.0 {
                        break;
                    }
                    let link = net.next_link(node, stop.node).ok_or(Error::NoPath {
                        from: node,
                        to: stop.node,
                    })?;
                    self.position = Position::OnLink {
                        link: link.id,
                        offset_m: 0.0,
                    };
                }
                Position::OnLink { link, offset_m } => {
                    if left <= 0.0 {
                        break;
                    }
                    let l = net.link(link)?;
                    let remaining = (l.length - offset_m).max(0.0) / l.speed;
                    if remaining <= left + 1e-12 {
                        self.odometer += l.length - offset_m;
                        left = (left - remaining).max(0.0);
                        self.position = Position::AtNode(l.to);
                    } else {
                        let moved = l.speed * left;
                        self.odometer += moved;
                        self.position = Position::OnLink {
                            link,
                            offset_m: offset_m + moved,
                        };
                        left = 0.0;
                    }
                }
            }
        }
        self.busy_time += dt - left;
        Ok(events)
    }

    fn serve(&mut self, stop: Stop, time: f64) -> Result<()> {
        match stop.kind {
            StopKind::Pickup => {
                if !self.assigned.remove(&stop.request_id) {
                    return Err(Error::Consistency(format!(
                        "vehicle {}: pickup of request {} that is not assigned to it",
                        self.id, stop.request_id
                    )));
                }
                self.onboard.insert(stop.request_id);
                if let Some(r) = self.riders.get_mut(&stop.request_id) {
                    r.pickup_time = Some(time);
                }
                if self.onboard.len() > self.capacity {
                    return Err(Error::Consistency(format!(
                        "vehicle {} over capacity ({} > {})",
                        self.id,
                        self.onboard.len(),
                        self.capacity
                    )));
                }
            }
            StopKind::Dropoff => {
                if !self.onboard.remove(&stop.request_id) {
                    return Err(Error::Consistency(format!(
                        "vehicle {}: dropoff of request {} that is not onboard",
                        self.id, stop.request_id
                    )));
                }
                self.riders.remove(&stop.request_id);
            }
        }
        Ok(())
    }
}

fn route_end_time(net: &RoadNetwork, mut at: NodeId, mut t: f64, route: &[Stop]) -> f64 {
    for stop in route {
        t += net.travel_time(at, stop.node);
        at = stop.node;
    }
    t
}

/// Walks a candidate route, filling planned times, and checks capacity,
/// wait and ride-time bounds for every passenger. Returns the end time.
fn evaluate_route(
    net: &RoadNetwork,
    anchor: (NodeId, f64),
    route: &mut [Stop],
    initial_load: usize,
    capacity: usize,
    riders: &BTreeMap<RequestId, RiderTerms>,
    newcomer: (RequestId, &RiderTerms),
    constraints: &Constraints,
) -> Option<f64> {
    let (mut at, mut t) = anchor;
    let mut load = initial_load;
    let mut planned_pickups: Vec<(RequestId, f64)> = Vec::with_capacity(route.len() / 2 + 1);
    for stop in route.iter_mut() {
        t += net.travel_time(at, stop.node);
        stop.planned_time = t;
        at = stop.node;
        let terms = if stop.request_id == newcomer.0 {
            newcomer.1
        } else {
            riders.get(&stop.request_id)?
        };
        match stop.kind {
            StopKind::Pickup => {
                load += 1;
                if load > capacity {
                    return None;
                }
                if t - terms.request_time > constraints.max_wait + CONSTRAINT_EPS {
                    return None;
                }
                planned_pickups.push((stop.request_id, t));
            }
            StopKind::Dropoff => {
                load = load.checked_sub(1)?;
                let picked = terms.pickup_time.or_else(|| {
                    planned_pickups
                        .iter()
                        .find(|(id, _)| *id == stop.request_id)
                        .map(|&(_, pt)| pt)
                })?;
                let ride = t - picked;
                if ride > constraints.max_detour_factor * terms.direct_time + CONSTRAINT_EPS {
                    return None;
                }
            }
        }
    }
    Some(t)
}

/// Cheapest feasible placement of `request`'s pickup and dropoff into the
/// vehicle's current route.
///
/// Every pair of positions `i <= j` is scanned: pickup goes before old stop
/// `i`, dropoff before old stop `j` (and after the pickup). A placement is
/// feasible when capacity holds after every stop, the newcomer waits at most
/// `max_wait`, every passenger's in-vehicle time stays within
/// `max_detour_factor` times their direct time, and every not-yet-collected
/// passenger still meets their wait bound. Cost is added route duration;
/// ties go to the earlier pickup, then to the smaller positions.
pub fn try_insert(
    vehicle: &Vehicle,
    request: &Request,
    net: &RoadNetwork,
    constraints: &Constraints,
    now: f64,
) -> InsertionResult {
    let anchor = vehicle.anchor(net, now);
    let old_end = route_end_time(net, anchor.0, anchor.1, &vehicle.route);
    let old_duration = old_end - anchor.1;
    let n = vehicle.route.len();
    let limit = constraints.max_insertion_positions.map_or(n, |c| c.min(n));
    let terms = RiderTerms::from(request);
    let pickup = Stop {
        kind: StopKind::Pickup,
        request_id: request.id,
        node: request.origin,
        planned_time: 0.0,
    };
    let dropoff = Stop {
        kind: StopKind::Dropoff,
        request_id: request.id,
        node: request.destination,
        planned_time: 0.0,
    };

    let mut best: Option<InsertionResult> = None;
    let mut scanned = 0usize;
    let mut candidate = Vec::with_capacity(n + 2);
    for i in 0..=limit {
        for j in i..=limit {
            scanned += 1;
            candidate.clear();
            candidate.extend_from_slice(&vehicle.route[..i]);
            candidate.push(pickup);
            candidate.extend_from_slice(&vehicle.route[i..j]);
            candidate.push(dropoff);
            candidate.extend_from_slice(&vehicle.route[j..]);
            let Some(end) = evaluate_route(
                net,
                anchor,
                &mut candidate,
                vehicle.onboard.len(),
                vehicle.capacity,
                &vehicle.riders,
                (request.id, &terms),
                constraints,
            ) else {
                continue;
            };
            let added = ((end - anchor.1) - old_duration).max(0.0);
            let pickup_time = candidate[i].planned_time;
            let better = match &best {
                None => true,
                Some(b) => {
                    let tol = 1e-9 * b.added_travel_time.abs().max(1.0);
                    added < b.added_travel_time - tol
                        || (added <= b.added_travel_time + tol
                            && pickup_time < b.pickup_time - 1e-9)
                }
            };
            if better {
                best = Some(InsertionResult {
                    feasible: true,
                    new_route: candidate.clone(),
                    added_travel_time: added,
                    pickup_time,
                    pickup_index: i,
                    dropoff_index: j,
                    positions_scanned: 0,
                });
            }
        }
    }
    match best {
        Some(mut b) => {
            b.positions_scanned = scanned;
            b
        }
        None => InsertionResult::infeasible(scanned),
    }
}

/// Uniformly random initial placement over nodes, one independent stream.
pub fn place_vehicles(net: &RoadNetwork, count: usize, capacity: usize, seed: u64) -> Vec<Vehicle> {
    let ids: Vec<NodeId> = net.node_ids().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| Vehicle::new(i as VehicleId, capacity, ids[rng.gen_range(0..ids.len())]))
        .collect()
}
