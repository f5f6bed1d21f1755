//! Centralized and intersection-level dispatching.
//!
//! In distributed mode every intersection hosts a local dispatcher. A ride
//! request goes to the dispatcher at its origin and stays in that inbox until
//! it is matched or expires. At each matching time an active dispatcher
//! discovers vehicles: those on its own inbound links or parked at it (search
//! level 0), plus those reported by every intersection within `k` hops
//! (search level `k`). Because search areas overlap, each discovered vehicle
//! is claimed from its owning intersection, which grants it to exactly one
//! claimant. Dispatchers then run the two-step matcher on their inbox and
//! granted vehicles independently.
//!
//! Vehicle-to-intersection and intersection-to-intersection traffic is only
//! simulated: every exchange is recorded as a [`Message`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demand::{Request, RequestBook, RequestId, RequestState};
use crate::error::{Error, Result};
use crate::fleet::{Constraints, Position, Vehicle, VehicleId};
use crate::matching::{gmomatch, MatchOptions, MatchResult};
use crate::network::{NodeId, RoadNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Centralized,
    Distributed,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Centralized => "centralized",
            Mode::Distributed => "distributed",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "centralized" | "central" => Ok(Mode::Centralized),
            "distributed" => Ok(Mode::Distributed),
            other => Err(Error::ConfigKey {
                key: "mode".into(),
                msg: format!("expected centralized or distributed, got {other:?}"),
            }),
        }
    }
}

/// How far a dispatcher extends its vehicle search, in intersection hops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SearchLevel(u8);

impl SearchLevel {
    pub const MAX: u8 = 3;

    pub fn new(level: u8) -> Result<Self> {
        if level > Self::MAX {
            return Err(Error::ConfigKey {
                key: "search_level".into(),
                msg: format!("must be 0..=3, got {level}"),
            });
        }
        Ok(SearchLevel(level))
    }

    pub fn hops(self) -> u32 {
        self.0 as u32
    }
}

impl fmt::Display for SearchLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    /// Passenger to dispatcher (V2I).
    RideRequest,
    /// Dispatcher to neighbor dispatcher (I2I).
    VehicleQuery,
    VehicleReply,
    VehicleClaim,
    VehicleGrant,
    VehicleDeny,
    /// Dispatcher to vehicle (V2I).
    Assignment,
}

impl MessageKind {
    pub const ALL: [MessageKind; 7] = [
        MessageKind::RideRequest,
        MessageKind::VehicleQuery,
        MessageKind::VehicleReply,
        MessageKind::VehicleClaim,
        MessageKind::VehicleGrant,
        MessageKind::VehicleDeny,
        MessageKind::Assignment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::RideRequest => "ride_request",
            MessageKind::VehicleQuery => "vehicle_query",
            MessageKind::VehicleReply => "vehicle_reply",
            MessageKind::VehicleClaim => "vehicle_claim",
            MessageKind::VehicleGrant => "vehicle_grant",
            MessageKind::VehicleDeny => "vehicle_deny",
            MessageKind::Assignment => "assignment",
        }
    }
}

impl FromStr for MessageKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MessageKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Integrity(format!("unknown message kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Endpoint {
    Passenger(RequestId),
    Vehicle(VehicleId),
    Intersection(NodeId),
    Central,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Passenger(r) => write!(f, "P{r}"),
            Endpoint::Vehicle(v) => write!(f, "V{v}"),
            Endpoint::Intersection(n) => write!(f, "I{n}"),
            Endpoint::Central => f.write_str("C"),
        }
    }
}

impl From<Endpoint> for String {
    fn from(e: Endpoint) -> String {
        e.to_string()
    }
}

impl TryFrom<String> for Endpoint {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Endpoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Integrity(format!("bad endpoint {s:?}"));
        if s == "C" {
            return Ok(Endpoint::Central);
        }
        if s.is_empty() || !s.is_char_boundary(1) {
            return Err(bad());
        }
        let (tag, num) = s.split_at(1);
        let num: u32 = num.parse().map_err(|_| bad())?;
        match tag {
            "P" => Ok(Endpoint::Passenger(num)),
            "V" => Ok(Endpoint::Vehicle(num)),
            "I" => Ok(Endpoint::Intersection(num)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub round: u64,
    pub kind: MessageKind,
    pub from: Endpoint,
    pub to: Endpoint,
    pub vehicle: Option<VehicleId>,
    pub request: Option<RequestId>,
}

/// A local dispatcher at one intersection.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct I2Dispatcher {
    pub node: NodeId,
    /// Requests routed here, in arrival order.
    pub inbox: Vec<RequestId>,
    /// Vehicles discovered in the latest round.
    pub discovered: Vec<VehicleId>,
    /// Matching time of the latest round, seconds.
    pub round_ct: f64,
    pub sent: BTreeMap<MessageKind, u64>,
    pub received: BTreeMap<MessageKind, u64>,
}

impl I2Dispatcher {
    pub fn new(node: NodeId) -> Self {
        I2Dispatcher {
            node,
            ..Default::default()
        }
    }
}

/// How per-dispatcher computation time is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CtSource {
    /// Wall-clock time of the matching call.
    #[default]
    Wall,
    /// Deterministic operation count, one nanosecond per unit.
    Work,
}

impl FromStr for CtSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wall" => Ok(CtSource::Wall),
            "work" => Ok(CtSource::Work),
            other => Err(Error::ConfigKey {
                key: "ct_source".into(),
                msg: format!("expected wall or work, got {other:?}"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DispatchOptions {
    pub matching: MatchOptions,
    pub ct_source: CtSource,
    /// Run per-dispatcher matching on the rayon pool.
    pub parallel: bool,
}

/// Summary of one matching round.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    pub time: f64,
    /// Dispatchers that ran matching (zeta).
    pub active_dispatchers: usize,
    pub requests: usize,
    pub assigned: usize,
    pub merges: usize,
    /// Max over active dispatchers of their matching time.
    pub ct_parallel: f64,
    /// Sum over active dispatchers of their matching time.
    pub ct_sequential: f64,
    pub work_units: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoundOutcome {
    /// Committed (request, vehicle) pairs in ascending request id order.
    pub assignments: Vec<(RequestId, VehicleId)>,
    pub record: RoundRecord,
    pub messages: Vec<Message>,
}

/// Persistent dispatcher state carried across rounds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DispatchState {
    pub intersections: BTreeMap<NodeId, I2Dispatcher>,
    /// Centralized mode inbox.
    pub central: Vec<RequestId>,
    /// Arrived but not yet routed to a dispatcher.
    pub unrouted: Vec<RequestId>,
}

impl DispatchState {
    pub fn has_pending(&self, requests: &RequestBook) -> bool {
        let pending = |id: &RequestId| {
            requests
                .get(*id)
                .is_some_and(|r| r.state == RequestState::Pending)
        };
        self.unrouted.iter().any(pending)
            || self.central.iter().any(pending)
            || self
                .intersections
                .values()
                .any(|d| d.inbox.iter().any(pending))
    }
}

/// Requests originate at intersections, so the nearest dispatcher is the one
/// at the origin node.
pub fn route_request(request: &Request) -> NodeId {
    request.origin
}

/// Intersection responsible for a vehicle: the head of the link it is on, or
/// the node it is parked at.
pub fn owner_of(vehicle: &Vehicle, net: &RoadNetwork) -> NodeId {
    match vehicle.position {
        Position::AtNode(n) => n,
        Position::OnLink { link, .. } => net.link(link).expect("vehicle on known link").to,
    }
}

/// Available vehicles (spare capacity) grouped by owning intersection.
pub fn owned_vehicles(vehicles: &[Vehicle], net: &RoadNetwork) -> BTreeMap<NodeId, Vec<VehicleId>> {
    let mut owned: BTreeMap<NodeId, Vec<VehicleId>> = BTreeMap::new();
    for v in vehicles.iter().filter(|v| v.has_spare_capacity()) {
        owned.entry(owner_of(v, net)).or_default().push(v.id);
    }
    owned
}

/// Vehicle search by the dispatcher at `i2`: its own vehicles plus those
/// reported by every intersection within the search level. One query and one
/// reply are exchanged with each other intersection in range.
pub fn discover_vehicles(
    i2: NodeId,
    level: SearchLevel,
    net: &RoadNetwork,
    owned: &BTreeMap<NodeId, Vec<VehicleId>>,
    round: u64,
) -> Result<(Vec<VehicleId>, Vec<Message>)> {
    let area = net.k_hop_neighbors(i2, level.hops())?;
    let mut found = Vec::new();
    let mut messages = Vec::new();
    for node in area {
        if node != i2 {
            messages.push(Message {
                round,
                kind: MessageKind::VehicleQuery,
                from: Endpoint::Intersection(i2),
                to: Endpoint::Intersection(node),
                vehicle: None,
                request: None,
            });
            messages.push(Message {
                round,
                kind: MessageKind::VehicleReply,
                from: Endpoint::Intersection(node),
                to: Endpoint::Intersection(i2),
                vehicle: None,
                request: None,
            });
        }
        if let Some(vs) = owned.get(&node) {
            found.extend_from_slice(vs);
        }
    }
    found.sort_unstable();
    Ok((found, messages))
}

/// Grants each claimed vehicle to exactly one claimant: the one fewest hops
/// from the vehicle's owner, ties to the smallest intersection id. Every
/// claim is answered with a grant or a deny from the owner.
pub fn resolve_claims(
    claims: &BTreeMap<NodeId, Vec<VehicleId>>,
    owners: &BTreeMap<VehicleId, NodeId>,
    net: &RoadNetwork,
    round: u64,
) -> (BTreeMap<NodeId, Vec<VehicleId>>, Vec<Message>) {
    let mut winner: BTreeMap<VehicleId, (u32, NodeId)> = BTreeMap::new();
    for (&claimant, vehicles) in claims {
        for vid in vehicles {
            let owner = owners[vid];
            let hops = net.hop_distance(claimant, owner).unwrap_or(u32::MAX);
            let key = (hops, claimant);
            winner
                .entry(*vid)
                .and_modify(|w| {
                    if key < *w {
                        *w = key;
                    }
                })
                .or_insert(key);
        }
    }
    let mut grants: BTreeMap<NodeId, Vec<VehicleId>> =
        claims.keys().map(|&k| (k, Vec::new())).collect();
    let mut messages = Vec::new();
    for (&claimant, vehicles) in claims {
        for &vid in vehicles {
            let owner = Endpoint::Intersection(owners[&vid]);
            let me = Endpoint::Intersection(claimant);
            messages.push(Message {
                round,
                kind: MessageKind::VehicleClaim,
                from: me,
                to: owner,
                vehicle: Some(vid),
                request: None,
            });
            let granted = winner[&vid].1 == claimant;
            messages.push(Message {
                round,
                kind: if granted {
                    MessageKind::VehicleGrant
                } else {
                    MessageKind::VehicleDeny
                },
                from: owner,
                to: me,
                vehicle: Some(vid),
                request: None,
            });
            if granted {
                grants.get_mut(&claimant).unwrap().push(vid);
            }
        }
    }
    for g in grants.values_mut() {
        g.sort_unstable();
    }
    (grants, messages)
}

struct MatchJob {
    node: Option<NodeId>,
    requests: Vec<Request>,
    fleet: BTreeMap<VehicleId, Vehicle>,
}

struct JobResult {
    node: Option<NodeId>,
    result: MatchResult,
    ct: f64,
}

fn run_job(
    job: MatchJob,
    net: &RoadNetwork,
    constraints: &Constraints,
    now: f64,
    options: &DispatchOptions,
) -> JobResult {
    let vids: Vec<VehicleId> = job.fleet.keys().copied().collect();
    let candidates = vec![vids; job.requests.len()];
    let start = Instant::now();
    let result = gmomatch(
        &job.requests,
        &candidates,
        &job.fleet,
        net,
        constraints,
        now,
        options.matching,
    );
    let wall = start.elapsed().as_secs_f64();
    let ct = match options.ct_source {
        CtSource::Wall => wall,
        CtSource::Work => result.stats.work_units() as f64 * 1e-9,
    };
    JobResult {
        node: job.node,
        result,
        ct,
    }
}

fn pending_requests(ids: &[RequestId], requests: &RequestBook) -> Vec<Request> {
    ids.iter()
        .filter_map(|&id| requests.get(id))
        .filter(|r| r.state == RequestState::Pending)
        .cloned()
        .collect()
}

fn commit(
    job: &JobResult,
    from: Endpoint,
    requests: &mut RequestBook,
    vehicles: &mut [Vehicle],
    round: u64,
    messages: &mut Vec<Message>,
) -> Result<Vec<(RequestId, VehicleId)>> {
    for (vid, shadow) in &job.result.updated {
        let slot = vehicles
            .get_mut(*vid as usize)
            .filter(|v| v.id == *vid)
            .ok_or_else(|| Error::Consistency(format!("unknown vehicle {vid}")))?;
        *slot = shadow.clone();
    }
    let mut out = Vec::new();
    for (&rid, &vid) in &job.result.assignments {
        requests
            .get_mut(rid)
            .ok_or_else(|| Error::Consistency(format!("unknown request {rid}")))?
            .mark_assigned()?;
        messages.push(Message {
            round,
            kind: MessageKind::Assignment,
            from,
            to: Endpoint::Vehicle(vid),
            vehicle: Some(vid),
            request: Some(rid),
        });
        out.push((rid, vid));
    }
    Ok(out)
}

/// One matching round of the distributed system.
///
/// Phases: route new requests to the dispatcher at their origin; every
/// dispatcher with pending requests discovers vehicles at `level`; claims
/// are resolved so no vehicle is shared; each dispatcher matches its inbox
/// against its granted vehicles (timed individually, optionally in
/// parallel); results are committed in ascending intersection order.
#[allow(clippy::too_many_arguments)]
pub fn run_round_distributed(
    state: &mut DispatchState,
    requests: &mut RequestBook,
    vehicles: &mut [Vehicle],
    net: &RoadNetwork,
    level: SearchLevel,
    constraints: &Constraints,
    options: &DispatchOptions,
    now: f64,
    round: u64,
) -> Result<RoundOutcome> {
    let mut messages = Vec::new();

    for rid in std::mem::take(&mut state.unrouted) {
        let req = requests
            .get(rid)
            .ok_or_else(|| Error::Consistency(format!("unknown request {rid}")))?;
        if req.state != RequestState::Pending {
            continue;
        }
        let node = route_request(req);
        messages.push(Message {
            round,
            kind: MessageKind::RideRequest,
            from: Endpoint::Passenger(rid),
            to: Endpoint::Intersection(node),
            vehicle: None,
            request: Some(rid),
        });
        let d = state
            .intersections
            .entry(node)
            .or_insert_with(|| I2Dispatcher::new(node));
        d.inbox.push(rid);
        *d.received.entry(MessageKind::RideRequest).or_default() += 1;
    }

    // drop matched and expired requests from inboxes
    for d in state.intersections.values_mut() {
        d.inbox.retain(|&id| {
            requests
                .get(id)
                .is_some_and(|r| r.state == RequestState::Pending)
        });
        d.discovered.clear();
        d.round_ct = 0.0;
    }
    let active: Vec<NodeId> = state
        .intersections
        .values()
        .filter(|d| !d.inbox.is_empty())
        .map(|d| d.node)
        .collect();

    let mut record = RoundRecord {
        round,
        time: now,
        active_dispatchers: active.len(),
        ..Default::default()
    };
    if active.is_empty() {
        return Ok(RoundOutcome {
            assignments: Vec::new(),
            record,
            messages,
        });
    }

    let owned = owned_vehicles(vehicles, net);
    let owners: BTreeMap<VehicleId, NodeId> = owned
        .iter()
        .flat_map(|(&n, vs)| vs.iter().map(move |&v| (v, n)))
        .collect();
    let mut claims = BTreeMap::new();
    for &node in &active {
        let (found, msgs) = discover_vehicles(node, level, net, &owned, round)?;
        let d = state.intersections.get_mut(&node).unwrap();
        let queries = msgs
            .iter()
            .filter(|m| m.kind == MessageKind::VehicleQuery)
            .count() as u64;
        *d.sent.entry(MessageKind::VehicleQuery).or_default() += queries;
        *d.received.entry(MessageKind::VehicleReply).or_default() += queries;
        d.discovered = found.clone();
        messages.extend(msgs);
        claims.insert(node, found);
    }

    let (grants, claim_msgs) = resolve_claims(&claims, &owners, net, round);
    messages.extend(claim_msgs);

    let jobs: Vec<MatchJob> = active
        .iter()
        .map(|node| {
            let d = &state.intersections[node];
            MatchJob {
                node: Some(*node),
                requests: pending_requests(&d.inbox, requests),
                fleet: grants[node]
                    .iter()
                    .map(|&vid| (vid, vehicles[vid as usize].clone()))
                    .collect(),
            }
        })
        .collect();
    let results: Vec<JobResult> = if options.parallel {
        jobs.into_par_iter()
            .map(|j| run_job(j, net, constraints, now, options))
            .collect()
    } else {
        jobs.into_iter()
            .map(|j| run_job(j, net, constraints, now, options))
            .collect()
    };

    let mut assignments = Vec::new();
    for job in &results {
        let node = job.node.expect("distributed jobs carry a node");
        let committed = commit(
            job,
            Endpoint::Intersection(node),
            requests,
            vehicles,
            round,
            &mut messages,
        )?;
        let d = state.intersections.get_mut(&node).unwrap();
        d.round_ct = job.ct;
        *d.sent.entry(MessageKind::Assignment).or_default() += committed.len() as u64;
        d.inbox
            .retain(|id| !job.result.assignments.contains_key(id));
        record.requests += job.result.stats.requests;
        record.assigned += committed.len();
        record.merges += job.result.merges.len();
        record.ct_parallel = record.ct_parallel.max(job.ct);
        record.ct_sequential += job.ct;
        record.work_units += job.result.stats.work_units();
        assignments.extend(committed);
    }
    assignments.sort_unstable();
    Ok(RoundOutcome {
        assignments,
        record,
        messages,
    })
}

/// One matching round of the single central dispatcher over all pending
/// requests and all available vehicles.
#[allow(clippy::too_many_arguments)]
pub fn run_round_centralized(
    state: &mut DispatchState,
    requests: &mut RequestBook,
    vehicles: &mut [Vehicle],
    net: &RoadNetwork,
    constraints: &Constraints,
    options: &DispatchOptions,
    now: f64,
    round: u64,
) -> Result<RoundOutcome> {
    let mut messages = Vec::new();
    for rid in std::mem::take(&mut state.unrouted) {
        messages.push(Message {
            round,
            kind: MessageKind::RideRequest,
            from: Endpoint::Passenger(rid),
            to: Endpoint::Central,
            vehicle: None,
            request: Some(rid),
        });
        state.central.push(rid);
    }
    state.central.retain(|&id| {
        requests
            .get(id)
            .is_some_and(|r| r.state == RequestState::Pending)
    });
    let mut record = RoundRecord {
        round,
        time: now,
        ..Default::default()
    };
    if state.central.is_empty() {
        return Ok(RoundOutcome {
            assignments: Vec::new(),
            record,
            messages,
        });
    }
    record.active_dispatchers = 1;
    let job = MatchJob {
        node: None,
        requests: pending_requests(&state.central, requests),
        fleet: vehicles
            .iter()
            .filter(|v| v.has_spare_capacity())
            .map(|v| (v.id, v.clone()))
            .collect(),
    };
    let result = run_job(job, net, constraints, now, options);
    let assignments = commit(
        &result,
        Endpoint::Central,
        requests,
        vehicles,
        round,
        &mut messages,
    )?;
    state
        .central
        .retain(|id| !result.result.assignments.contains_key(id));
    record.requests = result.result.stats.requests;
    record.assigned = assignments.len();
    record.merges = result.result.merges.len();
    record.ct_parallel = result.ct;
    record.ct_sequential = result.ct;
    record.work_units = result.result.stats.work_units();
    Ok(RoundOutcome {
        assignments,
        record,
        messages,
    })
}

/// Vehicles granted per round, from a message log; used to check that no
/// vehicle is ever granted twice in one round.
pub fn grants_per_round(messages: &[Message]) -> BTreeMap<(u64, VehicleId), usize> {
    let mut out = BTreeMap::new();
    for m in messages
        .iter()
        .filter(|m| m.kind == MessageKind::VehicleGrant)
    {
        if let Some(v) = m.vehicle {
            *out.entry((m.round, v)).or_default() += 1;
        }
    }
    out
}

/// Intersections within `level` hops of `node`, excluding itself.
pub fn queried_intersections(
    net: &RoadNetwork,
    node: NodeId,
    level: SearchLevel,
) -> Result<BTreeSet<NodeId>> {
    let mut s = net.k_hop_neighbors(node, level.hops())?;
    s.remove(&node);
    Ok(s)
}
