//! Ride requests: synthetic generation, CSV ingestion and abandonment.

use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{NodeId, RoadNetwork};

pub type RequestId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestState {
    Pending,
    Assigned,
    Onboard,
    Served,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: RequestId,
    /// Seconds from simulation start.
    pub request_time: f64,
    pub origin: NodeId,
    pub destination: NodeId,
    pub state: RequestState,
    /// Free-flow shortest-path time origin to destination.
    pub direct_time: f64,
    pub pickup_time: Option<f64>,
    pub dropoff_time: Option<f64>,
}

impl Request {
    pub fn new(
        id: RequestId,
        request_time: f64,
        origin: NodeId,
        destination: NodeId,
        net: &RoadNetwork,
    ) -> Result<Self> {
        if origin == destination {
            return Err(Error::Validation(format!(
                "request {id}: origin equals destination ({origin})"
            )));
        }
        for node in [origin, destination] {
            if !net.has_node(node) {
                return Err(Error::UnknownNode(node));
            }
        }
        if !(request_time >= 0.0 && request_time.is_finite()) {
            return Err(Error::Validation(format!(
                "request {id}: invalid request time {request_time}"
            )));
        }
        let direct_time = net.travel_time(origin, destination);
        if !(direct_time > 0.0 && direct_time.is_finite()) {
            return Err(Error::NoPath {
                from: origin,
                to: destination,
            });
        }
        Ok(Request {
            id,
            request_time,
            origin,
            destination,
            state: RequestState::Pending,
            direct_time,
            pickup_time: None,
            dropoff_time: None,
        })
    }

    fn transition(&mut self, from: RequestState, to: RequestState) -> Result<()> {
        if self.state != from {
            return Err(Error::Consistency(format!(
                "request {} cannot move {:?} -> {:?} (currently {:?})",
                self.id, from, to, self.state
            )));
        }
        self.state = to;
        Ok(())
    }

    pub fn mark_assigned(&mut self) -> Result<()> {
        self.transition(RequestState::Pending, RequestState::Assigned)
    }

    pub fn mark_onboard(&mut self, time: f64) -> Result<()> {
        self.transition(RequestState::Assigned, RequestState::Onboard)?;
        self.pickup_time = Some(time);
        Ok(())
    }

    pub fn mark_served(&mut self, time: f64) -> Result<()> {
        self.transition(RequestState::Onboard, RequestState::Served)?;
        self.dropoff_time = Some(time);
        Ok(())
    }

    pub fn mark_expired(&mut self) -> Result<()> {
        self.transition(RequestState::Pending, RequestState::Expired)
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.state, RequestState::Served | RequestState::Expired)
    }
}

/// Requests indexed by id, kept in arrival order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RequestBook {
    requests: Vec<Request>,
    index: std::collections::HashMap<RequestId, usize>,
}

impl RequestBook {
    pub fn new(requests: Vec<Request>) -> Self {
        let index = requests
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id, i))
            .collect();
        RequestBook { requests, index }
    }

    pub fn get(&self, id: RequestId) -> Option<&Request> {
        self.index.get(&id).map(|&i| &self.requests[i])
    }

    pub fn get_mut(&mut self, id: RequestId) -> Option<&mut Request> {
        self.index.get(&id).map(|&i| &mut self.requests[i])
    }

    pub fn all(&self) -> &[Request] {
        &self.requests
    }

    pub fn iter_mut(&mut self) -> std::slice::IterMut<'_, Request> {
        self.requests.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }
}

/// Optional concentration of origins at one node (e.g. a stadium letting out).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hotspot {
    pub node: NodeId,
    /// Fraction of requests in `[0, 1]` whose origin is forced to `node`.
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandSpec {
    pub count: usize,
    pub loading_period: f64,
    pub seed: u64,
    pub hotspot: Option<Hotspot>,
}

/// Uniform synthetic demand: times uniform over `[0, loading_period)`,
/// origins and destinations uniform over nodes (origin != destination).
/// The list is sorted by time and ids are assigned in that order.
pub fn generate_requests(net: &RoadNetwork, spec: &DemandSpec) -> Result<Vec<Request>> {
    if net.node_count() < 2 {
        return Err(Error::Validation(
            "demand generation needs at least two nodes".into(),
        ));
    }
    if !(spec.loading_period > 0.0 && spec.loading_period.is_finite()) {
        return Err(Error::ConfigKey {
            key: "loading_period_s".into(),
            msg: format!("must be positive, got {}", spec.loading_period),
        });
    }
    if let Some(h) = spec.hotspot {
        if !net.has_node(h.node) {
            return Err(Error::ConfigKey {
                key: "hotspot_node".into(),
                msg: format!("unknown node {}", h.node),
            });
        }
        if !(0.0..=1.0).contains(&h.share) {
            return Err(Error::ConfigKey {
                key: "hotspot_share".into(),
                msg: format!("must lie in [0, 1], got {}", h.share),
            });
        }
    }

    let ids: Vec<NodeId> = net.node_ids().collect();
    let n = ids.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut raw = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        let t = rng.gen::<f64>() * spec.loading_period;
        let origin = match spec.hotspot {
            Some(h) if rng.gen::<f64>() < h.share => h.node,
            _ => ids[rng.gen_range(0..n)],
        };
        let o_idx = ids.binary_search(&origin).expect("origin is a known node");
        let mut d_idx = rng.gen_range(0..n - 1);
        if d_idx >= o_idx {
            d_idx += 1;
        }
        raw.push((t, origin, ids[d_idx]));
    }
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));
    raw.into_iter()
        .enumerate()
        .map(|(i, (t, o, d))| Request::new(i as RequestId, t, o, d, net))
        .collect()
}

/// Keeps a random `share` of `requests` (rounded to the nearest count), the
/// rest being assumed to travel by private car. Order and ids are preserved.
pub fn sample_share(requests: Vec<Request>, share: f64, seed: u64) -> Result<Vec<Request>> {
    if !(0.0..=1.0).contains(&share) {
        return Err(Error::ConfigKey {
            key: "demand_share".into(),
            msg: format!("must lie in [0, 1], got {share}"),
        });
    }
    if share == 1.0 {
        return Ok(requests);
    }
    let keep = (requests.len() as f64 * share).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, requests.len(), keep).into_vec();
    picked.sort_unstable();
    let mut it = picked.into_iter().peekable();
    Ok(requests
        .into_iter()
        .enumerate()
        .filter(|(i, _)| it.next_if_eq(i).is_some())
        .map(|(_, r)| r)
        .collect())
}

#[derive(Debug, Deserialize)]
struct RequestRow {
    id: RequestId,
    time_s: f64,
    origin: NodeId,
    destination: NodeId,
}

/// Reads `id,time_s,origin,destination` rows. Ids must be strictly
/// increasing; the result is sorted by time (stable on id order).
pub fn load_requests<R: Read>(reader: R, net: &RoadNetwork) -> Result<Vec<Request>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut out: Vec<Request> = Vec::new();
    for (i, row) in rdr.deserialize::<RequestRow>().enumerate() {
        // header is row 1
        let row_no = i + 2;
        let row = row.map_err(|e| Error::Row {
            row: row_no,
            msg: e.to_string(),
        })?;
        if let Some(prev) = out.last() {
            if row.id <= prev.id {
                return Err(Error::Row {
                    row: row_no,
                    msg: format!(
                        "request id {} not greater than previous id {}",
                        row.id, prev.id
                    ),
                });
            }
        }
        let req =
            Request::new(row.id, row.time_s, row.origin, row.destination, net).map_err(|e| {
                Error::Row {
                    row: row_no,
                    msg: e.to_string(),
                }
            })?;
        out.push(req);
    }
    out.sort_by(|a, b| a.request_time.total_cmp(&b.request_time));
    Ok(out)
}

pub fn load_requests_file(path: &std::path::Path, net: &RoadNetwork) -> Result<Vec<Request>> {
    let file =
        std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    load_requests(file, net)
}

/// Writes requests as `id,time_s,origin,destination,direct_time_s`.
pub fn write_requests<W: std::io::Write>(writer: W, requests: &[Request]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "time_s", "origin", "destination", "direct_time_s"])?;
    for r in requests {
        w.write_record([
            r.id.to_string(),
            r.request_time.to_string(),
            r.origin.to_string(),
            r.destination.to_string(),
            r.direct_time.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Expires every pending request that has waited strictly longer than
/// `max_wait`. Returns the expired ids in ascending order.
pub fn expire_requests<'a, I>(pending: I, now: f64, max_wait: f64) -> Vec<RequestId>
where
    I: IntoIterator<Item = &'a mut Request>,
{
    let mut expired: Vec<RequestId> = pending
        .into_iter()
        .filter(|r| r.state == RequestState::Pending && now - r.request_time > max_wait)
        .map(|r| {
            r.state = RequestState::Expired;
            r.id
        })
        .collect();
    expired.sort_unstable();
    expired
}
