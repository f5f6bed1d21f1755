//! Replays a run's logs and reports every violated service guarantee.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::demand::{Request, RequestId};
use crate::dispatch::{Endpoint, Message, MessageKind};
use crate::fleet::{Constraints, VehicleId, VehicleSummary, CONSTRAINT_EPS};
use crate::simcore::{SimEvent, SimEventKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Check {
    Capacity,
    Precedence,
    MaxWait,
    MaxDetour,
    ExclusiveGrant,
    ClaimAnswered,
    Conservation,
    StateMachine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub check: Check,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.check, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    pub violations: Vec<Violation>,
    pub events_checked: usize,
    pub messages_checked: usize,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, check: Check) -> usize {
        self.violations.iter().filter(|v| v.check == check).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Stage {
    Pending,
    Assigned(VehicleId),
    Onboard(VehicleId, f64),
    Served,
    Expired,
}

/// Checks onboard load against capacity, pickup before dropoff on the
/// assigned vehicle, the wait and detour bounds, one grant per vehicle per
/// round with every claim answered once, the request life cycle and (unless
/// `truncated`) that every request ends served or expired.
pub fn audit(
    events: &[SimEvent],
    messages: &[Message],
    requests: &[Request],
    vehicles: &[VehicleSummary],
    constraints: &Constraints,
    truncated: bool,
) -> AuditReport {
    let mut report = AuditReport {
        events_checked: events.len(),
        messages_checked: messages.len(),
        ..Default::default()
    };
    let mut flag = |check, detail: String| report.violations.push(Violation { check, detail });

    let terms: BTreeMap<RequestId, &Request> = requests.iter().map(|r| (r.id, r)).collect();
    let capacity: BTreeMap<VehicleId, usize> =
        vehicles.iter().map(|v| (v.id, v.capacity)).collect();
    let mut stage: BTreeMap<RequestId, Option<Stage>> =
        requests.iter().map(|r| (r.id, None)).collect();
    let mut onboard: BTreeMap<VehicleId, usize> = BTreeMap::new();

    for ev in events {
        if ev.kind == SimEventKind::Idle {
            continue;
        }
        let Some(rid) = ev.request else {
            flag(
                Check::StateMachine,
                format!("{:?} at t={} has no request", ev.kind, ev.time),
            );
            continue;
        };
        let (Some(req), Some(cur)) = (terms.get(&rid), stage.get(&rid).copied()) else {
            flag(
                Check::StateMachine,
                format!("event for unknown request {rid}"),
            );
            continue;
        };
        let next = match (ev.kind, cur) {
            (SimEventKind::Request, None) => Some(Stage::Pending),
            (SimEventKind::Assign, Some(Stage::Pending)) => {
                let Some(vid) = ev.vehicle else {
                    flag(
                        Check::StateMachine,
                        format!("assignment of {rid} without vehicle"),
                    );
                    continue;
                };
                if !capacity.contains_key(&vid) {
                    flag(Check::Capacity, format!("unknown vehicle {vid}"));
                }
                Some(Stage::Assigned(vid))
            }
            (SimEventKind::Pickup, Some(Stage::Assigned(vid))) => {
                if ev.vehicle != Some(vid) {
                    flag(
                        Check::Precedence,
                        format!(
                            "request {rid} assigned to {vid} but picked up by {:?}",
                            ev.vehicle
                        ),
                    );
                }
                if ev.node != Some(req.origin) {
                    flag(
                        Check::Precedence,
                        format!("request {rid} picked up away from origin"),
                    );
                }
                let o = onboard.entry(vid).or_default();
                *o += 1;
                if capacity.get(&vid).is_some_and(|&cap| *o > cap) {
                    flag(
                        Check::Capacity,
                        format!("vehicle {vid} carries {o} at t={}", ev.time),
                    );
                }
                let wait = ev.time - req.request_time;
                if wait > constraints.max_wait + CONSTRAINT_EPS {
                    flag(Check::MaxWait, format!("request {rid} waited {wait} s"));
                }
                Some(Stage::Onboard(vid, ev.time))
            }
            (SimEventKind::Dropoff, Some(Stage::Onboard(vid, picked))) => {
                if ev.vehicle != Some(vid) {
                    flag(
                        Check::Precedence,
                        format!(
                            "request {rid} carried by {vid} but dropped by {:?}",
                            ev.vehicle
                        ),
                    );
                }
                if ev.node != Some(req.destination) {
                    flag(
                        Check::Precedence,
                        format!("request {rid} dropped away from destination"),
                    );
                }
                *onboard.entry(vid).or_default() -= 1;
                let ride = ev.time - picked;
                if ride > constraints.max_detour_factor * req.direct_time + CONSTRAINT_EPS {
                    flag(
                        Check::MaxDetour,
                        format!("request {rid} rode {ride} s, direct {} s", req.direct_time),
                    );
                }
                Some(Stage::Served)
            }
            (SimEventKind::Expire, Some(Stage::Pending)) => {
                let waited = ev.time - req.request_time;
                if waited <= constraints.max_wait {
                    flag(
                        Check::StateMachine,
                        format!("request {rid} expired after only {waited} s"),
                    );
                }
                Some(Stage::Expired)
            }
            (SimEventKind::Dropoff, _) => {
                flag(
                    Check::Precedence,
                    format!("request {rid} dropped off before pickup"),
                );
                None
            }
            (kind, cur) => {
                flag(
                    Check::StateMachine,
                    format!("request {rid}: {kind:?} while {cur:?}"),
                );
                None
            }
        };
        if let Some(s) = next {
            stage.insert(rid, Some(s));
        }
    }

    if !truncated {
        let open: Vec<RequestId> = stage
            .iter()
            .filter(|(_, s)| !matches!(s, Some(Stage::Served) | Some(Stage::Expired)))
            .map(|(&id, _)| id)
            .collect();
        if !open.is_empty() {
            flag(
                Check::Conservation,
                format!(
                    "{} requests neither served nor expired, e.g. {}",
                    open.len(),
                    open[0]
                ),
            );
        }
    }

    // (round, vehicle) -> granted claimants; (round, vehicle, claimant) -> claims, answers
    let mut grants: BTreeMap<(u64, VehicleId), BTreeSet<Endpoint>> = BTreeMap::new();
    let mut claims: BTreeMap<(u64, VehicleId, Endpoint), (usize, usize)> = BTreeMap::new();
    for m in messages {
        let Some(vid) = m.vehicle else { continue };
        match m.kind {
            MessageKind::VehicleClaim => claims.entry((m.round, vid, m.from)).or_default().0 += 1,
            MessageKind::VehicleGrant | MessageKind::VehicleDeny => {
                claims.entry((m.round, vid, m.to)).or_default().1 += 1;
                if m.kind == MessageKind::VehicleGrant {
                    let g = grants.entry((m.round, vid)).or_default();
                    if !g.insert(m.to) || g.len() > 1 {
                        flag(
                            Check::ExclusiveGrant,
                            format!(
                                "vehicle {vid} granted {} times in round {}",
                                g.len(),
                                m.round
                            ),
                        );
                    }
                }
            }
            _ => {}
        }
    }
    for ((round, vid, who), (c, a)) in claims {
        if c != 1 || a != 1 {
            flag(
                Check::ClaimAnswered,
                format!("round {round}, vehicle {vid}, {who}: {c} claims, {a} answers"),
            );
        }
    }
    report
}
