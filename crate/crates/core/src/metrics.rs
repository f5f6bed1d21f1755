//! Service indicators computed from simulation logs, and Amdahl's law.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::demand::{Request, RequestId};
use crate::dispatch::{Message, MessageKind, RoundRecord};
use crate::error::{Error, Result};
use crate::fleet::VehicleSummary;
use crate::simcore::{SimEvent, SimEventKind};

/// Flat so that it serializes to one CSV row; column order is the field
/// order below (see `docs/schema.md`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub total_requests: usize,
    pub served: usize,
    pub expired: usize,
    /// Neither served nor expired when the run stopped (truncated runs only).
    pub unresolved: usize,
    /// Served / total; 1.0 when there are no requests.
    pub sr: f64,
    pub sr_undefined: bool,
    /// Means over served passengers, seconds.
    pub wt_mean: f64,
    pub dt_mean: f64,
    pub ttt_mean: f64,
    pub vkt_total: f64,
    /// Rounds in which matching ran.
    pub rounds: usize,
    pub ct_parallel_mean: f64,
    pub ct_parallel_max: f64,
    pub ct_sequential_sum_mean: f64,
    pub zeta_mean: f64,
    pub msg_ride_request: u64,
    pub msg_vehicle_query: u64,
    pub msg_vehicle_reply: u64,
    pub msg_vehicle_claim: u64,
    pub msg_vehicle_grant: u64,
    pub msg_vehicle_deny: u64,
    pub msg_assignment: u64,
    pub truncated: bool,
}

impl MetricsReport {
    pub fn message_count(&self, kind: MessageKind) -> u64 {
        match kind {
            MessageKind::RideRequest => self.msg_ride_request,
            MessageKind::VehicleQuery => self.msg_vehicle_query,
            MessageKind::VehicleReply => self.msg_vehicle_reply,
            MessageKind::VehicleClaim => self.msg_vehicle_claim,
            MessageKind::VehicleGrant => self.msg_vehicle_grant,
            MessageKind::VehicleDeny => self.msg_vehicle_deny,
            MessageKind::Assignment => self.msg_assignment,
        }
    }

    fn count_message(&mut self, kind: MessageKind) {
        let slot = match kind {
            MessageKind::RideRequest => &mut self.msg_ride_request,
            MessageKind::VehicleQuery => &mut self.msg_vehicle_query,
            MessageKind::VehicleReply => &mut self.msg_vehicle_reply,
            MessageKind::VehicleClaim => &mut self.msg_vehicle_claim,
            MessageKind::VehicleGrant => &mut self.msg_vehicle_grant,
            MessageKind::VehicleDeny => &mut self.msg_vehicle_deny,
            MessageKind::Assignment => &mut self.msg_assignment,
        };
        *slot += 1;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Header plus one data row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(self)?;
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn csv_header() -> Vec<&'static str> {
        vec![
            "total_requests",
            "served",
            "expired",
            "unresolved",
            "sr",
            "sr_undefined",
            "wt_mean",
            "dt_mean",
            "ttt_mean",
            "vkt_total",
            "rounds",
            "ct_parallel_mean",
            "ct_parallel_max",
            "ct_sequential_sum_mean",
            "zeta_mean",
            "msg_ride_request",
            "msg_vehicle_query",
            "msg_vehicle_reply",
            "msg_vehicle_claim",
            "msg_vehicle_grant",
            "msg_vehicle_deny",
            "msg_assignment",
            "truncated",
        ]
    }
}

fn mean(sum: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Computes the report from the event log, message log, the request set as
/// generated, vehicle totals (for odometers) and round records.
pub fn compute_metrics(
    events: &[SimEvent],
    messages: &[Message],
    requests: &[Request],
    vehicles: &[VehicleSummary],
    rounds: &[RoundRecord],
    truncated: bool,
) -> Result<MetricsReport> {
    let terms: BTreeMap<RequestId, &Request> = requests.iter().map(|r| (r.id, r)).collect();
    let mut pickup: BTreeMap<RequestId, f64> = BTreeMap::new();
    let mut report = MetricsReport {
        total_requests: requests.len(),
        truncated,
        ..Default::default()
    };
    let (mut wt, mut dt, mut ttt) = (0.0, 0.0, 0.0);

    for ev in events {
        let rid = match ev.kind {
            SimEventKind::Pickup | SimEventKind::Dropoff | SimEventKind::Expire => {
                ev.request.ok_or_else(|| {
                    Error::Integrity(format!(
                        "{:?} event at t={} without request",
                        ev.kind, ev.time
                    ))
                })?
            }
            _ => continue,
        };
        let req = terms
            .get(&rid)
            .ok_or_else(|| Error::Integrity(format!("event for unknown request {rid}")))?;
        match ev.kind {
            SimEventKind::Pickup => {
                if pickup.insert(rid, ev.time).is_some() {
                    return Err(Error::Integrity(format!("request {rid} picked up twice")));
                }
            }
            SimEventKind::Dropoff => {
                let p = *pickup.get(&rid).ok_or_else(|| {
                    Error::Integrity(format!("dropoff without pickup for request {rid}"))
                })?;
                if p.is_nan() {
                    return Err(Error::Integrity(format!("request {rid} dropped off twice")));
                }
                pickup.insert(rid, f64::NAN);
                report.served += 1;
                wt += p - req.request_time;
                dt += ((ev.time - p) - req.direct_time).max(0.0);
                ttt += ev.time - req.request_time;
            }
            SimEventKind::Expire => {
                if pickup.contains_key(&rid) {
                    return Err(Error::Integrity(format!(
                        "request {rid} expired after pickup"
                    )));
                }
                report.expired += 1;
            }
            _ => unreachable!(),
        }
    }

    let resolved = report.served + report.expired;
    if resolved > report.total_requests {
        return Err(Error::Integrity(format!(
            "{resolved} requests resolved out of {}",
            report.total_requests
        )));
    }
    report.unresolved = report.total_requests - resolved;
    if report.total_requests == 0 {
        report.sr = 1.0;
        report.sr_undefined = true;
    } else {
        report.sr = report.served as f64 / report.total_requests as f64;
    }
    report.wt_mean = mean(wt, report.served);
    report.dt_mean = mean(dt, report.served);
    report.ttt_mean = mean(ttt, report.served);
    report.vkt_total = vehicles.iter().map(|v| v.odometer_m).sum::<f64>() / 1000.0;

    report.rounds = rounds.len();
    let (mut par, mut seq, mut zeta) = (0.0, 0.0, 0.0);
    for r in rounds {
        par += r.ct_parallel;
        seq += r.ct_sequential;
        zeta += r.active_dispatchers as f64;
        report.ct_parallel_max = report.ct_parallel_max.max(r.ct_parallel);
    }
    report.ct_parallel_mean = mean(par, rounds.len());
    report.ct_sequential_sum_mean = mean(seq, rounds.len());
    report.zeta_mean = mean(zeta, rounds.len());

    for m in messages {
        report.count_message(m.kind);
    }
    Ok(report)
}

/// Amdahl's law: the speedup of a job whose sequential fraction is `beta`
/// when run on `k` processors.
pub fn amdahl_speedup(beta: f64, k: u32) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Argument(format!(
            "beta must lie in [0, 1], got {beta}"
        )));
    }
    if k < 1 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    Ok(1.0 / (beta + (1.0 - beta) / k as f64))
}
