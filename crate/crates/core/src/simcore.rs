//! Time-stepped simulation loop.
//!
//! Each tick: requests whose time has come are injected; on a matching
//! boundary (every `delta` seconds, starting at t = 0) with something pending
//! the configured dispatcher runs once; every vehicle moves for one tick;
//! the clock advances and pending requests that have waited too long expire.
//! The run ends when every request is served or expired, the whole fleet is
//! idle and the loading period is over, or at `max_sim_time` (truncated).

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::demand::{
    generate_requests, load_requests_file, sample_share, DemandSpec, Hotspot, Request, RequestBook,
    RequestId,
};
use crate::dispatch::{
    run_round_centralized, run_round_distributed, CtSource, DispatchOptions, DispatchState,
    Message, Mode, RoundRecord, SearchLevel,
};
use crate::error::{Error, Result};
use crate::fleet::{
    place_vehicles, Constraints, Vehicle, VehicleEventKind, VehicleId, VehicleSummary,
    CONSTRAINT_EPS,
};
use crate::matching::MatchOptions;
use crate::metrics::{compute_metrics, MetricsReport};
use crate::network::{GridSpec, NetworkSpec, NodeId, RoadNetwork};

#[derive(Debug, Clone, PartialEq)]
pub enum DemandSource {
    Synthetic {
        count: usize,
        hotspot: Option<Hotspot>,
    },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub network: NetworkSpec,
    pub demand: DemandSource,
    pub loading_period: f64,
    /// Fraction of generated demand that uses the shared service.
    pub demand_share: f64,
    /// Master seed; demand, share sampling and placement use independent
    /// streams derived from it.
    pub seed: u64,
    pub fleet_size: usize,
    pub capacity: usize,
    pub mode: Mode,
    pub search_level: SearchLevel,
    pub delta: f64,
    pub tick: f64,
    pub max_wait: f64,
    pub max_detour_factor: f64,
    pub max_insertion_positions: Option<usize>,
    /// Defaults to `4 * loading_period + max_wait`.
    pub max_sim_time: Option<f64>,
    pub ct_source: CtSource,
    pub parallel: bool,
    pub repeat_until_stable: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            network: NetworkSpec::Grid(GridSpec::default()),
            demand: DemandSource::Synthetic {
                count: 200,
                hotspot: None,
            },
            loading_period: 900.0,
            demand_share: 1.0,
            seed: 1,
            fleet_size: 40,
            capacity: 4,
            mode: Mode::Distributed,
            search_level: SearchLevel::new(1).unwrap(),
            delta: 30.0,
            tick: 1.0,
            max_wait: 600.0,
            max_detour_factor: 1.5,
            max_insertion_positions: None,
            max_sim_time: None,
            ct_source: CtSource::Wall,
            parallel: false,
            repeat_until_stable: false,
        }
    }
}

fn key_err(key: &str, msg: impl Into<String>) -> Error {
    Error::ConfigKey {
        key: key.into(),
        msg: msg.into(),
    }
}

/// Stream seeds derived from the master seed (splitmix64 finalizer).
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const DEMAND_STREAM: u64 = 1;
const SHARE_STREAM: u64 = 2;
const PLACEMENT_STREAM: u64 = 3;

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.tick > 0.0 && self.tick.is_finite()) {
            return Err(key_err(
                "tick_s",
                format!("must be positive, got {}", self.tick),
            ));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(key_err(
                "delta_s",
                format!("must be positive, got {}", self.delta),
            ));
        }
        let ratio = self.delta / self.tick;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(key_err(
                "delta_s",
                format!(
                    "must be a positive multiple of tick_s ({}), got {}",
                    self.tick, self.delta
                ),
            ));
        }
        if self.capacity < 1 {
            return Err(key_err("capacity", "must be at least 1"));
        }
        if !(self.loading_period > 0.0 && self.loading_period.is_finite()) {
            return Err(key_err(
                "loading_period_s",
                format!("must be positive, got {}", self.loading_period),
            ));
        }
        if !(0.0..=1.0).contains(&self.demand_share) {
            return Err(key_err(
                "demand_share",
                format!("must lie in [0, 1], got {}", self.demand_share),
            ));
        }
        if !(self.max_wait >= 0.0 && self.max_wait.is_finite()) {
            return Err(key_err(
                "max_wait_s",
                format!("must be finite and non-negative, got {}", self.max_wait),
            ));
        }
        if !(self.max_detour_factor >= 1.0 && self.max_detour_factor.is_finite()) {
            return Err(key_err(
                "max_detour_factor",
                format!("must be at least 1, got {}", self.max_detour_factor),
            ));
        }
        if let Some(t) = self.max_sim_time {
            if !(t > 0.0 && t.is_finite()) {
                return Err(key_err(
                    "max_sim_time_s",
                    format!("must be positive, got {t}"),
                ));
            }
        }
        if let DemandSource::Synthetic {
            hotspot: Some(h), ..
        } = &self.demand
        {
            if !(0.0..=1.0).contains(&h.share) {
                return Err(key_err(
                    "hotspot_share",
                    format!("must lie in [0, 1], got {}", h.share),
                ));
            }
        }
        Ok(())
    }

    pub fn max_sim_time(&self) -> f64 {
        self.max_sim_time
            .unwrap_or(4.0 * self.loading_period + self.max_wait)
    }

    pub fn constraints(&self) -> Constraints {
        Constraints {
            max_wait: self.max_wait,
            max_detour_factor: self.max_detour_factor,
            max_insertion_positions: self.max_insertion_positions,
        }
    }

    pub fn dispatch_options(&self) -> DispatchOptions {
        DispatchOptions {
            matching: MatchOptions {
                repeat_until_stable: self.repeat_until_stable,
            },
            ct_source: self.ct_source,
            parallel: self.parallel,
        }
    }

    /// The request set for this scenario. Depends only on the network, the
    /// demand settings and the seed, never on fleet or dispatch settings.
    pub fn requests(&self, net: &RoadNetwork) -> Result<Vec<Request>> {
        let all = match &self.demand {
            DemandSource::Synthetic { count, hotspot } => generate_requests(
                net,
                &DemandSpec {
                    count: *count,
                    loading_period: self.loading_period,
                    seed: stream_seed(self.seed, DEMAND_STREAM),
                    hotspot: *hotspot,
                },
            )?,
            DemandSource::File(path) => load_requests_file(path, net)?,
        };
        sample_share(all, self.demand_share, stream_seed(self.seed, SHARE_STREAM))
    }

    pub fn vehicles(&self, net: &RoadNetwork) -> Vec<Vehicle> {
        place_vehicles(
            net,
            self.fleet_size,
            self.capacity,
            stream_seed(self.seed, PLACEMENT_STREAM),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimEventKind {
    /// Request became known to the system.
    Request,
    /// Request committed to a vehicle.
    Assign,
    Pickup,
    Dropoff,
    Expire,
    /// Vehicle finished its route.
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub time: f64,
    pub kind: SimEventKind,
    pub request: Option<RequestId>,
    pub vehicle: Option<VehicleId>,
    pub node: Option<NodeId>,
}

/// Mutable state of a running simulation.
#[derive(Debug, Clone)]
pub struct SimState {
    pub clock: f64,
    pub tick_index: u64,
    pub round: u64,
    pub requests: RequestBook,
    pub vehicles: Vec<Vehicle>,
    pub dispatch: DispatchState,
    /// Index into the time-sorted request list of the next arrival.
    pub next_arrival: usize,
    pub events: Vec<SimEvent>,
    pub messages: Vec<Message>,
    pub rounds: Vec<RoundRecord>,
    pub finished: bool,
    pub truncated: bool,
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct SimOutput {
    /// Requests as generated (before any state change).
    pub initial_requests: Vec<Request>,
    /// Requests in their final state.
    pub requests: Vec<Request>,
    pub vehicles: Vec<Vehicle>,
    pub events: Vec<SimEvent>,
    pub messages: Vec<Message>,
    pub rounds: Vec<RoundRecord>,
    pub report: MetricsReport,
    pub end_time: f64,
}

impl SimOutput {
    /// Assignment events only, the part compared across modes.
    pub fn assignment_log(&self) -> Vec<SimEvent> {
        self.events
            .iter()
            .filter(|e| e.kind == SimEventKind::Assign)
            .copied()
            .collect()
    }
}

pub struct Simulation {
    pub scenario: Scenario,
    pub net: RoadNetwork,
    initial_requests: Vec<Request>,
    ticks_per_delta: u64,
    pub state: SimState,
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let net = RoadNetwork::load(&scenario.network)?;
        let requests = scenario.requests(&net)?;
        let vehicles = scenario.vehicles(&net);
        Simulation::with_parts(scenario, net, requests, vehicles)
    }

    /// Starts from an explicit network, request list and fleet.
    pub fn with_parts(
        scenario: Scenario,
        net: RoadNetwork,
        mut requests: Vec<Request>,
        vehicles: Vec<Vehicle>,
    ) -> Result<Self> {
        scenario.validate()?;
        requests.sort_by(|a, b| a.request_time.total_cmp(&b.request_time));
        for (i, v) in vehicles.iter().enumerate() {
            if v.id as usize != i {
                return Err(Error::Validation(format!(
                    "vehicle ids must be 0..n in order; position {i} has id {}",
                    v.id
                )));
            }
        }
        let ticks_per_delta = (scenario.delta / scenario.tick).round() as u64;
        Ok(Simulation {
            ticks_per_delta,
            initial_requests: requests.clone(),
            state: SimState {
                clock: 0.0,
                tick_index: 0,
                round: 0,
                requests: RequestBook::new(requests),
                vehicles,
                dispatch: DispatchState::default(),
                next_arrival: 0,
                events: Vec::new(),
                messages: Vec::new(),
                rounds: Vec::new(),
                finished: false,
                truncated: false,
            },
            scenario,
            net,
        })
    }

    /// Advances one tick. Returns `true` once the run is over.
    pub fn step(&mut self) -> Result<bool> {
        if self.state.finished {
            return Ok(true);
        }
        let now = self.state.clock;
        let st = &mut self.state;
        let sc = &self.scenario;
        let net = &self.net;

        while let Some(r) = st.requests.all().get(st.next_arrival) {
            if r.request_time > now {
                break;
            }
            st.events.push(SimEvent {
                time: r.request_time,
                kind: SimEventKind::Request,
                request: Some(r.id),
                vehicle: None,
                node: Some(r.origin),
            });
            st.dispatch.unrouted.push(r.id);
            st.next_arrival += 1;
        }

        if st.tick_index.is_multiple_of(self.ticks_per_delta)
            && st.dispatch.has_pending(&st.requests)
        {
            let constraints = sc.constraints();
            let options = sc.dispatch_options();
            let outcome = match sc.mode {
                Mode::Distributed => run_round_distributed(
                    &mut st.dispatch,
                    &mut st.requests,
                    &mut st.vehicles,
                    net,
                    sc.search_level,
                    &constraints,
                    &options,
                    now,
                    st.round,
                )?,
                Mode::Centralized => run_round_centralized(
                    &mut st.dispatch,
                    &mut st.requests,
                    &mut st.vehicles,
                    net,
                    &constraints,
                    &options,
                    now,
                    st.round,
                )?,
            };
            for (rid, vid) in &outcome.assignments {
                st.events.push(SimEvent {
                    time: now,
                    kind: SimEventKind::Assign,
                    request: Some(*rid),
                    vehicle: Some(*vid),
                    node: None,
                });
            }
            st.messages.extend(outcome.messages);
            st.rounds.push(outcome.record);
            st.round += 1;
        }

        for v in st.vehicles.iter_mut() {
            for ev in v.advance(sc.tick, net, now)? {
                let kind = match ev.kind {
                    VehicleEventKind::Pickup => SimEventKind::Pickup,
                    VehicleEventKind::Dropoff => SimEventKind::Dropoff,
                    VehicleEventKind::Idle => SimEventKind::Idle,
                };
                if let Some(rid) = ev.request {
                    let req = st
                        .requests
                        .get_mut(rid)
                        .ok_or_else(|| Error::Consistency(format!("unknown request {rid}")))?;
                    match kind {
                        SimEventKind::Pickup => {
                            req.mark_onboard(ev.time)?;
                            if ev.time - req.request_time > sc.max_wait + CONSTRAINT_EPS {
                                return Err(Error::Consistency(format!(
                                    "request {rid} picked up after {} s",
                                    ev.time - req.request_time
                                )));
                            }
                        }
                        SimEventKind::Dropoff => {
                            req.mark_served(ev.time)?;
                            let ride = ev.time - req.pickup_time.unwrap_or(ev.time);
                            if ride > sc.max_detour_factor * req.direct_time + CONSTRAINT_EPS {
                                return Err(Error::Consistency(format!(
                                    "request {rid} rode {ride} s against direct {} s",
                                    req.direct_time
                                )));
                            }
                        }
                        _ => {}
                    }
                }
                st.events.push(SimEvent {
                    time: ev.time,
                    kind,
                    request: ev.request,
                    vehicle: Some(ev.vehicle),
                    node: Some(ev.node),
                });
            }
        }

        st.tick_index += 1;
        st.clock = st.tick_index as f64 * sc.tick;
        let clock = st.clock;
        for rid in crate::demand::expire_requests(st.requests.iter_mut(), clock, sc.max_wait) {
            st.events.push(SimEvent {
                time: clock,
                kind: SimEventKind::Expire,
                request: Some(rid),
                vehicle: None,
                node: None,
            });
        }

        let done = st.next_arrival == st.requests.len()
            && st.requests.all().iter().all(Request::is_terminal)
            && st.vehicles.iter().all(Vehicle::is_idle)
            && clock >= sc.loading_period;
        if done {
            st.finished = true;
        } else if clock >= sc.max_sim_time() {
            st.finished = true;
            st.truncated = true;
        }
        Ok(st.finished)
    }

    pub fn run_to_end(mut self) -> Result<SimOutput> {
        while !self.step()? {}
        self.finish()
    }

    fn finish(self) -> Result<SimOutput> {
        let st = self.state;
        let summaries: Vec<VehicleSummary> = st.vehicles.iter().map(VehicleSummary::from).collect();
        let report = compute_metrics(
            &st.events,
            &st.messages,
            &self.initial_requests,
            &summaries,
            &st.rounds,
            st.truncated,
        )?;
        Ok(SimOutput {
            initial_requests: self.initial_requests,
            requests: st.requests.all().to_vec(),
            vehicles: st.vehicles,
            events: st.events,
            messages: st.messages,
            rounds: st.rounds,
            report,
            end_time: st.clock,
        })
    }
}

pub fn run(scenario: &Scenario) -> Result<SimOutput> {
    Simulation::new(scenario.clone())?.run_to_end()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(mode: Mode) -> Scenario {
        Scenario {
            network: NetworkSpec::Grid(GridSpec {
                rows: 4,
                cols: 4,
                block_m: 100.0,
                speed_mps: 10.0,
            }),
            demand: DemandSource::Synthetic {
                count: 30,
                hotspot: None,
            },
            loading_period: 300.0,
            fleet_size: 6,
            mode,
            ct_source: CtSource::Work,
            ..Default::default()
        }
    }

    #[test]
    fn zero_requests_end_after_loading_period() {
        let mut sc = small(Mode::Distributed);
        sc.demand = DemandSource::Synthetic {
            count: 0,
            hotspot: None,
        };
        let out = run(&sc).unwrap();
        assert_eq!(out.end_time, sc.loading_period);
        assert!(out.report.sr_undefined);
        assert_eq!(out.report.sr, 1.0);
        assert_eq!(out.report.rounds, 0);
        assert_eq!(out.report.vkt_total, 0.0);
    }

    #[test]
    fn single_rider_waits_at_most_one_interval() {
        let net = RoadNetwork::grid(GridSpec::default()).unwrap();
        let req = Request::new(0, 12.5, 3, 47, &net).unwrap();
        let veh = vec![Vehicle::new(0, 4, 3)];
        let sc = Scenario::default();
        let out = Simulation::with_parts(sc, net, vec![req], veh)
            .unwrap()
            .run_to_end()
            .unwrap();
        let pickup = out.requests[0].pickup_time.unwrap();
        // first matching time at or after 12.5 s is 30 s; the vehicle is there
        assert_eq!(pickup, 30.0);
        assert!(pickup - 12.5 <= 30.0);
        assert_eq!(out.report.served, 1);
        assert_eq!(out.report.dt_mean, 0.0);
    }

    #[test]
    fn runs_are_reproducible() {
        for mode in [Mode::Centralized, Mode::Distributed] {
            let a = run(&small(mode)).unwrap();
            let b = run(&small(mode)).unwrap();
            assert_eq!(a.events, b.events);
            assert_eq!(a.messages, b.messages);
            assert_eq!(a.report, b.report);
        }
    }

    #[test]
    fn conservation_and_clock() {
        let out = run(&small(Mode::Distributed)).unwrap();
        let r = out.report;
        assert!(!r.truncated);
        assert_eq!(r.served + r.expired, r.total_requests);
        assert_eq!(out.end_time.fract(), 0.0);
        // matching fires at most once per interval
        assert!(r.rounds as f64 <= (out.end_time / 30.0).ceil());
        for w in out.rounds.windows(2) {
            assert!(w[1].time > w[0].time);
            assert_eq!((w[1].time / 30.0).fract(), 0.0);
        }
    }

    #[test]
    fn step_without_due_events_only_moves_clock() {
        let mut sc = small(Mode::Distributed);
        sc.demand = DemandSource::Synthetic {
            count: 0,
            hotspot: None,
        };
        let mut sim = Simulation::new(sc).unwrap();
        assert!(!sim.step().unwrap());
        assert_eq!(sim.state.clock, 1.0);
        assert!(sim.state.events.is_empty());
        assert!(sim.state.rounds.is_empty());
    }

    #[test]
    fn truncation_guard() {
        let mut sc = small(Mode::Distributed);
        sc.max_sim_time = Some(20.0);
        let out = run(&sc).unwrap();
        assert!(out.report.truncated);
        assert_eq!(out.end_time, 20.0);
    }

    #[test]
    fn delta_must_be_a_multiple_of_tick() {
        let mut sc = small(Mode::Distributed);
        sc.delta = 2.5;
        sc.tick = 1.0;
        match sc.validate() {
            Err(Error::ConfigKey { key, .. }) => assert_eq!(key, "delta_s"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn demand_independent_of_fleet() {
        let net = RoadNetwork::grid(GridSpec::default()).unwrap();
        let a = Scenario::default();
        let b = Scenario {
            fleet_size: 77,
            mode: Mode::Centralized,
            ..Default::default()
        };
        assert_eq!(a.requests(&net).unwrap(), b.requests(&net).unwrap());
        assert_ne!(a.vehicles(&net), b.vehicles(&net));
    }
}
