//! Run artifacts on disk and reading them back for replay.
//!
//! One directory per run:
//!
//! | file           | content                                   |
//! |----------------|-------------------------------------------|
//! | `requests.csv` | the request set as generated              |
//! | `events.csv`   | request, assign, pickup, dropoff, expire, idle |
//! | `messages.csv` | simulated V2I / I2I messages              |
//! | `rounds.csv`   | one row per matching round                |
//! | `vehicles.csv` | per-vehicle odometer and busy time        |
//! | `report.json`, `report.csv` | the metrics report           |

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::demand::{load_requests, write_requests, Request};
use crate::dispatch::{Message, RoundRecord};
use crate::error::{Error, Result};
use crate::fleet::VehicleSummary;
use crate::metrics::{compute_metrics, MetricsReport};
use crate::network::RoadNetwork;
use crate::simcore::{SimEvent, SimOutput};

pub const REQUESTS: &str = "requests.csv";
pub const EVENTS: &str = "events.csv";
pub const MESSAGES: &str = "messages.csv";
pub const ROUNDS: &str = "rounds.csv";
pub const VEHICLES: &str = "vehicles.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(create(path)?);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Row {
                row: i + 2,
                msg: format!("{}: {e}", path.display()),
            })
        })
        .collect()
}

pub fn write_outputs(out: &SimOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut by_id = out.initial_requests.clone();
    by_id.sort_by_key(|r| r.id);
    write_requests(create(&dir.join(REQUESTS))?, &by_id)?;
    write_rows(
        &dir.join(EVENTS),
        &out.events,
        &["time", "kind", "request", "vehicle", "node"],
    )?;
    write_rows(
        &dir.join(MESSAGES),
        &out.messages,
        &["round", "kind", "from", "to", "vehicle", "request"],
    )?;
    write_rows(
        &dir.join(ROUNDS),
        &out.rounds,
        &[
            "round",
            "time",
            "active_dispatchers",
            "requests",
            "assigned",
            "merges",
            "ct_parallel",
            "ct_sequential",
            "work_units",
        ],
    )?;
    let summaries: Vec<VehicleSummary> = out.vehicles.iter().map(VehicleSummary::from).collect();
    write_rows(
        &dir.join(VEHICLES),
        &summaries,
        &["id", "capacity", "odometer_m", "busy_time_s"],
    )?;
    let mut json = create(&dir.join(REPORT_JSON))?;
    writeln!(json, "{}", out.report.to_json())?;
    create(&dir.join(REPORT_CSV))?.write_all(out.report.to_csv()?.as_bytes())?;
    Ok(())
}

/// Logs of one run as read back from disk.
#[derive(Debug, Clone)]
pub struct PersistedRun {
    pub requests: Vec<Request>,
    pub events: Vec<SimEvent>,
    pub messages: Vec<Message>,
    pub rounds: Vec<RoundRecord>,
    pub vehicles: Vec<VehicleSummary>,
    pub report: MetricsReport,
}

impl PersistedRun {
    pub fn read(dir: &Path, net: &RoadNetwork) -> Result<Self> {
        let path = dir.join(REQUESTS);
        let file = File::open(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let path = dir.join(REPORT_JSON);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Ok(PersistedRun {
            requests: load_requests(file, net)?,
            events: read_rows(&dir.join(EVENTS))?,
            messages: read_rows(&dir.join(MESSAGES))?,
            rounds: read_rows(&dir.join(ROUNDS))?,
            vehicles: read_rows(&dir.join(VEHICLES))?,
            report: serde_json::from_str(&text).map_err(|e| Error::Parse {
                line: e.line(),
                msg: format!("{}: {e}", path.display()),
            })?,
        })
    }

    /// Metrics recomputed from the logs alone.
    pub fn recompute(&self) -> Result<MetricsReport> {
        compute_metrics(
            &self.events,
            &self.messages,
            &self.requests,
            &self.vehicles,
            &self.rounds,
            self.report.truncated,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispatch::{CtSource, Mode};
    use crate::network::{GridSpec, NetworkSpec};
    use crate::simcore::{run, DemandSource, Scenario};

    #[test]
    fn logs_round_trip_and_replay_to_same_report() {
        let dir = tempfile::tempdir().unwrap();
        let sc = Scenario {
            network: NetworkSpec::Grid(GridSpec {
                rows: 4,
                cols: 4,
                block_m: 150.0,
                speed_mps: 10.0,
            }),
            demand: DemandSource::Synthetic {
                count: 40,
                hotspot: None,
            },
            loading_period: 300.0,
            fleet_size: 5,
            mode: Mode::Distributed,
            ct_source: CtSource::Wall,
            ..Default::default()
        };
        let out = run(&sc).unwrap();
        write_outputs(&out, dir.path()).unwrap();
        let net = RoadNetwork::load(&sc.network).unwrap();
        let back = PersistedRun::read(dir.path(), &net).unwrap();
        assert_eq!(back.events, out.events);
        assert_eq!(back.messages, out.messages);
        assert_eq!(back.rounds, out.rounds);
        assert_eq!(back.report, out.report);
        assert_eq!(back.recompute().unwrap(), out.report);
    }
}
