//! Scenario sweeps over mode, search level, fleet size, demand share and
//! seed, with one aggregate CSV row per cell.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::dispatch::{Mode, SearchLevel};
use crate::error::{Error, Result};
use crate::logs::write_outputs;
use crate::metrics::MetricsReport;
use crate::simcore::{run, Scenario};

pub const MAX_CELLS: usize = 10_000;
pub const AGGREGATE: &str = "aggregate.csv";

/// Values per axis; an empty axis keeps the base scenario's value.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Axes {
    pub mode: Vec<Mode>,
    pub search_level: Vec<SearchLevel>,
    pub fleet_size: Vec<usize>,
    pub demand_share: Vec<f64>,
    pub seed: Vec<u64>,
}

fn values(axis: &str, list: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((a, b)) = item.split_once("..") {
            let parse = |s: &str| {
                s.trim().parse::<u64>().map_err(|_| Error::ConfigKey {
                    key: axis.into(),
                    msg: format!("bad range {item:?}"),
                })
            };
            let (a, b) = (parse(a)?, parse(b)?);
            if b < a || b - a >= MAX_CELLS as u64 {
                return Err(Error::ConfigKey {
                    key: axis.into(),
                    msg: format!("bad range {item:?}"),
                });
            }
            out.extend((a..=b).map(|v| v.to_string()));
        } else {
            out.push(item.to_string());
        }
    }
    Ok(out)
}

fn parse_all<T: std::str::FromStr>(axis: &str, list: &str) -> Result<Vec<T>> {
    values(axis, list)?
        .into_iter()
        .map(|v| {
            v.parse().map_err(|_| Error::ConfigKey {
                key: axis.into(),
                msg: format!("cannot parse {v:?}"),
            })
        })
        .collect()
}

impl Axes {
    /// Parses `axis=v1,v2;axis=...`. Integer axes also accept inclusive
    /// ranges `a..b`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut axes = Axes::default();
        for part in spec.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let (name, list) = part
                .split_once('=')
                .ok_or_else(|| Error::Argument(format!("axis spec {part:?} is not name=values")))?;
            let name = name.trim();
            match name {
                "mode" => {
                    axes.mode = values(name, list)?
                        .iter()
                        .map(|s| s.parse())
                        .collect::<Result<_>>()?
                }
                "search_level" => {
                    axes.search_level = parse_all::<u8>(name, list)?
                        .into_iter()
                        .map(SearchLevel::new)
                        .collect::<Result<_>>()?
                }
                "fleet_size" => axes.fleet_size = parse_all(name, list)?,
                "demand_share" => {
                    axes.demand_share = parse_all(name, list)?;
                    if let Some(s) = axes.demand_share.iter().find(|s| !(0.0..=1.0).contains(*s)) {
                        return Err(Error::ConfigKey {
                            key: name.into(),
                            msg: format!("{s} outside [0, 1]"),
                        });
                    }
                }
                "seed" => axes.seed = parse_all(name, list)?,
                other => {
                    return Err(Error::ConfigKey {
                        key: other.into(),
                        msg: "unknown sweep axis".into(),
                    })
                }
            }
        }
        Ok(axes)
    }
}

/// One cell of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub scenario: Scenario,
}

impl Cell {
    pub fn name(&self) -> String {
        let sc = &self.scenario;
        let level = match sc.mode {
            Mode::Distributed => format!("-{}", sc.search_level),
            Mode::Centralized => String::new(),
        };
        format!(
            "{}{}-fleet{}-share{}-seed{}",
            sc.mode, level, sc.fleet_size, sc.demand_share, sc.seed
        )
    }
}

/// Cross product of the axes. Centralized cells ignore the search level, so
/// they are generated once per remaining combination.
pub fn expand(base: &Scenario, axes: &Axes) -> Result<Vec<Cell>> {
    fn or_base<T: Clone>(v: &[T], base: T) -> Vec<T> {
        if v.is_empty() {
            vec![base]
        } else {
            v.to_vec()
        }
    }
    let modes = or_base(&axes.mode, base.mode);
    let levels = or_base(&axes.search_level, base.search_level);
    let fleets = or_base(&axes.fleet_size, base.fleet_size);
    let shares = or_base(&axes.demand_share, base.demand_share);
    let seeds = or_base(&axes.seed, base.seed);

    let per_mode: usize = modes
        .iter()
        .map(|m| match m {
            Mode::Centralized => 1,
            Mode::Distributed => levels.len(),
        })
        .sum();
    let total = per_mode
        .saturating_mul(fleets.len())
        .saturating_mul(shares.len())
        .saturating_mul(seeds.len());
    if total > MAX_CELLS {
        return Err(Error::Argument(format!(
            "sweep has {total} cells; the limit is {MAX_CELLS}"
        )));
    }

    let mut cells = Vec::with_capacity(total);
    for &mode in &modes {
        let mode_levels: &[SearchLevel] = match mode {
            Mode::Centralized => &levels[..1],
            Mode::Distributed => &levels,
        };
        for &level in mode_levels {
            for &fleet in &fleets {
                for &share in &shares {
                    for &seed in &seeds {
                        cells.push(Cell {
                            scenario: Scenario {
                                mode,
                                search_level: level,
                                fleet_size: fleet,
                                demand_share: share,
                                seed,
                                ..base.clone()
                            },
                        });
                    }
                }
            }
        }
    }
    // a repeated axis value would produce the same cell twice
    let mut seen = std::collections::HashSet::new();
    cells.retain(|c| seen.insert(c.name()));
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    pub outcome: std::result::Result<MetricsReport, String>,
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: Scenario,
    pub axes: Axes,
    pub out_dir: PathBuf,
    /// Cells run concurrently; 1 runs them in order on this thread.
    pub jobs: usize,
}

fn run_cell(cell: &Cell, out_dir: &Path) -> std::result::Result<MetricsReport, String> {
    let out = run(&cell.scenario).map_err(|e| e.to_string())?;
    let dir = out_dir.join(cell.name());
    write_outputs(&out, &dir).map_err(|e| e.to_string())?;
    std::fs::write(
        dir.join("scenario.txt"),
        crate::config::scenario_to_text(&cell.scenario),
    )
    .map_err(|e| e.to_string())?;
    Ok(out.report)
}

/// Runs every cell (failures are recorded, not fatal), writes per-cell
/// artifacts under `out_dir/<cell>/` and the aggregate CSV.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<CellResult>> {
    let cells = expand(&spec.base, &spec.axes)?;
    std::fs::create_dir_all(&spec.out_dir)
        .map_err(|e| Error::Io(format!("{}: {e}", spec.out_dir.display())))?;
    let results: Vec<CellResult> = if spec.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(spec.jobs)
            .build()
            .map_err(|e| Error::Argument(e.to_string()))?;
        pool.install(|| {
            cells
                .par_iter()
                .map(|c| CellResult {
                    cell: c.clone(),
                    outcome: run_cell(c, &spec.out_dir),
                })
                .collect()
        })
    } else {
        cells
            .iter()
            .map(|c| CellResult {
                cell: c.clone(),
                outcome: run_cell(c, &spec.out_dir),
            })
            .collect()
    };
    write_aggregate(&results, &spec.out_dir.join(AGGREGATE))?;
    Ok(results)
}

pub fn aggregate_header() -> Vec<&'static str> {
    let mut h = vec![
        "cell",
        "mode",
        "search_level",
        "fleet_size",
        "demand_share",
        "seed",
    ];
    h.extend(MetricsReport::csv_header());
    h.push("error");
    h
}

pub fn write_aggregate(results: &[CellResult], path: &Path) -> Result<()> {
    let file =
        std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(aggregate_header())?;
    for r in results {
        let sc = &r.cell.scenario;
        let mut row = vec![
            r.cell.name(),
            sc.mode.to_string(),
            match sc.mode {
                Mode::Distributed => sc.search_level.hops().to_string(),
                Mode::Centralized => String::new(),
            },
            sc.fleet_size.to_string(),
            sc.demand_share.to_string(),
            sc.seed.to_string(),
        ];
        match &r.outcome {
            Ok(report) => {
                let line = report.to_csv()?;
                let data = line.lines().nth(1).unwrap_or_default();
                let mut rdr = csv::ReaderBuilder::new()
                    .has_headers(false)
                    .from_reader(data.as_bytes());
                let rec = rdr.records().next().transpose()?.unwrap_or_default();
                row.extend(rec.iter().map(str::to_string));
                row.push(String::new());
            }
            Err(e) => {
                row.extend(MetricsReport::csv_header().iter().map(|_| String::new()));
                row.push(e.clone());
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    let mut file = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    file.flush()?;
    Ok(())
}
