//! Scenario configuration: `key = value` lines (`#` comments) or a single
//! JSON object with the same keys. Relative paths are resolved against the
//! config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::demand::Hotspot;
use crate::error::{Error, Result};
use crate::network::{GridSpec, NetworkSpec};
use crate::simcore::{DemandSource, Scenario};

pub type ConfigMap = BTreeMap<String, String>;

/// Every recognised key, in the order they are written back out.
pub const KEYS: &[&str] = &[
    "network_file",
    "grid_rows",
    "grid_cols",
    "block_m",
    "speed_mps",
    "requests_file",
    "request_count",
    "loading_period_s",
    "demand_share",
    "hotspot_node",
    "hotspot_share",
    "seed",
    "fleet_size",
    "capacity",
    "mode",
    "search_level",
    "delta_s",
    "tick_s",
    "max_wait_s",
    "max_detour_factor",
    "max_insertion_positions",
    "max_sim_time_s",
    "ct_source",
    "parallel",
    "repeat_until_stable",
];

fn key_err(key: &str, msg: impl Into<String>) -> Error {
    Error::ConfigKey {
        key: key.into(),
        msg: msg.into(),
    }
}

pub fn parse_kv(text: &str) -> Result<ConfigMap> {
    let mut map = ConfigMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: format!("expected key = value, got {line:?}"),
        })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                msg: "empty key".into(),
            });
        }
        if map.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("duplicate key {k:?}"),
            });
        }
    }
    Ok(map)
}

pub fn parse_json(text: &str) -> Result<ConfigMap> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Config("top-level JSON value must be an object".into()))?;
    obj.iter()
        .map(|(k, v)| {
            let s = match v {
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Number(n) => n.to_string(),
                serde_json::Value::Bool(b) => b.to_string(),
                serde_json::Value::Null => String::new(),
                _ => return Err(key_err(k, "must be a string, number or boolean")),
            };
            Ok((k.clone(), s))
        })
        .collect()
}

/// Parses either format; JSON is recognised by a leading `{`.
pub fn parse_config(text: &str) -> Result<ConfigMap> {
    if text.trim_start().starts_with('{') {
        parse_json(text)
    } else {
        parse_kv(text)
    }
}

/// Reads a config file; returns its keys and the directory that relative
/// paths are resolved against.
pub fn load_config(path: &Path) -> Result<(ConfigMap, PathBuf)> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let map = parse_config(&text)?;
    let base = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((map, base))
}

fn num<T: std::str::FromStr>(map: &ConfigMap, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match map.get(key).map(|s| s.trim()).filter(|s| !s.is_empty()) {
        None => Ok(None),
        Some(s) => s
            .parse()
            .map(Some)
            .map_err(|e| key_err(key, format!("cannot parse {s:?}: {e}"))),
    }
}

fn flag(map: &ConfigMap, key: &str) -> Result<Option<bool>> {
    match map.get(key).map(|s| s.trim().to_ascii_lowercase()) {
        None => Ok(None),
        Some(s) => match s.as_str() {
            "" => Ok(None),
            "true" | "yes" | "1" | "on" => Ok(Some(true)),
            "false" | "no" | "0" | "off" => Ok(Some(false)),
            _ => Err(key_err(key, format!("expected a boolean, got {s:?}"))),
        },
    }
}

/// Builds and validates a scenario; unset keys keep [`Scenario::default`].
pub fn scenario_from_map(map: &ConfigMap, base: &Path) -> Result<Scenario> {
    if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(key_err(k, "unknown key"));
    }
    let resolve = |p: &str| {
        let p = PathBuf::from(p);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };
    let mut sc = Scenario::default();

    let grid_keys = ["grid_rows", "grid_cols", "block_m", "speed_mps"];
    if let Some(file) = map.get("network_file").filter(|s| !s.trim().is_empty()) {
        if let Some(k) = grid_keys.iter().find(|k| map.contains_key(**k)) {
            return Err(key_err(k, "cannot be combined with network_file"));
        }
        sc.network = NetworkSpec::File(resolve(file.trim()));
    } else {
        let mut g = GridSpec::default();
        if let Some(v) = num(map, "grid_rows")? {
            g.rows = v;
        }
        if let Some(v) = num(map, "grid_cols")? {
            g.cols = v;
        }
        if let Some(v) = num(map, "block_m")? {
            g.block_m = v;
        }
        if let Some(v) = num(map, "speed_mps")? {
            g.speed_mps = v;
        }
        sc.network = NetworkSpec::Grid(g);
    }

    let hotspot = match (num(map, "hotspot_node")?, num::<f64>(map, "hotspot_share")?) {
        (Some(node), Some(share)) => Some(Hotspot { node, share }),
        (None, None) => None,
        (Some(_), None) => return Err(key_err("hotspot_share", "required with hotspot_node")),
        (None, Some(_)) => return Err(key_err("hotspot_node", "required with hotspot_share")),
    };
    if let Some(file) = map.get("requests_file").filter(|s| !s.trim().is_empty()) {
        for k in ["request_count", "hotspot_node"] {
            if map.contains_key(k) {
                return Err(key_err(k, "cannot be combined with requests_file"));
            }
        }
        sc.demand = DemandSource::File(resolve(file.trim()));
    } else {
        let count = num(map, "request_count")?.unwrap_or(match sc.demand {
            DemandSource::Synthetic { count, .. } => count,
            DemandSource::File(_) => 0,
        });
        sc.demand = DemandSource::Synthetic { count, hotspot };
    }

    if let Some(v) = num(map, "loading_period_s")? {
        sc.loading_period = v;
    }
    if let Some(v) = num(map, "demand_share")? {
        sc.demand_share = v;
    }
    if let Some(v) = num(map, "seed")? {
        sc.seed = v;
    }
    if let Some(v) = num(map, "fleet_size")? {
        sc.fleet_size = v;
    }
    if let Some(v) = num(map, "capacity")? {
        sc.capacity = v;
    }
    if let Some(s) = map.get("mode") {
        sc.mode = s.parse()?;
    }
    if let Some(v) = num::<u8>(map, "search_level")? {
        sc.search_level = crate::dispatch::SearchLevel::new(v)?;
    }
    if let Some(v) = num(map, "delta_s")? {
        sc.delta = v;
    }
    if let Some(v) = num(map, "tick_s")? {
        sc.tick = v;
    }
    if let Some(v) = num(map, "max_wait_s")? {
        sc.max_wait = v;
    }
    if let Some(v) = num(map, "max_detour_factor")? {
        sc.max_detour_factor = v;
    }
    sc.max_insertion_positions = num(map, "max_insertion_positions")?;
    sc.max_sim_time = num(map, "max_sim_time_s")?;
    if let Some(s) = map.get("ct_source") {
        sc.ct_source = s.parse()?;
    }
    if let Some(v) = flag(map, "parallel")? {
        sc.parallel = v;
    }
    if let Some(v) = flag(map, "repeat_until_stable")? {
        sc.repeat_until_stable = v;
    }
    sc.validate()?;
    Ok(sc)
}

/// The effective configuration as `key = value` text.
pub fn scenario_to_text(sc: &Scenario) -> String {
    let mut map = ConfigMap::new();
    let mut put = |k: &str, v: String| {
        map.insert(k.to_string(), v);
    };
    match &sc.network {
        NetworkSpec::Grid(g) => {
            put("grid_rows", g.rows.to_string());
            put("grid_cols", g.cols.to_string());
            put("block_m", g.block_m.to_string());
            put("speed_mps", g.speed_mps.to_string());
        }
        NetworkSpec::File(p) => put("network_file", p.display().to_string()),
    }
    match &sc.demand {
        DemandSource::Synthetic { count, hotspot } => {
            put("request_count", count.to_string());
            if let Some(h) = hotspot {
                put("hotspot_node", h.node.to_string());
                put("hotspot_share", h.share.to_string());
            }
        }
        DemandSource::File(p) => put("requests_file", p.display().to_string()),
    }
    put("loading_period_s", sc.loading_period.to_string());
    put("demand_share", sc.demand_share.to_string());
    put("seed", sc.seed.to_string());
    put("fleet_size", sc.fleet_size.to_string());
    put("capacity", sc.capacity.to_string());
    put("mode", sc.mode.to_string());
    put("search_level", sc.search_level.hops().to_string());
    put("delta_s", sc.delta.to_string());
    put("tick_s", sc.tick.to_string());
    put("max_wait_s", sc.max_wait.to_string());
    put("max_detour_factor", sc.max_detour_factor.to_string());
    if let Some(n) = sc.max_insertion_positions {
        put("max_insertion_positions", n.to_string());
    }
    if let Some(t) = sc.max_sim_time {
        put("max_sim_time_s", t.to_string());
    }
    put(
        "ct_source",
        match sc.ct_source {
            crate::dispatch::CtSource::Wall => "wall".into(),
            crate::dispatch::CtSource::Work => "work".into(),
        },
    );
    put("parallel", sc.parallel.to_string());
    put("repeat_until_stable", sc.repeat_until_stable.to_string());
    KEYS.iter()
        .filter_map(|k| map.get(*k).map(|v| format!("{k} = {v}\n")))
        .collect()
}
