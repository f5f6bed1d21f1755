use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ridematch_core::config::{load_config, scenario_from_map, scenario_to_text, ConfigMap};
use ridematch_core::error::{Error, Result};
use ridematch_core::logs::write_outputs;
use ridematch_core::metrics::amdahl_speedup;
use ridematch_core::network::RoadNetwork;
use ridematch_core::simcore::{run, Scenario};
use ridematch_core::sweep::{run_sweep, Axes, SweepSpec, AGGREGATE};

/// Default output directory when `--out` is not given.
const OUT_ENV: &str = "RIDEMATCH_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "ridematch",
    version,
    about = "Shared ride-hailing dispatch simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its logs and report.
    Run(RunArgs),
    /// Run a grid of scenarios and write an aggregate CSV.
    Sweep(SweepArgs),
    /// Amdahl's-law speedup for sequential fraction BETA on K processors.
    Amdahl {
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        k: u32,
    },
    /// Check a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    search_level: Option<u8>,
    #[arg(long)]
    fleet_size: Option<usize>,
    /// Matching interval, seconds.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    capacity: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Any other config key, as KEY=VALUE; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// e.g. "mode=centralized,distributed;search_level=0..3;seed=1..5"
    #[arg(long, default_value = "")]
    axes: String,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cells run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn out_dir(flag: Option<PathBuf>) -> Result<PathBuf> {
    flag.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .ok_or_else(|| Error::Argument(format!("no output directory: pass --out or set {OUT_ENV}")))
}

fn scenario(path: &Path, overrides: &[(String, String)]) -> Result<Scenario> {
    let (mut map, base): (ConfigMap, PathBuf) = load_config(path)?;
    for (k, v) in overrides {
        map.insert(k.clone(), v.clone());
    }
    scenario_from_map(&map, &base)
}

fn run_cmd(args: RunArgs) -> Result<()> {
    let mut overrides = Vec::new();
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            overrides.push((k.to_string(), v));
        }
    };
    put("mode", args.mode);
    put("search_level", args.search_level.map(|v| v.to_string()));
    put("fleet_size", args.fleet_size.map(|v| v.to_string()));
    put("delta_s", args.delta.map(|v| v.to_string()));
    put("capacity", args.capacity.map(|v| v.to_string()));
    put("seed", args.seed.map(|v| v.to_string()));
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Argument(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    let sc = scenario(&args.config, &overrides)?;
    let dir = out_dir(args.out)?;
    let out = run(&sc)?;
    write_outputs(&out, &dir)?;
    std::fs::write(dir.join("scenario.txt"), scenario_to_text(&sc))?;
    let r = &out.report;
    println!(
        "served {}/{} (SR {:.4}), expired {}, WT {:.1} s, DT {:.1} s, VKT {:.2} km, \
         CT parallel mean {:.3e} s over {} rounds{}",
        r.served,
        r.total_requests,
        r.sr,
        r.expired,
        r.wt_mean,
        r.dt_mean,
        r.vkt_total,
        r.ct_parallel_mean,
        r.rounds,
        if r.truncated { " [truncated]" } else { "" }
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn sweep_cmd(args: SweepArgs) -> Result<()> {
    let base = scenario(&args.config, &[])?;
    let spec = SweepSpec {
        base,
        axes: Axes::parse(&args.axes)?,
        out_dir: out_dir(args.out)?,
        jobs: args.jobs.max(1),
    };
    let results = run_sweep(&spec)?;
    let failed = results.iter().filter(|r| r.outcome.is_err()).count();
    println!(
        "{} cells, {} failed; wrote {}",
        results.len(),
        failed,
        spec.out_dir.join(AGGREGATE).display()
    );
    Ok(())
}

fn validate_cmd(config: &Path) -> Result<()> {
    let sc = scenario(config, &[])?;
    let net = RoadNetwork::load(&sc.network)?;
    net.check_strongly_connected()?;
    sc.requests(&net)?;
    println!(
        "ok: {} nodes, {} links, {} vehicles, mode {}",
        net.node_count(),
        net.link_count(),
        sc.fleet_size,
        sc.mode
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run(args) => run_cmd(args),
        Command::Sweep(args) => sweep_cmd(args),
        Command::Amdahl { beta, k } => amdahl_speedup(beta, k).map(|s| println!("{s}")),
        Command::Validate { config } => validate_cmd(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
