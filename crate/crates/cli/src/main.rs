//! `eonsurv`: run embedding campaigns and evacuation scenarios, inspect
//! topologies and print the canonical fixtures.
//!
//! Exit codes: 0 success, 1 bad invocation or configuration, 2 failure while
//! running.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;

use std::io::Write;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use eonsurv::evacuation::{
    run_evac_grid, DeployConfig, DisasterRiskZone, EvacCell, EvacScheme, EvacuationOptions, Placement,
};
use eonsurv::parallel;
use eonsurv::report::{evacuation_csv, svne_csv, timeline_csv};
use eonsurv::spectrum::{canonical_fixture, fsw_cost, CANONICAL_STARTS};
use eonsurv::svne_sim::{run_grid, CampaignCell};
use eonsurv::topology::{builtin_topology, load_topology, BuiltinTopology, CapacityMode, CapacityParams};
use eonsurv::SubstrateNetwork;

use config::{parse_list, parse_modulation, parse_one, parse_scheme, parse_seeds, pick, pick_opt, RunFile};

#[derive(Parser, Debug)]
#[command(name = "eonsurv", version, about = "Survivable VN embedding over EONs and dual-VM disaster evacuation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dynamic embedding campaign over a scheme x load x seed grid.
    Svne(SvneArgs),
    /// Evacuation scenarios over a scheme x capacity x basic-bandwidth x seed grid.
    Evacuate(EvacArgs),
    /// Print and validate a topology.
    Topo(TopoArgs),
    /// Print a canonical test fixture.
    Fixtures(FixtureArgs),
}

#[derive(Args, Debug)]
struct SvneArgs {
    /// Run file of `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<String>,
    /// `usnet`, `nsfnet` or a topology file [default: usnet].
    #[arg(long)]
    topology: Option<String>,
    /// Schemes, optionally with K: `apss,apc:3,mpf:4,mdf` [default: apss].
    #[arg(long)]
    schemes: Option<String>,
    /// Offered loads in Erlang [default: 40].
    #[arg(long)]
    loads: Option<String>,
    /// Seeds, list or inclusive range: `1,2` or `1..5` [default: 1].
    #[arg(long, visible_alias = "seed")]
    seeds: Option<String>,
    /// Requests per run, warm-up included [default: 11000].
    #[arg(long)]
    requests: Option<String>,
    /// Leading requests left out of the metrics [default: 1000].
    #[arg(long)]
    warmup: Option<String>,
    /// Anchor radius in hops [default: 1].
    #[arg(long)]
    h: Option<String>,
    /// CPU units per node for built-in topologies [default: 300].
    #[arg(long)]
    cpu: Option<String>,
    /// Slots per link for built-in topologies [default: 320].
    #[arg(long)]
    slots: Option<String>,
    /// Modulation table as `NAME:efficiency:reach_km,...` [default: BPSK:1:4000,QPSK:2:2000,8QAM:3:1000,16QAM:4:500].
    #[arg(long)]
    modulation: Option<String>,
    /// Slot width in GHz [default: 12.5].
    #[arg(long)]
    slot_width: Option<String>,
    /// Guard slots per window [default: 1].
    #[arg(long)]
    guard_slots: Option<String>,
    /// Output CSV path, `-` for stdout [default: -].
    #[arg(long)]
    out: Option<String>,
}

const SVNE_KEYS: &[&str] = &[
    "topology",
    "schemes",
    "loads",
    "seeds",
    "requests",
    "warmup",
    "h",
    "cpu",
    "slots",
    "modulation",
    "slot-width",
    "guard-slots",
    "out",
];

#[derive(Args, Debug)]
struct EvacArgs {
    /// Run file of `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<String>,
    /// `usnet`, `nsfnet` or a topology file [default: nsfnet].
    #[arg(long)]
    topology: Option<String>,
    /// Link capacities in Gbps [default: 65].
    #[arg(long)]
    capacity: Option<String>,
    /// Basic migration bandwidths in Gbps [default: 5].
    #[arg(long)]
    basic_bw: Option<String>,
    /// `sedv`, `bedv` or both [default: sedv].
    #[arg(long)]
    scheme: Option<String>,
    /// Seeds, list or inclusive range [default: 1].
    #[arg(long, visible_alias = "seed")]
    seeds: Option<String>,
    /// The two zone nodes `a,b` [default: 3,4 on nsfnet, 8,9 on usnet].
    #[arg(long)]
    drz: Option<String>,
    /// VNs deployed before the disaster [default: 160 on nsfnet, 600 on usnet].
    #[arg(long)]
    vns: Option<String>,
    /// Host placement of deployed VNs: `clustered` or `uniform` [default: clustered].
    #[arg(long)]
    placement: Option<String>,
    /// Hop limit between new hosts and the VN's staying hosts [default: 2].
    #[arg(long)]
    distance_limit: Option<String>,
    /// Output CSV path, `-` for stdout [default: -].
    #[arg(long)]
    out: Option<String>,
    /// Per-VN timeline CSV; needs a grid of exactly one run.
    #[arg(long)]
    timeline: Option<String>,
}

const EVAC_KEYS: &[&str] = &[
    "topology",
    "capacity",
    "basic-bw",
    "scheme",
    "seeds",
    "drz",
    "vns",
    "placement",
    "distance-limit",
    "out",
    "timeline",
];

#[derive(Args, Debug)]
struct TopoArgs {
    /// A built-in topology: `usnet` or `nsfnet`.
    #[arg(long, conflicts_with = "file", required_unless_present = "file")]
    builtin: Option<String>,
    /// A topology file.
    #[arg(long)]
    file: Option<String>,
    /// Print the normalized topology file instead of the summary.
    #[arg(long)]
    emit: bool,
}

#[derive(Args, Debug)]
struct FixtureArgs {
    /// `cost-bitmap`, `usnet` or `nsfnet` [default: cost-bitmap].
    #[arg(default_value = "cost-bitmap")]
    name: String,
}

/// Configuration problems exit 1; everything after validation exits 2.
enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

trait ConfigContext<T> {
    fn config(self) -> Result<T, Failure>;
}

impl<T> ConfigContext<T> for Result<T> {
    fn config(self) -> Result<T, Failure> {
        self.map_err(Failure::Config)
    }
}

fn run_failure(e: anyhow::Error) -> Failure {
    Failure::Run(e)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let threads = match std::env::var("EONSURV_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Some(n),
            _ => {
                eprintln!("error: EONSURV_THREADS must be a positive integer, got `{v}`");
                return ExitCode::from(1);
            }
        },
        Err(_) => None,
    };
    let outcome = parallel::with_thread_cap(threads, || match cli.command {
        Command::Svne(a) => svne(a),
        Command::Evacuate(a) => evacuate(a),
        Command::Topo(a) => topo(a),
        Command::Fixtures(a) => fixtures(a),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn read_run_file(path: &Option<String>, keys: &[&str]) -> Result<RunFile> {
    let file = match path {
        Some(p) => RunFile::load(p)?,
        None => RunFile::default(),
    };
    file.check_keys(keys)?;
    Ok(file)
}

/// A built-in name or a topology file, checked against the mode the
/// subcommand needs.
fn resolve_topology(source: &str, mode: CapacityMode, params: CapacityParams) -> Result<SubstrateNetwork> {
    if let Ok(which) = source.parse::<BuiltinTopology>() {
        return Ok(builtin_topology(which, mode, params)?);
    }
    let text = std::fs::read_to_string(source)
        .with_context(|| format!("topology `{source}` is neither built in nor a readable file"))?;
    let net = load_topology(&text).with_context(|| format!("in topology file {source}"))?;
    if net.mode != mode {
        bail!("topology file {source} is {:?} but this subcommand needs {:?} links", net.mode, mode);
    }
    Ok(net)
}

fn write_output(path: &str, text: &str) -> Result<()> {
    if path == "-" {
        std::io::stdout().write_all(text.as_bytes()).context("writing stdout")
    } else {
        std::fs::write(path, text).with_context(|| format!("writing {path}"))
    }
}

fn svne(a: SvneArgs) -> Result<(), Failure> {
    let f = read_run_file(&a.config, SVNE_KEYS).config()?;
    let params = CapacityParams {
        cpu: parse_one("cpu", pick(&a.cpu, &f, "cpu", "300")).config()?,
        slots: parse_one("slots", pick(&a.slots, &f, "slots", "320")).config()?,
        gbps: 0.0,
    };
    let net = resolve_topology(pick(&a.topology, &f, "topology", "usnet"), CapacityMode::Slotted, params).config()?;
    let h: u32 = parse_one("h", pick(&a.h, &f, "h", "1")).config()?;
    let schemes = pick(&a.schemes, &f, "schemes", "apss")
        .split(',')
        .map(|s| parse_scheme(s.trim(), h))
        .collect::<Result<Vec<_>>>()
        .config()?;
    let loads: Vec<f64> = parse_list("loads", pick(&a.loads, &f, "loads", "40")).config()?;
    if let Some(bad) = loads.iter().find(|&&l| !(l > 0.0)) {
        return Err(Failure::Config(anyhow::anyhow!("loads: must be positive, got {bad}")));
    }
    let seeds = parse_seeds(pick(&a.seeds, &f, "seeds", "1")).config()?;
    let requests: usize = parse_one("requests", pick(&a.requests, &f, "requests", "11000")).config()?;
    let warmup: usize = parse_one("warmup", pick(&a.warmup, &f, "warmup", "1000")).config()?;
    let modulation = parse_modulation(
        pick_opt(&a.modulation, &f, "modulation"),
        pick(&a.slot_width, &f, "slot-width", "12.5"),
        pick(&a.guard_slots, &f, "guard-slots", "1"),
    )
    .config()?;
    let out = pick(&a.out, &f, "out", "-").to_string();

    let mut cells = Vec::with_capacity(schemes.len() * loads.len() * seeds.len());
    for s in &schemes {
        for &load in &loads {
            for &seed in &seeds {
                let mut c = CampaignCell::new(*s, load, seed);
                c.workload.requests = requests;
                c.workload.warmup = warmup;
                c.modulation = modulation.clone();
                cells.push(c);
            }
        }
    }
    if let Some(c) = cells.first() {
        c.workload_config().validate().map_err(|e| Failure::Config(e.into()))?;
    }

    let results =
        run_grid(&net, &cells).into_iter().collect::<Result<Vec<_>, _>>().map_err(|e| run_failure(e.into()))?;
    write_output(&out, &svne_csv(&results)).map_err(run_failure)
}

fn evacuate(a: EvacArgs) -> Result<(), Failure> {
    let f = read_run_file(&a.config, EVAC_KEYS).config()?;
    let topo = pick(&a.topology, &f, "topology", "nsfnet").to_string();
    let capacities: Vec<f64> = parse_list("capacity", pick(&a.capacity, &f, "capacity", "65")).config()?;
    if let Some(bad) = capacities.iter().find(|&&c| !(c > 0.0)) {
        return Err(Failure::Config(anyhow::anyhow!("capacity: must be positive, got {bad}")));
    }
    let basics: Vec<f64> = parse_list("basic-bw", pick(&a.basic_bw, &f, "basic-bw", "5")).config()?;
    if let Some(bad) = basics.iter().find(|&&b| !(b > 0.0)) {
        return Err(Failure::Config(anyhow::anyhow!("basic-bw: must be positive, got {bad}")));
    }
    let schemes: Vec<EvacScheme> = parse_list("scheme", pick(&a.scheme, &f, "scheme", "sedv")).config()?;
    let seeds = parse_seeds(pick(&a.seeds, &f, "seeds", "1")).config()?;
    let placement: Placement = parse_one("placement", pick(&a.placement, &f, "placement", "clustered")).config()?;
    let distance_limit: u32 =
        parse_one("distance-limit", pick(&a.distance_limit, &f, "distance-limit", "2")).config()?;
    let out = pick(&a.out, &f, "out", "-").to_string();
    let timeline = pick_opt(&a.timeline, &f, "timeline").map(str::to_string);

    let probe =
        resolve_topology(&topo, CapacityMode::Scalar, CapacityParams { gbps: capacities[0], ..Default::default() })
            .config()?;
    let drz = match pick_opt(&a.drz, &f, "drz") {
        Some(s) => {
            let ids: Vec<usize> = parse_list("drz", s).config()?;
            let [x, y] = ids[..] else {
                return Err(Failure::Config(anyhow::anyhow!("drz: expected two node ids, got `{s}`")));
            };
            DisasterRiskZone::new(&probe, x, y).map_err(|e| Failure::Config(e.into()))?
        }
        None => DisasterRiskZone::default_for(&probe).ok_or_else(|| {
            Failure::Config(anyhow::anyhow!("drz: no default zone for topology `{}`; pass --drz a,b", probe.name))
        })?,
    };
    let mut deploy = DeployConfig::for_network(&probe);
    deploy.placement = placement;
    if let Some(v) = pick_opt(&a.vns, &f, "vns") {
        deploy.count = parse_one("vns", v).config()?;
    }

    let mut cells = Vec::new();
    for &scheme in &schemes {
        for &cap in &capacities {
            let net = resolve_topology(&topo, CapacityMode::Scalar, CapacityParams { gbps: cap, ..Default::default() })
                .config()?;
            for &basic in &basics {
                for &seed in &seeds {
                    let mut options = EvacuationOptions::new(scheme, basic, seed);
                    options.distance_limit = distance_limit;
                    cells.push(EvacCell {
                        net: net.clone(),
                        drz,
                        deploy: deploy.clone(),
                        link_capacity_gbps: cap,
                        options,
                    });
                }
            }
        }
    }
    if timeline.is_some() && cells.len() != 1 {
        return Err(Failure::Config(anyhow::anyhow!("timeline: needs exactly one run, the grid has {}", cells.len())));
    }

    let results =
        run_evac_grid(&cells).into_iter().collect::<Result<Vec<_>, _>>().map_err(|e| run_failure(e.into()))?;
    let rows: Vec<_> = results.iter().map(|(row, _)| row.clone()).collect();
    write_output(&out, &evacuation_csv(&rows)).map_err(run_failure)?;
    if let Some(path) = timeline {
        let tl = results[0].1.as_ref().map(|r| r.timeline.as_slice()).unwrap_or(&[]);
        write_output(&path, &timeline_csv(tl)).map_err(run_failure)?;
    }
    Ok(())
}

fn topo(a: TopoArgs) -> Result<(), Failure> {
    let net = match (&a.builtin, &a.file) {
        (Some(name), _) => {
            let which: BuiltinTopology =
                name.parse().map_err(|e: eonsurv::topology::TopologyError| Failure::Config(e.into()))?;
            load_topology(which.fixture()).map_err(|e| Failure::Run(e.into()))?
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}")).config()?;
            load_topology(&text).with_context(|| format!("in topology file {path}")).config()?
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    let mut text = String::new();
    if a.emit {
        text = net.to_topology_text();
    } else {
        text.push_str(&format!("{}: {} nodes, {} links\n", net.name, net.node_count(), net.link_count()));
        let total: f64 = net.links.iter().map(|l| l.length_km).sum();
        text.push_str(&format!("total length {total} km\n"));
        for n in 0..net.node_count() {
            let adj: Vec<String> = net.neighbors(n).iter().map(|(m, _)| m.to_string()).collect();
            text.push_str(&format!("node {n} degree {} -> {}\n", adj.len(), adj.join(" ")));
        }
    }
    write_output("-", &text).map_err(run_failure)
}

fn fixtures(a: FixtureArgs) -> Result<(), Failure> {
    let text = match a.name.as_str() {
        "cost-bitmap" => cost_bitmap(),
        other => match other.parse::<BuiltinTopology>() {
            Ok(which) => which.fixture().to_string(),
            Err(_) => {
                return Err(Failure::Config(anyhow::anyhow!(
                    "unknown fixture `{other}` (expected cost-bitmap, usnet or nsfnet)"
                )))
            }
        },
    };
    write_output("-", &text).map_err(run_failure)
}

/// The worked window-cost example: per-link bitmaps (`.` free, `X` busy)
/// and the cost of each 2-slot candidate window.
fn cost_bitmap() -> String {
    let (net, path) = canonical_fixture();
    let mut s = String::from("# path 1-2-3, 12 slots per link, window width 2\n");
    for (&l, name) in path.links.iter().zip(["1-2", "2-3"]) {
        let g = net.links[l].grid().expect("slotted fixture");
        let bits: String = (0..g.len()).map(|i| if g.is_free(i) { '.' } else { 'X' }).collect();
        s.push_str(&format!("link {name} {bits}\n"));
    }
    for start in CANONICAL_STARTS {
        let cost = fsw_cost(&net, &path, start, 2).expect("fixture candidates are free");
        s.push_str(&format!("start {start} cost {cost}\n"));
    }
    s
}
