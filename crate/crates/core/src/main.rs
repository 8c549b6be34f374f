use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use dnssec_model::crypto::{AlgorithmId, Nsec3Params};
use dnssec_model::harness::report::{self, Record};
use dnssec_model::harness::scenario::{ActivityPlan, Scenario};
use dnssec_model::harness::topology::{declared_assignment, ChainSpec, Topology, ZoneConfig};
use dnssec_model::harness::walker::WalkOutcome;
use dnssec_model::name::DomainName;
use dnssec_model::record::SignedRRSet;
use dnssec_model::zone::load_zone;

/// Executable DNSSEC model: signed zones, a validating resolver with a shared
/// cache, a network adversary, and bounded property checking.
#[derive(Debug, Parser)]
#[command(name = "dnssec-model", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Table,
    JsonLines,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Chain {
    Nsec,
    Nsec3,
    Mixed,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check properties over seeded runs of one or more scenarios.
    Check {
        /// Scenario files. Defaults to every scenario shipped with the crate.
        scenarios: Vec<PathBuf>,
        /// Property ids, e.g. `1-12,14`. Defaults to those the scenario declares.
        #[arg(long)]
        props: Option<String>,
        /// `N` for seeds 0..N, or `A..B`. Defaults to the scenario's own count.
        #[arg(long)]
        seeds: Option<String>,
        /// Write the JSON-lines report here, with counterexample traces beside it.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Walk the NSEC chain of a zone and print the names found.
    Enumerate {
        /// A scenario file, or a single zone file to serve on its own.
        path: PathBuf,
        /// Zone to walk. Defaults to the scenario's walk target or the zone file's apex.
        #[arg(long)]
        apex: Option<DomainName>,
        /// Query budget.
        #[arg(long, default_value_t = 64)]
        budget: usize,
        /// Denial chain for a bare zone file.
        #[arg(long, value_enum, default_value = "nsec")]
        chain: Chain,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the event trace of one seeded run as JSON lines.
    Trace {
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Parse a zone file, build its denial chain, sign it and print the result.
    Zone {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "nsec")]
        chain: Chain,
        /// NSEC3 parameters as `alg:iterations:salt`.
        #[arg(long)]
        nsec3: Option<Nsec3Params>,
        /// Signing algorithms; the first also signs the KSK.
        #[arg(long, value_delimiter = ',', default_value = "8")]
        algorithms: Vec<u8>,
    },
}

/// A failure that maps to an exit status.
enum Failure {
    Usage(String),
    Deviation(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Check { scenarios, props, seeds, report, format } => check(scenarios, props, seeds, report, format),
        Command::Enumerate { path, apex, budget, chain, seed } => enumerate(&path, apex, budget, chain, seed),
        Command::Trace { scenario, seed } => trace(&scenario, seed),
        Command::Zone { file, chain, nsec3, algorithms } => zone(&file, chain, nsec3, algorithms),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Deviation(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
    }
}

fn shipped_scenarios() -> Result<Vec<PathBuf>, Failure> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/scenarios");
    let mut out: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    out.sort();
    Ok(out)
}

fn check(
    scenarios: Vec<PathBuf>,
    props: Option<String>,
    seeds: Option<String>,
    report_path: Option<PathBuf>,
    format: Format,
) -> Result<(), Failure> {
    let props = props.map(|p| report::parse_props(&p)).transpose().map_err(Failure::Usage)?;
    let seeds = seeds.map(|s| report::parse_seeds(&s)).transpose().map_err(Failure::Usage)?;
    let paths = if scenarios.is_empty() { shipped_scenarios()? } else { scenarios };
    let loaded = paths.iter().map(|p| Scenario::load(p)).collect::<Result<Vec<_>, _>>()?;
    let mut records: Vec<Record> = Vec::new();
    for s in &loaded {
        records.extend(report::check(s, props.as_deref(), seeds.clone())?);
    }
    if let Some(path) = &report_path {
        report::save_counterexamples(&mut records, path)?;
        fs::write(path, report::json_lines(&records))?;
    }
    let text = match format {
        Format::Table => report::table(&records),
        Format::JsonLines => report::json_lines(&records),
    };
    io::stdout().write_all(text.as_bytes())?;
    let off: Vec<String> =
        records.iter().filter(|r| !r.as_expected()).map(|r| format!("P{} on {}", r.id, r.scenario)).collect();
    if off.is_empty() {
        Ok(())
    } else {
        Err(Failure::Deviation(format!("unexpected verdicts: {}", off.join(", "))))
    }
}

fn single_zone_topology(path: &Path, chain: Chain) -> Result<Arc<Topology>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let zone = load_zone(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let params = Nsec3Params::default();
    let spec = match chain {
        Chain::Nsec => ChainSpec::Nsec,
        Chain::Nsec3 => ChainSpec::Nsec3(params),
        Chain::Mixed => ChainSpec::Mixed { assignment: Some(declared_assignment(&zone, &params)?), params },
    };
    Ok(Arc::new(Topology::build(vec![ZoneConfig::new(zone.without_denial(), spec)])?))
}

fn enumerate(path: &Path, apex: Option<DomainName>, budget: usize, chain: Chain, seed: u64) -> Result<(), Failure> {
    let is_scenario = path.extension().is_some_and(|x| x == "toml");
    let base = if is_scenario {
        Scenario::load(path)?
    } else {
        let topology = single_zone_topology(path, chain)?;
        Scenario::from_topology("enumerate", topology, Vec::new())
    };
    let apex = match apex.or_else(|| base.walk_target().cloned()) {
        Some(a) => a,
        None if is_scenario => return Err(Failure::Usage("scenario has no walk target; pass --apex".into())),
        None => base.topology.root().clone(),
    };
    if base.topology.server(&apex).is_none() {
        return Err(Failure::Usage(format!("no zone {apex} in {}", path.display())));
    }
    let s = base.with_plans(vec![ActivityPlan::Walk { apex: apex.clone(), budget, after: None }]);
    let run = s.run(seed);
    match run.walks.into_iter().next() {
        Some(WalkOutcome::Complete { names, queries, .. }) => {
            let mut out = io::stdout().lock();
            for n in &names {
                writeln!(out, "{n}")?;
            }
            eprintln!("{} names in {queries} queries", names.len());
            Ok(())
        }
        Some(WalkOutcome::EnumerationBlocked { hashes, queries, .. }) => Err(Failure::Deviation(format!(
            "enumeration blocked: {apex} uses NSEC3; {} hashed owners seen in {queries} queries",
            hashes.len()
        ))),
        Some(WalkOutcome::Incomplete { names, queries, .. }) => Err(Failure::Deviation(format!(
            "enumeration incomplete: {} names after {queries} queries",
            names.len()
        ))),
        None => Err(Failure::Deviation(format!("walk did not finish: {:?}", run.error))),
    }
}

fn trace(path: &Path, seed: u64) -> Result<(), Failure> {
    let s = Scenario::load(path)?;
    let run = s.run(seed);
    run.trace.write_json_lines(io::stdout().lock())?;
    Ok(())
}

fn zone(path: &Path, chain: Chain, nsec3: Option<Nsec3Params>, algorithms: Vec<u8>) -> Result<(), Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let parsed = load_zone(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let params = nsec3.unwrap_or_default();
    let spec = match chain {
        Chain::Nsec => ChainSpec::Nsec,
        Chain::Nsec3 => ChainSpec::Nsec3(params),
        Chain::Mixed => ChainSpec::Mixed { assignment: Some(declared_assignment(&parsed, &params)?), params },
    };
    let mut cfg = ZoneConfig::new(parsed.without_denial(), spec);
    cfg.algorithms = algorithms.into_iter().map(AlgorithmId).collect();
    let topology = Topology::build(vec![cfg])?;
    let z = topology.server(topology.root()).expect("the only zone");
    let mut out = io::stdout().lock();
    for s in z.signed_rrsets() {
        for rr in SignedRRSet::records(&s) {
            writeln!(out, "{rr}")?;
        }
    }
    Ok(())
}
