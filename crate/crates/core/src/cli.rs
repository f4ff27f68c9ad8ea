//! Command-line front end.
//!
//! Settings resolve in this order: command-line flags, then `GEOAUDIT_*`
//! environment variables, then the TOML file named by `--config`. The file
//! holds one table per subcommand whose keys are long option names:
//!
//! ```toml
//! [audit]
//! seed = 7
//! propagation-factor = 0.6667
//! threads = 4
//! ```
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 input error,
//! 3 measurement backend failure.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::net::IpAddr;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bgp::{alignment_table, load_rib, Alignment};
use crate::classify::{audit_pipeline, AuditConfig, AuditInputs, Precedence};
use crate::error::Error;
use crate::geo::{GeoInferenceConfig, FIBER_FACTOR};
use crate::jsonl::{open_maybe_gzip, read_jsonl, read_lines, write_jsonl_file};
use crate::measure::{
    by_target, measurement_tag, run_campaign, LiveBackend, MeasureError, MeasurementBackend,
    ReplayBackend, SimulatorBackend, SyntheticWorld, TargetJob, API_KEY_ENV,
};
use crate::registry::{Family, Prefix, RegionMap, Registration, RirId};
use crate::report::{self, DetectionCriterion, ReportInputs};
use crate::targets::{
    build_target_plans, exclude_aliased, load_hitlist, sample_plans, RegistrationIndex,
    DEFAULT_MIN_SCORE,
};
use crate::trie::DualStackTrie;
use crate::vantage::{
    filter_vantages, load_bad_ids, load_default_coords, load_vantages, plan_vantages,
    select_stable_sets, VantagePoint,
};
use crate::whois::{
    drop_circular_transfers, link_organizations, parse_bulk_whois_reader, DialectTable,
    IngestOptions, IngestReport,
};

#[derive(Parser, Debug)]
#[command(
    name = "geoaudit",
    version,
    about = "Audit IP prefix registrations for geographic consistency"
)]
#[command(
    after_help = "Precedence: flags > GEOAUDIT_* environment variables > --config file.\n\
Exit codes: 0 ok, 1 usage/config, 2 input, 3 backend.\n\
The live backend reads its API key from GEOAUDIT_API_KEY."
)]
pub struct Cli {
    /// TOML file with one table of defaults per subcommand.
    #[arg(long, global = true, env = "GEOAUDIT_CONFIG")]
    pub config: Option<PathBuf>,

    /// Registry-to-country map CSV (country,rir); defaults to the bundled snapshot.
    #[arg(long, global = true, env = "GEOAUDIT_REGION_MAP")]
    pub region_map: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Parse bulk WHOIS dumps into registrations.jsonl.
    Ingest(IngestArgs),
    /// Classify registered prefixes against a routing table.
    Align(AlignArgs),
    /// Select targets and vantages for each sampled prefix.
    Plan(PlanArgs),
    /// Measure, infer, and classify; writes audit.jsonl.
    Audit(AuditArgs),
    /// Aggregate audit.jsonl into report tables.
    Report(ReportArgs),
    /// Out-of-region owner statistics.
    Oro(OroArgs),
}

fn parse_rir_path(s: &str) -> std::result::Result<(RirId, PathBuf), String> {
    let (rir, path) = s.split_once('=').ok_or("expected RIR=PATH")?;
    Ok((
        rir.parse().map_err(|e: Error| e.to_string())?,
        PathBuf::from(path),
    ))
}

fn parse_named_path(s: &str) -> std::result::Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or("expected NAME=PATH")?;
    if name.is_empty() {
        return Err("empty name".into());
    }
    Ok((name.to_string(), PathBuf::from(path)))
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Dump per registry, e.g. `--whois ARIN=arin.db.gz`. Repeatable.
    #[arg(long = "whois", value_parser = parse_rir_path, required = true)]
    pub whois: Vec<(RirId, PathBuf)>,
    /// Dialect table overriding the bundled one.
    #[arg(long, env = "GEOAUDIT_DIALECTS")]
    pub dialects: Option<PathBuf>,
    /// Snapshot date (YYYY-MM-DD); later update stamps are discarded.
    #[arg(long, env = "GEOAUDIT_DATASET_DATE")]
    pub dataset_date: Option<chrono::NaiveDate>,
    #[arg(long, short, default_value = "registrations.jsonl")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AlignArgs {
    #[arg(
        long,
        env = "GEOAUDIT_REGISTRATIONS",
        default_value = "registrations.jsonl"
    )]
    pub registrations: PathBuf,
    /// Normalized RIB: `<prefix> <origin_asn>` per line.
    #[arg(long, env = "GEOAUDIT_RIB")]
    pub rib: PathBuf,
    #[arg(long, short, default_value = "alignment.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct PlanInputs {
    #[arg(
        long,
        env = "GEOAUDIT_REGISTRATIONS",
        default_value = "registrations.jsonl"
    )]
    pub registrations: PathBuf,
    /// IPv4 hitlist with `addr,score` lines.
    #[arg(long, env = "GEOAUDIT_HITLIST_V4")]
    pub hitlist_v4: Option<PathBuf>,
    /// IPv6 hitlist with one address per line.
    #[arg(long, env = "GEOAUDIT_HITLIST_V6")]
    pub hitlist_v6: Option<PathBuf>,
    /// Aliased IPv6 prefixes to exclude.
    #[arg(long, env = "GEOAUDIT_ALIASED")]
    pub aliased: Option<PathBuf>,
    #[arg(long, env = "GEOAUDIT_VANTAGES", default_value = "vantages.jsonl")]
    pub vantages: PathBuf,
    #[arg(long, env = "GEOAUDIT_BAD_PROBES")]
    pub bad_probes: Option<PathBuf>,
    /// Per-country default coordinates (country,lat,lon).
    #[arg(long, env = "GEOAUDIT_DEFAULT_COORDS")]
    pub default_coords: Option<PathBuf>,
    #[arg(long, env = "GEOAUDIT_SAMPLE_FRACTION", default_value_t = 1.0)]
    pub sample_fraction: f64,
    #[arg(long, env = "GEOAUDIT_MIN_SCORE", default_value_t = DEFAULT_MIN_SCORE)]
    pub min_score: u8,
    #[arg(long, env = "GEOAUDIT_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    #[command(flatten)]
    pub inputs: PlanInputs,
    #[arg(long, short, default_value = "plans.jsonl")]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackendKind {
    Replay,
    Simulate,
    Live,
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    #[command(flatten)]
    pub inputs: PlanInputs,
    #[arg(long, env = "GEOAUDIT_RIB")]
    pub rib: PathBuf,
    #[arg(long, env = "GEOAUDIT_ANYCAST")]
    pub anycast: Option<PathBuf>,
    #[arg(long, env = "GEOAUDIT_NIR_MARKERS")]
    pub nir_markers: Option<PathBuf>,
    /// Country representative points (country,lat,lon); defaults to the bundled set.
    #[arg(long, env = "GEOAUDIT_COUNTRY_POINTS")]
    pub country_points: Option<PathBuf>,
    #[arg(long, value_enum, env = "GEOAUDIT_BACKEND", default_value = "replay")]
    pub backend: BackendKind,
    /// Archived results for the replay backend.
    #[arg(long, env = "GEOAUDIT_RESULTS")]
    pub results: Option<PathBuf>,
    /// Target locations for the simulator (target,lat,lon[,responsive]).
    #[arg(long, env = "GEOAUDIT_WORLD")]
    pub world: Option<PathBuf>,
    /// Upper bound of the simulator's additive noise.
    #[arg(long, env = "GEOAUDIT_NOISE_MS", default_value_t = 0.0)]
    pub noise_ms: f64,
    /// Propagation factor the simulator uses to generate RTTs.
    #[arg(long, env = "GEOAUDIT_SIM_FACTOR", default_value_t = FIBER_FACTOR)]
    pub sim_propagation_factor: f64,
    /// Base URL of the live measurement API.
    #[arg(
        long,
        env = "GEOAUDIT_API_URL",
        default_value = "https://atlas.ripe.net"
    )]
    pub api_url: String,
    /// Measurement tag; defaults to `geoaudit-<dataset date or today>`.
    #[arg(long, env = "GEOAUDIT_TAG")]
    pub tag: Option<String>,
    #[arg(long, env = "GEOAUDIT_DATASET_DATE")]
    pub dataset_date: Option<chrono::NaiveDate>,
    /// Fraction of light speed assumed when converting RTT to distance.
    #[arg(long, env = "GEOAUDIT_PROPAGATION_FACTOR", default_value_t = 0.6667)]
    pub propagation_factor: f64,
    /// Report OI instead of OC when both regions are feasible.
    #[arg(long, env = "GEOAUDIT_REGISTRY_FIRST")]
    pub registry_first: bool,
    /// Drop prefixes without an organization country.
    #[arg(long, env = "GEOAUDIT_EXCLUDE_NO_ORG_COUNTRY")]
    pub exclude_no_org_country: bool,
    /// Worker threads and in-flight measurement limit.
    #[arg(long, env = "GEOAUDIT_THREADS", default_value_t = 4)]
    pub threads: usize,
    /// Also write the raw measurement results here.
    #[arg(long)]
    pub results_out: Option<PathBuf>,
    #[arg(long, short, default_value = "audit.jsonl")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long, env = "GEOAUDIT_AUDIT", default_value = "audit.jsonl")]
    pub audit: PathBuf,
    #[arg(long, env = "GEOAUDIT_REGISTRATIONS")]
    pub registrations: Option<PathBuf>,
    /// Provider CSV (prefix,country), e.g. `--geodb ipinfo=geodb_ipinfo.csv`. Repeatable.
    #[arg(long = "geodb", value_parser = parse_named_path)]
    pub geodb: Vec<(String, PathBuf)>,
    #[arg(long, env = "GEOAUDIT_LEASED")]
    pub leased: Option<PathBuf>,
    /// Count a provider hit only when it agrees with the inferred region.
    #[arg(long)]
    pub same_region: bool,
    #[arg(long, default_value = "report")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct OroArgs {
    #[arg(
        long,
        env = "GEOAUDIT_REGISTRATIONS",
        default_value = "registrations.jsonl"
    )]
    pub registrations: PathBuf,
    #[arg(long, short, default_value = "oro.csv")]
    pub out: PathBuf,
}

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Lib(
                Error::Config(_) | Error::InvalidDialect(_) | Error::InvalidRegionMap(_),
            ) => 1,
            CliError::Lib(Error::Measure(MeasureError::BackendUnavailable { .. })) => 3,
            CliError::Lib(_) => 2,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

// ------------------------------------------------------------ config layer

fn toml_to_args(key: &str, value: &toml::Value) -> CliResult<Vec<OsString>> {
    let flag = OsString::from(format!("--{key}"));
    Ok(match value {
        toml::Value::Boolean(true) => vec![flag],
        toml::Value::Boolean(false) => vec![],
        toml::Value::Array(items) => {
            let mut out = Vec::new();
            for item in items {
                out.extend(toml_to_args(key, item)?);
            }
            out
        }
        toml::Value::String(s) => vec![flag, s.into()],
        toml::Value::Integer(i) => vec![flag, i.to_string().into()],
        toml::Value::Float(f) => vec![flag, f.to_string().into()],
        toml::Value::Datetime(d) => vec![flag, d.to_string().into()],
        toml::Value::Table(_) => {
            return Err(CliError::Usage(format!(
                "config key {key:?} must not be a table"
            )))
        }
    })
}

fn arg_id_for_long(cmd: &clap::Command, long: &str) -> Option<String> {
    cmd.get_arguments()
        .find(|a| a.get_long() == Some(long))
        .map(|a| a.get_id().to_string())
}

/// Parses argv, filling options left at their defaults from the config
/// file's table for the chosen subcommand.
pub fn parse_with_config(argv: Vec<OsString>) -> std::result::Result<Cli, clap::Error> {
    let matches = Cli::command().try_get_matches_from(&argv)?;
    let first = Cli::from_arg_matches(&matches)?;
    let Some(path) = first.config.clone() else {
        return Ok(first);
    };
    let usage = |msg: String| Cli::command().error(clap::error::ErrorKind::InvalidValue, msg);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| usage(format!("config {}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| usage(format!("config {}: {e}", path.display())))?;
    let Some((sub_name, sub_matches)) = matches.subcommand() else {
        return Ok(first);
    };
    let Some(section) = table.get(sub_name).and_then(toml::Value::as_table) else {
        return Ok(first);
    };
    let root = Cli::command();
    let sub_cmd = root.find_subcommand(sub_name).expect("matched subcommand");
    let mut extra = Vec::new();
    for (key, value) in section {
        let id = arg_id_for_long(sub_cmd, key)
            .ok_or_else(|| usage(format!("config [{sub_name}] has unknown option {key:?}")))?;
        let explicit = matches!(
            sub_matches.value_source(&id),
            Some(ValueSource::CommandLine | ValueSource::EnvVariable)
        );
        if !explicit {
            extra.extend(toml_to_args(key, value).map_err(|e| usage(e.to_string()))?);
        }
    }
    if extra.is_empty() {
        return Ok(first);
    }
    let pos = argv
        .iter()
        .position(|a| a.to_str() == Some(sub_name))
        .expect("subcommand in argv");
    let mut merged = argv;
    merged.splice(pos + 1..pos + 1, extra);
    Cli::try_parse_from(merged)
}

/// Entry point used by the binary. Returns the process exit code.
pub fn run(argv: impl IntoIterator<Item = OsString>) -> i32 {
    let cli = match parse_with_config(argv.into_iter().collect()) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cli: &Cli) -> CliResult<()> {
    let map = match &cli.region_map {
        Some(p) => RegionMap::load(p)?,
        None => RegionMap::nro_snapshot(),
    };
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(a).map(|_| ()),
        Command::Align(a) => cmd_align(a),
        Command::Plan(a) => cmd_plan(a, &map),
        Command::Audit(a) => cmd_audit(a, &map).map(|_| ()),
        Command::Report(a) => cmd_report(a, &map),
        Command::Oro(a) => cmd_oro(a, &map),
    }
}

fn require_readable(path: &Path) -> CliResult<()> {
    File::open(path)
        .map(|_| ())
        .map_err(|e| Error::io(path, e).into())
}

fn stdout_line(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
}

// ---------------------------------------------------------------- commands

pub fn cmd_ingest(args: &IngestArgs) -> CliResult<IngestReport> {
    for (_, p) in &args.whois {
        require_readable(p)?;
    }
    let dialects = match &args.dialects {
        Some(p) => {
            DialectTable::from_toml_str(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?
        }
        None => DialectTable::bundled(),
    };
    let options = IngestOptions {
        dataset_date: args.dataset_date,
    };
    let mut report = IngestReport::default();
    let mut by_rir: BTreeMap<RirId, Vec<Registration>> = BTreeMap::new();
    for (rir, path) in &args.whois {
        let mut dump = parse_bulk_whois_reader(open_maybe_gzip(path)?, *rir, &dialects, &options)?;
        dump.report.unresolved_orgs +=
            link_organizations(&mut dump.registrations, &dump.organizations);
        report.merge(&dump.report);
        by_rir.entry(*rir).or_default().extend(dump.registrations);
    }
    report.circular_refs_dropped += drop_circular_transfers(&mut by_rir);
    let mut regs: Vec<Registration> = by_rir.into_values().flatten().collect();
    regs.sort_by(|a, b| a.prefix.cmp(&b.prefix).then(a.rir_reg.cmp(&b.rir_reg)));
    write_jsonl_file(&args.out, &regs)?;
    stdout_line(&format!(
        "records read {}, registrations written {}, duplicates {}, not managed {}, malformed {}, \
         split ranges {}, circular transfers {}, unresolved orgs {}",
        report.records_read,
        regs.len(),
        report.duplicates_dropped,
        report.not_managed_skipped,
        report.malformed_skipped,
        report.non_cidr_ranges_split,
        report.circular_refs_dropped,
        report.unresolved_orgs,
    ));
    Ok(report)
}

fn load_regs(path: &Path) -> CliResult<Vec<Registration>> {
    Ok(read_jsonl(path)?)
}

pub fn cmd_align(args: &AlignArgs) -> CliResult<()> {
    let regs = load_regs(&args.registrations)?;
    let (rib, stats) = load_rib(open_maybe_gzip(&args.rib)?)?;
    if stats.malformed > 0 {
        log::warn!("{} malformed RIB lines skipped", stats.malformed);
    }
    let rows = alignment_table(&regs, &rib);
    let mut t = report::Table::new(
        "BGP alignment (%)",
        &[
            "family",
            "rir",
            "total",
            "Subnet",
            "Aligned",
            "Supernet",
            "MixedAS",
            "Unadvertised",
        ],
    );
    for row in &rows {
        let mut cells = vec![
            row.family.to_string(),
            row.rir.map_or("ALL".into(), |r| r.as_str().to_string()),
            row.total().to_string(),
        ];
        cells.extend(
            Alignment::ALL
                .iter()
                .map(|c| format!("{:.1}", row.fraction(*c) * 100.0)),
        );
        t.push(cells);
    }
    std::fs::write(&args.out, t.to_csv()?).map_err(|e| Error::io(&args.out, e))?;
    stdout_line(&t.to_text());
    Ok(())
}

/// One planned prefix with its targets and vantages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub prefix: Prefix,
    pub rir: RirId,
    pub registration: usize,
    pub targets: Vec<IpAddr>,
    pub vantage_ids: Vec<String>,
    #[serde(default)]
    pub flags: BTreeSet<String>,
}

pub const FLAG_NO_IN_COUNTRY_VANTAGE: &str = "no-in-country-vantage";

/// Everything planning produces.
pub struct Planned {
    pub regs: Vec<Registration>,
    pub records: Vec<PlanRecord>,
    pub plans: Vec<crate::targets::TargetPlan>,
    pub vantages: BTreeMap<String, VantagePoint>,
}

fn validate_plan_inputs(p: &PlanInputs) -> CliResult<()> {
    if !(0.0..=1.0).contains(&p.sample_fraction) {
        return Err(Error::Config(format!(
            "sample fraction {} outside [0, 1]",
            p.sample_fraction
        ))
        .into());
    }
    if p.min_score > 100 {
        return Err(Error::Config(format!("min score {} above 100", p.min_score)).into());
    }
    if p.hitlist_v4.is_none() && p.hitlist_v6.is_none() {
        return Err(CliError::Usage(
            "at least one of --hitlist-v4 and --hitlist-v6 is required".into(),
        ));
    }
    for path in [
        &p.hitlist_v4,
        &p.hitlist_v6,
        &p.aliased,
        &p.bad_probes,
        &p.default_coords,
    ]
    .into_iter()
    .flatten()
    .chain([&p.registrations, &p.vantages])
    {
        require_readable(path)?;
    }
    Ok(())
}

pub fn build_plans(p: &PlanInputs, map: &RegionMap) -> CliResult<Planned> {
    let regs = load_regs(&p.registrations)?;
    let mut entries = Vec::new();
    for (path, family) in [(&p.hitlist_v4, Family::V4), (&p.hitlist_v6, Family::V6)] {
        if let Some(path) = path {
            let (kept, stats) = load_hitlist(open_maybe_gzip(path)?, family, p.min_score)?;
            log::info!(
                "{}: kept {}, below threshold {}, malformed {}",
                path.display(),
                stats.kept,
                stats.below_threshold,
                stats.malformed
            );
            entries.extend(kept);
        }
    }
    if let Some(path) = &p.aliased {
        let aliased = report::read_prefix_list(path)?;
        let (kept, removed) = exclude_aliased(entries, &aliased);
        log::info!("{removed} hitlist entries in aliased prefixes");
        entries = kept;
    }
    let index = RegistrationIndex::build(&regs);
    let plans = sample_plans(
        build_target_plans(&index, &entries),
        p.sample_fraction,
        p.seed,
    )?;

    let all = load_vantages(&p.vantages)?;
    let bad = match &p.bad_probes {
        Some(path) => load_bad_ids(path)?,
        None => Default::default(),
    };
    let defaults = match &p.default_coords {
        Some(path) => load_default_coords(open_maybe_gzip(path)?)?,
        None => Default::default(),
    };
    let (trusted, fstats) = filter_vantages(all, &bad, &defaults);
    log::info!(
        "vantages kept {} of {}",
        fstats.kept,
        fstats.kept + fstats.disconnected + fstats.bad_listed + fstats.default_coords
    );
    let vset = select_stable_sets(&trusted, map);

    let mut records = Vec::with_capacity(plans.len());
    for plan in &plans {
        let reg = &regs[plan.registration];
        let vplan = plan_vantages(&plan.prefix, reg.org_country, reg.rir_reg, &vset);
        let mut flags = BTreeSet::new();
        if vplan.no_in_country_vantage {
            flags.insert(FLAG_NO_IN_COUNTRY_VANTAGE.to_string());
        }
        records.push(PlanRecord {
            prefix: plan.prefix,
            rir: reg.rir_reg,
            registration: plan.registration,
            targets: plan.targets.clone(),
            vantage_ids: vplan.ids(),
            flags,
        });
    }
    Ok(Planned {
        regs,
        records,
        plans,
        vantages: vset.members(),
    })
}

pub fn cmd_plan(args: &PlanArgs, map: &RegionMap) -> CliResult<()> {
    validate_plan_inputs(&args.inputs)?;
    let planned = build_plans(&args.inputs, map)?;
    write_jsonl_file(&args.out, &planned.records)?;
    stdout_line(&format!("{} prefixes planned", planned.records.len()));
    Ok(())
}

/// Validated settings for one audit run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub backend: BackendKind,
    pub propagation_factor: f64,
    pub threads: usize,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_args(a: &AuditArgs) -> CliResult<Self> {
        validate_plan_inputs(&a.inputs)?;
        if !(a.propagation_factor > 0.0 && a.propagation_factor <= 1.0) {
            return Err(Error::Config(format!(
                "propagation factor {} outside (0, 1]",
                a.propagation_factor
            ))
            .into());
        }
        if a.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()).into());
        }
        for path in [&a.anycast, &a.nir_markers, &a.country_points]
            .into_iter()
            .flatten()
            .chain([&a.rib])
        {
            require_readable(path)?;
        }
        match a.backend {
            BackendKind::Replay => require_readable(
                a.results
                    .as_ref()
                    .ok_or_else(|| CliError::Usage("--backend replay needs --results".into()))?,
            )?,
            BackendKind::Simulate => require_readable(
                a.world
                    .as_ref()
                    .ok_or_else(|| CliError::Usage("--backend simulate needs --world".into()))?,
            )?,
            BackendKind::Live => {
                if std::env::var_os(API_KEY_ENV).is_none() {
                    return Err(Error::Config(format!("--backend live needs {API_KEY_ENV}")).into());
                }
            }
        }
        Ok(RunConfig {
            backend: a.backend,
            propagation_factor: a.propagation_factor,
            threads: a.threads,
            seed: a.inputs.seed,
        })
    }
}

fn make_backend(a: &AuditArgs, cfg: &RunConfig) -> CliResult<Box<dyn MeasurementBackend>> {
    Ok(match cfg.backend {
        BackendKind::Replay => {
            Box::new(ReplayBackend::load(a.results.as_ref().expect("validated"))?)
        }
        BackendKind::Simulate => {
            let mut world = SyntheticWorld::new(a.noise_ms, a.sim_propagation_factor)?;
            world.load_file(a.world.as_ref().expect("validated"))?;
            Box::new(SimulatorBackend::new(world, cfg.seed))
        }
        BackendKind::Live => {
            let date = a
                .dataset_date
                .unwrap_or_else(|| chrono::Utc::now().date_naive());
            let tag = a
                .tag
                .clone()
                .unwrap_or_else(|| measurement_tag("geoaudit", date));
            Box::new(LiveBackend::from_env(&a.api_url, tag).map_err(Error::from)?)
        }
    })
}

fn load_prefix_trie(path: &Option<PathBuf>) -> CliResult<DualStackTrie<()>> {
    Ok(match path {
        Some(p) => report::read_prefix_list(p)?
            .into_iter()
            .map(|p| (p, ()))
            .collect(),
        None => DualStackTrie::new(),
    })
}

pub fn cmd_audit(a: &AuditArgs, map: &RegionMap) -> CliResult<crate::classify::PipelineCounts> {
    let cfg = RunConfig::from_args(a)?;
    let geo = match &a.country_points {
        Some(p) => GeoInferenceConfig::with_geometry(GeoInferenceConfig::load_points(p)?),
        None => GeoInferenceConfig::bundled(),
    }
    .with_factor(cfg.propagation_factor)?;
    geo.validate(map).or_else(|e| {
        if a.country_points.is_some() {
            log::warn!("{e}");
            Ok(())
        } else {
            Err(e)
        }
    })?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| -> CliResult<crate::classify::PipelineCounts> {
        let planned = build_plans(&a.inputs, map)?;
        let (rib, _) = load_rib(open_maybe_gzip(&a.rib)?)?;
        let anycast = load_prefix_trie(&a.anycast)?;
        let nir: Vec<String> = match &a.nir_markers {
            Some(p) => read_lines(p)?.into_iter().map(|(_, l)| l).collect(),
            None => Vec::new(),
        };
        let backend = make_backend(a, &cfg)?;
        let jobs: Vec<TargetJob> = planned
            .records
            .iter()
            .flat_map(|r| {
                let vantages: Vec<VantagePoint> = r
                    .vantage_ids
                    .iter()
                    .map(|id| planned.vantages[id].clone())
                    .collect();
                r.targets.iter().map(move |t| TargetJob {
                    target: *t,
                    vantages: vantages.clone(),
                })
            })
            .collect();
        let campaign = run_campaign(&jobs, backend.as_ref(), cfg.threads)?;
        if !campaign.failures.is_empty() {
            log::warn!(
                "{} targets failed and count as unresponsive",
                campaign.failures.len()
            );
        }
        if let Some(path) = &a.results_out {
            write_jsonl_file(path, &campaign.results)?;
        }
        let results = by_target(&campaign.results);
        let plan_flags: BTreeMap<Prefix, BTreeSet<String>> = planned
            .records
            .iter()
            .map(|r| (r.prefix, r.flags.clone()))
            .collect();
        let inputs = AuditInputs {
            regs: &planned.regs,
            rib: &rib,
            anycast: &anycast,
            nir_markers: &nir,
            plans: &planned.plans,
            results: &results,
            vantages: &planned.vantages,
            region_map: map,
            geo: &geo,
            plan_flags: &plan_flags,
        };
        let config = AuditConfig {
            precedence: if a.registry_first {
                Precedence::RegistryFirst
            } else {
                Precedence::OrgFirst
            },
            exclude_no_org_country: a.exclude_no_org_country,
        };
        let (records, counts) = audit_pipeline(&inputs, &config)?;
        write_jsonl_file(&a.out, &records)?;
        stdout_line(&report::pipeline_table(&counts).to_text());
        Ok(counts)
    })
}

pub fn cmd_report(a: &ReportArgs, map: &RegionMap) -> CliResult<()> {
    let records = read_jsonl(&a.audit)?;
    let regs = a.registrations.as_deref().map(load_regs).transpose()?;
    let mut geodb = BTreeMap::new();
    for (name, path) in &a.geodb {
        let entries = report::load_geodb(open_maybe_gzip(path)?, name)?;
        geodb.insert(name.clone(), report::geodb_trie(&entries));
    }
    let leased = a
        .leased
        .as_deref()
        .map(report::read_prefix_list)
        .transpose()?;
    let inputs = ReportInputs {
        records: &records,
        regs: regs.as_deref(),
        geodb,
        leased,
        criterion: if a.same_region {
            DetectionCriterion::SameRegion
        } else {
            DetectionCriterion::OutOfRegion
        },
    };
    let (written, notices) = report::write_reports(&a.out_dir, &inputs, map)?;
    for n in notices {
        eprintln!("note: {n}");
    }
    stdout_line(&format!(
        "{} report files written to {}",
        written.len(),
        a.out_dir.display()
    ));
    Ok(())
}

pub fn cmd_oro(a: &OroArgs, map: &RegionMap) -> CliResult<()> {
    let regs = load_regs(&a.registrations)?;
    let table = report::oro_table(&report::oro_stats(&regs, map));
    std::fs::write(&a.out, table.to_csv()?).map_err(|e| Error::io(&a.out, e))?;
    stdout_line(&table.to_text());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(items: &[&str]) -> Vec<OsString> {
        items.iter().map(OsString::from).collect()
    }

    #[test]
    fn config_fills_unset_options_only() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("geoaudit.toml");
        std::fs::write(
            &cfg,
            "[oro]\nout = \"from-config.csv\"\nregistrations = \"r.jsonl\"\n",
        )
        .unwrap();
        let cli = parse_with_config(argv(&[
            "geoaudit",
            "--config",
            cfg.to_str().unwrap(),
            "oro",
            "--out",
            "flag.csv",
        ]))
        .unwrap();
        let Command::Oro(a) = cli.command else {
            panic!()
        };
        assert_eq!(a.out, PathBuf::from("flag.csv"));
        assert_eq!(a.registrations, PathBuf::from("r.jsonl"));
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "[oro]\nbogus = 1\n").unwrap();
        assert!(parse_with_config(argv(&[
            "geoaudit",
            "--config",
            cfg.to_str().unwrap(),
            "oro"
        ]))
        .is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(argv(&["geoaudit", "nonsense"])), 1);
        assert_eq!(
            run(argv(&[
                "geoaudit",
                "oro",
                "--registrations",
                "/nonexistent/regs.jsonl"
            ])),
            2
        );
        let err = CliError::Lib(Error::Measure(MeasureError::BackendUnavailable {
            attempts: 4,
            reason: "x".into(),
        }));
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn rir_path_parser() {
        assert_eq!(
            parse_rir_path("ripe=a.db").unwrap(),
            (RirId::Ripe, PathBuf::from("a.db"))
        );
        assert!(parse_rir_path("nowhere").is_err());
    }
}
