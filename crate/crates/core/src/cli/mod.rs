//! Command-line front end. Every subcommand reads files and writes files;
//! only `scrape`, `answers` and `fingerprint` touch the network.

mod analyze;
mod commands;
mod manifest;
mod report;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

pub use manifest::{InputDigest, RunManifest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Usage,
    Input,
    Network,
    Internal,
}

impl ErrorKind {
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorKind::Usage => 2,
            ErrorKind::Input => 3,
            ErrorKind::Network => 4,
            ErrorKind::Internal => 5,
        }
    }
}

#[derive(Debug, Error, Serialize)]
#[error("{message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into() }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Input, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Internal, message)
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl From<crate::client::ClientError> for CliError {
    fn from(e: crate::client::ClientError) -> Self {
        use crate::client::ClientError as E;
        let kind = match e {
            E::InvalidArgument(_) => ErrorKind::Input,
            E::NotFound(_) => ErrorKind::Input,
            E::Transport { .. } | E::Status { .. } | E::Protocol(_) => ErrorKind::Network,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<crate::client::StoreError> for CliError {
    fn from(e: crate::client::StoreError) -> Self {
        match e {
            crate::client::StoreError::Io(_) => CliError::internal(e.to_string()),
            _ => CliError::input(e.to_string()),
        }
    }
}

impl From<crate::client::ScrapeError> for CliError {
    fn from(e: crate::client::ScrapeError) -> Self {
        match e {
            crate::client::ScrapeError::Client(c) => c.into(),
            crate::client::ScrapeError::Store(s) => s.into(),
        }
    }
}

#[derive(Debug, Parser, Serialize)]
#[command(name = "poolscope", version, about = "Measure, model and stress-test the NTP Pool")]
pub struct Cli {
    /// Where to write the run manifest (default: next to --out, else stderr).
    #[arg(long, global = true)]
    #[serde(skip)]
    pub manifest: Option<PathBuf>,
    /// Raise log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    #[serde(skip)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Enumerate pool servers by ID and record their metadata.
    Scrape(ScrapeArgs),
    /// Poll per-zone DNS answer counters for known servers.
    Answers(AnswersArgs),
    /// Probe NTP servers and record their fingerprints.
    Fingerprint(FingerprintArgs),
    /// Group fingerprints into alias clusters.
    Dealias(DealiasArgs),
    /// Independence analyses over collected data.
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
    /// Monopoly-attack planning, robustness sweeps and global rates.
    Plan(PlanArgs),
    /// Run a pool simulation scenario.
    Simulate(SimulateArgs),
    /// Render plot-ready tables from earlier outputs.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Scrape(_) => "scrape",
            Command::Answers(_) => "answers",
            Command::Fingerprint(_) => "fingerprint",
            Command::Dealias(_) => "dealias",
            Command::Analyze(a) => a.name(),
            Command::Plan(_) => "plan",
            Command::Simulate(_) => "simulate",
            Command::Report(_) => "report",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct NetArgs {
    /// Pool website root; point at a mock server for offline runs.
    #[arg(long, default_value = "https://www.ntppool.org")]
    pub base_url: String,
    /// Directory holding the event log and snapshot.
    #[arg(long)]
    pub state_dir: PathBuf,
    /// Mean seconds between requests.
    #[arg(long, default_value_t = 5.0)]
    pub mean_interval: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ScrapeArgs {
    #[command(flatten)]
    pub net: NetArgs,
    #[arg(long, default_value_t = 1)]
    pub start_id: u64,
    /// Consecutive unallocated IDs that end the walk.
    #[arg(long, default_value_t = crate::client::DEFAULT_MAX_GAP)]
    pub max_gap: u64,
    /// Zones whose server counts to fetch as well.
    #[arg(long, value_delimiter = ',')]
    pub zones: Vec<String>,
    /// Write every known server record here, one per line.
    #[arg(long)]
    pub export: Option<PathBuf>,
    /// Run summary (JSON); stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct AnswersArgs {
    #[command(flatten)]
    pub net: NetArgs,
    /// Addresses to poll; defaults to every server in the state directory.
    #[arg(long, value_delimiter = ',')]
    pub address: Vec<IpAddr>,
    /// Counter deltas, one per line; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct FingerprintArgs {
    /// One address per line.
    #[arg(long)]
    pub targets: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub probes: u32,
    #[arg(long, default_value_t = 60.0)]
    pub window: f64,
    #[arg(long, default_value_t = 10.0)]
    pub spacing: f64,
    #[arg(long, default_value_t = 3.0)]
    pub timeout: f64,
    #[arg(long, default_value_t = 2)]
    pub retries: u32,
    #[arg(long, default_value_t = 123)]
    pub port: u16,
    #[arg(long, default_value_t = 50.0)]
    pub max_pps: f64,
    #[arg(long, default_value_t = 64)]
    pub concurrency: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct DealiasArgs {
    /// Fingerprint records, one per line.
    #[arg(long)]
    pub fingerprints: PathBuf,
    /// Cluster records, one per line; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Alias tally (JSON).
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Seconds within which two fingerprints are compared.
    #[arg(long, default_value_t = 60.0)]
    pub window: f64,
    /// Also require equal poll intervals.
    #[arg(long)]
    pub use_poll: bool,
    /// Also require equal IP-layer hints (TTL, DSCP).
    #[arg(long)]
    pub weak_fields: bool,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyzeCmd {
    /// Dealias, account and ASN reduction counts.
    Funnel(FunnelArgs),
    /// IPv6 interface-identifier categories.
    Iid(IidArgs),
    /// Server lifetimes and availability from score history.
    Lifetime(LifetimeArgs),
    /// Servers registered in several continent zones.
    Anycast(AnycastArgs),
    /// Account and ASN agreement within alias clusters.
    Consistency(ConsistencyArgs),
    /// Account concentration, possible shared owners and AS types.
    Owners(OwnersArgs),
}

impl AnalyzeCmd {
    fn name(&self) -> &'static str {
        match self {
            AnalyzeCmd::Funnel(_) => "analyze funnel",
            AnalyzeCmd::Iid(_) => "analyze iid",
            AnalyzeCmd::Lifetime(_) => "analyze lifetime",
            AnalyzeCmd::Anycast(_) => "analyze anycast",
            AnalyzeCmd::Consistency(_) => "analyze consistency",
            AnalyzeCmd::Owners(_) => "analyze owners",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Jsonl,
    Csv,
}

#[derive(Debug, Args, Serialize)]
pub struct FunnelArgs {
    /// Active server addresses, one per line.
    #[arg(long)]
    pub active: PathBuf,
    #[arg(long)]
    pub clusters: Option<PathBuf>,
    /// `address account_id` lines.
    #[arg(long)]
    pub accounts: Option<PathBuf>,
    /// `prefix/length ASN` lines.
    #[arg(long)]
    pub prefixes: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct IidArgs {
    /// IPv6 addresses, one per line; IPv4 lines are skipped.
    #[arg(long)]
    pub addresses: PathBuf,
    #[arg(long, default_value_t = 28)]
    pub privacy_min_bits: u32,
    /// Also list each address with its class.
    #[arg(long)]
    pub per_address: bool,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct LifetimeArgs {
    /// `server_id,ts,score` rows.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    pub threshold: f64,
    /// Per-server table (CSV); stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Cohort summary (JSON).
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct AnycastArgs {
    /// Server records with `address` and `zones`, one per line.
    #[arg(long)]
    pub servers: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ConsistencyArgs {
    #[arg(long)]
    pub clusters: PathBuf,
    #[arg(long)]
    pub accounts: PathBuf,
    #[arg(long)]
    pub prefixes: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct OwnersArgs {
    #[arg(long)]
    pub accounts: PathBuf,
    /// Active server addresses; servers absent from the account map count
    /// as anonymous.
    #[arg(long)]
    pub active: Option<PathBuf>,
    #[arg(long)]
    pub prefixes: Option<PathBuf>,
    /// `asn type` lines.
    #[arg(long)]
    pub as_types: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PlanArgs {
    /// Zone fixture: zone,address,netspeed_kbps,active.
    #[arg(long)]
    pub zones: Option<PathBuf>,
    /// Single zone aggregate netspeed in kbps, instead of --zones.
    #[arg(long)]
    pub n: Option<u64>,
    /// Target traffic fraction, decimal or a/b.
    #[arg(long, default_value = "0.5")]
    pub f: String,
    /// Attacker netspeed per server, kbps.
    #[arg(long, default_value_t = crate::apportion::MAX_NETSPEED_KBPS)]
    pub m: u64,
    /// Global IPv4 answer rate (servers/s) for the query-rate estimate.
    #[arg(long)]
    pub rate_v4: Option<f64>,
    /// Global IPv6 answer rate (servers/s).
    #[arg(long)]
    pub rate_v6: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Distribution summary (JSON) when the main output is CSV or JSONL.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for answers.csv, traffic.csv and summary.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Auto,
    Plan,
    Clusters,
    Fingerprints,
    Lifetime,
    SimServers,
    Residual,
    Funnel,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportKind::Auto)]
    pub kind: ReportKind,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// What a finished subcommand read and wrote, for the manifest.
#[derive(Debug, Default)]
pub struct Outcome {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
}

pub(crate) fn open_input(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub(crate) fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// One address per line; blank lines and `#` comments skipped.
pub(crate) fn read_addresses(path: &Path) -> Result<Vec<IpAddr>, CliError> {
    let mut out = Vec::new();
    for (i, line) in open_input(path)?.lines().enumerate() {
        let line = line.map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let addr = body
            .parse()
            .map_err(|_| CliError::input(format!("{}:{}: bad address `{body}`", path.display(), i + 1)))?;
        out.push(addr);
    }
    Ok(out)
}

pub(crate) fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut out = Vec::new();
    for (i, line) in open_input(path)?.lines().enumerate() {
        let line = line.map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| CliError::input(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

pub(crate) fn create_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
            }
            let f = File::create(p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

pub(crate) fn io_err(e: impl std::fmt::Display) -> CliError {
    CliError::internal(format!("write failed: {e}"))
}

pub(crate) fn write_json(w: &mut dyn Write, value: &impl Serialize) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *w, value).map_err(io_err)?;
    writeln!(w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub(crate) fn write_jsonl<T: Serialize>(w: &mut dyn Write, items: &[T]) -> Result<(), CliError> {
    for item in items {
        serde_json::to_writer(&mut *w, item).map_err(io_err)?;
        writeln!(w).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub(crate) fn write_csv<T: Serialize>(w: &mut dyn Write, rows: &[T]) -> Result<(), CliError> {
    let mut out = csv::Writer::from_writer(&mut *w);
    for r in rows {
        out.serialize(r).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

pub(crate) fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::internal(format!("async runtime: {e}")))
}

/// Runs one parsed command and emits its manifest.
pub fn execute(cli: &Cli) -> Result<RunManifest, CliError> {
    let started = chrono::Utc::now();
    let outcome = commands::dispatch(&cli.command)?;
    let manifest = RunManifest::build(cli, &outcome, started, chrono::Utc::now())?;
    let target = cli.manifest.clone().or_else(|| manifest::default_path(&cli.command));
    match target {
        Some(p) => {
            let mut w = create_output(Some(&p))?;
            write_json(&mut *w, &manifest)?;
        }
        None => eprintln!("{}", serde_json::to_string(&manifest).map_err(io_err)?),
    }
    Ok(manifest)
}

/// Parses arguments, runs, and maps failures to exit codes with a JSON
/// error object on stderr.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return ExitCode::from(if e.kind() == K::DisplayHelpOnMissingArgumentOrSubcommand { 2 } else { 0 });
            }
            let err = CliError::new(ErrorKind::Usage, e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.kind.exit_code());
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(&cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.kind.exit_code())
        }
    }
}
