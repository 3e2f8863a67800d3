use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Cli, CliError, Command, Outcome};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one run: what went in, with which settings, and when.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<PathBuf>,
    /// SHA-256 of the canonical JSON form of the subcommand's arguments.
    pub config_digest: String,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn digest_file(path: &Path) -> Result<InputDigest, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    Ok(InputDigest { path: path.to_path_buf(), sha256: sha256_hex(&bytes) })
}

impl RunManifest {
    pub fn build(
        cli: &Cli,
        outcome: &Outcome,
        started_at: DateTime<Utc>,
        finished_at: DateTime<Utc>,
    ) -> Result<Self, CliError> {
        let config = serde_json::to_vec(&cli.command).map_err(|e| CliError::internal(e.to_string()))?;
        Ok(Self {
            subcommand: cli.command.name().to_string(),
            inputs: outcome.inputs.iter().map(|p| digest_file(p)).collect::<Result<_, _>>()?,
            outputs: outcome.outputs.clone(),
            config_digest: sha256_hex(&config),
            seed: outcome.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at,
            finished_at,
        })
    }

    /// Equal manifests, timestamps aside, promise equal outputs.
    pub fn same_run(&self, other: &RunManifest) -> bool {
        self.subcommand == other.subcommand
            && self.inputs == other.inputs
            && self.config_digest == other.config_digest
            && self.seed == other.seed
            && self.tool_version == other.tool_version
    }
}

/// `<out>.manifest.json` next to a file output, `manifest.json` inside an
/// output directory.
pub fn default_path(cmd: &Command) -> Option<PathBuf> {
    use super::AnalyzeCmd as A;
    let out = match cmd {
        Command::Simulate(a) => return Some(a.out.join("manifest.json")),
        Command::Scrape(a) => a.out.as_ref(),
        Command::Answers(a) => a.out.as_ref(),
        Command::Fingerprint(a) => a.out.as_ref(),
        Command::Dealias(a) => a.out.as_ref(),
        Command::Plan(a) => a.out.as_ref(),
        Command::Report(a) => a.out.as_ref(),
        Command::Analyze(a) => match a {
            A::Funnel(x) => x.out.as_ref(),
            A::Iid(x) => x.out.as_ref(),
            A::Lifetime(x) => x.out.as_ref(),
            A::Anycast(x) => x.out.as_ref(),
            A::Consistency(x) => x.out.as_ref(),
            A::Owners(x) => x.out.as_ref(),
        },
    }?;
    let mut name = out.file_name()?.to_os_string();
    name.push(".manifest.json");
    Some(out.with_file_name(name))
}
