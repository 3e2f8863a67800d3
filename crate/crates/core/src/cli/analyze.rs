use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::*;
use crate::fingerprint::{cluster_consistency, AliasCluster, ClusterRecord};
use crate::independence::{
    account_concentration, anycast_candidates, as_type_tally, availability, classify_iid_with, funnel, group_rows,
    lifetime, lifetime_cdf_at, possible_same_owner, read_account_map, read_as_types, read_score_rows, IidClass,
    IidRules, PrefixTable,
};

const DAY: i64 = 86_400;

pub(super) fn run(cmd: &AnalyzeCmd) -> Result<Outcome, CliError> {
    match cmd {
        AnalyzeCmd::Funnel(a) => run_funnel(a),
        AnalyzeCmd::Iid(a) => iid(a),
        AnalyzeCmd::Lifetime(a) => lifetimes(a),
        AnalyzeCmd::Anycast(a) => anycast(a),
        AnalyzeCmd::Consistency(a) => consistency(a),
        AnalyzeCmd::Owners(a) => owners(a),
    }
}

fn load_accounts(path: &Path) -> Result<HashMap<IpAddr, String>, CliError> {
    read_account_map(open_input(path)?).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn load_prefixes(path: &Path) -> Result<PrefixTable, CliError> {
    PrefixTable::read(open_input(path)?).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn load_clusters(path: &Path) -> Result<Vec<AliasCluster>, CliError> {
    Ok(read_jsonl::<ClusterRecord>(path)?.into_iter().map(AliasCluster::from).collect())
}

fn run_funnel(a: &FunnelArgs) -> Result<Outcome, CliError> {
    let mut inputs = vec![a.active.clone()];
    let active = read_addresses(&a.active)?;
    let clusters = match &a.clusters {
        Some(p) => {
            inputs.push(p.clone());
            load_clusters(p)?
        }
        None => Vec::new(),
    };
    let accounts = match &a.accounts {
        Some(p) => {
            inputs.push(p.clone());
            load_accounts(p)?
        }
        None => HashMap::new(),
    };
    let table = match &a.prefixes {
        Some(p) => {
            inputs.push(p.clone());
            load_prefixes(p)?
        }
        None => PrefixTable::new(),
    };
    let report = funnel(&active, &clusters, &accounts, |ip| table.lookup(ip))
        .map_err(|e| CliError::input(e.to_string()))?;
    let mut w = create_output(a.out.as_deref())?;
    match a.format {
        Format::Json => write_json(&mut *w, &report)?,
        Format::Jsonl => write_jsonl(&mut *w, std::slice::from_ref(&report))?,
        Format::Csv => write_csv(&mut *w, std::slice::from_ref(&report))?,
    }
    Ok(Outcome { inputs, outputs: a.out.iter().cloned().collect(), seed: None })
}

#[derive(Serialize)]
struct IidRow {
    class: String,
    count: usize,
    fraction: f64,
}

#[derive(Serialize)]
struct IidAddress {
    address: IpAddr,
    class: String,
}

fn iid(a: &IidArgs) -> Result<Outcome, CliError> {
    let rules = IidRules { privacy_min_set_bits: a.privacy_min_bits };
    let classified: Vec<(IpAddr, IidClass)> = read_addresses(&a.addresses)?
        .into_iter()
        .filter_map(|ip| match ip {
            IpAddr::V6(v6) => Some((ip, classify_iid_with(&v6, &rules))),
            IpAddr::V4(_) => None,
        })
        .collect();
    let mut w = create_output(a.out.as_deref())?;
    if a.per_address {
        let rows: Vec<IidAddress> =
            classified.iter().map(|(ip, c)| IidAddress { address: *ip, class: c.to_string() }).collect();
        match a.format {
            Format::Csv => write_csv(&mut *w, &rows)?,
            Format::Jsonl => write_jsonl(&mut *w, &rows)?,
            Format::Json => write_json(&mut *w, &rows)?,
        }
    } else {
        let total = classified.len();
        let rows: Vec<IidRow> = IidClass::ALL
            .iter()
            .map(|c| {
                let count = classified.iter().filter(|(_, k)| k == c).count();
                IidRow {
                    class: c.to_string(),
                    count,
                    fraction: if total == 0 { 0.0 } else { count as f64 / total as f64 },
                }
            })
            .collect();
        match a.format {
            Format::Csv => write_csv(&mut *w, &rows)?,
            Format::Jsonl => write_jsonl(&mut *w, &rows)?,
            Format::Json => write_json(&mut *w, &rows)?,
        }
    }
    Ok(Outcome { inputs: vec![a.addresses.clone()], outputs: a.out.iter().cloned().collect(), seed: None })
}

#[derive(Serialize, Deserialize)]
pub(super) struct LifetimeRow {
    pub server_id: u64,
    pub samples: usize,
    pub lifetime_days: f64,
    pub availability: f64,
}

#[derive(Serialize)]
struct LifetimeSummary {
    servers: usize,
    threshold: f64,
    fraction_under_10_days: f64,
    median_lifetime_days: f64,
    mean_availability: f64,
}

fn lifetimes(a: &LifetimeArgs) -> Result<Outcome, CliError> {
    let rows = read_score_rows(open_input(&a.scores)?).map_err(|e| CliError::input(e.to_string()))?;
    let series = group_rows(rows).map_err(|e| CliError::input(e.to_string()))?;
    let table: Vec<LifetimeRow> = series
        .iter()
        .map(|s| LifetimeRow {
            server_id: s.server_id,
            samples: s.samples().len(),
            lifetime_days: lifetime(s) as f64 / DAY as f64,
            availability: availability(s, a.threshold),
        })
        .collect();
    write_csv(&mut *create_output(a.out.as_deref())?, &table)?;
    let mut outputs: Vec<PathBuf> = a.out.iter().cloned().collect();
    if let Some(p) = &a.summary {
        let mut days: Vec<f64> = table.iter().map(|r| r.lifetime_days).collect();
        days.sort_by(f64::total_cmp);
        let median = match days.len() {
            0 => 0.0,
            n if n % 2 == 1 => days[n / 2],
            n => (days[n / 2 - 1] + days[n / 2]) / 2.0,
        };
        let summary = LifetimeSummary {
            servers: table.len(),
            threshold: a.threshold,
            fraction_under_10_days: lifetime_cdf_at(&series, 10 * DAY),
            median_lifetime_days: median,
            mean_availability: if table.is_empty() {
                0.0
            } else {
                table.iter().map(|r| r.availability).sum::<f64>() / table.len() as f64
            },
        };
        write_json(&mut *create_output(Some(p))?, &summary)?;
        outputs.push(p.clone());
    }
    Ok(Outcome { inputs: vec![a.scores.clone()], outputs, seed: None })
}

#[derive(Deserialize)]
struct ZonedServer {
    address: IpAddr,
    #[serde(default)]
    zones: BTreeSet<String>,
}

#[derive(Serialize)]
struct AnycastRow {
    address: IpAddr,
    continents: Vec<String>,
}

fn anycast(a: &AnycastArgs) -> Result<Outcome, CliError> {
    let servers: Vec<ZonedServer> = read_jsonl(&a.servers)?;
    let candidates: BTreeSet<IpAddr> =
        anycast_candidates(servers.iter().map(|s| (s.address, s.zones.iter().map(String::as_str)))).into_iter().collect();
    let rows: Vec<AnycastRow> = servers
        .iter()
        .filter(|s| candidates.contains(&s.address))
        .map(|s| AnycastRow {
            address: s.address,
            continents: s.zones.iter().filter(|z| crate::independence::is_continent_zone(z)).cloned().collect(),
        })
        .collect();
    write_jsonl(&mut *create_output(a.out.as_deref())?, &rows)?;
    Ok(Outcome { inputs: vec![a.servers.clone()], outputs: a.out.iter().cloned().collect(), seed: None })
}

fn consistency(a: &ConsistencyArgs) -> Result<Outcome, CliError> {
    let clusters = load_clusters(&a.clusters)?;
    let accounts = load_accounts(&a.accounts)?;
    let table = load_prefixes(&a.prefixes)?;
    let tally = cluster_consistency(&clusters, &accounts, |ip| table.lookup(ip));
    write_json(&mut *create_output(a.out.as_deref())?, &tally)?;
    Ok(Outcome {
        inputs: vec![a.clusters.clone(), a.accounts.clone(), a.prefixes.clone()],
        outputs: a.out.iter().cloned().collect(),
        seed: None,
    })
}

#[derive(Serialize)]
struct OwnersReport {
    concentration: crate::independence::AccountConcentration,
    possible_same_owner: Vec<(String, String)>,
    as_types: Option<BTreeMap<String, usize>>,
}

fn owners(a: &OwnersArgs) -> Result<Outcome, CliError> {
    let mut inputs = vec![a.accounts.clone()];
    let accounts = load_accounts(&a.accounts)?;
    let servers: Vec<IpAddr> = match &a.active {
        Some(p) => {
            inputs.push(p.clone());
            read_addresses(p)?
        }
        None => {
            let mut v: Vec<IpAddr> = accounts.keys().copied().collect();
            v.sort();
            v
        }
    };
    let concentration = account_concentration(servers.iter().map(|ip| accounts.get(ip).map(String::as_str)));
    let possible = possible_same_owner(accounts.values().map(String::as_str));
    let as_types = match (&a.prefixes, &a.as_types) {
        (Some(p), Some(t)) => {
            inputs.push(p.clone());
            inputs.push(t.clone());
            let table = load_prefixes(p)?;
            let types = read_as_types(open_input(t)?).map_err(|e| CliError::input(format!("{}: {e}", t.display())))?;
            Some(as_type_tally(&servers, |ip| table.lookup(ip), &types))
        }
        (None, None) => None,
        _ => return Err(CliError::new(ErrorKind::Usage, "--prefixes and --as-types go together")),
    };
    let report = OwnersReport { concentration, possible_same_owner: possible, as_types };
    write_json(&mut *create_output(a.out.as_deref())?, &report)?;
    Ok(Outcome { inputs, outputs: a.out.iter().cloned().collect(), seed: None })
}
