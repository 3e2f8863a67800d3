use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::*;
use crate::apportion::{AttackPlan, Sweep};
use crate::fingerprint::{ClusterRecord, Fingerprint};
use crate::independence::FunnelReport;
use crate::sim::SimSummary;

use super::analyze::LifetimeRow;

pub(super) fn run(a: &ReportArgs) -> Result<Outcome, CliError> {
    let text = read_text(&a.input)?;
    let kind = match a.kind {
        ReportKind::Auto => detect(&text)
            .ok_or_else(|| CliError::input(format!("{}: cannot tell what kind of file this is; pass --kind", a.input.display())))?,
        k => k,
    };
    let mut w = create_output(a.out.as_deref())?;
    match kind {
        ReportKind::Plan => write_csv(&mut *w, &plan_cdf(&text)?)?,
        ReportKind::Clusters => write_csv(&mut *w, &cluster_sizes(&text)?)?,
        ReportKind::Fingerprints => write_csv(&mut *w, &strata(&text)?)?,
        ReportKind::Lifetime => write_csv(&mut *w, &lifetime_cdf(&text)?)?,
        ReportKind::SimServers => write_csv(&mut *w, &sim_summary(&text)?.servers)?,
        ReportKind::Residual => write_csv(&mut *w, &residual(&text)?)?,
        ReportKind::Funnel => write_csv(&mut *w, &funnel_stages(&text)?)?,
        ReportKind::Auto => unreachable!(),
    }
    Ok(Outcome { inputs: vec![a.input.clone()], outputs: a.out.iter().cloned().collect(), seed: None })
}

fn detect(text: &str) -> Option<ReportKind> {
    let first = text.lines().find(|l| !l.trim().is_empty())?.trim();
    if first.starts_with("server_id,") {
        return Some(ReportKind::Lifetime);
    }
    if first.starts_with("zone,n,m,f,S") {
        return Some(ReportKind::Plan);
    }
    let doc = serde_json::from_str::<Value>(text).ok();
    let v = doc.or_else(|| serde_json::from_str::<Value>(first).ok())?;
    let has = |k: &str| v.get(k).is_some();
    if has("plans") || (has("servers") && has("achieved")) {
        Some(ReportKind::Plan)
    } else if has("total_active") {
        Some(ReportKind::Funnel)
    } else if has("residual_daily") {
        Some(ReportKind::SimServers)
    } else if has("cluster_id") {
        Some(ReportKind::Clusters)
    } else if has("refid_hex") {
        Some(ReportKind::Fingerprints)
    } else {
        None
    }
}

fn parse_lines<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, CliError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::input(format!("line {}: {e}", i + 1))))
        .collect()
}

fn parse_doc<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::input(e.to_string()))
}

#[derive(Debug, PartialEq, Serialize)]
pub(crate) struct CdfRow {
    pub value: f64,
    pub count: usize,
    pub cdf: f64,
}

/// Empirical CDF with one row per distinct value.
pub(crate) fn cdf(values: impl IntoIterator<Item = f64>) -> Vec<CdfRow> {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<CdfRow> = Vec::new();
    for (i, x) in v.iter().enumerate() {
        match out.last_mut() {
            Some(r) if r.value == *x => {
                r.count += 1;
                r.cdf = (i + 1) as f64 / n;
            }
            _ => out.push(CdfRow { value: *x, count: 1, cdf: (i + 1) as f64 / n }),
        }
    }
    out
}

fn plan_cdf(text: &str) -> Result<Vec<CdfRow>, CliError> {
    let plans: Vec<AttackPlan> = if text.starts_with("zone,") {
        csv::Reader::from_reader(text.as_bytes())
            .deserialize()
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::input(e.to_string()))?
    } else if let Ok(s) = serde_json::from_str::<Sweep>(text) {
        s.plans
    } else {
        parse_lines(text)?
    };
    Ok(cdf(plans.iter().map(|p| p.servers as f64)))
}

#[derive(Serialize)]
struct SizeRow {
    size: usize,
    clusters: usize,
    addresses: usize,
}

fn cluster_sizes(text: &str) -> Result<Vec<SizeRow>, CliError> {
    let recs: Vec<ClusterRecord> = parse_lines(text)?;
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    for r in &recs {
        *hist.entry(r.members.len()).or_default() += 1;
    }
    Ok(hist.into_iter().map(|(size, clusters)| SizeRow { size, clusters, addresses: size * clusters }).collect())
}

#[derive(Serialize)]
struct StratumRow {
    stratum: u8,
    fingerprints: usize,
    addresses: usize,
}

fn strata(text: &str) -> Result<Vec<StratumRow>, CliError> {
    let fps: Vec<Fingerprint> = parse_lines(text)?;
    let mut by: BTreeMap<u8, (usize, BTreeSet<IpAddr>)> = BTreeMap::new();
    for f in &fps {
        let e = by.entry(f.stratum).or_default();
        e.0 += 1;
        e.1.insert(f.address);
    }
    Ok(by.into_iter().map(|(stratum, (n, a))| StratumRow { stratum, fingerprints: n, addresses: a.len() }).collect())
}

fn lifetime_cdf(text: &str) -> Result<Vec<CdfRow>, CliError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let rows = rdr.deserialize::<LifetimeRow>().collect::<Result<Vec<_>, _>>().map_err(|e| CliError::input(e.to_string()))?;
    Ok(cdf(rows.iter().map(|r| r.lifetime_days)))
}

fn sim_summary(text: &str) -> Result<SimSummary, CliError> {
    parse_doc(text)
}

#[derive(Serialize)]
struct ResidualRow {
    day: usize,
    attacker_queries: u64,
}

fn residual(text: &str) -> Result<Vec<ResidualRow>, CliError> {
    Ok(sim_summary(text)?
        .residual_daily
        .into_iter()
        .enumerate()
        .map(|(day, attacker_queries)| ResidualRow { day, attacker_queries })
        .collect())
}

#[derive(Serialize)]
struct StageRow {
    stage: &'static str,
    servers: usize,
    fraction: f64,
}

fn funnel_stages(text: &str) -> Result<Vec<StageRow>, CliError> {
    let r: FunnelReport = parse_doc(text)?;
    let total = r.total_active.max(1) as f64;
    Ok([
        ("active", r.total_active),
        ("dealias", r.after_dealias),
        ("account", r.after_account),
        ("asn", r.after_asn),
    ]
    .into_iter()
    .map(|(stage, servers)| StageRow { stage, servers, fraction: servers as f64 / total })
    .collect())
}
