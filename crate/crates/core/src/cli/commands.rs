use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;

use super::*;
use crate::apportion::{
    global_query_rate, read_zones_csv, robustness_sweep, Fraction, ZoneServer, ZoneState,
};
use crate::client::{self, Clock, PoolClient, RatePolicy, Store, SystemClock};
use crate::fingerprint::{alias_tally, build_clusters, campaign_summary, probe_all, Fingerprint, MatchKey, ProbePlan};
use crate::sim::{self, SimConfig};

pub(super) fn dispatch(cmd: &Command) -> Result<Outcome, CliError> {
    match cmd {
        Command::Scrape(a) => scrape(a),
        Command::Answers(a) => answers(a),
        Command::Fingerprint(a) => fingerprint(a),
        Command::Dealias(a) => dealias(a),
        Command::Analyze(a) => super::analyze::run(a),
        Command::Plan(a) => plan(a),
        Command::Simulate(a) => simulate(a),
        Command::Report(a) => super::report::run(a),
    }
}

fn secs(v: f64, what: &str) -> Result<Duration, CliError> {
    Duration::try_from_secs_f64(v)
        .ok()
        .filter(|d| !d.is_zero())
        .ok_or_else(|| CliError::input(format!("{what} must be a positive number of seconds")))
}

fn pool_client(net: &NetArgs) -> Result<PoolClient, CliError> {
    let policy = RatePolicy { mean_inter_request: secs(net.mean_interval, "--mean-interval")?, ..RatePolicy::default() };
    let clock: Arc<dyn Clock> = Arc::new(SystemClock::default());
    Ok(PoolClient::new(&net.base_url, policy, clock)?)
}

#[derive(Serialize)]
struct ScrapeSummary {
    new_records: usize,
    known_servers: usize,
    high_water: u64,
    next_id: u64,
    next_poll_at: chrono::DateTime<chrono::Utc>,
    zone_counts: Vec<client::ZoneCounts>,
}

fn scrape(a: &ScrapeArgs) -> Result<Outcome, CliError> {
    let client = pool_client(&a.net)?;
    let mut store = Store::open(&a.net.state_dir)?;
    let rt = runtime()?;
    let out = rt.block_on(client::enumerate(&client, &mut store, a.start_id, a.max_gap))?;
    rt.block_on(client::poll_zone_counts(&client, &mut store, &a.zones))?;
    let state = store.state();
    let summary = ScrapeSummary {
        new_records: out.records.len(),
        known_servers: state.servers.len(),
        high_water: out.high_water,
        next_id: out.next_id,
        next_poll_at: out.next_poll_at,
        zone_counts: a.zones.iter().filter_map(|z| state.zone_counts.get(z).cloned()).collect(),
    };
    let mut outputs = Vec::new();
    if let Some(p) = &a.export {
        let records: Vec<&client::ServerRecord> = state.servers.values().collect();
        write_jsonl(&mut *create_output(Some(p))?, &records)?;
        outputs.push(p.clone());
    }
    write_json(&mut *create_output(a.out.as_deref())?, &summary)?;
    outputs.extend(a.out.clone());
    Ok(Outcome { outputs, ..Outcome::default() })
}

fn answers(a: &AnswersArgs) -> Result<Outcome, CliError> {
    let client = pool_client(&a.net)?;
    let mut store = Store::open(&a.net.state_dir)?;
    let addrs: Vec<IpAddr> = if a.address.is_empty() {
        store.state().servers.values().filter(|s| !s.deleted).map(|s| s.address).collect()
    } else {
        a.address.clone()
    };
    let deltas = runtime()?.block_on(client::poll_answers(&client, &mut store, &addrs))?;
    write_jsonl(&mut *create_output(a.out.as_deref())?, &deltas)?;
    Ok(Outcome { outputs: a.out.iter().cloned().collect(), ..Outcome::default() })
}

fn fingerprint(a: &FingerprintArgs) -> Result<Outcome, CliError> {
    let targets = read_addresses(&a.targets)?;
    let plan = ProbePlan {
        targets: targets.clone(),
        probes_per_target: a.probes,
        window: secs(a.window, "--window")?,
        spacing: Duration::try_from_secs_f64(a.spacing).map_err(|_| CliError::input("--spacing must be >= 0"))?,
        timeout: secs(a.timeout, "--timeout")?,
        retries: a.retries,
        port: a.port,
        max_pps: a.max_pps,
        concurrency: a.concurrency,
    };
    plan.validate().map_err(|e| CliError::input(e.to_string()))?;
    let fps = runtime()?
        .block_on(probe_all(&plan))
        .map_err(|e| CliError::new(ErrorKind::Network, e.to_string()))?;
    write_jsonl(&mut *create_output(a.out.as_deref())?, &fps)?;
    let summary = campaign_summary(&targets, &fps);
    log::info!("{} of {} targets responded ({:.1}%)", summary.responded, summary.targets, 100.0 * summary.responsiveness);
    Ok(Outcome { inputs: vec![a.targets.clone()], outputs: a.out.iter().cloned().collect(), seed: None })
}

fn dealias(a: &DealiasArgs) -> Result<Outcome, CliError> {
    let fps: Vec<Fingerprint> = read_jsonl(&a.fingerprints)?;
    let mut key = if a.weak_fields { MatchKey::default().with_weak_fields() } else { MatchKey::default() };
    key.poll |= a.use_poll;
    key.window = secs(a.window, "--window")?;
    let clusters = build_clusters(&fps, &key);
    let records: Vec<_> = clusters.iter().enumerate().map(|(i, c)| c.to_record(i)).collect();
    write_jsonl(&mut *create_output(a.out.as_deref())?, &records)?;
    let mut outputs: Vec<PathBuf> = a.out.iter().cloned().collect();
    if let Some(p) = &a.summary {
        write_json(&mut *create_output(Some(p))?, &alias_tally(&clusters))?;
        outputs.push(p.clone());
    }
    Ok(Outcome { inputs: vec![a.fingerprints.clone()], outputs, seed: None })
}

#[derive(Serialize)]
struct RateEstimate {
    v4_servers_per_sec: f64,
    v6_servers_per_sec: f64,
    queries_per_sec: f64,
}

fn plan(a: &PlanArgs) -> Result<Outcome, CliError> {
    let f: Fraction = a.f.parse().map_err(|e| CliError::input(format!("--f: {e}")))?;
    let mut w = create_output(a.out.as_deref())?;
    let mut inputs = Vec::new();
    let mut outputs: Vec<PathBuf> = a.out.iter().cloned().collect();

    if let Some(v4) = a.rate_v4.or(a.rate_v6.map(|_| 0.0)) {
        let v6 = a.rate_v6.unwrap_or(0.0);
        if !(v4 >= 0.0 && v6 >= 0.0 && v4.is_finite() && v6.is_finite()) {
            return Err(CliError::input("answer rates must be non-negative"));
        }
        let est = RateEstimate { v4_servers_per_sec: v4, v6_servers_per_sec: v6, queries_per_sec: global_query_rate(v4, v6) };
        write_json(&mut *w, &est)?;
        return Ok(Outcome { inputs, outputs, seed: None });
    }

    let zones = match (&a.zones, a.n) {
        (Some(path), None) => {
            inputs.push(path.clone());
            read_zones_csv(open_input(path)?).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?
        }
        (None, Some(n)) => {
            let server = ZoneServer { address: "0.0.0.0".parse().unwrap(), netspeed_kbps: n, active: true };
            vec![ZoneState::new("zone", if n > 0 { vec![server] } else { vec![] })]
        }
        _ => return Err(CliError::new(ErrorKind::Usage, "give exactly one of --zones, --n, or --rate-v4/--rate-v6")),
    };
    if zones.is_empty() {
        return Err(CliError::input("no zones in input"));
    }
    let sweep = robustness_sweep(&zones, a.m, &f).map_err(|e| CliError::input(e.to_string()))?;
    match a.format {
        Format::Json => write_json(&mut *w, &sweep)?,
        Format::Jsonl => write_jsonl(&mut *w, &sweep.plans)?,
        Format::Csv => write_csv(&mut *w, &sweep.plans)?,
    }
    if let Some(p) = &a.summary {
        write_json(&mut *create_output(Some(p))?, &sweep.summary)?;
        outputs.push(p.clone());
    }
    Ok(Outcome { inputs, outputs, seed: None })
}

fn simulate(a: &SimulateArgs) -> Result<Outcome, CliError> {
    let mut cfg = SimConfig::from_toml(&read_text(&a.scenario)?)
        .map_err(|e| CliError::input(format!("{}: {e}", a.scenario.display())))?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let report = sim::run(&cfg).map_err(|e| CliError::input(e.to_string()))?;
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::input(format!("{}: {e}", a.out.display())))?;
    let answers = a.out.join("answers.csv");
    let traffic = a.out.join("traffic.csv");
    let summary = a.out.join("summary.json");
    report.write_answers_csv(create_output(Some(&answers))?).map_err(io_err)?;
    report.write_traffic_csv(create_output(Some(&traffic))?).map_err(io_err)?;
    let mut w = create_output(Some(&summary))?;
    writeln!(w, "{}", report.summary_json()).map_err(io_err)?;
    w.flush().map_err(io_err)?;
    Ok(Outcome { inputs: vec![a.scenario.clone()], outputs: vec![answers, traffic, summary], seed: Some(cfg.seed) })
}
