//! One line per acceptance criterion. Runs without the test harness so
//! the lines always print; exits non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::net::IpAddr;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use num_rational::BigRational;
use num_traits::ToPrimitive;
use poolscope::apportion::{
    attack_servers_required, captured_fraction, expected_share, expected_share_exact, global_query_rate, Fraction,
    ZoneState,
};
use poolscope::client::{
    enumerate, Clock, MockPool, MockPoolData, MockServer, PoolClient, RatePolicy, Resolution, Store, VirtualClock,
};
use poolscope::fingerprint::{alias_tally, build_clusters, covering_prefix, MatchKey, ProbePlan};
use poolscope::independence::{funnel, read_account_map, PrefixTable};
use poolscope::sim::{run, select_answer, step_score, PoolState, ProbeOutcome, SimConfig, SimServer, ZoneWeighting};
use poolscope::wire::{decode_packet, encode_packet, unix_to_ntp, NtpPacket, NtpShort, NtpTimestamp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !($cond as bool) {
            return Err(format!($($msg)+));
        }
    };
}

fn fixture_path(name: &str) -> String {
    format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn scenario(name: &str) -> SimConfig {
    SimConfig::from_toml(&std::fs::read_to_string(fixture_path(name)).unwrap()).unwrap()
}

fn ip(s: &str) -> IpAddr {
    s.parse().unwrap()
}

fn half() -> Fraction {
    Fraction::from_ratio(1, 2).unwrap()
}

fn attack_size_exactness() -> Outcome {
    let t = Instant::now();
    let reps = 1000;
    let mut s = 0;
    for _ in 0..reps {
        s = attack_servers_required(4_101_000, 3_000_000, &half()).map_err(|e| e.to_string())?;
    }
    let per_call = t.elapsed() / reps;
    let achieved = captured_fraction(4_101_000, 3_000_000, s).to_f64().unwrap();
    ensure!(s == 2, "S = {s}");
    ensure!((achieved - 0.594).abs() < 0.0005, "achieved {achieved}");
    ensure!(per_call < Duration::from_millis(1), "{per_call:?} per call");

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let n = rng.random_range(0..50_000_000u64);
        let m = rng.random_range(1..=3_000_000u64);
        let den = rng.random_range(2..1000i64);
        let num = rng.random_range(1..den);
        let f = Fraction::from_ratio(num, den).unwrap();
        let target = BigRational::new(num.into(), den.into());
        let oracle = (1u64..).find(|&k| captured_fraction(n, m, k) >= target).unwrap();
        let got = attack_servers_required(n, m, &f).unwrap();
        ensure!(got == oracle, "n={n} m={m} f={num}/{den}: {got} vs brute force {oracle}");
    }
    Ok(format!("S = 2, achieved {achieved:.4}, {per_call:?}/call, 10k brute-force cases agree"))
}

fn apportionment_exactness() -> Outcome {
    let t = Instant::now();
    let speeds = [25_000, 25_000, 25_000, 25_000, 100_000];
    let zone = ZoneState::from_netspeeds("xx", &speeds);
    let exact: Vec<BigRational> = speeds.iter().map(|&s| expected_share_exact(s, &zone).unwrap()).collect();
    let eighth = BigRational::new(1.into(), 8.into());
    ensure!(exact[..4].iter().all(|s| *s == eighth), "{exact:?}");
    ensure!(exact[4] == BigRational::new(1.into(), 2.into()), "{exact:?}");

    let servers: Vec<SimServer> = speeds
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let mut srv = SimServer::new(IpAddr::from([192, 0, 2, i as u8 + 1]), vec!["xx".into()], s);
            srv.score = 20.0;
            srv
        })
        .collect();
    let state = PoolState::new(servers, ZoneWeighting::Full, BTreeMap::new());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let draws = 100_000;
    let mut first: BTreeMap<IpAddr, u32> = BTreeMap::new();
    for _ in 0..draws {
        *first.entry(select_answer("xx", &state, &mut rng)[0]).or_default() += 1;
    }
    let mut worst = 0.0f64;
    for (i, e) in [0.125, 0.125, 0.125, 0.125, 0.5].iter().enumerate() {
        let got = f64::from(first[&IpAddr::from([192, 0, 2, i as u8 + 1])]) / f64::from(draws);
        worst = worst.max((got - e).abs());
    }
    ensure!(worst <= 0.01, "worst deviation {worst:.4}");
    let took = t.elapsed();
    ensure!(took < Duration::from_secs(10), "{took:?}");
    Ok(format!("exact 1/8 x4 + 1/2; sampled worst deviation {:.2}% over 100k answers in {took:.2?}", 100.0 * worst))
}

fn hu_replication() -> Outcome {
    let after = ZoneState::from_netspeeds("hu", &[1_000_000, 1_000_000, 1_000_000, 1_000_000, 100_000, 1_500, 3_000_000, 3_000_000]);
    let attacker = expected_share(3_000_000, &after).unwrap();
    let incumbent = expected_share(1_000_000, &after).unwrap();
    ensure!((attacker - 0.297).abs() <= 0.001, "attacker {attacker}");
    ensure!((incumbent - 0.099).abs() <= 0.001, "incumbent {incumbent}");

    let report = run(&scenario("hu.toml")).map_err(|e| e.to_string())?;
    let shares = report.zone_shares("hu", 7, report.summary.windows);
    let mut worst = 0.0f64;
    for a in &report.summary.attack_servers {
        worst = worst.max((shares[a].0 - attacker).abs());
    }
    for i in 1..=4 {
        worst = worst.max((shares[&IpAddr::from([192, 0, 2, i])].0 - incumbent).abs());
    }
    ensure!(worst <= 0.015, "simulated share off by {worst:.4}");

    let isolated = report.summary.attacker_share.unwrap() / 2.0;
    let multi = run(&scenario("hu-multizone.toml")).map_err(|e| e.to_string())?;
    let spread = multi.summary.attacker_share.unwrap() / 2.0;
    ensure!(spread < isolated, "multi-zone {spread:.3} not below isolated {isolated:.3}");
    Ok(format!(
        "analytic {:.1}% / {:.1}%; simulated worst deviation {:.2}%; per attacker {:.1}% isolated vs {:.1}% with continent+global zones",
        100.0 * attacker,
        100.0 * incumbent,
        100.0 * worst,
        100.0 * isolated,
        100.0 * spread
    ))
}

fn covering_prefixes() -> Outcome {
    let net = covering_prefix(&[ip("1.2.1.10"), ip("1.2.3.200"), ip("1.2.14.30")]).map_err(|e| e.to_string())?;
    ensure!(net.to_string() == "1.2.0.0/20", "{net}");
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10_000 {
        let n = rng.random_range(1..8);
        let v6 = rng.random_bool(0.5);
        let keep = rng.random_range(0..=if v6 { 128 } else { 32 });
        let base: u128 = rng.random();
        let addrs: Vec<IpAddr> = (0..n)
            .map(|_| {
                let x: u128 = rng.random();
                if v6 {
                    let mask = if keep == 0 { 0 } else { u128::MAX << (128 - keep) };
                    IpAddr::V6(((base & mask) | (x & !mask)).into())
                } else {
                    let mask = if keep == 0 { 0 } else { u32::MAX << (32 - keep) };
                    IpAddr::V4((((base as u32) & mask) | ((x as u32) & !mask)).into())
                }
            })
            .collect();
        let got = covering_prefix(&addrs).unwrap();
        let want = common::common_prefix_len(&addrs);
        ensure!(got.prefix_len() == want, "{addrs:?}: {got} vs /{want}");
    }
    Ok("1.2.0.0/20; 10k random sets match the bitwise oracle".into())
}

fn alias_clustering() -> Outcome {
    let t = Instant::now();
    let plan = ProbePlan::default();
    ensure!(plan.probes_per_target == 2, "probes_per_target {}", plan.probes_per_target);
    let mut worst_recall = 1.0f64;
    let mut worst_precision = 1.0f64;
    let mut runs = 0;
    for seed in 0..20 {
        let pop = common::population(seed, 200, 13, 0.05);
        let clusters = build_clusters(&pop.fingerprints, &MatchKey::default());
        let (p, r) = common::pair_scores(&clusters, &pop.host_of);
        worst_precision = worst_precision.min(p);
        worst_recall = worst_recall.min(r);
        let tally = alias_tally(&clusters);
        let s1: usize = pop.host_of.values().filter(|h| pop.stratum1_hosts.contains(h)).count();
        ensure!(tally.excluded_stratum1_addresses == s1, "stratum-1 addresses leaked into the tally");
        ensure!(clusters.iter().filter(|c| c.contains_stratum1).count() == tally.excluded_stratum1_clusters, "stratum-1 clusters counted");
        runs += 1;
    }
    let took = t.elapsed();
    ensure!(worst_precision == 1.0, "precision {worst_precision}");
    ensure!(worst_recall >= 0.95, "recall {worst_recall}");
    ensure!(took < Duration::from_secs(5), "{took:?}");
    Ok(format!("{runs} populations of 200 hosts: precision 1.0, worst recall {worst_recall:.3}, {took:.2?}"))
}

fn funnel_fixture() -> Outcome {
    let read = |n: &str| std::fs::read_to_string(fixture_path(&format!("funnel/{n}"))).unwrap();
    let active: Vec<IpAddr> = read("active.txt").lines().map(|l| l.parse().unwrap()).collect();
    let clusters: Vec<_> = read("clusters.jsonl")
        .lines()
        .map(|l| serde_json::from_str::<poolscope::fingerprint::ClusterRecord>(l).unwrap().into())
        .collect();
    let accounts = read_account_map(read("accounts.txt").as_bytes()).unwrap();
    let table = PrefixTable::read(read("prefixes.txt").as_bytes()).unwrap();
    let r = funnel(&active, &clusters, &accounts, |a| table.lookup(a)).map_err(|e| e.to_string())?;
    ensure!((r.independent_fraction - 0.197).abs() <= 0.001, "fraction {}", r.independent_fraction);

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..10_000 {
        let n = rng.random_range(1..60u32);
        let active: Vec<IpAddr> = (0..n).map(|i| IpAddr::V4((0x0a00_0000u32 + i).into())).collect();
        let mut clusters = Vec::new();
        let mut i = 0;
        while i < active.len() {
            let size = rng.random_range(1..=4).min(active.len() - i);
            if rng.random_bool(0.6) {
                clusters.push(poolscope::fingerprint::AliasCluster::from_members(active[i..i + size].to_vec(), rng.random_bool(0.05)));
            }
            i += size;
        }
        let mut accounts = std::collections::HashMap::new();
        let mut asns: BTreeMap<IpAddr, u32> = BTreeMap::new();
        for a in &active {
            if rng.random_bool(0.7) {
                accounts.insert(*a, format!("acct{}", rng.random_range(0..8)));
            }
            if rng.random_bool(0.9) {
                asns.insert(*a, rng.random_range(1..6));
            }
        }
        let r = funnel(&active, &clusters, &accounts, |a| asns.get(a).copied()).unwrap();
        ensure!(
            r.total_active >= r.after_dealias && r.after_dealias >= r.after_account && r.after_account >= r.after_asn,
            "case {case}: {r:?}"
        );
    }
    Ok(format!(
        "fixture {} -> {} -> {} -> {} = {:.4}; 10k random inputs monotone",
        r.total_active, r.after_dealias, r.after_account, r.after_asn, r.independent_fraction
    ))
}

fn scoring_dynamics() -> Outcome {
    let mut s = 0.0;
    let mut crossed_at = None;
    for n in 1..=14 {
        s = step_score(s, ProbeOutcome::Accurate);
        if s >= 10.0 && crossed_at.is_none() {
            crossed_at = Some(n);
        }
    }
    ensure!(crossed_at == Some(14), "from 0, first >= 10 at step {crossed_at:?}");

    let mut s = 20.0;
    let mut below_at = None;
    for n in 1..=18 {
        s = step_score(s, ProbeOutcome::Bad);
        if s < 10.0 && below_at.is_none() {
            below_at = Some(n);
        }
    }
    ensure!(s < 10.0 && below_at.is_some(), "from 20, still {s} after 18 bad steps");

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1_000_000 {
        let mut s: f64 = rng.random_range(-100.0..=20.0);
        for _ in 0..rng.random_range(1..40) {
            s = step_score(s, if rng.random_bool(0.5) { ProbeOutcome::Accurate } else { ProbeOutcome::Bad });
            ensure!((-100.0..=20.0).contains(&s), "score {s} out of range");
        }
    }
    Ok(format!(
        "0 -> >= 10 at step 14; from 20, below 10 after 18 bad steps ({s:.2}; first crossing at step {}); 1M sequences in range",
        below_at.unwrap()
    ))
}

fn global_rate() -> Outcome {
    let q = global_query_rate(389_257.0, 34_399.0);
    ensure!(q == 105_914.0, "{q}");
    ensure!(q > 100_000.0, "{q}");
    Ok(format!("(389,257 + 34,399) / 4 = {q}"))
}

fn scraper_protocol() -> Outcome {
    let rt = tokio::runtime::Runtime::new().unwrap();
    rt.block_on(async {
        let origin = Utc.with_ymd_and_hms(2025, 7, 23, 0, 0, 0).unwrap();
        let allocated: Vec<u64> = vec![1, 2, 3, 5, 8, 9, 13, 20, 21];
        let mut data = MockPoolData::default();
        for &id in &allocated {
            data.servers.push(MockServer::new(id, IpAddr::from([192, 0, 2, id as u8])));
        }
        let pool = MockPool::start(data).await.map_err(|e| e.to_string())?;
        let client = |clock: Arc<VirtualClock>| PoolClient::new(&pool.base_url(), RatePolicy::default(), clock).unwrap();
        let c = client(Arc::new(VirtualClock::new(origin)));

        // enumerate the low range; fail partway and resume
        let dir = tempfile::tempdir().unwrap();
        pool.fail_after(pool.request_log().len() + 7);
        {
            let mut store = Store::open(dir.path()).map_err(|e| e.to_string())?;
            ensure!(enumerate(&c, &mut store, 1, 10).await.is_err(), "injected failure not surfaced");
        }
        pool.heal();
        let done: Vec<u64> = {
            let store = Store::open(dir.path()).map_err(|e| e.to_string())?;
            store.state().servers.keys().copied().collect()
        };
        let before = pool.request_log().len();
        let mut store = Store::open(dir.path()).map_err(|e| e.to_string())?;
        enumerate(&c, &mut store, 1, 10).await.map_err(|e| e.to_string())?;
        let resumed = pool.request_log()[before..].to_vec();
        for id in &done {
            ensure!(!resumed.contains(&format!("/scores/{id}")), "re-fetched completed ID {id}");
        }
        let found: Vec<u64> = store.state().servers.keys().copied().collect();
        ensure!(found == allocated, "found {found:?}, allocated {allocated:?}");

        let v6 = ip("2001:470:1f07:c21:1::123");
        pool.update(|d| d.servers.push(MockServer::new(59105, v6)));
        ensure!(c.resolve_id(59105).await.map_err(|e| e.to_string())? == Resolution::Allocated(v6), "59105 mapping");

        // ten minutes of requests on a virtual clock
        let clock = Arc::new(VirtualClock::new(origin));
        let c = client(clock.clone());
        let mut stamps = Vec::new();
        while clock.elapsed() < Duration::from_secs(600) {
            c.resolve_id(1).await.map_err(|e| e.to_string())?;
            stamps.push(clock.elapsed().as_secs_f64());
        }
        let mean = (stamps[stamps.len() - 1] - stamps[0]) / (stamps.len() - 1) as f64;
        ensure!((mean - 5.0).abs() <= 0.5, "mean spacing {mean:.3}s");
        Ok(format!(
            "found {} allocated IDs, 59105 resolved, resume skipped {} completed IDs, mean spacing {mean:.2}s over 10 min",
            found.len(),
            done.len()
        ))
    })
}

fn codec() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for i in 0..10_000 {
        let p = NtpPacket {
            leap: rng.random_range(0..4),
            version: rng.random_range(0..=4),
            mode: rng.random_range(0..8),
            stratum: rng.random(),
            poll: rng.random(),
            precision: rng.random(),
            root_delay: NtpShort::from_u32(rng.random()),
            root_dispersion: NtpShort::from_u32(rng.random()),
            refid: rng.random(),
            reference_ts: NtpTimestamp::from_u64(rng.random()),
            origin_ts: NtpTimestamp::from_u64(rng.random()),
            receive_ts: NtpTimestamp::from_u64(rng.random()),
            transmit_ts: NtpTimestamp::from_u64(rng.random()),
        };
        let back = decode_packet(&encode_packet(&p).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        ensure!(back == p, "mismatch at case {i}");
    }
    // 70 years of 365 days plus 17 leap days
    let oracle = (70 * 365 + 17) * 86_400u64;
    let epoch = unix_to_ntp(0).unwrap().to_u64() >> 32;
    ensure!(epoch == 2_208_988_800 && epoch == oracle, "unix_to_ntp(0) = {epoch}");
    Ok("10k round-trips, 0 mismatches; unix_to_ntp(0) = 2208988800".into())
}

fn residual_model() -> Outcome {
    let cfg = scenario("residual.toml");
    let removal_day = (cfg.attack.as_ref().and_then(|a| a.removal_hours).unwrap() / 24.0) as usize;
    let stop_day = (cfg.attack.as_ref().and_then(|a| a.daemon_stop_hours).unwrap() / 24.0) as usize;
    let daily = run(&cfg).map_err(|e| e.to_string())?.summary.residual_daily;
    let stop = stop_day - removal_day;
    let nonzero = daily.iter().take_while(|&&d| d > 0).count();
    ensure!(nonzero >= 30, "only {nonzero} nonzero days: {daily:?}");
    let weeks: Vec<u64> = daily[..stop.min(42)].chunks(7).map(|w| w.iter().sum()).collect();
    ensure!(weeks.windows(2).all(|w| w[1] < w[0]), "weekly totals not falling: {weeks:?}");
    ensure!(daily[stop + 1] * 4 < daily[stop - 1], "no drop at daemon stop: {:?}", &daily[stop - 3..stop + 3]);
    Ok(format!(
        "{} on day 0 to {} on day {}, {} consecutive nonzero days, {} -> {} across the daemon stop",
        daily[0],
        daily[stop - 1],
        stop - 1,
        nonzero,
        daily[stop - 1],
        daily[stop + 1]
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("minimal attack size", attack_size_exactness),
        ("apportionment exactness", apportionment_exactness),
        (".hu replication", hu_replication),
        ("covering prefix", covering_prefixes),
        ("alias clustering oracle", alias_clustering),
        ("funnel properties", funnel_fixture),
        ("scoring dynamics", scoring_dynamics),
        ("global rate inference", global_rate),
        ("scraper protocol", scraper_protocol),
        ("codec", codec),
        ("residual model", residual_model),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
