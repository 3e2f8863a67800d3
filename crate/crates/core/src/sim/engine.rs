use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::net::IpAddr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::config::{ConfigError, SimConfig, ZoneWeighting};
use super::pool::{PoolState, SimServer};
use super::report::{AnswerRow, ServerTotals, SimReport, SimSummary, TrafficRow};
use super::score::{step_score, ProbeOutcome};
use crate::apportion::{attack_servers_required, Fraction};

const MS_PER_HOUR: f64 = 3_600_000.0;
const MS_PER_DAY: u64 = 86_400_000;
// intervals beyond this never come due in any realistic run
const MAX_INTERVAL_MS: f64 = 1e15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Resolve,
    Abandon { epoch: u64 },
}

#[derive(Debug)]
struct Client {
    group: usize,
    cached: Option<usize>,
    interval_ms: u64,
    epoch: u64,
}

fn hours_to_ms(h: f64) -> u64 {
    (h * MS_PER_HOUR).round() as u64
}

fn attacker_address(prefix: IpAddr, i: u32) -> IpAddr {
    match prefix {
        IpAddr::V4(a) => IpAddr::V4((u32::from(a).wrapping_add(i + 1)).into()),
        IpAddr::V6(a) => IpAddr::V6((u128::from(a).wrapping_add(u128::from(i) + 1)).into()),
    }
}

/// Attack server count for the config: explicit, or the minimal count that
/// reaches the target fraction of the zone's aggregate netspeed.
pub fn attack_count(cfg: &SimConfig) -> Result<u32, ConfigError> {
    let Some(a) = &cfg.attack else { return Ok(0) };
    if let Some(n) = a.count {
        return Ok(n);
    }
    let f: Fraction = a
        .target_fraction
        .as_deref()
        .unwrap_or_default()
        .parse()
        .map_err(|e| ConfigError::Invalid(format!("target_fraction: {e}")))?;
    let n: u64 = cfg.servers.iter().filter(|s| s.zones.contains(&a.zone)).map(|s| s.netspeed_kbps).sum();
    let s = attack_servers_required(n, a.netspeed_kbps, &f).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    u32::try_from(s).map_err(|_| ConfigError::Invalid(format!("{s} attack servers")))
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    rng: ChaCha8Rng,
    pool: PoolState,
    clients: Vec<Client>,
    group_rate_per_ms: Vec<f64>,
    // cached-client count per server and client group
    load: Vec<Vec<u64>>,
    queue: BinaryHeap<Reverse<(u64, u64, usize, EventKind)>>,
    seq: u64,
    window_ms: u64,
    // (window, zone, server) -> (included, first)
    answers: BTreeMap<(u32, String, usize), (u64, u64)>,
    // (window, zone) -> (queries, addresses handed out)
    zone_totals: BTreeMap<(u32, String), (u64, u64)>,
    received: BTreeMap<(u32, usize), u64>,
    daily_received: BTreeMap<u64, u64>,
    dns_queries: u64,
    empty_answers: u64,
}

impl Sim<'_> {
    fn push(&mut self, at: u64, client: usize, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Reverse((at, self.seq, client, kind)));
    }

    fn set_cache(&mut self, client: usize, server: Option<usize>) {
        let c = &mut self.clients[client];
        if let Some(old) = c.cached {
            self.load[old][c.group] -= 1;
        }
        c.cached = server;
        c.epoch += 1;
        if let Some(new) = server {
            self.load[new][c.group] += 1;
        }
    }

    fn schedule_abandon(&mut self, client: usize, now: u64) {
        let c = &self.clients[client];
        let Some(k) = self.cfg.clients[c.group].failure_threshold else { return };
        let rate = self.group_rate_per_ms[c.group];
        if rate <= 0.0 {
            return;
        }
        let spacing = 1.0 / rate;
        let wait = self.rng.random::<f64>() * spacing + f64::from(k.saturating_sub(1)) * spacing;
        let epoch = c.epoch;
        self.push(now + wait.min(MAX_INTERVAL_MS) as u64, client, EventKind::Abandon { epoch });
    }

    /// Queries the pool and caches the first address; false when the pool
    /// had nothing to hand out.
    fn answer_and_cache(&mut self, client: usize, now: u64, counted: bool) -> bool {
        let country = &self.cfg.clients[self.clients[client].group].country;
        let answer = self.pool.select_answer(country, self.cfg.answers_per_query, &mut self.rng);
        if counted {
            self.dns_queries += 1;
            let window = (now / self.window_ms) as u32;
            match &answer.zone {
                Some(zone) => {
                    let t = self.zone_totals.entry((window, zone.clone())).or_default();
                    t.0 += 1;
                    t.1 += answer.servers.len() as u64;
                    for (pos, &s) in answer.servers.iter().enumerate() {
                        let e = self.answers.entry((window, zone.clone(), s)).or_default();
                        e.0 += 1;
                        e.1 += u64::from(pos == 0);
                    }
                }
                None => self.empty_answers += 1,
            }
        }
        let Some(&s) = answer.servers.first() else { return false };
        self.set_cache(client, Some(s));
        if !self.pool.servers[s].responsive {
            self.schedule_abandon(client, now);
        }
        true
    }

    fn resolve(&mut self, client: usize, now: u64) {
        let next = if self.answer_and_cache(client, now, true) {
            now + self.clients[client].interval_ms
        } else {
            // nothing to hand out: keep the old server, retry next monitor period
            now + self.cfg.monitor_period_secs * 1000
        };
        self.push(next, client, EventKind::Resolve);
    }
}

/// Runs a scenario. The same config, seed included, always yields the same
/// report.
pub fn run(cfg: &SimConfig) -> Result<SimReport, ConfigError> {
    cfg.validate().map_err(ConfigError::Invalid)?;
    let n_attack = attack_count(cfg)?;

    let mut servers: Vec<SimServer> = cfg
        .servers
        .iter()
        .map(|s| {
            let mut srv = SimServer::new(s.address, s.zones.clone(), s.netspeed_kbps);
            srv.score = s.initial_score;
            srv.responsive = s.responsive;
            srv
        })
        .collect();
    let first_attacker = servers.len();
    if let Some(a) = &cfg.attack {
        let mut zones = vec![a.zone.clone()];
        zones.extend(a.extra_zones.iter().filter(|z| **z != a.zone).cloned());
        for i in 0..n_attack {
            let mut s = SimServer::new(attacker_address(a.address_prefix, i), zones.clone(), a.netspeed_kbps);
            s.in_pool = false;
            s.attacker = true;
            servers.push(s);
        }
    }
    let attackers: Vec<usize> = (first_attacker..servers.len()).collect();
    let n_servers = servers.len();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut clients = Vec::new();
    for (g, group) in cfg.clients.iter().enumerate() {
        for _ in 0..group.count {
            let hours = group.re_resolve.sample_hours(&mut rng);
            let interval_ms = (hours * MS_PER_HOUR).clamp(1000.0, MAX_INTERVAL_MS) as u64;
            clients.push(Client { group: g, cached: None, interval_ms, epoch: 0 });
        }
    }

    let window_ms = hours_to_ms(cfg.window_hours).max(1);
    let duration_ms = hours_to_ms(cfg.duration_hours);
    let period_ms = cfg.monitor_period_secs * 1000;
    let mut sim = Sim {
        cfg,
        rng,
        pool: PoolState::new(servers, cfg.zone_weighting, cfg.continents.clone()),
        group_rate_per_ms: cfg.clients.iter().map(|g| g.queries_per_day / MS_PER_DAY as f64).collect(),
        load: vec![vec![0; cfg.clients.len()]; n_servers],
        clients,
        queue: BinaryHeap::new(),
        seq: 0,
        window_ms,
        answers: BTreeMap::new(),
        zone_totals: BTreeMap::new(),
        received: BTreeMap::new(),
        daily_received: BTreeMap::new(),
        dns_queries: 0,
        empty_answers: 0,
    };

    // warm start: every client already holds a server, resolved at a
    // uniformly random point of its current interval
    for c in 0..sim.clients.len() {
        sim.answer_and_cache(c, 0, false);
        let interval = sim.clients[c].interval_ms;
        let next = (sim.rng.random::<f64>() * interval as f64) as u64;
        sim.push(next, c, EventKind::Resolve);
    }

    let attack = cfg.attack.as_ref();
    let start_ms = attack.map(|a| hours_to_ms(a.start_hours));
    let removal_ms = attack.and_then(|a| a.removal_hours).map(hours_to_ms);
    let stop_ms = attack.and_then(|a| a.daemon_stop_hours).map(hours_to_ms);
    let mut eligible_since: Option<u64> = None;

    let steps = duration_ms.div_ceil(period_ms);
    for step in 0..steps {
        let t0 = step * period_ms;
        let t1 = (t0 + period_ms).min(duration_ms);

        if start_ms.is_some_and(|s| s <= t0) && removal_ms.is_none_or(|r| t0 < r) {
            for &a in &attackers {
                sim.pool.servers[a].in_pool = true;
            }
        }
        if removal_ms.is_some_and(|r| r <= t0) {
            for &a in &attackers {
                sim.pool.servers[a].in_pool = false;
            }
        }
        if stop_ms.is_some_and(|s| s <= t0) && attackers.iter().any(|&a| sim.pool.servers[a].responsive) {
            for &a in &attackers {
                sim.pool.servers[a].responsive = false;
            }
            for c in 0..sim.clients.len() {
                if sim.clients[c].cached.is_some_and(|s| sim.pool.servers[s].attacker) {
                    sim.schedule_abandon(c, t0);
                }
            }
        }

        for i in 0..n_servers {
            let healthy = sim.pool.servers[i].responsive
                && (cfg.probe_loss == 0.0 || sim.rng.random::<f64>() >= cfg.probe_loss);
            let outcome = if healthy { ProbeOutcome::Accurate } else { ProbeOutcome::Bad };
            sim.pool.servers[i].score = step_score(sim.pool.servers[i].score, outcome);
        }
        sim.pool.refresh();
        if eligible_since.is_none()
            && !attackers.is_empty()
            && attackers.iter().all(|&a| sim.pool.servers[a].eligible())
        {
            eligible_since = Some(t0);
        }

        while let Some(Reverse((at, _, client, kind))) = sim.queue.peek().copied() {
            if at >= t1 {
                break;
            }
            sim.queue.pop();
            match kind {
                EventKind::Resolve => sim.resolve(client, at),
                EventKind::Abandon { epoch } => {
                    let c = &sim.clients[client];
                    let still_down = c.cached.is_some_and(|s| !sim.pool.servers[s].responsive);
                    if c.epoch == epoch && still_down {
                        sim.resolve(client, at);
                    }
                }
            }
        }

        let window = (t0 / window_ms) as u32;
        let dt = (t1 - t0) as f64;
        for s in 0..n_servers {
            let lambda: f64 =
                sim.load[s].iter().zip(&sim.group_rate_per_ms).map(|(&n, &r)| n as f64 * r * dt).sum();
            if lambda <= 0.0 {
                continue;
            }
            let q = Poisson::new(lambda).map(|p| p.sample(&mut sim.rng) as u64).unwrap_or(0);
            if q == 0 {
                continue;
            }
            *sim.received.entry((window, s)).or_default() += q;
            if sim.pool.servers[s].attacker {
                if let Some(r) = removal_ms {
                    if t0 >= r {
                        *sim.daily_received.entry((t0 - r) / MS_PER_DAY).or_default() += q;
                    }
                }
            }
        }
    }

    Ok(build_report(cfg, &sim, &attackers, window_ms, duration_ms, eligible_since, removal_ms))
}

fn build_report(
    cfg: &SimConfig,
    sim: &Sim<'_>,
    attackers: &[usize],
    window_ms: u64,
    duration_ms: u64,
    eligible_since: Option<u64>,
    removal_ms: Option<u64>,
) -> SimReport {
    let servers = &sim.pool.servers;
    let hours = |w: u32| (u64::from(w) * window_ms) as f64 / MS_PER_HOUR;
    let answers: Vec<AnswerRow> = sim
        .answers
        .iter()
        .map(|((w, zone, s), &(incl, first))| {
            let (queries, handed) = sim.zone_totals[&(*w, zone.clone())];
            AnswerRow {
                window: *w,
                window_start_hours: hours(*w),
                zone: zone.clone(),
                address: servers[*s].address,
                attacker: servers[*s].attacker,
                answers_included: incl,
                answers_first: first,
                first_share: first as f64 / queries as f64,
                inclusion_share: incl as f64 / handed as f64,
            }
        })
        .collect();
    let traffic: Vec<TrafficRow> = sim
        .received
        .iter()
        .map(|(&(w, s), &q)| TrafficRow {
            window: w,
            window_start_hours: hours(w),
            address: servers[s].address,
            attacker: servers[s].attacker,
            received_queries: q,
        })
        .collect();

    let mut totals: Vec<ServerTotals> = servers
        .iter()
        .map(|s| ServerTotals {
            address: s.address,
            attacker: s.attacker,
            answers_included: 0,
            answers_first: 0,
            received_queries: 0,
        })
        .collect();
    for ((_, _, s), &(incl, first)) in &sim.answers {
        totals[*s].answers_included += incl;
        totals[*s].answers_first += first;
    }
    for (&(_, s), &q) in &sim.received {
        totals[s].received_queries += q;
    }

    let attack_zone = cfg.attack.as_ref().map(|a| a.zone.clone());
    let expected_attacker_share = attack_zone.as_ref().filter(|_| !attackers.is_empty()).map(|zone| {
        let weight = |s: &SimServer| match cfg.zone_weighting {
            ZoneWeighting::Full => s.netspeed_kbps as f64,
            ZoneWeighting::Split => s.netspeed_kbps as f64 / s.zones.len().max(1) as f64,
        };
        let in_zone = |s: &&SimServer| s.zones.contains(zone) && s.netspeed_kbps > 0;
        let attack: f64 = servers.iter().filter(in_zone).filter(|s| s.attacker).map(weight).sum();
        let incumbents: f64 = cfg
            .servers
            .iter()
            .filter(|s| s.zones.contains(zone) && s.netspeed_kbps > 0 && s.responsive)
            .map(|s| weight(&SimServer::new(s.address, s.zones.clone(), s.netspeed_kbps)))
            .sum();
        attack / (attack + incumbents)
    });

    // windows wholly inside the attackers' eligible period
    let measured = eligible_since.map(|since| {
        let from = since.div_ceil(window_ms) as u32;
        let end = removal_ms.unwrap_or(duration_ms).min(duration_ms);
        (from, (end / window_ms) as u32)
    });
    let (attacker_share, attacker_inclusion_share) = match (&attack_zone, measured) {
        (Some(zone), Some((from, to))) if from < to => {
            let mut first = 0u64;
            let mut incl = 0u64;
            for ((w, z, s), &(i, f)) in &sim.answers {
                if z == zone && (from..to).contains(w) && servers[*s].attacker {
                    first += f;
                    incl += i;
                }
            }
            let (mut queries, mut handed) = (0u64, 0u64);
            for ((w, z), &(q, h)) in &sim.zone_totals {
                if z == zone && (from..to).contains(w) {
                    queries += q;
                    handed += h;
                }
            }
            let ratio = |x: u64, t: u64| (t > 0).then(|| x as f64 / t as f64);
            (ratio(first, queries), ratio(incl, handed))
        }
        _ => (None, None),
    };

    let residual_daily = match removal_ms {
        Some(r) if r < duration_ms => {
            let days = (duration_ms - r) / MS_PER_DAY;
            (0..days).map(|d| sim.daily_received.get(&d).copied().unwrap_or(0)).collect()
        }
        _ => Vec::new(),
    };

    SimReport {
        answers,
        traffic,
        summary: SimSummary {
            seed: cfg.seed,
            duration_hours: cfg.duration_hours,
            windows: duration_ms.div_ceil(window_ms) as u32,
            dns_queries: sim.dns_queries,
            empty_answers: sim.empty_answers,
            attack_zone,
            attack_servers: attackers.iter().map(|&a| servers[a].address).collect(),
            expected_attacker_share,
            attacker_share,
            attacker_inclusion_share,
            residual_daily,
            servers: totals,
        },
    }
}
