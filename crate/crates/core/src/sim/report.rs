use std::collections::BTreeMap;
use std::io::Write;
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

/// DNS answers for one server in one zone during one window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnswerRow {
    pub window: u32,
    pub window_start_hours: f64,
    pub zone: String,
    pub address: IpAddr,
    pub attacker: bool,
    /// Answers that listed the server anywhere.
    pub answers_included: u64,
    /// Answers that listed the server first, i.e. the address a client uses.
    pub answers_first: u64,
    /// `answers_first` over all answers from the zone in the window.
    pub first_share: f64,
    /// `answers_included` over all addresses handed out by the zone.
    pub inclusion_share: f64,
}

/// NTP queries that reached one server during one window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficRow {
    pub window: u32,
    pub window_start_hours: f64,
    pub address: IpAddr,
    pub attacker: bool,
    pub received_queries: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServerTotals {
    pub address: IpAddr,
    pub attacker: bool,
    pub answers_included: u64,
    pub answers_first: u64,
    pub received_queries: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub seed: u64,
    pub duration_hours: f64,
    pub windows: u32,
    pub dns_queries: u64,
    pub empty_answers: u64,
    pub attack_zone: Option<String>,
    pub attack_servers: Vec<IpAddr>,
    /// Netspeed fraction the attackers hold in their zone once eligible.
    pub expected_attacker_share: Option<f64>,
    /// Attackers' combined first-position share of their zone's answers,
    /// over the windows in which all of them were eligible for the whole
    /// window.
    pub attacker_share: Option<f64>,
    pub attacker_inclusion_share: Option<f64>,
    /// Queries reaching the attack servers per simulated day, starting on
    /// the day of removal.
    pub residual_daily: Vec<u64>,
    pub servers: Vec<ServerTotals>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub answers: Vec<AnswerRow>,
    pub traffic: Vec<TrafficRow>,
    pub summary: SimSummary,
}

impl SimReport {
    /// First-position and inclusion shares per server for one zone, pooled
    /// over windows `from..to`.
    pub fn zone_shares(&self, zone: &str, from: u32, to: u32) -> BTreeMap<IpAddr, (f64, f64)> {
        let rows = || self.answers.iter().filter(|r| r.zone == zone && (from..to).contains(&r.window));
        let mut per: BTreeMap<IpAddr, (u64, u64)> = BTreeMap::new();
        for r in rows() {
            let e = per.entry(r.address).or_default();
            e.0 += r.answers_first;
            e.1 += r.answers_included;
        }
        let first_total: u64 = per.values().map(|v| v.0).sum();
        let incl_total: u64 = per.values().map(|v| v.1).sum();
        per.into_iter()
            .map(|(a, (f, i))| {
                let ratio = |x: u64, t: u64| if t == 0 { 0.0 } else { x as f64 / t as f64 };
                (a, (ratio(f, first_total), ratio(i, incl_total)))
            })
            .collect()
    }

    pub fn write_answers_csv(&self, w: impl Write) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.answers {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_traffic_csv(&self, w: impl Write) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.traffic {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }
}
