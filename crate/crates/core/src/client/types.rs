use std::collections::BTreeSet;
use std::net::IpAddr;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub const MIN_SCORE: f64 = -100.0;
pub const MAX_SCORE: f64 = 20.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServerRecord {
    pub server_id: u64,
    pub address: IpAddr,
    pub zones: BTreeSet<String>,
    pub score: f64,
    pub netspeed_kbps: u64,
    pub account: Option<String>,
    pub first_seen: DateTime<Utc>,
    pub last_seen: DateTime<Utc>,
    pub deleted: bool,
    pub monitor_only: bool,
}

impl ServerRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.server_id == 0 {
            return Err("server_id must be positive".into());
        }
        if !(MIN_SCORE..=MAX_SCORE).contains(&self.score) {
            return Err(format!("score {} outside [-100, 20]", self.score));
        }
        if self.monitor_only != (self.netspeed_kbps == 0) {
            return Err("monitor_only must hold exactly when netspeed is 0".into());
        }
        if self.last_seen < self.first_seen {
            return Err("last_seen before first_seen".into());
        }
        Ok(())
    }

    /// Same observable state, ignoring when it was seen.
    pub fn same_state(&self, other: &ServerRecord) -> bool {
        self.server_id == other.server_id
            && self.address == other.address
            && self.zones == other.zones
            && self.score == other.score
            && self.netspeed_kbps == other.netspeed_kbps
            && self.account == other.account
            && self.deleted == other.deleted
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneCounts {
    pub zone: String,
    pub servers_v4: u64,
    pub servers_v6: u64,
    pub aggregate_netspeed: u64,
    pub fetched_at: DateTime<Utc>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSample {
    pub address: IpAddr,
    pub zone: String,
    pub answer_count: u64,
    pub fetched_at: DateTime<Utc>,
}

/// Change in one cumulative answer counter between two samples.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerDelta {
    pub address: IpAddr,
    pub zone: String,
    pub from: DateTime<Utc>,
    pub to: DateTime<Utc>,
    /// For a reset this is the new counter value, the start of a new segment.
    pub delta: u64,
    pub reset: bool,
}

impl AnswerDelta {
    pub fn between(prev: &AnswerSample, next: &AnswerSample) -> Self {
        let reset = next.answer_count < prev.answer_count;
        Self {
            address: next.address,
            zone: next.zone.clone(),
            from: prev.fetched_at,
            to: next.fetched_at,
            delta: if reset { next.answer_count } else { next.answer_count - prev.answer_count },
            reset,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePolicy {
    #[serde(with = "crate::fingerprint::secs")]
    pub mean_inter_request: Duration,
    #[serde(with = "crate::fingerprint::secs")]
    pub id_poll_interval: Duration,
    #[serde(with = "crate::fingerprint::secs")]
    pub answers_poll_interval: Duration,
    pub retries: u32,
}

impl Default for RatePolicy {
    fn default() -> Self {
        Self {
            mean_inter_request: Duration::from_secs(5),
            id_poll_interval: Duration::from_secs(90 * 60),
            answers_poll_interval: Duration::from_secs(30 * 60),
            retries: 2,
        }
    }
}

impl RatePolicy {
    pub fn validate(&self) -> Result<(), String> {
        if self.mean_inter_request.is_zero() || self.id_poll_interval.is_zero() || self.answers_poll_interval.is_zero()
        {
            return Err("rate policy intervals must be positive".into());
        }
        Ok(())
    }
}
