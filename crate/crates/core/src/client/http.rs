use std::collections::{BTreeMap, BTreeSet};
use std::net::IpAddr;
use std::sync::Arc;

use reqwest::{redirect, StatusCode};
use serde::Deserialize;
use thiserror::Error;

use super::limiter::{Clock, RateLimiter};
use super::types::{AnswerSample, RatePolicy, ServerRecord, ZoneCounts};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport error for {url}: {msg}")]
    Transport { url: String, msg: String },
    #[error("{url} answered {status}")]
    Status { url: String, status: u16 },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resolution {
    Allocated(IpAddr),
    NotAllocated,
}

#[derive(Deserialize)]
struct ServerJson {
    server: ServerInfo,
}

#[derive(Deserialize)]
struct ServerInfo {
    ip: IpAddr,
    score: f64,
    netspeed: u64,
    #[serde(default)]
    zones: Vec<String>,
    #[serde(default)]
    account: Option<String>,
    #[serde(default)]
    deleted: bool,
}

#[derive(Deserialize)]
struct ZoneCountsJson {
    zone: String,
    servers_v4: u64,
    servers_v6: u64,
    aggregate_netspeed: u64,
}

/// Rate-limited client for the pool website. Redirects are never followed.
pub struct PoolClient {
    base: String,
    http: reqwest::Client,
    limiter: RateLimiter,
    policy: RatePolicy,
}

impl PoolClient {
    pub fn new(base_url: &str, policy: RatePolicy, clock: Arc<dyn Clock>) -> Result<Self, ClientError> {
        policy.validate().map_err(ClientError::InvalidArgument)?;
        let base = base_url.trim_end_matches('/').to_string();
        reqwest::Url::parse(&base).map_err(|e| ClientError::InvalidArgument(format!("base url `{base}`: {e}")))?;
        let http = reqwest::Client::builder()
            .redirect(redirect::Policy::none())
            .user_agent(concat!("poolscope/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| ClientError::InvalidArgument(e.to_string()))?;
        Ok(Self { base, http, limiter: RateLimiter::new(clock, policy.mean_inter_request), policy })
    }

    pub fn policy(&self) -> &RatePolicy {
        &self.policy
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        self.limiter.clock()
    }

    async fn get(&self, path: &str) -> Result<reqwest::Response, ClientError> {
        let url = format!("{}{}", self.base, path);
        let mut last = None;
        for attempt in 0..=self.policy.retries {
            self.limiter.acquire().await;
            match self.http.get(&url).send().await {
                Ok(resp) if resp.status().is_server_error() => {
                    log::debug!("{url}: {} (attempt {})", resp.status(), attempt + 1);
                    last = Some(ClientError::Status { url: url.clone(), status: resp.status().as_u16() });
                }
                Ok(resp) => return Ok(resp),
                Err(e) => {
                    log::debug!("{url}: {e} (attempt {})", attempt + 1);
                    last = Some(ClientError::Transport { url: url.clone(), msg: e.to_string() });
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }

    async fn json<T: serde::de::DeserializeOwned>(resp: reqwest::Response, what: &str) -> Result<T, ClientError> {
        let body = resp.bytes().await.map_err(|e| ClientError::Protocol(format!("{what}: {e}")))?;
        serde_json::from_slice(&body).map_err(|e| ClientError::Protocol(format!("{what}: {e}")))
    }

    /// Maps a server ID to its address via the redirect of `/scores/{id}`.
    pub async fn resolve_id(&self, server_id: u64) -> Result<Resolution, ClientError> {
        if server_id == 0 {
            return Err(ClientError::InvalidArgument("server IDs start at 1".into()));
        }
        let resp = self.get(&format!("/scores/{server_id}")).await?;
        match resp.status() {
            StatusCode::MOVED_PERMANENTLY | StatusCode::FOUND | StatusCode::PERMANENT_REDIRECT => {
                let loc = resp
                    .headers()
                    .get(reqwest::header::LOCATION)
                    .and_then(|v| v.to_str().ok())
                    .ok_or_else(|| ClientError::Protocol(format!("redirect for ID {server_id} without Location")))?;
                parse_scores_location(loc).map(Resolution::Allocated)
            }
            StatusCode::NOT_FOUND => Ok(Resolution::NotAllocated),
            s => Err(ClientError::Status { url: format!("{}/scores/{server_id}", self.base), status: s.as_u16() }),
        }
    }

    /// Fetches the metadata of an allocated server.
    pub async fn fetch_server(&self, server_id: u64, address: IpAddr) -> Result<ServerRecord, ClientError> {
        let resp = self.get(&format!("/scores/{address}/json")).await?;
        if resp.status() == StatusCode::NOT_FOUND {
            return Err(ClientError::NotFound(address.to_string()));
        }
        if !resp.status().is_success() {
            return Err(ClientError::Status { url: format!("/scores/{address}/json"), status: resp.status().as_u16() });
        }
        let page: ServerJson = Self::json(resp, "server metadata").await?;
        let info = page.server;
        if info.ip != address {
            return Err(ClientError::Protocol(format!("asked for {address}, got {}", info.ip)));
        }
        let now = self.clock().wall();
        let record = ServerRecord {
            server_id,
            address,
            zones: info.zones.into_iter().collect::<BTreeSet<_>>(),
            score: info.score,
            netspeed_kbps: info.netspeed,
            account: info.account.filter(|a| !a.is_empty()),
            first_seen: now,
            last_seen: now,
            deleted: info.deleted,
            monitor_only: info.netspeed == 0,
        };
        record.validate().map_err(|e| ClientError::Protocol(format!("server {server_id}: {e}")))?;
        Ok(record)
    }

    /// Cumulative per-zone answer counts for one address; unknown
    /// addresses yield no samples.
    pub async fn fetch_answers(&self, address: IpAddr) -> Result<Vec<AnswerSample>, ClientError> {
        let resp = self.get(&format!("/api/data/server/dns/answers/{address}")).await?;
        if resp.status() == StatusCode::NOT_FOUND {
            return Ok(Vec::new());
        }
        if !resp.status().is_success() {
            return Err(ClientError::Status { url: format!("answers/{address}"), status: resp.status().as_u16() });
        }
        let counts: BTreeMap<String, u64> = Self::json(resp, "dns answers").await?;
        let fetched_at = self.clock().wall();
        Ok(counts
            .into_iter()
            .map(|(zone, answer_count)| AnswerSample { address, zone, answer_count, fetched_at })
            .collect())
    }

    pub async fn fetch_zone_counts(&self, zone: &str) -> Result<ZoneCounts, ClientError> {
        if zone.is_empty() || zone.contains('/') {
            return Err(ClientError::InvalidArgument(format!("zone code `{zone}`")));
        }
        let resp = self.get(&format!("/api/data/zone/counts/{zone}")).await?;
        if resp.status() == StatusCode::NOT_FOUND {
            return Err(ClientError::NotFound(format!("zone {zone}")));
        }
        if !resp.status().is_success() {
            return Err(ClientError::Status { url: format!("zone/counts/{zone}"), status: resp.status().as_u16() });
        }
        let z: ZoneCountsJson = Self::json(resp, "zone counts").await?;
        Ok(ZoneCounts {
            zone: z.zone,
            servers_v4: z.servers_v4,
            servers_v6: z.servers_v6,
            aggregate_netspeed: z.aggregate_netspeed,
            fetched_at: self.clock().wall(),
        })
    }
}

/// Extracts the address from a `/scores/{ip}` redirect target, absolute or
/// relative.
pub fn parse_scores_location(loc: &str) -> Result<IpAddr, ClientError> {
    let path = match loc.find("://") {
        Some(i) => loc[i + 3..].find('/').map(|j| &loc[i + 3 + j..]).unwrap_or(""),
        None => loc,
    };
    path.strip_prefix("/scores/")
        .map(|rest| rest.trim_end_matches('/'))
        .and_then(|ip| ip.parse().ok())
        .ok_or_else(|| ClientError::Protocol(format!("unexpected redirect target `{loc}`")))
}
