//! UDP prober that collects fingerprints from mode-4 replies.

use std::collections::BTreeSet;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr, SocketAddr};
use std::sync::Arc;
use std::time::Duration;

use chrono::Utc;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::net::UdpSocket;
use tokio::sync::Mutex;
use tokio::time::{sleep_until, timeout_at, Instant};

use super::Fingerprint;
use crate::wire::{decode_response, NtpPacket, NtpTimestamp, MODE_SERVER};

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("invalid probe plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbePlan {
    pub targets: Vec<IpAddr>,
    pub probes_per_target: u32,
    /// Upper bound on the span of one target's probe rounds.
    #[serde(with = "super::secs")]
    pub window: Duration,
    /// Delay between successive rounds to the same target.
    #[serde(with = "super::secs")]
    pub spacing: Duration,
    #[serde(with = "super::secs")]
    pub timeout: Duration,
    pub retries: u32,
    pub port: u16,
    /// Global cap on packets sent per second, across all targets.
    pub max_pps: f64,
    pub concurrency: usize,
}

impl Default for ProbePlan {
    fn default() -> Self {
        Self {
            targets: Vec::new(),
            probes_per_target: 2,
            window: Duration::from_secs(60),
            spacing: Duration::from_secs(10),
            timeout: Duration::from_secs(3),
            retries: 2,
            port: 123,
            max_pps: 50.0,
            concurrency: 64,
        }
    }
}

impl ProbePlan {
    pub fn validate(&self) -> Result<(), ProbeError> {
        let bad = |m: &str| Err(ProbeError::InvalidPlan(m.to_string()));
        if self.probes_per_target == 0 {
            return bad("probes_per_target must be at least 1");
        }
        if self.window < self.spacing * self.probes_per_target {
            return bad("window shorter than spacing * probes_per_target");
        }
        if self.timeout.is_zero() {
            return bad("timeout must be positive");
        }
        if self.max_pps.is_nan() || self.max_pps <= 0.0 {
            return bad("max_pps must be positive");
        }
        if self.concurrency == 0 {
            return bad("concurrency must be at least 1");
        }
        Ok(())
    }
}

/// Spaces packet emissions globally.
#[derive(Debug)]
pub struct Pacer {
    interval: Duration,
    next: Mutex<Instant>,
}

impl Pacer {
    pub fn new(max_pps: f64) -> Self {
        Self { interval: Duration::from_secs_f64(1.0 / max_pps), next: Mutex::new(Instant::now()) }
    }

    pub async fn tick(&self) {
        let slot = {
            let mut next = self.next.lock().await;
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot
        };
        sleep_until(slot).await;
    }
}

async fn bind_for(addr: &IpAddr) -> std::io::Result<UdpSocket> {
    let local: SocketAddr = match addr {
        IpAddr::V4(_) => (Ipv4Addr::UNSPECIFIED, 0).into(),
        IpAddr::V6(_) => (Ipv6Addr::UNSPECIFIED, 0).into(),
    };
    UdpSocket::bind(local).await
}

/// One request/reply exchange with retries. `None` when the target stays
/// silent.
async fn exchange(
    sock: &UdpSocket,
    target: SocketAddr,
    plan: &ProbePlan,
    pacer: &Pacer,
) -> std::io::Result<Option<Fingerprint>> {
    let mut buf = [0u8; 1024];
    for attempt in 0..=plan.retries {
        let transmit = NtpTimestamp::from_u64(rand::random());
        let req = NtpPacket::client_request(transmit).encode().expect("valid probe");
        pacer.tick().await;
        if let Err(e) = sock.send_to(&req, target).await {
            log::debug!("send to {target} failed (attempt {attempt}): {e}");
            continue;
        }
        let deadline = Instant::now() + plan.timeout;
        loop {
            let (n, from) = match timeout_at(deadline, sock.recv_from(&mut buf)).await {
                Ok(r) => r?,
                Err(_) => break,
            };
            if from.ip() != target.ip() {
                continue;
            }
            let pkt = match decode_response(&buf[..n]) {
                Ok(p) => p,
                Err(e) => {
                    log::warn!("discarding malformed reply from {from}: {e}");
                    continue;
                }
            };
            if pkt.mode != MODE_SERVER || pkt.origin_ts != transmit {
                log::debug!("ignoring unrelated reply from {from}");
                continue;
            }
            return Ok(Some(Fingerprint::from_packet(target.ip(), Utc::now(), &pkt)));
        }
    }
    Ok(None)
}

async fn probe_paced(address: IpAddr, plan: &ProbePlan, pacer: &Pacer) -> Result<Vec<Fingerprint>, ProbeError> {
    let sock = bind_for(&address).await?;
    let target = SocketAddr::new(address, plan.port);
    let start = Instant::now();
    let mut out = Vec::new();
    for round in 0..plan.probes_per_target {
        if round > 0 {
            sleep_until(start + plan.spacing * round).await;
        }
        if let Some(fp) = exchange(&sock, target, plan, pacer).await? {
            out.push(fp);
        }
    }
    Ok(out)
}

/// Probes one address. An empty result means the address never answered.
pub async fn probe(address: IpAddr, plan: &ProbePlan) -> Result<Vec<Fingerprint>, ProbeError> {
    plan.validate()?;
    let pacer = Pacer::new(plan.max_pps);
    probe_paced(address, plan, &pacer).await
}

/// Probes every target in the plan concurrently under one packet-rate cap.
/// Fingerprints come back sorted by address, then collection time.
pub async fn probe_all(plan: &ProbePlan) -> Result<Vec<Fingerprint>, ProbeError> {
    plan.validate()?;
    let pacer = Arc::new(Pacer::new(plan.max_pps));
    let targets: BTreeSet<IpAddr> = plan.targets.iter().copied().collect();
    let results: Vec<_> = stream::iter(targets)
        .map(|addr| {
            let pacer = Arc::clone(&pacer);
            async move { probe_paced(addr, plan, &pacer).await }
        })
        .buffer_unordered(plan.concurrency)
        .collect()
        .await;
    let mut fps = Vec::new();
    for r in results {
        fps.extend(r?);
    }
    fps.sort_by_key(|f| (f.address, f.collected_at));
    Ok(fps)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub targets: usize,
    pub responded: usize,
    pub responsiveness: f64,
    pub unresponsive: Vec<IpAddr>,
}

pub fn campaign_summary(targets: &[IpAddr], fps: &[Fingerprint]) -> CampaignSummary {
    let targets: BTreeSet<IpAddr> = targets.iter().copied().collect();
    let seen: BTreeSet<IpAddr> = fps.iter().map(|f| f.address).collect();
    let responded = targets.intersection(&seen).count();
    CampaignSummary {
        targets: targets.len(),
        responded,
        responsiveness: if targets.is_empty() { 0.0 } else { responded as f64 / targets.len() as f64 },
        unresponsive: targets.difference(&seen).copied().collect(),
    }
}
