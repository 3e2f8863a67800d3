use std::net::IpAddr;

use chrono::{DateTime, Utc};
use thiserror::Error;

use super::http::{ClientError, PoolClient, Resolution};
use super::store::{Event, Store, StoreError};
use super::types::{AnswerDelta, ServerRecord};

#[derive(Debug, Error)]
pub enum ScrapeError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnumerateOutcome {
    pub records: Vec<ServerRecord>,
    pub high_water: u64,
    /// ID polled next for newly registered servers.
    pub next_id: u64,
    pub next_poll_at: DateTime<Utc>,
}

/// Default number of consecutive unallocated IDs that ends a walk.
pub const DEFAULT_MAX_GAP: u64 = 20;

/// Walks server IDs upward from the stored checkpoint (or `start_id`,
/// whichever is later), fetching metadata for each allocated ID. Progress
/// is logged after every ID, so a failed run resumes where it stopped.
pub async fn enumerate(
    client: &PoolClient,
    store: &mut Store,
    start_id: u64,
    max_gap: u64,
) -> Result<EnumerateOutcome, ScrapeError> {
    if start_id == 0 {
        return Err(ClientError::InvalidArgument("start_id must be at least 1".into()).into());
    }
    let mut id = start_id.max(store.state().next_id);
    let mut high_water = store.state().high_water;
    let mut records = Vec::new();
    let mut gap = 0;
    while gap < max_gap.max(1) {
        let now = client.clock().wall();
        match client.resolve_id(id).await? {
            Resolution::Allocated(addr) => {
                let record = client.fetch_server(id, addr).await?;
                store.record_server(client.clock().wall(), record.clone())?;
                records.push(record);
                high_water = high_water.max(id);
                gap = 0;
            }
            Resolution::NotAllocated => {
                store.append(now, Event::IdUnallocated { server_id: id })?;
                gap += 1;
            }
        }
        id += 1;
        store.append(client.clock().wall(), Event::Progress { next_id: id, high_water, next_poll_at: None })?;
    }
    let next_id = (high_water + 1).max(start_id);
    let next_poll_at = client.clock().wall() + chrono::Duration::from_std(client.policy().id_poll_interval).unwrap();
    store.append(client.clock().wall(), Event::Progress { next_id, high_water, next_poll_at: Some(next_poll_at) })?;
    store.snapshot()?;
    Ok(EnumerateOutcome { records, high_water, next_id, next_poll_at })
}

/// Whether the armed poll for new IDs is due.
pub fn id_poll_due(store: &Store, now: DateTime<Utc>) -> bool {
    store.state().next_poll_at.is_none_or(|t| now >= t)
}

/// Fetches answer counters for each address, logs them and returns the
/// deltas against previously stored samples.
pub async fn poll_answers(
    client: &PoolClient,
    store: &mut Store,
    addresses: &[IpAddr],
) -> Result<Vec<AnswerDelta>, ScrapeError> {
    let mut deltas = Vec::new();
    for addr in addresses {
        let samples = client.fetch_answers(*addr).await?;
        deltas.extend(store.record_answers(samples)?);
    }
    Ok(deltas)
}

/// Fetches and logs the counts of each zone.
pub async fn poll_zone_counts(client: &PoolClient, store: &mut Store, zones: &[String]) -> Result<(), ScrapeError> {
    for z in zones {
        let counts = client.fetch_zone_counts(z).await?;
        store.append(counts.fetched_at, Event::ZoneCounts { counts })?;
    }
    Ok(())
}
