//! Runs the bundled mock pool website, walks server IDs until the gap
//! limit, polls answer counters twice, and replays the event log into the
//! same state a crash-resumed scraper would see.
//!
//! cargo run --example mock_scrape

use std::net::IpAddr;
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use poolscope::client::{
    enumerate, poll_answers, Clock, poll_zone_counts, replay, MockPool, MockPoolData, MockServer, PoolClient, RatePolicy,
    Store, VirtualClock,
};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut servers: Vec<MockServer> =
        (1..=6).map(|i| MockServer::new(i, IpAddr::from([192, 0, 2, i as u8]))).collect();
    servers.push(MockServer::new(9, "2001:db8::9".parse()?));
    servers[2].deleted = true;
    for s in &mut servers {
        s.zones = vec!["hu".into(), "europe".into(), "@".into()];
        s.answers.insert("hu".into(), 1000 * s.id);
    }
    let pool = MockPool::start(MockPoolData { servers, zones: Vec::new() }).await?;

    // a virtual clock keeps the 5 s request spacing without waiting
    let clock = Arc::new(VirtualClock::new(Utc.with_ymd_and_hms(2025, 7, 23, 0, 0, 0).unwrap()));
    let client = PoolClient::new(&pool.base_url(), RatePolicy::default(), clock.clone())?;
    let dir = tempfile::tempdir()?;
    let mut store = Store::open(dir.path())?;

    let out = enumerate(&client, &mut store, 1, 5).await?;
    println!("found {} servers, high water {}, next walk from {}", out.records.len(), out.high_water, out.next_id);
    for r in &out.records {
        println!("  #{:<3} {:<16} score {:>5.1} netspeed {:>7} deleted {}", r.server_id, r.address, r.score, r.netspeed_kbps, r.deleted);
    }

    let addrs: Vec<IpAddr> = out.records.iter().filter(|r| !r.deleted).map(|r| r.address).collect();
    poll_answers(&client, &mut store, &addrs).await?;
    pool.update(|d| d.servers.iter_mut().for_each(|s| *s.answers.get_mut("hu").unwrap() += 250));
    let deltas = poll_answers(&client, &mut store, &addrs).await?;
    println!("answer deltas: {:?}", deltas.iter().map(|d| (d.address, d.zone.clone(), d.delta)).collect::<Vec<_>>());

    poll_zone_counts(&client, &mut store, &["hu".into()]).await?;
    println!("hu: {:?}", store.state().zone_counts.get("hu"));
    println!("{} requests in {:?} of virtual time", pool.request_log().len(), clock.elapsed());

    let live = store.state().clone();
    drop(store);
    assert_eq!(replay(dir.path())?, live);
    println!("event log replays to the live state");
    Ok(())
}
