//! Starts a fake NTP daemon on three loopback addresses, probes them, and
//! shows that the replies cluster into one alias. A second daemon with its
//! own reference time stays separate.
//!
//! cargo run --example fingerprint_local

use std::net::SocketAddr;
use std::time::Duration;

use poolscope::fingerprint::responder::{DaemonIdentity, FakeDaemon};
use poolscope::fingerprint::{build_clusters, probe, MatchKey, ProbePlan};
use poolscope::wire::NtpTimestamp;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let addrs: Vec<SocketAddr> = ["127.0.0.1:0", "127.0.0.2:0", "127.0.0.3:0"].iter().map(|a| a.parse().unwrap()).collect();
    let a = FakeDaemon::bind(&addrs, DaemonIdentity::default()).await?;
    let other = DaemonIdentity { reference_ts: NtpTimestamp::new(3_962_563_999, 7), ..DaemonIdentity::default() };
    let b = FakeDaemon::bind(&["127.0.0.4:0".parse().unwrap()], other).await?;

    let plan = ProbePlan {
        probes_per_target: 2,
        spacing: Duration::from_millis(100),
        window: Duration::from_secs(1),
        timeout: Duration::from_millis(500),
        ..ProbePlan::default()
    };
    let mut fps = Vec::new();
    for sock in a.local_addrs().iter().chain(b.local_addrs()) {
        // each daemon listens on its own port
        let plan = ProbePlan { port: sock.port(), ..plan.clone() };
        let got = probe(sock.ip(), &plan).await?;
        println!("{} answered {} of {} probes", sock.ip(), got.len(), plan.probes_per_target);
        fps.extend(got);
    }
    for f in &fps {
        println!("  {}", serde_json::to_string(f)?);
    }
    for (i, c) in build_clusters(&fps, &MatchKey::default()).iter().enumerate() {
        println!("cluster {i}: {:?}", c.members);
    }
    Ok(())
}
