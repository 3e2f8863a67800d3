#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use chrono::{DateTime, Duration, TimeZone, Utc};
use poolscope::fingerprint::{AliasCluster, Fingerprint};
use poolscope::wire::{NtpShort, NtpTimestamp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A synthetic alias population: fingerprints plus the true host of every
/// address.
pub struct Population {
    pub fingerprints: Vec<Fingerprint>,
    pub host_of: BTreeMap<IpAddr, usize>,
    pub stratum1_hosts: BTreeSet<usize>,
}

pub fn campaign_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 7, 23, 12, 0, 0).unwrap()
}

/// `hosts` hosts with 1..=`max_k` addresses each, probed twice 10 s apart
/// inside one 60 s campaign. A `drift` fraction of hosts resync once during
/// the campaign, changing their reference timestamp from then on.
pub fn population(seed: u64, hosts: usize, max_k: usize, drift: f64) -> Population {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t0 = campaign_start();
    let upstreams: [[u8; 4]; 3] = [[192, 0, 2, 1], [192, 0, 2, 2], [198, 51, 100, 9]];
    let mut fingerprints = Vec::new();
    let mut host_of = BTreeMap::new();
    let mut stratum1_hosts = BTreeSet::new();
    let mut next_v4 = 0x0a00_0001u32;
    let mut next_v6 = 1u128;
    for h in 0..hosts {
        let stratum1 = rng.random_bool(0.05);
        if stratum1 {
            stratum1_hosts.insert(h);
        }
        let stratum = if stratum1 { 1 } else { rng.random_range(2..=4) };
        let refid = if stratum1 { *b"GPS\0" } else { upstreams[rng.random_range(0..upstreams.len())] };
        let precision = -rng.random_range(18..=25i8);
        let ref_before = NtpTimestamp::from_u64(rng.random());
        let ref_after = NtpTimestamp::from_u64(rng.random());
        let resync_at = rng.random_bool(drift).then(|| rng.random_range(0.0..50.0));
        let k = rng.random_range(1..=max_k);
        for _ in 0..k {
            let addr = if rng.random_bool(0.5) {
                next_v4 += rng.random_range(1..300);
                IpAddr::V4(Ipv4Addr::from(next_v4))
            } else {
                next_v6 += rng.random_range(1..1 << 20);
                IpAddr::V6(Ipv6Addr::from((0x2001_0db8u128 << 96) | next_v6))
            };
            host_of.insert(addr, h);
            let first: f64 = rng.random_range(0.0..40.0);
            for at in [first, first + 10.0] {
                let reference_ts = match resync_at {
                    Some(r) if at >= r => ref_after,
                    _ => ref_before,
                };
                fingerprints.push(Fingerprint {
                    address: addr,
                    collected_at: t0 + Duration::milliseconds((at * 1000.0) as i64),
                    leap: 0,
                    version: 4,
                    stratum,
                    refid,
                    precision,
                    poll: rng.random_range(6..=10),
                    reference_ts,
                    root_dispersion: NtpShort::from_u32(rng.random()),
                    weak_hints: None,
                });
            }
        }
    }
    Population { fingerprints, host_of, stratum1_hosts }
}

/// Pairwise precision and recall of `clusters` against the true hosts.
pub fn pair_scores(clusters: &[AliasCluster], host_of: &BTreeMap<IpAddr, usize>) -> (f64, f64) {
    let mut predicted = 0u64;
    let mut correct = 0u64;
    for c in clusters {
        for (i, a) in c.members.iter().enumerate() {
            for b in &c.members[i + 1..] {
                predicted += 1;
                correct += u64::from(host_of[a] == host_of[b]);
            }
        }
    }
    let mut sizes: BTreeMap<usize, u64> = BTreeMap::new();
    for h in host_of.values() {
        *sizes.entry(*h).or_default() += 1;
    }
    let truth: u64 = sizes.values().map(|n| n * (n - 1) / 2).sum();
    let precision = if predicted == 0 { 1.0 } else { correct as f64 / predicted as f64 };
    let recall = if truth == 0 { 1.0 } else { correct as f64 / truth as f64 };
    (precision, recall)
}

/// Longest common bit prefix of same-family addresses, by brute force.
pub fn common_prefix_len(addrs: &[IpAddr]) -> u8 {
    let bits = |a: &IpAddr| -> (u128, u8) {
        match a {
            IpAddr::V4(v) => (u128::from(u32::from(*v)) << 96, 32),
            IpAddr::V6(v) => (u128::from(*v), 128),
        }
    };
    let (first, width) = bits(&addrs[0]);
    let mut len = 0;
    while len < width {
        let bit = |x: u128| (x >> (127 - len)) & 1;
        if addrs.iter().all(|a| bit(bits(a).0) == bit(first)) {
            len += 1;
        } else {
            break;
        }
    }
    len
}
