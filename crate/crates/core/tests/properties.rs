mod common;

use std::collections::{BTreeSet, HashMap};
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use chrono::{Duration, TimeZone, Utc};
use ipnet::IpNet;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use poolscope::apportion::{attack_servers_required, captured_fraction, Fraction, ZoneState};
use poolscope::client::{replay, ServerRecord, Store};
use poolscope::fingerprint::{alias_tally, build_clusters, covering_prefix, AliasCluster, MatchKey};
use poolscope::independence::{funnel, lpm_lookup, PrefixTable};
use poolscope::sim::{step_score, ProbeOutcome};
use poolscope::wire::{decode_packet, encode_packet, NtpPacket, NtpShort, NtpTimestamp};
use proptest::prelude::*;

fn packet() -> impl Strategy<Value = NtpPacket> {
    (
        (0u8..4, 0u8..=4, 0u8..8, any::<u8>(), any::<i8>(), any::<i8>()),
        (any::<u32>(), any::<u32>(), any::<[u8; 4]>()),
        (any::<u64>(), any::<u64>(), any::<u64>(), any::<u64>()),
    )
        .prop_map(|((leap, version, mode, stratum, poll, precision), (rd, rdisp, refid), (r, o, rx, tx))| NtpPacket {
            leap,
            version,
            mode,
            stratum,
            poll,
            precision,
            root_delay: NtpShort::from_u32(rd),
            root_dispersion: NtpShort::from_u32(rdisp),
            refid,
            reference_ts: NtpTimestamp::from_u64(r),
            origin_ts: NtpTimestamp::from_u64(o),
            receive_ts: NtpTimestamp::from_u64(rx),
            transmit_ts: NtpTimestamp::from_u64(tx),
        })
}

fn same_family_set() -> impl Strategy<Value = Vec<IpAddr>> {
    prop_oneof![
        (any::<u32>(), prop::collection::vec(any::<u32>(), 1..8), 0u32..=32).prop_map(|(base, xs, keep)| {
            let mask = if keep == 0 { 0 } else { u32::MAX << (32 - keep) };
            xs.into_iter().map(|x| IpAddr::V4(Ipv4Addr::from((base & mask) | (x & !mask)))).collect()
        }),
        (any::<u128>(), prop::collection::vec(any::<u128>(), 1..8), 0u32..=128).prop_map(|(base, xs, keep)| {
            let mask = if keep == 0 { 0 } else { u128::MAX << (128 - keep) };
            xs.into_iter().map(|x| IpAddr::V6(Ipv6Addr::from((base & mask) | (x & !mask)))).collect()
        }),
    ]
}

fn fraction() -> impl Strategy<Value = (i64, i64)> {
    (2i64..1000).prop_flat_map(|d| (1..d, Just(d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn codec_round_trip(p in packet()) {
        let bytes = encode_packet(&p).unwrap();
        prop_assert_eq!(decode_packet(&bytes).unwrap(), p);
        prop_assert_eq!(encode_packet(&decode_packet(&bytes).unwrap()).unwrap(), bytes);
    }

    #[test]
    fn covering_prefix_is_common_prefix(addrs in same_family_set()) {
        let net = covering_prefix(&addrs).unwrap();
        prop_assert_eq!(net.prefix_len(), common::common_prefix_len(&addrs));
        prop_assert!(addrs.iter().all(|a| net.contains(a)));
        prop_assert_eq!(net, net.trunc());
    }

    #[test]
    fn attack_size_minimal_and_monotone(n in 0u64..20_000_000, m in 1u64..=3_000_000, (num, den) in fraction()) {
        let f = Fraction::from_ratio(num, den).unwrap();
        let s = attack_servers_required(n, m, &f).unwrap();
        let target = BigRational::new(num.into(), den.into());
        prop_assert!(s >= 1);
        prop_assert!(captured_fraction(n, m, s) >= target);
        if s > 1 {
            prop_assert!(captured_fraction(n, m, s - 1) < target);
        }
        // a bigger zone never needs fewer servers; a bigger attacker never needs more
        prop_assert!(attack_servers_required(n + 1_000, m, &f).unwrap() >= s);
        prop_assert!(attack_servers_required(n, m + 1, &f).unwrap() <= s);
        if num + 1 < den {
            let g = Fraction::from_ratio(num + 1, den).unwrap();
            prop_assert!(attack_servers_required(n, m, &g).unwrap() >= s);
        }
    }

    #[test]
    fn funnel_stages_monotone_and_order_free(
        groups in prop::collection::vec((1usize..4, any::<bool>(), prop::option::of(0u8..6), prop::option::of(0u32..5)), 1..40),
        rot in any::<prop::sample::Index>(),
    ) {
        let mut active = Vec::new();
        let mut clusters = Vec::new();
        let mut accounts = HashMap::new();
        let mut asn: HashMap<IpAddr, u32> = HashMap::new();
        let mut next = 1u32;
        for (size, clustered, acct, a) in &groups {
            let members: Vec<IpAddr> = (0..*size).map(|_| { next += 1; IpAddr::V4(Ipv4Addr::from(next)) }).collect();
            for m in &members {
                if let Some(x) = acct { accounts.insert(*m, format!("acct{x}")); }
                if let Some(x) = a { asn.insert(*m, *x + 1); }
            }
            active.extend(&members);
            if *clustered {
                clusters.push(AliasCluster::from_members(members, false));
            }
        }
        let r = funnel(&active, &clusters, &accounts, |ip| asn.get(ip).copied()).unwrap();
        prop_assert!(r.total_active >= r.after_dealias);
        prop_assert!(r.after_dealias >= r.after_account);
        prop_assert!(r.after_account >= r.after_asn);
        prop_assert!(r.after_asn >= 1);
        prop_assert!((0.0..=1.0).contains(&r.independent_fraction));

        let k = rot.index(active.len());
        active.rotate_left(k);
        clusters.reverse();
        let again = funnel(&active, &clusters, &accounts, |ip| asn.get(ip).copied()).unwrap();
        prop_assert_eq!(r, again);
    }

    #[test]
    fn score_stays_in_range(seq in prop::collection::vec(any::<bool>(), 0..200), start in -100.0f64..=20.0) {
        let mut s = start;
        for ok in seq {
            s = step_score(s, if ok { ProbeOutcome::Accurate } else { ProbeOutcome::Bad });
            prop_assert!((-100.0..=20.0).contains(&s));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn lpm_matches_linear_scan(
        routes in prop::collection::vec((any::<u32>(), 0u8..=32, 1u32..100), 0..40),
        routes6 in prop::collection::vec((any::<u128>(), 0u8..=128, 1u32..100), 0..20),
        probes in prop::collection::vec(any::<u32>(), 1..30),
    ) {
        let mut table = PrefixTable::new();
        let mut nets: Vec<(IpNet, u32)> = Vec::new();
        for (base, len, asn) in &routes {
            let net = IpNet::new(IpAddr::V4(Ipv4Addr::from(*base)), *len).unwrap().trunc();
            // a repeated prefix is rejected and the first origin kept
            if table.insert(net, *asn).is_ok() {
                nets.push((net, *asn));
            } else {
                prop_assert!(nets.iter().any(|(n, _)| *n == net));
            }
        }
        for (base, len, asn) in &routes6 {
            let net = IpNet::new(IpAddr::V6(Ipv6Addr::from(*base)), *len).unwrap().trunc();
            // a repeated prefix is rejected and the first origin kept
            if table.insert(net, *asn).is_ok() {
                nets.push((net, *asn));
            } else {
                prop_assert!(nets.iter().any(|(n, _)| *n == net));
            }
        }
        // probe near the announced prefixes as well as at random
        let mut targets: Vec<IpAddr> = probes.iter().map(|p| IpAddr::V4(Ipv4Addr::from(*p))).collect();
        targets.extend(nets.iter().map(|(n, _)| n.addr()));
        targets.extend(routes6.iter().map(|(b, _, _)| IpAddr::V6(Ipv6Addr::from(b ^ 1))));
        for t in &targets {
            let oracle = nets.iter().filter(|(n, _)| n.contains(t)).max_by_key(|(n, _)| n.prefix_len()).map(|(_, a)| *a);
            prop_assert_eq!(lpm_lookup(&table, t), oracle, "{}", t);
        }
    }

    #[test]
    fn shares_sum_to_one_and_scale_free(speeds in prop::collection::vec(0u64..=3_000_000, 1..30), k in 1u64..1000) {
        let zone = ZoneState::from_netspeeds("xx", &speeds);
        if zone.aggregate() == 0 {
            prop_assert!(zone.shares().is_err() || zone.shares().unwrap().is_empty());
            return Ok(());
        }
        let shares = zone.shares().unwrap();
        let sum: f64 = shares.iter().map(|(_, s)| s).sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        let scaled: Vec<u64> = speeds.iter().map(|s| s * k).collect();
        let scaled = ZoneState::from_netspeeds("xx", &scaled).shares().unwrap();
        for ((_, a), (_, b)) in shares.iter().zip(&scaled) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fraction_parse_matches_ratio((num, den) in fraction()) {
        let parsed: Fraction = format!("{num}/{den}").parse().unwrap();
        prop_assert_eq!(parsed, Fraction::from_ratio(num, den).unwrap());
        let f = Fraction::from_ratio(num, den).unwrap().to_f64();
        prop_assert!((f - num as f64 / den as f64).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn event_log_replays_to_live_state(
        edits in prop::collection::vec((1u64..12, -100i32..=20, prop::sample::select(vec![0u64, 1000, 25_000, 1_000_000]), any::<bool>()), 1..60),
        reopen_at in 0usize..60,
        snapshot_every in 1u64..20,
    ) {
        let dir = tempfile::tempdir().unwrap();
        let t0 = Utc.with_ymd_and_hms(2025, 7, 1, 0, 0, 0).unwrap();
        let mut store = Store::open(dir.path()).unwrap().with_snapshot_every(snapshot_every);
        for (i, (id, score, speed, deleted)) in edits.iter().enumerate() {
            if i == reopen_at {
                drop(store);
                store = Store::open(dir.path()).unwrap().with_snapshot_every(snapshot_every);
            }
            let at = t0 + Duration::minutes(i as i64);
            let first_seen = store.state().servers.get(id).map_or(at, |r| r.first_seen);
            let record = ServerRecord {
                server_id: *id,
                address: IpAddr::V4(Ipv4Addr::new(192, 0, 2, *id as u8)),
                zones: BTreeSet::from(["xx".to_string()]),
                score: f64::from(*score),
                netspeed_kbps: *speed,
                account: None,
                first_seen,
                last_seen: at,
                deleted: *deleted,
                monitor_only: *speed == 0,
            };
            store.record_server(at, record).unwrap();
        }
        let live = store.state().clone();
        drop(store);
        prop_assert_eq!(&replay(dir.path()).unwrap(), &live);
        let reopened = Store::open(dir.path()).unwrap();
        prop_assert_eq!(reopened.state(), &live);
    }

    #[test]
    fn synthetic_aliases_recovered(seed in any::<u64>(), hosts in 1usize..=200, max_k in 1usize..=13) {
        let pop = common::population(seed, hosts, max_k, 0.05);
        let clusters = build_clusters(&pop.fingerprints, &MatchKey::default());
        let (precision, recall) = common::pair_scores(&clusters, &pop.host_of);
        prop_assert_eq!(precision, 1.0);
        prop_assert!(recall >= 0.95, "recall {}", recall);
        let tally = alias_tally(&clusters);
        let s1_addrs = pop.host_of.values().filter(|h| pop.stratum1_hosts.contains(h)).count();
        prop_assert_eq!(tally.excluded_stratum1_addresses, s1_addrs);
        prop_assert_eq!(tally.addresses + s1_addrs, pop.host_of.len());
    }
}

#[test]
fn unix_epoch_in_ntp_era() {
    assert_eq!(poolscope::wire::unix_to_ntp(0).unwrap().to_u64() >> 32, 2_208_988_800);
    let f = Fraction::from_ratio(1, 2).unwrap();
    assert_eq!(captured_fraction(4_101_000, 3_000_000, 2).to_f64().unwrap(), 6_000_000.0 / 10_101_000.0);
    assert_eq!(attack_servers_required(4_101_000, 3_000_000, &f).unwrap(), 2);
}
