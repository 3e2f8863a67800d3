//! Replays the .hu monopoly experiment: six incumbents, then two 3 Gbps
//! servers join. Prints expected netspeed shares next to simulated answer
//! shares, with and without the attackers joining the continent and global
//! zones.
//!
//! cargo run --example hu_replication

use poolscope::apportion::{expected_share, ZoneState};
use poolscope::sim::{run, SimConfig};

fn load(name: &str) -> SimConfig {
    let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    SimConfig::from_toml(&std::fs::read_to_string(path).expect("fixture")).expect("scenario")
}

fn main() {
    let before = [1_000_000, 1_000_000, 1_000_000, 1_000_000, 100_000, 1_500];
    let after: Vec<u64> = before.iter().copied().chain([3_000_000, 3_000_000]).collect();
    for (label, speeds) in [("before", &before[..]), ("after", &after[..])] {
        let zone = ZoneState::from_netspeeds("hu", speeds);
        let shares: Vec<String> = speeds
            .iter()
            .map(|&s| format!("{:.1}%", 100.0 * expected_share(s, &zone).unwrap()))
            .collect();
        println!("netspeed shares {label:>6}: {}", shares.join(" "));
    }

    for name in ["hu.toml", "hu-multizone.toml"] {
        let report = run(&load(name)).expect("simulation");
        let s = &report.summary;
        println!("\n{name}: {} DNS queries", s.dns_queries);
        println!(
            "  attackers: expected {:.1}%, first-position {:.1}%, included {:.1}% of addresses",
            100.0 * s.expected_attacker_share.unwrap_or(0.0),
            100.0 * s.attacker_share.unwrap_or(0.0),
            100.0 * s.attacker_inclusion_share.unwrap_or(0.0),
        );
        let last = s.windows;
        for (addr, (first, incl)) in report.zone_shares("hu", 12, last) {
            println!("  {addr:<16} first {:>5.1}%  included {:>5.1}%", 100.0 * first, 100.0 * incl);
        }
    }
}
