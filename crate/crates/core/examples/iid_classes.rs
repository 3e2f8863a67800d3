//! Classifies IPv6 interface identifiers and shows how the privacy
//! threshold moves addresses between classes.
//!
//! cargo run --example iid_classes -- [address ...]

use std::net::Ipv6Addr;

use poolscope::independence::{classify_iid, classify_iid_with, IidRules};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let addrs: Vec<Ipv6Addr> = if args.is_empty() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/v6-addresses.txt");
        std::fs::read_to_string(path).unwrap().lines().map(|l| l.parse().unwrap()).collect()
    } else {
        args.iter().map(|a| a.parse().expect("IPv6 address")).collect()
    };
    let strict = IidRules { privacy_min_set_bits: 36 };
    println!("{:<40} {:<11} with >= 36 set bits", "address", "class");
    for a in &addrs {
        println!("{:<40} {:<11} {}", a.to_string(), classify_iid(a).to_string(), classify_iid_with(a, &strict));
    }
}
