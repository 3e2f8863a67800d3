//! Runs the three-stage independence funnel on the bundled 6,242-server
//! fixture and prints account concentration and AS types.
//!
//! cargo run --example independence_funnel

use std::fs::File;
use std::io::BufReader;
use std::net::IpAddr;

use poolscope::fingerprint::{AliasCluster, ClusterRecord};
use poolscope::independence::{
    account_concentration, as_type_tally, funnel, read_account_map, read_as_types, PrefixTable,
};

fn open(name: &str) -> BufReader<File> {
    BufReader::new(File::open(format!("{}/fixtures/funnel/{name}", env!("CARGO_MANIFEST_DIR"))).expect("fixture"))
}

fn main() {
    let text = |n: &str| std::io::read_to_string(open(n)).unwrap();
    let active: Vec<IpAddr> = text("active.txt").lines().map(|l| l.parse().unwrap()).collect();
    let clusters: Vec<AliasCluster> = text("clusters.jsonl")
        .lines()
        .map(|l| serde_json::from_str::<ClusterRecord>(l).unwrap().into())
        .collect();
    let accounts = read_account_map(open("accounts.txt")).unwrap();
    let table = PrefixTable::read(open("prefixes.txt")).unwrap();

    let r = funnel(&active, &clusters, &accounts, |ip| table.lookup(ip)).unwrap();
    for (stage, n) in [
        ("active", r.total_active),
        ("unique hosts", r.after_dealias),
        ("unique operators", r.after_account),
        ("unique networks", r.after_asn),
    ] {
        println!("{stage:<17} {n:>5}  {:>5.1}%", 100.0 * n as f64 / r.total_active as f64);
    }
    println!("independent fraction {:.3}", r.independent_fraction);

    let c = account_concentration(active.iter().map(|a| accounts.get(a).map(String::as_str)));
    println!("\n{} accounts, {} servers without one; top 10 run {} servers", c.accounts, c.anonymous_servers, c.top10_servers);
    for (acct, n) in c.per_account.iter().take(3) {
        println!("  {acct}: {n}");
    }
    let types = read_as_types(open("as_types.txt")).unwrap();
    println!("{:?}", as_type_tally(&active, |ip| table.lookup(ip), &types));
}
