//! Clusters the bundled fingerprint file and prints each cluster with its
//! covering prefixes, then the alias tally that excludes stratum-1 clusters.
//!
//! cargo run --example alias_clusters

use poolscope::fingerprint::{alias_tally, build_clusters, covering_prefix, Fingerprint, MatchKey};

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/fingerprints.jsonl");
    let fps: Vec<Fingerprint> = std::fs::read_to_string(path)
        .expect("fixture")
        .lines()
        .map(|l| serde_json::from_str(l).expect("fingerprint"))
        .collect();
    let clusters = build_clusters(&fps, &MatchKey::default());
    for (i, c) in clusters.iter().enumerate() {
        let cover: Vec<String> =
            [c.covering_prefix_v4, c.covering_prefix_v6].iter().flatten().map(|p| p.to_string()).collect();
        let flag = if c.contains_stratum1 { " (stratum 1, excluded)" } else { "" };
        println!("{i}: {} address(es) cover {}{flag}", c.len(), cover.join(" + "));
        for m in &c.members {
            println!("     {m}");
        }
    }
    println!("\n{}", serde_json::to_string_pretty(&alias_tally(&clusters)).unwrap());

    let prefix = covering_prefix(&["1.2.1.10".parse().unwrap(), "1.2.3.200".parse().unwrap(), "1.2.14.30".parse().unwrap()]);
    println!("covering prefix of the three-address host: {}", prefix.unwrap());
}
