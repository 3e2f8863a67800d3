//! Minimal monopoly plans: the .hu zone, a sweep over the bundled
//! 100-zone fixture, and the global query rate implied by answer counters.
//!
//! cargo run --example attack_planner

use poolscope::apportion::{
    attack_servers_required, captured_fraction, global_query_rate, read_zones_csv, robustness_sweep, Fraction,
    MAX_NETSPEED_KBPS,
};

fn main() {
    let half: Fraction = "1/2".parse().unwrap();
    let n = 4_101_000;
    let s = attack_servers_required(n, MAX_NETSPEED_KBPS, &half).unwrap();
    let got = captured_fraction(n, MAX_NETSPEED_KBPS, s);
    println!("hu: n = {n} kbps, m = {MAX_NETSPEED_KBPS} kbps -> S = {s}, captured {got} ({:.1}%)", 100.0 * to_f64(&got));
    for f in ["0.25", "0.75", "0.9", "0.99"] {
        let frac: Fraction = f.parse().unwrap();
        println!("  f = {f:<4} -> S = {}", attack_servers_required(n, MAX_NETSPEED_KBPS, &frac).unwrap());
    }

    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/zones.csv");
    let zones = read_zones_csv(std::fs::File::open(path).expect("fixture")).expect("zones");
    let sweep = robustness_sweep(&zones, MAX_NETSPEED_KBPS, &half).unwrap();
    let sum = &sweep.summary;
    println!(
        "\n{} zones: median S = {}, 90th percentile = {}, max = {}, {:.0}% need one server",
        sum.zones,
        sum.median,
        sum.p90,
        sum.max,
        100.0 * sum.single_server_fraction
    );
    for (s, frac) in sum.cdf.iter().take(10) {
        println!("  S <= {s:>2}: {:>5.1}%", 100.0 * frac);
    }

    let q = global_query_rate(389_257.0, 34_399.0);
    println!("\nglobal: {q:.0} DNS queries/s from 389,257 + 34,399 answered servers/s");
}

fn to_f64(r: &num_rational::BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap()
}
