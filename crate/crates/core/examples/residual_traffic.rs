//! Daily queries reaching a server after it leaves the pool, with clients
//! that cache their server for a heavy-tailed time, and after its daemon
//! stops.
//!
//! cargo run --example residual_traffic

use poolscope::sim::{run, SimConfig};

fn main() {
    let path = format!("{}/fixtures/residual.toml", env!("CARGO_MANIFEST_DIR"));
    let cfg = SimConfig::from_toml(&std::fs::read_to_string(path).expect("fixture")).expect("scenario");
    let report = run(&cfg).expect("simulation");
    let stop_day = cfg.attack.as_ref().and_then(|a| Some((a.daemon_stop_hours? - a.removal_hours?) / 24.0));
    println!("day  queries");
    for (day, q) in report.summary.residual_daily.iter().enumerate() {
        let mark = if stop_day == Some(day as f64) { "  <- daemon stopped" } else { "" };
        println!("{day:>3}  {q:>8}{mark}");
    }
}
