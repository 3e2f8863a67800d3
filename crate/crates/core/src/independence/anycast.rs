use std::net::IpAddr;

pub const CONTINENT_ZONES: [&str; 7] =
    ["africa", "antarctica", "asia", "europe", "north-america", "oceania", "south-america"];

pub fn is_continent_zone(zone: &str) -> bool {
    CONTINENT_ZONES.contains(&zone)
}

/// Addresses registered in two or more distinct continent zones. Such
/// servers are likely anycast and need external confirmation.
pub fn anycast_candidates<'a, Z>(servers: impl IntoIterator<Item = (IpAddr, Z)>) -> Vec<IpAddr>
where
    Z: IntoIterator<Item = &'a str>,
{
    let mut out: Vec<IpAddr> = servers
        .into_iter()
        .filter_map(|(a, zones)| {
            let mut seen: Vec<&str> = zones.into_iter().filter(|z| is_continent_zone(z)).collect();
            seen.sort_unstable();
            seen.dedup();
            (seen.len() >= 2).then_some(a)
        })
        .collect();
    out.sort();
    out.dedup();
    out
}
