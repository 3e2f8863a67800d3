use std::collections::BTreeMap;
use std::net::IpAddr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ZoneWeighting;
use super::score::ACTIVE_SCORE;

pub const GLOBAL_ZONE: &str = "@";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimServer {
    pub address: IpAddr,
    pub zones: Vec<String>,
    pub netspeed_kbps: u64,
    pub score: f64,
    /// Serves correct time. Every shipped scenario keeps this true.
    pub truthful: bool,
    pub responsive: bool,
    /// Registered with the pool; removed servers never appear in answers.
    pub in_pool: bool,
    pub attacker: bool,
}

impl SimServer {
    pub fn new(address: IpAddr, zones: Vec<String>, netspeed_kbps: u64) -> Self {
        Self {
            address,
            zones,
            netspeed_kbps,
            score: 0.0,
            truthful: true,
            responsive: true,
            in_pool: true,
            attacker: false,
        }
    }

    pub fn eligible(&self) -> bool {
        self.in_pool && self.netspeed_kbps > 0 && self.score >= ACTIVE_SCORE
    }

    fn weight_in_zone(&self, weighting: ZoneWeighting) -> f64 {
        match weighting {
            ZoneWeighting::Full => self.netspeed_kbps as f64,
            ZoneWeighting::Split => self.netspeed_kbps as f64 / self.zones.len().max(1) as f64,
        }
    }
}

/// Answer to one DNS query: the zone that supplied it and indices into the
/// server roster, in answer order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Answer {
    pub zone: Option<String>,
    pub servers: Vec<usize>,
}

/// Successive proportional draws without replacement: up to `k` distinct
/// items, each drawn with probability proportional to its weight among the
/// items not yet drawn.
pub fn weighted_sample<R: Rng + ?Sized>(candidates: &[(usize, f64)], k: usize, rng: &mut R) -> Vec<usize> {
    let mut pool: Vec<(usize, f64)> = candidates.iter().copied().filter(|c| c.1 > 0.0).collect();
    let mut total: f64 = pool.iter().map(|c| c.1).sum();
    let mut out = Vec::with_capacity(k.min(pool.len()));
    while out.len() < k && !pool.is_empty() {
        let mut r = rng.random::<f64>() * total;
        let mut pick = pool.len() - 1;
        for (i, c) in pool.iter().enumerate() {
            if r < c.1 {
                pick = i;
                break;
            }
            r -= c.1;
        }
        let (idx, w) = pool.remove(pick);
        total -= w;
        if pool.is_empty() {
            total = 0.0;
        } else if total <= 0.0 {
            total = pool.iter().map(|c| c.1).sum();
        }
        out.push(idx);
    }
    out
}

#[derive(Clone, Debug)]
pub struct PoolState {
    pub servers: Vec<SimServer>,
    weighting: ZoneWeighting,
    continents: BTreeMap<String, String>,
    eligible: BTreeMap<String, Vec<(usize, f64)>>,
}

impl PoolState {
    pub fn new(servers: Vec<SimServer>, weighting: ZoneWeighting, continents: BTreeMap<String, String>) -> Self {
        let mut s = Self { servers, weighting, continents, eligible: BTreeMap::new() };
        s.refresh();
        s
    }

    /// Rebuilds the per-zone eligible lists after scores or membership change.
    pub fn refresh(&mut self) {
        self.eligible.clear();
        for (i, s) in self.servers.iter().enumerate() {
            if !s.eligible() {
                continue;
            }
            let w = s.weight_in_zone(self.weighting);
            for z in &s.zones {
                self.eligible.entry(z.clone()).or_default().push((i, w));
            }
        }
    }

    pub fn eligible_in(&self, zone: &str) -> &[(usize, f64)] {
        self.eligible.get(zone).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn continent_of(&self, country: &str) -> Option<&str> {
        self.continents.get(country).map(String::as_str)
    }

    /// Country zone first, then its continent, then the global zone.
    pub fn answering_zone<'a>(&'a self, country: &'a str) -> Option<&'a str> {
        [Some(country), self.continent_of(country), Some(GLOBAL_ZONE)]
            .into_iter()
            .flatten()
            .find(|z| !self.eligible_in(z).is_empty())
    }

    pub fn select_answer<R: Rng + ?Sized>(&self, country: &str, k: usize, rng: &mut R) -> Answer {
        match self.answering_zone(country) {
            Some(z) => Answer { zone: Some(z.to_string()), servers: weighted_sample(self.eligible_in(z), k, rng) },
            None => {
                log::trace!("no eligible servers for clients in {country}");
                Answer::default()
            }
        }
    }
}

/// Addresses for one query from `country`, as a convenience over
/// [`PoolState::select_answer`].
pub fn select_answer<R: Rng + ?Sized>(country: &str, state: &PoolState, rng: &mut R) -> Vec<IpAddr> {
    state.select_answer(country, 4, rng).servers.iter().map(|&i| state.servers[i].address).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn server(i: u8, zones: &[&str], kbps: u64) -> SimServer {
        let mut s = SimServer::new(IpAddr::from([192, 0, 2, i]), zones.iter().map(|z| z.to_string()).collect(), kbps);
        s.score = 20.0;
        s
    }

    #[test]
    fn falls_back_to_continent() {
        let servers = vec![server(1, &["de", "europe", "@"], 1000), server(2, &["fr", "europe", "@"], 1000)];
        let state = PoolState::new(servers, ZoneWeighting::Full, [("hu".into(), "europe".into())].into());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = state.select_answer("hu", 4, &mut rng);
        assert_eq!(a.zone.as_deref(), Some("europe"));
        assert_eq!(a.servers.len(), 2);
        // unknown country with no continent mapping goes global
        assert_eq!(state.select_answer("zz", 4, &mut rng).zone.as_deref(), Some("@"));
    }

    #[test]
    fn single_and_none() {
        let mut state = PoolState::new(vec![server(1, &["hu"], 1000)], ZoneWeighting::Full, BTreeMap::new());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(select_answer("hu", &state, &mut rng).len(), 1);
        state.servers[0].score = 9.9;
        state.refresh();
        assert!(select_answer("hu", &state, &mut rng).is_empty());
    }

    #[test]
    fn monitor_only_never_answered() {
        let state = PoolState::new(vec![server(1, &["hu"], 0), server(2, &["hu"], 512)], ZoneWeighting::Full, BTreeMap::new());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(select_answer("hu", &state, &mut rng), vec![IpAddr::from([192, 0, 2, 2])]);
        }
    }

    #[test]
    fn distinct_and_bounded() {
        let servers: Vec<_> = (1..=10).map(|i| server(i, &["hu"], 1000 * i as u64)).collect();
        let state = PoolState::new(servers, ZoneWeighting::Full, BTreeMap::new());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let mut a = select_answer("hu", &state, &mut rng);
            assert_eq!(a.len(), 4);
            a.sort();
            a.dedup();
            assert_eq!(a.len(), 4);
        }
    }
}
