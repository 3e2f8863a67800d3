//! Netspeed apportionment and the monopoly-attack planner.
//!
//! A zone hands out its servers in proportion to netspeed: a server's
//! expected share of DNS answers is its netspeed over the zone's aggregate.
//! An attacker adding `S` servers at the maximum netspeed `m` to a zone with
//! aggregate `n` captures `S·m / (n + S·m)`. The planner finds the smallest
//! `S` reaching a target fraction `f`, in exact rational arithmetic so the
//! ceiling never flips on a rounding error.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::net::IpAddr;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest netspeed a single server may be configured with, in kbps.
pub const MAX_NETSPEED_KBPS: u64 = 3_000_000;

#[derive(Debug, Error)]
pub enum ApportionError {
    #[error("fraction must lie strictly between 0 and 1, got {0}")]
    Domain(String),
    #[error("maximum netspeed must be positive")]
    ZeroMaxNetspeed,
    #[error("zone `{0}` has no active netspeed")]
    UndefinedShare(String),
    #[error("{0} kbps is not a selectable netspeed")]
    NotOnMenu(u64),
    #[error("zone fixture line {line}: {msg}")]
    Fixture { line: usize, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// The operator-selectable netspeed menu, in kbps (decimal prefixes, so
/// 3 Gbps is 3,000,000).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct NetSpeed(u64);

impl NetSpeed {
    pub const MENU: [u64; 15] = [
        0, 512, 1_500, 3_000, 6_000, 12_000, 25_000, 50_000, 100_000, 250_000, 500_000, 1_000_000, 1_500_000,
        2_000_000, 3_000_000,
    ];
    pub const MONITOR_ONLY: NetSpeed = NetSpeed(0);

    pub fn new(kbps: u64) -> Result<Self, ApportionError> {
        if Self::MENU.contains(&kbps) {
            Ok(Self(kbps))
        } else {
            Err(ApportionError::NotOnMenu(kbps))
        }
    }

    pub fn kbps(self) -> u64 {
        self.0
    }

    pub fn is_monitor_only(self) -> bool {
        self.0 == 0
    }
}

impl TryFrom<u64> for NetSpeed {
    type Error = ApportionError;

    fn try_from(v: u64) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<NetSpeed> for u64 {
    fn from(v: NetSpeed) -> u64 {
        v.0
    }
}

/// A target fraction held as an exact rational.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Fraction(BigRational);

impl Fraction {
    /// Exact binary value of `f`.
    pub fn from_f64(f: f64) -> Result<Self, ApportionError> {
        let r = BigRational::from_float(f).ok_or_else(|| ApportionError::Domain(f.to_string()))?;
        Self::checked(r, || f.to_string())
    }

    pub fn from_ratio(num: i64, den: i64) -> Result<Self, ApportionError> {
        if den == 0 {
            return Err(ApportionError::Domain(format!("{num}/{den}")));
        }
        Self::checked(BigRational::new(num.into(), den.into()), || format!("{num}/{den}"))
    }

    fn checked(r: BigRational, show: impl Fn() -> String) -> Result<Self, ApportionError> {
        if r.is_positive() && r < BigRational::one() {
            Ok(Self(r))
        } else {
            Err(ApportionError::Domain(show()))
        }
    }

    pub fn as_rational(&self) -> &BigRational {
        &self.0
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
}

impl FromStr for Fraction {
    type Err = ApportionError;

    /// Parses decimal (`0.5`, `.25`) or ratio (`1/3`) notation exactly.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ApportionError::Domain(s.to_string());
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            return Self::checked(BigRational::new(n, d), || s.to_string());
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if !(int.chars().all(|c| c.is_ascii_digit()) && frac.chars().all(|c| c.is_ascii_digit()))
            || (int.is_empty() && frac.is_empty())
        {
            return Err(bad());
        }
        let digits: BigInt = format!("{int}{frac}").parse().map_err(|_| bad())?;
        let scale = num_traits::pow(BigInt::from(10), frac.len());
        Self::checked(BigRational::new(digits, scale), || s.to_string())
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneServer {
    pub address: IpAddr,
    pub netspeed_kbps: u64,
    pub active: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneState {
    pub zone: String,
    pub servers: Vec<ZoneServer>,
}

impl ZoneState {
    pub fn new(zone: impl Into<String>, servers: Vec<ZoneServer>) -> Self {
        Self { zone: zone.into(), servers }
    }

    /// Builds an all-active zone from bare netspeeds, using documentation
    /// addresses.
    pub fn from_netspeeds(zone: impl Into<String>, kbps: &[u64]) -> Self {
        let servers = kbps
            .iter()
            .enumerate()
            .map(|(i, &k)| ZoneServer {
                address: IpAddr::V6(std::net::Ipv6Addr::new(0x2001, 0xdb8, 0, 0, 0, 0, 0, i as u16 + 1)),
                netspeed_kbps: k,
                active: true,
            })
            .collect();
        Self::new(zone, servers)
    }

    /// Sum of netspeed over active servers; the `n` of the planner.
    pub fn aggregate(&self) -> u64 {
        self.servers.iter().filter(|s| s.active).map(|s| s.netspeed_kbps).sum()
    }

    /// Expected share of every active, non-monitor-only server.
    pub fn shares(&self) -> Result<Vec<(IpAddr, f64)>, ApportionError> {
        self.servers
            .iter()
            .filter(|s| s.active && s.netspeed_kbps > 0)
            .map(|s| expected_share(s.netspeed_kbps, self).map(|x| (s.address, x)))
            .collect()
    }
}

pub fn expected_share(speed_kbps: u64, zone: &ZoneState) -> Result<f64, ApportionError> {
    let n = zone.aggregate();
    if n == 0 {
        return Err(ApportionError::UndefinedShare(zone.zone.clone()));
    }
    Ok(speed_kbps as f64 / n as f64)
}

/// Exact share as a rational.
pub fn expected_share_exact(speed_kbps: u64, zone: &ZoneState) -> Result<BigRational, ApportionError> {
    let n = zone.aggregate();
    if n == 0 {
        return Err(ApportionError::UndefinedShare(zone.zone.clone()));
    }
    Ok(BigRational::new(speed_kbps.into(), n.into()))
}

/// `S·m / (n + S·m)` exactly.
pub fn captured_fraction(n: u64, m: u64, s: u64) -> BigRational {
    let sm = BigInt::from(s) * BigInt::from(m);
    let total = BigInt::from(n) + &sm;
    if total.is_zero() {
        return BigRational::zero();
    }
    BigRational::new(sm, total)
}

/// Smallest number of servers at netspeed `m` that capture at least `f` of a
/// zone whose aggregate is `n`: `ceil(n·f / (m·(1−f)))`, raised to 1 when
/// the zone is empty.
pub fn attack_servers_required(n: u64, m: u64, f: &Fraction) -> Result<u64, ApportionError> {
    if m == 0 {
        return Err(ApportionError::ZeroMaxNetspeed);
    }
    let f = f.as_rational();
    let num = BigRational::from_integer(n.into()) * f;
    let den = BigRational::from_integer(m.into()) * (BigRational::one() - f);
    let s = (num / den).ceil().to_integer();
    let s = s.to_u64().expect("server count fits in u64");
    Ok(s.max(1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackPlan {
    pub zone: String,
    pub n: u64,
    pub m: u64,
    pub f: f64,
    #[serde(rename = "S")]
    pub servers: u64,
    pub achieved: f64,
}

pub fn plan_attack(zone: &ZoneState, m: u64, f: &Fraction) -> Result<AttackPlan, ApportionError> {
    let n = zone.aggregate();
    let servers = attack_servers_required(n, m, f)?;
    Ok(AttackPlan {
        zone: zone.zone.clone(),
        n,
        m,
        f: f.to_f64(),
        servers,
        achieved: captured_fraction(n, m, servers).to_f64().unwrap_or(f64::NAN),
    })
}

/// Distribution of required server counts over zones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub zones: usize,
    /// (S, fraction of zones needing at most S), ascending in S.
    pub cdf: Vec<(u64, f64)>,
    pub median: u64,
    pub p90: u64,
    pub max: u64,
    pub single_server_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub plans: Vec<AttackPlan>,
    pub summary: SweepSummary,
}

/// Nearest-rank percentile of an ascending slice.
fn nearest_rank(sorted: &[u64], p: f64) -> u64 {
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

pub fn robustness_sweep(zones: &[ZoneState], m: u64, f: &Fraction) -> Result<Sweep, ApportionError> {
    let plans = zones.iter().map(|z| plan_attack(z, m, f)).collect::<Result<Vec<_>, _>>()?;
    let mut counts: Vec<u64> = plans.iter().map(|p| p.servers).collect();
    counts.sort_unstable();
    let total = counts.len();
    let mut hist: BTreeMap<u64, usize> = BTreeMap::new();
    for &c in &counts {
        *hist.entry(c).or_default() += 1;
    }
    let mut acc = 0usize;
    let cdf = hist
        .into_iter()
        .map(|(s, k)| {
            acc += k;
            (s, acc as f64 / total as f64)
        })
        .collect();
    let summary = if total == 0 {
        SweepSummary { zones: 0, cdf, median: 0, p90: 0, max: 0, single_server_fraction: 0.0 }
    } else {
        SweepSummary {
            zones: total,
            cdf,
            median: nearest_rank(&counts, 0.5),
            p90: nearest_rank(&counts, 0.9),
            max: *counts.last().unwrap(),
            single_server_fraction: counts.iter().filter(|&&c| c == 1).count() as f64 / total as f64,
        }
    };
    Ok(Sweep { plans, summary })
}

/// DNS queries per second implied by answer rates, given up to four
/// addresses per response.
pub fn global_query_rate(v4_servers_per_sec: f64, v6_servers_per_sec: f64) -> f64 {
    (v4_servers_per_sec + v6_servers_per_sec) / 4.0
}

/// Sums per-zone (v4, v6) answer rates, then applies [`global_query_rate`].
pub fn global_query_rate_from_zones<'a>(rates: impl IntoIterator<Item = &'a (f64, f64)>) -> f64 {
    let (v4, v6) = rates.into_iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    global_query_rate(v4, v6)
}

#[derive(Debug, Deserialize)]
struct ZoneRow {
    zone: String,
    address: IpAddr,
    netspeed_kbps: u64,
    active: String,
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" => Some(true),
        "0" | "false" | "no" | "n" => Some(false),
        _ => None,
    }
}

/// Reads `zone,address,netspeed_kbps,active` rows (with header) into zones,
/// ordered by zone code.
pub fn read_zones_csv(r: impl Read) -> Result<Vec<ZoneState>, ApportionError> {
    let mut zones: BTreeMap<String, Vec<ZoneServer>> = BTreeMap::new();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(r);
    for (i, row) in rdr.deserialize::<ZoneRow>().enumerate() {
        let row = row?;
        let active = parse_bool(&row.active)
            .ok_or_else(|| ApportionError::Fixture { line: i + 2, msg: format!("bad active flag `{}`", row.active) })?;
        zones.entry(row.zone).or_default().push(ZoneServer {
            address: row.address,
            netspeed_kbps: row.netspeed_kbps,
            active,
        });
    }
    Ok(zones.into_iter().map(|(z, s)| ZoneState::new(z, s)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half() -> Fraction {
        Fraction::from_ratio(1, 2).unwrap()
    }

    /// Linear scan for the smallest S with S·m/(n+S·m) >= f.
    fn brute_force(n: u64, m: u64, f: &Fraction) -> u64 {
        (1u64..).find(|&s| &captured_fraction(n, m, s) >= f.as_rational()).unwrap()
    }

    #[test]
    fn worked_share_example() {
        let z = ZoneState::from_netspeeds("xx", &[25_000, 25_000, 25_000, 25_000, 100_000]);
        let shares: Vec<f64> = z.shares().unwrap().into_iter().map(|(_, s)| s).collect();
        assert_eq!(shares, vec![0.125, 0.125, 0.125, 0.125, 0.5]);
        assert_eq!(expected_share_exact(25_000, &z).unwrap(), BigRational::new(1.into(), 8.into()));
        let solo = ZoneState::from_netspeeds("yy", &[512]);
        assert_eq!(expected_share(512, &solo).unwrap(), 1.0);
    }

    #[test]
    fn inactive_and_monitor_only_do_not_count() {
        let mut z = ZoneState::from_netspeeds("xx", &[1000, 0, 3000]);
        z.servers[2].active = false;
        assert_eq!(z.aggregate(), 1000);
        assert_eq!(z.shares().unwrap().len(), 1);
    }

    #[test]
    fn empty_zone_share_undefined() {
        let z = ZoneState::new("aq", vec![]);
        assert!(matches!(expected_share(1, &z), Err(ApportionError::UndefinedShare(_))));
    }

    #[test]
    fn hungary_plan() {
        let s = attack_servers_required(4_101_000, MAX_NETSPEED_KBPS, &half()).unwrap();
        assert_eq!(s, 2);
        let achieved = captured_fraction(4_101_000, MAX_NETSPEED_KBPS, 2).to_f64().unwrap();
        assert!((achieved - 0.594).abs() < 0.0005, "{achieved}");
    }

    #[test]
    fn symmetric_and_empty_edges() {
        assert_eq!(attack_servers_required(3_000_000, 3_000_000, &half()).unwrap(), 1);
        assert_eq!(attack_servers_required(0, 3_000_000, &half()).unwrap(), 1);
        assert_eq!(attack_servers_required(0, 3_000_000, &"0.999".parse().unwrap()).unwrap(), 1);
    }

    #[test]
    fn exact_ceiling_boundary() {
        // n·f / (m·(1−f)) is exactly 3 here; floating point gives 3.0000000000000004
        let f: Fraction = "0.6".parse().unwrap();
        assert_eq!(attack_servers_required(2_000_000, 1_000_000, &f).unwrap(), 3);
        assert_eq!(brute_force(2_000_000, 1_000_000, &f), 3);
    }

    #[test]
    fn fraction_parsing() {
        assert_eq!("0.5".parse::<Fraction>().unwrap(), half());
        assert_eq!(".5".parse::<Fraction>().unwrap(), half());
        assert_eq!("1/2".parse::<Fraction>().unwrap(), half());
        for bad in ["0", "1", "1.0", "-0.2", "abc", "", "2/0", "1e-3"] {
            assert!(bad.parse::<Fraction>().is_err(), "{bad}");
        }
        assert!(Fraction::from_f64(1.0).is_err());
        assert!(Fraction::from_f64(f64::NAN).is_err());
        assert!(attack_servers_required(1, 0, &half()).is_err());
    }

    #[test]
    fn netspeed_menu() {
        assert_eq!(NetSpeed::new(MAX_NETSPEED_KBPS).unwrap().kbps(), *NetSpeed::MENU.last().unwrap());
        assert!(NetSpeed::new(3_072_000).is_err());
        assert!(NetSpeed::new(0).unwrap().is_monitor_only());
    }

    #[test]
    fn sweep_half_small_zones() {
        let zones: Vec<_> = (0..10)
            .map(|i| ZoneState::from_netspeeds(format!("z{i}"), &[if i < 5 { 1_000_000 } else { 30_000_000 }]))
            .collect();
        let sweep = robustness_sweep(&zones, MAX_NETSPEED_KBPS, &half()).unwrap();
        let ones = sweep.plans.iter().filter(|p| p.servers == 1).count();
        assert!(ones >= 5);
        assert_eq!(sweep.summary.single_server_fraction, 0.5);
        assert_eq!(sweep.summary.max, 10);
    }

    #[test]
    fn sweep_all_empty() {
        let zones: Vec<_> = (0..4).map(|i| ZoneState::new(format!("e{i}"), vec![])).collect();
        let sweep = robustness_sweep(&zones, MAX_NETSPEED_KBPS, &half()).unwrap();
        assert!(sweep.plans.iter().all(|p| p.servers == 1));
        assert_eq!(sweep.summary.cdf, vec![(1, 1.0)]);
    }

    #[test]
    fn query_rate() {
        assert_eq!(global_query_rate(389_257.0, 34_399.0), 105_914.0);
        assert_eq!(global_query_rate(0.0, 0.0), 0.0);
        assert_eq!(global_query_rate(400.0, 0.0), 100.0);
        assert_eq!(global_query_rate_from_zones(&[(194_653.0, 17_201.0), (54_924.0, 4_804.0)]), 67_895.5);
    }

    #[test]
    fn zones_csv() {
        let text = "zone,address,netspeed_kbps,active\n\
                    hu,2001:db8::1,1024000,true\n\
                    hu,2001:db8::2,0,true\n\
                    de,192.0.2.1,512,false\n";
        let zones = read_zones_csv(text.as_bytes()).unwrap();
        assert_eq!(zones.len(), 2);
        assert_eq!(zones[0].zone, "de");
        assert_eq!(zones[0].aggregate(), 0);
        assert_eq!(zones[1].aggregate(), 1_024_000);
        let bad = "zone,address,netspeed_kbps,active\nhu,2001:db8::1,5,maybe\n";
        assert!(read_zones_csv(bad.as_bytes()).is_err());
    }
}
