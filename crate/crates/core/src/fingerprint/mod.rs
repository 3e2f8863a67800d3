//! Active NTP fingerprinting and alias clustering.
//!
//! A [`Fingerprint`] is the tuple of header fields a server returns in a
//! mode-4 reply. Addresses whose fingerprints agree under a [`MatchKey`]
//! within a short time window are treated as NTP aliases: the same daemon
//! answering on several addresses. [`build_clusters`] takes the transitive
//! closure of that relation.

mod cluster;
mod consistency;
mod prefix;
pub mod probe;
pub mod responder;

use std::net::IpAddr;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::wire::{NtpPacket, NtpShort, NtpTimestamp};

pub use cluster::{alias_tally, build_clusters, AliasCluster, AliasTally, ClusterRecord};
pub use consistency::{classify_cluster, cluster_consistency, Consistency, ConsistencyTally};
pub use prefix::{covering_prefix, PrefixError};
pub use probe::{campaign_summary, probe, probe_all, CampaignSummary, ProbeError, ProbePlan};

/// IP-layer values seen on a reply. Too unstable to use by default.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WeakHints {
    pub ip_ttl_or_hoplimit: u8,
    pub dscp_or_trafficclass: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub address: IpAddr,
    pub collected_at: DateTime<Utc>,
    #[serde(default)]
    pub leap: u8,
    pub version: u8,
    pub stratum: u8,
    #[serde(rename = "refid_hex", with = "hex_bytes4")]
    pub refid: [u8; 4],
    pub precision: i8,
    pub poll: i8,
    #[serde(rename = "reference_ts_hex", with = "hex_ts")]
    pub reference_ts: NtpTimestamp,
    #[serde(rename = "root_dispersion_hex", with = "hex_short")]
    pub root_dispersion: NtpShort,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weak_hints: Option<WeakHints>,
}

impl Fingerprint {
    pub fn from_packet(address: IpAddr, collected_at: DateTime<Utc>, p: &NtpPacket) -> Self {
        Self {
            address,
            collected_at,
            leap: p.leap,
            version: p.version,
            stratum: p.stratum,
            refid: p.refid,
            precision: p.precision,
            poll: p.poll,
            reference_ts: p.reference_ts,
            root_dispersion: p.root_dispersion,
            weak_hints: None,
        }
    }

    pub fn is_stratum1(&self) -> bool {
        self.stratum == 1
    }

    /// The fields selected by `key`, in a comparable form.
    pub(crate) fn project(&self, key: &MatchKey) -> Projection {
        let pick = |on: bool, v: u64| on.then_some(v);
        let weak = self.weak_hints;
        Projection([
            pick(key.version, u64::from(self.version)),
            pick(key.stratum, u64::from(self.stratum)),
            pick(key.refid, u64::from(u32::from_be_bytes(self.refid))),
            pick(key.precision, self.precision as u8 as u64),
            pick(key.reference_ts, self.reference_ts.to_u64()),
            pick(key.poll, self.poll as u8 as u64),
            pick(key.root_dispersion, u64::from(self.root_dispersion.to_u32())),
            pick(key.leap, u64::from(self.leap)),
            if key.ip_ttl { Some(weak.map_or(u64::MAX, |w| u64::from(w.ip_ttl_or_hoplimit))) } else { None },
            if key.dscp { Some(weak.map_or(u64::MAX, |w| u64::from(w.dscp_or_trafficclass))) } else { None },
        ])
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) struct Projection([Option<u64>; 10]);

/// Which fields must agree for two fingerprints to match, and how far apart
/// in time two probes may be and still be compared.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchKey {
    pub version: bool,
    pub stratum: bool,
    pub refid: bool,
    pub precision: bool,
    pub reference_ts: bool,
    pub poll: bool,
    pub root_dispersion: bool,
    pub leap: bool,
    pub ip_ttl: bool,
    pub dscp: bool,
    #[serde(with = "secs")]
    pub window: Duration,
}

impl Default for MatchKey {
    fn default() -> Self {
        Self {
            version: true,
            stratum: true,
            refid: true,
            precision: true,
            reference_ts: true,
            poll: false,
            root_dispersion: false,
            leap: false,
            ip_ttl: false,
            dscp: false,
            window: Duration::from_secs(60),
        }
    }
}

impl MatchKey {
    /// Default key plus poll interval and the IP-layer hints.
    pub fn with_weak_fields(mut self) -> Self {
        self.poll = true;
        self.ip_ttl = true;
        self.dscp = true;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatchOutcome {
    Match,
    Mismatch,
    /// The probes were collected further apart than the key's window.
    Incomparable,
}

impl MatchOutcome {
    pub fn is_match(self) -> bool {
        self == MatchOutcome::Match
    }
}

pub fn fingerprints_match(a: &Fingerprint, b: &Fingerprint, key: &MatchKey) -> MatchOutcome {
    let gap = (a.collected_at - b.collected_at).abs();
    if gap.to_std().map_or(true, |g| g > key.window) {
        return MatchOutcome::Incomparable;
    }
    if a.project(key) == b.project(key) {
        MatchOutcome::Match
    } else {
        MatchOutcome::Mismatch
    }
}

mod hex_bytes4 {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 4], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 4], D::Error> {
        let s = String::deserialize(d)?;
        let mut out = [0u8; 4];
        hex::decode_to_slice(&s, &mut out).map_err(D::Error::custom)?;
        Ok(out)
    }
}

mod hex_ts {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    use crate::wire::NtpTimestamp;

    pub fn serialize<S: Serializer>(v: &NtpTimestamp, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:016x}", v.to_u64()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NtpTimestamp, D::Error> {
        let s = String::deserialize(d)?;
        u64::from_str_radix(&s, 16).map(NtpTimestamp::from_u64).map_err(D::Error::custom)
    }
}

mod hex_short {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    use crate::wire::NtpShort;

    pub fn serialize<S: Serializer>(v: &NtpShort, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:08x}", v.to_u32()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NtpShort, D::Error> {
        let s = String::deserialize(d)?;
        u32::from_str_radix(&s, 16).map(NtpShort::from_u32).map_err(D::Error::custom)
    }
}

pub(crate) mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(v.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Duration::try_from_secs_f64(f64::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}
