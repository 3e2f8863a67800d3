//! NTP header codec and timestamp arithmetic.
//!
//! Only the fixed 48-byte header is handled. Extension fields and MACs that
//! follow it are ignored on decode and never emitted on encode. Timestamps are
//! limited to NTP era 0 (1900-01-01 through 2036-02-07).

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Size of the fixed NTP header on the wire.
pub const HEADER_LEN: usize = 48;

/// Seconds between 1900-01-01 and 1970-01-01.
pub const UNIX_EPOCH_OFFSET: i64 = 2_208_988_800;

pub const MODE_CLIENT: u8 = 3;
pub const MODE_SERVER: u8 = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("truncated packet: {0} bytes, need {HEADER_LEN}")]
    Truncated(usize),
    #[error("field `{field}` out of range: {value}")]
    OutOfRange { field: &'static str, value: u8 },
    #[error("unsupported NTP version {0}")]
    Version(u8),
    #[error("time {0} is outside NTP era 0")]
    Era(i64),
}

/// 64-bit NTP timestamp: seconds since 1900 plus a 32-bit binary fraction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NtpTimestamp {
    pub seconds: u32,
    pub fraction: u32,
}

impl NtpTimestamp {
    pub const fn new(seconds: u32, fraction: u32) -> Self {
        Self { seconds, fraction }
    }

    pub fn to_bytes(self) -> [u8; 8] {
        self.to_u64().to_be_bytes()
    }

    pub fn from_bytes(b: [u8; 8]) -> Self {
        Self::from_u64(u64::from_be_bytes(b))
    }

    pub fn to_u64(self) -> u64 {
        (u64::from(self.seconds) << 32) | u64::from(self.fraction)
    }

    pub fn from_u64(v: u64) -> Self {
        Self { seconds: (v >> 32) as u32, fraction: v as u32 }
    }

    /// Converts a Unix time in whole seconds. The fraction is zero.
    pub fn from_unix(unix_seconds: i64) -> Result<Self, WireError> {
        let ntp = unix_seconds.checked_add(UNIX_EPOCH_OFFSET).ok_or(WireError::Era(unix_seconds))?;
        u32::try_from(ntp).map(|seconds| Self { seconds, fraction: 0 }).map_err(|_| WireError::Era(unix_seconds))
    }

    /// Whole Unix seconds; the fraction is truncated.
    pub fn to_unix(self) -> i64 {
        i64::from(self.seconds) - UNIX_EPOCH_OFFSET
    }

    /// Converts a wall-clock instant, keeping sub-second precision.
    pub fn from_datetime(t: chrono::DateTime<chrono::Utc>) -> Result<Self, WireError> {
        let mut ts = Self::from_unix(t.timestamp())?;
        let nanos = u64::from(t.timestamp_subsec_nanos());
        ts.fraction = ((nanos << 32) / 1_000_000_000) as u32;
        Ok(ts)
    }
}

impl fmt::Display for NtpTimestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.to_u64())
    }
}

pub fn unix_to_ntp(unix_seconds: i64) -> Result<NtpTimestamp, WireError> {
    NtpTimestamp::from_unix(unix_seconds)
}

pub fn ntp_to_unix(ts: NtpTimestamp) -> i64 {
    ts.to_unix()
}

/// 32-bit NTP short format (16.16 fixed point) used for root delay and dispersion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NtpShort {
    pub seconds: u16,
    pub fraction: u16,
}

impl NtpShort {
    pub const fn new(seconds: u16, fraction: u16) -> Self {
        Self { seconds, fraction }
    }

    pub fn to_bytes(self) -> [u8; 4] {
        self.to_u32().to_be_bytes()
    }

    pub fn from_bytes(b: [u8; 4]) -> Self {
        Self::from_u32(u32::from_be_bytes(b))
    }

    pub fn to_u32(self) -> u32 {
        (u32::from(self.seconds) << 16) | u32::from(self.fraction)
    }

    pub fn from_u32(v: u32) -> Self {
        Self { seconds: (v >> 16) as u16, fraction: v as u16 }
    }

    pub fn as_secs_f64(self) -> f64 {
        f64::from(self.seconds) + f64::from(self.fraction) / 65536.0
    }
}

/// The fixed NTP header, field order as in RFC 5905.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct NtpPacket {
    pub leap: u8,
    pub version: u8,
    pub mode: u8,
    pub stratum: u8,
    pub poll: i8,
    pub precision: i8,
    pub root_delay: NtpShort,
    pub root_dispersion: NtpShort,
    pub refid: [u8; 4],
    pub reference_ts: NtpTimestamp,
    pub origin_ts: NtpTimestamp,
    pub receive_ts: NtpTimestamp,
    pub transmit_ts: NtpTimestamp,
}

impl NtpPacket {
    /// A minimal version-4 client request carrying `transmit` so the reply
    /// can be matched through its origin timestamp.
    pub fn client_request(transmit: NtpTimestamp) -> Self {
        Self { version: 4, mode: MODE_CLIENT, transmit_ts: transmit, ..Self::default() }
    }

    pub fn encode(&self) -> Result<[u8; HEADER_LEN], WireError> {
        encode_packet(self)
    }

    pub fn decode(b: &[u8]) -> Result<Self, WireError> {
        decode_packet(b)
    }
}

/// Serializes the header. The version field is written as given (at most 4);
/// probes built with [`NtpPacket::client_request`] carry version 4.
pub fn encode_packet(p: &NtpPacket) -> Result<[u8; HEADER_LEN], WireError> {
    if p.leap > 3 {
        return Err(WireError::OutOfRange { field: "leap", value: p.leap });
    }
    if p.version > 4 {
        return Err(WireError::OutOfRange { field: "version", value: p.version });
    }
    if p.mode > 7 {
        return Err(WireError::OutOfRange { field: "mode", value: p.mode });
    }
    let mut b = [0u8; HEADER_LEN];
    b[0] = (p.leap << 6) | (p.version << 3) | p.mode;
    b[1] = p.stratum;
    b[2] = p.poll as u8;
    b[3] = p.precision as u8;
    b[4..8].copy_from_slice(&p.root_delay.to_bytes());
    b[8..12].copy_from_slice(&p.root_dispersion.to_bytes());
    b[12..16].copy_from_slice(&p.refid);
    b[16..24].copy_from_slice(&p.reference_ts.to_bytes());
    b[24..32].copy_from_slice(&p.origin_ts.to_bytes());
    b[32..40].copy_from_slice(&p.receive_ts.to_bytes());
    b[40..48].copy_from_slice(&p.transmit_ts.to_bytes());
    Ok(b)
}

/// Parses the first 48 bytes. Any stratum and refid are accepted verbatim.
pub fn decode_packet(b: &[u8]) -> Result<NtpPacket, WireError> {
    if b.len() < HEADER_LEN {
        return Err(WireError::Truncated(b.len()));
    }
    let word = |i: usize| [b[i], b[i + 1], b[i + 2], b[i + 3]];
    let dword = |i: usize| {
        let mut a = [0u8; 8];
        a.copy_from_slice(&b[i..i + 8]);
        NtpTimestamp::from_bytes(a)
    };
    Ok(NtpPacket {
        leap: b[0] >> 6,
        version: (b[0] >> 3) & 0x07,
        mode: b[0] & 0x07,
        stratum: b[1],
        poll: b[2] as i8,
        precision: b[3] as i8,
        root_delay: NtpShort::from_bytes(word(4)),
        root_dispersion: NtpShort::from_bytes(word(8)),
        refid: word(12),
        reference_ts: dword(16),
        origin_ts: dword(24),
        receive_ts: dword(32),
        transmit_ts: dword(40),
    })
}

/// Like [`decode_packet`] but also requires a version in 1..=4, as a reply
/// from a real server would carry.
pub fn decode_response(b: &[u8]) -> Result<NtpPacket, WireError> {
    let p = decode_packet(b)?;
    if !(1..=4).contains(&p.version) {
        return Err(WireError::Version(p.version));
    }
    Ok(p)
}

/// What a refid says about the server's time source.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RefidLabel {
    /// Stratum 0/1 reference clock name, e.g. `GPS`.
    Clock { label: String },
    /// Stratum 0/1 refid with non-printable bytes, rendered as hex.
    Nonstandard { hex: String },
    /// Stratum >= 2: an upstream IPv4 address or the hash of an IPv6 one.
    PeerHint { raw: [u8; 4] },
}

pub fn refid_label(stratum: u8, refid: [u8; 4]) -> RefidLabel {
    if stratum >= 2 {
        return RefidLabel::PeerHint { raw: refid };
    }
    let end = refid.iter().rposition(|&c| c != 0).map_or(0, |i| i + 1);
    let body = &refid[..end];
    if body.iter().all(|c| c.is_ascii_graphic() || *c == b' ') {
        RefidLabel::Clock { label: String::from_utf8_lossy(body).into_owned() }
    } else {
        RefidLabel::Nonstandard { hex: hex::encode(refid) }
    }
}
