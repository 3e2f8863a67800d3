use std::fmt;
use std::net::Ipv6Addr;

use serde::{Deserialize, Serialize};

/// Interface-identifier category of an IPv6 address.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IidClass {
    LowByte,
    EmbedIPv4,
    EmbedPort,
    EUI64,
    Privacy,
    Other,
}

impl IidClass {
    pub const ALL: [IidClass; 6] =
        [IidClass::LowByte, IidClass::EmbedIPv4, IidClass::EmbedPort, IidClass::EUI64, IidClass::Privacy, IidClass::Other];
}

impl fmt::Display for IidClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            IidClass::LowByte => "low-byte",
            IidClass::EmbedIPv4 => "embed-ipv4",
            IidClass::EmbedPort => "embed-port",
            IidClass::EUI64 => "eui64",
            IidClass::Privacy => "privacy",
            IidClass::Other => "other",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IidRules {
    /// Minimum number of set IID bits for a randomized (privacy) identifier.
    pub privacy_min_set_bits: u32,
}

impl Default for IidRules {
    fn default() -> Self {
        Self { privacy_min_set_bits: 28 }
    }
}

fn groups(iid: u64) -> [u16; 4] {
    [(iid >> 48) as u16, (iid >> 32) as u16, (iid >> 16) as u16, iid as u16]
}

fn plausible_v4_first_octet(o: u32) -> bool {
    (1..=223).contains(&o) && o != 127
}

/// `::a.b.c.d` with the high half of the IID zero.
fn embeds_v4_binary(iid: u64) -> bool {
    iid >> 32 == 0 && plausible_v4_first_octet((iid >> 24) as u32 & 0xff)
}

/// Each 16-bit group spells a decimal octet in hex digits, e.g.
/// `:192:168:1:10`. At most one zero group, so sparse identifiers such as
/// `1::123` are left to the later rules.
fn embeds_v4_decimal(iid: u64) -> bool {
    if groups(iid).iter().filter(|&&g| g == 0).count() > 1 {
        return false;
    }
    let mut octets = [0u32; 4];
    for (o, g) in octets.iter_mut().zip(groups(iid)) {
        let text = format!("{g:x}");
        if !text.bytes().all(|c| c.is_ascii_digit()) {
            return false;
        }
        *o = text.parse().unwrap_or(u32::MAX);
        if *o > 255 {
            return false;
        }
    }
    plausible_v4_first_octet(octets[0])
}

/// Port 123 in the low group, written either as 0x007b or as the
/// hex-spelled decimal 0x0123, with few other bits set.
fn embeds_ntp_port(iid: u64) -> bool {
    let low = iid as u16;
    (low == 123 || low == 0x0123) && (iid >> 16).count_ones() <= 8
}

fn structured(iid: u64) -> bool {
    groups(iid).iter().any(|&g| g == 0 || g == 0xffff)
}

/// Classifies the low 64 bits of `addr`, checking categories in the fixed
/// order EUI-64, embedded IPv4, embedded port, low-byte, privacy.
pub fn classify_iid_with(addr: &Ipv6Addr, rules: &IidRules) -> IidClass {
    let iid = u128::from(*addr) as u64;
    let bytes = iid.to_be_bytes();
    if bytes[3] == 0xff && bytes[4] == 0xfe {
        IidClass::EUI64
    } else if embeds_v4_binary(iid) || embeds_v4_decimal(iid) {
        IidClass::EmbedIPv4
    } else if embeds_ntp_port(iid) {
        IidClass::EmbedPort
    } else if iid >> 16 == 0 {
        IidClass::LowByte
    } else if iid.count_ones() >= rules.privacy_min_set_bits && !structured(iid) {
        IidClass::Privacy
    } else {
        IidClass::Other
    }
}

pub fn classify_iid(addr: &Ipv6Addr) -> IidClass {
    classify_iid_with(addr, &IidRules::default())
}
