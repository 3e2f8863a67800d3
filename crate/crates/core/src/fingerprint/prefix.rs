use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use ipnet::{IpNet, Ipv4Net, Ipv6Net};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PrefixError {
    #[error("no addresses given")]
    Empty,
    #[error("addresses span both IPv4 and IPv6")]
    MixedFamily,
}

/// Most specific prefix containing every address. All addresses must be of
/// one family.
pub fn covering_prefix(members: &[IpAddr]) -> Result<IpNet, PrefixError> {
    let first = members.first().ok_or(PrefixError::Empty)?;
    match first {
        IpAddr::V4(_) => {
            let bits = members
                .iter()
                .map(|a| match a {
                    IpAddr::V4(v) => Ok(u32::from(*v)),
                    IpAddr::V6(_) => Err(PrefixError::MixedFamily),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let (base, len) = common_prefix(bits.iter().map(|&b| u128::from(b) << 96), 32);
            let net = Ipv4Net::new(Ipv4Addr::from((base >> 96) as u32), len).expect("len <= 32");
            Ok(IpNet::V4(net))
        }
        IpAddr::V6(_) => {
            let bits = members
                .iter()
                .map(|a| match a {
                    IpAddr::V6(v) => Ok(u128::from(*v)),
                    IpAddr::V4(_) => Err(PrefixError::MixedFamily),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let (base, len) = common_prefix(bits.into_iter(), 128);
            Ok(IpNet::V6(Ipv6Net::new(Ipv6Addr::from(base), len).expect("len <= 128")))
        }
    }
}

/// Left-aligned values; returns the masked common prefix and its length,
/// capped at `width`.
fn common_prefix(mut vals: impl Iterator<Item = u128>, width: u8) -> (u128, u8) {
    let first = vals.next().expect("non-empty");
    let diff = vals.fold(0u128, |acc, v| acc | (v ^ first));
    let len = (diff.leading_zeros() as u8).min(width);
    let mask = if len == 0 { 0 } else { u128::MAX << (128 - u32::from(len)) };
    (first & mask, len)
}
