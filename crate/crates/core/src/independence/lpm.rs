use std::collections::HashMap;
use std::io::BufRead;
use std::net::IpAddr;

use ipnet::IpNet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PrefixTableError {
    #[error("duplicate prefix {0}")]
    Duplicate(IpNet),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Prefix → origin ASN, answering longest-prefix-match queries.
///
/// Entries are bucketed by prefix length; a lookup probes the populated
/// lengths from most to least specific.
#[derive(Clone, Debug, Default)]
pub struct PrefixTable {
    v4: Vec<HashMap<u32, u32>>,
    v6: Vec<HashMap<u128, u32>>,
    v4_lens: Vec<u8>,
    v6_lens: Vec<u8>,
    entries: usize,
}

fn mask32(bits: u32, len: u8) -> u32 {
    if len == 0 {
        0
    } else {
        bits & (u32::MAX << (32 - u32::from(len)))
    }
}

fn mask128(bits: u128, len: u8) -> u128 {
    if len == 0 {
        0
    } else {
        bits & (u128::MAX << (128 - u32::from(len)))
    }
}

fn insert_len(lens: &mut Vec<u8>, len: u8) {
    if let Err(pos) = lens.binary_search_by(|l| len.cmp(l)) {
        lens.insert(pos, len);
    }
}

impl PrefixTable {
    pub fn new() -> Self {
        Self { v4: vec![HashMap::new(); 33], v6: vec![HashMap::new(); 129], ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries == 0
    }

    pub fn insert(&mut self, prefix: IpNet, asn: u32) -> Result<(), PrefixTableError> {
        let len = prefix.prefix_len();
        let fresh = match prefix.trunc() {
            IpNet::V4(n) => {
                let slot = self.v4[usize::from(len)].entry(u32::from(n.network()));
                let fresh = matches!(slot, std::collections::hash_map::Entry::Vacant(_));
                slot.or_insert(asn);
                insert_len(&mut self.v4_lens, len);
                fresh
            }
            IpNet::V6(n) => {
                let slot = self.v6[usize::from(len)].entry(u128::from(n.network()));
                let fresh = matches!(slot, std::collections::hash_map::Entry::Vacant(_));
                slot.or_insert(asn);
                insert_len(&mut self.v6_lens, len);
                fresh
            }
        };
        if !fresh {
            return Err(PrefixTableError::Duplicate(prefix.trunc()));
        }
        self.entries += 1;
        Ok(())
    }

    /// Origin ASN of the most specific covering prefix, if any.
    pub fn lookup(&self, addr: &IpAddr) -> Option<u32> {
        match addr {
            IpAddr::V4(a) => {
                let bits = u32::from(*a);
                self.v4_lens.iter().find_map(|&l| self.v4[usize::from(l)].get(&mask32(bits, l)).copied())
            }
            IpAddr::V6(a) => {
                let bits = u128::from(*a);
                self.v6_lens.iter().find_map(|&l| self.v6[usize::from(l)].get(&mask128(bits, l)).copied())
            }
        }
    }

    /// Reads `prefix/length ASN` lines. Blank lines and `#` comments are
    /// skipped; both families may be mixed.
    pub fn read(r: impl BufRead) -> Result<Self, PrefixTableError> {
        let mut table = Self::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let err = |msg: String| PrefixTableError::Parse { line: i + 1, msg };
            let mut parts = body.split_whitespace();
            let (Some(p), Some(a), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err(format!("expected `prefix/length ASN`, got `{body}`")));
            };
            let prefix: IpNet = p.parse().map_err(|e| err(format!("bad prefix `{p}`: {e}")))?;
            let asn: u32 = a.trim_start_matches("AS").parse().map_err(|_| err(format!("bad ASN `{a}`")))?;
            if asn == 0 {
                return Err(err("ASN must be positive".into()));
            }
            table.insert(prefix, asn).map_err(|e| err(e.to_string()))?;
        }
        Ok(table)
    }
}

pub fn lpm_lookup(table: &PrefixTable, addr: &IpAddr) -> Option<u32> {
    table.lookup(addr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[(&str, u32)]) -> PrefixTable {
        let mut t = PrefixTable::new();
        for (p, a) in rows {
            t.insert(p.parse().unwrap(), *a).unwrap();
        }
        t
    }

    #[test]
    fn most_specific_wins() {
        let t = table(&[("10.0.0.0/8", 1), ("10.1.0.0/16", 2)]);
        assert_eq!(t.lookup(&"10.1.2.3".parse().unwrap()), Some(2));
        assert_eq!(t.lookup(&"10.2.2.3".parse().unwrap()), Some(1));
        assert_eq!(t.lookup(&"192.0.2.1".parse().unwrap()), None);
    }

    #[test]
    fn families_are_separate() {
        let t = table(&[("0.0.0.0/0", 7), ("2001:470::/32", 6939)]);
        assert_eq!(t.lookup(&"2001:470:1f07:c21:1::123".parse().unwrap()), Some(6939));
        assert_eq!(t.lookup(&"2001:db8::1".parse().unwrap()), None);
        assert_eq!(t.lookup(&"198.51.100.1".parse().unwrap()), Some(7));
    }

    #[test]
    fn duplicates_rejected() {
        let mut t = table(&[("10.0.0.0/8", 1)]);
        assert!(matches!(t.insert("10.0.0.0/8".parse().unwrap(), 2), Err(PrefixTableError::Duplicate(_))));
        // host bits are ignored when comparing
        assert!(t.insert("10.9.9.9/8".parse().unwrap(), 2).is_err());
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn parse_text() {
        let text = "# routeviews extract\n10.0.0.0/8 64500\n\n2001:db8::/32 AS64501 # doc\n";
        let t = PrefixTable::read(text.as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.lookup(&"2001:db8::9".parse().unwrap()), Some(64501));
        assert!(PrefixTable::read("10.0.0.0/8".as_bytes()).is_err());
        assert!(PrefixTable::read("10.0.0.0/33 5".as_bytes()).is_err());
        assert!(PrefixTable::read("10.0.0.0/8 5\n10.0.0.0/8 6".as_bytes()).is_err());
    }
}
