//! Account concentration, owner-name hints and AS-type tallies.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;
use std::net::IpAddr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn data_lines(r: impl BufRead) -> impl Iterator<Item = Result<(usize, String), MapError>> {
    r.lines().enumerate().filter_map(|(i, l)| match l {
        Err(e) => Some(Err(e.into())),
        Ok(l) => {
            let body = l.split('#').next().unwrap_or("").trim().to_string();
            (!body.is_empty()).then_some(Ok((i + 1, body)))
        }
    })
}

/// Reads `address account_id` lines. The account id is the rest of the
/// line, so names with spaces survive.
pub fn read_account_map(r: impl BufRead) -> Result<HashMap<IpAddr, String>, MapError> {
    let mut out = HashMap::new();
    for line in data_lines(r) {
        let (n, body) = line?;
        let err = |msg: String| MapError::Parse { line: n, msg };
        let (addr, acct) = body.split_once(char::is_whitespace).ok_or_else(|| err("expected `address account_id`".into()))?;
        let addr: IpAddr = addr.parse().map_err(|_| err(format!("bad address `{addr}`")))?;
        out.insert(addr, acct.trim().to_string());
    }
    Ok(out)
}

/// Reads `asn type` lines, e.g. `24940 hosting`.
pub fn read_as_types(r: impl BufRead) -> Result<HashMap<u32, String>, MapError> {
    let mut out = HashMap::new();
    for line in data_lines(r) {
        let (n, body) = line?;
        let err = |msg: String| MapError::Parse { line: n, msg };
        let (asn, kind) = body.split_once(char::is_whitespace).ok_or_else(|| err("expected `asn type`".into()))?;
        let asn: u32 = asn.trim_start_matches("AS").parse().map_err(|_| err(format!("bad ASN `{asn}`")))?;
        out.insert(asn, kind.trim().to_string());
    }
    Ok(out)
}

/// Servers per AS type; addresses without a route or a type land in
/// `Unknown`.
pub fn as_type_tally(
    addrs: &[IpAddr],
    asn_of: impl Fn(&IpAddr) -> Option<u32>,
    types: &HashMap<u32, String>,
) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for a in addrs {
        let kind = asn_of(a).and_then(|asn| types.get(&asn).cloned()).unwrap_or_else(|| "Unknown".to_string());
        *out.entry(kind).or_default() += 1;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccountConcentration {
    pub accounts: usize,
    pub anonymous_servers: usize,
    /// (account, servers), largest first, ties by account id.
    pub per_account: Vec<(String, usize)>,
    pub top10_servers: usize,
    pub median_servers: f64,
}

/// How many servers each known account controls. Anonymous servers are
/// counted separately, so the concentration is a lower bound.
pub fn account_concentration<'a>(accounts: impl IntoIterator<Item = Option<&'a str>>) -> AccountConcentration {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut anonymous = 0;
    for a in accounts {
        match a {
            Some(a) => *counts.entry(a).or_default() += 1,
            None => anonymous += 1,
        }
    }
    let mut per_account: Vec<(String, usize)> = counts.into_iter().map(|(a, n)| (a.to_string(), n)).collect();
    per_account.sort_by(|x, y| y.1.cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
    let mut sizes: Vec<usize> = per_account.iter().map(|p| p.1).collect();
    sizes.sort_unstable();
    let median_servers = match sizes.len() {
        0 => 0.0,
        n if n % 2 == 1 => sizes[n / 2] as f64,
        n => (sizes[n / 2 - 1] + sizes[n / 2]) as f64 / 2.0,
    };
    AccountConcentration {
        accounts: per_account.len(),
        anonymous_servers: anonymous,
        top10_servers: per_account.iter().take(10).map(|p| p.1).sum(),
        per_account,
        median_servers,
    }
}

fn name_tokens(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

/// Heuristic: one account name looks like an abbreviation of the other,
/// e.g. "Jane Q. Doe" / "J. Doe" / "jdoe".
pub fn names_possibly_same(a: &str, b: &str) -> bool {
    let (ta, tb) = (name_tokens(a), name_tokens(b));
    if ta.is_empty() || tb.is_empty() || ta == tb {
        return false;
    }
    let initials_match = |x: &[String], y: &[String]| {
        x.first().zip(y.first()).is_some_and(|(p, q)| p.chars().next() == q.chars().next())
    };
    if ta.len() >= 2 && tb.len() >= 2 {
        return ta.last() == tb.last() && initials_match(&ta, &tb);
    }
    let (single, multi) = if ta.len() == 1 { (&ta[0], &tb) } else { (&tb[0], &ta) };
    if multi.len() < 2 {
        return false;
    }
    let first = &multi[0];
    let last = multi.last().unwrap();
    let abbrev = format!("{}{}", &first[..first.chars().next().unwrap().len_utf8()], last);
    *single == abbrev || *single == format!("{first}{last}")
}

/// Account pairs that are distinct ids but may share an owner. Reported,
/// never merged.
pub fn possible_same_owner<'a>(accounts: impl IntoIterator<Item = &'a str>) -> Vec<(String, String)> {
    let uniq: BTreeSet<&str> = accounts.into_iter().collect();
    let uniq: Vec<&str> = uniq.into_iter().collect();
    let mut out = Vec::new();
    for (i, a) in uniq.iter().enumerate() {
        for b in &uniq[i + 1..] {
            if names_possibly_same(a, b) {
                out.push((a.to_string(), b.to_string()));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concentration() {
        let accts = [Some("a"), Some("a"), Some("a"), Some("b"), None, Some("c"), Some("c")];
        let c = account_concentration(accts);
        assert_eq!(c.accounts, 3);
        assert_eq!(c.anonymous_servers, 1);
        assert_eq!(c.per_account[0], ("a".to_string(), 3));
        assert_eq!(c.top10_servers, 6);
        assert_eq!(c.median_servers, 2.0);
    }

    #[test]
    fn abbreviated_names() {
        assert!(names_possibly_same("Jane Q. Doe", "J. Doe"));
        assert!(names_possibly_same("jdoe", "Jane Doe"));
        assert!(!names_possibly_same("Jane Doe", "John Smith"));
        assert!(!names_possibly_same("Jane Doe", "jane doe"));
        assert!(!names_possibly_same("acme", "example"));
        assert_eq!(possible_same_owner(["Jane Doe", "jdoe", "acme"]), vec![("Jane Doe".into(), "jdoe".into())]);
    }

    #[test]
    fn maps() {
        let m = read_account_map("192.0.2.1 Jane Doe\n# x\n2001:db8::1 acme\n".as_bytes()).unwrap();
        assert_eq!(m[&"192.0.2.1".parse::<IpAddr>().unwrap()], "Jane Doe");
        assert!(read_account_map("nonsense\n".as_bytes()).is_err());
        let t = read_as_types("AS24940 Hosting\n3320 ISP\n".as_bytes()).unwrap();
        assert_eq!(t[&24940], "Hosting");
        let addrs: Vec<IpAddr> = vec!["192.0.2.1".parse().unwrap(), "192.0.2.2".parse().unwrap()];
        let tally = as_type_tally(&addrs, |a| (a.to_string() == "192.0.2.1").then_some(24940), &t);
        assert_eq!(tally["Hosting"], 1);
        assert_eq!(tally["Unknown"], 1);
    }
}
