use std::collections::{BTreeSet, HashMap};
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use super::AliasCluster;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Consistency {
    AccountAndAsn,
    AccountOnly,
    AsnOnly,
    Neither,
    /// Some member has no known account or no routed ASN.
    Undeterminable,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyTally {
    pub account_and_asn: usize,
    pub account_only: usize,
    pub asn_only: usize,
    pub neither: usize,
    pub undeterminable: usize,
}

impl ConsistencyTally {
    pub fn total(&self) -> usize {
        self.account_and_asn + self.account_only + self.asn_only + self.neither + self.undeterminable
    }

    fn add(&mut self, c: Consistency) {
        match c {
            Consistency::AccountAndAsn => self.account_and_asn += 1,
            Consistency::AccountOnly => self.account_only += 1,
            Consistency::AsnOnly => self.asn_only += 1,
            Consistency::Neither => self.neither += 1,
            Consistency::Undeterminable => self.undeterminable += 1,
        }
    }
}

/// `Some(true)` if every member has a value and all agree, `Some(false)` if
/// every member has a value and they differ, `None` if any is unknown.
fn agreement<T: Ord>(members: &[IpAddr], lookup: impl Fn(&IpAddr) -> Option<T>) -> Option<bool> {
    let vals = members.iter().map(lookup).collect::<Option<BTreeSet<T>>>()?;
    Some(vals.len() == 1)
}

pub fn classify_cluster(
    cluster: &AliasCluster,
    accounts: &HashMap<IpAddr, String>,
    asn_of: impl Fn(&IpAddr) -> Option<u32>,
) -> Consistency {
    let acct = agreement(&cluster.members, |a| accounts.get(a).cloned());
    let asn = agreement(&cluster.members, asn_of);
    match (acct, asn) {
        (Some(true), Some(true)) => Consistency::AccountAndAsn,
        (Some(true), Some(false)) => Consistency::AccountOnly,
        (Some(false), Some(true)) => Consistency::AsnOnly,
        (Some(false), Some(false)) => Consistency::Neither,
        _ => Consistency::Undeterminable,
    }
}

/// Tallies owner and network agreement over non-singleton clusters.
/// Clusters flagged as containing stratum-1 servers are skipped.
pub fn cluster_consistency(
    clusters: &[AliasCluster],
    accounts: &HashMap<IpAddr, String>,
    asn_of: impl Fn(&IpAddr) -> Option<u32>,
) -> ConsistencyTally {
    let mut tally = ConsistencyTally::default();
    for c in clusters.iter().filter(|c| c.len() >= 2 && !c.contains_stratum1) {
        tally.add(classify_cluster(c, accounts, &asn_of));
    }
    tally
}
