use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::IpAddr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint::AliasCluster;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FunnelError {
    #[error("cluster member {0} is not among the active servers")]
    UnknownMember(IpAddr),
    #[error("address {0} appears in more than one alias cluster")]
    OverlappingClusters(IpAddr),
}

/// Server counts after each independence reduction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunnelReport {
    pub total_active: usize,
    pub after_dealias: usize,
    pub after_account: usize,
    pub after_asn: usize,
    pub independent_fraction: f64,
    /// Alias clusters whose members map to more than one ASN.
    pub mixed_asn_clusters: usize,
}

struct Entity {
    rep: IpAddr,
    account: Option<String>,
}

/// Collapses active servers in three stages: alias clusters to one host,
/// hosts sharing a known account to one operator, operators sharing an
/// origin ASN to one network.
///
/// Clusters flagged as containing stratum-1 servers are not collapsed; their
/// members pass through as themselves, as do addresses outside any cluster.
/// A collapsed entity is represented by its lowest address; its account is
/// that of its lowest member with a known account. Servers with no account
/// never merge in the account stage, and unrouted representatives never merge
/// in the ASN stage.
pub fn funnel(
    active: &[IpAddr],
    clusters: &[AliasCluster],
    accounts: &HashMap<IpAddr, String>,
    asn_of: impl Fn(&IpAddr) -> Option<u32>,
) -> Result<FunnelReport, FunnelError> {
    let active: BTreeSet<IpAddr> = active.iter().copied().collect();
    let mut claimed: BTreeSet<IpAddr> = BTreeSet::new();
    let mut entities: Vec<Entity> = Vec::new();
    let mut mixed_asn_clusters = 0;

    for c in clusters {
        for m in &c.members {
            if !active.contains(m) {
                return Err(FunnelError::UnknownMember(*m));
            }
        }
        if c.contains_stratum1 {
            continue;
        }
        for m in &c.members {
            if !claimed.insert(*m) {
                return Err(FunnelError::OverlappingClusters(*m));
            }
        }
        let asns: BTreeSet<Option<u32>> = c.members.iter().map(&asn_of).collect();
        mixed_asn_clusters += usize::from(asns.len() > 1);
        let mut members = c.members.clone();
        members.sort();
        entities.push(Entity {
            rep: members[0],
            account: members.iter().find_map(|m| accounts.get(m).cloned()),
        });
    }
    for a in active.iter().filter(|a| !claimed.contains(a)) {
        entities.push(Entity { rep: *a, account: accounts.get(a).cloned() });
    }
    let after_dealias = entities.len();

    // stage 2: one representative per known account
    let mut by_account: BTreeMap<&str, IpAddr> = BTreeMap::new();
    let mut operators: Vec<IpAddr> = Vec::new();
    for e in &entities {
        match &e.account {
            Some(acct) => {
                let slot = by_account.entry(acct.as_str()).or_insert(e.rep);
                *slot = (*slot).min(e.rep);
            }
            None => operators.push(e.rep),
        }
    }
    operators.extend(by_account.values().copied());
    let after_account = operators.len();

    // stage 3: one representative per routed ASN
    let mut asns: BTreeSet<u32> = BTreeSet::new();
    let mut unrouted = 0usize;
    for rep in &operators {
        match asn_of(rep) {
            Some(asn) => {
                asns.insert(asn);
            }
            None => unrouted += 1,
        }
    }
    let after_asn = asns.len() + unrouted;

    let total_active = active.len();
    Ok(FunnelReport {
        total_active,
        after_dealias,
        after_account,
        after_asn,
        independent_fraction: if total_active == 0 { 0.0 } else { after_asn as f64 / total_active as f64 },
        mixed_asn_clusters,
    })
}
