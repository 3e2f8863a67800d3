use std::collections::{BTreeMap, BTreeSet};
use std::net::IpAddr;

use ipnet::IpNet;
use serde::{Deserialize, Serialize};

use super::{covering_prefix, Fingerprint, MatchKey, Projection};

/// Addresses inferred to be served by one NTP daemon.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AliasCluster {
    /// Sorted, non-empty.
    pub members: Vec<IpAddr>,
    pub contains_stratum1: bool,
    pub covering_prefix_v4: Option<IpNet>,
    pub covering_prefix_v6: Option<IpNet>,
    pub mixed_family: bool,
}

impl AliasCluster {
    pub fn from_members(mut members: Vec<IpAddr>, contains_stratum1: bool) -> Self {
        members.sort();
        members.dedup();
        let (v4, v6): (Vec<IpAddr>, Vec<IpAddr>) = members.iter().partition(|a| a.is_ipv4());
        let cover = |xs: &[IpAddr]| (!xs.is_empty()).then(|| covering_prefix(xs).expect("single family"));
        Self {
            covering_prefix_v4: cover(&v4),
            covering_prefix_v6: cover(&v6),
            mixed_family: !v4.is_empty() && !v6.is_empty(),
            contains_stratum1,
            members,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_singleton(&self) -> bool {
        self.members.len() == 1
    }

    /// Lowest address; used as the cluster's stand-in downstream.
    pub fn representative(&self) -> IpAddr {
        self.members[0]
    }

    pub fn to_record(&self, cluster_id: usize) -> ClusterRecord {
        ClusterRecord {
            cluster_id,
            members: self.members.clone(),
            contains_stratum1: self.contains_stratum1,
            covering_prefix_v4: self.covering_prefix_v4,
            covering_prefix_v6: self.covering_prefix_v6,
            mixed_family: self.mixed_family,
        }
    }
}

/// One line of a cluster report.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub cluster_id: usize,
    pub members: Vec<IpAddr>,
    pub contains_stratum1: bool,
    pub covering_prefix_v4: Option<IpNet>,
    pub covering_prefix_v6: Option<IpNet>,
    pub mixed_family: bool,
}

impl From<ClusterRecord> for AliasCluster {
    fn from(r: ClusterRecord) -> Self {
        AliasCluster::from_members(r.members, r.contains_stratum1)
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Partitions the responsive addresses into alias clusters.
///
/// Two addresses are joined when any fingerprint of one matches any
/// fingerprint of the other under `key`. Output is sorted: members within a
/// cluster, and clusters by their lowest member.
pub fn build_clusters(fps: &[Fingerprint], key: &MatchKey) -> Vec<AliasCluster> {
    let addrs: BTreeSet<IpAddr> = fps.iter().map(|f| f.address).collect();
    let index: BTreeMap<IpAddr, usize> = addrs.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let mut dsu = DisjointSet::new(addrs.len());

    // Matching is equality on the projection plus a time window, so within
    // one projection group it suffices to chain time-adjacent probes.
    let mut groups: BTreeMap<Projection, Vec<&Fingerprint>> = BTreeMap::new();
    for f in fps {
        groups.entry(f.project(key)).or_default().push(f);
    }
    for group in groups.values_mut() {
        group.sort_by_key(|f| (f.collected_at, f.address));
        for pair in group.windows(2) {
            let gap = (pair[1].collected_at - pair[0].collected_at).to_std().unwrap_or_default();
            if gap <= key.window {
                dsu.union(index[&pair[0].address], index[&pair[1].address]);
            }
        }
    }

    let stratum1: BTreeSet<IpAddr> = fps.iter().filter(|f| f.is_stratum1()).map(|f| f.address).collect();
    let mut comps: BTreeMap<usize, Vec<IpAddr>> = BTreeMap::new();
    for (addr, &i) in &index {
        comps.entry(dsu.find(i)).or_default().push(*addr);
    }
    let mut clusters: Vec<AliasCluster> = comps
        .into_values()
        .map(|members| {
            let s1 = members.iter().any(|a| stratum1.contains(a));
            AliasCluster::from_members(members, s1)
        })
        .collect();
    clusters.sort_by_key(|c| c.representative());
    clusters
}

/// Summary counts over clusters that are eligible for alias analysis.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasTally {
    pub clusters: usize,
    pub singletons: usize,
    pub addresses: usize,
    pub excluded_stratum1_clusters: usize,
    pub excluded_stratum1_addresses: usize,
    pub mixed_family_clusters: usize,
    /// cluster size -> number of clusters
    pub size_histogram: BTreeMap<usize, usize>,
}

pub fn alias_tally(clusters: &[AliasCluster]) -> AliasTally {
    let mut t = AliasTally::default();
    for c in clusters {
        if c.contains_stratum1 {
            t.excluded_stratum1_clusters += 1;
            t.excluded_stratum1_addresses += c.len();
            continue;
        }
        t.clusters += 1;
        t.addresses += c.len();
        t.singletons += usize::from(c.is_singleton());
        t.mixed_family_clusters += usize::from(c.mixed_family);
        *t.size_histogram.entry(c.len()).or_default() += 1;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;

    #[test]
    fn ten_addresses_on_one_interface() {
        let fps: Vec<_> = (1..=10).map(|i| fp(&format!("2001:db8:5::{i:x}"), i, 2, 0xabcd)).collect();
        let cs = build_clusters(&fps, &MatchKey::default());
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].len(), 10);
        assert_eq!(cs[0].covering_prefix_v6.unwrap().to_string(), "2001:db8:5::/124");
        assert!(!cs[0].mixed_family);
    }

    #[test]
    fn two_daemons_on_one_host() {
        // ntpd on two addresses, chronyd on a third: different precision
        // and reference time.
        let mut fps = vec![fp("2001:db8::a", 0, 2, 0x1111), fp("2001:db8::b", 1, 2, 0x1111)];
        let mut chrony = fp("2001:db8::c", 2, 2, 0x2222);
        chrony.precision = -25;
        fps.push(chrony);
        let cs = build_clusters(&fps, &MatchKey::default());
        let sizes: Vec<_> = cs.iter().map(AliasCluster::len).collect();
        assert_eq!(sizes, vec![2, 1]);
    }

    #[test]
    fn any_matching_round_suffices() {
        // round 1: b resynced between probes; round 2: both agree
        let fps = vec![
            fp("192.0.2.1", 0, 2, 100),
            fp("192.0.2.2", 1, 2, 200),
            fp("192.0.2.1", 30, 2, 200),
            fp("192.0.2.2", 31, 2, 200),
        ];
        let cs = build_clusters(&fps, &MatchKey::default());
        assert_eq!(cs.len(), 1);
    }

    #[test]
    fn far_apart_probes_do_not_join() {
        let fps = vec![fp("192.0.2.1", 0, 2, 100), fp("192.0.2.2", 500, 2, 100)];
        assert_eq!(build_clusters(&fps, &MatchKey::default()).len(), 2);
    }

    #[test]
    fn stratum1_clusters_flagged_and_excluded() {
        let mut a = fp("192.0.2.1", 0, 1, 7);
        a.refid = *b"GPS\0";
        let b = Fingerprint { address: "192.0.2.2".parse().unwrap(), ..a.clone() };
        let c = fp("192.0.2.3", 0, 2, 8);
        let cs = build_clusters(&[a, b, c], &MatchKey::default());
        assert_eq!(cs.len(), 2);
        assert!(cs[0].contains_stratum1);
        let t = alias_tally(&cs);
        assert_eq!(t.clusters, 1);
        assert_eq!(t.excluded_stratum1_clusters, 1);
        assert_eq!(t.excluded_stratum1_addresses, 2);
    }

    #[test]
    fn mixed_family_cluster() {
        let fps = vec![fp("192.0.2.1", 0, 3, 9), fp("2001:db8::1", 0, 3, 9)];
        let cs = build_clusters(&fps, &MatchKey::default());
        assert_eq!(cs.len(), 1);
        assert!(cs[0].mixed_family);
        assert_eq!(cs[0].covering_prefix_v4.unwrap().to_string(), "192.0.2.1/32");
        assert_eq!(cs[0].covering_prefix_v6.unwrap().to_string(), "2001:db8::1/128");
    }

    #[test]
    fn record_roundtrip() {
        let c = AliasCluster::from_members(vec!["2001:db8::2".parse().unwrap(), "192.0.2.1".parse().unwrap()], false);
        let line = serde_json::to_string(&c.to_record(3)).unwrap();
        assert!(line.contains("\"cluster_id\":3"));
        assert!(line.contains("\"covering_prefix_v4\":\"192.0.2.1/32\""));
        let back: ClusterRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(AliasCluster::from(back), c);
    }

    #[test]
    fn empty_input() {
        assert!(build_clusters(&[], &MatchKey::default()).is_empty());
    }
}
