//! Independence analysis of pool servers: the dealias/account/ASN funnel,
//! IPv6 interface-identifier classes, prefix-to-ASN mapping, lifetimes and
//! anycast candidates.

pub mod anycast;
pub mod funnel;
pub mod iid;
pub mod lifetime;
pub mod lpm;
pub mod owners;

pub use anycast::{anycast_candidates, is_continent_zone, CONTINENT_ZONES};
pub use funnel::{funnel, FunnelError, FunnelReport};
pub use iid::{classify_iid, classify_iid_with, IidClass, IidRules};
pub use lifetime::{
    availability, group_rows, lifetime, lifetime_cdf_at, read_score_rows, ScoreRow, ScoreSeries, SeriesError,
    ACTIVE_SCORE,
};
pub use lpm::{lpm_lookup, PrefixTable, PrefixTableError};
pub use owners::{
    account_concentration, as_type_tally, possible_same_owner, read_account_map, read_as_types,
    AccountConcentration, MapError,
};
