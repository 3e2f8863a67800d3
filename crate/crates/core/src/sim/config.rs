//! Scenario files for the simulator (TOML).
//!
//! ```toml
//! seed = 1
//! duration_hours = 48.0
//! window_hours = 1.0
//! zone_weighting = "split"        # or "full"
//! continents = { hu = "europe" }
//!
//! [[servers]]
//! address = "2001:db8::1"
//! zones = ["hu"]
//! netspeed_kbps = 1000000
//! initial_score = 20.0
//!
//! [[clients]]
//! country = "hu"
//! count = 1000
//! queries_per_day = 96.0
//! re_resolve = { kind = "fixed", hours = 1.0 }
//!
//! [attack]
//! zone = "hu"
//! count = 2
//! netspeed_kbps = 3000000
//! extra_zones = ["europe", "@"]
//! start_hours = 0.0
//! ```

use std::collections::BTreeMap;
use std::net::IpAddr;

use rand::Rng;
use rand_distr::{Distribution, Exp, LogNormal, Pareto};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// How a server's netspeed counts in each zone it belongs to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoneWeighting {
    /// The full netspeed in every zone.
    Full,
    /// Netspeed divided evenly over the server's zones.
    #[default]
    Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReResolve {
    Fixed { hours: f64 },
    Exponential { mean_hours: f64 },
    /// Heavy tailed; `shape` below 1 gives an infinite mean.
    Pareto { scale_hours: f64, shape: f64 },
    LogNormal { median_hours: f64, sigma: f64 },
}

impl ReResolve {
    fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            ReResolve::Fixed { hours } => hours > 0.0,
            ReResolve::Exponential { mean_hours } => mean_hours > 0.0,
            ReResolve::Pareto { scale_hours, shape } => scale_hours > 0.0 && shape > 0.0,
            ReResolve::LogNormal { median_hours, sigma } => median_hours > 0.0 && sigma >= 0.0,
        };
        if ok && self.all_finite() {
            Ok(())
        } else {
            Err(format!("re-resolution parameters must be positive: {self:?}"))
        }
    }

    fn all_finite(&self) -> bool {
        match *self {
            ReResolve::Fixed { hours } => hours.is_finite(),
            ReResolve::Exponential { mean_hours } => mean_hours.is_finite(),
            ReResolve::Pareto { scale_hours, shape } => scale_hours.is_finite() && shape.is_finite(),
            ReResolve::LogNormal { median_hours, sigma } => median_hours.is_finite() && sigma.is_finite(),
        }
    }

    /// Draws one interval in hours.
    pub fn sample_hours<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ReResolve::Fixed { hours } => hours,
            ReResolve::Exponential { mean_hours } => Exp::new(1.0 / mean_hours).unwrap().sample(rng),
            ReResolve::Pareto { scale_hours, shape } => Pareto::new(scale_hours, shape).unwrap().sample(rng),
            ReResolve::LogNormal { median_hours, sigma } => {
                LogNormal::new(median_hours.ln(), sigma).unwrap().sample(rng)
            }
        }
    }
}

fn default_window_hours() -> f64 {
    1.0
}
fn default_monitor_period_secs() -> u64 {
    900
}
fn default_answers_per_query() -> usize {
    4
}
fn default_failure_threshold() -> u32 {
    3
}
fn default_queries_per_day() -> f64 {
    96.0
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerSpec {
    pub address: IpAddr,
    pub zones: Vec<String>,
    pub netspeed_kbps: u64,
    #[serde(default)]
    pub initial_score: f64,
    #[serde(default = "yes")]
    pub responsive: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientGroup {
    pub country: String,
    pub count: u32,
    #[serde(default = "default_queries_per_day")]
    pub queries_per_day: f64,
    pub re_resolve: ReResolve,
    /// Consecutive unanswered queries before the client gives up on its
    /// server; `None` means it never does.
    #[serde(default)]
    pub failure_threshold: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub zone: String,
    /// Server count; the minimal count reaching `target_fraction` when absent.
    #[serde(default)]
    pub count: Option<u32>,
    #[serde(default)]
    pub target_fraction: Option<String>,
    #[serde(default = "max_netspeed")]
    pub netspeed_kbps: u64,
    /// Zones joined in addition to `zone`.
    #[serde(default)]
    pub extra_zones: Vec<String>,
    #[serde(default)]
    pub start_hours: f64,
    /// Leaves the pool (no more DNS answers); the daemon keeps running.
    #[serde(default)]
    pub removal_hours: Option<f64>,
    /// Daemon stops answering queries.
    #[serde(default)]
    pub daemon_stop_hours: Option<f64>,
    #[serde(default = "default_attack_prefix")]
    pub address_prefix: IpAddr,
}

fn max_netspeed() -> u64 {
    crate::apportion::MAX_NETSPEED_KBPS
}

fn default_attack_prefix() -> IpAddr {
    "2001:db8:a77::".parse().unwrap()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub duration_hours: f64,
    #[serde(default = "default_window_hours")]
    pub window_hours: f64,
    #[serde(default = "default_monitor_period_secs")]
    pub monitor_period_secs: u64,
    /// Probability that a monitor probe of a healthy server still fails.
    #[serde(default)]
    pub probe_loss: f64,
    #[serde(default = "default_answers_per_query")]
    pub answers_per_query: usize,
    #[serde(default)]
    pub zone_weighting: ZoneWeighting,
    #[serde(default = "default_failure_threshold")]
    pub failure_threshold: u32,
    /// Country zone -> continent zone, for fallback.
    #[serde(default)]
    pub continents: BTreeMap<String, String>,
    #[serde(default)]
    pub servers: Vec<ServerSpec>,
    #[serde(default)]
    pub clients: Vec<ClientGroup>,
    #[serde(default)]
    pub attack: Option<AttackSpec>,
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate().map_err(ConfigError::Invalid)?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), String> {
        let pos = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(format!("{what} must be positive"))
            }
        };
        if !(self.duration_hours.is_finite() && self.duration_hours >= 0.0) {
            return Err("duration_hours must be non-negative".into());
        }
        pos(self.window_hours, "window_hours")?;
        if self.monitor_period_secs == 0 {
            return Err("monitor_period_secs must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.probe_loss) {
            return Err("probe_loss must be in [0, 1]".into());
        }
        if self.answers_per_query == 0 {
            return Err("answers_per_query must be positive".into());
        }
        for s in &self.servers {
            if s.zones.is_empty() {
                return Err(format!("server {} has no zones", s.address));
            }
            if !(-100.0..=20.0).contains(&s.initial_score) {
                return Err(format!("server {} initial score outside [-100, 20]", s.address));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.servers {
            if !seen.insert(s.address) {
                return Err(format!("duplicate server address {}", s.address));
            }
        }
        for c in &self.clients {
            if !(c.queries_per_day.is_finite() && c.queries_per_day >= 0.0) {
                return Err("queries_per_day must be non-negative".into());
            }
            c.re_resolve.validate()?;
        }
        if let Some(a) = &self.attack {
            if a.count.is_none() && a.target_fraction.is_none() {
                return Err("attack needs `count` or `target_fraction`".into());
            }
            if a.netspeed_kbps == 0 {
                return Err("attack netspeed must be positive".into());
            }
            for (v, what) in [(Some(a.start_hours), "start_hours"), (a.removal_hours, "removal_hours"), (a.daemon_stop_hours, "daemon_stop_hours")] {
                if let Some(v) = v {
                    if !(v.is_finite() && v >= 0.0) {
                        return Err(format!("attack {what} must be non-negative"));
                    }
                }
            }
            if let (Some(r), Some(d)) = (a.removal_hours, a.daemon_stop_hours) {
                if d < r {
                    return Err("daemon_stop_hours must not precede removal_hours".into());
                }
            }
        }
        Ok(())
    }
}
