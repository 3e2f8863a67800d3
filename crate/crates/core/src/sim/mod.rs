//! Seeded simulator of pool mechanics: monitor scoring, zone fallback,
//! weighted DNS answers, attacker injection and client-side caching.

pub mod config;
pub mod engine;
pub mod pool;
pub mod report;
pub mod score;

pub use config::{AttackSpec, ClientGroup, ConfigError, ReResolve, ServerSpec, SimConfig, ZoneWeighting};
pub use engine::{attack_count, run};
pub use pool::{select_answer, weighted_sample, Answer, PoolState, SimServer, GLOBAL_ZONE};
pub use report::{AnswerRow, ServerTotals, SimReport, SimSummary, TrafficRow};
pub use score::{step_score, steps_until, ProbeOutcome, ACTIVE_SCORE};
