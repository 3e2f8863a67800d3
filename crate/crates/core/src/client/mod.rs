//! Polite scraper for the pool website, its persistent state, and a mock
//! pool server for offline runs.

pub mod enumerate;
pub mod http;
pub mod limiter;
pub mod mock;
pub mod store;
pub mod types;

pub use enumerate::{enumerate, id_poll_due, poll_answers, poll_zone_counts, EnumerateOutcome, ScrapeError, DEFAULT_MAX_GAP};
pub use http::{parse_scores_location, ClientError, PoolClient, Resolution};
pub use limiter::{Clock, RateLimiter, SystemClock, VirtualClock};
pub use mock::{MockPool, MockPoolData, MockServer, MockZone};
pub use store::{replay, Event, LogEntry, ScrapeState, Store, StoreError, FORMAT_VERSION};
pub use types::{AnswerDelta, AnswerSample, RatePolicy, ServerRecord, ZoneCounts, MAX_SCORE, MIN_SCORE};
