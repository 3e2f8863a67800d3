use serde::{Deserialize, Serialize};

use crate::client::{MAX_SCORE, MIN_SCORE};

/// Score at or above which a server is handed out in DNS answers.
pub const ACTIVE_SCORE: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeOutcome {
    Accurate,
    Bad,
}

/// One monitor update: `clamp(0.95 * score + delta, -100, 20)` with delta
/// +1 for an accurate reply and -5 for a bad or missing one.
pub fn step_score(score: f64, outcome: ProbeOutcome) -> f64 {
    let delta = match outcome {
        ProbeOutcome::Accurate => 1.0,
        ProbeOutcome::Bad => -5.0,
    };
    (0.95 * score + delta).clamp(MIN_SCORE, MAX_SCORE)
}

/// Number of identical steps after which the score first satisfies `pred`,
/// or `None` within `limit` steps.
pub fn steps_until(mut score: f64, outcome: ProbeOutcome, limit: usize, pred: impl Fn(f64) -> bool) -> Option<usize> {
    for n in 1..=limit {
        score = step_score(score, outcome);
        if pred(score) {
            return Some(n);
        }
    }
    None
}
