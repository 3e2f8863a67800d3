use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Score at or above which a server is handed out to clients.
pub const ACTIVE_SCORE: f64 = 10.0;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("score series for server {0} is empty")]
    Empty(u64),
    #[error("server {server_id}: timestamps not strictly increasing at {ts}")]
    Unordered { server_id: u64, ts: i64 },
    #[error("score row {row}: {msg}")]
    Parse { row: usize, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One row of the historic score archive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub server_id: u64,
    /// Unix seconds.
    pub ts: i64,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub server_id: u64,
    samples: Vec<(i64, f64)>,
}

impl ScoreSeries {
    pub fn new(server_id: u64, samples: Vec<(i64, f64)>) -> Result<Self, SeriesError> {
        if samples.is_empty() {
            return Err(SeriesError::Empty(server_id));
        }
        if let Some(w) = samples.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(SeriesError::Unordered { server_id, ts: w[1].0 });
        }
        Ok(Self { server_id, samples })
    }

    pub fn samples(&self) -> &[(i64, f64)] {
        &self.samples
    }

    pub fn first_ts(&self) -> i64 {
        self.samples[0].0
    }

    pub fn last_ts(&self) -> i64 {
        self.samples[self.samples.len() - 1].0
    }
}

/// Seconds between the first and last score.
pub fn lifetime(series: &ScoreSeries) -> i64 {
    series.last_ts() - series.first_ts()
}

/// Fraction of the lifetime spent at or above `threshold`, holding each
/// score until the next sample. A single-sample series counts as fully
/// available or not at all.
pub fn availability(series: &ScoreSeries, threshold: f64) -> f64 {
    let s = series.samples();
    let span = lifetime(series);
    if span == 0 {
        return if s[0].1 >= threshold { 1.0 } else { 0.0 };
    }
    let good: i64 = s.windows(2).filter(|w| w[0].1 >= threshold).map(|w| w[1].0 - w[0].0).sum();
    good as f64 / span as f64
}

/// Groups archive rows into per-server series. Rows may arrive in any
/// order; when a server has several rows with one timestamp, the last row
/// read wins.
pub fn group_rows(rows: impl IntoIterator<Item = ScoreRow>) -> Result<Vec<ScoreSeries>, SeriesError> {
    let mut by_server: BTreeMap<u64, BTreeMap<i64, f64>> = BTreeMap::new();
    for r in rows {
        by_server.entry(r.server_id).or_default().insert(r.ts, r.score);
    }
    by_server.into_iter().map(|(id, m)| ScoreSeries::new(id, m.into_iter().collect())).collect()
}

/// Reads `server_id,ts,score` rows. A header line is optional.
pub fn read_score_rows(r: impl Read) -> Result<Vec<ScoreRow>, SeriesError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(false)
        .from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if i == 0 && rec.get(0).is_some_and(|f| f.parse::<u64>().is_err()) {
            continue;
        }
        let err = |msg: &str| SeriesError::Parse { row: i + 1, msg: msg.to_string() };
        if rec.len() != 3 {
            return Err(err("expected server_id,ts,score"));
        }
        out.push(ScoreRow {
            server_id: rec[0].parse().map_err(|_| err("bad server_id"))?,
            ts: rec[1].parse::<f64>().map(|t| t as i64).map_err(|_| err("bad ts"))?,
            score: rec[2].parse().map_err(|_| err("bad score"))?,
        });
    }
    Ok(out)
}

/// Fraction of series whose lifetime is shorter than `secs`.
pub fn lifetime_cdf_at(series: &[ScoreSeries], secs: i64) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    series.iter().filter(|s| lifetime(s) < secs).count() as f64 / series.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    const DAY: i64 = 86_400;

    #[test]
    fn year_long_lifetime() {
        let s = ScoreSeries::new(1, vec![(0, 0.0), (100 * DAY, 15.0), (365 * DAY, 19.0)]).unwrap();
        assert_eq!(lifetime(&s), 365 * DAY);
    }

    #[test]
    fn half_available() {
        let s = ScoreSeries::new(1, vec![(0, 15.0), (50, -5.0), (100, -5.0)]).unwrap();
        assert_eq!(availability(&s, ACTIVE_SCORE), 0.5);
        // threshold is inclusive
        let s = ScoreSeries::new(1, vec![(0, 10.0), (10, 9.99), (20, 9.0)]).unwrap();
        assert_eq!(availability(&s, ACTIVE_SCORE), 0.5);
    }

    #[test]
    fn single_sample() {
        let s = ScoreSeries::new(1, vec![(5, 12.0)]).unwrap();
        assert_eq!(lifetime(&s), 0);
        assert_eq!(availability(&s, ACTIVE_SCORE), 1.0);
        let s = ScoreSeries::new(1, vec![(5, 2.0)]).unwrap();
        assert_eq!(availability(&s, ACTIVE_SCORE), 0.0);
    }

    #[test]
    fn invalid_series() {
        assert!(ScoreSeries::new(1, vec![]).is_err());
        assert!(ScoreSeries::new(1, vec![(5, 1.0), (5, 2.0)]).is_err());
    }

    #[test]
    fn rows_roundtrip() {
        let text = "server_id,ts,score\n2,100,5\n1,50,12.5\n1,10,3\n2,100,6\n";
        let rows = read_score_rows(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 4);
        let series = group_rows(rows).unwrap();
        assert_eq!(series.len(), 2);
        assert_eq!(series[0].samples(), &[(10, 3.0), (50, 12.5)]);
        assert_eq!(series[1].samples(), &[(100, 6.0)]);
        assert!(read_score_rows("1,2\n".as_bytes()).is_err());
        assert!(read_score_rows("1,x,3\n".as_bytes()).is_err());
    }

    #[test]
    fn cohort_cdf() {
        let series: Vec<_> = (0..100)
            .map(|i| {
                let days = if i < 10 { 3 } else { 30 + i };
                ScoreSeries::new(i as u64, vec![(0, 20.0), (days * DAY, 20.0)]).unwrap()
            })
            .collect();
        assert_eq!(lifetime_cdf_at(&series, 10 * DAY), 0.10);
    }
}
