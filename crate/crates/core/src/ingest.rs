//! Rating-file parsing and the sensor-log reformulation that turns dwell
//! times into a normalized rating matrix.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::{RatingScale, RatingTriple};

/// Record layout of a ratings file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MovieLensFormat {
    /// `UserID::MovieID::Rating::Timestamp`
    DoubleColon,
    /// `user<TAB>item<TAB>rating<TAB>timestamp`
    TabSeparated,
}

/// One-pass summary of a rating set.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_ratings: usize,
    pub global_mean: f64,
    pub density: f64,
    pub avg_items_per_user: f64,
    pub avg_users_per_item: f64,
}

/// Parsed triples plus the streaming statistics and the count of malformed
/// lines skipped in lenient mode (always 0 in strict mode).
#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub triples: Vec<RatingTriple>,
    pub stats: DatasetStats,
    pub skipped: usize,
}

struct StatsAccumulator {
    users: HashMap<String, ()>,
    items: HashMap<String, ()>,
    n: usize,
    sum: f64,
}

impl StatsAccumulator {
    fn new() -> Self {
        Self {
            users: HashMap::new(),
            items: HashMap::new(),
            n: 0,
            sum: 0.0,
        }
    }

    fn add(&mut self, user: &str, item: &str, rating: f64) {
        if !self.users.contains_key(user) {
            self.users.insert(user.to_string(), ());
        }
        if !self.items.contains_key(item) {
            self.items.insert(item.to_string(), ());
        }
        self.n += 1;
        self.sum += rating;
    }

    fn finish(self) -> DatasetStats {
        let (u, i, n) = (self.users.len(), self.items.len(), self.n);
        DatasetStats {
            n_users: u,
            n_items: i,
            n_ratings: n,
            global_mean: if n == 0 { 0.0 } else { self.sum / n as f64 },
            density: if u == 0 || i == 0 {
                0.0
            } else {
                n as f64 / (u * i) as f64
            },
            avg_items_per_user: if u == 0 { 0.0 } else { n as f64 / u as f64 },
            avg_users_per_item: if i == 0 { 0.0 } else { n as f64 / i as f64 },
        }
    }
}

/// Statistics recomputed from triples already in memory.
pub fn compute_stats(triples: &[RatingTriple]) -> DatasetStats {
    let mut acc = StatsAccumulator::new();
    for t in triples {
        acc.add(&t.user, &t.item, t.rating);
    }
    acc.finish()
}

fn split_record(line: &str, format: MovieLensFormat) -> Option<[&str; 4]> {
    let mut parts = match format {
        MovieLensFormat::DoubleColon => {
            let mut v: Vec<&str> = line.split("::").collect();
            if v.len() != 4 {
                return None;
            }
            v.drain(..).collect::<Vec<_>>()
        }
        MovieLensFormat::TabSeparated => {
            let v: Vec<&str> = line.split('\t').collect();
            if v.len() != 4 {
                return None;
            }
            v
        }
    };
    let ts = parts.pop().unwrap();
    let rating = parts.pop().unwrap();
    let item = parts.pop().unwrap();
    let user = parts.pop().unwrap();
    Some([user, item, rating, ts])
}

/// Parses a ratings file into triples, accumulating statistics in the same
/// pass. Timestamps are validated and discarded. Strict mode aborts at the
/// first malformed line; lenient mode counts and skips malformed lines.
pub fn parse_movielens(
    reader: impl BufRead,
    format: MovieLensFormat,
    strict: bool,
) -> Result<ParseOutcome> {
    let mut triples = Vec::new();
    let mut acc = StatsAccumulator::new();
    let mut skipped = 0usize;

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = split_record(&line, format).and_then(|[user, item, rating, ts]| {
            if user.is_empty() || item.is_empty() {
                return None;
            }
            let rating: f64 = rating.trim().parse().ok().filter(|r: &f64| r.is_finite())?;
            let _ts: i64 = ts.trim().parse().ok()?;
            Some((user.to_string(), item.to_string(), rating))
        });
        match parsed {
            Some((user, item, rating)) => {
                acc.add(&user, &item, rating);
                triples.push(RatingTriple {
                    user,
                    item,
                    rating,
                });
            }
            None if strict => {
                return Err(Error::MalformedLine {
                    line_no,
                    content: line,
                })
            }
            None => skipped += 1,
        }
    }

    Ok(ParseOutcome {
        triples,
        stats: acc.finish(),
        skipped,
    })
}

pub fn parse_movielens_path(
    path: impl AsRef<Path>,
    format: MovieLensFormat,
    strict: bool,
) -> Result<ParseOutcome> {
    let file = File::open(path)?;
    parse_movielens(BufReader::new(file), format, strict)
}

/// One sensor observation: a user seen at a location for `dwell` time units.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorEvent {
    pub user: String,
    pub location: String,
    pub dwell: f64,
}

impl SensorEvent {
    pub fn new(user: impl Into<String>, location: impl Into<String>, dwell: f64) -> Self {
        Self {
            user: user.into(),
            location: location.into(),
            dwell,
        }
    }
}

/// Parses `user<TAB>location<TAB>dwell` records.
pub fn parse_iot_events(reader: impl BufRead, strict: bool) -> Result<(Vec<SensorEvent>, usize)> {
    let mut events = Vec::new();
    let mut skipped = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let parsed = if fields.len() == 3 && !fields[0].is_empty() && !fields[1].is_empty() {
            fields[2]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|d| d.is_finite() && *d >= 0.0)
                .map(|d| SensorEvent::new(fields[0], fields[1], d))
        } else {
            None
        };
        match parsed {
            Some(e) => events.push(e),
            None if strict => {
                return Err(Error::MalformedLine {
                    line_no,
                    content: line,
                })
            }
            None => skipped += 1,
        }
    }
    Ok((events, skipped))
}

pub fn parse_iot_events_path(
    path: impl AsRef<Path>,
    strict: bool,
) -> Result<(Vec<SensorEvent>, usize)> {
    let file = File::open(path)?;
    parse_iot_events(BufReader::new(file), strict)
}

/// Turns dwell logs into ratings: for each user the dwell share of each
/// visited location is mapped affinely onto the rating scale, so the user's
/// most-dwelt location scores highest. Users and locations keep their
/// first-appearance order.
pub fn reformulate_iot(events: &[SensorEvent], scale: RatingScale) -> Result<Vec<RatingTriple>> {
    struct UserAcc {
        locations: Vec<String>,
        index: HashMap<String, usize>,
        dwell: Vec<f64>,
        total: f64,
    }

    let mut order: Vec<String> = Vec::new();
    let mut users: HashMap<String, UserAcc> = HashMap::new();

    for e in events {
        if e.dwell < 0.0 || !e.dwell.is_finite() {
            return Err(Error::NegativeDwell {
                user: e.user.clone(),
                location: e.location.clone(),
            });
        }
        let acc = users.entry(e.user.clone()).or_insert_with(|| {
            order.push(e.user.clone());
            UserAcc {
                locations: Vec::new(),
                index: HashMap::new(),
                dwell: Vec::new(),
                total: 0.0,
            }
        });
        let slot = *acc.index.entry(e.location.clone()).or_insert_with(|| {
            acc.locations.push(e.location.clone());
            acc.dwell.push(0.0);
            acc.locations.len() - 1
        });
        acc.dwell[slot] += e.dwell;
        acc.total += e.dwell;
    }

    let span = scale.max() - scale.min();
    let mut triples = Vec::new();
    for user in &order {
        let acc = &users[user];
        if acc.total <= 0.0 {
            return Err(Error::ZeroTotalDwell(user.clone()));
        }
        for (loc, &d) in acc.locations.iter().zip(&acc.dwell) {
            let p = d / acc.total;
            let rating = scale.clamp(scale.min() + p * span);
            triples.push(RatingTriple::new(user.clone(), loc.clone(), rating));
        }
    }
    Ok(triples)
}
