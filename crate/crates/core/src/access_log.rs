//! Access-control logs: parsing, hour × reader discretization, the dataset
//! file format, and a generator for synthetic logs.
//!
//! A day record for one user is a count vector over `24 × n_readers` cells
//! with cell index `hour * n_readers + reader_index`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{Read, Write};

use chrono::{Duration, NaiveDate, NaiveDateTime, Timelike};
use log::warn;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::empirical::PopulationData;
use crate::error::{Error, Result};
use crate::prob::{CountVector, DirichletBelief, MultinomialModel};

pub const HOURS_PER_DAY: usize = 24;
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M";
const DATASET_MAGIC: &str = "bayesauth-dataset";
const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AccessRecord {
    pub timestamp: NaiveDateTime,
    pub reader_id: String,
    pub user_id: String,
}

/// Column names for the three required log fields, and an optional
/// declared reader set.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSchema {
    pub timestamp: String,
    pub reader: String,
    pub user: String,
    pub readers: Option<Vec<String>>,
}

impl Default for LogSchema {
    fn default() -> Self {
        LogSchema {
            timestamp: "timestamp".into(),
            reader: "reader_id".into(),
            user: "user_id".into(),
            readers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRow {
    /// 1-based line number in the source, header included.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedLog {
    pub records: Vec<AccessRecord>,
    pub rejects: Vec<RejectedRow>,
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    const FORMATS: [&str; 4] = [TIMESTAMP_FORMAT, "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%d %H:%M:%S"];
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s.trim(), f).ok())
}

/// Reads a CSV log. Malformed rows are collected as rejects; more than half
/// of the rows rejected is treated as a schema mismatch.
pub fn parse_log<R: Read>(source: R, schema: &LogSchema) -> Result<ParsedLog> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse(format!("cannot read header: {e}")))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Parse(format!("header has no {name:?} column")))
    };
    let (ts_col, reader_col, user_col) = (column(&schema.timestamp)?, column(&schema.reader)?, column(&schema.user)?);
    let declared: Option<std::collections::HashSet<&str>> = schema
        .readers
        .as_ref()
        .map(|r| r.iter().map(String::as_str).collect());

    let mut parsed = ParsedLog::default();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(Error::Parse(format!("read failed at line {line}: {e}"))),
            Err(e) => {
                parsed.rejects.push(RejectedRow { line, reason: e.to_string() });
                continue;
            }
        };
        let field = |c: usize| row.get(c).map(str::trim).filter(|s| !s.is_empty());
        let (Some(ts), Some(reader_id), Some(user_id)) = (field(ts_col), field(reader_col), field(user_col)) else {
            parsed.rejects.push(RejectedRow { line, reason: "missing field".into() });
            continue;
        };
        let Some(timestamp) = parse_timestamp(ts) else {
            parsed.rejects.push(RejectedRow { line, reason: format!("bad timestamp {ts:?}") });
            continue;
        };
        if declared.as_ref().is_some_and(|d| !d.contains(reader_id)) {
            parsed.rejects.push(RejectedRow { line, reason: format!("undeclared reader {reader_id:?}") });
            continue;
        }
        if reader_id.contains(char::is_whitespace) || user_id.contains(char::is_whitespace) {
            parsed.rejects.push(RejectedRow { line, reason: "identifier contains whitespace".into() });
            continue;
        }
        parsed.records.push(AccessRecord {
            timestamp,
            reader_id: reader_id.to_string(),
            user_id: user_id.to_string(),
        });
    }
    let total = parsed.records.len() + parsed.rejects.len();
    if parsed.rejects.len() * 2 > total {
        return Err(Error::SchemaMismatch { rejected: parsed.rejects.len(), total });
    }
    Ok(parsed)
}

/// Writes records as a canonical log CSV.
pub fn write_log<W: Write>(records: &[AccessRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(["timestamp", "reader_id", "user_id"]).map_err(err)?;
    for r in records {
        let ts = r.timestamp.format(TIMESTAMP_FORMAT).to_string();
        w.write_record([ts.as_str(), &r.reader_id, &r.user_id]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))
}

/// One user's accesses on one calendar day, as sparse `(cell, count)` pairs
/// sorted by cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DayRecord {
    pub user_id: String,
    pub date: NaiveDate,
    pub cells: Vec<(usize, u64)>,
}

impl DayRecord {
    pub fn total(&self) -> u64 {
        self.cells.iter().map(|(_, c)| c).sum()
    }
}

/// Per-(user, day) count vectors over hour × reader cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscretizedDataset {
    readers: Vec<String>,
    /// Sorted by `(user_id, date)`.
    days: Vec<DayRecord>,
}

impl DiscretizedDataset {
    pub fn readers(&self) -> &[String] {
        &self.readers
    }

    pub fn n_readers(&self) -> usize {
        self.readers.len()
    }

    pub fn degree(&self) -> usize {
        HOURS_PER_DAY * self.readers.len()
    }

    pub fn days(&self) -> &[DayRecord] {
        &self.days
    }

    pub fn total_count(&self) -> u64 {
        self.days.iter().map(DayRecord::total).sum()
    }

    pub fn encode_cell(&self, hour: usize, reader: usize) -> usize {
        hour * self.n_readers() + reader
    }

    pub fn decode_cell(&self, cell: usize) -> (usize, usize) {
        (cell / self.n_readers(), cell % self.n_readers())
    }

    /// Distinct users in sorted order.
    pub fn users(&self) -> Vec<&str> {
        let mut users: Vec<&str> = self.days.iter().map(|d| d.user_id.as_str()).collect();
        users.dedup();
        users
    }

    /// Days of each user, keyed by user.
    pub fn days_by_user(&self) -> BTreeMap<&str, Vec<&DayRecord>> {
        let mut map: BTreeMap<&str, Vec<&DayRecord>> = BTreeMap::new();
        for d in &self.days {
            map.entry(d.user_id.as_str()).or_default().push(d);
        }
        map
    }

    pub fn day_counts(&self, day: &DayRecord) -> CountVector {
        let entries: Vec<(usize, f64)> = day.cells.iter().map(|&(i, c)| (i, c as f64)).collect();
        CountVector::from_sparse(self.degree(), &entries).expect("cells are within the layout")
    }

    /// The sum of each listed user's day vectors. Users without days are
    /// skipped with a warning.
    pub fn pooled_user_counts(&self, users: &[&str]) -> Result<PopulationData> {
        if users.is_empty() {
            return Err(Error::InsufficientData("no users to pool".into()));
        }
        let by_user = self.days_by_user();
        let mut pooled = Vec::with_capacity(users.len());
        for u in users {
            match by_user.get(u) {
                Some(days) => {
                    let mut acc = vec![0.0; self.degree()];
                    for d in days {
                        for &(i, c) in &d.cells {
                            acc[i] += c as f64;
                        }
                    }
                    pooled.push(CountVector::new(acc)?);
                }
                None => warn!("user {u} has no records; skipped"),
            }
        }
        PopulationData::new(pooled)
    }

    /// Serializes to the versioned text format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{DATASET_MAGIC} {DATASET_VERSION}");
        let _ = writeln!(s, "hours {HOURS_PER_DAY}");
        let _ = writeln!(s, "readers {}", self.readers.len());
        for (i, r) in self.readers.iter().enumerate() {
            let _ = writeln!(s, "r {i} {r}");
        }
        let _ = writeln!(s, "days {}", self.days.len());
        for d in &self.days {
            let _ = write!(s, "d {} {} {}", d.user_id, d.date.format("%Y-%m-%d"), d.cells.len());
            for (i, c) in &d.cells {
                let _ = write!(s, " {i}:{c}");
            }
            s.push('\n');
        }
        s
    }

    /// Parses the text format written by [`DiscretizedDataset::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Parse(format!("dataset truncated: expected {what}")))
        };
        let bad = |line: usize, msg: &str| Error::Parse(format!("dataset line {line}: {msg}"));

        let (n, header) = next("header")?;
        if header != format!("{DATASET_MAGIC} {DATASET_VERSION}") {
            return Err(bad(n, "unsupported header or version"));
        }
        let (n, hours) = next("hours")?;
        if hours != format!("hours {HOURS_PER_DAY}") {
            return Err(bad(n, "expected 24 hours per day"));
        }
        let (n, count) = next("reader count")?;
        let n_readers: usize = count
            .strip_prefix("readers ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(n, "expected reader count"))?;
        let mut readers = Vec::with_capacity(n_readers);
        for expect in 0..n_readers {
            let (n, line) = next("reader")?;
            let mut parts = line.splitn(3, ' ');
            match (parts.next(), parts.next().and_then(|v| v.parse::<usize>().ok()), parts.next()) {
                (Some("r"), Some(i), Some(id)) if i == expect && !id.is_empty() => readers.push(id.to_string()),
                _ => return Err(bad(n, "malformed reader line")),
            }
        }
        let degree = HOURS_PER_DAY * n_readers;
        let (n, count) = next("day count")?;
        let n_days: usize = count
            .strip_prefix("days ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(n, "expected day count"))?;
        let mut days = Vec::with_capacity(n_days);
        for _ in 0..n_days {
            let (n, line) = next("day")?;
            let fields: Vec<&str> = line.split(' ').collect();
            if fields.len() < 4 || fields[0] != "d" {
                return Err(bad(n, "malformed day line"));
            }
            let date = NaiveDate::parse_from_str(fields[2], "%Y-%m-%d").map_err(|_| bad(n, "bad date"))?;
            let nnz: usize = fields[3].parse().map_err(|_| bad(n, "bad cell count"))?;
            if fields.len() != 4 + nnz {
                return Err(bad(n, "cell count does not match entries"));
            }
            let mut cells = Vec::with_capacity(nnz);
            for entry in &fields[4..] {
                let (i, c) = entry.split_once(':').ok_or_else(|| bad(n, "bad cell entry"))?;
                let i: usize = i.parse().map_err(|_| bad(n, "bad cell index"))?;
                let c: u64 = c.parse().map_err(|_| bad(n, "bad cell value"))?;
                if i >= degree || c == 0 || cells.last().is_some_and(|&(prev, _)| prev >= i) {
                    return Err(bad(n, "cells must be in range, nonzero and strictly increasing"));
                }
                cells.push((i, c));
            }
            days.push(DayRecord {
                user_id: fields[1].to_string(),
                date,
                cells,
            });
        }
        if let Some((n, _)) = lines.next() {
            return Err(bad(n, "trailing content"));
        }
        if days
            .windows(2)
            .any(|w| (&w[0].user_id, w[0].date) >= (&w[1].user_id, w[1].date))
        {
            return Err(Error::Parse("day records must be sorted by user then date".into()));
        }
        Ok(DiscretizedDataset { readers, days })
    }
}

/// Discretizes records, indexing readers by first appearance.
pub fn discretize(records: &[AccessRecord]) -> Result<DiscretizedDataset> {
    discretize_with_readers(records, &[])
}

/// Discretizes with a declared reader order; readers not declared are
/// appended in order of first appearance.
pub fn discretize_with_readers(records: &[AccessRecord], declared: &[String]) -> Result<DiscretizedDataset> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no records to discretize".into()));
    }
    let mut readers: Vec<String> = declared.to_vec();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, r) in declared.iter().enumerate() {
        if index.insert(r.as_str(), i).is_some() {
            return Err(Error::InvalidValue(format!("reader {r:?} declared twice")));
        }
    }
    for rec in records {
        if !index.contains_key(rec.reader_id.as_str()) {
            index.insert(rec.reader_id.as_str(), readers.len());
            readers.push(rec.reader_id.clone());
        }
    }
    let n_readers = readers.len();
    let mut cells: BTreeMap<(&str, NaiveDate), BTreeMap<usize, u64>> = BTreeMap::new();
    for rec in records {
        let cell = rec.timestamp.hour() as usize * n_readers + index[rec.reader_id.as_str()];
        *cells
            .entry((rec.user_id.as_str(), rec.timestamp.date()))
            .or_default()
            .entry(cell)
            .or_insert(0) += 1;
    }
    let days = cells
        .into_iter()
        .map(|((user, date), c)| DayRecord {
            user_id: user.to_string(),
            date,
            cells: c.into_iter().collect(),
        })
        .collect();
    Ok(DiscretizedDataset { readers, days })
}

/// How users' daily hour × reader profiles are formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProfileKind {
    /// Each user's profile is drawn from a Dirichlet centred on the
    /// building-wide profile with the given total concentration.
    Dirichlet { concentration: f64 },
    /// Everyone passes the first `entrances` readers (the building-wide
    /// hours and door popularity); a `personal_share` of each user's traffic
    /// goes to `personal_readers` doors picked at random among the rest.
    SharedEntrances {
        entrances: usize,
        personal_readers: usize,
        personal_share: f64,
    },
    /// Every user follows the building-wide profile.
    Identical,
    /// Readers are dealt round-robin to users; each user only uses their own.
    DisjointDoors,
    /// Every access happens in one (hour, reader) cell.
    PointMass { hour: usize, reader: usize },
}

/// Parameters of a synthetic access log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationSpec {
    pub users: usize,
    pub readers: usize,
    pub days: usize,
    pub mean_daily_accesses: f64,
    pub start_date: NaiveDate,
    pub profile: ProfileKind,
    /// Zipf exponent of reader popularity in the building-wide profile.
    pub reader_skew: f64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        PopulationSpec {
            users: 882,
            readers: 55,
            days: 100,
            mean_daily_accesses: 2.3,
            start_date: NaiveDate::from_ymd_opt(2009, 3, 2).expect("valid date"),
            profile: ProfileKind::Dirichlet { concentration: 20.0 },
            reader_skew: 1.0,
        }
    }
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidValue(m));
        if self.users == 0 || self.readers == 0 || self.days == 0 {
            return bad("users, readers and days must be positive".into());
        }
        if !(self.mean_daily_accesses > 0.0 && self.mean_daily_accesses.is_finite()) {
            return bad("mean daily accesses must be positive".into());
        }
        if !(self.reader_skew >= 0.0) {
            return bad("reader skew must be nonnegative".into());
        }
        match self.profile {
            ProfileKind::Dirichlet { concentration } if !(concentration > 0.0) => {
                bad("profile concentration must be positive".into())
            }
            ProfileKind::SharedEntrances {
                entrances,
                personal_readers,
                personal_share,
            } if entrances == 0
                || personal_readers == 0
                || entrances + personal_readers > self.readers
                || !(0.0..=1.0).contains(&personal_share) =>
            {
                bad(format!(
                    "shared entrances need 1 ≤ entrances, 1 ≤ personal readers, their sum ≤ {} readers \
                     and a share in [0, 1]",
                    self.readers
                ))
            }
            ProfileKind::DisjointDoors if self.readers < self.users => {
                bad(format!("disjoint doors need readers ≥ users ({} < {})", self.readers, self.users))
            }
            ProfileKind::PointMass { hour, reader } if hour >= HOURS_PER_DAY || reader >= self.readers => {
                bad("point-mass cell out of range".into())
            }
            _ => Ok(()),
        }
    }

    pub fn reader_ids(&self) -> Vec<String> {
        (0..self.readers).map(|r| format!("door-{r:02}")).collect()
    }

    pub fn user_ids(&self) -> Vec<String> {
        (0..self.users).map(|u| format!("u{u:04}")).collect()
    }

    pub fn degree(&self) -> usize {
        HOURS_PER_DAY * self.readers
    }

    /// Relative hourly activity: a working-day bump with light night traffic.
    fn hour_weights() -> [f64; HOURS_PER_DAY] {
        let mut w = [0.0; HOURS_PER_DAY];
        for (h, slot) in w.iter_mut().enumerate() {
            let h = h as f64 + 0.5;
            let morning = (-(h - 8.5).powi(2) / 2.0).exp();
            let lunch = 0.6 * (-(h - 12.5).powi(2) / 1.5).exp();
            let evening = 0.7 * (-(h - 17.0).powi(2) / 2.5).exp();
            let day = if (7.0..19.0).contains(&h) { 0.3 } else { 0.0 };
            *slot = morning + lunch + evening + day + 0.01;
        }
        w
    }

    /// The building-wide profile over cells, in the dataset layout.
    pub fn base_profile(&self) -> Vec<f64> {
        let hours = Self::hour_weights();
        let doors: Vec<f64> = (0..self.readers)
            .map(|r| door_weight(r, self.reader_skew))
            .collect();
        let mut cells = Vec::with_capacity(self.degree());
        for h in hours {
            for d in &doors {
                cells.push(h * d);
            }
        }
        let s: f64 = cells.iter().sum();
        cells.iter().map(|c| c / s).collect()
    }

    /// Draws one profile per user.
    pub fn user_profiles<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<MultinomialModel>> {
        self.validate()?;
        let base = self.base_profile();
        (0..self.users)
            .map(|u| match &self.profile {
                ProfileKind::Dirichlet { concentration } => {
                    let phi = base.iter().map(|b| b * concentration).collect();
                    Ok(DirichletBelief::new(phi)?.sample(rng))
                }
                ProfileKind::SharedEntrances {
                    entrances,
                    personal_readers,
                    personal_share,
                } => {
                    let own = rand::seq::index::sample(rng, self.readers - entrances, *personal_readers);
                    let mut door_share = vec![0.0; self.readers];
                    let shared: f64 = (0..*entrances).map(|r| door_weight(r, self.reader_skew)).sum();
                    for (r, share) in door_share.iter_mut().enumerate().take(*entrances) {
                        *share = (1.0 - personal_share) * door_weight(r, self.reader_skew) / shared;
                    }
                    for r in own.iter() {
                        door_share[entrances + r] = personal_share / *personal_readers as f64;
                    }
                    let hours = Self::hour_weights();
                    let weights: Vec<f64> = hours
                        .iter()
                        .flat_map(|h| door_share.iter().map(move |d| h * d))
                        .collect();
                    MultinomialModel::from_weights(&weights)
                }
                ProfileKind::Identical => MultinomialModel::from_weights(&base),
                ProfileKind::DisjointDoors => {
                    let weights: Vec<f64> = base
                        .iter()
                        .enumerate()
                        .map(|(cell, b)| if cell % self.readers % self.users == u { *b } else { 0.0 })
                        .collect();
                    MultinomialModel::from_weights(&weights)
                }
                ProfileKind::PointMass { hour, reader } => {
                    let mut weights = vec![0.0; self.degree()];
                    weights[hour * self.readers + reader] = 1.0;
                    MultinomialModel::from_weights(&weights)
                }
            })
            .collect()
    }
}

fn door_weight(reader: usize, skew: f64) -> f64 {
    1.0 / ((reader + 1) as f64).powf(skew)
}

/// Generates a log: each user has a fixed daily profile, each day a Poisson
/// number of accesses at uniformly random minutes within the drawn hour.
/// Records are sorted by time, then user, then reader.
pub fn generate_log<R: Rng + ?Sized>(spec: &PopulationSpec, rng: &mut R) -> Result<Vec<AccessRecord>> {
    let profiles = spec.user_profiles(rng)?;
    generate_log_from_profiles(spec, &profiles, rng)
}

/// Generates a log from explicit per-user profiles over the cell layout.
pub fn generate_log_from_profiles<R: Rng + ?Sized>(
    spec: &PopulationSpec,
    profiles: &[MultinomialModel],
    rng: &mut R,
) -> Result<Vec<AccessRecord>> {
    spec.validate()?;
    if profiles.len() != spec.users || profiles.iter().any(|p| p.degree() != spec.degree()) {
        return Err(Error::InvalidValue("profiles do not match the population spec".into()));
    }
    let readers = spec.reader_ids();
    let users = spec.user_ids();
    let poisson = Poisson::new(spec.mean_daily_accesses)
        .map_err(|e| Error::InvalidValue(format!("bad access rate: {e}")))?;
    let mut records = Vec::new();
    for day in 0..spec.days {
        let date = spec.start_date + Duration::days(day as i64);
        for (user, profile) in users.iter().zip(profiles) {
            let n = poisson.sample(rng) as usize;
            if n == 0 {
                continue;
            }
            let sample = profile.sample(n, rng)?;
            for cell in sample.sequence {
                let (hour, reader) = (cell / spec.readers, cell % spec.readers);
                let minute = rng.random_range(0..60u32);
                let timestamp = date
                    .and_hms_opt(hour as u32, minute, 0)
                    .expect("hour and minute in range");
                records.push(AccessRecord {
                    timestamp,
                    reader_id: readers[reader].clone(),
                    user_id: user.clone(),
                });
            }
        }
    }
    records.sort();
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bootstrap::stream_rng;

    fn rec(ts: &str, reader: &str, user: &str) -> AccessRecord {
        AccessRecord {
            timestamp: parse_timestamp(ts).unwrap(),
            reader_id: reader.into(),
            user_id: user.into(),
        }
    }

    #[test]
    fn parse_valid_row() {
        let text = "timestamp,reader_id,user_id\n2009-03-02T08:15,door-12,u881\n";
        let parsed = parse_log(text.as_bytes(), &LogSchema::default()).unwrap();
        assert_eq!(parsed.records, vec![rec("2009-03-02T08:15", "door-12", "u881")]);
        assert!(parsed.rejects.is_empty());
    }

    #[test]
    fn garbage_timestamp_rejected() {
        let text = "timestamp,reader_id,user_id\n2009-03-02T08:15,d1,u1\nyesterday,d1,u1\n2009-03-03T09:00,d2,u2\n";
        let parsed = parse_log(text.as_bytes(), &LogSchema::default()).unwrap();
        assert_eq!(parsed.records.len(), 2);
        assert_eq!(parsed.rejects.len(), 1);
        assert_eq!(parsed.rejects[0].line, 3);
    }

    #[test]
    fn header_only_file_is_empty() {
        let parsed = parse_log("timestamp,reader_id,user_id\n".as_bytes(), &LogSchema::default()).unwrap();
        assert!(parsed.records.is_empty() && parsed.rejects.is_empty());
    }

    #[test]
    fn mostly_garbage_is_schema_mismatch() {
        let text = "timestamp,reader_id,user_id\nx,d1,u1\ny,d1,u1\n2009-03-03T09:00,d2,u2\n";
        assert!(matches!(
            parse_log(text.as_bytes(), &LogSchema::default()),
            Err(Error::SchemaMismatch { rejected: 2, total: 3 })
        ));
    }

    #[test]
    fn custom_columns_and_declared_readers() {
        let text = "user,when,door,extra\nu1,2009-03-02 10:00,a,x\nu2,2009-03-02 11:00,b,y\nu2,2009-03-02 11:30,a,z\n";
        let schema = LogSchema {
            timestamp: "when".into(),
            reader: "door".into(),
            user: "user".into(),
            readers: Some(vec!["a".into()]),
        };
        let parsed = parse_log(text.as_bytes(), &schema).unwrap();
        assert_eq!(parsed.records.len(), 2);
        assert_eq!(parsed.rejects.len(), 1);
        assert!(parse_log("a,b\n".as_bytes(), &LogSchema::default()).is_err());
    }

    #[test]
    fn discretize_cell_layout() {
        let declared: Vec<String> = (0..55).map(|r| format!("door-{r:02}")).collect();
        let ds = discretize_with_readers(&[rec("2009-03-02T08:15", "door-03", "u1")], &declared).unwrap();
        assert_eq!(ds.degree(), 1320);
        assert_eq!(ds.days()[0].cells, vec![(8 * 55 + 3, 1)]);
        assert_eq!(ds.encode_cell(8, 3), 443);
    }

    #[test]
    fn discretize_merges_and_splits() {
        let records = [
            rec("2009-03-02T08:15", "a", "u1"),
            rec("2009-03-02T08:45", "a", "u1"),
            rec("2009-03-03T08:45", "a", "u1"),
            rec("2009-03-02T09:00", "b", "u2"),
        ];
        let ds = discretize(&records).unwrap();
        assert_eq!(ds.readers(), &["a".to_string(), "b".to_string()]);
        let by_user = ds.days_by_user();
        assert_eq!(by_user["u1"].len(), 2);
        assert_eq!(by_user["u1"][0].cells, vec![(16, 2)]);
        assert_eq!(by_user["u2"][0].cells, vec![(19, 1)]);
        assert_eq!(ds.total_count(), 4);
        assert!(discretize(&[]).is_err());
    }

    #[test]
    fn layout_is_bijective() {
        let ds = discretize(&[rec("2009-03-02T08:15", "a", "u"), rec("2009-03-02T08:15", "b", "u"), rec("2009-03-02T08:15", "c", "u")]).unwrap();
        let mut seen = vec![false; ds.degree()];
        for h in 0..HOURS_PER_DAY {
            for r in 0..ds.n_readers() {
                let c = ds.encode_cell(h, r);
                assert_eq!(ds.decode_cell(c), (h, r));
                assert!(!seen[c]);
                seen[c] = true;
            }
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn pooled_counts() {
        let records = [
            rec("2009-03-02T00:10", "a", "u1"),
            rec("2009-03-03T00:10", "b", "u1"),
            rec("2009-03-03T00:20", "b", "u1"),
            rec("2009-03-02T00:10", "b", "u2"),
        ];
        let ds = discretize(&records).unwrap();
        let pop = ds.pooled_user_counts(&["u1", "u2", "ghost"]).unwrap();
        assert_eq!(pop.len(), 2);
        assert_eq!(&pop.users()[0].counts()[..2], &[1.0, 2.0]);
        assert_eq!(&pop.users()[1].counts()[..2], &[0.0, 1.0]);
    }

    #[test]
    fn dataset_text_round_trip() {
        let spec = PopulationSpec {
            users: 12,
            readers: 4,
            days: 6,
            ..PopulationSpec::default()
        };
        let records = generate_log(&spec, &mut stream_rng(1, 0)).unwrap();
        let ds = discretize(&records).unwrap();
        let text = ds.to_text();
        let back = DiscretizedDataset::from_text(&text).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_text(), text);
        assert!(DiscretizedDataset::from_text("bayesauth-dataset 2\n").is_err());
        assert!(DiscretizedDataset::from_text(&text.replace("days ", "dayz ")).is_err());
    }

    #[test]
    fn generator_scale() {
        let spec = PopulationSpec::default();
        let records = generate_log(&spec, &mut stream_rng(2, 0)).unwrap();
        let expect = 882.0 * 100.0 * 2.3;
        assert!((records.len() as f64 - expect).abs() / expect < 0.05, "{}", records.len());
        assert!((records.len() as f64 - 2e5).abs() / 2e5 < 0.05);
    }

    #[test]
    fn point_mass_profile() {
        let spec = PopulationSpec {
            users: 1,
            readers: 5,
            days: 20,
            profile: ProfileKind::PointMass { hour: 9, reader: 2 },
            ..PopulationSpec::default()
        };
        let records = generate_log(&spec, &mut stream_rng(3, 0)).unwrap();
        assert!(!records.is_empty());
        for r in &records {
            assert_eq!((r.timestamp.hour(), r.reader_id.as_str(), r.user_id.as_str()), (9, "door-02", "u0000"));
        }
    }

    #[test]
    fn generator_is_seeded() {
        let spec = PopulationSpec {
            users: 20,
            readers: 6,
            days: 5,
            ..PopulationSpec::default()
        };
        let a = generate_log(&spec, &mut stream_rng(4, 0)).unwrap();
        let b = generate_log(&spec, &mut stream_rng(4, 0)).unwrap();
        let c = generate_log(&spec, &mut stream_rng(5, 0)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn csv_round_trip_preserves_discretization() {
        let spec = PopulationSpec {
            users: 30,
            readers: 7,
            days: 10,
            ..PopulationSpec::default()
        };
        let records = generate_log(&spec, &mut stream_rng(6, 0)).unwrap();
        let mut buf = Vec::new();
        write_log(&records, &mut buf).unwrap();
        let parsed = parse_log(buf.as_slice(), &LogSchema::default()).unwrap();
        assert_eq!(parsed.records, records);
        assert_eq!(discretize(&parsed.records).unwrap(), discretize(&records).unwrap());
        let ds = discretize(&records).unwrap();
        assert_eq!(ds.total_count(), records.len() as u64);
    }

    #[test]
    fn spec_validation() {
        let bad = PopulationSpec {
            users: 10,
            readers: 5,
            profile: ProfileKind::DisjointDoors,
            ..PopulationSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = PopulationSpec {
            profile: ProfileKind::PointMass { hour: 24, reader: 0 },
            ..PopulationSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn shared_entrance_profiles() {
        let spec = PopulationSpec {
            users: 20,
            readers: 12,
            profile: ProfileKind::SharedEntrances {
                entrances: 3,
                personal_readers: 2,
                personal_share: 0.25,
            },
            ..PopulationSpec::default()
        };
        let profiles = spec.user_profiles(&mut stream_rng(3, 0)).unwrap();
        for p in &profiles {
            let mut per_door = vec![0.0; spec.readers];
            for (cell, q) in p.probs().iter().enumerate() {
                per_door[cell % spec.readers] += q;
            }
            let shared: f64 = per_door[..3].iter().sum();
            assert!((shared - 0.75).abs() < 1e-12);
            let own: Vec<f64> = per_door[3..].iter().copied().filter(|&q| q > 0.0).collect();
            assert_eq!(own.len(), 2);
            assert!(own.iter().all(|q| (q - 0.125).abs() < 1e-12));
        }
        let bad = PopulationSpec {
            profile: ProfileKind::SharedEntrances {
                entrances: 10,
                personal_readers: 3,
                personal_share: 0.5,
            },
            ..spec
        };
        assert!(bad.validate().is_err());
    }
}
