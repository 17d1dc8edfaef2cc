//! CSV records of `(timestamp, value)` or a bare value column.

use std::io::Read;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Identity of an observation in the output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Timestamp {
    /// 1-based position in the input.
    Index(u64),
    Text(String),
}

impl std::fmt::Display for Timestamp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Timestamp::Index(i) => write!(f, "{i}"),
            Timestamp::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamRecord {
    pub timestamp: Timestamp,
    pub value: f64,
}

/// Formats accepted for wall-clock timestamps without an offset.
const NAIVE_FORMATS: [&str; 3] = [
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M",
];

pub fn parse_datetime(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_utc());
    }
    NAIVE_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .ok()
                .and_then(|d| d.and_hms_opt(0, 0, 0))
        })
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
enum OrderKey {
    Number(f64),
    Time(NaiveDateTime),
}

fn order_key(s: &str) -> Option<OrderKey> {
    if let Ok(v) = s.trim().parse::<f64>() {
        return Some(OrderKey::Number(v));
    }
    parse_datetime(s).map(OrderKey::Time)
}

fn looks_like_header(fields: &csv::StringRecord) -> bool {
    let numeric = fields.iter().any(|f| f.trim().parse::<f64>().is_ok());
    let leading_digit = fields
        .get(0)
        .is_some_and(|f| f.trim().starts_with(|c: char| c.is_ascii_digit()));
    !numeric && !leading_digit
}

/// Streams records from CSV text. The first line is skipped when it looks
/// like a header. Timestamps that parse as numbers or dates must not
/// decrease.
pub struct RecordReader<R: Read> {
    rows: csv::StringRecordsIntoIter<R>,
    index_time: bool,
    count: u64,
    last_key: Option<OrderKey>,
    first: bool,
}

impl<R: Read> RecordReader<R> {
    pub fn new(input: R, index_time: bool) -> Self {
        let rows = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(input)
            .into_records();
        Self {
            rows,
            index_time,
            count: 0,
            last_key: None,
            first: true,
        }
    }

    fn parse(&mut self, fields: &csv::StringRecord, line: u64) -> Result<StreamRecord, CliError> {
        let fail = |message: String| CliError::Parse { line, message };
        let (ts, raw) = match fields.len() {
            1 => (None, &fields[0]),
            2 => (Some(&fields[0]), &fields[1]),
            n => return Err(fail(format!("expected 1 or 2 columns, found {n}"))),
        };
        let value: f64 = raw
            .parse()
            .map_err(|_| fail(format!("value {raw:?} is not a number")))?;
        if !value.is_finite() {
            return Err(fail(format!("value {raw:?} is not finite")));
        }
        self.count += 1;
        let timestamp = match ts {
            Some(ts) if !self.index_time => {
                if let Some(key) = order_key(ts) {
                    let decreasing = match (self.last_key, key) {
                        (Some(prev @ OrderKey::Number(_)), OrderKey::Number(_))
                        | (Some(prev @ OrderKey::Time(_)), OrderKey::Time(_)) => key < prev,
                        _ => false,
                    };
                    if decreasing {
                        return Err(fail(format!(
                            "timestamp {ts:?} is earlier than the previous one"
                        )));
                    }
                    self.last_key = Some(key);
                }
                Timestamp::Text(ts.to_string())
            }
            _ => Timestamp::Index(self.count),
        };
        Ok(StreamRecord { timestamp, value })
    }
}

impl<R: Read> Iterator for RecordReader<R> {
    type Item = Result<StreamRecord, CliError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let row = match self.rows.next()? {
                Ok(row) => row,
                Err(e) => {
                    let line = e.position().map_or(0, |p| p.line());
                    return Some(Err(CliError::Parse {
                        line,
                        message: e.to_string(),
                    }));
                }
            };
            let line = row.position().map_or(0, |p| p.line());
            if row.iter().all(|f| f.is_empty()) {
                continue;
            }
            if std::mem::take(&mut self.first) && looks_like_header(&row) {
                continue;
            }
            return Some(self.parse(&row, line));
        }
    }
}

pub fn read_all<R: Read>(input: R, index_time: bool) -> Result<Vec<StreamRecord>, CliError> {
    RecordReader::new(input, index_time).collect()
}
