use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

/// A typed attribute cell. Empty CSV cells become `Missing`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Number(f64),
    Category(String),
    /// Seconds since the Unix epoch (naive, assumed UTC).
    DateTime(i64),
    Missing,
}

impl Value {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }

    /// Canonical CSV rendering. `Missing` renders as the empty cell.
    pub fn to_csv(&self) -> String {
        match self {
            Value::Number(x) => format!("{x}"),
            Value::Category(s) => s.clone(),
            Value::DateTime(secs) => format_datetime(*secs),
            Value::Missing => String::new(),
        }
    }
}

pub fn format_datetime(epoch_secs: i64) -> String {
    match chrono::DateTime::from_timestamp(epoch_secs, 0) {
        Some(dt) => dt.naive_utc().format("%Y-%m-%dT%H:%M:%S").to_string(),
        None => String::new(),
    }
}

/// Accepts ISO-8601 timestamps with or without a `T` separator, a trailing
/// `Z`/offset, fractional seconds (truncated), or a plain date.
pub fn parse_datetime(cell: &str) -> Option<i64> {
    let s = cell.trim();
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    if let Ok(d) = chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp());
    }
    None
}
