//! ISO-8601 timestamps kept as their original string, compared by instant.

use chrono::{DateTime, NaiveDate, NaiveDateTime, SecondsFormat, Utc};

use crate::error::{PalaceError, Result};

/// Parses RFC 3339, a naive `YYYY-MM-DDTHH:MM:SS[.f]` (taken as UTC), or a
/// bare `YYYY-MM-DD` (midnight UTC).
pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(naive.and_utc());
        }
    }
    if let Ok(date) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        if let Some(naive) = date.and_hms_opt(0, 0, 0) {
            return Ok(naive.and_utc());
        }
    }
    Err(PalaceError::invalid(format!("not an ISO-8601 timestamp: {s:?}")))
}

pub fn format_timestamp(dt: DateTime<Utc>) -> String {
    dt.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn now_timestamp() -> String {
    format_timestamp(Utc::now())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_common_forms() {
        let a = parse_timestamp("2026-01-01").unwrap();
        let b = parse_timestamp("2026-01-01T00:00:00Z").unwrap();
        let c = parse_timestamp("2026-01-01T00:00:00").unwrap();
        let d = parse_timestamp("2026-01-01T01:00:00+01:00").unwrap();
        assert_eq!(a, b);
        assert_eq!(b, c);
        assert_eq!(c, d);
        assert!(parse_timestamp("yesterday").is_err());
    }

    #[test]
    fn format_is_utc_seconds() {
        let t = parse_timestamp("2026-03-01T12:30:00+02:00").unwrap();
        assert_eq!(format_timestamp(t), "2026-03-01T10:30:00Z");
    }
}
