use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::language;

/// A tweet as acquired, with all-time engagement totals attached.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TweetRecord {
    pub id: String,
    pub author_id: String,
    pub followers_count: u64,
    pub friends_count: u64,
    pub statuses_count: u64,
    pub actor_favorites_count: u64,
    pub actor_listed_count: u64,
    pub actor_verified: bool,
    pub account_created_at: DateTime<Utc>,
    pub posted_at: DateTime<Utc>,
    pub is_quote: bool,
    pub mention_count: u64,
    pub hashtags_count: u64,
    pub media_count: u64,
    pub url_count: u64,
    pub symbol_count: u64,
    pub language_code: String,
    pub text: String,
    pub retweet_total: u64,
    pub favorite_total: u64,
}

impl TweetRecord {
    /// Checks the invariants the schema alone cannot express. Count fields
    /// are unsigned, so negative counts are already rejected at parse time.
    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.author_id.is_empty() {
            return Err("empty author_id".into());
        }
        if self.posted_at < self.account_created_at {
            return Err(format!(
                "posted_at {} precedes account_created_at {}",
                self.posted_at, self.account_created_at
            ));
        }
        if !language::is_supported(&self.language_code) {
            return Err(format!("unsupported language_code {:?}", self.language_code));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplianceKind {
    DeleteStatus,
    DeleteUser,
}

/// A platform deletion directive, either for one document or for every
/// document of an author.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplianceRequest {
    pub kind: ComplianceKind,
    pub target_id: String,
    pub received_at: DateTime<Utc>,
}

impl ComplianceRequest {
    pub fn delete_status(id: impl Into<String>, received_at: DateTime<Utc>) -> Self {
        ComplianceRequest {
            kind: ComplianceKind::DeleteStatus,
            target_id: id.into(),
            received_at,
        }
    }

    pub fn delete_user(author_id: impl Into<String>, received_at: DateTime<Utc>) -> Self {
        ComplianceRequest {
            kind: ComplianceKind::DeleteUser,
            target_id: author_id.into(),
            received_at,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.target_id.is_empty() {
            return Err("empty target_id".into());
        }
        Ok(())
    }
}

/// A rejected input line or item, with a human-readable reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based line number for file input, or 1-based position in the stream.
    pub position: usize,
    pub reason: String,
}

/// Parses newline-delimited JSON. Blank lines are skipped; every other line
/// yields either a value or a per-line rejection.
pub fn parse_jsonl<T, R>(reader: R) -> impl Iterator<Item = Result<T, Rejection>>
where
    T: serde::de::DeserializeOwned,
    R: std::io::BufRead,
{
    reader
        .lines()
        .enumerate()
        .filter_map(|(i, line)| {
            let position = i + 1;
            match line {
                Err(e) => Some(Err(Rejection {
                    position,
                    reason: format!("read error: {e}"),
                })),
                Ok(l) if l.trim().is_empty() => None,
                Ok(l) => Some(serde_json::from_str::<T>(&l).map_err(|e| Rejection {
                    position,
                    reason: format!("malformed: {e}"),
                })),
            }
        })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use chrono::TimeZone;

    pub(crate) fn sample(id: &str, author: &str) -> TweetRecord {
        TweetRecord {
            id: id.into(),
            author_id: author.into(),
            followers_count: 10,
            friends_count: 5,
            statuses_count: 100,
            actor_favorites_count: 3,
            actor_listed_count: 99,
            actor_verified: false,
            account_created_at: Utc.with_ymd_and_hms(2015, 1, 1, 0, 0, 0).unwrap(),
            posted_at: Utc.with_ymd_and_hms(2017, 3, 4, 13, 30, 0).unwrap(),
            is_quote: false,
            mention_count: 1,
            hashtags_count: 2,
            media_count: 0,
            url_count: 1,
            symbol_count: 0,
            language_code: "en".into(),
            text: "hello world".into(),
            retweet_total: 4,
            favorite_total: 7,
        }
    }

    #[test]
    fn json_round_trip_uses_snake_case_and_rfc3339() {
        let r = sample("1", "a");
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"account_created_at\":\"2015-01-01T00:00:00Z\""));
        assert!(s.contains("\"retweet_total\":4"));
        let back: TweetRecord = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn negative_count_is_a_parse_error() {
        let mut v = serde_json::to_value(sample("1", "a")).unwrap();
        v["mention_count"] = serde_json::json!(-1);
        assert!(serde_json::from_value::<TweetRecord>(v).is_err());
    }

    #[test]
    fn validate_rejects_time_travel_and_unknown_language() {
        let mut r = sample("1", "a");
        r.posted_at = Utc.with_ymd_and_hms(2014, 1, 1, 0, 0, 0).unwrap();
        assert!(r.validate().unwrap_err().contains("precedes"));
        let mut r = sample("1", "a");
        r.language_code = "xx".into();
        assert!(r.validate().is_err());
        assert!(sample("1", "a").validate().is_ok());
    }

    #[test]
    fn compliance_request_wire_format() {
        let line = r#"{"kind":"delete_user","target_id":"u1","received_at":"2018-05-25T10:00:00+00:00"}"#;
        let req: ComplianceRequest = serde_json::from_str(line).unwrap();
        assert_eq!(req.kind, ComplianceKind::DeleteUser);
        assert_eq!(req.target_id, "u1");
        assert!(serde_json::from_str::<ComplianceRequest>(r#"{"kind":"purge","target_id":"x","received_at":"2018-05-25T10:00:00Z"}"#).is_err());
    }

    #[test]
    fn jsonl_reports_line_numbers() {
        let input = format!(
            "{}\n\nnot json\n{}\n",
            serde_json::to_string(&sample("1", "a")).unwrap(),
            serde_json::to_string(&sample("2", "a")).unwrap()
        );
        let items: Vec<_> = parse_jsonl::<TweetRecord, _>(input.as_bytes()).collect();
        assert_eq!(items.len(), 3);
        assert!(items[0].is_ok());
        assert_eq!(items[1].as_ref().unwrap_err().position, 3);
        assert_eq!(items[2].as_ref().unwrap().id, "2");
    }
}
