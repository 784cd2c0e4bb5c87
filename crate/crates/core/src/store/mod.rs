//! Compliance-aware document store.
//!
//! Records are appended to segment files and indexed in memory. Deletions
//! are masked from every query path as soon as they are applied and are
//! physically removed from disk by [`Store::compact`]. Every mutation takes a
//! sequence number; a [`Snapshot`] records the sequence number it observed.
//!
//! All operations take `&self` and may be called from many threads. Each
//! single-document mutation is atomic, and snapshots see a consistent cut.

mod record;
mod segment;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use record::{parse_jsonl, ComplianceKind, ComplianceRequest, Rejection, TweetRecord};
use segment::{LogEntry, LogEntryRef, SegmentLog};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt segment {segment} line {line}: {reason}")]
    Corrupt {
        segment: String,
        line: usize,
        reason: String,
    },
}

#[derive(Debug, Clone)]
pub struct StoreOptions {
    /// When set, deletion requests become standing bans: a later ingest of a
    /// deleted id (or of any document by a deleted author) is refused.
    pub remember_deletions: bool,
    /// Segment size after which a new segment file is started.
    pub segment_max_bytes: u64,
    /// Compact automatically once this many deletions are pending on disk.
    /// `0` disables automatic compaction.
    pub compact_after: usize,
}

impl Default for StoreOptions {
    fn default() -> Self {
        StoreOptions {
            remember_deletions: false,
            segment_max_bytes: 64 << 20,
            compact_after: 1000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub accepted: usize,
    pub rejected_duplicates: usize,
    pub rejected_malformed: usize,
    pub rejected_previously_deleted: usize,
    pub rejections: Vec<Rejection>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceSummary {
    pub deleted_documents: usize,
    pub affected_authors: usize,
    pub rejected_malformed: usize,
    pub rejections: Vec<Rejection>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IngestOutcome {
    Accepted { seq: u64 },
    Duplicate,
    PreviouslyDeleted,
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CompactionSummary {
    pub compacted: bool,
    pub purged_entries: usize,
    pub live_records: usize,
}

/// Optional restriction applied by [`Store::snapshot`].
#[derive(Debug, Clone, Default)]
pub struct SnapshotFilter {
    pub language: Option<String>,
    /// Inclusive lower bound on `posted_at`.
    pub posted_from: Option<DateTime<Utc>>,
    /// Exclusive upper bound on `posted_at`.
    pub posted_until: Option<DateTime<Utc>>,
}

impl SnapshotFilter {
    pub fn language(code: impl Into<String>) -> Self {
        SnapshotFilter {
            language: Some(code.into()),
            ..Default::default()
        }
    }

    fn matches(&self, r: &TweetRecord) -> bool {
        self.language.as_deref().is_none_or(|l| r.language_code == l)
            && self.posted_from.is_none_or(|t| r.posted_at >= t)
            && self.posted_until.is_none_or(|t| r.posted_at < t)
    }
}

/// Live records as of one sequence number, in ingest order.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub as_of_seq: u64,
    pub records: Vec<Arc<TweetRecord>>,
}

impl Snapshot {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.id.as_str())
    }
}

#[derive(Default)]
struct Inner {
    next_seq: u64,
    live: BTreeMap<u64, Arc<TweetRecord>>,
    by_id: HashMap<String, u64>,
    by_author: HashMap<String, BTreeSet<u64>>,
    banned_ids: HashSet<String>,
    banned_authors: HashSet<String>,
    pending_deletes: usize,
    log: Option<SegmentLog>,
}

impl Inner {
    fn bump(&mut self) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        seq
    }

    fn insert(&mut self, seq: u64, record: Arc<TweetRecord>) {
        self.by_id.insert(record.id.clone(), seq);
        self.by_author
            .entry(record.author_id.clone())
            .or_default()
            .insert(seq);
        self.live.insert(seq, record);
    }

    fn remove_seq(&mut self, seq: u64) -> Option<Arc<TweetRecord>> {
        let record = self.live.remove(&seq)?;
        self.by_id.remove(&record.id);
        if let Some(set) = self.by_author.get_mut(&record.author_id) {
            set.remove(&seq);
            if set.is_empty() {
                self.by_author.remove(&record.author_id);
            }
        }
        Some(record)
    }

    fn replay(&mut self, entries: Vec<LogEntry>) {
        for entry in entries {
            match entry {
                LogEntry::Meta { next_seq } => self.next_seq = self.next_seq.max(next_seq),
                LogEntry::Put { seq, record } => {
                    self.next_seq = self.next_seq.max(seq + 1);
                    if let Some(old) = self.by_id.get(&record.id).copied() {
                        self.remove_seq(old);
                    }
                    self.insert(seq, Arc::new(record));
                }
                LogEntry::Delete { seq, id } => {
                    self.next_seq = self.next_seq.max(seq + 1);
                    if let Some(s) = self.by_id.get(&id).copied() {
                        self.remove_seq(s);
                    }
                    self.pending_deletes += 1;
                }
                LogEntry::BanStatus { id } => {
                    self.banned_ids.insert(id);
                }
                LogEntry::BanUser { author_id } => {
                    self.banned_authors.insert(author_id);
                }
            }
        }
    }

    fn append(&mut self, entry: LogEntryRef<'_>) -> Result<(), StoreError> {
        if let Some(log) = self.log.as_mut() {
            log.append(&entry)?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<(), StoreError> {
        if let Some(log) = self.log.as_mut() {
            log.flush()?;
        }
        Ok(())
    }

    fn ingest(&mut self, record: TweetRecord, remember: bool) -> Result<IngestOutcome, StoreError> {
        if let Err(reason) = record.validate() {
            return Ok(IngestOutcome::Invalid(reason));
        }
        if self.by_id.contains_key(&record.id) {
            return Ok(IngestOutcome::Duplicate);
        }
        if remember
            && (self.banned_ids.contains(&record.id)
                || self.banned_authors.contains(&record.author_id))
        {
            return Ok(IngestOutcome::PreviouslyDeleted);
        }
        let seq = self.bump();
        self.append(LogEntryRef::Put {
            seq,
            record: &record,
        })?;
        self.insert(seq, Arc::new(record));
        Ok(IngestOutcome::Accepted { seq })
    }

    /// Returns the authors of the removed documents, one entry per document.
    fn apply(&mut self, req: &ComplianceRequest, remember: bool) -> Result<Vec<String>, StoreError> {
        let seqs: Vec<u64> = match req.kind {
            ComplianceKind::DeleteStatus => self.by_id.get(&req.target_id).copied().into_iter().collect(),
            ComplianceKind::DeleteUser => self
                .by_author
                .get(&req.target_id)
                .map(|s| s.iter().copied().collect())
                .unwrap_or_default(),
        };
        let mut authors = Vec::with_capacity(seqs.len());
        for seq in seqs {
            let id = self.live[&seq].id.clone();
            let del_seq = self.bump();
            self.append(LogEntryRef::Delete {
                seq: del_seq,
                id: &id,
            })?;
            if let Some(rec) = self.remove_seq(seq) {
                authors.push(rec.author_id.clone());
            }
            self.pending_deletes += 1;
        }
        if remember {
            match req.kind {
                ComplianceKind::DeleteStatus => {
                    if self.banned_ids.insert(req.target_id.clone()) {
                        self.append(LogEntryRef::BanStatus { id: &req.target_id })?;
                    }
                }
                ComplianceKind::DeleteUser => {
                    if self.banned_authors.insert(req.target_id.clone()) {
                        self.append(LogEntryRef::BanUser {
                            author_id: &req.target_id,
                        })?;
                    }
                }
            }
        }
        Ok(authors)
    }

    fn compact(&mut self) -> Result<CompactionSummary, StoreError> {
        let live_records = self.live.len();
        if self.pending_deletes == 0 {
            return Ok(CompactionSummary {
                compacted: false,
                purged_entries: 0,
                live_records,
            });
        }
        let purged = self.pending_deletes;
        if let Some(mut log) = self.log.take() {
            let mut bans: Vec<&String> = self.banned_ids.iter().collect();
            bans.sort();
            let mut user_bans: Vec<&String> = self.banned_authors.iter().collect();
            user_bans.sort();
            let entries = std::iter::once(LogEntryRef::Meta {
                next_seq: self.next_seq,
            })
            .chain(bans.into_iter().map(|id| LogEntryRef::BanStatus { id }))
            .chain(
                user_bans
                    .into_iter()
                    .map(|author_id| LogEntryRef::BanUser { author_id }),
            )
            .chain(
                self.live
                    .iter()
                    .map(|(&seq, record)| LogEntryRef::Put { seq, record }),
            );
            let result = log.rewrite(entries);
            self.log = Some(log);
            result?;
        }
        self.pending_deletes = 0;
        Ok(CompactionSummary {
            compacted: true,
            purged_entries: purged,
            live_records,
        })
    }
}

pub struct Store {
    inner: RwLock<Inner>,
    options: StoreOptions,
}

impl Store {
    /// A store without persistence, for tests and one-shot analysis.
    pub fn in_memory(options: StoreOptions) -> Self {
        Store {
            inner: RwLock::new(Inner::default()),
            options,
        }
    }

    /// Opens the store in `dir`, replaying every segment found there.
    pub fn open(dir: impl AsRef<Path>, options: StoreOptions) -> Result<Self, StoreError> {
        let (log, entries) = SegmentLog::open(dir.as_ref(), options.segment_max_bytes)?;
        let mut inner = Inner::default();
        inner.replay(entries);
        inner.log = Some(log);
        Ok(Store {
            inner: RwLock::new(inner),
            options,
        })
    }

    pub fn options(&self) -> &StoreOptions {
        &self.options
    }

    pub fn len(&self) -> usize {
        self.inner.read().live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Next sequence number to be assigned.
    pub fn sequence(&self) -> u64 {
        self.inner.read().next_seq
    }

    /// Deletions applied but not yet purged from disk.
    pub fn pending_deletes(&self) -> usize {
        self.inner.read().pending_deletes
    }

    pub fn contains(&self, id: &str) -> bool {
        self.inner.read().by_id.contains_key(id)
    }

    /// Ingests a single record atomically. The write is buffered; call
    /// [`Store::flush`] or use [`Store::ingest`] for batch durability.
    pub fn ingest_one(&self, record: TweetRecord) -> Result<IngestOutcome, StoreError> {
        self.inner
            .write()
            .ingest(record, self.options.remember_deletions)
    }

    /// Ingests a stream of parsed records. Each record is applied under its
    /// own lock acquisition, so concurrent snapshots and deletions interleave
    /// at record granularity.
    pub fn ingest<I>(&self, records: I) -> Result<IngestSummary, StoreError>
    where
        I: IntoIterator<Item = Result<TweetRecord, Rejection>>,
    {
        let mut summary = IngestSummary::default();
        for (i, item) in records.into_iter().enumerate() {
            let record = match item {
                Ok(r) => r,
                Err(rej) => {
                    summary.rejected_malformed += 1;
                    summary.rejections.push(rej);
                    continue;
                }
            };
            match self.ingest_one(record)? {
                IngestOutcome::Accepted { .. } => summary.accepted += 1,
                IngestOutcome::Duplicate => summary.rejected_duplicates += 1,
                IngestOutcome::PreviouslyDeleted => summary.rejected_previously_deleted += 1,
                IngestOutcome::Invalid(reason) => {
                    summary.rejected_malformed += 1;
                    summary.rejections.push(Rejection {
                        position: i + 1,
                        reason,
                    });
                }
            }
        }
        self.flush()?;
        Ok(summary)
    }

    /// Applies one request atomically and returns the number of documents
    /// it removed.
    pub fn apply_one(&self, request: &ComplianceRequest) -> Result<usize, StoreError> {
        if let Err(reason) = request.validate() {
            log::debug!("ignoring invalid compliance request: {reason}");
            return Ok(0);
        }
        let mut inner = self.inner.write();
        let removed = inner.apply(request, self.options.remember_deletions)?.len();
        inner.flush()?;
        Ok(removed)
    }

    /// Applies a stream of deletion requests. Requests for absent targets
    /// are legal no-ops, and re-applying a stream changes nothing.
    pub fn apply_compliance<I>(&self, requests: I) -> Result<ComplianceSummary, StoreError>
    where
        I: IntoIterator<Item = Result<ComplianceRequest, Rejection>>,
    {
        let mut summary = ComplianceSummary::default();
        let mut authors = HashSet::new();
        for (i, item) in requests.into_iter().enumerate() {
            let req = match item.and_then(|r| {
                r.validate()
                    .map(|_| r)
                    .map_err(|reason| Rejection { position: i + 1, reason })
            }) {
                Ok(r) => r,
                Err(rej) => {
                    summary.rejected_malformed += 1;
                    summary.rejections.push(rej);
                    continue;
                }
            };
            let removed = self
                .inner
                .write()
                .apply(&req, self.options.remember_deletions)?;
            summary.deleted_documents += removed.len();
            authors.extend(removed);
        }
        summary.affected_authors = authors.len();
        let mut inner = self.inner.write();
        inner.flush()?;
        if self.options.compact_after > 0 && inner.pending_deletes >= self.options.compact_after {
            inner.compact()?;
        }
        Ok(summary)
    }

    /// Rewrites the segments without deleted records or their tombstones.
    /// A no-op when nothing is pending.
    pub fn compact(&self) -> Result<CompactionSummary, StoreError> {
        self.inner.write().compact()
    }

    /// Returns the live records matching `filter` as of a single point in
    /// the sequence.
    pub fn snapshot(&self, filter: &SnapshotFilter) -> Snapshot {
        let inner = self.inner.read();
        Snapshot {
            as_of_seq: inner.next_seq,
            records: inner
                .live
                .values()
                .filter(|r| filter.matches(r))
                .cloned()
                .collect(),
        }
    }

    pub fn flush(&self) -> Result<(), StoreError> {
        self.inner.write().flush()
    }

    pub fn sync(&self) -> Result<(), StoreError> {
        if let Some(log) = self.inner.write().log.as_mut() {
            log.sync()?;
        }
        Ok(())
    }
}

impl Drop for Store {
    fn drop(&mut self) {
        if let Err(e) = self.inner.get_mut().flush() {
            log::error!("failed to flush store on drop: {e}");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::record::tests::sample;
    use super::*;
    use chrono::TimeZone;

    fn now() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2018, 5, 25, 0, 0, 0).unwrap()
    }

    fn ok(records: Vec<TweetRecord>) -> impl Iterator<Item = Result<TweetRecord, Rejection>> {
        records.into_iter().map(Ok)
    }

    fn del(id: &str) -> Result<ComplianceRequest, Rejection> {
        Ok(ComplianceRequest::delete_status(id, now()))
    }

    #[test]
    fn duplicate_ids_keep_the_first_record() {
        let store = Store::in_memory(StoreOptions::default());
        let mut second = sample("1", "b");
        second.text = "later".into();
        let s = store
            .ingest(ok(vec![sample("1", "a"), sample("2", "a"), second]))
            .unwrap();
        assert_eq!((s.accepted, s.rejected_duplicates), (2, 1));
        let snap = store.snapshot(&SnapshotFilter::default());
        assert_eq!(snap.records[0].text, "hello world");
    }

    #[test]
    fn empty_stream() {
        let store = Store::in_memory(StoreOptions::default());
        let s = store.ingest(std::iter::empty()).unwrap();
        assert_eq!((s.accepted, s.rejected_duplicates), (0, 0));
    }

    #[test]
    fn invalid_records_are_rejected_with_reason() {
        let store = Store::in_memory(StoreOptions::default());
        let mut bad = sample("1", "a");
        bad.language_code = "xx".into();
        let s = store
            .ingest(vec![
                Ok(bad),
                Err(Rejection {
                    position: 2,
                    reason: "malformed".into(),
                }),
                Ok(sample("3", "a")),
            ])
            .unwrap();
        assert_eq!(s.accepted, 1);
        assert_eq!(s.rejected_malformed, 2);
        assert!(s.rejections[0].reason.contains("language"));
    }

    #[test]
    fn delete_absent_is_noop_and_delete_user_removes_all() {
        let store = Store::in_memory(StoreOptions::default());
        let mut records: Vec<_> = (0..5).map(|i| sample(&format!("u1-{i}"), "u1")).collect();
        records.push(sample("other", "u2"));
        store.ingest(ok(records)).unwrap();

        let s = store.apply_compliance([del("missing")]).unwrap();
        assert_eq!((s.deleted_documents, s.affected_authors), (0, 0));

        let s = store
            .apply_compliance([Ok(ComplianceRequest::delete_user("u1", now()))])
            .unwrap();
        assert_eq!((s.deleted_documents, s.affected_authors), (5, 1));
        let ids: Vec<_> = store
            .snapshot(&SnapshotFilter::default())
            .ids()
            .map(String::from)
            .collect();
        assert_eq!(ids, vec!["other"]);
    }

    #[test]
    fn malformed_requests_are_rejected_individually() {
        let store = Store::in_memory(StoreOptions::default());
        store.ingest(ok(vec![sample("1", "a")])).unwrap();
        let s = store
            .apply_compliance([
                Ok(ComplianceRequest::delete_status("", now())),
                del("1"),
            ])
            .unwrap();
        assert_eq!(s.rejected_malformed, 1);
        assert_eq!(s.deleted_documents, 1);
    }

    #[test]
    fn reingest_after_deletion_follows_options() {
        let store = Store::in_memory(StoreOptions::default());
        store.apply_compliance([del("1")]).unwrap();
        assert_eq!(
            store.ingest_one(sample("1", "a")).unwrap(),
            IngestOutcome::Accepted { seq: 0 }
        );

        let strict = Store::in_memory(StoreOptions {
            remember_deletions: true,
            ..Default::default()
        });
        strict
            .apply_compliance([del("1"), Ok(ComplianceRequest::delete_user("banned", now()))])
            .unwrap();
        assert_eq!(
            strict.ingest_one(sample("1", "a")).unwrap(),
            IngestOutcome::PreviouslyDeleted
        );
        assert_eq!(
            strict.ingest_one(sample("2", "banned")).unwrap(),
            IngestOutcome::PreviouslyDeleted
        );
    }

    #[test]
    fn snapshot_language_and_time_filters() {
        let store = Store::in_memory(StoreOptions::default());
        let mut es = sample("2", "a");
        es.language_code = "es".into();
        let mut late = sample("3", "a");
        late.posted_at = Utc.with_ymd_and_hms(2017, 9, 1, 0, 0, 0).unwrap();
        store.ingest(ok(vec![sample("1", "a"), es, late])).unwrap();

        let en: Vec<_> = store
            .snapshot(&SnapshotFilter::language("en"))
            .ids()
            .map(String::from)
            .collect();
        assert_eq!(en, vec!["1", "3"]);

        let window = SnapshotFilter {
            posted_from: Some(Utc.with_ymd_and_hms(2017, 6, 1, 0, 0, 0).unwrap()),
            ..Default::default()
        };
        assert_eq!(store.snapshot(&window).len(), 1);
    }

    #[test]
    fn snapshot_after_deleting_everything_is_empty() {
        let store = Store::in_memory(StoreOptions::default());
        store
            .ingest(ok((0..10).map(|i| sample(&i.to_string(), "a")).collect()))
            .unwrap();
        store
            .apply_compliance([Ok(ComplianceRequest::delete_user("a", now()))])
            .unwrap();
        assert!(store.snapshot(&SnapshotFilter::default()).is_empty());
    }

    #[test]
    fn persistence_survives_reopen_and_compaction_purges_disk() {
        let dir = tempfile::tempdir().unwrap();
        let opts = StoreOptions {
            compact_after: 0,
            ..Default::default()
        };
        {
            let store = Store::open(dir.path(), opts.clone()).unwrap();
            let mut secret = sample("secret-doc", "a");
            secret.text = "please forget me".into();
            store
                .ingest(ok(vec![sample("1", "a"), secret, sample("3", "b")]))
                .unwrap();
            store.apply_compliance([del("secret-doc")]).unwrap();
            assert_eq!(store.pending_deletes(), 1);
        }
        let store = Store::open(dir.path(), opts.clone()).unwrap();
        assert_eq!(store.len(), 2);
        assert!(!store.contains("secret-doc"));
        assert_eq!(store.pending_deletes(), 1);

        let c = store.compact().unwrap();
        assert!(c.compacted);
        assert_eq!(c.live_records, 2);
        let on_disk = read_dir_bytes(dir.path());
        let text = String::from_utf8(on_disk).unwrap();
        assert!(!text.contains("secret-doc"));
        assert!(!text.contains("forget me"));

        // New writes continue after compaction, with fresh sequence numbers.
        assert_eq!(
            store.ingest_one(sample("4", "a")).unwrap(),
            IngestOutcome::Accepted { seq: 4 }
        );
        drop(store);
        let store = Store::open(dir.path(), opts).unwrap();
        assert_eq!(store.len(), 3);
        assert_eq!(store.sequence(), 5);
    }

    #[test]
    fn auto_compaction_threshold() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(
            dir.path(),
            StoreOptions {
                compact_after: 2,
                ..Default::default()
            },
        )
        .unwrap();
        store
            .ingest(ok((0..4).map(|i| sample(&i.to_string(), "a")).collect()))
            .unwrap();
        store.apply_compliance([del("0")]).unwrap();
        assert_eq!(store.pending_deletes(), 1);
        store.apply_compliance([del("1")]).unwrap();
        assert_eq!(store.pending_deletes(), 0);
    }

    #[test]
    fn repeated_compliance_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path(), StoreOptions::default()).unwrap();
        store
            .ingest(ok((0..20).map(|i| sample(&i.to_string(), &format!("a{}", i % 3))).collect()))
            .unwrap();
        let requests = || {
            vec![
                del("3"),
                del("absent"),
                Ok(ComplianceRequest::delete_user("a1", now())),
            ]
        };
        store.apply_compliance(requests()).unwrap();
        store.compact().unwrap();
        let once = read_dir_bytes(dir.path());
        let s = store.apply_compliance(requests()).unwrap();
        assert_eq!(s.deleted_documents, 0);
        store.compact().unwrap();
        assert_eq!(read_dir_bytes(dir.path()), once);
    }

    pub(crate) fn read_dir_bytes(dir: &Path) -> Vec<u8> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        paths.sort();
        let mut out = Vec::new();
        for p in paths {
            out.extend(p.file_name().unwrap().to_string_lossy().as_bytes());
            out.push(0);
            out.extend(std::fs::read(p).unwrap());
        }
        out
    }
}
