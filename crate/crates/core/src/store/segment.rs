//! Append-only segment files.
//!
//! Each segment is newline-delimited JSON, one [`LogEntry`] per line. New
//! entries go to the highest-numbered segment; a segment is closed once it
//! passes `max_bytes`. Compaction writes the live state into a fresh segment
//! and unlinks every older one, which is the only point at which deleted
//! records physically leave the disk.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::record::TweetRecord;
use super::StoreError;

const SEGMENT_PREFIX: &str = "seg-";
const SEGMENT_SUFFIX: &str = ".jsonl";

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub(crate) enum LogEntry {
    Meta { next_seq: u64 },
    Put { seq: u64, record: TweetRecord },
    Delete { seq: u64, id: String },
    BanStatus { id: String },
    BanUser { author_id: String },
}

/// Borrowing twin of [`LogEntry`] so appends do not clone records.
#[derive(Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub(crate) enum LogEntryRef<'a> {
    Meta { next_seq: u64 },
    Put { seq: u64, record: &'a TweetRecord },
    Delete { seq: u64, id: &'a str },
    BanStatus { id: &'a str },
    BanUser { author_id: &'a str },
}

pub(crate) struct SegmentLog {
    dir: PathBuf,
    index: u64,
    writer: BufWriter<File>,
    bytes: u64,
    max_bytes: u64,
}

fn segment_path(dir: &Path, index: u64) -> PathBuf {
    dir.join(format!("{SEGMENT_PREFIX}{index:08}{SEGMENT_SUFFIX}"))
}

fn list_segments(dir: &Path) -> io::Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(num) = name
            .strip_prefix(SEGMENT_PREFIX)
            .and_then(|s| s.strip_suffix(SEGMENT_SUFFIX))
        else {
            continue;
        };
        if let Ok(index) = num.parse::<u64>() {
            out.push((index, entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

fn open_append(path: &Path) -> io::Result<(BufWriter<File>, u64)> {
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let len = file.metadata()?.len();
    Ok((BufWriter::new(file), len))
}

impl SegmentLog {
    /// Opens (or creates) the log in `dir` and returns every entry on disk in
    /// write order. A torn final line in the newest segment is dropped.
    pub(crate) fn open(dir: &Path, max_bytes: u64) -> Result<(Self, Vec<LogEntry>), StoreError> {
        fs::create_dir_all(dir)?;
        let segments = list_segments(dir)?;
        let mut entries = Vec::new();
        let last = segments.len().saturating_sub(1);
        for (i, (_, path)) in segments.iter().enumerate() {
            let mut reader = BufReader::new(File::open(path)?);
            let mut buf = Vec::new();
            let mut offset = 0u64;
            let mut line_no = 0usize;
            loop {
                buf.clear();
                let n = reader.read_until(b'\n', &mut buf)?;
                if n == 0 {
                    break;
                }
                line_no += 1;
                let at_eof = reader.fill_buf()?.is_empty();
                let body = buf.strip_suffix(b"\n").unwrap_or(&buf);
                if !body.is_empty() {
                    match serde_json::from_slice::<LogEntry>(body) {
                        Ok(e) => entries.push(e),
                        Err(_) if i == last && at_eof => {
                            log::warn!("truncating torn trailing entry in {}", path.display());
                            OpenOptions::new().write(true).open(path)?.set_len(offset)?;
                            break;
                        }
                        Err(e) => {
                            return Err(StoreError::Corrupt {
                                segment: path.display().to_string(),
                                line: line_no,
                                reason: e.to_string(),
                            })
                        }
                    }
                }
                offset += n as u64;
            }
        }
        let index = segments.last().map(|(i, _)| *i).unwrap_or(1);
        let (writer, bytes) = open_append(&segment_path(dir, index))?;
        let log = SegmentLog {
            dir: dir.to_path_buf(),
            index,
            writer,
            bytes,
            max_bytes,
        };
        Ok((log, entries))
    }

    pub(crate) fn append(&mut self, entry: &LogEntryRef<'_>) -> io::Result<()> {
        let mut line = serde_json::to_vec(entry).map_err(io::Error::other)?;
        line.push(b'\n');
        if self.bytes > 0 && self.bytes + line.len() as u64 > self.max_bytes {
            self.roll()?;
        }
        self.writer.write_all(&line)?;
        self.bytes += line.len() as u64;
        Ok(())
    }

    pub(crate) fn flush(&mut self) -> io::Result<()> {
        self.writer.flush()
    }

    pub(crate) fn sync(&mut self) -> io::Result<()> {
        self.writer.flush()?;
        self.writer.get_ref().sync_data()
    }

    fn roll(&mut self) -> io::Result<()> {
        self.sync()?;
        self.index += 1;
        let (writer, bytes) = open_append(&segment_path(&self.dir, self.index))?;
        self.writer = writer;
        self.bytes = bytes;
        Ok(())
    }

    /// Replaces every segment with a single new one holding `entries`.
    pub(crate) fn rewrite<'a, I>(&mut self, entries: I) -> io::Result<()>
    where
        I: IntoIterator<Item = LogEntryRef<'a>>,
    {
        self.sync()?;
        let new_index = self.index + 1;
        let final_path = segment_path(&self.dir, new_index);
        let tmp_path = final_path.with_extension("jsonl.tmp");
        let mut bytes = 0u64;
        {
            let mut w = BufWriter::new(File::create(&tmp_path)?);
            for e in entries {
                let mut line = serde_json::to_vec(&e).map_err(io::Error::other)?;
                line.push(b'\n');
                w.write_all(&line)?;
                bytes += line.len() as u64;
            }
            w.flush()?;
            w.get_ref().sync_all()?;
        }
        fs::rename(&tmp_path, &final_path)?;
        for (index, path) in list_segments(&self.dir)? {
            if index < new_index {
                fs::remove_file(path)?;
            }
        }
        let (writer, len) = open_append(&final_path)?;
        debug_assert_eq!(len, bytes);
        self.index = new_index;
        self.writer = writer;
        self.bytes = len;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_are_tagged_by_op() {
        let line = serde_json::to_string(&LogEntryRef::Delete { seq: 3, id: "x" }).unwrap();
        assert_eq!(line, r#"{"op":"delete","seq":3,"id":"x"}"#);
        let back: LogEntry = serde_json::from_str(&line).unwrap();
        assert!(matches!(back, LogEntry::Delete { seq: 3, .. }));
    }

    #[test]
    fn rolls_segments_and_rewrite_removes_old_ones() {
        let dir = tempfile::tempdir().unwrap();
        let (mut log, entries) = SegmentLog::open(dir.path(), 64).unwrap();
        assert!(entries.is_empty());
        for seq in 0..10 {
            log.append(&LogEntryRef::Delete { seq, id: "abcdefgh" }).unwrap();
        }
        log.flush().unwrap();
        assert!(list_segments(dir.path()).unwrap().len() > 1);

        log.rewrite([LogEntryRef::Meta { next_seq: 10 }]).unwrap();
        let segs = list_segments(dir.path()).unwrap();
        assert_eq!(segs.len(), 1);
        drop(log);
        let (_, entries) = SegmentLog::open(dir.path(), 64).unwrap();
        assert!(matches!(entries[..], [LogEntry::Meta { next_seq: 10 }]));
    }

    #[test]
    fn torn_tail_is_dropped_but_interior_corruption_is_not() {
        let dir = tempfile::tempdir().unwrap();
        let (mut log, _) = SegmentLog::open(dir.path(), 1 << 20).unwrap();
        log.append(&LogEntryRef::BanStatus { id: "a" }).unwrap();
        log.flush().unwrap();
        drop(log);
        let path = segment_path(dir.path(), 1);
        let mut content = fs::read_to_string(&path).unwrap();
        content.push_str("{\"op\":\"ban_st");
        fs::write(&path, &content).unwrap();
        let (mut log, entries) = SegmentLog::open(dir.path(), 1 << 20).unwrap();
        assert_eq!(entries.len(), 1);
        log.append(&LogEntryRef::BanStatus { id: "c" }).unwrap();
        log.flush().unwrap();
        drop(log);
        let (_, entries) = SegmentLog::open(dir.path(), 1 << 20).unwrap();
        assert_eq!(entries.len(), 2);

        content.push_str("\n{\"op\":\"ban_status\",\"id\":\"b\"}\n");
        fs::write(&path, &content).unwrap();
        assert!(matches!(
            SegmentLog::open(dir.path(), 1 << 20),
            Err(StoreError::Corrupt { line: 2, .. })
        ));
    }
}
