//! Append-only JSONL run log.
//!
//! Line one is a [`LogHeader`] freezing the run parameters; every later
//! line is one [`LogRecord`] per evaluated experiment, written and flushed
//! as soon as the measurement finishes. A crash can therefore lose at most
//! the line it was writing, and [`read_log`] silently drops such a torn
//! final line so a resume can pick up right behind it.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOG_VERSION: u32 = 1;

/// First line of every log: everything a resume must agree on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub version: u32,
    /// Normalized (sorted, deduplicated) tile sizes.
    pub tile_sizes: Vec<u64>,
    pub enable_parallel: bool,
    /// The evaluator's identity string.
    pub evaluator: String,
    /// Baseline loop nests, in the compiler report schema.
    pub loopnests: serde_json::Value,
}

/// One evaluated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub number: u64,
    /// `None` only for the baseline.
    pub parent: Option<u64>,
    /// Rendered pragma lines, one list per nest.
    pub transformations: Vec<Vec<String>>,
    /// `ok`, `compile-failed`, `run-failed`, or `timeout`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

pub struct LogWriter {
    file: File,
}

impl LogWriter {
    /// Starts a fresh log, replacing any existing file.
    pub fn create(path: &Path, header: &LogHeader) -> Result<LogWriter> {
        let mut file = File::create(path)?;
        writeln!(file, "{}", serde_json::to_string(header).expect("header serializes"))?;
        file.flush()?;
        Ok(LogWriter { file })
    }

    /// Reopens an existing log for appending, first cutting it back to
    /// `valid_len` so a torn final line cannot corrupt the next record.
    pub fn append_to(path: &Path, valid_len: u64) -> Result<LogWriter> {
        let file = OpenOptions::new().append(true).open(path)?;
        file.set_len(valid_len)?;
        Ok(LogWriter { file })
    }

    pub fn append(&mut self, record: &LogRecord) -> Result<()> {
        writeln!(
            self.file,
            "{}",
            serde_json::to_string(record).expect("record serializes")
        )?;
        self.file.flush()?;
        Ok(())
    }
}

#[derive(Debug)]
pub struct LogContents {
    pub header: LogHeader,
    pub records: Vec<LogRecord>,
    /// Byte length of the valid prefix. Anything beyond it is a torn final
    /// line, dropped here and overwritten by [`LogWriter::append_to`].
    pub valid_len: u64,
}

pub fn read_log(path: &Path) -> Result<LogContents> {
    let text = std::fs::read_to_string(path)?;
    let mut header: Option<LogHeader> = None;
    let mut records = Vec::new();
    let mut valid_len = 0usize;
    let mut pos = 0usize;

    for (index, chunk) in text.split_inclusive('\n').enumerate() {
        pos += chunk.len();
        let at_end = pos == text.len();
        let terminated = chunk.ends_with('\n');
        let line = chunk.trim_end_matches(['\n', '\r']);

        if header.is_none() {
            if !terminated {
                return Err(Error::Log("log header line is unterminated".into()));
            }
            let h: LogHeader = serde_json::from_str(line)
                .map_err(|e| Error::Log(format!("bad log header: {e}")))?;
            if h.version != LOG_VERSION {
                return Err(Error::Log(format!(
                    "unsupported log version {} (expected {LOG_VERSION})",
                    h.version
                )));
            }
            header = Some(h);
            valid_len = pos;
            continue;
        }

        match serde_json::from_str::<LogRecord>(line) {
            // An unterminated line is torn even if it happens to parse:
            // the tail of the original line may be missing.
            Ok(record) if terminated => {
                records.push(record);
                valid_len = pos;
            }
            Ok(_) => break,
            Err(e) if at_end => {
                // Torn final line; ignore unless it is the only content,
                // in which case an empty trailing line is also fine.
                let _ = e;
                break;
            }
            Err(e) => {
                return Err(Error::Log(format!("log line {}: {e}", index + 1)));
            }
        }
    }

    let header = header.ok_or_else(|| Error::Log("log is empty".into()))?;
    Ok(LogContents {
        header,
        records,
        valid_len: valid_len as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn header() -> LogHeader {
        LogHeader {
            version: LOG_VERSION,
            tile_sizes: vec![4, 16],
            enable_parallel: true,
            evaluator: "synthetic:0000000000000000".into(),
            loopnests: serde_json::json!({ "loopnests": [] }),
        }
    }

    fn record(number: u64) -> LogRecord {
        LogRecord {
            number,
            parent: if number == 0 { None } else { Some(0) },
            transformations: vec![vec![format!("#pragma clang loop(l{number}) parallelize_thread")]],
            status: "ok".into(),
            seconds: Some(number as f64 + 0.5),
        }
    }

    #[test]
    fn round_trips_header_and_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        let mut w = LogWriter::create(&path, &header()).unwrap();
        for n in 0..3 {
            w.append(&record(n)).unwrap();
        }
        drop(w);

        let contents = read_log(&path).unwrap();
        assert_eq!(contents.header, header());
        assert_eq!(contents.records, vec![record(0), record(1), record(2)]);
        assert_eq!(contents.valid_len, fs::metadata(&path).unwrap().len());
    }

    #[test]
    fn identical_runs_produce_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        for path in [&a, &b] {
            let mut w = LogWriter::create(path, &header()).unwrap();
            w.append(&record(0)).unwrap();
            w.append(&record(1)).unwrap();
        }
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn torn_final_line_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        let mut w = LogWriter::create(&path, &header()).unwrap();
        w.append(&record(0)).unwrap();
        w.append(&record(1)).unwrap();
        drop(w);
        let full_len = fs::metadata(&path).unwrap().len();

        let mut bytes = fs::read(&path).unwrap();
        bytes.extend_from_slice(br#"{"number":2,"parent":0,"transfo"#);
        fs::write(&path, &bytes).unwrap();

        let contents = read_log(&path).unwrap();
        assert_eq!(contents.records.len(), 2);
        assert_eq!(contents.valid_len, full_len);
    }

    #[test]
    fn unterminated_final_line_is_dropped_even_if_it_parses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        let mut w = LogWriter::create(&path, &header()).unwrap();
        w.append(&record(0)).unwrap();
        drop(w);
        let full_len = fs::metadata(&path).unwrap().len();

        let mut bytes = fs::read(&path).unwrap();
        let complete = serde_json::to_string(&record(1)).unwrap();
        bytes.extend_from_slice(complete.as_bytes());
        fs::write(&path, &bytes).unwrap();

        let contents = read_log(&path).unwrap();
        assert_eq!(contents.records.len(), 1);
        assert_eq!(contents.valid_len, full_len);
    }

    #[test]
    fn garbage_in_the_middle_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        let mut w = LogWriter::create(&path, &header()).unwrap();
        w.append(&record(0)).unwrap();
        drop(w);

        let mut bytes = fs::read(&path).unwrap();
        bytes.extend_from_slice(b"not json\n");
        bytes.extend_from_slice(serde_json::to_string(&record(1)).unwrap().as_bytes());
        bytes.push(b'\n');
        fs::write(&path, &bytes).unwrap();

        assert!(matches!(read_log(&path), Err(Error::Log(_))));
    }

    #[test]
    fn missing_or_wrong_header_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        fs::write(&path, "").unwrap();
        assert!(read_log(&path).is_err());

        fs::write(&path, "{\"not\":\"a header\"}\n").unwrap();
        assert!(read_log(&path).is_err());

        let mut wrong = header();
        wrong.version = LOG_VERSION + 1;
        fs::write(&path, format!("{}\n", serde_json::to_string(&wrong).unwrap())).unwrap();
        let err = read_log(&path).unwrap_err();
        assert!(err.to_string().contains("version"));
    }

    #[test]
    fn append_to_truncates_the_torn_tail_first() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        let mut w = LogWriter::create(&path, &header()).unwrap();
        w.append(&record(0)).unwrap();
        drop(w);

        let mut bytes = fs::read(&path).unwrap();
        bytes.extend_from_slice(b"{\"number\":1,");
        fs::write(&path, &bytes).unwrap();

        let contents = read_log(&path).unwrap();
        let mut w = LogWriter::append_to(&path, contents.valid_len).unwrap();
        w.append(&record(1)).unwrap();
        drop(w);

        let reread = read_log(&path).unwrap();
        assert_eq!(reread.records, vec![record(0), record(1)]);
        assert_eq!(reread.valid_len, fs::metadata(&path).unwrap().len());
    }
}
