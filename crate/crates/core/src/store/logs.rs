//! Append-only analysis (per-frame ROI activation) and event logs.
//!
//! The analysis log is CSV with the header `frame,roi1,roi2,roi3,state`.
//! The event log holds one JSON object per line, fields in the order of
//! [`CrossingEvent`]. Readers only consider newline-terminated lines, so a
//! concurrently appended partial line is never seen.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::depth::RoiActivation;
use crate::error::LogError;
use crate::fsm::CrossingEvent;

pub const ANALYSIS_HEADER: &str = "frame,roi1,roi2,roi3,state";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalysisRecord {
    pub frame_index: u64,
    pub roi1_px: u32,
    pub roi2_px: u32,
    pub roi3_px: u32,
    pub dominant: u8,
}

impl From<&RoiActivation> for AnalysisRecord {
    fn from(a: &RoiActivation) -> Self {
        Self {
            frame_index: a.frame_index,
            roi1_px: a.fg_px[0],
            roi2_px: a.fg_px[1],
            roi3_px: a.fg_px[2],
            dominant: a.dominant.as_u8(),
        }
    }
}

impl std::fmt::Display for AnalysisRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{},{},{},{},{}",
            self.frame_index, self.roi1_px, self.roi2_px, self.roi3_px, self.dominant
        )
    }
}

impl std::str::FromStr for AnalysisRecord {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let f: Vec<&str> = s.split(',').collect();
        if f.len() != 5 {
            return Err(format!("expected 5 fields, got {}", f.len()));
        }
        let num = |i: usize| {
            f[i].parse::<u64>()
                .map_err(|e| format!("field {}: {e}", i + 1))
        };
        let px = |i: usize| {
            f[i].parse::<u32>()
                .map_err(|e| format!("field {}: {e}", i + 1))
        };
        let dominant = f[4].parse::<u8>().map_err(|e| format!("field 5: {e}"))?;
        if dominant > 3 {
            return Err(format!("state {dominant} out of range"));
        }
        Ok(Self {
            frame_index: num(0)?,
            roi1_px: px(1)?,
            roi2_px: px(2)?,
            roi3_px: px(3)?,
            dominant,
        })
    }
}

pub struct AnalysisLog {
    path: PathBuf,
    out: BufWriter<File>,
    last_index: Option<u64>,
}

impl AnalysisLog {
    /// Creates (or truncates) the log and writes the header line.
    pub fn create(path: impl AsRef<Path>) -> Result<Self, LogError> {
        let path = path.as_ref().to_path_buf();
        let mut out = BufWriter::new(File::create(&path)?);
        writeln!(out, "{ANALYSIS_HEADER}")?;
        Ok(Self {
            path,
            out,
            last_index: None,
        })
    }

    pub fn append(&mut self, rec: &AnalysisRecord) -> Result<(), LogError> {
        if let Some(last) = self.last_index {
            if rec.frame_index <= last {
                return Err(LogError::OutOfOrder {
                    what: "frame index",
                    last,
                    got: rec.frame_index,
                });
            }
        }
        writeln!(self.out, "{rec}")?;
        self.last_index = Some(rec.frame_index);
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), LogError> {
        self.out.flush()?;
        Ok(())
    }

    /// Drops all records. Ordering still continues from the last record
    /// written before the truncation.
    pub fn clear(&mut self) -> Result<(), LogError> {
        self.out.flush()?;
        let f = self.out.get_mut();
        f.set_len(0)?;
        f.seek(SeekFrom::Start(0))?;
        writeln!(self.out, "{ANALYSIS_HEADER}")?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

pub fn read_analysis(path: impl AsRef<Path>) -> Result<Vec<AnalysisRecord>, LogError> {
    let mut out = Vec::new();
    for (i, line) in complete_lines(File::open(path)?)?.iter().enumerate() {
        if i == 0 {
            if line != ANALYSIS_HEADER {
                return Err(LogError::Malformed {
                    line: 1,
                    reason: format!("unexpected header {line:?}"),
                });
            }
            continue;
        }
        let rec = line.parse().map_err(|reason| LogError::Malformed {
            line: i + 1,
            reason,
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Event log writer. Every append is written through to the file.
pub struct EventLog {
    path: PathBuf,
    file: File,
    last_seq: Option<u64>,
}

impl EventLog {
    /// Creates (or truncates) the log. An empty log has no header.
    pub fn create(path: impl AsRef<Path>) -> Result<Self, LogError> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path)?;
        Ok(Self {
            path,
            file,
            last_seq: None,
        })
    }

    pub fn append(&mut self, ev: &CrossingEvent) -> Result<(), LogError> {
        if let Some(last) = self.last_seq {
            if ev.seq <= last {
                return Err(LogError::OutOfOrder {
                    what: "event seq",
                    last,
                    got: ev.seq,
                });
            }
        }
        let mut line = serde_json::to_vec(ev).expect("event serializes");
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()?;
        self.last_seq = Some(ev.seq);
        Ok(())
    }

    pub fn clear(&mut self) -> Result<(), LogError> {
        self.file.set_len(0)?;
        self.file.seek(SeekFrom::Start(0))?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

pub fn parse_events<R: Read>(input: R) -> Result<Vec<CrossingEvent>, LogError> {
    complete_lines(input)?
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| LogError::Malformed {
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<CrossingEvent>, LogError> {
    parse_events(File::open(path)?)
}

/// Opens an existing log for appending, e.g. for tools that extend a log
/// written by an earlier run.
pub fn open_event_log_append(path: impl AsRef<Path>) -> Result<EventLog, LogError> {
    let path = path.as_ref().to_path_buf();
    let last_seq = if path.exists() {
        read_events(&path)?.last().map(|e| e.seq)
    } else {
        None
    };
    let file = OpenOptions::new().create(true).append(true).open(&path)?;
    Ok(EventLog {
        path,
        file,
        last_seq,
    })
}

fn complete_lines<R: Read>(input: R) -> Result<Vec<String>, LogError> {
    let mut reader = BufReader::new(input);
    let mut lines = Vec::new();
    let mut buf = String::new();
    loop {
        buf.clear();
        if reader.read_line(&mut buf)? == 0 {
            break;
        }
        if !buf.ends_with('\n') {
            // partial line still being written
            break;
        }
        lines.push(buf.trim_end_matches(['\n', '\r']).to_string());
    }
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsm::{Counts, EventKind};

    fn event(seq: u64) -> CrossingEvent {
        CrossingEvent {
            seq,
            kind: EventKind::Entry,
            frame_index: 120,
            timestamp_us: 4_000_000,
            counts_after: Counts {
                entries: seq,
                occupancy: seq as i64,
                ..Default::default()
            },
            snapshot_id: Some(seq),
        }
    }

    #[test]
    fn analysis_line_format() {
        let rec = AnalysisRecord {
            frame_index: 17,
            roi1_px: 0,
            roi2_px: 412,
            roi3_px: 3,
            dominant: 2,
        };
        assert_eq!(rec.to_string(), "17,0,412,3,2");
        assert_eq!("17,0,412,3,2".parse::<AnalysisRecord>().unwrap(), rec);
        assert!("17,0,412,3,9".parse::<AnalysisRecord>().is_err());
    }

    #[test]
    fn analysis_log_header_and_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("analysis.csv");
        let mut log = AnalysisLog::create(&path).unwrap();
        let rec = |i| AnalysisRecord {
            frame_index: i,
            roi1_px: 1,
            roi2_px: 2,
            roi3_px: 3,
            dominant: 0,
        };
        log.append(&rec(1)).unwrap();
        log.append(&rec(2)).unwrap();
        assert!(matches!(
            log.append(&rec(2)),
            Err(LogError::OutOfOrder { .. })
        ));
        log.flush().unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "frame,roi1,roi2,roi3,state\n1,1,2,3,0\n2,1,2,3,0\n");
        assert_eq!(read_analysis(&path).unwrap().len(), 2);

        log.clear().unwrap();
        log.append(&rec(3)).unwrap();
        log.flush().unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "frame,roi1,roi2,roi3,state\n3,1,2,3,0\n");
    }

    #[test]
    fn event_log_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let mut log = EventLog::create(&path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap().len(), 0);
        log.append(&event(1)).unwrap();
        log.append(&event(2)).unwrap();
        assert!(matches!(
            log.append(&event(1)),
            Err(LogError::OutOfOrder { .. })
        ));
        let text = std::fs::read_to_string(&path).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(
            first,
            r#"{"seq":1,"kind":"entry","frame_index":120,"timestamp_us":4000000,"counts_after":{"entries":1,"exits":0,"regret_enter":0,"regret_exit":0,"occupancy":1},"snapshot_id":1}"#
        );
        assert_eq!(read_events(&path).unwrap(), vec![event(1), event(2)]);

        log.clear().unwrap();
        assert!(read_events(&path).unwrap().is_empty());
        log.append(&event(3)).unwrap();
        assert_eq!(read_events(&path).unwrap(), vec![event(3)]);

        let mut reopened = open_event_log_append(&path).unwrap();
        assert!(reopened.append(&event(3)).is_err());
        reopened.append(&event(4)).unwrap();
        assert_eq!(read_events(&path).unwrap().len(), 2);
    }

    #[test]
    fn partial_trailing_line_is_ignored() {
        let mut bytes = serde_json::to_vec(&event(1)).unwrap();
        bytes.push(b'\n');
        bytes.extend_from_slice(br#"{"seq":2,"kind":"en"#);
        assert_eq!(parse_events(&bytes[..]).unwrap(), vec![event(1)]);
        let garbage = b"not json\n";
        assert!(matches!(
            parse_events(&garbage[..]),
            Err(LogError::Malformed { line: 1, .. })
        ));
    }
}
