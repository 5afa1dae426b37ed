//! Persistence: an append-only observation log and one state snapshot per
//! student.
//!
//! Every record on disk is one line:
//!
//! ```text
//! <crc32 of payload, 8 lowercase hex digits> <space> <JSON payload> <LF>
//! ```
//!
//! Directory layout:
//!
//! ```text
//! graph.def              skill graph definition (TOML, unframed)
//! observations.log       one LoggedObservation per line, seq 1, 2, ...
//! states/<student>.snap  header line, then one SkillState line per skill
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrackerError};
use crate::model::{LoggedObservation, Observation, SkillState, StudentId, StudentRecord, Timestamp};

pub const SNAPSHOT_VERSION: u32 = 1;

pub trait Store: Send + Sync {
    /// Appends durably and returns the sequence number.
    fn append(&self, obs: &Observation) -> Result<u64>;
    /// Logged observations with `seq >= from`, in order.
    fn replay(&self, from: u64) -> Result<Vec<LoggedObservation>>;
    fn load(&self, student: &StudentId) -> Result<Option<StudentRecord>>;
    /// Replaces the student's record as one commit.
    fn put(&self, student: &StudentId, record: &StudentRecord) -> Result<()>;
    fn students(&self) -> Result<Vec<StudentId>>;
    fn put_graph(&self, text: &str) -> Result<()>;
    fn graph(&self) -> Result<Option<String>>;
}

macro_rules! forward_store {
    ($ptr:ident) => {
        impl<S: Store + ?Sized> Store for $ptr<S> {
            fn append(&self, obs: &Observation) -> Result<u64> {
                (**self).append(obs)
            }
            fn replay(&self, from: u64) -> Result<Vec<LoggedObservation>> {
                (**self).replay(from)
            }
            fn load(&self, student: &StudentId) -> Result<Option<StudentRecord>> {
                (**self).load(student)
            }
            fn put(&self, student: &StudentId, record: &StudentRecord) -> Result<()> {
                (**self).put(student, record)
            }
            fn students(&self) -> Result<Vec<StudentId>> {
                (**self).students()
            }
            fn put_graph(&self, text: &str) -> Result<()> {
                (**self).put_graph(text)
            }
            fn graph(&self) -> Result<Option<String>> {
                (**self).graph()
            }
        }
    };
}

forward_store!(Box);
forward_store!(Arc);

/// Frames a payload as one record line.
pub fn frame<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("records serialize");
    format!("{:08x} {json}\n", crc32fast::hash(json.as_bytes()))
}

/// Checks and decodes one line without its LF.
pub fn unframe<T: DeserializeOwned>(line: &[u8]) -> std::result::Result<T, String> {
    if line.len() < 10 || line[8] != b' ' {
        return Err("malformed record framing".into());
    }
    let crc = std::str::from_utf8(&line[..8])
        .ok()
        .and_then(|h| u32::from_str_radix(h, 16).ok())
        .ok_or("malformed checksum")?;
    let payload = &line[9..];
    if crc32fast::hash(payload) != crc {
        return Err("checksum mismatch".into());
    }
    serde_json::from_slice(payload).map_err(|e| format!("bad payload: {e}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SnapshotHeader {
    version: u32,
    student: StudentId,
    last_seq: u64,
    last_at: Option<Timestamp>,
    skills: usize,
}

/// Encodes a record in the snapshot format.
pub fn encode_snapshot(student: &StudentId, record: &StudentRecord) -> String {
    let header = SnapshotHeader {
        version: SNAPSHOT_VERSION,
        student: student.clone(),
        last_seq: record.last_seq,
        last_at: record.last_at,
        skills: record.states.len(),
    };
    let mut out = frame(&header);
    for state in record.states.values() {
        out.push_str(&frame(state));
    }
    out
}

pub fn decode_snapshot(path: &Path, bytes: &[u8]) -> Result<(StudentId, StudentRecord)> {
    let corrupt = |offset: usize, reason: String| TrackerError::CorruptRecord {
        path: path.to_owned(),
        offset: offset as u64,
        reason,
    };
    let mut lines = Vec::new();
    let mut start = 0;
    while start < bytes.len() {
        let Some(len) = bytes[start..].iter().position(|b| *b == b'\n') else {
            return Err(corrupt(start, "record without line terminator".into()));
        };
        lines.push((start, &bytes[start..start + len]));
        start += len + 1;
    }
    let Some(&(_, first)) = lines.first() else {
        return Err(corrupt(0, "empty snapshot".into()));
    };
    let header: SnapshotHeader = unframe(first).map_err(|r| corrupt(0, r))?;
    if header.version != SNAPSHOT_VERSION {
        return Err(corrupt(0, format!("unsupported snapshot version {}", header.version)));
    }
    if header.skills != lines.len() - 1 {
        return Err(corrupt(bytes.len(), format!("expected {} skill records, found {}", header.skills, lines.len() - 1)));
    }
    let mut states = BTreeMap::new();
    for &(offset, line) in &lines[1..] {
        let state: SkillState = unframe(line).map_err(|r| corrupt(offset, r))?;
        states.insert(state.skill.clone(), state);
    }
    let record = StudentRecord { last_seq: header.last_seq, last_at: header.last_at, states };
    Ok((header.student, record))
}

#[derive(Default)]
struct MemoryInner {
    log: Vec<LoggedObservation>,
    records: BTreeMap<StudentId, StudentRecord>,
    graph: Option<String>,
}

/// Store kept in memory.
#[derive(Default)]
pub struct MemoryStore {
    inner: Mutex<MemoryInner>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Store for MemoryStore {
    fn append(&self, obs: &Observation) -> Result<u64> {
        let mut inner = self.inner.lock().expect("store lock");
        let seq = inner.log.len() as u64 + 1;
        inner.log.push(LoggedObservation { seq, obs: obs.clone() });
        Ok(seq)
    }

    fn replay(&self, from: u64) -> Result<Vec<LoggedObservation>> {
        let inner = self.inner.lock().expect("store lock");
        Ok(inner.log.iter().filter(|l| l.seq >= from).cloned().collect())
    }

    fn load(&self, student: &StudentId) -> Result<Option<StudentRecord>> {
        Ok(self.inner.lock().expect("store lock").records.get(student).cloned())
    }

    fn put(&self, student: &StudentId, record: &StudentRecord) -> Result<()> {
        self.inner.lock().expect("store lock").records.insert(student.clone(), record.clone());
        Ok(())
    }

    fn students(&self) -> Result<Vec<StudentId>> {
        Ok(self.inner.lock().expect("store lock").records.keys().cloned().collect())
    }

    fn put_graph(&self, text: &str) -> Result<()> {
        self.inner.lock().expect("store lock").graph = Some(text.to_owned());
        Ok(())
    }

    fn graph(&self) -> Result<Option<String>> {
        Ok(self.inner.lock().expect("store lock").graph.clone())
    }
}

struct LogWriter {
    file: File,
    next_seq: u64,
}

/// Store in a directory, in the line format described above.
pub struct FileStore {
    root: PathBuf,
    fsync: bool,
    log: Mutex<LogWriter>,
}

impl FileStore {
    pub const LOG: &'static str = "observations.log";
    pub const GRAPH: &'static str = "graph.def";
    pub const STATES: &'static str = "states";

    /// Opens or creates the store. The whole log is verified; a final
    /// record missing its line terminator (an interrupted append) is cut
    /// off, anything else that fails to verify is an error.
    pub fn open(root: impl Into<PathBuf>, fsync: bool) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join(Self::STATES))?;
        let path = root.join(Self::LOG);
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let (entries, valid_len) = parse_log(&path, &bytes)?;
        if valid_len < bytes.len() {
            file.set_len(valid_len as u64)?;
            file.sync_all()?;
        }
        file.seek(SeekFrom::End(0))?;
        let next_seq = entries.last().map_or(1, |e| e.seq + 1);
        Ok(Self { root, fsync, log: Mutex::new(LogWriter { file, next_seq }) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn log_path(&self) -> PathBuf {
        self.root.join(Self::LOG)
    }

    pub fn snapshot_path(&self, student: &StudentId) -> PathBuf {
        self.root.join(Self::STATES).join(format!("{student}.snap"))
    }

    fn write_atomically(&self, path: &Path, contents: &[u8]) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = File::create(&tmp)?;
            f.write_all(contents)?;
            if self.fsync {
                f.sync_all()?;
            }
        }
        fs::rename(&tmp, path)?;
        if self.fsync {
            if let Some(dir) = path.parent() {
                File::open(dir)?.sync_all()?;
            }
        }
        Ok(())
    }
}

/// Entries of a log file and the length of its verified prefix.
pub fn parse_log(path: &Path, bytes: &[u8]) -> Result<(Vec<LoggedObservation>, usize)> {
    let mut entries: Vec<LoggedObservation> = Vec::new();
    let mut start = 0;
    while start < bytes.len() {
        let Some(len) = bytes[start..].iter().position(|b| *b == b'\n') else {
            // torn final append
            return Ok((entries, start));
        };
        let entry: LoggedObservation = unframe(&bytes[start..start + len]).map_err(|reason| TrackerError::CorruptRecord {
            path: path.to_owned(),
            offset: start as u64,
            reason,
        })?;
        let expected = entries.last().map_or(1, |e| e.seq + 1);
        if entry.seq != expected {
            return Err(TrackerError::CorruptRecord {
                path: path.to_owned(),
                offset: start as u64,
                reason: format!("sequence {} where {expected} was expected", entry.seq),
            });
        }
        entries.push(entry);
        start += len + 1;
    }
    Ok((entries, start))
}

/// Reads and verifies a log file.
pub fn read_log(path: &Path) -> Result<Vec<LoggedObservation>> {
    let bytes = fs::read(path)?;
    parse_log(path, &bytes).map(|(entries, _)| entries)
}

impl Store for FileStore {
    fn append(&self, obs: &Observation) -> Result<u64> {
        let mut log = self.log.lock().expect("log lock");
        let seq = log.next_seq;
        let line = frame(&LoggedObservation { seq, obs: obs.clone() });
        log.file.write_all(line.as_bytes())?;
        if self.fsync {
            log.file.sync_data()?;
        }
        log.next_seq += 1;
        Ok(seq)
    }

    fn replay(&self, from: u64) -> Result<Vec<LoggedObservation>> {
        // hold the writer lock so no append is read half-written
        let _log = self.log.lock().expect("log lock");
        let path = self.log_path();
        let file = File::open(&path)?;
        let mut out = Vec::new();
        let mut offset = 0u64;
        for line in BufReader::new(file).split(b'\n') {
            let line = line?;
            let entry: LoggedObservation = unframe(&line).map_err(|reason| TrackerError::CorruptRecord {
                path: path.clone(),
                offset,
                reason,
            })?;
            offset += line.len() as u64 + 1;
            if entry.seq >= from {
                out.push(entry);
            }
        }
        Ok(out)
    }

    fn load(&self, student: &StudentId) -> Result<Option<StudentRecord>> {
        let path = self.snapshot_path(student);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let (owner, record) = decode_snapshot(&path, &bytes)?;
        if &owner != student {
            return Err(TrackerError::CorruptRecord {
                path,
                offset: 0,
                reason: format!("snapshot belongs to {owner}"),
            });
        }
        Ok(Some(record))
    }

    fn put(&self, student: &StudentId, record: &StudentRecord) -> Result<()> {
        student.validate()?;
        self.write_atomically(&self.snapshot_path(student), encode_snapshot(student, record).as_bytes())
    }

    fn students(&self) -> Result<Vec<StudentId>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(self.root.join(Self::STATES))? {
            let name = entry?.file_name();
            if let Some(id) = name.to_str().and_then(|n| n.strip_suffix(".snap")) {
                out.push(StudentId::from(id));
            }
        }
        out.sort();
        Ok(out)
    }

    fn put_graph(&self, text: &str) -> Result<()> {
        self.write_atomically(&self.root.join(Self::GRAPH), text.as_bytes())
    }

    fn graph(&self) -> Result<Option<String>> {
        match fs::read_to_string(self.root.join(Self::GRAPH)) {
            Ok(t) => Ok(Some(t)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}
