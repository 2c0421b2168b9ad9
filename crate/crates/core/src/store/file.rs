//! Single-node durable backend.
//!
//! On-disk layout under the store directory:
//!
//! ```text
//! snapshot.json   canonical JSON {seq, records} covering batches up to seq
//! wal.log         frames appended since the snapshot
//! media/<sha256>  one file per media object
//! ```
//!
//! Each `atomically` call becomes one frame:
//! `u32 LE payload length | u32 LE crc32(payload) | payload`, where the payload
//! is the canonical JSON of the batch. Recovery replays frames after the
//! snapshot and truncates the log at the first short or corrupt frame, so a
//! batch is either fully present or absent.

use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use super::tables::Tables;
use super::{Filter, Kind, Op, Page, Record, Store, StoreError};
use crate::model::{canonical, ContentHash};

const SNAPSHOT: &str = "snapshot.json";
const WAL: &str = "wal.log";
const MEDIA_DIR: &str = "media";
const HEADER_LEN: usize = 8;

#[derive(Debug, Clone, Copy)]
pub struct FileStoreOptions {
    /// Take a snapshot and reset the log after this many batches.
    pub snapshot_every: u64,
    /// fsync after every frame.
    pub sync: bool,
}

impl Default for FileStoreOptions {
    fn default() -> Self {
        Self { snapshot_every: 1_000, sync: true }
    }
}

/// Simulated process death during the next write group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrashPoint {
    /// Only this many bytes of the frame reach the log.
    MidFrame { written_bytes: usize },
    /// The whole frame is durable but the process dies before applying it.
    AfterFrame,
}

#[derive(Serialize, Deserialize)]
struct Batch {
    seq: u64,
    ops: Vec<Op>,
    versions: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    seq: u64,
    records: Vec<Record>,
}

struct Writer {
    log: File,
    seq: u64,
    since_snapshot: u64,
}

pub struct FileStore {
    dir: PathBuf,
    opts: FileStoreOptions,
    tables: RwLock<Tables>,
    writer: Mutex<Writer>,
    crash: Mutex<Option<CrashPoint>>,
    crashed: AtomicBool,
}

impl std::fmt::Debug for FileStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FileStore").field("dir", &self.dir).finish()
    }
}

fn encode_frame(payload: &[u8]) -> Vec<u8> {
    let mut frame = Vec::with_capacity(HEADER_LEN + payload.len());
    frame.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    frame.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
    frame.extend_from_slice(payload);
    frame
}

/// Splits `buf` into complete, checksummed payloads. Returns them with the
/// byte length of the valid prefix.
fn decode_frames(buf: &[u8]) -> (Vec<&[u8]>, usize) {
    let mut out = Vec::new();
    let mut pos = 0;
    while buf.len() - pos >= HEADER_LEN {
        let len = u32::from_le_bytes(buf[pos..pos + 4].try_into().unwrap()) as usize;
        let crc = u32::from_le_bytes(buf[pos + 4..pos + 8].try_into().unwrap());
        let start = pos + HEADER_LEN;
        if buf.len() - start < len {
            break;
        }
        let payload = &buf[start..start + len];
        if crc32fast::hash(payload) != crc {
            break;
        }
        out.push(payload);
        pos = start + len;
    }
    (out, pos)
}

impl FileStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::open_with(dir, FileStoreOptions::default())
    }

    pub fn open_with(dir: impl AsRef<Path>, opts: FileStoreOptions) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join(MEDIA_DIR))?;

        let mut tables = Tables::default();
        let mut seq = 0;
        let snap_path = dir.join(SNAPSHOT);
        if snap_path.exists() {
            let snap: Snapshot = canonical::from_slice(&fs::read(&snap_path)?)
                .map_err(|e| StoreError::Corrupt(format!("snapshot: {e}")))?;
            seq = snap.seq;
            for rec in snap.records {
                tables.insert_record(rec);
            }
        }

        let mut log = OpenOptions::new().read(true).append(true).create(true).open(dir.join(WAL))?;
        let mut buf = Vec::new();
        log.seek(SeekFrom::Start(0))?;
        log.read_to_end(&mut buf)?;
        let (frames, valid_len) = decode_frames(&buf);
        let mut replayed = 0;
        for payload in frames {
            let batch: Batch = canonical::from_slice(payload)
                .map_err(|e| StoreError::Corrupt(format!("log frame: {e}")))?;
            if batch.seq <= seq {
                continue;
            }
            seq = batch.seq;
            tables.apply(batch.ops, &batch.versions);
            replayed += 1;
        }
        if valid_len < buf.len() {
            tracing::warn!(dropped = buf.len() - valid_len, "truncating torn log tail");
            log.set_len(valid_len as u64)?;
            log.sync_all()?;
        }

        Ok(Self {
            dir,
            opts,
            tables: RwLock::new(tables),
            writer: Mutex::new(Writer { log, seq, since_snapshot: replayed }),
            crash: Mutex::new(None),
            crashed: AtomicBool::new(false),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Arms a simulated crash for the next non-empty write group.
    pub fn inject_crash(&self, point: CrashPoint) {
        *self.crash.lock() = Some(point);
    }

    fn ensure_alive(&self) -> Result<(), StoreError> {
        if self.crashed.load(Ordering::SeqCst) {
            Err(StoreError::Crashed)
        } else {
            Ok(())
        }
    }

    /// Writes a snapshot of the current tables and empties the log.
    pub fn snapshot(&self) -> Result<(), StoreError> {
        self.ensure_alive()?;
        let mut w = self.writer.lock();
        self.snapshot_locked(&mut w)
    }

    fn snapshot_locked(&self, w: &mut Writer) -> Result<(), StoreError> {
        let snap = Snapshot { seq: w.seq, records: self.tables.read().records() };
        let tmp = self.dir.join(format!("{SNAPSHOT}.tmp"));
        {
            let mut f = File::create(&tmp)?;
            f.write_all(&canonical::to_vec(&snap))?;
            f.sync_all()?;
        }
        fs::rename(&tmp, self.dir.join(SNAPSHOT))?;
        if let Ok(d) = File::open(&self.dir) {
            let _ = d.sync_all();
        }
        // Frames at or below the snapshot seq are skipped on replay, so a crash
        // between the rename and this truncate is harmless.
        w.log.set_len(0)?;
        w.log.sync_all()?;
        w.since_snapshot = 0;
        Ok(())
    }

    fn media_path(&self, hash: &ContentHash) -> PathBuf {
        self.dir.join(MEDIA_DIR).join(hash.as_str())
    }
}

impl Store for FileStore {
    fn get(&self, kind: Kind, id: &str) -> Result<Record, StoreError> {
        self.ensure_alive()?;
        self.tables.read().get(kind, id)
    }

    fn list(&self, kind: Kind, filter: &Filter, page: Page) -> Result<Vec<Record>, StoreError> {
        self.ensure_alive()?;
        Ok(self.tables.read().list(kind, filter, page))
    }

    fn counts(&self, queries: &[(Kind, Filter)]) -> Result<Vec<usize>, StoreError> {
        self.ensure_alive()?;
        let t = self.tables.read();
        Ok(queries.iter().map(|(k, f)| t.count(*k, f)).collect())
    }

    fn atomically(&self, ops: Vec<Op>) -> Result<Vec<u64>, StoreError> {
        self.ensure_alive()?;
        if ops.is_empty() {
            return Ok(Vec::new());
        }
        let mut w = self.writer.lock();
        self.ensure_alive()?;
        // Writers are serialized by `w`, so state cannot move between prepare
        // and apply.
        let versions = self.tables.read().prepare(&ops)?;
        let batch = Batch { seq: w.seq + 1, ops, versions };
        let frame = encode_frame(&canonical::to_vec(&batch));

        if let Some(point) = self.crash.lock().take() {
            let n = match point {
                CrashPoint::MidFrame { written_bytes } => written_bytes.min(frame.len().saturating_sub(1)),
                CrashPoint::AfterFrame => frame.len(),
            };
            w.log.write_all(&frame[..n])?;
            w.log.sync_all()?;
            self.crashed.store(true, Ordering::SeqCst);
            return Err(StoreError::Crashed);
        }

        w.log.write_all(&frame)?;
        if self.opts.sync {
            w.log.sync_data()?;
        }
        w.seq = batch.seq;
        let versions = batch.versions.clone();
        self.tables.write().apply(batch.ops, &batch.versions);
        w.since_snapshot += 1;
        if w.since_snapshot >= self.opts.snapshot_every {
            self.snapshot_locked(&mut w)?;
        }
        Ok(versions)
    }

    fn media_put(&self, bytes: &[u8]) -> Result<ContentHash, StoreError> {
        self.ensure_alive()?;
        let hash = ContentHash::of(bytes);
        let path = self.media_path(&hash);
        if !path.exists() {
            let tmp = self.dir.join(MEDIA_DIR).join(format!(".{}.{}", hash, uuid::Uuid::new_v4().simple()));
            {
                let mut f = File::create(&tmp)?;
                f.write_all(bytes)?;
                if self.opts.sync {
                    f.sync_all()?;
                }
            }
            fs::rename(&tmp, &path)?;
        }
        Ok(hash)
    }

    fn media_get(&self, hash: &ContentHash) -> Result<Vec<u8>, StoreError> {
        self.ensure_alive()?;
        match fs::read(self.media_path(hash)) {
            Ok(bytes) => Ok(bytes),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(StoreError::UnknownMediaRef(hash.clone())),
            Err(e) => Err(e.into()),
        }
    }

    fn media_count(&self) -> Result<usize, StoreError> {
        self.ensure_alive()?;
        let mut n = 0;
        for entry in fs::read_dir(self.dir.join(MEDIA_DIR))? {
            if !entry?.file_name().to_string_lossy().starts_with('.') {
                n += 1;
            }
        }
        Ok(n)
    }
}
