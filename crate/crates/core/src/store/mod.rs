//! Entity persistence with optimistic versioning and atomic write groups.
//!
//! Two backends implement [`Store`]: [`MemoryStore`] for tests and
//! [`FileStore`], an append-only log with periodic snapshots. Both keep the
//! same in-memory [`tables::Tables`] and differ only in durability, so one
//! contract suite covers both.
//!
//! Records carry their canonical JSON body plus a few index fields
//! (`created_at`, `status`, `owner`) so list filters never deserialize bodies.

pub mod conformance;
mod entity;
mod file;
mod memory;
pub(crate) mod tables;

use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{canonical, ContentHash};
use crate::time::Timestamp;

pub use entity::Entity;
pub use file::{CrashPoint, FileStore, FileStoreOptions};
pub use memory::MemoryStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    User,
    Challenge,
    Session,
    Alert,
    Delivery,
    Sos,
    Report,
    Media,
    Group,
    Membership,
    Message,
    Zone,
    Resource,
    Route,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).map_err(|_| fmt::Error)?;
        f.write_str(v.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("{kind} {id} not found")]
    NotFound { kind: Kind, id: String },
    #[error("version conflict on {kind} {id}: expected {expected}, found {actual:?}")]
    Conflict { kind: Kind, id: String, expected: Expect, actual: Option<u64> },
    #[error("unknown media {0}")]
    UnknownMediaRef(ContentHash),
    #[error("stored record is corrupt: {0}")]
    Corrupt(String),
    #[error("storage i/o: {0}")]
    Io(String),
    #[error("store crashed and must be reopened")]
    Crashed,
}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        StoreError::Io(e.to_string())
    }
}

/// Version precondition on a write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expect {
    Any,
    Absent,
    Version(u64),
}

impl fmt::Display for Expect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expect::Any => f.write_str("any"),
            Expect::Absent => f.write_str("absent"),
            Expect::Version(v) => write!(f, "v{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IndexFields {
    pub created_at: Timestamp,
    pub status: Option<String>,
    pub owner: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub kind: Kind,
    pub id: String,
    pub version: u64,
    pub fields: IndexFields,
    pub body: String,
}

impl Record {
    pub fn decode<T: DeserializeOwned>(&self) -> Result<T, StoreError> {
        canonical::from_slice(self.body.as_bytes())
            .map_err(|e| StoreError::Corrupt(format!("{} {}: {e}", self.kind, self.id)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Op {
    Put { kind: Kind, id: String, expect: Expect, fields: IndexFields, body: String },
    Delete { kind: Kind, id: String, expect: Expect },
}

impl Op {
    pub fn put<E: Entity>(entity: &E, expect: Expect) -> Op {
        let body = String::from_utf8(canonical::to_vec(entity)).expect("canonical form is utf-8");
        Op::Put { kind: E::KIND, id: entity.entity_id(), expect, fields: entity.index_fields(), body }
    }

    pub fn delete<E: Entity>(id: &str, expect: Expect) -> Op {
        Op::Delete { kind: E::KIND, id: id.to_owned(), expect }
    }

    pub fn target(&self) -> (Kind, &str) {
        match self {
            Op::Put { kind, id, .. } | Op::Delete { kind, id, .. } => (*kind, id),
        }
    }
}

/// List filter. `since` is inclusive, `until` exclusive.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Filter {
    pub status: Option<String>,
    pub owner: Option<String>,
    pub since: Option<Timestamp>,
    pub until: Option<Timestamp>,
}

impl Filter {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn status(s: impl Into<String>) -> Self {
        Self { status: Some(s.into()), ..Self::default() }
    }

    pub fn owner(o: impl Into<String>) -> Self {
        Self { owner: Some(o.into()), ..Self::default() }
    }

    pub fn with_status(mut self, s: impl Into<String>) -> Self {
        self.status = Some(s.into());
        self
    }

    pub fn between(mut self, since: Timestamp, until: Timestamp) -> Self {
        self.since = Some(since);
        self.until = Some(until);
        self
    }

    pub(crate) fn matches(&self, r: &Record) -> bool {
        if let Some(s) = &self.status {
            if r.fields.status.as_deref() != Some(s.as_str()) {
                return false;
            }
        }
        if let Some(o) = &self.owner {
            if r.fields.owner.as_deref() != Some(o.as_str()) {
                return false;
            }
        }
        if let Some(t) = self.since {
            if r.fields.created_at < t {
                return false;
            }
        }
        if let Some(t) = self.until {
            if r.fields.created_at >= t {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Page {
    pub offset: usize,
    pub limit: usize,
}

impl Page {
    pub const ALL: Page = Page { offset: 0, limit: usize::MAX };

    pub fn new(offset: usize, limit: usize) -> Self {
        Self { offset, limit }
    }
}

pub trait Store: Send + Sync {
    fn get(&self, kind: Kind, id: &str) -> Result<Record, StoreError>;

    /// Matching records ordered by `(created_at, id)`.
    fn list(&self, kind: Kind, filter: &Filter, page: Page) -> Result<Vec<Record>, StoreError>;

    /// Counts for several queries, evaluated against one consistent state.
    fn counts(&self, queries: &[(Kind, Filter)]) -> Result<Vec<usize>, StoreError>;

    /// Applies every op or none. Returns the new version of each op's target
    /// (0 for deletes).
    fn atomically(&self, ops: Vec<Op>) -> Result<Vec<u64>, StoreError>;

    fn media_put(&self, bytes: &[u8]) -> Result<ContentHash, StoreError>;

    fn media_get(&self, hash: &ContentHash) -> Result<Vec<u8>, StoreError>;

    fn media_count(&self) -> Result<usize, StoreError>;
}

/// A decoded entity together with the version it was read at.
#[derive(Debug, Clone, PartialEq)]
pub struct Versioned<T> {
    pub value: T,
    pub version: u64,
}

/// Typed convenience layer over any [`Store`].
pub trait StoreExt: Store {
    fn load<E: Entity>(&self, id: &str) -> Result<Versioned<E>, StoreError> {
        let r = self.get(E::KIND, id)?;
        Ok(Versioned { value: r.decode()?, version: r.version })
    }

    fn find<E: Entity>(&self, id: &str) -> Result<Option<Versioned<E>>, StoreError> {
        match self.load(id) {
            Ok(v) => Ok(Some(v)),
            Err(StoreError::NotFound { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn list_of<E: Entity>(&self, filter: &Filter, page: Page) -> Result<Vec<E>, StoreError> {
        self.list(E::KIND, filter, page)?.iter().map(Record::decode).collect()
    }

    fn put<E: Entity>(&self, entity: &E, expect: Expect) -> Result<u64, StoreError> {
        Ok(self.atomically(vec![Op::put(entity, expect)])?[0])
    }
}

impl<S: Store + ?Sized> StoreExt for S {}
