use std::collections::HashMap;

use parking_lot::RwLock;

use super::tables::Tables;
use super::{Filter, Kind, Op, Page, Record, Store, StoreError};
use crate::model::ContentHash;

/// Volatile backend. Writes are visible immediately and lost on drop.
#[derive(Debug, Default)]
pub struct MemoryStore {
    tables: RwLock<Tables>,
    media: RwLock<HashMap<ContentHash, Vec<u8>>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Store for MemoryStore {
    fn get(&self, kind: Kind, id: &str) -> Result<Record, StoreError> {
        self.tables.read().get(kind, id)
    }

    fn list(&self, kind: Kind, filter: &Filter, page: Page) -> Result<Vec<Record>, StoreError> {
        Ok(self.tables.read().list(kind, filter, page))
    }

    fn counts(&self, queries: &[(Kind, Filter)]) -> Result<Vec<usize>, StoreError> {
        let t = self.tables.read();
        Ok(queries.iter().map(|(k, f)| t.count(*k, f)).collect())
    }

    fn atomically(&self, ops: Vec<Op>) -> Result<Vec<u64>, StoreError> {
        if ops.is_empty() {
            return Ok(Vec::new());
        }
        let mut t = self.tables.write();
        let versions = t.prepare(&ops)?;
        t.apply(ops, &versions);
        Ok(versions)
    }

    fn media_put(&self, bytes: &[u8]) -> Result<ContentHash, StoreError> {
        let hash = ContentHash::of(bytes);
        self.media.write().entry(hash.clone()).or_insert_with(|| bytes.to_vec());
        Ok(hash)
    }

    fn media_get(&self, hash: &ContentHash) -> Result<Vec<u8>, StoreError> {
        self.media.read().get(hash).cloned().ok_or_else(|| StoreError::UnknownMediaRef(hash.clone()))
    }

    fn media_count(&self) -> Result<usize, StoreError> {
        Ok(self.media.read().len())
    }
}
