use std::collections::{BTreeSet, HashMap};

use super::{Expect, Filter, Kind, Op, Page, Record, StoreError};
use crate::time::Timestamp;

type OrderKey = (Timestamp, String);

#[derive(Debug, Default, Clone)]
struct Table {
    rows: HashMap<String, Record>,
    order: BTreeSet<OrderKey>,
    by_owner: HashMap<String, BTreeSet<OrderKey>>,
}

impl Table {
    fn insert(&mut self, rec: Record) {
        if let Some(old) = self.rows.remove(&rec.id) {
            self.unindex(&old);
        }
        let key = (rec.fields.created_at, rec.id.clone());
        if let Some(owner) = &rec.fields.owner {
            self.by_owner.entry(owner.clone()).or_default().insert(key.clone());
        }
        self.order.insert(key);
        self.rows.insert(rec.id.clone(), rec);
    }

    fn remove(&mut self, id: &str) {
        if let Some(old) = self.rows.remove(id) {
            self.unindex(&old);
        }
    }

    fn unindex(&mut self, old: &Record) {
        let key = (old.fields.created_at, old.id.clone());
        self.order.remove(&key);
        if let Some(owner) = &old.fields.owner {
            if let Some(set) = self.by_owner.get_mut(owner) {
                set.remove(&key);
                if set.is_empty() {
                    self.by_owner.remove(owner);
                }
            }
        }
    }

    fn scan<'a>(&'a self, filter: &'a Filter) -> Box<dyn Iterator<Item = &'a Record> + 'a> {
        let keys: Box<dyn Iterator<Item = &OrderKey>> = match &filter.owner {
            Some(o) => match self.by_owner.get(o) {
                Some(set) => Box::new(set.iter()),
                None => Box::new(std::iter::empty()),
            },
            None => Box::new(self.order.iter()),
        };
        Box::new(keys.filter_map(|(_, id)| self.rows.get(id)).filter(|r| filter.matches(r)))
    }
}

/// The shared in-memory state behind both store backends.
#[derive(Debug, Default, Clone)]
pub(crate) struct Tables {
    tables: HashMap<Kind, Table>,
}

impl Tables {
    pub fn get(&self, kind: Kind, id: &str) -> Result<Record, StoreError> {
        self.tables
            .get(&kind)
            .and_then(|t| t.rows.get(id))
            .cloned()
            .ok_or_else(|| StoreError::NotFound { kind, id: id.to_owned() })
    }

    pub fn list(&self, kind: Kind, filter: &Filter, page: Page) -> Vec<Record> {
        match self.tables.get(&kind) {
            Some(t) => t.scan(filter).skip(page.offset).take(page.limit).cloned().collect(),
            None => Vec::new(),
        }
    }

    pub fn count(&self, kind: Kind, filter: &Filter) -> usize {
        self.tables.get(&kind).map_or(0, |t| t.scan(filter).count())
    }

    fn version_of(&self, kind: Kind, id: &str) -> Option<u64> {
        self.tables.get(&kind).and_then(|t| t.rows.get(id)).map(|r| r.version)
    }

    /// Checks every precondition and computes resulting versions without
    /// touching state. Later ops in the group see earlier ones.
    pub fn prepare(&self, ops: &[Op]) -> Result<Vec<u64>, StoreError> {
        let mut pending: HashMap<(Kind, &str), Option<u64>> = HashMap::new();
        let mut out = Vec::with_capacity(ops.len());
        for op in ops {
            let (kind, id) = op.target();
            let current = match pending.get(&(kind, id)) {
                Some(v) => *v,
                None => self.version_of(kind, id),
            };
            let expect = match op {
                Op::Put { expect, .. } | Op::Delete { expect, .. } => *expect,
            };
            let ok = match expect {
                Expect::Any => true,
                Expect::Absent => current.is_none(),
                Expect::Version(v) => current == Some(v),
            };
            if !ok {
                return Err(StoreError::Conflict { kind, id: id.to_owned(), expected: expect, actual: current });
            }
            let next = match op {
                Op::Put { .. } => Some(current.unwrap_or(0) + 1),
                Op::Delete { .. } => {
                    if current.is_none() {
                        return Err(StoreError::NotFound { kind, id: id.to_owned() });
                    }
                    None
                }
            };
            pending.insert((kind, id), next);
            out.push(next.unwrap_or(0));
        }
        Ok(out)
    }

    /// Applies ops whose versions came from [`Tables::prepare`].
    pub fn apply(&mut self, ops: Vec<Op>, versions: &[u64]) {
        for (op, &version) in ops.into_iter().zip(versions) {
            match op {
                Op::Put { kind, id, fields, body, .. } => {
                    self.tables.entry(kind).or_default().insert(Record { kind, id, version, fields, body });
                }
                Op::Delete { kind, id, .. } => {
                    if let Some(t) = self.tables.get_mut(&kind) {
                        t.remove(&id);
                    }
                }
            }
        }
    }

    pub fn insert_record(&mut self, rec: Record) {
        self.tables.entry(rec.kind).or_default().insert(rec);
    }

    /// All records, ordered by kind then id.
    pub fn records(&self) -> Vec<Record> {
        let mut all: Vec<Record> = self.tables.values().flat_map(|t| t.rows.values().cloned()).collect();
        all.sort_by(|a, b| (a.kind, &a.id).cmp(&(b.kind, &b.id)));
        all
    }
}
