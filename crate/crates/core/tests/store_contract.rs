use std::sync::Arc;

use e112_core::store::conformance::{crash_recovery, run_all};
use e112_core::store::{FileStore, FileStoreOptions, MemoryStore, Store};

fn assert_all(backend: &str, results: Vec<(&'static str, Result<(), String>)>) {
    let failures: Vec<String> = results
        .into_iter()
        .filter_map(|(name, r)| r.err().map(|e| format!("{backend}: {name}: {e}")))
        .collect();
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn memory_backend_passes_contract() {
    assert_all("memory", run_all(&|| Arc::new(MemoryStore::new()) as Arc<dyn Store>));
}

#[test]
fn file_backend_passes_contract() {
    let root = tempfile::tempdir().unwrap();
    let counter = std::sync::atomic::AtomicUsize::new(0);
    let make = || {
        let n = counter.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        let opts = FileStoreOptions { snapshot_every: 7, sync: false };
        Arc::new(FileStore::open_with(root.path().join(n.to_string()), opts).unwrap()) as Arc<dyn Store>
    };
    assert_all("file", run_all(&make));
}

#[test]
fn file_backend_recovers_from_crashes() {
    let dir = tempfile::tempdir().unwrap();
    crash_recovery(dir.path()).unwrap();
}

#[test]
fn file_backend_survives_reopen_with_snapshots() {
    use e112_core::store::{Expect, Filter, IndexFields, Kind, Op, Page};
    use e112_core::time::Timestamp;
    let dir = tempfile::tempdir().unwrap();
    let opts = FileStoreOptions { snapshot_every: 3, sync: false };
    let op = |i: u64, expect| Op::Put {
        kind: Kind::Zone,
        id: format!("z{}", i % 4),
        expect,
        fields: IndexFields { created_at: Timestamp(i as i64), status: None, owner: None },
        body: format!("{{\"i\":{i}}}"),
    };
    let before: Vec<_> = {
        let s = FileStore::open_with(dir.path(), opts).unwrap();
        for i in 0..10 {
            s.atomically(vec![op(i, Expect::Any)]).unwrap();
        }
        s.media_put(b"photo").unwrap();
        s.list(Kind::Zone, &Filter::all(), Page::ALL).unwrap()
    };
    let s = FileStore::open_with(dir.path(), opts).unwrap();
    assert_eq!(s.list(Kind::Zone, &Filter::all(), Page::ALL).unwrap(), before);
    assert_eq!(s.media_count().unwrap(), 1);
    assert_eq!(s.get(Kind::Zone, "z1").unwrap().version, 3);
}
