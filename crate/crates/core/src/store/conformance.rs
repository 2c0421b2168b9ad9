//! Behavioural checks every [`Store`] backend must pass, plus a crash-recovery
//! check for [`FileStore`]. Each check gets a fresh, empty store from the
//! caller's factory and reports the first violation it finds.

use std::path::Path;
use std::sync::{Arc, Barrier};

use super::{CrashPoint, Expect, FileStore, Filter, IndexFields, Kind, Op, Page, Store, StoreError};
use crate::model::ContentHash;
use crate::time::Timestamp;

pub type CheckResult = Result<(), String>;

pub struct Check {
    pub name: &'static str,
    pub run: fn(&dyn Store) -> CheckResult,
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn put(kind: Kind, id: &str, expect: Expect, t: i64, status: Option<&str>, owner: Option<&str>) -> Op {
    Op::Put {
        kind,
        id: id.to_owned(),
        expect,
        fields: IndexFields {
            created_at: Timestamp(t),
            status: status.map(str::to_owned),
            owner: owner.map(str::to_owned),
        },
        body: format!(r#"{{"id":"{id}","t":{t}}}"#),
    }
}

fn simple(id: &str, expect: Expect) -> Op {
    put(Kind::Alert, id, expect, 1, None, None)
}

fn err<E: std::fmt::Debug>(e: E) -> String {
    format!("{e:?}")
}

pub fn checks() -> Vec<Check> {
    vec![
        Check { name: "put then get returns the same record", run: put_get },
        Check { name: "unknown id is NotFound", run: not_found },
        Check { name: "absent precondition rejects existing ids", run: absent_precondition },
        Check { name: "stale version conflicts", run: stale_version },
        Check { name: "concurrent writers on one base version: exactly one wins", run: racing_writers },
        Check { name: "conflicting group leaves no partial writes", run: group_all_or_nothing },
        Check { name: "empty group is a no-op", run: empty_group },
        Check { name: "list order is (created_at, id) with filters and paging", run: list_order },
        Check { name: "delete removes and respects versions", run: delete },
        Check { name: "counts agree with list", run: counts },
        Check { name: "media is content addressed and byte exact", run: media },
        Check { name: "concurrent disjoint groups all commit", run: disjoint_writers },
    ]
}

/// Runs every check against fresh stores from `make`.
pub fn run_all(make: &dyn Fn() -> Arc<dyn Store>) -> Vec<(&'static str, CheckResult)> {
    checks().into_iter().map(|c| (c.name, (c.run)(make().as_ref()))).collect()
}

fn put_get(s: &dyn Store) -> CheckResult {
    let v = s.atomically(vec![put(Kind::User, "u1", Expect::Absent, 5, Some("citizen"), Some("+301"))]).map_err(err)?;
    ensure!(v == vec![1], "first version should be 1, got {v:?}");
    let r = s.get(Kind::User, "u1").map_err(err)?;
    ensure!(r.version == 1 && r.body == r#"{"id":"u1","t":5}"#, "unexpected record {r:?}");
    ensure!(r.fields.owner.as_deref() == Some("+301"), "owner lost");
    let v = s.atomically(vec![put(Kind::User, "u1", Expect::Version(1), 5, None, None)]).map_err(err)?;
    ensure!(v == vec![2], "second version should be 2, got {v:?}");
    ensure!(s.get(Kind::Alert, "u1").is_err(), "kinds must be separate namespaces");
    Ok(())
}

fn not_found(s: &dyn Store) -> CheckResult {
    match s.get(Kind::Sos, "missing") {
        Err(StoreError::NotFound { .. }) => Ok(()),
        other => Err(format!("expected NotFound, got {other:?}")),
    }
}

fn absent_precondition(s: &dyn Store) -> CheckResult {
    s.atomically(vec![simple("a", Expect::Absent)]).map_err(err)?;
    match s.atomically(vec![simple("a", Expect::Absent)]) {
        Err(StoreError::Conflict { actual: Some(1), .. }) => Ok(()),
        other => Err(format!("expected Conflict, got {other:?}")),
    }
}

fn stale_version(s: &dyn Store) -> CheckResult {
    s.atomically(vec![simple("a", Expect::Absent)]).map_err(err)?;
    s.atomically(vec![simple("a", Expect::Version(1))]).map_err(err)?;
    ensure!(
        matches!(s.atomically(vec![simple("a", Expect::Version(1))]), Err(StoreError::Conflict { .. })),
        "write at stale version 1 should conflict"
    );
    ensure!(
        matches!(s.atomically(vec![simple("zz", Expect::Version(1))]), Err(StoreError::Conflict { actual: None, .. })),
        "versioned write to a missing id should conflict"
    );
    Ok(())
}

fn racing_writers(s: &dyn Store) -> CheckResult {
    s.atomically(vec![simple("hot", Expect::Absent)]).map_err(err)?;
    let n = 16;
    let barrier = Barrier::new(n);
    let results: Vec<Result<Vec<u64>, StoreError>> = std::thread::scope(|sc| {
        let hs: Vec<_> = (0..n)
            .map(|_| {
                sc.spawn(|| {
                    barrier.wait();
                    s.atomically(vec![simple("hot", Expect::Version(1))])
                })
            })
            .collect();
        hs.into_iter().map(|h| h.join().expect("writer thread")).collect()
    });
    let ok = results.iter().filter(|r| r.is_ok()).count();
    let conflicts = results.iter().filter(|r| matches!(r, Err(StoreError::Conflict { .. }))).count();
    ensure!(ok == 1 && conflicts == n - 1, "expected 1 winner and {} conflicts, got {ok} and {conflicts}", n - 1);
    ensure!(s.get(Kind::Alert, "hot").map_err(err)?.version == 2, "final version should be 2");
    Ok(())
}

fn group_all_or_nothing(s: &dyn Store) -> CheckResult {
    s.atomically(vec![simple("exists", Expect::Absent)]).map_err(err)?;
    let group = vec![
        simple("new1", Expect::Absent),
        simple("new2", Expect::Absent),
        simple("exists", Expect::Absent),
        simple("new3", Expect::Absent),
    ];
    ensure!(matches!(s.atomically(group), Err(StoreError::Conflict { .. })), "group should conflict");
    for id in ["new1", "new2", "new3"] {
        ensure!(s.get(Kind::Alert, id).is_err(), "{id} leaked from an aborted group");
    }
    ensure!(s.get(Kind::Alert, "exists").map_err(err)?.version == 1, "existing record touched");
    // Two writes to one id inside a group see each other.
    let v = s
        .atomically(vec![simple("x", Expect::Absent), simple("x", Expect::Version(1))])
        .map_err(err)?;
    ensure!(v == vec![1, 2], "in-group versions should chain, got {v:?}");
    Ok(())
}

fn empty_group(s: &dyn Store) -> CheckResult {
    let v = s.atomically(Vec::new()).map_err(err)?;
    ensure!(v.is_empty(), "empty group returned versions");
    ensure!(s.list(Kind::Alert, &Filter::all(), Page::ALL).map_err(err)?.is_empty(), "empty group wrote");
    Ok(())
}

fn ids(s: &dyn Store, f: &Filter, page: Page) -> Result<Vec<String>, String> {
    Ok(s.list(Kind::Report, f, page).map_err(err)?.into_iter().map(|r| r.id).collect())
}

fn list_order(s: &dyn Store) -> CheckResult {
    let rows = [
        ("c", 20, "submitted", "u1"),
        ("a", 20, "resolved", "u2"),
        ("b", 10, "submitted", "u1"),
        ("d", 30, "submitted", "u2"),
        ("e", 5, "dismissed", "u1"),
    ];
    let ops = rows.iter().map(|(id, t, st, o)| put(Kind::Report, id, Expect::Absent, *t, Some(st), Some(o))).collect();
    s.atomically(ops).map_err(err)?;
    ensure!(ids(s, &Filter::all(), Page::ALL)? == ["e", "b", "a", "c", "d"], "bad default order");
    ensure!(ids(s, &Filter::status("submitted"), Page::ALL)? == ["b", "c", "d"], "bad status filter");
    ensure!(ids(s, &Filter::owner("u1"), Page::ALL)? == ["e", "b", "c"], "bad owner filter");
    ensure!(
        ids(s, &Filter::all().between(Timestamp(10), Timestamp(30)), Page::ALL)? == ["b", "a", "c"],
        "bad time range"
    );
    ensure!(ids(s, &Filter::owner("u1").with_status("submitted"), Page::ALL)? == ["b", "c"], "bad combined filter");
    ensure!(ids(s, &Filter::all(), Page::new(1, 2))? == ["b", "a"], "bad paging");
    ensure!(ids(s, &Filter::all(), Page::new(10, 2))?.is_empty(), "paging past the end");
    // Updating an index field moves the record between filters.
    s.atomically(vec![put(Kind::Report, "b", Expect::Version(1), 10, Some("resolved"), Some("u2"))]).map_err(err)?;
    ensure!(ids(s, &Filter::status("submitted"), Page::ALL)? == ["c", "d"], "stale status index");
    ensure!(ids(s, &Filter::owner("u1"), Page::ALL)? == ["e", "c"], "stale owner index");
    Ok(())
}

fn delete(s: &dyn Store) -> CheckResult {
    s.atomically(vec![simple("d", Expect::Absent)]).map_err(err)?;
    ensure!(
        matches!(
            s.atomically(vec![Op::Delete { kind: Kind::Alert, id: "d".into(), expect: Expect::Version(9) }]),
            Err(StoreError::Conflict { .. })
        ),
        "delete at wrong version should conflict"
    );
    s.atomically(vec![Op::Delete { kind: Kind::Alert, id: "d".into(), expect: Expect::Version(1) }]).map_err(err)?;
    ensure!(matches!(s.get(Kind::Alert, "d"), Err(StoreError::NotFound { .. })), "deleted record still readable");
    ensure!(s.list(Kind::Alert, &Filter::all(), Page::ALL).map_err(err)?.is_empty(), "deleted record still listed");
    s.atomically(vec![simple("d", Expect::Absent)]).map_err(err)?;
    Ok(())
}

fn counts(s: &dyn Store) -> CheckResult {
    let ops = (0..30)
        .map(|i| {
            let st = if i % 3 == 0 { "open" } else { "closed" };
            put(Kind::Sos, &format!("s{i:02}"), Expect::Absent, i, Some(st), None)
        })
        .collect();
    s.atomically(ops).map_err(err)?;
    let queries = [
        (Kind::Sos, Filter::all()),
        (Kind::Sos, Filter::status("open")),
        (Kind::Sos, Filter::all().between(Timestamp(10), Timestamp(20))),
        (Kind::Report, Filter::all()),
    ];
    let got = s.counts(&queries).map_err(err)?;
    for ((k, f), n) in queries.iter().zip(&got) {
        let listed = s.list(*k, f, Page::ALL).map_err(err)?.len();
        ensure!(listed == *n, "count {n} disagrees with list {listed} for {k} {f:?}");
    }
    ensure!(got == vec![30, 10, 10, 0], "unexpected counts {got:?}");
    Ok(())
}

fn media(s: &dyn Store) -> CheckResult {
    let empty = s.media_put(b"").map_err(err)?;
    ensure!(
        empty.as_str() == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855",
        "empty digest {empty}"
    );
    let bytes: Vec<u8> = (0..100_000u32).map(|i| (i.wrapping_mul(2_654_435_761) >> 13) as u8).collect();
    let h1 = s.media_put(&bytes).map_err(err)?;
    let h2 = s.media_put(&bytes).map_err(err)?;
    ensure!(h1 == h2, "same bytes gave different refs");
    ensure!(s.media_count().map_err(err)? == 2, "duplicate upload stored twice");
    ensure!(s.media_get(&h1).map_err(err)? == bytes, "bytes changed in round trip");
    match s.media_get(&ContentHash::of(b"never stored")) {
        Err(StoreError::UnknownMediaRef(_)) => Ok(()),
        other => Err(format!("expected UnknownMediaRef, got {other:?}")),
    }
}

fn disjoint_writers(s: &dyn Store) -> CheckResult {
    std::thread::scope(|sc| {
        for t in 0..8 {
            sc.spawn(move || {
                for i in 0..25 {
                    s.atomically(vec![
                        simple(&format!("t{t}-{i}"), Expect::Absent),
                        put(Kind::Delivery, &format!("t{t}-{i}"), Expect::Absent, i, None, Some("a")),
                    ])
                    .expect("disjoint write");
                }
            });
        }
    });
    let n = s.counts(&[(Kind::Alert, Filter::all()), (Kind::Delivery, Filter::owner("a"))]).map_err(err)?;
    ensure!(n == vec![200, 200], "lost writes: {n:?}");
    Ok(())
}

/// Simulates crashes during a status change plus N ledger rows written as one
/// group and checks that each reopen shows either none or all of it.
pub fn crash_recovery(dir: &Path) -> CheckResult {
    let rows = 50;
    let activation = |alert: &str, expect: u64| -> Vec<Op> {
        let mut ops = vec![put(Kind::Alert, alert, Expect::Version(expect), 1, Some("active"), None)];
        ops.extend((0..rows).map(|u| put(Kind::Delivery, &format!("{alert}:u{u}"), Expect::Absent, 2, None, Some(alert))));
        ops
    };
    let state = |s: &dyn Store, alert: &str| -> Result<(String, usize), String> {
        let status = s.get(Kind::Alert, alert).map_err(err)?.fields.status.unwrap_or_default();
        let n = s.counts(&[(Kind::Delivery, Filter::owner(alert))]).map_err(err)?[0];
        Ok((status, n))
    };

    {
        let s = FileStore::open(dir).map_err(err)?;
        s.atomically(vec![put(Kind::Alert, "base", Expect::Absent, 0, Some("draft"), None)]).map_err(err)?;
    }
    let probe = activation("probe", 1);
    let frame_len = {
        // Size of a comparable frame, used to pick cut points.
        let body = crate::model::canonical::to_vec(&probe);
        body.len() + 8
    };
    let mut cuts = vec![0, 1, 4, 7, 8, 9, frame_len / 3, frame_len / 2, frame_len - 10];
    cuts.retain(|c| *c < frame_len);

    for (i, cut) in cuts.iter().enumerate() {
        let alert = format!("mid{i}");
        {
            let s = FileStore::open(dir).map_err(err)?;
            s.atomically(vec![put(Kind::Alert, &alert, Expect::Absent, 0, Some("draft"), None)]).map_err(err)?;
            s.inject_crash(CrashPoint::MidFrame { written_bytes: *cut });
            ensure!(
                matches!(s.atomically(activation(&alert, 1)), Err(StoreError::Crashed)),
                "armed crash did not fire"
            );
            ensure!(matches!(s.get(Kind::Alert, "base"), Err(StoreError::Crashed)), "crashed store kept serving");
        }
        let s = FileStore::open(dir).map_err(err)?;
        let got = state(&s, &alert)?;
        ensure!(got == ("draft".to_owned(), 0), "cut at {cut} bytes left partial state {got:?}");
        // The log is writable again after truncation.
        s.atomically(activation(&alert, 1)).map_err(err)?;
        ensure!(state(&s, &alert)? == ("active".to_owned(), rows), "post-recovery activation failed");
    }

    {
        let s = FileStore::open(dir).map_err(err)?;
        s.atomically(vec![put(Kind::Alert, "after", Expect::Absent, 0, Some("draft"), None)]).map_err(err)?;
        s.inject_crash(CrashPoint::AfterFrame);
        ensure!(matches!(s.atomically(activation("after", 1)), Err(StoreError::Crashed)), "armed crash did not fire");
    }
    {
        let s = FileStore::open(dir).map_err(err)?;
        let got = state(&s, "after")?;
        ensure!(got == ("active".to_owned(), rows), "durable frame not replayed: {got:?}");
        s.snapshot().map_err(err)?;
        s.atomically(vec![simple("post-snapshot", Expect::Absent)]).map_err(err)?;
    }
    let s = FileStore::open(dir).map_err(err)?;
    ensure!(state(&s, "after")? == ("active".to_owned(), rows), "snapshot lost data");
    ensure!(s.get(Kind::Alert, "post-snapshot").is_ok(), "log after snapshot lost");
    ensure!(s.get(Kind::Alert, "base").map_err(err)?.version == 1, "base record changed");
    Ok(())
}
