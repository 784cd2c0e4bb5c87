use std::collections::HashSet;
use std::sync::Arc;
use std::thread;

use chrono::{TimeZone, Utc};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use virality::store::{ComplianceRequest, SnapshotFilter, Store, StoreOptions, TweetRecord};
use virality::synth::{self, SynthSpec};

fn corpus(n: usize, seed: u64) -> Vec<TweetRecord> {
    synth::generate(&SynthSpec {
        n_rows: n,
        seed,
        ..SynthSpec::default()
    })
    .unwrap()
    .records
}

fn when() -> chrono::DateTime<Utc> {
    Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap()
}

fn live_ids(store: &Store) -> HashSet<String> {
    store.snapshot(&SnapshotFilter::default()).ids().map(str::to_string).collect()
}

#[test]
fn ten_thousand_unique_records_are_all_accepted() {
    let records = corpus(10_000, 1);
    let store = Store::in_memory(StoreOptions::default());
    let s = store.ingest(records.into_iter().map(Ok)).unwrap();
    assert_eq!(s.accepted, 10_000);
    assert_eq!(s.rejected_duplicates, 0);
}

#[test]
fn interleaved_ingest_and_deletion_matches_serial_replay() {
    let records = corpus(1000, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut doomed: Vec<&TweetRecord> = records.iter().collect();
    doomed.shuffle(&mut rng);
    doomed.truncate(100);

    // A deletion is scheduled only after its target has been ingested.
    let store = Store::in_memory(StoreOptions::default());
    let mut pending: Vec<&str> = Vec::new();
    let doomed_ids: HashSet<&str> = doomed.iter().map(|r| r.id.as_str()).collect();
    for r in &records {
        store.ingest_one(r.clone()).unwrap();
        if doomed_ids.contains(r.id.as_str()) {
            pending.push(&r.id);
        }
        if rng.random_bool(0.3) {
            if let Some(id) = pending.pop() {
                store.apply_one(&ComplianceRequest::delete_status(id, when())).unwrap();
            }
        }
    }
    for id in pending {
        store.apply_one(&ComplianceRequest::delete_status(id, when())).unwrap();
    }
    let live = live_ids(&store);
    assert_eq!(live.len(), 900);
    let oracle: HashSet<String> = records
        .iter()
        .filter(|r| !doomed_ids.contains(r.id.as_str()))
        .map(|r| r.id.clone())
        .collect();
    assert_eq!(live, oracle);
}

#[test]
fn permutations_commute_when_deletions_are_remembered() {
    let records = corpus(400, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    #[derive(Clone)]
    enum Op {
        Put(TweetRecord),
        Del(ComplianceRequest),
    }
    let mut ops: Vec<Op> = records.iter().cloned().map(Op::Put).collect();
    for r in records.choose_multiple(&mut rng, 40) {
        ops.push(Op::Del(ComplianceRequest::delete_status(&r.id, when())));
    }
    for r in records.choose_multiple(&mut rng, 5) {
        ops.push(Op::Del(ComplianceRequest::delete_user(&r.author_id, when())));
    }
    // Re-ingest of a few ids exercises the duplicate path too.
    ops.extend(records[..10].iter().cloned().map(Op::Put));

    let opts = StoreOptions {
        remember_deletions: true,
        ..StoreOptions::default()
    };
    let mut finals = Vec::new();
    for _ in 0..8 {
        ops.shuffle(&mut rng);
        let store = Store::in_memory(opts.clone());
        for op in &ops {
            match op {
                Op::Put(r) => {
                    store.ingest_one(r.clone()).unwrap();
                }
                Op::Del(req) => {
                    store.apply_one(req).unwrap();
                }
            }
        }
        let mut ids: Vec<String> = live_ids(&store).into_iter().collect();
        ids.sort();
        finals.push(ids);
    }
    assert!(finals.windows(2).all(|w| w[0] == w[1]));
    assert!(finals[0].len() < 400 - 40);
}

#[test]
fn concurrent_snapshots_are_bracketed_by_deletion_state() {
    let records = corpus(3000, 4);
    let store = Arc::new(Store::in_memory(StoreOptions::default()));
    store.ingest(records.iter().cloned().map(Ok)).unwrap();
    let before = live_ids(&store);
    let victims: Vec<String> = records.iter().step_by(3).map(|r| r.id.clone()).collect();

    let deleter = {
        let store = Arc::clone(&store);
        let victims = victims.clone();
        thread::spawn(move || {
            for id in victims {
                store.apply_one(&ComplianceRequest::delete_status(id, when())).unwrap();
            }
        })
    };
    let mut observed = Vec::new();
    for _ in 0..50 {
        observed.push(live_ids(&store));
    }
    deleter.join().unwrap();
    let after = live_ids(&store);
    assert_eq!(after.len(), 2000);
    let mut prev_len = usize::MAX;
    for snap in observed {
        assert!(snap.is_subset(&before));
        assert!(after.is_subset(&snap));
        // Deletions only shrink the live set, so later snapshots never grow.
        assert!(snap.len() <= prev_len);
        prev_len = snap.len();
    }
}

#[test]
fn concurrent_ingest_and_deletion_from_many_threads() {
    let records = corpus(4000, 5);
    let store = Arc::new(Store::in_memory(StoreOptions {
        remember_deletions: true,
        ..StoreOptions::default()
    }));
    let banned: Vec<String> = records.iter().step_by(7).map(|r| r.id.clone()).collect();
    let mut handles = Vec::new();
    for chunk in records.chunks(1000) {
        let store = Arc::clone(&store);
        let chunk = chunk.to_vec();
        handles.push(thread::spawn(move || {
            for r in chunk {
                store.ingest_one(r).unwrap();
            }
        }));
    }
    {
        let store = Arc::clone(&store);
        let banned = banned.clone();
        handles.push(thread::spawn(move || {
            for id in banned {
                store.apply_one(&ComplianceRequest::delete_status(id, when())).unwrap();
            }
        }));
    }
    for h in handles {
        h.join().unwrap();
    }
    let live = live_ids(&store);
    assert_eq!(live.len(), 4000 - banned.len());
    assert!(banned.iter().all(|id| !live.contains(id)));
}
