mod common;

use std::sync::Arc;
use std::time::Duration;

use common::*;
use leapfactual::codec::IdentityCodec;
use leapfactual::experiments::toy::NearestCenterOracle;
use leapfactual::transport::{leapfactual, LeapFactualConfig, LeapOutcome, Phase, Stage, TrajectoryRecord};
use leapfactual_service::session::{SessionManager, SessionStatus};
use leapfactual_service::store::OracleKind;
use leapfactual_service::ServiceError;

fn manager(dir: &std::path::Path) -> SessionManager {
    SessionManager::open(toy_models(), dir, None).unwrap()
}

const SOURCES: [[f32; 2]; 3] = [[-0.3, -0.2], [0.2, -0.3], [-0.2, 0.25]];

#[test]
fn scripted_labels_reproduce_the_local_oracle_run() {
    let dir = tempfile::tempdir().unwrap();
    let m = manager(dir.path());
    for source in SOURCES {
        let local = m.create(request(source, 3, OracleKind::Local)).unwrap().session_id;
        let summary = m.run_local(&local).unwrap();
        assert_eq!(summary.status, SessionStatus::Done);

        let human = m.create(request(source, 3, OracleKind::Human)).unwrap().session_id;
        let labels = answer_like_local(&m, &human);
        assert_eq!(m.summary(&human).unwrap().status, SessionStatus::Done);

        let a = records(&m, &local);
        let b = records(&m, &human);
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(untimed(a.clone()), untimed(b));
        let answered: Vec<usize> = a
            .iter()
            .filter(|r| matches!(r.phase, Phase::Source | Phase::Land))
            .map(|r| r.label.unwrap())
            .collect();
        assert_eq!(answered, labels);

        // The same run driven directly through the engine.
        let models = m.models();
        let outcome = leapfactual(
            &source,
            3,
            &IdentityCodec { dim: 2 },
            &NearestCenterOracle,
            &models.field,
            &models.default_config,
        )
        .unwrap();
        let LeapOutcome::Done { run, .. } = outcome else {
            panic!("engine run suspended");
        };
        assert_eq!(untimed(a), untimed(run.trajectory().records()));
    }
}

#[test]
fn restart_mid_session_resumes_to_the_same_trajectory() {
    let reference_dir = tempfile::tempdir().unwrap();
    let m = manager(reference_dir.path());
    let id = m.create(request(SOURCES[0], 3, OracleKind::Human)).unwrap().session_id;
    answer_like_local(&m, &id);
    let reference = untimed(records(&m, &id));

    let dir = tempfile::tempdir().unwrap();
    let id = {
        let m = manager(dir.path());
        let id = m.create(request(SOURCES[0], 3, OracleKind::Human)).unwrap().session_id;
        for _ in 0..2 {
            let q = m.pending(&id).unwrap();
            let x = m.models().codec.decode_one(&q.z).unwrap();
            let label = leapfactual::oracle::ClassifierOracle::<f32>::predict(&NearestCenterOracle, &x).unwrap();
            m.submit_label(&id, q.seq, label).unwrap();
        }
        id
    };
    let m = manager(dir.path());
    assert_eq!(m.ids(), vec![id.clone()]);
    assert_eq!(m.pending(&id).unwrap().seq, 2);
    answer_like_local(&m, &id);
    assert_eq!(untimed(records(&m, &id)), reference);
}

#[test]
fn interrupted_local_sessions_are_listed_and_finish_after_restart() {
    let dir = tempfile::tempdir().unwrap();
    let id = manager(dir.path()).create(request(SOURCES[1], 3, OracleKind::Local)).unwrap().session_id;
    let m = manager(dir.path());
    assert_eq!(m.local_unfinished(), vec![id.clone()]);
    assert_eq!(m.run_local(&id).unwrap().status, SessionStatus::Done);
    assert!(m.local_unfinished().is_empty());

    let fresh = tempfile::tempdir().unwrap();
    let f = manager(fresh.path());
    let other = f.create(request(SOURCES[1], 3, OracleKind::Local)).unwrap().session_id;
    f.run_local(&other).unwrap();
    assert_eq!(untimed(records(&m, &id)), untimed(records(&f, &other)));
}

#[test]
fn torn_log_tail_is_dropped_on_replay() {
    let dir = tempfile::tempdir().unwrap();
    let id = {
        let m = manager(dir.path());
        let id = m.create(request(SOURCES[0], 3, OracleKind::Human)).unwrap().session_id;
        m.submit_label(&id, 0, 0).unwrap();
        id
    };
    let path = dir.path().join(format!("{id}.jsonl"));
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("{\"event\":\"label\",\"seq\":1,");
    std::fs::write(&path, text).unwrap();
    let m = manager(dir.path());
    assert_eq!(m.pending(&id).unwrap().seq, 1);
}

#[test]
fn stale_and_invalid_submissions_leave_the_session_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let m = manager(dir.path());
    let id = m.create(request(SOURCES[0], 3, OracleKind::Human)).unwrap().session_id;
    m.submit_label(&id, 0, 0).unwrap();
    let before = records(&m, &id);
    let log_before = std::fs::read_to_string(dir.path().join(format!("{id}.jsonl"))).unwrap();

    let err = m.submit_label(&id, 0, 0).unwrap_err();
    assert!(matches!(err, ServiceError::StaleSeq { submitted: 0, current: 1 }), "{err}");
    let err = m.submit_label(&id, 1, 4).unwrap_err();
    assert!(matches!(err, ServiceError::Validation(_)), "{err}");

    assert_eq!(records(&m, &id), before);
    let log_after = std::fs::read_to_string(dir.path().join(format!("{id}.jsonl"))).unwrap();
    assert_eq!(log_before, log_after);
    assert_eq!(m.pending(&id).unwrap().seq, 1);
}

#[test]
fn reconstruction_only_session_finishes_after_one_label() {
    let dir = tempfile::tempdir().unwrap();
    let m = manager(dir.path());
    let mut req = request(SOURCES[0], 3, OracleKind::Human);
    req.config = Some(LeapFactualConfig {
        n_blend: 0,
        n_inject: 0,
        ..LeapFactualConfig::morpho()
    });
    let id = m.create(req).unwrap().session_id;
    assert_eq!(records(&m, &id).len(), 1);
    let summary = m.submit_label(&id, 0, 0).unwrap();
    assert_eq!(summary.status, SessionStatus::Done);
    assert_eq!(summary.final_label, Some(0));
    assert!(matches!(m.pending(&id).unwrap_err(), ServiceError::NoPending(_)));
    assert_eq!(records(&m, &id).len(), 1);
}

#[test]
fn target_label_during_blending_starts_injection() {
    let dir = tempfile::tempdir().unwrap();
    let m = manager(dir.path());
    let id = m.create(request(SOURCES[0], 3, OracleKind::Human)).unwrap().session_id;
    let summary = m.submit_label(&id, 0, 0).unwrap();
    assert_eq!(summary.stage, Stage::Blending);
    let summary = m.submit_label(&id, 1, 3).unwrap();
    assert_eq!(summary.stage, Stage::Injecting);
    assert!(summary.stopped_early);
    assert_eq!((summary.blend_leaps, summary.inject_leaps), (1, 1));
}

#[test]
fn done_trajectory_has_two_entries_per_leap_plus_source() {
    let dir = tempfile::tempdir().unwrap();
    let m = manager(dir.path());
    let id = m.create(request(SOURCES[2], 1, OracleKind::Human)).unwrap().session_id;
    answer_like_local(&m, &id);
    let s = m.summary(&id).unwrap();
    let recs: Vec<TrajectoryRecord> = records(&m, &id);
    assert_eq!(recs.len(), 1 + 2 * (s.blend_leaps + s.inject_leaps));
}

#[test]
fn concurrent_sessions_are_independent() {
    let dir = tempfile::tempdir().unwrap();
    let m = Arc::new(manager(dir.path()));
    let handles: Vec<_> = (0..4)
        .map(|i| {
            let m = m.clone();
            std::thread::spawn(move || {
                let source = SOURCES[i % SOURCES.len()];
                let id = m.create(request(source, 3, OracleKind::Human)).unwrap().session_id;
                answer_like_local(&m, &id);
                (i, id)
            })
        })
        .collect();
    let results: Vec<(usize, String)> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    let mut ids: Vec<&String> = results.iter().map(|(_, id)| id).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 4);
    // Sessions 0 and 3 share a source, so their histories match exactly.
    let find = |i: usize| &results.iter().find(|(j, _)| *j == i).unwrap().1;
    assert_eq!(untimed(records(&m, find(0))), untimed(records(&m, find(3))));
    assert_ne!(untimed(records(&m, find(0))), untimed(records(&m, find(1))));
}

#[test]
fn expired_sessions_stay_readable_but_refuse_labels() {
    let dir = tempfile::tempdir().unwrap();
    let m = SessionManager::open(toy_models(), dir.path(), Some(Duration::ZERO)).unwrap();
    let id = m.create(request(SOURCES[0], 3, OracleKind::Human)).unwrap().session_id;
    assert_eq!(m.summary(&id).unwrap().status, SessionStatus::Expired);
    assert!(matches!(m.pending(&id).unwrap_err(), ServiceError::Expired(_)));
    assert!(matches!(m.submit_label(&id, 0, 0).unwrap_err(), ServiceError::Expired(_)));
    assert_eq!(records(&m, &id).len(), 1);
}

#[test]
fn creation_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let m = manager(dir.path());
    assert!(matches!(m.create(request(SOURCES[0], 4, OracleKind::Human)), Err(ServiceError::Validation(_))));
    let mut req = request(SOURCES[0], 3, OracleKind::Human);
    req.source_inline = Some(vec![0.0; 3]);
    assert!(matches!(m.create(req), Err(ServiceError::Validation(_))));
    let mut req = request(SOURCES[0], 3, OracleKind::Human);
    req.source_id = Some(0);
    assert!(matches!(m.create(req), Err(ServiceError::Validation(_))));
    assert!(m.ids().is_empty());
}
