use std::fs;

use pdt_core::Outcome;
use pdt_tracker::{FileStore, MemoryStore, Observation, SkillGraph, Store, StudentId, Tracker};

const GRAPH: &str = r#"
[[skills]]
id = "A"
correlations = [{ skill = "B", n_c = 4 }]
[[skills]]
id = "B"
correlations = [{ skill = "A", n_c = 4 }]
[[skills]]
id = "AB"
setup = "or(A, B)"
[[exercises]]
id = "a"
setup = "A"
[[exercises]]
id = "ab"
setup = "and(A, B)"
[[exercises]]
id = "aob"
setup = "or(A, and(A, B))"
"#;

fn graph() -> SkillGraph {
    SkillGraph::from_toml(GRAPH).unwrap().0
}

fn script() -> Vec<Observation> {
    let exercises = ["a", "ab", "aob"];
    (0..60)
        .map(|i: i64| Observation {
            student: if i % 3 == 0 { "s2".into() } else { "s1".into() },
            exercise: exercises[(i * 7 % 3) as usize].into(),
            outcome: Outcome::from_bool((i * i) % 5 < 3),
            at: 1_000 + i * 20_000,
        })
        .collect()
}

fn feed<S: Store>(t: &Tracker<S>, obs: &[Observation]) {
    for o in obs {
        t.record(o).unwrap();
    }
}

#[test]
fn crash_between_append_and_put_is_recovered() {
    let obs = script();
    let reference = Tracker::open(MemoryStore::new(), graph()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    {
        let t = Tracker::open(FileStore::open(dir.path(), true).unwrap(), graph()).unwrap();
        for s in ["s1", "s2"] {
            t.create_student(s.into()).unwrap();
            reference.create_student(s.into()).unwrap();
        }
        let (head, tail) = obs.split_at(40);
        feed(&t, head);
        feed(&reference, &obs);
        // the process dies after logging, before committing states
        for o in tail {
            t.store().append(o).unwrap();
        }
    }
    let recovered = Tracker::open(FileStore::open(dir.path(), true).unwrap(), graph()).unwrap();
    for s in ["s1", "s2"] {
        let id = StudentId::from(s);
        assert_eq!(recovered.record_of(&id).unwrap(), reference.record_of(&id).unwrap());
        let on_disk = recovered.store().load(&id).unwrap().unwrap();
        assert_eq!(on_disk, reference.record_of(&id).unwrap());
    }
}

#[test]
fn log_replay_reproduces_snapshots_byte_for_byte() {
    let obs = script();
    let run = |dir: &std::path::Path, log: &[Observation]| {
        let t = Tracker::open(FileStore::open(dir, false).unwrap(), graph()).unwrap();
        for s in ["s1", "s2"] {
            t.create_student(s.into()).unwrap();
        }
        feed(&t, log);
        let at = 2_000_000;
        let posteriors: Vec<_> = ["s1", "s2"]
            .iter()
            .map(|s| serde_json::to_string(&t.posteriors(&StudentId::from(*s), at).unwrap()).unwrap())
            .collect();
        posteriors
    };
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let p1 = run(first.path(), &obs);
    // second store is rebuilt from the first store's log
    let replayed: Vec<Observation> =
        pdt_tracker::store::read_log(&first.path().join(FileStore::LOG)).unwrap().into_iter().map(|l| l.obs).collect();
    let p2 = run(second.path(), &replayed);
    assert_eq!(p1, p2);
    for s in ["s1", "s2"] {
        let name = format!("{s}.snap");
        let a = fs::read(first.path().join(FileStore::STATES).join(&name)).unwrap();
        let b = fs::read(second.path().join(FileStore::STATES).join(&name)).unwrap();
        assert_eq!(a, b);
    }
    assert_eq!(
        fs::read(first.path().join(FileStore::LOG)).unwrap(),
        fs::read(second.path().join(FileStore::LOG)).unwrap()
    );
}

#[test]
fn rejected_observation_leaves_no_trace() {
    let dir = tempfile::tempdir().unwrap();
    let t = Tracker::open(FileStore::open(dir.path(), false).unwrap(), graph()).unwrap();
    t.create_student("s".into()).unwrap();
    let o = Observation { student: "s".into(), exercise: "a".into(), outcome: Outcome::Success, at: 100 };
    t.record(&o).unwrap();
    let late = Observation { at: 50, ..o.clone() };
    assert!(t.record(&late).is_err());
    let unknown = Observation { exercise: "zzz".into(), ..o };
    assert!(t.record(&unknown).is_err());
    assert_eq!(t.store().replay(0).unwrap().len(), 1);
}
