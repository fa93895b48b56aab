use proptest::prelude::*;

use slkit::native::{run_stress, NativeAba, NativeSlSnapshot, StressConfig, StressObject};
use slkit::seqspec::{AbaSpec, SnapshotSpec, TypeSpec};
use slkit::value::{Invocation, Value};

fn value(x: u32) -> Value {
    if x == 0 {
        Value::Bot
    } else {
        Value::Int(x as i64)
    }
}

#[derive(Clone, Debug)]
enum Op {
    Write(usize, u32),
    Read(usize),
}

fn ops(n: usize) -> impl Strategy<Value = Vec<Op>> {
    proptest::collection::vec(
        prop_oneof![(1..=n, 1u32..5).prop_map(|(p, v)| Op::Write(p, v)), (1..=n).prop_map(Op::Read)],
        0..40,
    )
}

proptest! {
    #[test]
    fn sequential_aba_matches_the_specification(script in ops(3)) {
        let obj = NativeAba::new(3, 0);
        let mut handles: Vec<_> = (1..=3).map(|p| obj.handle(p)).collect();
        let spec = AbaSpec { n: 3, ..AbaSpec::new() };
        let mut state = spec.initial();
        for op in script {
            let (inv, pid, got) = match op {
                Op::Write(p, v) => {
                    handles[p - 1].dwrite(v);
                    (Invocation::unary("DWrite", Value::Int(v as i64)), p, Value::Unit)
                }
                Op::Read(p) => {
                    let (v, flag) = handles[p - 1].dread();
                    (Invocation::nullary("DRead"), p, Value::pair(value(v), Value::Bool(flag)))
                }
            };
            let (next, want) = spec.apply(&state, pid, &inv).unwrap();
            prop_assert_eq!(got, want);
            state = next;
        }
    }

    #[test]
    fn sequential_snapshot_matches_the_specification(script in ops(3)) {
        let obj = NativeSlSnapshot::new(3);
        let mut handles: Vec<_> = (1..=3).map(|p| obj.handle(p)).collect();
        let spec = SnapshotSpec::new(3);
        let mut state = spec.initial();
        for op in script {
            let (inv, pid, got) = match op {
                Op::Write(p, v) => {
                    handles[p - 1].update(v);
                    (Invocation::unary("update", Value::Int(v as i64)), p, Value::Unit)
                }
                Op::Read(p) => {
                    let v = handles[p - 1].scan();
                    (Invocation::nullary("scan"), p, Value::Vector(v.into_iter().map(value).collect()))
                }
            };
            let (next, want) = spec.apply(&state, pid, &inv).unwrap();
            prop_assert_eq!(got, want);
            state = next;
        }
    }
}

#[test]
fn dwrite_never_exceeds_two_accesses() {
    let obj = NativeAba::new(2, 0);
    let mut h = obj.handle(1);
    for v in 1..100 {
        h.dwrite(v);
        assert!(h.steps <= 2);
    }
}

#[test]
fn updates_make_one_call_of_each_kind() {
    let obj = NativeSlSnapshot::new(2);
    let mut h = obj.handle(1);
    let mut other = obj.handle(2);
    for v in 1..20 {
        h.update(v);
        assert_eq!((h.calls.s_update, h.calls.s_scan, h.calls.r_dwrite, h.calls.r_dread), (1, 1, 1, 0));
        other.scan();
    }
}

#[test]
fn threaded_runs_pass_the_windowed_check() {
    for object in [StressObject::Slaba, StressObject::Snapshot] {
        for yields in [true, false] {
            let r = run_stress(&StressConfig { object, threads: 3, ops: 2000, seed: 5, check: true, yields });
            let c = r.check.unwrap();
            assert_eq!(c.violation, None, "{object:?}");
            assert_eq!(c.overflowed, 0);
            assert_eq!(r.records.len(), 6000);
        }
    }
}
