//! Linearization-point rules and their validation.
//!
//! A point assignment maps every top-level operation to the time of one of
//! its steps, or to `∞` (`None`) when it has not taken effect. Ordering the
//! finite points, with a fixed rule for equal points, must give a valid
//! linearization.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::seqspec::{SeqOp, SequentialHistory, TypeSpec};
use crate::transcript::{HOp, History, Line, Selector, Transcript};
use crate::value::{ObjId, OpId, Pid, Value};

use super::lin::top_history;

/// Linearization points by operation id; `None` is `∞`.
pub type PtAssignment = BTreeMap<OpId, Option<usize>>;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PtError {
    #[error("operation {op} ({inv}) does not belong to {alg}")]
    WrongAlgorithm { alg: &'static str, op: OpId, inv: String },
    #[error("operation {0} has a point outside its interval")]
    OutsideInterval(OpId),
    #[error("completed operation {0} has no point")]
    Missing(OpId),
    #[error("operation {op} answers {actual} where the order requires {expected}")]
    Response { op: OpId, actual: Value, expected: String },
}

/// Rank of an operation among operations sharing a point: lower goes first.
pub type TieRank = fn(&HOp) -> u8;

/// Writers before readers (updates and writes rank 0), then process id.
pub fn writers_first(op: &HOp) -> u8 {
    match &*op.inv.name {
        "update" | "DWrite" | "write" | "maxWrite" | "inc" => 0,
        _ => 1,
    }
}

/// Points of the looping ABA-detecting register: a `DRead` takes effect at
/// its final second read of `X`, a `DWrite` at its write of `X`.
pub fn slaba_pt(t: &Transcript) -> Result<PtAssignment, PtError> {
    let h = top_history(t);
    let mut pt = PtAssignment::new();
    for op in h.ops() {
        let p = match &*op.inv.name {
            "DRead" => op.rsp_time.and_then(|_| t.line_time(op.id, Line::RegRead2)),
            "DWrite" => t.line_time(op.id, Line::LinWrite),
            _ => return Err(PtError::WrongAlgorithm { alg: "slaba", op: op.id, inv: op.inv.to_string() }),
        };
        pt.insert(op.id, p);
    }
    Ok(pt)
}

/// Points of the composed snapshot. A scan takes effect at its final
/// `DRead2`. An update of `x` by `p` takes effect at its own `R.DWrite`, or
/// earlier, at the point of the first completed scan that responds after the
/// update's invocation and returns `x` in entry `p`.
pub fn slss_pt(t: &Transcript) -> Result<PtAssignment, PtError> {
    let h = top_history(t);
    let mut pt = PtAssignment::new();
    let mut scans: Vec<(usize, Value)> = Vec::new();
    for op in h.ops() {
        match &*op.inv.name {
            "scan" => {
                let p = op.rsp_time.and_then(|_| t.line_time(op.id, Line::DRead2));
                if let (Some(p), Some(v)) = (p, &op.resp) {
                    scans.push((p, v.clone()));
                }
                pt.insert(op.id, p);
            }
            "update" => {}
            _ => return Err(PtError::WrongAlgorithm { alg: "slsnapshot", op: op.id, inv: op.inv.to_string() }),
        }
    }
    for op in h.ops().iter().filter(|o| o.inv.is("update")) {
        let x = op.inv.arg(0).expect("update has an argument");
        let early = scans
            .iter()
            .filter(|(p, v)| op.inv_time < *p && v.as_vector().and_then(|c| c.get(op.pid - 1)) == Some(x))
            .map(|(p, _)| *p)
            .min();
        let own = t.line_time(op.id, Line::SluDWrite);
        let p = match (early, own) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        pt.insert(op.id, p);
    }
    Ok(pt)
}

/// Points at the response step; used for atomic objects.
pub fn response_pt(h: &History) -> PtAssignment {
    h.ops().iter().map(|o| (o.id, o.rsp_time)).collect()
}

/// Points of the operations of an atomic sub-object `obj` inside `t`.
pub fn atomic_pt(t: &Transcript, obj: ObjId) -> PtAssignment {
    response_pt(&History::from_transcript(&t.project(Selector::Object(obj))))
}

/// Orders the operations with finite points by point, breaking ties by
/// `rank` and then process id.
pub fn order_by_pt<'a>(h: &'a History, pt: &PtAssignment, rank: TieRank) -> Vec<&'a HOp> {
    let mut ops: Vec<(&HOp, usize)> =
        h.ops().iter().filter_map(|o| pt.get(&o.id).copied().flatten().map(|p| (o, p))).collect();
    ops.sort_by_key(|(o, p)| (*p, rank(o), o.pid));
    ops.into_iter().map(|(o, _)| o).collect()
}

/// The sequential history induced by `pt`, checked against the interval
/// condition and the specification. Pending operations with a point receive
/// the response their position dictates.
pub fn induced_linearization(
    h: &History,
    pt: &PtAssignment,
    spec: &dyn TypeSpec,
    rank: TieRank,
) -> Result<SequentialHistory, PtError> {
    for o in h.ops() {
        match pt.get(&o.id).copied().flatten() {
            Some(p) => {
                if p < o.inv_time || o.rsp_time.is_some_and(|r| p > r) {
                    return Err(PtError::OutsideInterval(o.id));
                }
            }
            None if !o.is_pending() => return Err(PtError::Missing(o.id)),
            None => {}
        }
    }
    let mut state = spec.initial();
    let mut out = Vec::new();
    for o in order_by_pt(h, pt, rank) {
        let (next, resp) = spec.apply(&state, o.pid, &o.inv).map_err(|e| PtError::Response {
            op: o.id,
            actual: o.resp.clone().unwrap_or(Value::Bot),
            expected: e.to_string(),
        })?;
        if let Some(actual) = &o.resp {
            if *actual != resp {
                return Err(PtError::Response { op: o.id, actual: actual.clone(), expected: resp.to_string() });
            }
        }
        state = next;
        out.push(SeqOp { id: o.id, pid: o.pid, inv: o.inv.clone(), resp });
    }
    Ok(SequentialHistory::new(out))
}

/// Whether the points of `pt` yield a valid linearization of the top-level
/// history of `t`.
pub fn validate_pt(t: &Transcript, pt: &PtAssignment, spec: &dyn TypeSpec, rank: TieRank) -> bool {
    induced_linearization(&top_history(t), pt, spec, rank).is_ok()
}

/// The value component `p` of a linearizable snapshot holds at time `at`,
/// given points `pt_s` of the snapshot's operations in `t` (object `obj`):
/// `x` if some `update(x)` by `p` took effect before `at` with no update of a
/// different value by `p` taking effect after it and no later than `at`;
/// `⊥` otherwise.
pub fn interpreted_value(t: &Transcript, obj: ObjId, pt_s: &PtAssignment, p: Pid, at: usize) -> Value {
    let h = History::from_transcript(&t.project(Selector::Object(obj)));
    let ups: Vec<(usize, &Value)> = h
        .ops()
        .iter()
        .filter(|o| o.pid == p && o.inv.is("update"))
        .filter_map(|o| pt_s.get(&o.id).copied().flatten().map(|q| (q, o.inv.arg(0).expect("update argument"))))
        .collect();
    for &(q, x) in &ups {
        if q < at && !ups.iter().any(|&(q2, y)| y != x && q < q2 && q2 <= at) {
            return x.clone();
        }
    }
    Value::Bot
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machines::{programs, AlgorithmId, Machine};
    use crate::seqspec::AbaSpec;
    use crate::transcript::Event;
    use crate::value::Invocation;

    fn run(alg: AlgorithmId, progs: &[&str], schedule: &[usize]) -> Transcript {
        let mut m = Machine::load(alg, progs.len(), programs(progs)).unwrap();
        let out = m.run(schedule);
        assert!(out.stopped.is_none(), "{:?}", out.stopped);
        out.transcript
    }

    #[test]
    fn empty_transcript_validates() {
        let t = Transcript::new(2);
        assert!(validate_pt(&t, &PtAssignment::new(), &AbaSpec::new(), writers_first));
    }

    #[test]
    fn solo_write_takes_effect_at_its_write_of_x() {
        let t = run(AlgorithmId::SlAba, &["DWrite(1)"], &[1, 1]);
        let pt = slaba_pt(&t).unwrap();
        let (op, p) = pt.iter().next().unwrap();
        assert_eq!(*p, t.line_time(*op, Line::LinWrite));
        assert_eq!(p.map(|x| x + 1), t.rsp_time(*op));
    }

    #[test]
    fn looping_read_takes_effect_at_its_last_iteration() {
        // The write lands inside the first iteration; the second iteration
        // sees a tag different from the stale announcement; the third is quiet.
        let t = run(AlgorithmId::SlAba, &["DRead()", "DWrite(1)"], &[1, 2, 2, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1]);
        let h = top_history(&t);
        let read = h.ops().iter().find(|o| o.pid == 1).unwrap();
        assert_eq!(t.line_accesses(read.id, Line::RegRead2).len(), 3);
        let pt = slaba_pt(&t).unwrap();
        assert_eq!(pt[&read.id], t.line_accesses(read.id, Line::RegRead2).last().map(|a| a.1));
        let r = induced_linearization(&top_history(&t), &pt, &AbaSpec { n: 2, ..AbaSpec::new() }, writers_first);
        assert!(r.is_ok(), "{r:?}\n{t}");
    }

    #[test]
    fn read_cut_before_second_read_has_no_point() {
        let t = run(AlgorithmId::SlAba, &["DRead()"], &[1, 1]);
        let pt = slaba_pt(&t).unwrap();
        assert_eq!(pt.values().next(), Some(&None));
    }

    #[test]
    fn moving_a_read_before_the_write_it_saw_fails() {
        let t = run(AlgorithmId::SlAba, &["DWrite(3)", "DRead()"], &[1, 1, 2, 2, 2, 2]);
        let mut pt = slaba_pt(&t).unwrap();
        let h = top_history(&t);
        let read = h.ops().iter().find(|o| o.pid == 2).unwrap();
        assert!(validate_pt(&t, &pt, &AbaSpec::new(), writers_first));
        pt.insert(read.id, Some(1));
        assert!(!validate_pt(&t, &pt, &AbaSpec::new(), writers_first));
    }

    #[test]
    fn solo_update_takes_effect_at_its_publication() {
        let t = run(AlgorithmId::SlSnapshot, &["update(1)", ""], &[1, 1, 1]);
        let pt = slss_pt(&t).unwrap();
        let (op, p) = pt.iter().next().unwrap();
        assert_eq!(*p, t.line_time(*op, Line::SluDWrite));
    }

    #[test]
    fn scan_returning_an_update_early_linearizes_it() {
        // p1 updates S and scans S; p2 then runs a whole scan, which helps by
        // publishing the view and returns it before p1's own R.DWrite.
        let t = run(AlgorithmId::SlSnapshot, &["update(1)", "scan()"], &[1, 1, 2, 2, 2, 2, 2, 2, 2]);
        let h = top_history(&t);
        let up = h.ops().iter().find(|o| o.pid == 1).unwrap();
        let sc = h.ops().iter().find(|o| o.pid == 2).unwrap();
        assert_eq!(sc.resp, Some(Value::Vector(vec![Value::Int(1), Value::Bot])));
        let pt = slss_pt(&t).unwrap();
        assert_eq!(pt[&up.id], pt[&sc.id]);
        assert_eq!(pt[&sc.id], t.line_time(sc.id, Line::DRead2));
        assert!(validate_pt(&t, &pt, &crate::seqspec::SnapshotSpec::new(2), writers_first));
    }

    #[test]
    fn interpreted_values_follow_the_rules() {
        let mut t = Transcript::new(1);
        let up = |op, x| Event::inv(5, op, 1, Invocation::unary("update", Value::Int(x)));
        t.push(up(1, 7));
        t.push(Event::rsp(5, 1, 1, Value::Unit));
        t.push(up(2, 8));
        t.push(Event::rsp(5, 2, 1, Value::Unit));
        let pt = atomic_pt(&t, 5);
        assert_eq!(interpreted_value(&t, 5, &pt, 2, 9), Value::Bot);
        assert_eq!(interpreted_value(&t, 5, &pt, 1, 3), Value::Int(7));
        assert_eq!(interpreted_value(&t, 5, &pt, 1, 4), Value::Bot);
        assert_eq!(interpreted_value(&t, 5, &pt, 1, 5), Value::Int(8));
    }
}
