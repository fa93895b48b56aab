//! Linearizability of histories by depth-first search over linearization
//! prefixes, memoizing dead `(linearized set, state)` pairs.

use std::collections::HashSet;

use thiserror::Error;

use crate::seqspec::{SeqOp, SequentialHistory, TypeSpec};
use crate::transcript::{HOp, History, Transcript, TOP};
use crate::value::{OpId, Value};

/// Most operations a single search accepts.
pub const MAX_OPS: usize = 64;

/// A linearization of a history.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinWitness {
    pub order: SequentialHistory,
    /// Pending operations that were included (with the order's responses).
    pub included_pending: Vec<OpId>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LinError {
    #[error("not linearizable ({explored} search states explored)")]
    NotLinearizable { explored: usize },
    #[error("history has {0} operations; the search handles at most {MAX_OPS}")]
    TooLarge(usize),
}

/// Top-level operations of a transcript as a history.
pub fn top_history(t: &Transcript) -> History {
    let h = History::from_transcript(t);
    History::from_ops(h.n, h.ops().iter().filter(|o| o.obj == TOP).cloned().collect())
}

struct Search<'a> {
    ops: &'a [HOp],
    spec: &'a dyn TypeSpec,
    /// `before[i]`: completed operations that must precede operation `i`.
    before: Vec<u64>,
    completed: u64,
    dead: HashSet<(u64, Value)>,
    order: Vec<(usize, Value)>,
    explored: usize,
}

impl Search<'_> {
    fn go(&mut self, done: u64, state: &Value) -> bool {
        if done & self.completed == self.completed {
            return true;
        }
        if self.dead.contains(&(done, state.clone())) {
            return false;
        }
        self.explored += 1;
        for i in 0..self.ops.len() {
            let bit = 1u64 << i;
            if done & bit != 0 || self.before[i] & !done != 0 {
                continue;
            }
            let op = &self.ops[i];
            let Ok((next, resp)) = self.spec.apply(state, op.pid, &op.inv) else { continue };
            if op.resp.as_ref().is_some_and(|r| *r != resp) {
                continue;
            }
            self.order.push((i, resp));
            if self.go(done | bit, &next) {
                return true;
            }
            self.order.pop();
        }
        self.dead.insert((done, state.clone()));
        false
    }
}

/// Decides whether `h` is linearizable with respect to `spec`.
pub fn check_linearizable(h: &History, spec: &dyn TypeSpec) -> Result<LinWitness, LinError> {
    let ops = h.ops();
    if ops.len() > MAX_OPS {
        return Err(LinError::TooLarge(ops.len()));
    }
    let mut before = vec![0u64; ops.len()];
    let mut completed = 0u64;
    for (j, b) in ops.iter().enumerate() {
        if let Some(r) = b.rsp_time {
            completed |= 1 << j;
            for (i, a) in ops.iter().enumerate() {
                if r < a.inv_time {
                    before[i] |= 1 << j;
                }
            }
        }
    }
    let mut s = Search { ops, spec, before, completed, dead: HashSet::new(), order: Vec::new(), explored: 0 };
    if !s.go(0, &spec.initial()) {
        return Err(LinError::NotLinearizable { explored: s.explored });
    }
    let order = s
        .order
        .iter()
        .map(|(i, resp)| SeqOp { id: ops[*i].id, pid: ops[*i].pid, inv: ops[*i].inv.clone(), resp: resp.clone() })
        .collect();
    let included_pending = s.order.iter().filter(|(i, _)| ops[*i].is_pending()).map(|(i, _)| ops[*i].id).collect();
    Ok(LinWitness { order: SequentialHistory::new(order), included_pending })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqspec::{CounterSpec, SnapshotSpec};
    use crate::value::Invocation;

    fn op(id: OpId, pid: usize, inv: &str, resp: Option<Value>, inv_time: usize, rsp_time: Option<usize>) -> HOp {
        HOp { id, obj: TOP, pid, inv: inv.parse::<Invocation>().unwrap(), resp, inv_time, rsp_time }
    }

    #[test]
    fn overlapping_increment_explains_a_read_of_one() {
        let h = History::from_ops(
            2,
            vec![op(1, 1, "inc()", Some(Value::Unit), 1, Some(4)), op(2, 2, "read()", Some(Value::Int(1)), 2, Some(3))],
        );
        let w = check_linearizable(&h, &CounterSpec { n: 2 }).unwrap();
        assert_eq!(w.order.ops.iter().map(|o| o.id).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn scan_showing_an_unwritten_component_fails() {
        let h = History::from_ops(
            2,
            vec![op(1, 2, "scan()", Some(Value::Vector(vec![Value::Int(5), Value::Bot])), 1, Some(2))],
        );
        assert!(matches!(check_linearizable(&h, &SnapshotSpec::new(2)), Err(LinError::NotLinearizable { .. })));
    }

    #[test]
    fn pending_operation_may_take_effect() {
        let h = History::from_ops(
            2,
            vec![op(1, 1, "inc()", None, 1, None), op(2, 2, "read()", Some(Value::Int(1)), 2, Some(3))],
        );
        let w = check_linearizable(&h, &CounterSpec { n: 2 }).unwrap();
        assert_eq!(w.included_pending, vec![1]);
    }

    #[test]
    fn real_time_order_is_respected() {
        let h = History::from_ops(
            2,
            vec![op(1, 2, "read()", Some(Value::Int(1)), 1, Some(2)), op(2, 1, "inc()", Some(Value::Unit), 3, Some(4))],
        );
        assert!(check_linearizable(&h, &CounterSpec { n: 2 }).is_err());
    }
}
