//! Objects that take effect in a single step.

use crate::machines::{Cx, MachineError};
use crate::seqspec::SpecRef;
use crate::transcript::Line;
use crate::value::{Ignored, Invocation, ObjId, Pid, Value};

/// An object whose every operation is one shared access applying its
/// sequential specification.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AtomicObj {
    pub id: ObjId,
    spec: Ignored<SpecRef>,
    pub state: Value,
    pending: Vec<Option<Invocation>>,
}

impl AtomicObj {
    pub fn new(id: ObjId, spec: SpecRef, n: usize) -> Self {
        let state = spec.initial();
        AtomicObj { id, spec: Ignored(spec), state, pending: vec![None; n] }
    }

    /// The same object starting from `state`.
    pub fn with_state(id: ObjId, spec: SpecRef, n: usize, state: Value) -> Self {
        AtomicObj { id, spec: Ignored(spec), state, pending: vec![None; n] }
    }

    pub fn invoke(&mut self, pid: Pid, inv: &Invocation) -> Result<(), MachineError> {
        let slot = self.pending.get_mut(pid.wrapping_sub(1)).ok_or(MachineError::BadProcess { pid, n: 0 })?;
        if self.spec.apply(&self.state, pid, inv).is_err() {
            return Err(MachineError::BadInvocation { alg: self.spec.id(), inv: inv.to_string() });
        }
        *slot = Some(inv.clone());
        Ok(())
    }

    pub fn step(&mut self, pid: Pid, cx: &mut Cx) -> Option<Value> {
        let inv = self.pending[pid - 1].take()?;
        cx.access();
        let (next, resp) = self
            .spec
            .apply(&self.state, pid, &inv)
            .unwrap_or_else(|e| panic!("atomic object rejected a validated invocation: {e}"));
        self.state = next;
        Some(resp)
    }

    pub fn next_line(&self, pid: Pid) -> Option<Line> {
        self.pending[pid - 1].as_ref().map(|_| Line::Atomic)
    }
}
