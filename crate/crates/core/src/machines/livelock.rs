//! A two-process object that is not lock-free: each process raises its
//! flag, returns if the other flag is down, and lowers its own flag to retry
//! otherwise. Alternating steps starve both processes.

use crate::machines::{Cx, Ids, MachineError};
use crate::transcript::Line;
use crate::value::{Invocation, ObjId, Pid, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Pc {
    Idle,
    Raise,
    Check,
    Lower,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LivelockImpl {
    pub id: ObjId,
    base: ObjId,
    flags: [Value; 2],
    pcs: [Pc; 2],
}

impl LivelockImpl {
    pub fn new(id: ObjId, ids: &mut Ids) -> Self {
        let base = ids.take_many(2);
        LivelockImpl { id, base, flags: [Value::Int(0), Value::Int(0)], pcs: [Pc::Idle; 2] }
    }

    pub fn invoke(&mut self, pid: Pid, inv: &Invocation) -> Result<(), MachineError> {
        if !(1..=2).contains(&pid) {
            return Err(MachineError::BadProcess { pid, n: 2 });
        }
        if !inv.is("run") || !inv.args.is_empty() {
            return Err(MachineError::BadInvocation { alg: "livelock".into(), inv: inv.to_string() });
        }
        self.pcs[pid - 1] = Pc::Raise;
        Ok(())
    }

    pub fn next_line(&self, pid: Pid) -> Option<Line> {
        match self.pcs[pid - 1] {
            Pc::Idle => None,
            Pc::Raise => Some(Line::Raise),
            Pc::Check => Some(Line::Check),
            Pc::Lower => Some(Line::Lower),
        }
    }

    pub fn step(&mut self, pid: Pid, cx: &mut Cx) -> Option<Value> {
        let me = pid - 1;
        let other = 1 - me;
        match self.pcs[me] {
            Pc::Idle => None,
            Pc::Raise => {
                cx.write(pid, self.base + me as ObjId, Line::Raise, &mut self.flags[me], Value::Int(1));
                self.pcs[me] = Pc::Check;
                None
            }
            Pc::Check => {
                let v = cx.read(pid, self.base + other as ObjId, Line::Check, &self.flags[other]);
                if v == Value::Int(0) {
                    self.pcs[me] = Pc::Idle;
                    Some(Value::Unit)
                } else {
                    self.pcs[me] = Pc::Lower;
                    None
                }
            }
            Pc::Lower => {
                cx.write(pid, self.base + me as ObjId, Line::Lower, &mut self.flags[me], Value::Int(0));
                self.pcs[me] = Pc::Raise;
                None
            }
        }
    }
}
