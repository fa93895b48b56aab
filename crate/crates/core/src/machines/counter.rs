//! Counter from single-writer registers `R[1..=n]`: `inc` rewrites the own
//! cell with its successor, `read` sums all cells one read at a time.

use crate::machines::{Cx, Ids, MachineError};
use crate::transcript::Line;
use crate::value::{Invocation, ObjId, Pid, Value};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Pc {
    Idle,
    IncRead,
    IncWrite(i64),
    /// Summing: next cell index and the partial sum.
    Read { k: usize, sum: i64 },
}

/// Linearizable counter.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CounterImpl {
    pub id: ObjId,
    base: ObjId,
    cells: Vec<Value>,
    pcs: Vec<Pc>,
}

impl CounterImpl {
    pub fn new(id: ObjId, ids: &mut Ids, n: usize) -> Self {
        let base = ids.take_many(n);
        CounterImpl { id, base, cells: vec![Value::Int(0); n], pcs: vec![Pc::Idle; n] }
    }

    pub fn invoke(&mut self, pid: Pid, inv: &Invocation) -> Result<(), MachineError> {
        let n = self.pcs.len();
        let i = pid.checked_sub(1).filter(|&i| i < n).ok_or(MachineError::BadProcess { pid, n })?;
        self.pcs[i] = match (&*inv.name, inv.args.as_slice()) {
            ("inc", []) => Pc::IncRead,
            ("read", []) => Pc::Read { k: 0, sum: 0 },
            _ => return Err(MachineError::BadInvocation { alg: "lincounter".into(), inv: inv.to_string() }),
        };
        Ok(())
    }

    pub fn next_line(&self, pid: Pid) -> Option<Line> {
        match self.pcs[pid - 1] {
            Pc::Idle => None,
            Pc::IncRead => Some(Line::IncRead),
            Pc::IncWrite(_) => Some(Line::IncWrite),
            Pc::Read { .. } => Some(Line::ReadCell),
        }
    }

    pub fn step(&mut self, pid: Pid, cx: &mut Cx) -> Option<Value> {
        let i = pid - 1;
        match std::mem::replace(&mut self.pcs[i], Pc::Idle) {
            Pc::Idle => None,
            Pc::IncRead => {
                let v = cx.read(pid, self.base + i as ObjId, Line::IncRead, &self.cells[i]);
                self.pcs[i] = Pc::IncWrite(v.as_int().expect("integer cell"));
                None
            }
            Pc::IncWrite(x) => {
                cx.write(pid, self.base + i as ObjId, Line::IncWrite, &mut self.cells[i], Value::Int(x + 1));
                Some(Value::Unit)
            }
            Pc::Read { k, sum } => {
                let v = cx.read(pid, self.base + k as ObjId, Line::ReadCell, &self.cells[k]);
                let sum = sum + v.as_int().expect("integer cell");
                if k + 1 == self.cells.len() {
                    Some(Value::Int(sum))
                } else {
                    self.pcs[i] = Pc::Read { k: k + 1, sum };
                    None
                }
            }
        }
    }
}
