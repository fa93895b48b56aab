//! Max-register from an array of read/write registers `R[1..]`.
//!
//! `maxWrite(x)` fills `R[1..=x]` with `x`. `maxRead` walks upward: it
//! helps by rewriting the largest value it knows, then reads the next cell
//! and stops when that cell is still `0`. The last value found is kept
//! across reads.

use crate::machines::{Cx, Ids, MachineError};
use crate::transcript::Line;
use crate::value::{Invocation, ObjId, Pid, Value};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Pc {
    Idle,
    /// `maxWrite(x)` about to write `R[i]`.
    Write { x: i64, i: i64 },
    /// `maxRead` helping: about to write `R[i]` with the known maximum.
    Help { i: i64 },
    /// `maxRead` about to read `R[t + 1]`.
    Next,
}

/// Max-register implementation; the bounded variant has `R[0..=B+1]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MaxRegImpl {
    pub id: ObjId,
    bound: Option<i64>,
    base: ObjId,
    /// Cells `R[1..]`; cells past the end hold `0`.
    cells: Vec<i64>,
    known: Vec<i64>,
    pcs: Vec<Pc>,
}

impl MaxRegImpl {
    pub fn new(id: ObjId, ids: &mut Ids, n: usize, bound: Option<i64>) -> Self {
        let base = match bound {
            Some(b) => ids.take_many(b as usize + 2),
            None => ids.take_many(1 << 16),
        };
        MaxRegImpl { id, bound, base, cells: Vec::new(), known: vec![0; n], pcs: vec![Pc::Idle; n] }
    }

    /// Value of `R[i]`.
    pub fn cell(&self, i: i64) -> i64 {
        if i < 1 {
            return 0;
        }
        self.cells.get(i as usize - 1).copied().unwrap_or(0)
    }

    fn reg(&self, i: i64) -> ObjId {
        self.base + i as ObjId
    }

    fn write_cell(&mut self, pid: Pid, cx: &mut Cx, i: i64, v: i64, line: Line) {
        let idx = i as usize - 1;
        if self.cells.len() <= idx {
            self.cells.resize(idx + 1, 0);
        }
        let mut cell = Value::Int(self.cells[idx]);
        cx.write(pid, self.reg(i), line, &mut cell, Value::Int(v));
        self.cells[idx] = v;
    }

    pub fn invoke(&mut self, pid: Pid, inv: &Invocation) -> Result<(), MachineError> {
        let bad = || MachineError::BadInvocation { alg: "maxreg".into(), inv: inv.to_string() };
        let i = pid.checked_sub(1).filter(|&i| i < self.pcs.len()).ok_or(MachineError::BadProcess { pid, n: self.pcs.len() })?;
        self.pcs[i] = match (&*inv.name, inv.args.as_slice()) {
            ("maxWrite", [Value::Int(x)]) if *x >= 0 && self.bound.is_none_or(|b| *x <= b) => Pc::Write { x: *x, i: 1 },
            ("maxRead", []) => Pc::Help { i: 1 },
            _ => return Err(bad()),
        };
        Ok(())
    }

    pub fn next_line(&self, pid: Pid) -> Option<Line> {
        match self.pcs[pid - 1] {
            Pc::Idle => None,
            Pc::Write { .. } => Some(Line::MaxWriteReg),
            Pc::Help { i } if i <= self.known[pid - 1] => Some(Line::MaxReadWrite),
            Pc::Help { .. } | Pc::Next => Some(Line::MaxReadNext),
        }
    }

    pub fn step(&mut self, pid: Pid, cx: &mut Cx) -> Option<Value> {
        let p = pid - 1;
        match self.pcs[p].clone() {
            Pc::Idle => None,
            Pc::Write { x, i } => {
                // `maxWrite(0)` has an empty loop and responds without access.
                if i <= x {
                    self.write_cell(pid, cx, i, x, Line::MaxWriteReg);
                }
                if i >= x {
                    self.pcs[p] = Pc::Idle;
                    Some(Value::Unit)
                } else {
                    self.pcs[p] = Pc::Write { x, i: i + 1 };
                    None
                }
            }
            Pc::Help { i } => {
                let t = self.known[p];
                if i <= t {
                    self.write_cell(pid, cx, i, t, Line::MaxReadWrite);
                    self.pcs[p] = if i < t { Pc::Help { i: i + 1 } } else { Pc::Next };
                    None
                } else {
                    self.pcs[p] = Pc::Next;
                    self.step(pid, cx)
                }
            }
            Pc::Next => {
                let t = self.known[p];
                let v = cx.read(pid, self.reg(t + 1), Line::MaxReadNext, &Value::Int(self.cell(t + 1)));
                let r = v.as_int().expect("integer cell");
                if r == 0 {
                    self.pcs[p] = Pc::Idle;
                    Some(Value::Int(t))
                } else {
                    self.known[p] = r;
                    self.pcs[p] = Pc::Help { i: 1 };
                    None
                }
            }
        }
    }
}
