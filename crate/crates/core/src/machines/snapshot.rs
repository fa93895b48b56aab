//! Snapshot objects.
//!
//! [`DcSnapImpl`] is the lock-free snapshot by clean double collects over
//! single-writer components tagged with sequence numbers. [`SlSnapImpl`]
//! composes a linearizable snapshot `S` with a register `R` that publishes
//! whole views: updaters update `S`, scan it and publish the scan in `R`;
//! scanners return a view only once they see the same view in `R`, in `S`
//! and in `R` again, with no write to `R` in between.

use std::sync::Arc;

use crate::machines::{AbaImpl, AbaVariant, AtomicObj, Cx, Ids, LoadOptions, MachineError, Obj, SubMode};
use crate::seqspec::{AbaSpec, RegisterSpec, SnapshotSpec};
use crate::transcript::Line;
use crate::value::{Ignored, Invocation, ObjId, OpId, Pid, Value};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum DcPc {
    Idle,
    Update(Value),
    /// Collecting: the previous complete collect and the current partial one.
    Collect { prev: Option<Vec<Value>>, cur: Vec<Value> },
}

/// Lock-free snapshot by clean double collects.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DcSnapImpl {
    pub id: ObjId,
    base: ObjId,
    cells: Vec<Value>,
    seqs: Vec<i64>,
    pcs: Vec<DcPc>,
}

impl DcSnapImpl {
    pub fn new(id: ObjId, ids: &mut Ids, n: usize) -> Self {
        let base = ids.take_many(n);
        DcSnapImpl {
            id,
            base,
            cells: vec![Value::pair(Value::Bot, Value::Int(0)); n],
            seqs: vec![0; n],
            pcs: vec![DcPc::Idle; n],
        }
    }

    pub fn invoke(&mut self, pid: Pid, inv: &Invocation) -> Result<(), MachineError> {
        let n = self.pcs.len();
        let i = pid.checked_sub(1).filter(|&i| i < n).ok_or(MachineError::BadProcess { pid, n })?;
        self.pcs[i] = match (&*inv.name, inv.args.as_slice()) {
            ("update", [x]) if !x.is_bot() => DcPc::Update(x.clone()),
            ("scan", []) => DcPc::Collect { prev: None, cur: Vec::new() },
            _ => return Err(MachineError::BadInvocation { alg: "dcsnapshot".into(), inv: inv.to_string() }),
        };
        Ok(())
    }

    pub fn next_line(&self, pid: Pid) -> Option<Line> {
        match self.pcs[pid - 1] {
            DcPc::Idle => None,
            DcPc::Update(_) => Some(Line::DcUpdate),
            DcPc::Collect { .. } => Some(Line::DcCollect),
        }
    }

    pub fn step(&mut self, pid: Pid, cx: &mut Cx) -> Option<Value> {
        let i = pid - 1;
        match std::mem::replace(&mut self.pcs[i], DcPc::Idle) {
            DcPc::Idle => None,
            DcPc::Update(x) => {
                self.seqs[i] += 1;
                let v = Value::pair(x, Value::Int(self.seqs[i]));
                cx.write(pid, self.base + i as ObjId, Line::DcUpdate, &mut self.cells[i], v);
                Some(Value::Unit)
            }
            DcPc::Collect { prev, mut cur } => {
                let k = cur.len();
                cur.push(cx.read(pid, self.base + k as ObjId, Line::DcCollect, &self.cells[k]));
                if cur.len() < self.cells.len() {
                    self.pcs[i] = DcPc::Collect { prev, cur };
                    return None;
                }
                if prev.as_ref() == Some(&cur) {
                    return Some(Value::Vector(cur.iter().map(|c| c.as_tuple().expect("tagged cell")[0].clone()).collect()));
                }
                self.pcs[i] = DcPc::Collect { prev: Some(cur), cur: Vec::new() };
                None
            }
        }
    }
}

/// Flavour of the composed snapshot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SlVariant {
    /// Components hold the written values.
    Plain,
    /// Components hold `(value, seq)` with a per-process counter; views are
    /// compared and returned by their values.
    Seq,
    /// `R` is a plain register and the scanner ignores whether it was written.
    NoAba,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Pc {
    Idle,
    Update { x: Value },
    UpdateScan,
    UpdateWrite { view: Value },
    Read1,
    Scan { first: Value },
    Read2 { first: Value, view: Value },
    Publish { view: Value },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Frame {
    pc: Pc,
    sub: Option<Ignored<OpId>>,
}

/// Snapshot composed from a snapshot `S` and a view register `R`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SlSnapImpl {
    pub id: ObjId,
    pub variant: SlVariant,
    s: Obj,
    r: Obj,
    seqs: Vec<i64>,
    frames: Vec<Frame>,
}

/// Component values of a view whose components may carry sequence numbers.
pub fn vals(view: &Value) -> Value {
    match view.as_vector() {
        Some(cells) => Value::Vector(
            cells
                .iter()
                .map(|c| match c.as_tuple() {
                    Some([x, Value::Int(_)]) => x.clone(),
                    _ => c.clone(),
                })
                .collect(),
        ),
        None => view.clone(),
    }
}

/// Sum of the sequence numbers of a view (`⊥` components count as `0`).
pub fn seq_sum(view: &Value) -> i64 {
    view.as_vector()
        .map(|cells| {
            cells
                .iter()
                .map(|c| match c.as_tuple() {
                    Some([_, Value::Int(s)]) => *s,
                    _ => 0,
                })
                .sum()
        })
        .unwrap_or(0)
}

impl SlSnapImpl {
    pub fn new(id: ObjId, ids: &mut Ids, n: usize, variant: SlVariant, opts: &LoadOptions) -> Self {
        let s_id = ids.take();
        let s = match opts.snapshot_mode {
            SubMode::Atomic => Obj::Atomic(AtomicObj::new(s_id, Arc::new(SnapshotSpec::new(n)), n)),
            SubMode::Nested => Obj::DcSnap(DcSnapImpl::new(s_id, ids, n)),
        };
        let r_id = ids.take();
        let empty = Value::filled(n, Value::Bot);
        let r = match (variant, opts.register_mode) {
            (SlVariant::NoAba, _) => Obj::Atomic(AtomicObj::new(r_id, Arc::new(RegisterSpec::new(empty)), n)),
            (_, SubMode::Atomic) => {
                Obj::Atomic(AtomicObj::new(r_id, Arc::new(AbaSpec { n, ..AbaSpec::with_initial(empty) }), n))
            }
            (_, SubMode::Nested) => Obj::Aba(AbaImpl::new(r_id, ids, n, AbaVariant::Sl, empty, opts.getseq_seed)),
        };
        SlSnapImpl { id, variant, s, r, seqs: vec![0; n], frames: vec![Frame { pc: Pc::Idle, sub: None }; n] }
    }

    /// The snapshot sub-object `S`.
    pub fn s(&self) -> &Obj {
        &self.s
    }

    /// The view register `R`.
    pub fn r(&self) -> &Obj {
        &self.r
    }

    pub fn invoke(&mut self, pid: Pid, inv: &Invocation) -> Result<(), MachineError> {
        let n = self.frames.len();
        let i = pid.checked_sub(1).filter(|&i| i < n).ok_or(MachineError::BadProcess { pid, n })?;
        self.frames[i].pc = match (&*inv.name, inv.args.as_slice()) {
            ("update", [x]) if !x.is_bot() => Pc::Update { x: x.clone() },
            ("scan", []) => Pc::Read1,
            _ => return Err(MachineError::BadInvocation { alg: "slsnapshot".into(), inv: inv.to_string() }),
        };
        Ok(())
    }

    pub fn next_line(&self, pid: Pid) -> Option<Line> {
        Some(match self.frames[pid - 1].pc {
            Pc::Idle => return None,
            Pc::Update { .. } => Line::SUpdate,
            Pc::UpdateScan => Line::SluScan,
            Pc::UpdateWrite { .. } => Line::SluDWrite,
            Pc::Read1 => Line::DRead1,
            Pc::Scan { .. } => Line::SlsScan,
            Pc::Read2 { .. } => Line::DRead2,
            Pc::Publish { .. } => Line::SlsDWrite,
        })
    }

    fn read_inv(&self) -> Invocation {
        match self.variant {
            SlVariant::NoAba => Invocation::nullary("read"),
            _ => Invocation::nullary("DRead"),
        }
    }

    fn write_inv(&self, view: Value) -> Invocation {
        match self.variant {
            SlVariant::NoAba => Invocation::unary("write", view),
            _ => Invocation::unary("DWrite", view),
        }
    }

    /// Splits a response of `R` into the view and the written-since flag.
    fn split(&self, resp: Value) -> (Value, bool) {
        match self.variant {
            SlVariant::NoAba => (resp, false),
            _ => match resp.as_tuple() {
                Some([v, Value::Bool(c)]) => (v.clone(), *c),
                _ => unreachable!("DRead returns a pair"),
            },
        }
    }

    fn same(&self, a: &Value, b: &Value) -> bool {
        match self.variant {
            SlVariant::Seq => vals(a) == vals(b),
            _ => a == b,
        }
    }

    pub fn step(&mut self, pid: Pid, cx: &mut Cx) -> Option<Value> {
        let i = pid - 1;
        let pc = self.frames[i].pc.clone();
        let mut pending = self.frames[i].sub.take();
        let sub = &mut pending;
        let (next, resp) = match pc {
            Pc::Idle => return None,
            Pc::Update { x } => {
                let arg = match self.variant {
                    SlVariant::Seq => Value::pair(x.clone(), Value::Int(self.seqs[i] + 1)),
                    _ => x.clone(),
                };
                match cx.call(pid, &mut self.s, "S", sub, Line::SUpdate, &Invocation::unary("update", arg)) {
                    None => (Pc::Update { x }, None),
                    Some(_) => {
                        if self.variant == SlVariant::Seq {
                            self.seqs[i] += 1;
                        }
                        (Pc::UpdateScan, None)
                    }
                }
            }
            Pc::UpdateScan => match cx.call(pid, &mut self.s, "S", sub, Line::SluScan, &Invocation::nullary("scan")) {
                None => (Pc::UpdateScan, None),
                Some(view) => (Pc::UpdateWrite { view }, None),
            },
            Pc::UpdateWrite { view } => {
                let inv = self.write_inv(view.clone());
                match cx.call(pid, &mut self.r, "R", sub, Line::SluDWrite, &inv) {
                    None => (Pc::UpdateWrite { view }, None),
                    Some(_) => (Pc::Idle, Some(Value::Unit)),
                }
            }
            Pc::Read1 => {
                let inv = self.read_inv();
                match cx.call(pid, &mut self.r, "R", sub, Line::DRead1, &inv) {
                    None => (Pc::Read1, None),
                    Some(r) => (Pc::Scan { first: self.split(r).0 }, None),
                }
            }
            Pc::Scan { first } => match cx.call(pid, &mut self.s, "S", sub, Line::SlsScan, &Invocation::nullary("scan")) {
                None => (Pc::Scan { first }, None),
                Some(view) => (Pc::Read2 { first, view }, None),
            },
            Pc::Read2 { first, view } => {
                let inv = self.read_inv();
                match cx.call(pid, &mut self.r, "R", sub, Line::DRead2, &inv) {
                    None => (Pc::Read2 { first, view }, None),
                    Some(r) => {
                        let (second, written) = self.split(r);
                        let agree = self.same(&first, &view) && self.same(&view, &second);
                        if !agree {
                            (Pc::Publish { view }, None)
                        } else if written {
                            (Pc::Read1, None)
                        } else {
                            let out = match self.variant {
                                SlVariant::Seq => vals(&second),
                                _ => second,
                            };
                            (Pc::Idle, Some(out))
                        }
                    }
                }
            }
            Pc::Publish { view } => {
                let inv = self.write_inv(view.clone());
                match cx.call(pid, &mut self.r, "R", sub, Line::SlsDWrite, &inv) {
                    None => (Pc::Publish { view }, None),
                    Some(_) => (Pc::Read1, None),
                }
            }
        };
        self.frames[i].sub = pending;
        self.frames[i].pc = next;
        resp
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machines::{programs, AlgorithmId, Machine};
    use crate::transcript::TOP;

    #[test]
    fn solo_update_uses_one_call_per_sub_operation() {
        let mut m = Machine::load(AlgorithmId::SlSnapshot, 2, programs(&["update(1)", ""])).unwrap();
        let mut ev = Vec::new();
        assert_eq!(m.run_solo_op(1, Some(&mut ev), 10).unwrap(), 3);
        let r = m.report();
        assert_eq!(r["update.S.update"], 1);
        assert_eq!(r["update.S.scan"], 1);
        assert_eq!(r["update.R.DWrite"], 1);
    }

    #[test]
    fn solo_scan_returns_published_view() {
        for alg in [AlgorithmId::SlSnapshot, AlgorithmId::SlSnapshotSeq, AlgorithmId::NoAbaSnapshot] {
            let mut m = Machine::load(alg, 2, programs(&["update(4)", "scan()"])).unwrap();
            m.run_solo_op(1, None, 10).unwrap();
            let mut ev = Vec::new();
            m.run_solo_op(2, Some(&mut ev), 20).unwrap();
            let last = ev.iter().rev().find(|e| e.obj == TOP).unwrap();
            assert_eq!(last.response(), Some(&Value::Vector(vec![Value::Int(4), Value::Bot])), "{alg}");
        }
    }

    #[test]
    fn nested_sub_objects_compose() {
        let opts = LoadOptions { snapshot_mode: SubMode::Nested, register_mode: SubMode::Nested, ..Default::default() };
        let mut m = Machine::load_with(AlgorithmId::SlSnapshot, 2, programs(&["update(1); scan()", "update(2)"]), &opts).unwrap();
        let mut k = 0;
        while !m.is_done() {
            let en = m.enabled_pids();
            let info = m.step(en[k % en.len()], None).unwrap();
            assert!(info.accesses <= 1);
            k += 1;
        }
        assert!(k > 10);
    }

    #[test]
    fn double_collect_needs_two_equal_collects() {
        let mut m = Machine::load(AlgorithmId::DcSnapshot, 3, programs(&["scan()", "", ""])).unwrap();
        assert_eq!(m.run_solo_op(1, None, 100).unwrap(), 6);
    }

    #[test]
    fn vals_and_seq_sum_of_tagged_views() {
        let v = Value::Vector(vec![Value::pair(Value::Int(3), Value::Int(2)), Value::Bot]);
        assert_eq!(vals(&v), Value::Vector(vec![Value::Int(3), Value::Bot]));
        assert_eq!(seq_sum(&v), 2);
    }
}
