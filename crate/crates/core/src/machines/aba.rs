//! ABA-detecting registers from one writable register `X` and an array of
//! single-writer announcement registers `A`.
//!
//! Writers tag every value with `(writer, seq)`; sequence numbers come from a
//! bounded pool of `2n + 2` values and avoid both the `n + 1` most recent own
//! tags and every tag currently announced for the writer. Readers announce
//! the tag they saw and compare it with their previous announcement.

use std::collections::{BTreeSet, VecDeque};

use crate::machines::{Cx, Ids, MachineError};
use crate::transcript::Line;
use crate::value::{fingerprint, Invocation, ObjId, Pid, Value};

/// Which reader protocol is used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AbaVariant {
    /// Four accesses per `DRead`; the flag of the current read is carried
    /// over to the next one.
    Lin,
    /// `DRead` repeats the four accesses until nothing changed in between.
    Sl,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Pc {
    Idle,
    /// `DWrite(x)`: next access is the announcement read of `GetSeq`.
    WriteSeq { x: Value },
    /// `DWrite(x)` with the chosen sequence number: next access writes `X`.
    WriteX { x: Value, seq: i64 },
    /// `DRead`: next access is the first read of `X`.
    Read1 { changed: bool },
    /// Next access reads the own announcement.
    ReadAnn { first: Value, changed: bool },
    /// Next access announces the tag seen in the first read.
    Announce { first: Value, prev: Value, changed: bool },
    /// Next access is the second read of `X`.
    Read2 { first: Value, prev: Value, changed: bool },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Proc {
    flag: bool,
    used: VecDeque<Option<i64>>,
    announced: BTreeSet<(usize, i64)>,
    cursor: usize,
    pc: Pc,
}

/// An ABA-detecting register.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AbaImpl {
    pub id: ObjId,
    pub variant: AbaVariant,
    n: usize,
    x_id: ObjId,
    a_base: ObjId,
    x: Value,
    a: Vec<Value>,
    procs: Vec<Proc>,
    seed: Option<u64>,
}

fn tag(writer: &Value, seq: &Value) -> Value {
    Value::Tuple(vec![writer.clone(), seq.clone()])
}

/// Splits an `X` content `(x, writer, seq)` into its value and tag.
fn parts(content: &Value) -> (Value, Value) {
    match content.as_tuple() {
        Some([x, w, s]) => (x.clone(), tag(w, s)),
        _ => unreachable!("X always holds a triple"),
    }
}

impl AbaImpl {
    pub fn new(id: ObjId, ids: &mut Ids, n: usize, variant: AbaVariant, initial: Value, seed: Option<u64>) -> Self {
        let x_id = ids.take();
        let a_base = ids.take_many(n);
        let proc = Proc {
            flag: false,
            used: std::iter::repeat_n(None, n + 1).collect(),
            announced: BTreeSet::new(),
            cursor: 0,
            pc: Pc::Idle,
        };
        AbaImpl {
            id,
            variant,
            n,
            x_id,
            a_base,
            x: Value::Tuple(vec![initial, Value::Bot, Value::Bot]),
            a: vec![tag(&Value::Bot, &Value::Bot); n],
            procs: vec![proc; n],
            seed,
        }
    }

    /// Current content `(x, writer, seq)` of `X`.
    pub fn x(&self) -> &Value {
        &self.x
    }

    /// Current content of the announcement register of `pid`.
    pub fn announcement(&self, pid: Pid) -> &Value {
        &self.a[pid - 1]
    }

    pub fn invoke(&mut self, pid: Pid, inv: &Invocation) -> Result<(), MachineError> {
        let bad = || MachineError::BadInvocation { alg: "aba".into(), inv: inv.to_string() };
        let proc = self.procs.get_mut(pid.wrapping_sub(1)).ok_or(MachineError::BadProcess { pid, n: self.n })?;
        proc.pc = match (&*inv.name, inv.args.as_slice()) {
            ("DWrite", [x]) => Pc::WriteSeq { x: x.clone() },
            ("DRead", []) => Pc::Read1 { changed: false },
            _ => return Err(bad()),
        };
        Ok(())
    }

    pub fn next_line(&self, pid: Pid) -> Option<Line> {
        let lin = self.variant == AbaVariant::Lin;
        Some(match self.procs[pid - 1].pc {
            Pc::Idle => return None,
            Pc::WriteSeq { .. } => Line::GetSeq,
            Pc::WriteX { .. } => Line::LinWrite,
            Pc::Read1 { .. } if lin => Line::LinFirstRead,
            Pc::Read1 { .. } => Line::RegRead1,
            Pc::ReadAnn { .. } if lin => Line::LinAnnRead,
            Pc::ReadAnn { .. } => Line::AnnRead,
            Pc::Announce { .. } if lin => Line::LinAnnounce,
            Pc::Announce { .. } => Line::Announce1,
            Pc::Read2 { .. } if lin => Line::LinSecondRead,
            Pc::Read2 { .. } => Line::RegRead2,
        })
    }

    /// Picks a sequence number outside the announced and recently used ones.
    fn choose_seq(&self, pid: Pid) -> i64 {
        let proc = &self.procs[pid - 1];
        let candidates: Vec<i64> = (0..=2 * self.n as i64 + 1)
            .filter(|s| !proc.announced.iter().any(|&(_, a)| a == *s))
            .filter(|s| !proc.used.contains(&Some(*s)))
            .collect();
        assert!(!candidates.is_empty(), "the sequence pool always has a free number");
        match self.seed {
            None => candidates[0],
            Some(seed) => {
                let h = fingerprint(&(seed, pid, &proc.announced, &proc.used, proc.cursor));
                candidates[(h % candidates.len() as u128) as usize]
            }
        }
    }

    pub fn step(&mut self, pid: Pid, cx: &mut Cx) -> Option<Value> {
        let i = pid - 1;
        let me = Value::Int(pid as i64);
        let pc = std::mem::replace(&mut self.procs[i].pc, Pc::Idle);
        let lin = self.variant == AbaVariant::Lin;
        let (next, resp) = match pc {
            Pc::Idle => return None,
            Pc::WriteSeq { x } => {
                let c = self.procs[i].cursor;
                let got = cx.read(pid, self.a_base + c as ObjId, Line::GetSeq, &self.a[c]);
                let proc = &mut self.procs[i];
                proc.announced.retain(|&(k, _)| k != c);
                if let Some([w, Value::Int(s)]) = got.as_tuple() {
                    if *w == me {
                        proc.announced.insert((c, *s));
                    }
                }
                proc.cursor = (c + 1) % self.n;
                let seq = self.choose_seq(pid);
                let proc = &mut self.procs[i];
                proc.used.push_back(Some(seq));
                proc.used.pop_front();
                (Pc::WriteX { x, seq }, None)
            }
            Pc::WriteX { x, seq } => {
                let content = Value::Tuple(vec![x, me, Value::Int(seq)]);
                cx.write(pid, self.x_id, Line::LinWrite, &mut self.x, content);
                (Pc::Idle, Some(Value::Unit))
            }
            Pc::Read1 { changed } => {
                let line = if lin { Line::LinFirstRead } else { Line::RegRead1 };
                let first = cx.read(pid, self.x_id, line, &self.x);
                (Pc::ReadAnn { first, changed }, None)
            }
            Pc::ReadAnn { first, changed } => {
                let line = if lin { Line::LinAnnRead } else { Line::AnnRead };
                let prev = cx.read(pid, self.a_base + i as ObjId, line, &self.a[i]);
                (Pc::Announce { first, prev, changed }, None)
            }
            Pc::Announce { first, prev, changed } => {
                let line = if lin { Line::LinAnnounce } else { Line::Announce1 };
                let (_, seen) = parts(&first);
                cx.write(pid, self.a_base + i as ObjId, line, &mut self.a[i], seen);
                (Pc::Read2 { first, prev, changed }, None)
            }
            Pc::Read2 { first, prev, changed } => {
                let line = if lin { Line::LinSecondRead } else { Line::RegRead2 };
                let second = cx.read(pid, self.x_id, line, &self.x);
                let (x, seen) = parts(&first);
                let same_tag = seen == prev;
                let quiet = first == second;
                if lin {
                    let proc = &mut self.procs[i];
                    let flag = if same_tag { proc.flag } else { true };
                    proc.flag = !quiet;
                    (Pc::Idle, Some(Value::Tuple(vec![x, Value::Bool(flag)])))
                } else {
                    let changed = changed || !same_tag || !quiet;
                    if same_tag && quiet {
                        let (x2, _) = parts(&second);
                        (Pc::Idle, Some(Value::Tuple(vec![x2, Value::Bool(changed)])))
                    } else {
                        (Pc::Read1 { changed }, None)
                    }
                }
            }
        };
        self.procs[i].pc = next;
        resp
    }
}
