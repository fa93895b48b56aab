//! Transcripts, histories and their derived relations.
//!
//! A [`Transcript`] is a sequence of invocation and response events over
//! shared objects. Times are 1-based positions; a step that is absent has
//! time `∞`, represented as `None`. Events produced by the step machines may
//! carry a [`Line`] label naming the pseudocode line that issued them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::value::{Invocation, ObjId, OpId, ParseError, Pid, Value};

/// Object id of the implemented (top-level) object.
pub const TOP: ObjId = 0;

macro_rules! lines {
    ($($variant:ident => $text:literal),* $(,)?) => {
        /// Pseudocode line labels attached to shared accesses.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Line {
            $($variant),*
        }

        impl Line {
            pub const ALL: &'static [Line] = &[$(Line::$variant),*];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(Line::$variant => $text),*
                }
            }
        }
    };
}

lines! {
    GetSeq => "getseq",
    LinWrite => "linwritelin",
    LinFirstRead => "linfirstread",
    LinAnnRead => "linannread",
    LinAnnounce => "linannounce",
    LinSecondRead => "linsecondread",
    RegRead1 => "regread1",
    AnnRead => "annread",
    Announce1 => "announce1",
    RegRead2 => "regread2",
    MaxWriteReg => "maxreg:writetoreg",
    MaxReadWrite => "maxreg:readwrite",
    MaxReadNext => "maxreg:readnext",
    DcUpdate => "dc:update",
    DcCollect => "dc:collect",
    SUpdate => "Supdate",
    SluScan => "SLUscan",
    SluDWrite => "SLUDWrite",
    DRead1 => "DRead1",
    SlsScan => "SLSscan",
    DRead2 => "DRead2",
    SlsDWrite => "SLSDWrite",
    IncRead => "inc:read",
    IncWrite => "inc:write",
    ReadCell => "read:cell",
    Flip => "flip",
    GenScan => "scan",
    GenUpdate => "slupdate",
    Raise => "livelock:raise",
    Check => "livelock:check",
    Lower => "livelock:lower",
    Atomic => "atomic",
}

impl fmt::Display for Line {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Line {
    type Err = TranscriptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Line::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| TranscriptError::Syntax(format!("unknown line label `{s}`")))
    }
}

/// Errors raised by transcript operations.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TranscriptError {
    #[error("unknown operation id {0}")]
    UnknownOp(OpId),
    #[error("malformed transcript line: {0}")]
    Syntax(String),
    #[error(transparent)]
    Value(#[from] ParseError),
}

/// Invocation or response payload of an event.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Payload {
    Inv(Invocation),
    Rsp(Value),
}

/// One step of a transcript.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Event {
    pub obj: ObjId,
    pub op: OpId,
    pub pid: Pid,
    pub payload: Payload,
    pub line: Option<Line>,
}

impl Event {
    pub fn inv(obj: ObjId, op: OpId, pid: Pid, inv: Invocation) -> Self {
        Event { obj, op, pid, payload: Payload::Inv(inv), line: None }
    }

    pub fn rsp(obj: ObjId, op: OpId, pid: Pid, v: Value) -> Self {
        Event { obj, op, pid, payload: Payload::Rsp(v), line: None }
    }

    pub fn with_line(mut self, line: Option<Line>) -> Self {
        self.line = line;
        self
    }

    pub fn is_inv(&self) -> bool {
        matches!(self.payload, Payload::Inv(_))
    }

    pub fn invocation(&self) -> Option<&Invocation> {
        match &self.payload {
            Payload::Inv(i) => Some(i),
            Payload::Rsp(_) => None,
        }
    }

    pub fn response(&self) -> Option<&Value> {
        match &self.payload {
            Payload::Rsp(v) => Some(v),
            Payload::Inv(_) => None,
        }
    }

    fn fmt_at(&self, f: &mut fmt::Formatter<'_>, t: usize) -> fmt::Result {
        let (kind, payload) = match &self.payload {
            Payload::Inv(i) => ("inv", i.to_string()),
            Payload::Rsp(v) => ("rsp", v.to_string()),
        };
        write!(f, "t={t} {kind} obj={} op={} p={} {payload}", self.obj, self.op, self.pid)?;
        if let Some(l) = self.line {
            write!(f, " @{l}")?;
        }
        Ok(())
    }
}

/// Which events a projection keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selector {
    Object(ObjId),
    Process(Pid),
}

/// A finite sequence of events over `n` processes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Transcript {
    pub n: usize,
    pub events: Vec<Event>,
}

impl Transcript {
    pub fn new(n: usize) -> Self {
        Transcript { n, events: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn push(&mut self, e: Event) {
        self.events.push(e);
    }

    /// Event at 1-based time `t`.
    pub fn at(&self, t: usize) -> Option<&Event> {
        t.checked_sub(1).and_then(|i| self.events.get(i))
    }

    /// The first `k` steps.
    pub fn prefix(&self, k: usize) -> Transcript {
        Transcript { n: self.n, events: self.events[..k.min(self.events.len())].to_vec() }
    }

    pub fn is_prefix_of(&self, other: &Transcript) -> bool {
        self.events.len() <= other.events.len() && self.events[..] == other.events[..self.events.len()]
    }

    /// Well-formedness: per process, invocations and responses nest
    /// properly (each response closes the innermost open invocation of its
    /// process), and operation ids are unique.
    pub fn well_formed(&self) -> bool {
        let mut stacks: BTreeMap<Pid, Vec<(OpId, ObjId)>> = BTreeMap::new();
        let mut seen = BTreeSet::new();
        for e in &self.events {
            if e.pid == 0 || (self.n > 0 && e.pid > self.n) {
                return false;
            }
            let stack = stacks.entry(e.pid).or_default();
            match e.payload {
                Payload::Inv(_) => {
                    if !seen.insert(e.op) {
                        return false;
                    }
                    stack.push((e.op, e.obj));
                }
                Payload::Rsp(_) => match stack.pop() {
                    Some((op, obj)) if op == e.op && obj == e.obj => {}
                    _ => return false,
                },
            }
        }
        true
    }

    /// Subsequence of steps on one object or by one process.
    pub fn project(&self, by: Selector) -> Transcript {
        let keep = |e: &Event| match by {
            Selector::Object(o) => e.obj == o,
            Selector::Process(p) => e.pid == p,
        };
        Transcript { n: self.n, events: self.events.iter().filter(|e| keep(e)).cloned().collect() }
    }

    /// The interpreted history: every step that lies strictly inside an
    /// operation of the same process is removed.
    pub fn interpreted(&self) -> Transcript {
        let mut depth: BTreeMap<Pid, usize> = BTreeMap::new();
        let mut out = Vec::new();
        for e in &self.events {
            let d = depth.entry(e.pid).or_insert(0);
            match e.payload {
                Payload::Inv(_) => {
                    if *d == 0 {
                        out.push(e.clone());
                    }
                    *d += 1;
                }
                Payload::Rsp(_) => {
                    *d = d.saturating_sub(1);
                    if *d == 0 {
                        out.push(e.clone());
                    }
                }
            }
        }
        Transcript { n: self.n, events: out }
    }

    /// The interpreted history as a [`History`].
    pub fn interpreted_history(&self) -> History {
        History::from_transcript(&self.interpreted())
    }

    /// Whether every operation is atomic in its process's projection.
    pub fn is_history(&self) -> bool {
        let mut open: BTreeMap<Pid, OpId> = BTreeMap::new();
        for e in &self.events {
            match e.payload {
                Payload::Inv(_) => {
                    if open.insert(e.pid, e.op).is_some() {
                        return false;
                    }
                }
                Payload::Rsp(_) => {
                    if open.remove(&e.pid) != Some(e.op) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// 1-based time of the invocation of `op`.
    pub fn inv_time(&self, op: OpId) -> Option<usize> {
        self.events.iter().position(|e| e.op == op && e.is_inv()).map(|i| i + 1)
    }

    /// 1-based time of the response of `op`, or `None` (`∞`) if pending.
    pub fn rsp_time(&self, op: OpId) -> Option<usize> {
        self.events.iter().position(|e| e.op == op && !e.is_inv()).map(|i| i + 1)
    }

    /// Time of `op^line`: the response step of the final access issued on
    /// `line` by the process of `op` while `op` is open. `None` means `∞`.
    pub fn line_time(&self, op: OpId, line: Line) -> Option<usize> {
        self.line_accesses(op, line).last().map(|&(_, rsp)| rsp)
    }

    /// All accesses on `line` made during `op`, as `(inv_time, rsp_time)`
    /// pairs of the accessed sub-operation, in order. Accesses whose response
    /// is missing are omitted.
    pub fn line_accesses(&self, op: OpId, line: Line) -> Vec<(usize, usize)> {
        let Some(start) = self.inv_time(op) else { return Vec::new() };
        let pid = self.events[start - 1].pid;
        let end = self.rsp_time(op).unwrap_or(self.events.len() + 1);
        let mut out = Vec::new();
        for t in start + 1..end {
            let e = &self.events[t - 1];
            if e.pid == pid && e.line == Some(line) && e.is_inv() {
                if let Some(r) = (t + 1..end).find(|&r| self.events[r - 1].op == e.op) {
                    out.push((t, r));
                }
            }
        }
        out
    }

    /// Parses the line-oriented text format produced by `Display`.
    pub fn parse(n: usize, text: &str) -> Result<Transcript, TranscriptError> {
        let mut t = Transcript::new(n);
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            t.push(parse_event(line)?);
        }
        Ok(t)
    }
}

fn field<'a>(tok: Option<&'a str>, key: &str, line: &str) -> Result<&'a str, TranscriptError> {
    tok.and_then(|t| t.strip_prefix(key))
        .ok_or_else(|| TranscriptError::Syntax(format!("expected `{key}` in `{line}`")))
}

fn number<T: FromStr>(s: &str, line: &str) -> Result<T, TranscriptError> {
    s.parse().map_err(|_| TranscriptError::Syntax(format!("bad number `{s}` in `{line}`")))
}

fn parse_event(line: &str) -> Result<Event, TranscriptError> {
    let mut toks = line.split_whitespace();
    field(toks.next(), "t=", line)?;
    let kind = toks.next().ok_or_else(|| TranscriptError::Syntax(line.to_string()))?;
    let obj = number(field(toks.next(), "obj=", line)?, line)?;
    let op = number(field(toks.next(), "op=", line)?, line)?;
    let pid = number(field(toks.next(), "p=", line)?, line)?;
    let payload_text = toks.next().ok_or_else(|| TranscriptError::Syntax(line.to_string()))?;
    let payload = match kind {
        "inv" => Payload::Inv(payload_text.parse()?),
        "rsp" => Payload::Rsp(payload_text.parse()?),
        _ => return Err(TranscriptError::Syntax(format!("expected inv or rsp in `{line}`"))),
    };
    let line_label = match toks.next() {
        Some(l) => Some(
            l.strip_prefix('@')
                .ok_or_else(|| TranscriptError::Syntax(format!("expected @label in `{line}`")))?
                .parse()?,
        ),
        None => None,
    };
    if toks.next().is_some() {
        return Err(TranscriptError::Syntax(format!("trailing tokens in `{line}`")));
    }
    Ok(Event { obj, op, pid, payload, line: line_label })
}

impl fmt::Display for Transcript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.events.iter().enumerate() {
            e.fmt_at(f, i + 1)?;
            writeln!(f)?;
        }
        Ok(())
    }
}

/// One operation of a history.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HOp {
    pub id: OpId,
    pub obj: ObjId,
    pub pid: Pid,
    pub inv: Invocation,
    pub resp: Option<Value>,
    pub inv_time: usize,
    pub rsp_time: Option<usize>,
}

impl HOp {
    pub fn is_pending(&self) -> bool {
        self.resp.is_none()
    }
}

/// A history: a transcript whose operations are atomic per process.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct History {
    pub n: usize,
    ops: Vec<HOp>,
    len: usize,
}

impl History {
    /// Reads the operations of a transcript (normally an interpreted
    /// history). Responses without invocations are ignored.
    pub fn from_transcript(t: &Transcript) -> History {
        let mut ops: Vec<HOp> = Vec::new();
        let mut index: BTreeMap<OpId, usize> = BTreeMap::new();
        for (i, e) in t.events.iter().enumerate() {
            match &e.payload {
                Payload::Inv(inv) => {
                    index.insert(e.op, ops.len());
                    ops.push(HOp {
                        id: e.op,
                        obj: e.obj,
                        pid: e.pid,
                        inv: inv.clone(),
                        resp: None,
                        inv_time: i + 1,
                        rsp_time: None,
                    });
                }
                Payload::Rsp(v) => {
                    if let Some(&k) = index.get(&e.op) {
                        ops[k].resp = Some(v.clone());
                        ops[k].rsp_time = Some(i + 1);
                    }
                }
            }
        }
        History { n: t.n, ops, len: t.events.len() }
    }

    /// Builds a history directly from operations; times must be consistent.
    pub fn from_ops(n: usize, ops: Vec<HOp>) -> History {
        let len = ops.iter().map(|o| o.rsp_time.unwrap_or(o.inv_time)).max().unwrap_or(0);
        History { n, ops, len }
    }

    /// Operations in invocation order.
    pub fn ops(&self) -> &[HOp] {
        &self.ops
    }

    pub fn op(&self, id: OpId) -> Result<&HOp, TranscriptError> {
        self.ops.iter().find(|o| o.id == id).ok_or(TranscriptError::UnknownOp(id))
    }

    pub fn pending(&self) -> impl Iterator<Item = &HOp> {
        self.ops.iter().filter(|o| o.is_pending())
    }

    pub fn is_complete(&self) -> bool {
        self.ops.iter().all(|o| !o.is_pending())
    }

    /// `a` happens before `b`: the response of `a` precedes the invocation of `b`.
    pub fn happens_before(&self, a: OpId, b: OpId) -> Result<bool, TranscriptError> {
        let a = self.op(a)?;
        let b = self.op(b)?;
        Ok(a.rsp_time.is_some_and(|r| r < b.inv_time))
    }

    /// Back to event form.
    pub fn to_transcript(&self) -> Transcript {
        let mut slots: Vec<(usize, Event)> = Vec::new();
        for o in &self.ops {
            slots.push((o.inv_time, Event::inv(o.obj, o.id, o.pid, o.inv.clone())));
            if let (Some(t), Some(v)) = (o.rsp_time, &o.resp) {
                slots.push((t, Event::rsp(o.obj, o.id, o.pid, v.clone())));
            }
        }
        slots.sort_by_key(|(t, _)| *t);
        Transcript { n: self.n, events: slots.into_iter().map(|(_, e)| e).collect() }
    }

    /// Every completion of the history: each pending operation is either
    /// dropped or given one of the responses proposed by `responses`.
    /// Appended responses follow the existing events in invocation order.
    pub fn completions<'a, F>(&'a self, responses: F) -> impl Iterator<Item = History> + 'a
    where
        F: Fn(&HOp) -> Vec<Value> + 'a,
    {
        let pending: Vec<usize> = (0..self.ops.len()).filter(|&i| self.ops[i].is_pending()).collect();
        let choices: Vec<Vec<Option<Value>>> = pending
            .iter()
            .map(|&i| std::iter::once(None).chain(responses(&self.ops[i]).into_iter().map(Some)).collect())
            .collect();
        let mut counter = vec![0usize; pending.len()];
        let mut done = false;
        std::iter::from_fn(move || {
            if done {
                return None;
            }
            let mut ops = Vec::new();
            let mut next_time = self.len + 1;
            let mut chosen: BTreeMap<usize, Option<Value>> = BTreeMap::new();
            for (k, &i) in pending.iter().enumerate() {
                chosen.insert(i, choices[k][counter[k]].clone());
            }
            for (i, o) in self.ops.iter().enumerate() {
                match chosen.get(&i) {
                    None => ops.push(o.clone()),
                    Some(None) => {}
                    Some(Some(v)) => {
                        let mut c = o.clone();
                        c.resp = Some(v.clone());
                        c.rsp_time = Some(next_time);
                        next_time += 1;
                        ops.push(c);
                    }
                }
            }
            let h = History { n: self.n, len: next_time - 1, ops };
            // Advance the odometer.
            let mut k = 0;
            loop {
                if k == counter.len() {
                    done = true;
                    break;
                }
                counter[k] += 1;
                if counter[k] < choices[k].len() {
                    break;
                }
                counter[k] = 0;
                k += 1;
            }
            Some(h)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inv(s: &str) -> Invocation {
        s.parse().unwrap()
    }

    /// Two interleaved top-level operations, each with one nested access.
    fn sample() -> Transcript {
        let mut t = Transcript::new(2);
        t.push(Event::inv(TOP, 1, 1, inv("DWrite(3)")));
        t.push(Event::inv(TOP, 2, 2, inv("DRead()")));
        t.push(Event::inv(2, 3, 2, inv("read()")).with_line(Some(Line::RegRead1)));
        t.push(Event::rsp(2, 3, 2, Value::Bot));
        t.push(Event::inv(2, 4, 1, inv("write(3)")).with_line(Some(Line::LinWrite)));
        t.push(Event::rsp(2, 4, 1, Value::Unit));
        t.push(Event::rsp(TOP, 1, 1, Value::Unit));
        t
    }

    #[test]
    fn empty_projection_is_empty() {
        let t = Transcript::new(2);
        assert!(t.project(Selector::Process(1)).is_empty());
        assert!(t.project(Selector::Object(0)).is_empty());
    }

    #[test]
    fn single_process_projection_is_identity() {
        let t = sample().project(Selector::Process(1));
        assert_eq!(t.project(Selector::Process(1)), t);
    }

    #[test]
    fn object_projection_matches_filter() {
        let t = sample();
        let expected: Vec<Event> = t.events.iter().filter(|e| e.obj == 2).cloned().collect();
        assert_eq!(t.project(Selector::Object(2)).events, expected);
    }

    #[test]
    fn interpreted_history_drops_internal_steps_of_pending_ops() {
        let t = sample();
        let g = t.interpreted();
        assert_eq!(g.events.len(), 3);
        assert!(g.events.iter().all(|e| e.obj == TOP));
        let h = g.clone();
        assert_eq!(h.interpreted(), g);
        let hist = t.interpreted_history();
        assert_eq!(hist.ops().len(), 2);
        assert!(hist.op(2).unwrap().is_pending());
    }

    #[test]
    fn well_formedness() {
        assert!(sample().well_formed());
        let mut bad = Transcript::new(1);
        bad.push(Event::inv(TOP, 1, 1, inv("DRead()")));
        bad.push(Event::inv(2, 2, 1, inv("read()")));
        bad.push(Event::rsp(TOP, 1, 1, Value::Unit));
        assert!(!bad.well_formed());
    }

    #[test]
    fn happens_before_relations() {
        let mut t = Transcript::new(2);
        for (op, pid) in [(1, 1), (2, 2), (3, 1)] {
            t.push(Event::inv(TOP, op, pid, inv("inc()")));
            t.push(Event::rsp(TOP, op, pid, Value::Unit));
        }
        let h = t.interpreted_history();
        assert!(h.happens_before(1, 2).unwrap());
        assert!(h.happens_before(2, 3).unwrap());
        assert!(h.happens_before(1, 3).unwrap());
        assert!(!h.happens_before(3, 1).unwrap());
        assert!(h.happens_before(9, 1).is_err());

        let g = sample().interpreted_history();
        assert!(!g.happens_before(1, 2).unwrap());
        assert!(!g.happens_before(2, 1).unwrap());
    }

    #[test]
    fn completion_counts() {
        let mut t = Transcript::new(3);
        t.push(Event::inv(TOP, 1, 1, inv("inc()")));
        t.push(Event::rsp(TOP, 1, 1, Value::Unit));
        let h = t.interpreted_history();
        assert_eq!(h.completions(|_| vec![Value::Unit]).count(), 1);
        for k in 1..=3 {
            let mut t = Transcript::new(3);
            for p in 1..=k {
                t.push(Event::inv(TOP, p as OpId, p, inv("inc()")));
            }
            let h = t.interpreted_history();
            let all: Vec<History> = h.completions(|_| vec![Value::Unit]).collect();
            assert_eq!(all.len(), 1 << k);
            assert!(all.iter().all(|c| c.is_complete()));
        }
    }

    #[test]
    fn line_times_use_response_steps() {
        let t = sample();
        assert_eq!(t.line_time(1, Line::LinWrite), Some(6));
        assert_eq!(t.line_time(2, Line::RegRead1), Some(4));
        assert_eq!(t.line_time(2, Line::RegRead2), None);
    }

    #[test]
    fn text_round_trip() {
        let t = sample();
        let text = t.to_string();
        assert!(text.starts_with("t=1 inv obj=0 op=1 p=1 DWrite(3)\n"));
        assert!(text.contains("@regread1"));
        assert_eq!(Transcript::parse(2, &text).unwrap(), t);
        assert!(Transcript::parse(2, "t=1 foo obj=0 op=1 p=1 x()").is_err());
    }
}
