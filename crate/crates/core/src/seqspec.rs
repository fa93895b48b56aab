//! Sequential type specifications as deterministic automata.
//!
//! A [`TypeSpec`] supplies an initial state and a total transition function
//! `(state, process, invocation) -> (state', response)`. States are
//! [`Value`]s in canonical form, so two histories are equivalent exactly when
//! they reach equal states. The built-in types are the snapshot object, the
//! ABA-detecting register, the (bounded or unbounded) max-register, the
//! counter and the plain read/write register.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::value::{Invocation, OpId, Pid, Value};

/// Errors raised by sequential specifications.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SpecError {
    #[error("type {spec} has no invocation `{inv}`")]
    UnknownInvocation { spec: String, inv: String },
    #[error("invalid argument for `{inv}` on {spec}: {reason}")]
    BadArgument { spec: String, inv: String, reason: String },
    #[error("process {pid} is out of range for {spec}")]
    BadProcess { spec: String, pid: Pid },
    #[error("state {state} is not a state of {spec}")]
    BadState { spec: String, state: String },
    #[error("unknown type identifier `{0}`")]
    UnknownSpec(String),
}

/// A sequential type given as a deterministic automaton.
pub trait TypeSpec: fmt::Debug + Send + Sync {
    /// Identifier in the `kind[:param]` syntax accepted by [`spec_from_id`].
    fn id(&self) -> String;
    /// The initial state.
    fn initial(&self) -> Value;
    /// The transition function.
    fn apply(&self, state: &Value, pid: Pid, inv: &Invocation) -> Result<(Value, Value), SpecError>;
    /// Invocation descriptions available to `pid` over the default finite domain.
    fn invocations(&self, pid: Pid) -> Vec<Invocation>;
    /// Number of processes used when continuations must be enumerated.
    fn processes(&self) -> usize {
        2
    }
    /// Whether reached states are canonical, so equivalence is decided by
    /// comparing them.
    fn exact_states(&self) -> bool {
        true
    }
}

/// Shared handle to a specification.
pub type SpecRef = Arc<dyn TypeSpec>;

/// Single entry point mirroring the transition function.
pub fn apply(spec: &dyn TypeSpec, state: &Value, pid: Pid, inv: &Invocation) -> Result<(Value, Value), SpecError> {
    spec.apply(state, pid, inv)
}

fn unknown(spec: &dyn TypeSpec, inv: &Invocation) -> SpecError {
    SpecError::UnknownInvocation { spec: spec.id(), inv: inv.to_string() }
}

fn bad_arg(spec: &dyn TypeSpec, inv: &Invocation, reason: &str) -> SpecError {
    SpecError::BadArgument { spec: spec.id(), inv: inv.to_string(), reason: reason.to_string() }
}

fn single_arg<'a>(spec: &dyn TypeSpec, inv: &'a Invocation) -> Result<&'a Value, SpecError> {
    match inv.args.as_slice() {
        [v] => Ok(v),
        _ => Err(bad_arg(spec, inv, "expected exactly one argument")),
    }
}

fn no_args(spec: &dyn TypeSpec, inv: &Invocation) -> Result<(), SpecError> {
    if inv.args.is_empty() {
        Ok(())
    } else {
        Err(bad_arg(spec, inv, "expected no arguments"))
    }
}

/// The default finite data domain `{0, …, 7}` (with `⊥` as initial value).
pub fn default_domain() -> Vec<Value> {
    (0..8).map(Value::Int).collect()
}

/// Snapshot object with `n` single-writer components, all initially `⊥`.
///
/// `update(x)` by process `p` sets component `p`; `⊥` may never be written
/// back. `scan()` returns the whole vector.
#[derive(Debug, Clone)]
pub struct SnapshotSpec {
    pub n: usize,
    pub domain: Vec<Value>,
}

impl SnapshotSpec {
    pub fn new(n: usize) -> Self {
        SnapshotSpec { n, domain: default_domain() }
    }
}

impl TypeSpec for SnapshotSpec {
    fn id(&self) -> String {
        format!("snapshot:{}", self.n)
    }

    fn initial(&self) -> Value {
        Value::filled(self.n, Value::Bot)
    }

    fn apply(&self, state: &Value, pid: Pid, inv: &Invocation) -> Result<(Value, Value), SpecError> {
        let cells = state
            .as_vector()
            .filter(|c| c.len() == self.n)
            .ok_or_else(|| SpecError::BadState { spec: self.id(), state: state.to_string() })?;
        if pid == 0 || pid > self.n {
            return Err(SpecError::BadProcess { spec: self.id(), pid });
        }
        match &*inv.name {
            "update" => {
                let x = single_arg(self, inv)?;
                if x.is_bot() {
                    return Err(bad_arg(self, inv, "⊥ cannot be written to a component"));
                }
                let mut next = cells.to_vec();
                next[pid - 1] = x.clone();
                Ok((Value::Vector(next), Value::Unit))
            }
            "scan" => {
                no_args(self, inv)?;
                Ok((state.clone(), state.clone()))
            }
            _ => Err(unknown(self, inv)),
        }
    }

    fn invocations(&self, _pid: Pid) -> Vec<Invocation> {
        let mut out: Vec<Invocation> =
            self.domain.iter().map(|x| Invocation::unary("update", x.clone())).collect();
        out.push(Invocation::nullary("scan"));
        out
    }

    fn processes(&self) -> usize {
        self.n
    }
}

/// ABA-detecting register.
///
/// `DWrite(x)` stores `x`. `DRead()` by `q` returns `(x, a)` where `a` is
/// true iff some `DWrite` happened since `q`'s previous `DRead`, or since
/// initialization when `q` has not read before.
///
/// The state is `(value, written, readers)`: `written` records whether any
/// `DWrite` has happened, and `readers` is the sorted set of processes that
/// have read since the latest `DWrite`.
#[derive(Debug, Clone)]
pub struct AbaSpec {
    pub initial: Value,
    pub domain: Vec<Value>,
    pub n: usize,
}

impl AbaSpec {
    pub fn new() -> Self {
        AbaSpec { initial: Value::Bot, domain: default_domain(), n: 2 }
    }

    /// ABA-detecting register whose initial value is `initial` (used when the
    /// register stores whole snapshot vectors).
    pub fn with_initial(initial: Value) -> Self {
        AbaSpec { initial, domain: default_domain(), n: 2 }
    }
}

impl Default for AbaSpec {
    fn default() -> Self {
        Self::new()
    }
}

impl TypeSpec for AbaSpec {
    fn id(&self) -> String {
        "aba".to_string()
    }

    fn initial(&self) -> Value {
        Value::Tuple(vec![self.initial.clone(), Value::Bool(false), Value::Vector(vec![])])
    }

    fn apply(&self, state: &Value, pid: Pid, inv: &Invocation) -> Result<(Value, Value), SpecError> {
        let bad = || SpecError::BadState { spec: self.id(), state: state.to_string() };
        let (value, written, readers) = match state.as_tuple() {
            Some([v, Value::Bool(w), Value::Vector(r)]) => (v, *w, r),
            _ => return Err(bad()),
        };
        match &*inv.name {
            "DWrite" => {
                let x = single_arg(self, inv)?;
                Ok((Value::Tuple(vec![x.clone(), Value::Bool(true), Value::Vector(vec![])]), Value::Unit))
            }
            "DRead" => {
                no_args(self, inv)?;
                let me = Value::Int(pid as i64);
                let flag = written && !readers.contains(&me);
                let mut next_readers = readers.clone();
                if written && flag {
                    next_readers.push(me);
                    next_readers.sort();
                }
                let next = Value::Tuple(vec![value.clone(), Value::Bool(written), Value::Vector(next_readers)]);
                Ok((next, Value::Tuple(vec![value.clone(), Value::Bool(flag)])))
            }
            _ => Err(unknown(self, inv)),
        }
    }

    fn invocations(&self, _pid: Pid) -> Vec<Invocation> {
        let mut out: Vec<Invocation> =
            self.domain.iter().map(|x| Invocation::unary("DWrite", x.clone())).collect();
        out.push(Invocation::nullary("DRead"));
        out
    }

    fn processes(&self) -> usize {
        self.n
    }
}

/// Max-register over non-negative integers, optionally bounded by `B`.
/// Initially `0`; `maxWrite(x)` keeps the maximum; `maxRead()` returns it.
#[derive(Debug, Clone)]
pub struct MaxRegSpec {
    pub bound: Option<i64>,
}

impl MaxRegSpec {
    pub fn bounded(b: i64) -> Self {
        MaxRegSpec { bound: Some(b) }
    }

    pub fn unbounded() -> Self {
        MaxRegSpec { bound: None }
    }
}

impl TypeSpec for MaxRegSpec {
    fn id(&self) -> String {
        match self.bound {
            Some(b) => format!("maxreg:{b}"),
            None => "maxreg:unbounded".to_string(),
        }
    }

    fn initial(&self) -> Value {
        Value::Int(0)
    }

    fn apply(&self, state: &Value, _pid: Pid, inv: &Invocation) -> Result<(Value, Value), SpecError> {
        let cur = state.as_int().ok_or_else(|| SpecError::BadState { spec: self.id(), state: state.to_string() })?;
        match &*inv.name {
            "maxWrite" => {
                let x = single_arg(self, inv)?
                    .as_int()
                    .ok_or_else(|| bad_arg(self, inv, "expected an integer"))?;
                if x < 0 || self.bound.is_some_and(|b| x > b) {
                    return Err(bad_arg(self, inv, "value outside the register's range"));
                }
                Ok((Value::Int(cur.max(x)), Value::Unit))
            }
            "maxRead" => {
                no_args(self, inv)?;
                Ok((state.clone(), state.clone()))
            }
            _ => Err(unknown(self, inv)),
        }
    }

    fn invocations(&self, _pid: Pid) -> Vec<Invocation> {
        let top = self.bound.unwrap_or(7);
        let mut out: Vec<Invocation> = (0..=top).map(|x| Invocation::unary("maxWrite", Value::Int(x))).collect();
        out.push(Invocation::nullary("maxRead"));
        out
    }
}

/// Counter shared by `n` processes: `inc()` adds one, `read()` returns the
/// count.
#[derive(Debug, Clone)]
pub struct CounterSpec {
    pub n: usize,
}

impl TypeSpec for CounterSpec {
    fn id(&self) -> String {
        format!("counter:{}", self.n)
    }

    fn initial(&self) -> Value {
        Value::Int(0)
    }

    fn apply(&self, state: &Value, pid: Pid, inv: &Invocation) -> Result<(Value, Value), SpecError> {
        let cur = state.as_int().ok_or_else(|| SpecError::BadState { spec: self.id(), state: state.to_string() })?;
        if pid == 0 || pid > self.n {
            return Err(SpecError::BadProcess { spec: self.id(), pid });
        }
        match &*inv.name {
            "inc" => {
                no_args(self, inv)?;
                Ok((Value::Int(cur + 1), Value::Unit))
            }
            "read" => {
                no_args(self, inv)?;
                Ok((state.clone(), state.clone()))
            }
            _ => Err(unknown(self, inv)),
        }
    }

    fn invocations(&self, _pid: Pid) -> Vec<Invocation> {
        vec![Invocation::nullary("inc"), Invocation::nullary("read")]
    }

    fn processes(&self) -> usize {
        self.n
    }
}

/// Multi-reader multi-writer read/write register.
#[derive(Debug, Clone)]
pub struct RegisterSpec {
    pub initial: Value,
    pub domain: Vec<Value>,
}

impl RegisterSpec {
    pub fn new(initial: Value) -> Self {
        RegisterSpec { initial, domain: default_domain() }
    }
}

impl TypeSpec for RegisterSpec {
    fn id(&self) -> String {
        "register".to_string()
    }

    fn initial(&self) -> Value {
        self.initial.clone()
    }

    fn apply(&self, state: &Value, _pid: Pid, inv: &Invocation) -> Result<(Value, Value), SpecError> {
        match &*inv.name {
            "write" => Ok((single_arg(self, inv)?.clone(), Value::Unit)),
            "read" => {
                no_args(self, inv)?;
                Ok((state.clone(), state.clone()))
            }
            _ => Err(unknown(self, inv)),
        }
    }

    fn invocations(&self, _pid: Pid) -> Vec<Invocation> {
        let mut out: Vec<Invocation> =
            self.domain.iter().map(|x| Invocation::unary("write", x.clone())).collect();
        out.push(Invocation::nullary("read"));
        out
    }
}

/// A finite type given by an explicit transition table. Transitions do not
/// depend on the invoking process.
#[derive(Debug, Clone)]
pub struct TableSpec {
    pub name: String,
    pub initial: Value,
    pub invocations: Vec<Invocation>,
    pub table: BTreeMap<(Value, Invocation), (Value, Value)>,
}

impl TypeSpec for TableSpec {
    fn id(&self) -> String {
        self.name.clone()
    }

    fn initial(&self) -> Value {
        self.initial.clone()
    }

    fn apply(&self, state: &Value, _pid: Pid, inv: &Invocation) -> Result<(Value, Value), SpecError> {
        if !self.invocations.contains(inv) {
            return Err(unknown(self, inv));
        }
        self.table
            .get(&(state.clone(), inv.clone()))
            .cloned()
            .ok_or_else(|| SpecError::BadState { spec: self.id(), state: format!("{state} (no transition for {inv})") })
    }

    fn invocations(&self, _pid: Pid) -> Vec<Invocation> {
        self.invocations.clone()
    }
}

/// Builds a built-in specification from its identifier: `snapshot:<n>`,
/// `aba`, `maxreg:<B>`, `maxreg:unbounded`, `counter:<n>` or `register`.
pub fn spec_from_id(id: &str) -> Result<SpecRef, SpecError> {
    let (kind, param) = match id.split_once(':') {
        Some((k, p)) => (k, Some(p)),
        None => (id, None),
    };
    let count = |p: Option<&str>| -> Result<usize, SpecError> {
        p.and_then(|s| s.parse::<usize>().ok())
            .filter(|&n| n > 0)
            .ok_or_else(|| SpecError::UnknownSpec(id.to_string()))
    };
    match kind {
        "snapshot" => Ok(Arc::new(SnapshotSpec::new(count(param)?))),
        "aba" if param.is_none() => Ok(Arc::new(AbaSpec::new())),
        "maxreg" => match param {
            Some("unbounded") => Ok(Arc::new(MaxRegSpec::unbounded())),
            Some(b) => {
                let b = b.parse::<i64>().map_err(|_| SpecError::UnknownSpec(id.to_string()))?;
                Ok(Arc::new(MaxRegSpec::bounded(b)))
            }
            None => Err(SpecError::UnknownSpec(id.to_string())),
        },
        "counter" => Ok(Arc::new(CounterSpec { n: count(param)? })),
        "register" if param.is_none() => Ok(Arc::new(RegisterSpec::new(Value::Bot))),
        _ => Err(SpecError::UnknownSpec(id.to_string())),
    }
}

/// One completed operation of a sequential history.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SeqOp {
    pub id: OpId,
    pub pid: Pid,
    pub inv: Invocation,
    pub resp: Value,
}

impl fmt::Display for SeqOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}:{}->{}", self.pid, self.inv, self.resp)
    }
}

/// A sequential history: operations in order, each with its response.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SequentialHistory {
    pub ops: Vec<SeqOp>,
}

impl SequentialHistory {
    pub fn new(ops: Vec<SeqOp>) -> Self {
        SequentialHistory { ops }
    }

    /// Builds a history from `(pid, invocation, response)` triples, numbering
    /// operations from 1.
    pub fn from_triples(items: Vec<(Pid, Invocation, Value)>) -> Self {
        SequentialHistory {
            ops: items
                .into_iter()
                .enumerate()
                .map(|(i, (pid, inv, resp))| SeqOp { id: i as OpId + 1, pid, inv, resp })
                .collect(),
        }
    }

    /// Operation ids are unique.
    pub fn ids_unique(&self) -> bool {
        let ids: BTreeSet<OpId> = self.ops.iter().map(|o| o.id).collect();
        ids.len() == self.ops.len()
    }

    pub fn ids(&self) -> Vec<OpId> {
        self.ops.iter().map(|o| o.id).collect()
    }

    pub fn is_prefix_of(&self, other: &SequentialHistory) -> bool {
        self.ops.len() <= other.ops.len() && self.ops.iter().zip(&other.ops).all(|(a, b)| a == b)
    }
}

impl fmt::Display for SequentialHistory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, op) in self.ops.iter().enumerate() {
            if i > 0 {
                write!(f, " ; ")?;
            }
            write!(f, "{op}")?;
        }
        Ok(())
    }
}

/// Index of the first operation whose recorded response disagrees with the
/// specification (or that the specification rejects), if any.
pub fn first_violation(spec: &dyn TypeSpec, h: &SequentialHistory) -> Option<usize> {
    if !h.ids_unique() {
        return Some(0);
    }
    let mut state = spec.initial();
    for (i, op) in h.ops.iter().enumerate() {
        match spec.apply(&state, op.pid, &op.inv) {
            Ok((next, resp)) if resp == op.resp => state = next,
            _ => return Some(i),
        }
    }
    None
}

/// Whether the sequential history is in the type's sequential specification.
pub fn is_valid(spec: &dyn TypeSpec, h: &SequentialHistory) -> bool {
    first_violation(spec, h).is_none()
}

/// State reached by a valid history, or `None` if it is invalid.
pub fn final_state(spec: &dyn TypeSpec, h: &SequentialHistory) -> Option<Value> {
    let mut state = spec.initial();
    for op in &h.ops {
        let (next, resp) = spec.apply(&state, op.pid, &op.inv).ok()?;
        if resp != op.resp {
            return None;
        }
        state = next;
    }
    Some(state)
}

/// Equivalence of two valid histories: every continuation is valid after
/// one iff it is valid after the other.
///
/// For specifications with canonical states this compares reached states.
/// Otherwise every invocation sequence of length at most `depth` (over all
/// processes) is replayed from both states and the responses compared.
pub fn equivalent(spec: &dyn TypeSpec, h1: &SequentialHistory, h2: &SequentialHistory, depth: usize) -> bool {
    let (Some(s1), Some(s2)) = (final_state(spec, h1), final_state(spec, h2)) else {
        return false;
    };
    states_equivalent(spec, &s1, &s2, depth)
}

/// Equivalence of two states, exactly or up to continuations of length `depth`.
pub fn states_equivalent(spec: &dyn TypeSpec, s1: &Value, s2: &Value, depth: usize) -> bool {
    if spec.exact_states() {
        return s1 == s2;
    }
    continuations_agree(spec, s1, s2, depth)
}

fn continuations_agree(spec: &dyn TypeSpec, s1: &Value, s2: &Value, depth: usize) -> bool {
    if depth == 0 {
        return true;
    }
    for pid in 1..=spec.processes() {
        for inv in spec.invocations(pid) {
            let a = spec.apply(s1, pid, &inv);
            let b = spec.apply(s2, pid, &inv);
            match (a, b) {
                (Ok((n1, r1)), Ok((n2, r2))) => {
                    if r1 != r2 || !continuations_agree(spec, &n1, &n2, depth - 1) {
                        return false;
                    }
                }
                (Err(_), Err(_)) => {}
                _ => return false,
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inv(s: &str) -> Invocation {
        s.parse().unwrap()
    }

    fn int(v: i64) -> Value {
        Value::Int(v)
    }

    #[test]
    fn snapshot_update_from_initial_state() {
        let spec = SnapshotSpec::new(2);
        let (state, resp) = apply(&spec, &spec.initial(), 1, &inv("update(5)")).unwrap();
        assert_eq!(state, Value::Vector(vec![int(5), Value::Bot]));
        assert_eq!(resp, Value::Unit);
    }

    #[test]
    fn snapshot_rejects_writing_bottom_and_foreign_processes() {
        let spec = SnapshotSpec::new(2);
        assert!(spec.apply(&spec.initial(), 1, &inv("update(⊥)")).is_err());
        assert!(spec.apply(&spec.initial(), 3, &inv("scan()")).is_err());
    }

    #[test]
    fn aba_fresh_read_has_clear_flag() {
        let spec = AbaSpec::new();
        let (_, resp) = apply(&spec, &spec.initial(), 2, &inv("DRead()")).unwrap();
        assert_eq!(resp, Value::Tuple(vec![Value::Bot, Value::Bool(false)]));
    }

    #[test]
    fn aba_flag_reports_intervening_write_of_equal_value() {
        let spec = AbaSpec::new();
        let mut s = spec.initial();
        s = spec.apply(&s, 1, &inv("DWrite(7)")).unwrap().0;
        s = spec.apply(&s, 2, &inv("DRead()")).unwrap().0;
        s = spec.apply(&s, 1, &inv("DWrite(7)")).unwrap().0;
        let (_, resp) = spec.apply(&s, 2, &inv("DRead()")).unwrap();
        assert_eq!(resp, Value::Tuple(vec![int(7), Value::Bool(true)]));
    }

    #[test]
    fn aba_history_with_unjustified_flag_is_invalid() {
        let spec = AbaSpec::new();
        let t = |b| Value::Tuple(vec![int(3), Value::Bool(b)]);
        let h = SequentialHistory::from_triples(vec![
            (1, inv("DWrite(3)"), Value::Unit),
            (2, inv("DRead()"), t(true)),
            (2, inv("DRead()"), t(true)),
        ]);
        assert_eq!(first_violation(&spec, &h), Some(2));
        let h = SequentialHistory::from_triples(vec![
            (1, inv("DWrite(3)"), Value::Unit),
            (2, inv("DRead()"), t(false)),
            (2, inv("DRead()"), t(true)),
        ]);
        assert!(!is_valid(&spec, &h));
    }

    #[test]
    fn empty_history_is_valid() {
        assert!(is_valid(&CounterSpec { n: 2 }, &SequentialHistory::default()));
    }

    #[test]
    fn counter_single_increment_then_read() {
        let spec = CounterSpec { n: 2 };
        let h = SequentialHistory::from_triples(vec![(1, inv("inc()"), Value::Unit), (2, inv("read()"), int(1))]);
        assert!(is_valid(&spec, &h));
    }

    #[test]
    fn equivalence_examples() {
        let counter = CounterSpec { n: 2 };
        let a = SequentialHistory::from_triples(vec![(1, inv("inc()"), Value::Unit), (2, inv("inc()"), Value::Unit)]);
        let b = SequentialHistory::from_triples(vec![(2, inv("inc()"), Value::Unit), (1, inv("inc()"), Value::Unit)]);
        assert!(equivalent(&counter, &a, &a, 3));
        assert!(equivalent(&counter, &a, &b, 3));

        let maxreg = MaxRegSpec::bounded(7);
        let a = SequentialHistory::from_triples(vec![(1, inv("maxWrite(3)"), Value::Unit), (1, inv("maxWrite(5)"), Value::Unit)]);
        let b = SequentialHistory::from_triples(vec![(1, inv("maxWrite(5)"), Value::Unit)]);
        assert!(equivalent(&maxreg, &a, &b, 3));
    }

    #[test]
    fn spec_identifiers_parse() {
        for id in ["snapshot:3", "aba", "maxreg:4", "maxreg:unbounded", "counter:2", "register"] {
            assert_eq!(spec_from_id(id).unwrap().id(), id);
        }
        for bad in ["snapshot", "snapshot:0", "maxreg", "widget", "aba:2"] {
            assert!(spec_from_id(bad).is_err(), "{bad}");
        }
    }
}
