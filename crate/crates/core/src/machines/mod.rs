//! Algorithms as deterministic step machines.
//!
//! Every algorithm is an [`Obj`]: shared registers and sub-objects plus one
//! frame per process holding its program counter and locals. A call to
//! [`Machine::step`] advances one process by exactly one shared-memory access
//! (purely local lines run in the same step as the access before them), so
//! a scheduler fully controls the interleaving and every run yields a
//! [`Transcript`].
//!
//! Object ids: `0` is the implemented object, `1` is the coin used by
//! `flip()` program entries, and sub-objects and registers are numbered from
//! `2` in construction order.

pub mod aba;
pub mod atomic;
pub mod counter;
pub mod livelock;
pub mod maxreg;
pub mod scenario;
pub mod snapshot;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::genconstruct::machine::GenImpl;
use crate::genconstruct::SimpleType;
use crate::seqspec::{AbaSpec, CounterSpec, MaxRegSpec, SnapshotSpec, SpecRef, TableSpec};
use crate::transcript::{Event, Line, Transcript, TOP};
use crate::value::{fingerprint, Ignored, Invocation, ObjId, OpId, Pid, Value};

pub use aba::{AbaImpl, AbaVariant};
pub use atomic::AtomicObj;
pub use counter::CounterImpl;
pub use livelock::LivelockImpl;
pub use maxreg::MaxRegImpl;
pub use scenario::{target_from_name, Scenario, Target};
pub use snapshot::{DcSnapImpl, SlSnapImpl, SlVariant};

/// Object id of the coin flipped by `flip()` program entries.
pub const COIN: ObjId = 1;

/// Errors raised while loading or stepping machines.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum MachineError {
    #[error("process {0} has no pending operation and an empty program")]
    Idle(Pid),
    #[error("process {pid} is out of range 1..={n}")]
    BadProcess { pid: Pid, n: usize },
    #[error("invocation `{inv}` is not supported by {alg}")]
    BadInvocation { alg: String, inv: String },
    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),
    #[error("{0}")]
    Config(String),
}

/// The algorithms available as step machines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AlgorithmId {
    /// Linearizable ABA-detecting register with the delegated flag `b`.
    LinAba,
    /// ABA-detecting register whose `DRead` loops until it sees quiescence.
    SlAba,
    /// Bounded max-register over `R[0..B+1]`.
    BoundedMaxReg,
    /// The same max-register code over an unbounded array.
    UnboundedMaxReg,
    /// Lock-free snapshot by clean double collects.
    DcSnapshot,
    /// Snapshot from a linearizable snapshot `S` and an ABA-detecting register `R`.
    SlSnapshot,
    /// The same with per-component sequence numbers.
    SlSnapshotSeq,
    /// The same shape with a plain register in place of the ABA-detecting one.
    NoAbaSnapshot,
    /// Counter from single-writer registers.
    LinCounter,
    /// Atomic counter used as the reference object for the adversary.
    AtomicCounter,
    /// Two-process livelock used to exercise the lock-freedom checker.
    Livelock,
}

impl AlgorithmId {
    pub const ALL: &'static [AlgorithmId] = &[
        AlgorithmId::LinAba,
        AlgorithmId::SlAba,
        AlgorithmId::BoundedMaxReg,
        AlgorithmId::UnboundedMaxReg,
        AlgorithmId::DcSnapshot,
        AlgorithmId::SlSnapshot,
        AlgorithmId::SlSnapshotSeq,
        AlgorithmId::NoAbaSnapshot,
        AlgorithmId::LinCounter,
        AlgorithmId::AtomicCounter,
        AlgorithmId::Livelock,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmId::LinAba => "linaba",
            AlgorithmId::SlAba => "slaba",
            AlgorithmId::BoundedMaxReg => "maxreg",
            AlgorithmId::UnboundedMaxReg => "maxreg-unbounded",
            AlgorithmId::DcSnapshot => "dcsnapshot",
            AlgorithmId::SlSnapshot => "slsnapshot",
            AlgorithmId::SlSnapshotSeq => "slsnapshot-seq",
            AlgorithmId::NoAbaSnapshot => "noaba-snapshot",
            AlgorithmId::LinCounter => "lincounter",
            AlgorithmId::AtomicCounter => "atomic-counter",
            AlgorithmId::Livelock => "livelock",
        }
    }

    /// Sequential type the algorithm implements.
    pub fn spec(self, n: usize, opts: &LoadOptions) -> SpecRef {
        match self {
            AlgorithmId::LinAba | AlgorithmId::SlAba => Arc::new(AbaSpec { n, ..AbaSpec::new() }),
            AlgorithmId::BoundedMaxReg => Arc::new(MaxRegSpec::bounded(opts.maxreg_bound)),
            AlgorithmId::UnboundedMaxReg => Arc::new(MaxRegSpec::unbounded()),
            AlgorithmId::DcSnapshot
            | AlgorithmId::SlSnapshot
            | AlgorithmId::SlSnapshotSeq
            | AlgorithmId::NoAbaSnapshot => Arc::new(SnapshotSpec::new(n)),
            AlgorithmId::LinCounter | AlgorithmId::AtomicCounter => Arc::new(CounterSpec { n }),
            AlgorithmId::Livelock => Arc::new(livelock_spec()),
        }
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlgorithmId {
    type Err = MachineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AlgorithmId::ALL
            .iter()
            .copied()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| MachineError::UnknownAlgorithm(s.to_string()))
    }
}

fn livelock_spec() -> TableSpec {
    let run = Invocation::nullary("run");
    TableSpec {
        name: "livelock".into(),
        initial: Value::Unit,
        invocations: vec![run.clone()],
        table: [((Value::Unit, run), (Value::Unit, Value::Unit))].into_iter().collect(),
    }
}

/// How a sub-object is realized inside a composed algorithm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum SubMode {
    /// A single-step atomic object following its sequential specification.
    #[default]
    Atomic,
    /// A nested step machine (double-collect snapshot, looping ABA register,
    /// or the strongly linearizable snapshot for the construction's root).
    Nested,
}

/// Construction options.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoadOptions {
    /// `B` for the bounded max-register.
    pub maxreg_bound: i64,
    /// Realization of the snapshot `S` in the composed snapshots.
    pub snapshot_mode: SubMode,
    /// Realization of the register `R` in the composed snapshots.
    pub register_mode: SubMode,
    /// Realization of the construction's `root`.
    pub root_mode: SubMode,
    /// When set, sequence numbers are picked by a seeded hash of the writer's
    /// state instead of taking the smallest admissible one.
    pub getseq_seed: Option<u64>,
    /// Seed of the coin.
    pub coin_seed: u64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            maxreg_bound: 3,
            snapshot_mode: SubMode::Atomic,
            register_mode: SubMode::Atomic,
            root_mode: SubMode::Atomic,
            getseq_seed: None,
            coin_seed: 0,
        }
    }
}

/// Per-class tallies of shared accesses and sub-object invocations.
pub type StepReport = BTreeMap<String, u64>;

/// Execution context of one step: event sink, op-id allocator and counters.
pub struct Cx<'a> {
    events: Option<&'a mut Vec<Event>>,
    next_op: &'a mut OpId,
    report: Option<&'a mut StepReport>,
    top: &'a str,
    /// Shared accesses performed so far in this step.
    pub accesses: u32,
}

impl<'a> Cx<'a> {
    fn fresh_op(&mut self) -> OpId {
        *self.next_op += 1;
        *self.next_op
    }

    fn emit(&mut self, e: Event) {
        if let Some(ev) = self.events.as_deref_mut() {
            ev.push(e);
        }
    }

    fn bump(&mut self, key: impl FnOnce(&str) -> String) {
        if let Some(r) = self.report.as_deref_mut() {
            *r.entry(key(self.top)).or_insert(0) += 1;
        }
    }

    /// Records one shared access.
    pub fn access(&mut self) {
        self.accesses += 1;
        self.bump(|top| format!("{top}.steps"));
    }

    /// Atomic read of a base register.
    pub fn read(&mut self, pid: Pid, reg: ObjId, line: Line, cell: &Value) -> Value {
        self.access();
        if self.events.is_some() {
            let op = self.fresh_op();
            self.emit(Event::inv(reg, op, pid, Invocation::nullary("read")).with_line(Some(line)));
            self.emit(Event::rsp(reg, op, pid, cell.clone()));
        }
        cell.clone()
    }

    /// Atomic write of a base register.
    pub fn write(&mut self, pid: Pid, reg: ObjId, line: Line, cell: &mut Value, v: Value) {
        self.access();
        if self.events.is_some() {
            let op = self.fresh_op();
            self.emit(Event::inv(reg, op, pid, Invocation::unary("write", v.clone())).with_line(Some(line)));
            self.emit(Event::rsp(reg, op, pid, Value::Unit));
        }
        *cell = v;
    }

    /// One step of a call into a sub-object. `pending` lives in the caller's
    /// frame and remembers the in-flight sub-operation between steps.
    #[allow(clippy::too_many_arguments)]
    pub fn call(
        &mut self,
        pid: Pid,
        child: &mut Obj,
        child_name: &str,
        pending: &mut Option<Ignored<OpId>>,
        line: Line,
        inv: &Invocation,
    ) -> Option<Value> {
        let op = match pending {
            Some(op) => op.0,
            None => {
                let op = if self.events.is_some() { self.fresh_op() } else { 0 };
                self.emit(Event::inv(child.id(), op, pid, inv.clone()).with_line(Some(line)));
                self.bump(|top| format!("{top}.{child_name}.{}", inv.name));
                child
                    .invoke(pid, inv)
                    .unwrap_or_else(|e| panic!("internal call rejected by sub-object: {e}"));
                *pending = Some(Ignored(op));
                op
            }
        };
        let r = child.step(pid, self);
        if let Some(v) = &r {
            self.emit(Event::rsp(child.id(), op, pid, v.clone()));
            *pending = None;
        }
        r
    }
}

/// Allocates object ids while an algorithm is being built.
#[derive(Debug)]
pub struct Ids {
    next: ObjId,
}

impl Ids {
    pub fn new() -> Self {
        Ids { next: 2 }
    }

    pub fn take(&mut self) -> ObjId {
        let id = self.next;
        self.next += 1;
        id
    }

    /// `k` consecutive ids; returns the first.
    pub fn take_many(&mut self, k: usize) -> ObjId {
        let id = self.next;
        self.next += k as ObjId;
        id
    }
}

impl Default for Ids {
    fn default() -> Self {
        Self::new()
    }
}

/// An algorithm instance: shared state plus per-process frames.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Obj {
    Atomic(AtomicObj),
    Aba(AbaImpl),
    MaxReg(MaxRegImpl),
    DcSnap(DcSnapImpl),
    SlSnap(Box<SlSnapImpl>),
    Counter(CounterImpl),
    Gen(Box<GenImpl>),
    Livelock(LivelockImpl),
}

impl Obj {
    pub fn id(&self) -> ObjId {
        match self {
            Obj::Atomic(o) => o.id,
            Obj::Aba(o) => o.id,
            Obj::MaxReg(o) => o.id,
            Obj::DcSnap(o) => o.id,
            Obj::SlSnap(o) => o.id,
            Obj::Counter(o) => o.id,
            Obj::Gen(o) => o.id,
            Obj::Livelock(o) => o.id,
        }
    }

    /// Starts an operation for `pid`; no shared access happens yet.
    pub fn invoke(&mut self, pid: Pid, inv: &Invocation) -> Result<(), MachineError> {
        match self {
            Obj::Atomic(o) => o.invoke(pid, inv),
            Obj::Aba(o) => o.invoke(pid, inv),
            Obj::MaxReg(o) => o.invoke(pid, inv),
            Obj::DcSnap(o) => o.invoke(pid, inv),
            Obj::SlSnap(o) => o.invoke(pid, inv),
            Obj::Counter(o) => o.invoke(pid, inv),
            Obj::Gen(o) => o.invoke(pid, inv),
            Obj::Livelock(o) => o.invoke(pid, inv),
        }
    }

    /// Runs the next line of `pid`'s operation. Returns the response when
    /// the operation completes.
    pub fn step(&mut self, pid: Pid, cx: &mut Cx) -> Option<Value> {
        match self {
            Obj::Atomic(o) => o.step(pid, cx),
            Obj::Aba(o) => o.step(pid, cx),
            Obj::MaxReg(o) => o.step(pid, cx),
            Obj::DcSnap(o) => o.step(pid, cx),
            Obj::SlSnap(o) => o.step(pid, cx),
            Obj::Counter(o) => o.step(pid, cx),
            Obj::Gen(o) => o.step(pid, cx),
            Obj::Livelock(o) => o.step(pid, cx),
        }
    }

    /// Label of the line `pid` executes next, if it is inside an operation.
    pub fn next_line(&self, pid: Pid) -> Option<Line> {
        match self {
            Obj::Atomic(o) => o.next_line(pid),
            Obj::Aba(o) => o.next_line(pid),
            Obj::MaxReg(o) => o.next_line(pid),
            Obj::DcSnap(o) => o.next_line(pid),
            Obj::SlSnap(o) => o.next_line(pid),
            Obj::Counter(o) => o.next_line(pid),
            Obj::Gen(o) => o.next_line(pid),
            Obj::Livelock(o) => o.next_line(pid),
        }
    }
}

/// What one step did, in terms of the implemented object.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepInfo {
    pub pid: Pid,
    /// High-level operation invoked in this step.
    pub invoked: Option<(OpId, Invocation)>,
    /// High-level operation that responded in this step.
    pub responded: Option<(OpId, Invocation, Value)>,
    /// Result of a coin flip performed in this step.
    pub flip: Option<i64>,
    /// Label of the line executed.
    pub line: Option<Line>,
    /// Number of shared accesses performed (0 or 1).
    pub accesses: u32,
}

/// A loaded algorithm with per-process programs.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Machine {
    pub n: usize,
    name: Ignored<String>,
    spec: Ignored<SpecRef>,
    obj: Obj,
    programs: Ignored<Arc<Vec<Vec<Invocation>>>>,
    cursor: Vec<usize>,
    active: Vec<Option<Ignored<(OpId, Invocation)>>>,
    coins: Vec<Vec<i64>>,
    rng: Ignored<ChaCha8Rng>,
    next_op: Ignored<OpId>,
    report: Ignored<StepReport>,
    instrument: Ignored<bool>,
}

fn is_flip(inv: &Invocation) -> bool {
    inv.is("flip") && inv.args.is_empty()
}

impl Machine {
    /// Loads a built-in algorithm with default options.
    pub fn load(alg: AlgorithmId, n: usize, programs: Vec<Vec<Invocation>>) -> Result<Machine, MachineError> {
        Machine::load_with(alg, n, programs, &LoadOptions::default())
    }

    /// Loads a built-in algorithm.
    pub fn load_with(
        alg: AlgorithmId,
        n: usize,
        programs: Vec<Vec<Invocation>>,
        opts: &LoadOptions,
    ) -> Result<Machine, MachineError> {
        if n == 0 {
            return Err(MachineError::Config("at least one process is required".into()));
        }
        let mut ids = Ids::new();
        let obj = match alg {
            AlgorithmId::LinAba => Obj::Aba(AbaImpl::new(TOP, &mut ids, n, AbaVariant::Lin, Value::Bot, opts.getseq_seed)),
            AlgorithmId::SlAba => Obj::Aba(AbaImpl::new(TOP, &mut ids, n, AbaVariant::Sl, Value::Bot, opts.getseq_seed)),
            AlgorithmId::BoundedMaxReg => Obj::MaxReg(MaxRegImpl::new(TOP, &mut ids, n, Some(opts.maxreg_bound))),
            AlgorithmId::UnboundedMaxReg => Obj::MaxReg(MaxRegImpl::new(TOP, &mut ids, n, None)),
            AlgorithmId::DcSnapshot => Obj::DcSnap(DcSnapImpl::new(TOP, &mut ids, n)),
            AlgorithmId::SlSnapshot => Obj::SlSnap(Box::new(SlSnapImpl::new(TOP, &mut ids, n, SlVariant::Plain, opts))),
            AlgorithmId::SlSnapshotSeq => Obj::SlSnap(Box::new(SlSnapImpl::new(TOP, &mut ids, n, SlVariant::Seq, opts))),
            AlgorithmId::NoAbaSnapshot => Obj::SlSnap(Box::new(SlSnapImpl::new(TOP, &mut ids, n, SlVariant::NoAba, opts))),
            AlgorithmId::LinCounter => Obj::Counter(CounterImpl::new(TOP, &mut ids, n)),
            AlgorithmId::AtomicCounter => Obj::Atomic(AtomicObj::new(TOP, Arc::new(CounterSpec { n }), n)),
            AlgorithmId::Livelock => {
                if n != 2 {
                    return Err(MachineError::Config("the livelock machine has exactly two processes".into()));
                }
                Obj::Livelock(LivelockImpl::new(TOP, &mut ids))
            }
        };
        Machine::assemble(alg.as_str().to_string(), alg.spec(n, opts), obj, n, programs, opts.coin_seed)
    }

    /// The universal construction over a simple type.
    pub fn load_gen(
        simple: Arc<SimpleType>,
        n: usize,
        programs: Vec<Vec<Invocation>>,
        opts: &LoadOptions,
    ) -> Result<Machine, MachineError> {
        let mut ids = Ids::new();
        let spec = simple.base.clone();
        let name = format!("gen:{}", simple.name);
        let obj = Obj::Gen(Box::new(GenImpl::new(TOP, &mut ids, n, simple, opts)));
        Machine::assemble(name, spec, obj, n, programs, opts.coin_seed)
    }

    /// An atomic object of any specification, one step per operation.
    pub fn load_atomic(spec: SpecRef, n: usize, programs: Vec<Vec<Invocation>>) -> Result<Machine, MachineError> {
        let obj = Obj::Atomic(AtomicObj::new(TOP, spec.clone(), n));
        Machine::assemble(format!("atomic:{}", spec.id()), spec, obj, n, programs, 0)
    }

    fn assemble(
        name: String,
        spec: SpecRef,
        obj: Obj,
        n: usize,
        programs: Vec<Vec<Invocation>>,
        coin_seed: u64,
    ) -> Result<Machine, MachineError> {
        if programs.len() > n {
            return Err(MachineError::Config(format!("{} programs given for {n} processes", programs.len())));
        }
        let mut programs = programs;
        programs.resize(n, Vec::new());
        // Every invocation must be accepted by the sequential type from some
        // state; probing the initial state catches wrong names and arities.
        for (i, prog) in programs.iter().enumerate() {
            for inv in prog.iter().filter(|inv| !is_flip(inv)) {
                if spec.apply(&spec.initial(), i + 1, inv).is_err() {
                    return Err(MachineError::BadInvocation { alg: name, inv: inv.to_string() });
                }
            }
        }
        let mut probe = obj.clone();
        for (i, prog) in programs.iter().enumerate() {
            for inv in prog.iter().filter(|inv| !is_flip(inv)) {
                probe.invoke(i + 1, inv).map_err(|_| MachineError::BadInvocation { alg: name.clone(), inv: inv.to_string() })?;
                probe = obj.clone();
            }
        }
        Ok(Machine {
            n,
            name: Ignored(name),
            spec: Ignored(spec),
            obj,
            programs: Ignored(Arc::new(programs)),
            cursor: vec![0; n],
            active: vec![None; n],
            coins: vec![Vec::new(); n],
            rng: Ignored(ChaCha8Rng::seed_from_u64(coin_seed)),
            next_op: Ignored(0),
            report: Ignored(StepReport::new()),
            instrument: Ignored(true),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn spec(&self) -> &SpecRef {
        &self.spec
    }

    pub fn object(&self) -> &Obj {
        &self.obj
    }

    pub fn programs(&self) -> &[Vec<Invocation>] {
        &self.programs
    }

    /// Turns step-report bookkeeping on or off (off speeds up search).
    pub fn set_instrumented(&mut self, on: bool) {
        *self.instrument = on;
    }

    /// Reseeds the coin.
    pub fn reseed_coin(&mut self, seed: u64) {
        *self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Whether `pid` has a step to take.
    pub fn enabled(&self, pid: Pid) -> bool {
        pid >= 1
            && pid <= self.n
            && (self.active[pid - 1].is_some() || self.cursor[pid - 1] < self.programs[pid - 1].len())
    }

    pub fn enabled_pids(&self) -> Vec<Pid> {
        (1..=self.n).filter(|&p| self.enabled(p)).collect()
    }

    pub fn is_done(&self) -> bool {
        (1..=self.n).all(|p| !self.enabled(p))
    }

    /// High-level operation currently open for `pid`.
    pub fn active_op(&self, pid: Pid) -> Option<&(OpId, Invocation)> {
        self.active.get(pid.wrapping_sub(1)).and_then(|a| a.as_ref()).map(|a| &a.0)
    }

    /// Label of the next line `pid` will execute inside its open operation.
    pub fn next_line(&self, pid: Pid) -> Option<Line> {
        self.active_op(pid)?;
        self.obj.next_line(pid)
    }

    /// Index of the next program entry of `pid`.
    pub fn cursor(&self, pid: Pid) -> usize {
        self.cursor[pid - 1]
    }

    /// Coin flips observed so far by `pid`.
    pub fn coins(&self, pid: Pid) -> &[i64] {
        &self.coins[pid - 1]
    }

    /// Shared-access and sub-invocation tallies.
    pub fn report(&self) -> &StepReport {
        &self.report
    }

    /// Fingerprint of the behaviour-relevant state.
    pub fn fingerprint(&self) -> u128 {
        fingerprint(self)
    }

    /// Whether `pid`'s next step is a coin flip.
    pub fn next_is_flip(&self, pid: Pid) -> bool {
        self.enabled(pid)
            && self.active[pid - 1].is_none()
            && is_flip(&self.programs[pid - 1][self.cursor[pid - 1]])
    }

    /// Executes one step of `pid`, appending the emitted events to `events`.
    pub fn step(&mut self, pid: Pid, events: Option<&mut Vec<Event>>) -> Result<StepInfo, MachineError> {
        self.step_with(pid, None, events)
    }

    /// Like [`Machine::step`], with the outcome of a coin flip fixed to
    /// `coin` instead of drawn from the seeded generator.
    pub fn step_with(&mut self, pid: Pid, coin: Option<i64>, events: Option<&mut Vec<Event>>) -> Result<StepInfo, MachineError> {
        if pid == 0 || pid > self.n {
            return Err(MachineError::BadProcess { pid, n: self.n });
        }
        if !self.enabled(pid) {
            return Err(MachineError::Idle(pid));
        }
        let mut events = events;
        let i = pid - 1;
        let mut info = StepInfo { pid, invoked: None, responded: None, flip: None, line: None, accesses: 0 };
        if self.active[i].is_none() {
            let inv = self.programs[i][self.cursor[i]].clone();
            if is_flip(&inv) {
                let c: i64 = coin.unwrap_or_else(|| self.rng.gen_range(0..2));
                self.coins[i].push(c);
                self.cursor[i] += 1;
                *self.next_op += 1;
                let op = *self.next_op;
                if let Some(ev) = events.as_deref_mut() {
                    ev.push(Event::inv(COIN, op, pid, inv).with_line(Some(Line::Flip)));
                    ev.push(Event::rsp(COIN, op, pid, Value::Int(c)));
                }
                info.flip = Some(c);
                info.line = Some(Line::Flip);
                return Ok(info);
            }
            self.obj.invoke(pid, &inv)?;
            *self.next_op += 1;
            let op = *self.next_op;
            if let Some(ev) = events.as_deref_mut() {
                ev.push(Event::inv(TOP, op, pid, inv.clone()));
            }
            info.invoked = Some((op, inv.clone()));
            self.active[i] = Some(Ignored((op, inv)));
        }
        info.line = self.obj.next_line(pid);
        let (op, inv) = self.active[i].as_ref().map(|a| a.0.clone()).expect("open operation");
        let top = inv.name.clone();
        let instrument = *self.instrument;
        let (resp, accesses) = {
            let mut cx = Cx {
                events: events.as_deref_mut(),
                next_op: &mut self.next_op.0,
                report: if instrument { Some(&mut self.report.0) } else { None },
                top: &top,
                accesses: 0,
            };
            let r = self.obj.step(pid, &mut cx);
            (r, cx.accesses)
        };
        info.accesses = accesses;
        if let Some(v) = resp {
            if let Some(ev) = events {
                ev.push(Event::rsp(TOP, op, pid, v.clone()));
            }
            if instrument {
                *self.report.entry(format!("{top}.ops")).or_insert(0) += 1;
            }
            self.active[i] = None;
            self.cursor[i] += 1;
            info.responded = Some((op, inv, v));
        }
        Ok(info)
    }

    /// Runs a schedule, stopping early at the first idle process.
    pub fn run(&mut self, schedule: &[Pid]) -> RunOutcome {
        let mut t = Transcript::new(self.n);
        let mut executed = 0;
        let mut stopped = None;
        for &p in schedule {
            match self.step(p, Some(&mut t.events)) {
                Ok(_) => executed += 1,
                Err(e) => {
                    stopped = Some(e);
                    break;
                }
            }
        }
        RunOutcome { transcript: t, executed, stopped }
    }

    /// Runs `pid` alone until its current operation (or program entry)
    /// completes.
    pub fn run_solo_op(&mut self, pid: Pid, events: Option<&mut Vec<Event>>, max_steps: usize) -> Result<usize, MachineError> {
        let mut events = events;
        for k in 1..=max_steps {
            let info = self.step(pid, events.as_deref_mut())?;
            if info.responded.is_some() || info.flip.is_some() {
                return Ok(k);
            }
        }
        Err(MachineError::Config(format!("process {pid} did not finish its operation within {max_steps} solo steps")))
    }
}

/// Result of [`Machine::run`].
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub transcript: Transcript,
    /// Number of schedule entries executed.
    pub executed: usize,
    /// Why the run stopped before the end of the schedule, if it did.
    pub stopped: Option<MachineError>,
}

/// Parses `op(args); op(args); …` into invocations.
pub fn parse_program(text: &str) -> Result<Vec<Invocation>, MachineError> {
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Invocation>().map_err(|e| MachineError::Config(e.to_string())))
        .collect()
}

/// Convenience: one program per process from `;`-separated strings.
pub fn programs(texts: &[&str]) -> Vec<Vec<Invocation>> {
    texts.iter().map(|t| parse_program(t).expect("valid program text")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_names_round_trip() {
        for &a in AlgorithmId::ALL {
            assert_eq!(a.as_str().parse::<AlgorithmId>().unwrap(), a);
        }
        assert!("widget".parse::<AlgorithmId>().is_err());
    }

    #[test]
    fn load_rejects_foreign_invocations() {
        let err = Machine::load(AlgorithmId::SlAba, 2, programs(&["scan()"])).unwrap_err();
        assert!(matches!(err, MachineError::BadInvocation { .. }));
        let err = Machine::load(AlgorithmId::BoundedMaxReg, 1, programs(&["maxWrite(9)"])).unwrap_err();
        assert!(matches!(err, MachineError::BadInvocation { .. }));
    }

    #[test]
    fn empty_schedule_gives_empty_transcript() {
        let mut m = Machine::load(AlgorithmId::SlAba, 2, programs(&["DRead()", "DWrite(1)"])).unwrap();
        let out = m.run(&[]);
        assert!(out.transcript.is_empty());
        assert_eq!(out.executed, 0);
        assert!(m.report().is_empty());
    }

    #[test]
    fn idle_process_stops_the_run() {
        let mut m = Machine::load(AlgorithmId::SlAba, 2, programs(&["DWrite(1)", ""])).unwrap();
        let out = m.run(&[1, 1, 2]);
        assert_eq!(out.executed, 2);
        assert_eq!(out.stopped, Some(MachineError::Idle(2)));
    }

    #[test]
    fn every_step_makes_at_most_one_access() {
        let mut m = Machine::load(AlgorithmId::SlSnapshot, 3, programs(&["update(1); scan()", "scan()", "update(2)"])).unwrap();
        let mut p = 0;
        while !m.is_done() {
            let en = m.enabled_pids();
            let info = m.step(en[p % en.len()], None).unwrap();
            assert!(info.accesses <= 1);
            p += 1;
        }
    }
}
