//! Strong linearizability as a safety game.
//!
//! A strong linearization function assigns to every transcript a
//! linearization that extends the one of each prefix. Along a single step
//! the linearization can only grow by appending operations, so its relevant
//! content is the specification state it reaches plus, for each process,
//! the response promised to a pending operation it already contains. The
//! scheduler moves by taking a step; the linearizer answers by appending an
//! ordered set of operations that must contain every operation that has just
//! responded. The function exists on the explored tree exactly when the
//! linearizer can answer forever, and positions are memoized by
//! `(machine state, linearizer configuration)`.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use crate::genconstruct::{order::order_group, GenOp, SimpleType};
use crate::machines::{Machine, Obj, StepInfo};
use crate::scheduler::{successors, Budget, Move, NodeStatus, TranscriptTree};
use crate::seqspec::{SeqOp, SequentialHistory, SpecRef};
use crate::transcript::Transcript;
use crate::value::{fingerprint, Invocation, OpId, Pid, Value};

use super::Outcome;

/// A step, the position it leads to, the refuted answers and the step's events.
type LosingMove<P> = (Move, P, Vec<Ext>, Vec<crate::transcript::Event>);

/// What the linearizer has committed to.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Config {
    /// Specification state after the current linearization.
    pub state: Value,
    /// Response promised to each process's linearized pending operation.
    pub assigned: Vec<Option<Value>>,
}

/// A position source: the tree the game is played on.
pub trait GameSource {
    type Pos: Clone;
    fn root(&self) -> Self::Pos;
    fn machine<'a>(&'a self, pos: &'a Self::Pos) -> &'a Machine;
    fn expand(&self, pos: &Self::Pos) -> Vec<(Move, StepInfo, Self::Pos)>;
    /// Identity of a position for memoization.
    fn key(&self, pos: &Self::Pos) -> u128;
    /// Whether the position is a leaf cut by the budget.
    fn cut(&self, pos: &Self::Pos) -> bool;
}

/// Plays on the schedules of a machine, explored on the fly.
pub struct MachineSource {
    pub root: Machine,
    pub budget: Budget,
}

#[derive(Clone, Debug)]
pub struct MachinePos {
    pub machine: Machine,
    pub depth: usize,
    path: u128,
}

impl GameSource for MachineSource {
    type Pos = MachinePos;

    fn root(&self) -> MachinePos {
        MachinePos { machine: self.root.clone(), depth: 0, path: 0 }
    }

    fn machine<'a>(&'a self, pos: &'a MachinePos) -> &'a Machine {
        &pos.machine
    }

    fn expand(&self, pos: &MachinePos) -> Vec<(Move, StepInfo, MachinePos)> {
        if pos.depth >= self.budget.max_steps {
            return Vec::new();
        }
        successors(&pos.machine, false)
            .into_iter()
            .map(|s| {
                let path = if self.budget.dedup { 0 } else { fingerprint(&(pos.path, s.mv)) };
                (s.mv, s.info, MachinePos { machine: s.machine, depth: pos.depth + 1, path })
            })
            .collect()
    }

    fn key(&self, pos: &MachinePos) -> u128 {
        if self.budget.dedup {
            pos.machine.fingerprint()
        } else {
            pos.path
        }
    }

    fn cut(&self, pos: &MachinePos) -> bool {
        pos.depth >= self.budget.max_steps && !pos.machine.is_done()
    }
}

/// Plays on an explicit transcript tree; duplicate nodes continue at the
/// node they duplicate.
pub struct TreeSource<'a> {
    pub tree: &'a TranscriptTree,
}

impl TreeSource<'_> {
    fn resolve(&self, i: usize) -> usize {
        match self.tree.nodes[i].status {
            NodeStatus::Duplicate(j) => j,
            _ => i,
        }
    }
}

impl GameSource for TreeSource<'_> {
    type Pos = usize;

    fn root(&self) -> usize {
        0
    }

    fn machine<'b>(&'b self, pos: &'b usize) -> &'b Machine {
        &self.tree.nodes[*pos].machine
    }

    fn expand(&self, pos: &usize) -> Vec<(Move, StepInfo, usize)> {
        let i = self.resolve(*pos);
        self.tree.nodes[i]
            .children
            .iter()
            .map(|&c| {
                let n = &self.tree.nodes[c];
                (n.mv.expect("child has a move"), n.info.clone().expect("child has step info"), c)
            })
            .collect()
    }

    fn key(&self, pos: &usize) -> u128 {
        self.resolve(*pos) as u128
    }

    fn cut(&self, pos: &usize) -> bool {
        self.tree.nodes[self.resolve(*pos)].status == NodeStatus::Truncated
    }
}

/// A fixed linearization rule, expressed incrementally: which processes'
/// operations to append, in order, after a step.
pub trait Tracker: Send + Sync {
    fn name(&self) -> &'static str;
    fn ext(&self, before: &Machine, info: &StepInfo, after: &Machine, assigned: &[Option<Value>]) -> Vec<Pid>;
}

/// Operations take effect when they respond (the looping ABA-detecting
/// register: the final second read of `X`, or the write of `X`).
pub struct ResponseTracker;

impl Tracker for ResponseTracker {
    fn name(&self) -> &'static str {
        "response"
    }

    fn ext(&self, _before: &Machine, info: &StepInfo, _after: &Machine, assigned: &[Option<Value>]) -> Vec<Pid> {
        match &info.responded {
            Some(_) if assigned[info.pid - 1].is_none() => vec![info.pid],
            _ => Vec::new(),
        }
    }
}

/// The composed snapshot's rule: a scan takes effect when it responds,
/// together with (and after) every pending update whose value it returns;
/// other updates take effect when they publish.
pub struct SnapshotTracker;

impl Tracker for SnapshotTracker {
    fn name(&self) -> &'static str {
        "snapshot"
    }

    fn ext(&self, _before: &Machine, info: &StepInfo, after: &Machine, assigned: &[Option<Value>]) -> Vec<Pid> {
        let Some((_, inv, resp)) = &info.responded else { return Vec::new() };
        if assigned[info.pid - 1].is_some() {
            return Vec::new();
        }
        if !inv.is("scan") {
            return vec![info.pid];
        }
        let cells = resp.as_vector().unwrap_or(&[]);
        let mut out: Vec<Pid> = (1..=after.n)
            .filter(|&q| q != info.pid && assigned[q - 1].is_none())
            .filter(|&q| match after.active_op(q) {
                Some((_, up)) if up.is("update") => cells.get(q - 1) == up.arg(0),
                _ => false,
            })
            .collect();
        out.push(info.pid);
        out
    }
}

/// The construction's rule: when an operation publishes its node without
/// having taken effect, it takes effect together with every pending
/// operation that already scanned and is dominated, directly or through
/// other members, by the group.
pub struct GenTracker {
    pub ty: Arc<SimpleType>,
}

impl Tracker for GenTracker {
    fn name(&self) -> &'static str {
        "gen"
    }

    fn ext(&self, before: &Machine, info: &StepInfo, _after: &Machine, assigned: &[Option<Value>]) -> Vec<Pid> {
        let Some((op, inv, _)) = &info.responded else { return Vec::new() };
        if assigned[info.pid - 1].is_some() {
            return Vec::new();
        }
        let Obj::Gen(g) = before.object() else { return vec![info.pid] };
        let mut group: Vec<GenOp> =
            vec![GenOp { op: *op, pid: info.pid, inv: inv.clone(), resp: None, scan: None, update: None, pt: None }];
        loop {
            let extra = (1..=before.n).find(|&q| {
                !group.iter().any(|o| o.pid == q)
                    && assigned[q - 1].is_none()
                    && g.prepared(q).is_some()
                    && before.active_op(q).is_some_and(|(_, iq)| {
                        group.iter().any(|o| self.ty.dominates(&o.inv, o.pid, iq, q))
                    })
            });
            match extra {
                Some(q) => {
                    let (id, iq) = before.active_op(q).expect("checked above").clone();
                    group.push(GenOp { op: id, pid: q, inv: iq, resp: None, scan: None, update: None, pt: None });
                }
                None => break,
            }
        }
        let mut refs: Vec<&GenOp> = group.iter().collect();
        order_group(&self.ty, &mut refs).into_iter().map(|o| o.pid).collect()
    }
}

/// One appended operation.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Appended {
    op: OpId,
    pid: Pid,
    inv: Invocation,
    resp: Value,
}

type Ext = (Vec<Appended>, Config);

/// Result of a game.
#[derive(Clone, Debug)]
pub struct StrongResult {
    pub outcome: Outcome,
    /// Distinct positions visited.
    pub nodes: usize,
    /// Some leaf was cut by the step budget.
    pub truncated: bool,
    pub counterexample: Option<Counterexample>,
}

/// Refutation of one linearization of the counterexample prefix.
#[derive(Clone, Debug)]
pub struct Refutation {
    /// The linearization chosen for the prefix.
    pub linearization: SequentialHistory,
    /// Steps after the prefix that leave no consistent extension.
    pub continuation: Vec<Move>,
    /// Linearizer choices made along the continuation.
    pub choices: Vec<SequentialHistory>,
    /// Events of the continuation.
    pub transcript: Transcript,
}

/// A prefix with, for each way of linearizing it, a continuation on which
/// that choice cannot be extended.
#[derive(Clone, Debug)]
pub struct Counterexample {
    pub prefix: Vec<Move>,
    pub prefix_transcript: Transcript,
    pub refutations: Vec<Refutation>,
}

impl std::fmt::Display for Counterexample {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sched = |ms: &[Move]| ms.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(f, "# prefix schedule: {}", sched(&self.prefix))?;
        write!(f, "{}", self.prefix_transcript)?;
        for (k, r) in self.refutations.iter().enumerate() {
            writeln!(f, "# candidate {}: linearization of the prefix = {}", k + 1, r.linearization)?;
            writeln!(f, "# continuation schedule: {}", sched(&r.continuation))?;
            for (i, c) in r.choices.iter().enumerate() {
                writeln!(f, "#   linearizer choice after step {}: {}", i + 1, c)?;
            }
            writeln!(f, "#   the last step admits no consistent extension")?;
            write!(f, "{}", r.transcript)?;
        }
        Ok(())
    }
}

/// Game solver.
pub struct Game<'a, S: GameSource> {
    src: &'a S,
    spec: SpecRef,
    tracker: Option<&'a dyn Tracker>,
    max_nodes: usize,
    memo: HashMap<(u128, u128), bool>,
    on_stack: HashMap<(u128, u128), usize>,
    seen: HashSet<u128>,
    depth: usize,
    truncated: bool,
    aborted: bool,
}

const NO_DEP: usize = usize::MAX;

impl<'a, S: GameSource> Game<'a, S> {
    pub fn new(src: &'a S, spec: SpecRef, tracker: Option<&'a dyn Tracker>, max_nodes: usize) -> Self {
        Game {
            src,
            spec,
            tracker,
            max_nodes,
            memo: HashMap::new(),
            on_stack: HashMap::new(),
            seen: HashSet::new(),
            depth: 0,
            truncated: false,
            aborted: false,
        }
    }

    fn initial(&self) -> Config {
        Config { state: self.spec.initial(), assigned: vec![None; self.src.machine(&self.src.root()).n] }
    }

    /// Applies `order` after a step; `None` when some response disagrees.
    fn apply(&self, cfg: &Config, after: &Machine, responded: Option<(Pid, OpId, &Invocation, &Value)>, order: &[Pid]) -> Option<Ext> {
        let mut c = cfg.clone();
        let mut out = Vec::with_capacity(order.len());
        for &q in order {
            let (op, inv, actual) = match responded {
                Some((p, op, inv, v)) if p == q => (op, inv.clone(), Some(v)),
                _ => {
                    let (op, inv) = after.active_op(q)?.clone();
                    (op, inv, None)
                }
            };
            let (next, resp) = self.spec.apply(&c.state, q, &inv).ok()?;
            match actual {
                Some(v) if *v != resp => return None,
                Some(_) => {}
                None => c.assigned[q - 1] = Some(resp.clone()),
            }
            c.state = next;
            out.push(Appended { op, pid: q, inv, resp });
        }
        Some((out, c))
    }

    /// Every admissible answer of the linearizer to a step.
    fn answers(&self, cfg: &Config, before: &Machine, info: &StepInfo, after: &Machine) -> Vec<Ext> {
        let mut base = cfg.clone();
        let mut required = None;
        let responded = info.responded.as_ref().map(|(op, inv, v)| (info.pid, *op, inv, v));
        if let Some((p, _, _, v)) = responded {
            match base.assigned[p - 1].take() {
                Some(promised) if promised != *v => return Vec::new(),
                Some(_) => {}
                None => required = Some(p),
            }
        }
        if let Some(tr) = self.tracker {
            let order = tr.ext(before, info, after, &cfg.assigned);
            if required.is_some_and(|p| !order.contains(&p)) {
                return Vec::new();
            }
            return self.apply(&base, after, responded, &order).into_iter().collect();
        }
        let optional: Vec<Pid> =
            (1..=after.n).filter(|&q| Some(q) != required && base.assigned[q - 1].is_none() && after.active_op(q).is_some()).collect();
        let mut out: Vec<Ext> = Vec::new();
        let mut seen_cfg: HashSet<u128> = HashSet::new();
        for mask in 0u32..(1 << optional.len()) {
            let mut chosen: Vec<Pid> = optional.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &q)| q).collect();
            chosen.extend(required);
            chosen.sort_unstable();
            for order in permutations(&chosen) {
                if let Some(e) = self.apply(&base, after, responded, &order) {
                    if seen_cfg.insert(fingerprint(&e.1)) {
                        out.push(e);
                    }
                }
            }
        }
        out.sort_by_key(|(a, _)| a.len());
        out
    }

    fn win(&mut self, pos: &S::Pos, cfg: &Config) -> (bool, usize) {
        let pk = self.src.key(pos);
        let key = (pk, fingerprint(cfg));
        if let Some(&r) = self.memo.get(&key) {
            return (r, NO_DEP);
        }
        if let Some(&d) = self.on_stack.get(&key) {
            return (true, d);
        }
        if self.aborted {
            return (true, NO_DEP);
        }
        if self.seen.insert(pk) && self.seen.len() > self.max_nodes {
            self.aborted = true;
            return (true, NO_DEP);
        }
        let moves = self.src.expand(pos);
        if moves.is_empty() {
            if self.src.cut(pos) {
                self.truncated = true;
            }
            self.memo.insert(key, true);
            return (true, NO_DEP);
        }
        let d = self.depth;
        self.on_stack.insert(key, d);
        self.depth += 1;
        let mut low = NO_DEP;
        let mut result = true;
        for (_, info, child) in &moves {
            let answers = self.answers(cfg, self.src.machine(pos), info, self.src.machine(child));
            let mut any = false;
            for (_, c2) in &answers {
                let (w, l) = self.win(child, c2);
                low = low.min(l);
                if w {
                    any = true;
                    break;
                }
            }
            if !any {
                result = false;
                break;
            }
        }
        self.depth -= 1;
        self.on_stack.remove(&key);
        if !result {
            self.memo.insert(key, false);
            (false, NO_DEP)
        } else if low >= d {
            self.memo.insert(key, true);
            (true, NO_DEP)
        } else {
            (true, low)
        }
    }

    /// Solves the game from the root.
    pub fn solve(&mut self) -> StrongResult {
        let root = self.src.root();
        let cfg = self.initial();
        let (w, _) = self.win(&root, &cfg);
        let outcome = if self.aborted {
            Outcome::Inconclusive
        } else if w {
            Outcome::Pass
        } else {
            Outcome::Fail
        };
        let counterexample = if outcome == Outcome::Fail { Some(self.explain()) } else { None };
        StrongResult { outcome, nodes: self.seen.len(), truncated: self.truncated, counterexample }
    }

    /// First step after which every answer loses, with those answers.
    fn losing_move(&mut self, pos: &S::Pos, cfg: &Config) -> Option<LosingMove<S::Pos>> {
        for (mv, info, child) in self.src.expand(pos) {
            let answers = self.answers(cfg, self.src.machine(pos), &info, self.src.machine(&child));
            if answers.iter().all(|(_, c2)| !self.win(&child, c2).0) {
                let mut m = self.src.machine(pos).clone();
                let mut ev = Vec::new();
                m.step_with(mv.pid, mv.coin, Some(&mut ev)).expect("replayed move is enabled");
                return Some((mv, child, answers, ev));
            }
        }
        None
    }

    fn explain(&mut self) -> Counterexample {
        let n = self.src.machine(&self.src.root()).n;
        let mut pos = self.src.root();
        let mut cfg = self.initial();
        let mut lin: Vec<SeqOp> = Vec::new();
        let mut prefix = Vec::new();
        let mut prefix_t = Transcript::new(n);
        // Events are regenerated from the machines so op ids stay consistent.
        let mut replay = self.src.machine(&pos).clone();
        loop {
            let (mv, child, answers, _) = self.losing_move(&pos, &cfg).expect("a losing position has a losing move");
            replay.step_with(mv.pid, mv.coin, Some(&mut prefix_t.events)).expect("replayed move is enabled");
            prefix.push(mv);
            if answers.len() == 1 {
                let (app, c2) = answers.into_iter().next().expect("one answer");
                lin.extend(app.into_iter().map(to_seq));
                pos = child;
                cfg = c2;
                continue;
            }
            let mut refutations = Vec::new();
            if answers.is_empty() {
                let mut last = Transcript::new(n);
                last.events = prefix_t.events.split_off(prefix_t.events.len() - replay_events_of_last(&prefix_t, &mv));
                prefix.pop();
                refutations.push(Refutation {
                    linearization: SequentialHistory::new(lin.clone()),
                    continuation: vec![mv],
                    choices: Vec::new(),
                    transcript: last,
                });
            }
            for (app, c2) in answers {
                let mut l = lin.clone();
                l.extend(app.into_iter().map(to_seq));
                refutations.push(self.refute(child.clone(), c2, SequentialHistory::new(l), replay.clone()));
            }
            return Counterexample { prefix, prefix_transcript: prefix_t, refutations };
        }
    }

    fn refute(&mut self, mut pos: S::Pos, mut cfg: Config, linearization: SequentialHistory, mut replay: Machine) -> Refutation {
        let mut continuation = Vec::new();
        let mut choices = Vec::new();
        let mut t = Transcript::new(replay.n);
        let mut lin = linearization.ops.clone();
        loop {
            let (mv, child, answers, _) = self.losing_move(&pos, &cfg).expect("a losing position has a losing move");
            replay.step_with(mv.pid, mv.coin, Some(&mut t.events)).expect("replayed move is enabled");
            continuation.push(mv);
            match answers.into_iter().next() {
                None => return Refutation { linearization, continuation, choices, transcript: t },
                Some((app, c2)) => {
                    lin.extend(app.into_iter().map(to_seq));
                    choices.push(SequentialHistory::new(lin.clone()));
                    pos = child;
                    cfg = c2;
                }
            }
        }
    }

    /// After a winning solve on an explicit tree: one linearization per
    /// visited node, chosen as the first winning answer at every step.
    pub fn witness(&mut self) -> HashMap<u128, SequentialHistory> {
        let mut out = HashMap::new();
        let root = self.src.root();
        let cfg = self.initial();
        let mut stack = vec![(root, cfg, Vec::<SeqOp>::new(), 0u128)];
        while let Some((pos, cfg, lin, path)) = stack.pop() {
            out.insert(path, SequentialHistory::new(lin.clone()));
            for (mv, info, child) in self.src.expand(&pos) {
                let answers = self.answers(&cfg, self.src.machine(&pos), &info, self.src.machine(&child));
                for (app, c2) in answers {
                    if self.win(&child, &c2).0 {
                        let mut l = lin.clone();
                        l.extend(app.into_iter().map(to_seq));
                        stack.push((child, c2, l, fingerprint(&(path, mv))));
                        break;
                    }
                }
            }
        }
        out
    }
}

fn replay_events_of_last(t: &Transcript, mv: &Move) -> usize {
    t.events.iter().rev().take_while(|e| e.pid == mv.pid).count()
}

fn to_seq(a: Appended) -> SeqOp {
    SeqOp { id: a.op, pid: a.pid, inv: a.inv, resp: a.resp }
}

fn permutations(items: &[Pid]) -> Vec<Vec<Pid>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

/// Runs `f` on a thread with a large stack (the game recurses once per step).
pub fn with_big_stack<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    std::thread::Builder::new()
        .stack_size(1 << 29)
        .spawn(f)
        .expect("spawn solver thread")
        .join()
        .expect("solver thread panicked")
}

/// Decides strong linearizability of all schedules of `m` within `budget`.
/// With a tracker, only the tracker's linearization is tried.
pub fn check_strong_machine(m: &Machine, budget: &Budget, tracker: Option<&dyn Tracker>) -> StrongResult {
    let src = MachineSource { root: m.clone(), budget: *budget };
    let mut g = Game::new(&src, m.spec().clone(), tracker, budget.max_nodes);
    g.solve()
}

/// Decides whether an explicit tree admits a strong linearization function.
pub fn check_strong_linearizable(tree: &TranscriptTree, spec: &SpecRef) -> StrongResult {
    let src = TreeSource { tree };
    let mut g = Game::new(&src, spec.clone(), None, usize::MAX);
    let mut r = g.solve();
    r.truncated |= tree.truncated();
    r
}

/// A strong linearization function on an explicit tree, keyed by node
/// index, when one exists.
pub fn tree_witness(tree: &TranscriptTree, spec: &SpecRef) -> Option<HashMap<usize, SequentialHistory>> {
    let src = TreeSource { tree };
    let mut g = Game::new(&src, spec.clone(), None, usize::MAX);
    if g.solve().outcome != Outcome::Pass {
        return None;
    }
    let by_path = g.witness();
    let mut out = HashMap::new();
    for i in 0..tree.len() {
        let path = tree.schedule(i).iter().fold(0u128, |h, mv| fingerprint(&(h, *mv)));
        if let Some(l) = by_path.get(&path) {
            out.insert(i, l.clone());
        }
    }
    Some(out)
}
