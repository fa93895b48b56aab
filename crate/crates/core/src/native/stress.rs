//! Multi-threaded stress runs with a linearizability check on the recorded
//! history.
//!
//! Every operation is stamped from a global tick counter just before its
//! first shared access and just after its last one. In checking mode the
//! threads run in barrier-separated rounds of at most [`WINDOW`] operations,
//! so the history splits at quiescent cuts into small windows. Windows are
//! checked in order while carrying the set of specification states that
//! some valid linearization of the history so far can end in; the history
//! is linearizable exactly when that set never becomes empty.

use std::collections::{BTreeSet, HashSet};
use std::sync::atomic::{AtomicU64, Ordering::SeqCst};
use std::sync::{Barrier, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::aba::NativeAba;
use super::snapshot::NativeSlSnapshot;
use crate::seqspec::{AbaSpec, SnapshotSpec, TypeSpec};
use crate::value::{Invocation, Pid, Value};

/// Largest window checked exhaustively.
pub const WINDOW: usize = 6;

/// Object under test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StressObject {
    Slaba,
    Snapshot,
}

impl std::str::FromStr for StressObject {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "slaba" => Ok(StressObject::Slaba),
            "snapshot" => Ok(StressObject::Snapshot),
            _ => Err(format!("unknown stress object `{s}` (expected slaba or snapshot)")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct StressConfig {
    pub object: StressObject,
    pub threads: usize,
    /// Operations per thread.
    pub ops: usize,
    pub seed: u64,
    pub check: bool,
    /// Yield before every shared access (see [`NativeAba::with_yields`]).
    pub yields: bool,
}

/// One completed operation.
#[derive(Clone, Debug)]
pub struct Record {
    pub pid: Pid,
    pub inv: Invocation,
    pub resp: Value,
    pub inv_tick: u64,
    pub rsp_tick: u64,
    /// Shared accesses the operation made.
    pub steps: u64,
}

/// Result of the windowed check.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WindowCheck {
    pub windows: usize,
    pub checked: usize,
    /// Windows larger than [`WINDOW`]; checking stops at the first one.
    pub overflowed: usize,
    /// Index of the first window admitting no valid linearization.
    pub violation: Option<usize>,
}

impl WindowCheck {
    pub fn inconclusive(&self) -> bool {
        self.violation.is_none() && self.overflowed > 0
    }
}

#[derive(Clone, Debug)]
pub struct StressReport {
    pub records: Vec<Record>,
    pub elapsed: Duration,
    pub check: Option<WindowCheck>,
}

impl StressReport {
    pub fn throughput(&self) -> f64 {
        self.records.len() as f64 / self.elapsed.as_secs_f64().max(1e-9)
    }

    /// Largest step count among operations named `name`.
    pub fn max_steps(&self, name: &str) -> u64 {
        self.records.iter().filter(|r| r.inv.is(name)).map(|r| r.steps).max().unwrap_or(0)
    }
}

/// Operations each thread runs in each round. Every thread with work left
/// runs one operation per round and the remaining capacity goes to random
/// threads with work left.
fn round_plan(threads: usize, ops: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut left = vec![ops; threads];
    let mut plan = Vec::new();
    while left.iter().any(|&l| l > 0) {
        let mut round = vec![0; threads];
        let mut room = WINDOW;
        for t in 0..threads {
            if left[t] > 0 && room > 0 {
                round[t] += 1;
                left[t] -= 1;
                room -= 1;
            }
        }
        while room > 0 {
            let open: Vec<usize> = (0..threads).filter(|&t| left[t] > 0).collect();
            if open.is_empty() {
                break;
            }
            let t = open[rng.gen_range(0..open.len())];
            round[t] += 1;
            left[t] -= 1;
            room -= 1;
        }
        plan.push(round);
    }
    plan
}

/// A thread's operations against one object.
trait Worker {
    fn run(&mut self, rng: &mut ChaCha8Rng, serial: u32) -> (Invocation, Value, u64);
}

struct AbaWorker<'a>(super::aba::AbaHandle<'a>);

impl Worker for AbaWorker<'_> {
    fn run(&mut self, rng: &mut ChaCha8Rng, _serial: u32) -> (Invocation, Value, u64) {
        if rng.gen_bool(0.5) {
            let x = rng.gen_range(1..=3u32);
            self.0.dwrite(x);
            (Invocation::unary("DWrite", Value::Int(x as i64)), Value::Unit, self.0.steps)
        } else {
            let (x, flag) = self.0.dread();
            (Invocation::nullary("DRead"), Value::pair(int_or_bot(x), Value::Bool(flag)), self.0.steps)
        }
    }
}

struct SnapWorker<'a>(super::snapshot::SnapshotHandle<'a>, Pid);

impl Worker for SnapWorker<'_> {
    fn run(&mut self, rng: &mut ChaCha8Rng, serial: u32) -> (Invocation, Value, u64) {
        if rng.gen_bool(0.5) {
            let x = ((self.1 as u32) << 20) | (serial + 1);
            self.0.update(x);
            (Invocation::unary("update", Value::Int(x as i64)), Value::Unit, self.0.calls.steps)
        } else {
            let v = self.0.scan();
            (Invocation::nullary("scan"), Value::Vector(v.into_iter().map(int_or_bot).collect()), self.0.calls.steps)
        }
    }
}

fn int_or_bot(x: u32) -> Value {
    if x == 0 {
        Value::Bot
    } else {
        Value::Int(x as i64)
    }
}

fn drive<'o>(cfg: &StressConfig, make: &(dyn Fn(Pid) -> Box<dyn Worker + 'o> + Sync)) -> Vec<Record> {
    let clock = AtomicU64::new(1);
    let plan = cfg.check.then(|| round_plan(cfg.threads, cfg.ops, &mut ChaCha8Rng::seed_from_u64(cfg.seed)));
    let barrier = Barrier::new(cfg.threads);
    let out = Mutex::new(Vec::with_capacity(cfg.threads * cfg.ops));
    std::thread::scope(|s| {
        for pid in 1..=cfg.threads {
            let (clock, plan, barrier, out) = (&clock, &plan, &barrier, &out);
            s.spawn(move || {
                let mut w = make(pid);
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (pid as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                let mut mine = Vec::with_capacity(cfg.ops);
                let mut one = |serial: u32, mine: &mut Vec<Record>| {
                    let inv_tick = clock.fetch_add(1, SeqCst);
                    let (inv, resp, steps) = w.run(&mut rng, serial);
                    let rsp_tick = clock.fetch_add(1, SeqCst);
                    mine.push(Record { pid, inv, resp, inv_tick, rsp_tick, steps });
                };
                match plan {
                    Some(plan) => {
                        let mut serial = 0;
                        for round in plan {
                            for _ in 0..round[pid - 1] {
                                one(serial, &mut mine);
                                serial += 1;
                            }
                            barrier.wait();
                        }
                    }
                    None => {
                        for serial in 0..cfg.ops as u32 {
                            one(serial, &mut mine);
                        }
                    }
                }
                out.lock().expect("no thread panicked while holding the lock").extend(mine);
            });
        }
    });
    let mut records = out.into_inner().expect("no thread panicked while holding the lock");
    records.sort_by_key(|r| r.inv_tick);
    records
}

/// Runs a stress test.
pub fn run_stress(cfg: &StressConfig) -> StressReport {
    let start = Instant::now();
    let records = match cfg.object {
        StressObject::Slaba => {
            let obj = NativeAba::new(cfg.threads, 0).with_yields(cfg.yields);
            drive(cfg, &|pid| Box::new(AbaWorker(obj.handle(pid))))
        }
        StressObject::Snapshot => {
            let obj = NativeSlSnapshot::with_yields(cfg.threads, cfg.yields);
            drive(cfg, &|pid| Box::new(SnapWorker(obj.handle(pid), pid)))
        }
    };
    let elapsed = start.elapsed();
    let check = cfg.check.then(|| match cfg.object {
        StressObject::Slaba => check_windows(&records, &AbaSpec { n: cfg.threads, ..AbaSpec::new() }),
        StressObject::Snapshot => check_windows(&records, &SnapshotSpec::new(cfg.threads)),
    });
    StressReport { records, elapsed, check }
}

/// Splits records (sorted by invocation tick) at quiescent cuts.
pub fn windows(records: &[Record]) -> Vec<&[Record]> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut horizon = 0;
    for (i, r) in records.iter().enumerate() {
        if i > start && r.inv_tick > horizon {
            out.push(&records[start..i]);
            start = i;
        }
        horizon = horizon.max(r.rsp_tick);
    }
    if start < records.len() {
        out.push(&records[start..]);
    }
    out
}

/// Every state some valid linearization of `ops` can end in, from `start`.
fn end_states(ops: &[Record], spec: &dyn TypeSpec, start: &Value, out: &mut HashSet<Value>) {
    let k = ops.len();
    let full = (1u32 << k) - 1;
    let mut seen: HashSet<(u32, Value)> = HashSet::new();
    let mut stack = vec![(0u32, start.clone())];
    while let Some((mask, state)) = stack.pop() {
        if mask == full {
            out.insert(state);
            continue;
        }
        if !seen.insert((mask, state.clone())) {
            continue;
        }
        for i in 0..k {
            if mask >> i & 1 == 1 {
                continue;
            }
            // An operation may go next only if no remaining operation
            // responded before it was invoked.
            let blocked = (0..k).any(|j| j != i && mask >> j & 1 == 0 && ops[j].rsp_tick < ops[i].inv_tick);
            if blocked {
                continue;
            }
            if let Ok((next, resp)) = spec.apply(&state, ops[i].pid, &ops[i].inv) {
                if resp == ops[i].resp {
                    stack.push((mask | 1 << i, next));
                }
            }
        }
    }
}

/// Checks a complete history window by window.
pub fn check_windows(records: &[Record], spec: &dyn TypeSpec) -> WindowCheck {
    let ws = windows(records);
    let mut res = WindowCheck { windows: ws.len(), ..WindowCheck::default() };
    let mut states: BTreeSet<Value> = BTreeSet::from([spec.initial()]);
    for (i, w) in ws.iter().enumerate() {
        if w.len() > WINDOW {
            res.overflowed += 1;
            return res;
        }
        let mut next = HashSet::new();
        for s in &states {
            end_states(w, spec, s, &mut next);
        }
        if next.is_empty() {
            res.violation = Some(i);
            return res;
        }
        states = next.into_iter().collect();
        res.checked += 1;
    }
    res
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(pid: Pid, inv: &str, resp: Value, inv_tick: u64, rsp_tick: u64) -> Record {
        Record { pid, inv: inv.parse().unwrap(), resp, inv_tick, rsp_tick, steps: 0 }
    }

    #[test]
    fn windows_split_at_quiescent_points() {
        let rs = vec![
            rec(1, "DWrite(1)", Value::Unit, 1, 4),
            rec(2, "DRead()", Value::Unit, 2, 3),
            rec(1, "DRead()", Value::Unit, 5, 6),
        ];
        let ws = windows(&rs);
        assert_eq!(ws.iter().map(|w| w.len()).collect::<Vec<_>>(), vec![2, 1]);
    }

    #[test]
    fn a_stale_read_after_a_write_is_a_violation() {
        let spec = AbaSpec { n: 2, ..AbaSpec::new() };
        let ok = vec![
            rec(1, "DWrite(1)", Value::Unit, 1, 4),
            rec(2, "DRead()", Value::pair(Value::Bot, Value::Bool(false)), 2, 3),
            rec(2, "DRead()", Value::pair(Value::Int(1), Value::Bool(true)), 5, 6),
        ];
        assert_eq!(check_windows(&ok, &spec).violation, None);
        let bad = vec![
            rec(1, "DWrite(1)", Value::Unit, 1, 2),
            rec(2, "DRead()", Value::pair(Value::Bot, Value::Bool(false)), 3, 4),
        ];
        assert_eq!(check_windows(&bad, &spec).violation, Some(1));
    }

    #[test]
    fn rounds_fit_in_a_window() {
        let plan = round_plan(4, 100, &mut ChaCha8Rng::seed_from_u64(3));
        assert!(plan.iter().all(|r| r.iter().sum::<usize>() <= WINDOW));
        for t in 0..4 {
            assert_eq!(plan.iter().map(|r| r[t]).sum::<usize>(), 100);
        }
    }

    #[test]
    fn small_checked_runs_have_no_violations() {
        for object in [StressObject::Slaba, StressObject::Snapshot] {
            let cfg = StressConfig { object, threads: 3, ops: 200, seed: 1, check: true, yields: true };
            let r = run_stress(&cfg);
            let c = r.check.unwrap();
            assert_eq!(c.violation, None);
            assert_eq!(c.overflowed, 0);
            assert_eq!(r.records.len(), 600);
        }
        let cfg = StressConfig { object: StressObject::Slaba, threads: 3, ops: 200, seed: 1, check: false, yields: false };
        assert!(run_stress(&cfg).max_steps("DWrite") <= 2);
    }
}
