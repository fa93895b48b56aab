//! Step-complexity measurements on simulated runs.
//!
//! Random workloads report totals for fitting constants of the form
//! `steps ≤ C · bound`. Exhaustive measurements walk every schedule of a
//! bounded program set while carrying a per-process counter alongside the
//! machine state, so a maximum over all schedules is exact.

use std::collections::{BTreeMap, HashSet};
use std::hash::Hash;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::machines::{snapshot::seq_sum, AlgorithmId, Machine, MachineError, Obj};
use crate::scheduler::{successors, Budget};
use crate::transcript::{Event, Payload};
use crate::value::{Invocation, ObjId, Pid, Value};

/// Deals `counts[k]` copies of `kinds[k]` to `n` processes at random and
/// shuffles each process's program.
pub fn random_programs(n: usize, kinds: &[(Invocation, usize)], rng: &mut ChaCha8Rng) -> Vec<Vec<Invocation>> {
    let mut progs = vec![Vec::new(); n];
    for (inv, count) in kinds {
        for _ in 0..*count {
            progs[rng.gen_range(0..n)].push(inv.clone());
        }
    }
    for p in &mut progs {
        for i in (1..p.len()).rev() {
            p.swap(i, rng.gen_range(0..=i));
        }
    }
    progs
}

/// Runs `m` to completion under a uniformly random scheduler, calling
/// `observe` after every step with the process, the step's events and
/// whether the step performed a shared access.
fn run_uniform(
    m: &mut Machine,
    rng: &mut ChaCha8Rng,
    mut observe: impl FnMut(Pid, &crate::machines::StepInfo, &[Event]),
) -> Result<(), MachineError> {
    let mut events = Vec::new();
    loop {
        let en = m.enabled_pids();
        if en.is_empty() {
            return Ok(());
        }
        let pid = en[rng.gen_range(0..en.len())];
        let coin = m.next_is_flip(pid).then(|| rng.gen_range(0..=1));
        events.clear();
        let info = m.step_with(pid, coin, Some(&mut events))?;
        observe(pid, &info, &events);
    }
}

/// Totals of a random run of the looping ABA-detecting register.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DreadRun {
    pub n: usize,
    pub reads: usize,
    pub writes: usize,
    /// Shared accesses made by all `DRead` operations.
    pub read_steps: u64,
    /// Largest number of shared accesses made by one `DWrite`.
    pub max_write_steps: u64,
}

impl DreadRun {
    /// `min(r, n)·w + r`.
    pub fn bound(&self) -> f64 {
        (self.reads.min(self.n) * self.writes + self.reads) as f64
    }

    pub fn ratio(&self) -> f64 {
        self.read_steps as f64 / self.bound()
    }
}

/// Runs `reads` `DRead`s and `writes` `DWrite`s spread over `n` processes.
pub fn dread_workload(n: usize, reads: usize, writes: usize, seed: u64) -> Result<DreadRun, MachineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kinds = [(Invocation::nullary("DRead"), reads), (Invocation::unary("DWrite", Value::Int(1)), writes)];
    let progs = random_programs(n, &kinds, &mut rng);
    let mut m = Machine::load(AlgorithmId::SlAba, n, progs)?;
    let mut current: Vec<Option<(bool, u64)>> = vec![None; n];
    let mut run = DreadRun { n, reads, writes, read_steps: 0, max_write_steps: 0 };
    run_uniform(&mut m, &mut rng, |pid, info, _| {
        let slot = &mut current[pid - 1];
        if let Some((_, inv)) = &info.invoked {
            *slot = Some((inv.is("DRead"), 0));
        }
        if let Some((is_read, steps)) = slot {
            *steps += info.accesses as u64;
            if *is_read {
                run.read_steps += info.accesses as u64;
            }
            if info.responded.is_some() {
                if !*is_read {
                    run.max_write_steps = run.max_write_steps.max(*steps);
                }
                *slot = None;
            }
        }
    })?;
    Ok(run)
}

/// Sub-object calls of a random run of the composed snapshot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SnapshotRun {
    pub n: usize,
    pub scans: usize,
    pub updates: usize,
    /// Calls on `S` and `R` made inside scans.
    pub scan_calls: u64,
    /// Per update: `(S.update, S.scan, R.DWrite)` calls, and any other call.
    pub update_calls: Vec<(u64, u64, u64, u64)>,
}

impl SnapshotRun {
    /// `s + n³·u`.
    pub fn bound(&self) -> f64 {
        (self.scans + self.n.pow(3) * self.updates) as f64
    }

    pub fn ratio(&self) -> f64 {
        self.scan_calls as f64 / self.bound()
    }

    /// Whether every update made exactly one call of each kind and no other.
    pub fn updates_exact(&self) -> bool {
        self.update_calls.iter().all(|&c| c == (1, 1, 1, 0))
    }
}

fn sub_ids(m: &Machine) -> (ObjId, ObjId) {
    match m.object() {
        Obj::SlSnap(s) => (s.s().id(), s.r().id()),
        _ => panic!("not a composed snapshot"),
    }
}

/// Runs `scans` scans and `updates` updates spread over `n` processes on
/// `alg` (one of the composed snapshots).
pub fn snapshot_workload(alg: AlgorithmId, n: usize, scans: usize, updates: usize, seed: u64) -> Result<SnapshotRun, MachineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut progs = random_programs(n, &[(Invocation::nullary("scan"), scans), (Invocation::nullary("update"), updates)], &mut rng);
    let mut next = 0;
    for p in &mut progs {
        for inv in p.iter_mut().filter(|i| i.is("update")) {
            next += 1;
            *inv = Invocation::unary("update", Value::Int(next));
        }
    }
    let mut m = Machine::load(alg, n, progs)?;
    let (s_id, r_id) = sub_ids(&m);
    let mut current: Vec<Option<(bool, [u64; 4])>> = vec![None; n];
    let mut run = SnapshotRun { n, scans, updates, scan_calls: 0, update_calls: Vec::new() };
    run_uniform(&mut m, &mut rng, |pid, info, events| {
        let slot = &mut current[pid - 1];
        if let Some((_, inv)) = &info.invoked {
            *slot = Some((inv.is("scan"), [0; 4]));
        }
        let Some((is_scan, counts)) = slot else { return };
        for e in events {
            let Payload::Inv(inv) = &e.payload else { continue };
            if e.obj != s_id && e.obj != r_id {
                continue;
            }
            if *is_scan {
                run.scan_calls += 1;
            } else if e.obj == s_id && inv.is("update") {
                counts[0] += 1;
            } else if e.obj == s_id && inv.is("scan") {
                counts[1] += 1;
            } else if e.obj == r_id && inv.is("DWrite") {
                counts[2] += 1;
            } else {
                counts[3] += 1;
            }
        }
        if info.responded.is_some() {
            if !*is_scan {
                run.update_calls.push((counts[0], counts[1], counts[2], counts[3]));
            }
            *slot = None;
        }
    })?;
    Ok(run)
}

/// Walks every schedule of `m` within `budget`, carrying one annotation per
/// process that `step` updates after each step; returns the largest value
/// `score` assigns to any reached annotation, or `None` when the node
/// budget ran out.
pub fn exhaustive_max<A: Clone + Hash + Eq>(
    m: &Machine,
    budget: &Budget,
    init: A,
    step: impl Fn(&A, Pid, &crate::machines::StepInfo, &[Event]) -> A,
    score: impl Fn(&A) -> u64,
) -> Option<u64> {
    let mut seen: HashSet<(u128, Vec<A>)> = HashSet::new();
    let start = vec![init; m.n];
    let mut best = start.iter().map(&score).max().unwrap_or(0);
    let mut stack = vec![(m.clone(), start, 0usize)];
    while let Some((m, ann, depth)) = stack.pop() {
        if !seen.insert((m.fingerprint(), ann.clone())) {
            continue;
        }
        if seen.len() > budget.max_nodes {
            return None;
        }
        if depth >= budget.max_steps {
            continue;
        }
        for s in successors(&m, true) {
            let mut next = ann.clone();
            let k = s.mv.pid - 1;
            next[k] = step(&ann[k], s.mv.pid, &s.info, &s.events);
            best = best.max(score(&next[k]));
            stack.push((s.machine, next, depth + 1));
        }
    }
    Some(best)
}

/// Largest number of shared accesses of one `DWrite` over all schedules.
pub fn max_dwrite_steps(m: &Machine, budget: &Budget) -> Option<u64> {
    exhaustive_max(
        m,
        budget,
        None::<u64>,
        |a, _, info, _| {
            let in_write = match &info.invoked {
                Some((_, inv)) => inv.is("DWrite").then_some(0),
                None => *a,
            };
            in_write.map(|s| s + info.accesses as u64)
        },
        |a| a.unwrap_or(0),
    )
}

/// Largest number of `S.scan` calls with one common sequence-number sum
/// inside a single scan of the sequence-numbered composed snapshot, over
/// all schedules.
pub fn max_equal_sum_scans(m: &Machine, budget: &Budget) -> Option<u64> {
    let (s_id, _) = sub_ids(m);
    exhaustive_max(
        m,
        budget,
        None::<BTreeMap<i64, u64>>,
        move |a, _, info, events| {
            let mut cur = match &info.invoked {
                Some((_, inv)) if inv.is("scan") => Some(BTreeMap::new()),
                Some(_) => None,
                None => a.clone(),
            };
            if let Some(sums) = &mut cur {
                // The top-level scan's own events are on the top object; S's
                // scan responses are recognised by their object id.
                let mut open = None;
                for e in events {
                    match &e.payload {
                        Payload::Inv(inv) if e.obj == s_id && inv.is("scan") => open = Some(e.op),
                        Payload::Rsp(v) if e.obj == s_id && open == Some(e.op) => *sums.entry(seq_sum(v)).or_insert(0) += 1,
                        _ => {}
                    }
                }
            }
            cur
        },
        |a| a.as_ref().and_then(|m| m.values().max().copied()).unwrap_or(0),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machines::programs;

    #[test]
    fn solo_dread_costs_match_a_direct_count() {
        let r = dread_workload(1, 3, 0, 1).unwrap();
        assert_eq!(r.read_steps, 12);
        let r = dread_workload(1, 0, 5, 1).unwrap();
        assert_eq!(r.max_write_steps, 2);
    }

    #[test]
    fn updates_make_one_call_of_each_kind() {
        let r = snapshot_workload(AlgorithmId::SlSnapshot, 3, 20, 20, 4).unwrap();
        assert_eq!(r.update_calls.len(), 20);
        assert!(r.updates_exact());
        assert!(r.scan_calls >= 60);
    }

    #[test]
    fn enumerated_writes_take_two_steps() {
        let m = Machine::load(AlgorithmId::SlAba, 2, programs(&["DWrite(1); DWrite(2)", "DRead(); DWrite(1)"])).unwrap();
        assert_eq!(max_dwrite_steps(&m, &Budget::default()), Some(2));
    }

    #[test]
    fn a_solo_scan_sees_one_sum_twice_at_most() {
        let m = Machine::load(AlgorithmId::SlSnapshotSeq, 2, programs(&["scan()", ""])).unwrap();
        assert_eq!(max_equal_sum_scans(&m, &Budget::default()), Some(1));
        let m = Machine::load(AlgorithmId::SlSnapshotSeq, 2, programs(&["update(1); scan()", "update(2)"])).unwrap();
        let k = max_equal_sum_scans(&m, &Budget::default()).unwrap();
        assert!((1..=9).contains(&k), "{k}");
    }
}
