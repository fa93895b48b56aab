//! Exhaustive program suites: every combination of fixed-length programs
//! over a small per-process alphabet, each checked by solving the
//! strong-linearizability game on all of its schedules.
//!
//! Fixed-length programs suffice for shorter ones too: a process that stops
//! after its first operation behaves like one whose second operation is
//! never scheduled, and a strong linearization function of a tree restricts
//! to every prefix-closed subset of it.

use std::sync::Arc;

use rayon::prelude::*;

use crate::checkers::strong::{check_strong_machine, GenTracker, ResponseTracker, SnapshotTracker, Tracker};
use crate::checkers::Outcome;
use crate::machines::{AlgorithmId, LoadOptions, Machine, MachineError, Target};
use crate::scheduler::Budget;
use crate::value::{Invocation, Pid, Value};

/// How the linearizer is searched for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Any linearization function.
    Search,
    /// The algorithm's own linearization-point rule, applied incrementally.
    Rule,
}

/// Per-process invocation alphabets used for `target` with `n` processes.
/// Two-process suites use the whole small domain; three-process suites use
/// a smaller alphabet that still lets values collide.
pub fn alphabet(target: &Target, n: usize) -> Vec<Vec<Invocation>> {
    let int = |x: i64| Value::Int(x);
    let un = |name: &str, x: i64| Invocation::unary(name, int(x));
    let nul = Invocation::nullary;
    let per_process = |f: &dyn Fn(Pid) -> Vec<Invocation>| (1..=n).map(f).collect();
    let name = match target {
        Target::Builtin(AlgorithmId::SlAba) | Target::Builtin(AlgorithmId::LinAba) => "aba",
        Target::Builtin(AlgorithmId::BoundedMaxReg) | Target::Builtin(AlgorithmId::UnboundedMaxReg) => "maxreg",
        Target::Builtin(AlgorithmId::LinCounter) | Target::Builtin(AlgorithmId::AtomicCounter) => "counter",
        Target::Builtin(_) => "snapshot",
        Target::Gen(ty) => ty.name.as_str(),
    };
    let small = n >= 3;
    match name {
        "aba" if small => per_process(&|_| vec![un("DWrite", 1), nul("DRead")]),
        "aba" => per_process(&|_| vec![un("DWrite", 1), un("DWrite", 2), nul("DRead")]),
        "maxreg" if small => per_process(&|_| vec![un("maxWrite", 1), un("maxWrite", 2), nul("maxRead")]),
        "maxreg" => per_process(&|_| vec![un("maxWrite", 1), un("maxWrite", 2), un("maxWrite", 3), nul("maxRead")]),
        "counter" => per_process(&|_| vec![nul("inc"), nul("read")]),
        "snapshot" if small => per_process(&|_| vec![un("update", 1), nul("scan")]),
        "snapshot" => per_process(&|_| vec![un("update", 1), un("update", 2), nul("scan")]),
        _ => match target {
            Target::Gen(ty) => per_process(&|_| ty.invocations.clone()),
            Target::Builtin(_) => unreachable!("every built-in target is named above"),
        },
    }
}

/// Every assignment of a length-`len` program over its alphabet to each
/// process.
pub fn program_sets(alphabets: &[Vec<Invocation>], len: usize) -> Vec<Vec<Vec<Invocation>>> {
    let per_process: Vec<Vec<Vec<Invocation>>> = alphabets
        .iter()
        .map(|a| {
            let mut progs = vec![Vec::new()];
            for _ in 0..len {
                progs = progs
                    .into_iter()
                    .flat_map(|p: Vec<Invocation>| {
                        a.iter().map(move |inv| {
                            let mut q = p.clone();
                            q.push(inv.clone());
                            q
                        })
                    })
                    .collect();
            }
            progs
        })
        .collect();
    let mut sets = vec![Vec::new()];
    for choices in per_process {
        sets = sets
            .into_iter()
            .flat_map(|s: Vec<Vec<Invocation>>| {
                choices.iter().map(move |p| {
                    let mut t = s.clone();
                    t.push(p.clone());
                    t
                })
            })
            .collect();
    }
    sets
}

/// The incremental linearization-point rule of a target, if it has one.
pub fn rule_for(target: &Target) -> Option<Box<dyn Tracker>> {
    match target {
        Target::Builtin(AlgorithmId::SlAba | AlgorithmId::BoundedMaxReg | AlgorithmId::UnboundedMaxReg) => {
            Some(Box::new(ResponseTracker))
        }
        Target::Builtin(AlgorithmId::SlSnapshot | AlgorithmId::SlSnapshotSeq) => Some(Box::new(SnapshotTracker)),
        Target::Gen(ty) => Some(Box::new(GenTracker { ty: ty.clone() })),
        Target::Builtin(_) => None,
    }
}

pub fn load(target: &Target, programs: Vec<Vec<Invocation>>, opts: &LoadOptions) -> Result<Machine, MachineError> {
    let n = programs.len();
    match target {
        Target::Builtin(alg) => Machine::load_with(*alg, n, programs, opts),
        Target::Gen(ty) => Machine::load_gen(Arc::clone(ty), n, programs, opts),
    }
}

/// Result of one program set.
#[derive(Clone, Debug)]
pub struct SetResult {
    pub programs: Vec<Vec<Invocation>>,
    pub outcome: Outcome,
    pub nodes: usize,
    pub truncated: bool,
}

/// Aggregate over a suite.
#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub sets: Vec<SetResult>,
}

impl SuiteReport {
    pub fn nodes(&self) -> usize {
        self.sets.iter().map(|s| s.nodes).sum()
    }

    pub fn count(&self, o: Outcome) -> usize {
        self.sets.iter().filter(|s| s.outcome == o).count()
    }

    pub fn truncated(&self) -> bool {
        self.sets.iter().any(|s| s.truncated)
    }

    /// `Fail` if any set fails, else `Inconclusive` if any set is, else `Pass`.
    pub fn outcome(&self) -> Outcome {
        if self.count(Outcome::Fail) > 0 {
            Outcome::Fail
        } else if self.count(Outcome::Inconclusive) > 0 || self.truncated() {
            Outcome::Inconclusive
        } else {
            Outcome::Pass
        }
    }
}

/// Checks every program set of length `len` for `n` processes.
pub fn run_suite(target: &Target, n: usize, len: usize, mode: Mode, budget: &Budget, opts: &LoadOptions) -> Result<SuiteReport, MachineError> {
    let sets = program_sets(&alphabet(target, n), len);
    let rule = match mode {
        Mode::Rule => Some(rule_for(target).ok_or_else(|| MachineError::Config("this algorithm has no linearization-point rule".into()))?),
        Mode::Search => None,
    };
    let machines = sets.into_iter().map(|p| load(target, p.clone(), opts).map(|m| (p, m))).collect::<Result<Vec<_>, _>>()?;
    let results = machines
        .into_par_iter()
        .map(|(programs, m)| {
            let r = check_strong_machine(&m, budget, rule.as_deref());
            SetResult { programs, outcome: r.outcome, nodes: r.nodes, truncated: r.truncated }
        })
        .collect();
    Ok(SuiteReport { sets: results })
}
