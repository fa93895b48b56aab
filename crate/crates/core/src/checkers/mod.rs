//! Correctness checkers: linearizability, strong linearizability,
//! linearization-point validation and lock-freedom.

pub mod lin;
pub mod lockfree;
pub mod pt;
pub mod strong;

use std::fmt;

pub use lin::{check_linearizable, LinError, LinWitness};
pub use lockfree::{check_lockfree, LockFreeResult};
pub use strong::{check_strong_linearizable, check_strong_machine, Counterexample, StrongResult, Tracker};

/// Outcome of a decision procedure.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Pass => "pass",
            Outcome::Fail => "fail",
            Outcome::Inconclusive => "inconclusive",
        })
    }
}

/// Property a verdict is about.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Property {
    Lin,
    StrongLin,
    LockFree,
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Property::Lin => "lin",
            Property::StrongLin => "strong-lin",
            Property::LockFree => "lock-free",
        })
    }
}

/// The one-line summary printed by the command-line tool.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub property: Property,
    pub result: Outcome,
    pub nodes: usize,
    pub counterexample: Option<String>,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "verdict={} result={} nodes={} counterexample={}",
            self.property,
            self.result,
            self.nodes,
            self.counterexample.as_deref().unwrap_or("-")
        )
    }
}
