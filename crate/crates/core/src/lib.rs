//! Step-machine simulation, exhaustive interleaving search and
//! strong-linearizability checking for shared-memory algorithms built from
//! registers: ABA-detecting registers, max-registers, snapshot objects,
//! counters and the universal construction for simple types.

pub mod seqspec;
pub mod suite;
pub mod transcript;
pub mod value;
pub mod checkers;
pub mod cli;
pub mod families;
pub mod genconstruct;
pub mod machines;
pub mod measure;
pub mod native;
pub mod scheduler;
