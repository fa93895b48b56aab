//! Lock-free implementations on hardware atomics and a threaded stress
//! harness.

pub mod aba;
pub mod arena;
pub mod snapshot;
pub mod stress;

pub use aba::{AbaHandle, NativeAba};
pub use snapshot::{NativeDcSnapshot, NativeSlSnapshot, SnapshotHandle, SubCalls};
pub use stress::{check_windows, run_stress, StressConfig, StressObject, StressReport, WindowCheck};
