//! Snapshot objects on hardware atomics: a double-collect snapshot and the
//! composed snapshot that publishes views through an ABA-detecting register.

use std::sync::atomic::{AtomicU64, Ordering::SeqCst};

use super::aba::{AbaHandle, NativeAba};
use super::arena::ViewArena;

/// Lock-free snapshot by clean double collects; each cell packs
/// `(value, seq)`.
#[derive(Debug)]
pub struct NativeDcSnapshot {
    cells: Box<[AtomicU64]>,
    yields: bool,
}

impl NativeDcSnapshot {
    pub fn new(n: usize) -> Self {
        NativeDcSnapshot { cells: (0..n).map(|_| AtomicU64::new(0)).collect(), yields: false }
    }

    /// Yields the processor before every shared access.
    pub fn with_yields(mut self, yields: bool) -> Self {
        self.yields = yields;
        self
    }

    fn pause(&self) {
        if self.yields {
            std::thread::yield_now();
        }
    }

    /// Writes component `pid` (1-based). Only process `pid` may call this.
    pub fn update(&self, pid: usize, value: u32) -> u64 {
        let cell = &self.cells[pid - 1];
        // The component is single-writer, so its sequence number is known
        // locally; reading it back is not a shared step of the algorithm.
        let seq = (cell.load(SeqCst) >> 32) + 1;
        self.pause();
        cell.store((seq << 32) | value as u64, SeqCst);
        1
    }

    /// Returns the components and the number of shared accesses made.
    pub fn scan(&self) -> (Vec<u32>, u64) {
        let mut steps = 0;
        let collect = |steps: &mut u64| -> Vec<u64> {
            *steps += self.cells.len() as u64;
            self.cells
                .iter()
                .map(|c| {
                    self.pause();
                    c.load(SeqCst)
                })
                .collect()
        };
        let mut prev = collect(&mut steps);
        loop {
            let cur = collect(&mut steps);
            if cur == prev {
                return (cur.iter().map(|&c| c as u32).collect(), steps);
            }
            prev = cur;
        }
    }
}

/// Shared part of the composed snapshot.
#[derive(Debug)]
pub struct NativeSlSnapshot {
    s: NativeDcSnapshot,
    r: NativeAba,
    views: ViewArena,
}

/// Calls on the sub-objects made by the most recent operation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SubCalls {
    pub s_update: u64,
    pub s_scan: u64,
    pub r_dread: u64,
    pub r_dwrite: u64,
    /// Shared accesses in total.
    pub steps: u64,
}

impl NativeSlSnapshot {
    pub fn new(n: usize) -> Self {
        Self::with_yields(n, false)
    }

    /// A snapshot whose sub-objects yield before every shared access.
    pub fn with_yields(n: usize, yields: bool) -> Self {
        NativeSlSnapshot {
            s: NativeDcSnapshot::new(n).with_yields(yields),
            r: NativeAba::new(n, 0).with_yields(yields),
            views: ViewArena::new(vec![0; n]),
        }
    }

    pub fn handle(&self, pid: usize) -> SnapshotHandle<'_> {
        SnapshotHandle { obj: self, pid, r: self.r.handle(pid), calls: SubCalls::default() }
    }
}

/// Process-local view of a [`NativeSlSnapshot`].
#[derive(Debug)]
pub struct SnapshotHandle<'a> {
    obj: &'a NativeSlSnapshot,
    pid: usize,
    r: AbaHandle<'a>,
    pub calls: SubCalls,
}

impl SnapshotHandle<'_> {
    fn s_scan(&mut self) -> Vec<u32> {
        let (v, steps) = self.obj.s.scan();
        self.calls.s_scan += 1;
        self.calls.steps += steps;
        v
    }

    fn r_dread(&mut self) -> (u32, bool) {
        let out = self.r.dread();
        self.calls.r_dread += 1;
        self.calls.steps += self.r.steps;
        out
    }

    fn r_dwrite(&mut self, view: Vec<u32>) {
        let i = self.obj.views.push(view);
        self.r.dwrite(i);
        self.calls.r_dwrite += 1;
        self.calls.steps += self.r.steps;
    }

    /// Sets this process's component to `value` (nonzero).
    pub fn update(&mut self, value: u32) {
        self.calls = SubCalls::default();
        self.calls.steps += self.obj.s.update(self.pid, value);
        self.calls.s_update += 1;
        let view = self.s_scan();
        self.r_dwrite(view);
    }

    /// Returns all components; `0` is `⊥`.
    pub fn scan(&mut self) -> Vec<u32> {
        self.calls = SubCalls::default();
        loop {
            let (first, _) = self.r_dread();
            let view = self.s_scan();
            let (second, written) = self.r_dread();
            let views = &self.obj.views;
            if !(views.get(first) == view.as_slice() && view.as_slice() == views.get(second)) {
                self.r_dwrite(view);
            } else if !written {
                return view;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solo_operations_follow_the_sequential_type() {
        let s = NativeSlSnapshot::new(2);
        let mut a = s.handle(1);
        let mut b = s.handle(2);
        assert_eq!(b.scan(), vec![0, 0]);
        a.update(7);
        assert_eq!((a.calls.s_update, a.calls.s_scan, a.calls.r_dwrite), (1, 1, 1));
        assert_eq!(b.scan(), vec![7, 0]);
        b.update(3);
        assert_eq!(a.scan(), vec![7, 3]);
    }

    #[test]
    fn double_collect_returns_the_latest_values() {
        let s = NativeDcSnapshot::new(3);
        s.update(2, 9);
        s.update(2, 4);
        assert_eq!(s.scan().0, vec![0, 4, 0]);
    }
}
