//! The looping ABA-detecting register on hardware atomics.
//!
//! `X` packs `(value, writer, seq)` into one word and each announcement
//! packs `(writer, seq)`; zero fields stand for `⊥`. Process-local state
//! (sequence-number history, announced tags, cursor) lives in a
//! [`AbaHandle`] owned by the thread acting as that process.

use std::collections::{BTreeSet, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering::SeqCst};

const VALUE_BITS: u32 = 32;
const WRITER_BITS: u32 = 8;

/// Largest number of processes a packed tag can name.
pub const MAX_PROCESSES: usize = (1 << WRITER_BITS) - 1;

fn pack_x(value: u32, writer: usize, seq: u64) -> u64 {
    (value as u64) | ((writer as u64) << VALUE_BITS) | ((seq + 1) << (VALUE_BITS + WRITER_BITS))
}

fn tag_of_x(x: u64) -> u64 {
    x >> VALUE_BITS
}

fn value_of_x(x: u64) -> u32 {
    x as u32
}

fn writer_of_tag(tag: u64) -> usize {
    (tag & ((1 << WRITER_BITS) - 1)) as usize
}

fn seq_of_tag(tag: u64) -> Option<u64> {
    (tag >> WRITER_BITS).checked_sub(1)
}

/// Shared part of the register.
#[derive(Debug)]
pub struct NativeAba {
    n: usize,
    x: AtomicU64,
    announce: Box<[AtomicU64]>,
    yields: bool,
}

impl NativeAba {
    /// A register for `n` processes whose initial value is `initial`
    /// (`0` stands for `⊥`).
    pub fn new(n: usize, initial: u32) -> Self {
        assert!((1..=MAX_PROCESSES).contains(&n), "process count out of range");
        NativeAba { n, x: AtomicU64::new(initial as u64), announce: (0..n).map(|_| AtomicU64::new(0)).collect(), yields: false }
    }

    /// Yields the processor before every shared access, so that threads
    /// interleave at access granularity even on a single core.
    pub fn with_yields(mut self, yields: bool) -> Self {
        self.yields = yields;
        self
    }

    fn pause(&self) {
        if self.yields {
            std::thread::yield_now();
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Local state for process `pid` (1-based). Each process must use one
    /// handle at a time.
    pub fn handle(&self, pid: usize) -> AbaHandle<'_> {
        assert!((1..=self.n).contains(&pid), "process id out of range");
        AbaHandle {
            reg: self,
            pid,
            used: std::iter::repeat_n(None, self.n + 1).collect(),
            announced: BTreeSet::new(),
            cursor: 0,
            steps: 0,
        }
    }
}

/// Process-local view of a [`NativeAba`].
#[derive(Debug)]
pub struct AbaHandle<'a> {
    reg: &'a NativeAba,
    pid: usize,
    used: VecDeque<Option<u64>>,
    announced: BTreeSet<(usize, u64)>,
    cursor: usize,
    /// Shared accesses made by the most recent operation.
    pub steps: u64,
}

impl AbaHandle<'_> {
    pub fn pid(&self) -> usize {
        self.pid
    }

    fn get_seq(&mut self) -> u64 {
        let c = self.cursor;
        self.reg.pause();
        let seen = self.reg.announce[c].load(SeqCst);
        self.steps += 1;
        self.announced.retain(|&(k, _)| k != c);
        if writer_of_tag(seen) == self.pid {
            if let Some(s) = seq_of_tag(seen) {
                self.announced.insert((c, s));
            }
        }
        self.cursor = (c + 1) % self.reg.n;
        let s = (0..=2 * self.reg.n as u64 + 1)
            .find(|s| !self.announced.iter().any(|&(_, a)| a == *s) && !self.used.contains(&Some(*s)))
            .expect("the sequence pool always has a free number");
        self.used.push_back(Some(s));
        self.used.pop_front();
        s
    }

    /// Writes `value` (nonzero).
    pub fn dwrite(&mut self, value: u32) {
        self.steps = 0;
        let s = self.get_seq();
        self.reg.pause();
        self.reg.x.store(pack_x(value, self.pid, s), SeqCst);
        self.steps += 1;
    }

    /// Reads the value and whether some write happened since this process's
    /// previous read.
    pub fn dread(&mut self) -> (u32, bool) {
        self.steps = 0;
        let me = &self.reg.announce[self.pid - 1];
        let mut changed = false;
        loop {
            self.reg.pause();
            let first = self.reg.x.load(SeqCst);
            self.reg.pause();
            let prev = me.load(SeqCst);
            self.reg.pause();
            me.store(tag_of_x(first), SeqCst);
            self.reg.pause();
            let second = self.reg.x.load(SeqCst);
            self.steps += 4;
            let same_tag = tag_of_x(first) == prev;
            let quiet = first == second;
            changed |= !same_tag || !quiet;
            if same_tag && quiet {
                return (value_of_x(second), changed);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solo_operations_follow_the_sequential_type() {
        let r = NativeAba::new(2, 0);
        let mut w = r.handle(1);
        let mut q = r.handle(2);
        assert_eq!(q.dread(), (0, false));
        assert_eq!(q.steps, 4);
        w.dwrite(5);
        assert_eq!(w.steps, 2);
        assert_eq!(q.dread(), (5, true));
        assert_eq!(q.steps, 8);
        assert_eq!(q.dread(), (5, false));
        w.dwrite(5);
        assert_eq!(q.dread(), (5, true));
    }

    #[test]
    fn consecutive_writes_choose_different_numbers() {
        let r = NativeAba::new(3, 0);
        let mut w = r.handle(1);
        let mut last = None;
        for _ in 0..50 {
            w.dwrite(1);
            let s = seq_of_tag(tag_of_x(r.x.load(SeqCst)));
            assert_ne!(s, last);
            last = s;
        }
    }
}
