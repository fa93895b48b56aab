//! Append-only storage for snapshot views, addressed by 32-bit indices so
//! a view fits in the value field of a packed register word. Indices are
//! never reused, so a reader holding an old index still finds its view.

use std::sync::atomic::{AtomicUsize, Ordering::SeqCst};
use std::sync::OnceLock;

const CHUNK_BITS: u32 = 12;
const CHUNK: usize = 1 << CHUNK_BITS;
const CHUNKS: usize = 1 << 16;

type Chunk = Box<[OnceLock<Box<[u32]>>]>;

#[derive(Debug)]
pub struct ViewArena {
    next: AtomicUsize,
    chunks: Box<[OnceLock<Chunk>]>,
}

impl ViewArena {
    /// An arena whose index 0 holds `initial`.
    pub fn new(initial: Vec<u32>) -> Self {
        let a = ViewArena { next: AtomicUsize::new(0), chunks: (0..CHUNKS).map(|_| OnceLock::new()).collect() };
        a.push(initial);
        a
    }

    fn slot(&self, i: usize) -> &OnceLock<Box<[u32]>> {
        let chunk = self.chunks[i >> CHUNK_BITS].get_or_init(|| (0..CHUNK).map(|_| OnceLock::new()).collect());
        &chunk[i & (CHUNK - 1)]
    }

    /// Stores a view and returns its index.
    pub fn push(&self, view: Vec<u32>) -> u32 {
        let i = self.next.fetch_add(1, SeqCst);
        assert!(i < CHUNK * CHUNKS, "view arena is full");
        self.slot(i).set(view.into_boxed_slice()).expect("fresh slot");
        u32::try_from(i).expect("index fits in 32 bits")
    }

    /// The view stored at `i`.
    pub fn get(&self, i: u32) -> &[u32] {
        self.slot(i as usize).get().expect("index was published by push")
    }

    pub fn len(&self) -> usize {
        self.next.load(SeqCst)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
