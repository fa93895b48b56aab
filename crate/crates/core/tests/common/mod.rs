//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use slkit::checkers::pt::{induced_linearization, writers_first, PtAssignment, PtError};
use slkit::checkers::lin::top_history;
use slkit::seqspec::{spec_from_id, SequentialHistory, SpecRef, TypeSpec};
use slkit::transcript::{Event, HOp, History, Transcript, TOP};
use slkit::value::{Invocation, Value};

/// Every built-in specification id exercised by the oracle comparisons.
pub fn builtin_specs() -> Vec<SpecRef> {
    ["snapshot:2", "snapshot:3", "aba", "maxreg:3", "maxreg:unbounded", "counter:3", "register"]
        .iter()
        .map(|id| spec_from_id(id).unwrap())
        .collect()
}

/// A random history over `spec` with at most `max_ops` operations on up to
/// three processes. Operations follow a sequential run of the
/// specification with intervals stretched around their points; some
/// responses are then perturbed and some final operations left pending, so
/// both linearizable and non-linearizable histories appear.
pub fn random_history(spec: &dyn TypeSpec, max_ops: usize, rng: &mut ChaCha8Rng) -> History {
    let n = rng.gen_range(1..=spec.processes().min(3));
    let count = rng.gen_range(1..=max_ops);
    let mut state = spec.initial();
    // (pid, inv, resp, inv_time, rsp_time), times on a doubled grid.
    let mut ops: Vec<(usize, Invocation, Value, usize, usize)> = Vec::new();
    let mut free_at = vec![0usize; n];
    for k in 0..count {
        let pid = rng.gen_range(1..=n);
        let inv = spec.invocations(pid).choose(rng).unwrap().clone();
        let (next, resp) = spec.apply(&state, pid, &inv).unwrap();
        state = next;
        let point = 20 * (k + 1);
        let inv_time = point.saturating_sub(rng.gen_range(0..=30)).max(free_at[pid - 1] + 1);
        let rsp_time = point.max(inv_time) + rng.gen_range(1..=30);
        free_at[pid - 1] = rsp_time;
        ops.push((pid, inv, resp, inv_time, rsp_time));
    }
    // Perturb a response now and then.
    let responses: Vec<Value> = ops.iter().map(|o| o.2.clone()).collect();
    for o in ops.iter_mut() {
        if rng.gen_bool(0.25) {
            o.2 = match rng.gen_range(0..3) {
                0 => responses.choose(rng).unwrap().clone(),
                1 => Value::Int(rng.gen_range(0..3)),
                _ => Value::Bool(rng.gen()),
            };
        }
    }
    // The last operation of a process may stay pending.
    let mut pending = vec![false; ops.len()];
    for pid in 1..=n {
        if let Some(last) = ops.iter().rposition(|o| o.0 == pid) {
            pending[last] = rng.gen_bool(0.3);
        }
    }
    let mut events: Vec<(usize, usize, Event)> = Vec::new();
    for (i, (pid, inv, resp, a, b)) in ops.into_iter().enumerate() {
        let id = (i + 1) as u64;
        events.push((a, 0, Event::inv(TOP, id, pid, inv)));
        if !pending[i] {
            events.push((b, 1, Event::rsp(TOP, id, pid, resp)));
        }
    }
    events.sort_by_key(|(t, kind, _)| (*t, *kind));
    let mut t = Transcript::new(n);
    for (_, _, e) in events {
        t.push(e);
    }
    History::from_transcript(&t)
}

/// Brute-force linearizability: every subset of pending operations, every
/// permutation of the chosen operations, checked against real-time order
/// and the specification.
pub fn brute_force_linearizable(h: &History, spec: &dyn TypeSpec) -> bool {
    let ops = h.ops();
    let complete: Vec<&HOp> = ops.iter().filter(|o| !o.is_pending()).collect();
    let pending: Vec<&HOp> = ops.iter().filter(|o| o.is_pending()).collect();
    for mask in 0..(1u32 << pending.len()) {
        let mut chosen = complete.clone();
        chosen.extend(pending.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, o)| *o));
        if permutations(&chosen).any(|perm| legal(&perm, spec)) {
            return true;
        }
    }
    false
}

fn precedes(a: &HOp, b: &HOp) -> bool {
    a.rsp_time.is_some_and(|r| r < b.inv_time)
}

fn legal(order: &[&HOp], spec: &dyn TypeSpec) -> bool {
    for (i, a) in order.iter().enumerate() {
        if order[i + 1..].iter().any(|b| precedes(b, a)) {
            return false;
        }
    }
    let mut state = spec.initial();
    for o in order {
        let Ok((next, resp)) = spec.apply(&state, o.pid, &o.inv) else { return false };
        if o.resp.as_ref().is_some_and(|r| *r != resp) {
            return false;
        }
        state = next;
    }
    true
}

/// Heap's algorithm over references.
fn permutations<'a>(items: &[&'a HOp]) -> impl Iterator<Item = Vec<&'a HOp>> {
    let mut a = items.to_vec();
    let n = a.len();
    let mut c = vec![0usize; n];
    let mut out = vec![a.clone()];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            out.push(a.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out.into_iter()
}

/// Checks a point rule on every prefix of `t`: each prefix's induced
/// linearization must be valid and must extend the previous prefix's.
pub fn rule_holds_on_every_prefix(
    t: &Transcript,
    spec: &dyn TypeSpec,
    rule: fn(&Transcript) -> Result<PtAssignment, PtError>,
) -> Result<(), String> {
    let mut last: Option<SequentialHistory> = None;
    for k in 0..=t.len() {
        let prefix = t.prefix(k);
        let pt = rule(&prefix).map_err(|e| format!("prefix {k}: {e}"))?;
        let lin = induced_linearization(&top_history(&prefix), &pt, spec, writers_first)
            .map_err(|e| format!("prefix {k}: {e}\n{prefix}"))?;
        if let Some(prev) = &last {
            if !prev.is_prefix_of(&lin) {
                return Err(format!("prefix {k}: linearization {lin} does not extend {prev}\n{prefix}"));
            }
        }
        last = Some(lin);
    }
    Ok(())
}
