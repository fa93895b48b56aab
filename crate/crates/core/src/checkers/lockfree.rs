//! Lock-freedom on a finite state graph.
//!
//! Every infinite schedule of a finite-state machine eventually stays inside
//! a strongly connected component of the reachable state graph. The machine
//! is lock-free exactly when no cycle consists only of steps that complete
//! no operation: such a cycle, repeated forever, is an execution in which
//! processes keep stepping and nobody finishes.

use std::collections::HashMap;

use crate::machines::Machine;
use crate::scheduler::{successors, Budget, Move};

use super::Outcome;

/// Result of a lock-freedom check.
#[derive(Clone, Debug)]
pub struct LockFreeResult {
    pub outcome: Outcome,
    /// Distinct states explored.
    pub nodes: usize,
    /// On failure: a schedule reaching the cycle, then the cycle itself.
    pub stem: Vec<Move>,
    pub cycle: Vec<Move>,
}

struct Graph {
    /// Non-completing edges only.
    edges: Vec<Vec<(usize, Move)>>,
    /// How each state was first reached.
    parent: Vec<Option<(usize, Move)>>,
}

fn explore(m: &Machine, budget: &Budget) -> Option<Graph> {
    let mut index: HashMap<u128, usize> = HashMap::new();
    let mut states = vec![m.clone()];
    let mut g = Graph { edges: vec![Vec::new()], parent: vec![None] };
    index.insert(m.fingerprint(), 0);
    let mut next = 0;
    while next < states.len() {
        let here = states[next].clone();
        for s in successors(&here, false) {
            let fp = s.machine.fingerprint();
            let to = match index.get(&fp) {
                Some(&i) => i,
                None => {
                    if states.len() >= budget.max_nodes {
                        return None;
                    }
                    let i = states.len();
                    index.insert(fp, i);
                    states.push(s.machine);
                    g.edges.push(Vec::new());
                    g.parent.push(Some((next, s.mv)));
                    i
                }
            };
            if s.info.responded.is_none() {
                g.edges[next].push((to, s.mv));
            }
        }
        next += 1;
    }
    Some(g)
}

/// Iterative Tarjan; returns one node of a non-trivial component, if any.
fn cyclic_node(edges: &[Vec<(usize, Move)>]) -> Option<usize> {
    let n = edges.len();
    let mut idx = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on = vec![false; n];
    let mut stack = Vec::new();
    let mut counter = 0;
    for root in 0..n {
        if idx[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        idx[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on[root] = true;
        while let Some(&mut (v, ref mut k)) = call.last_mut() {
            if *k < edges[v].len() {
                let w = edges[v][*k].0;
                *k += 1;
                if w == v {
                    return Some(v);
                }
                if idx[w] == usize::MAX {
                    idx[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on[w] = true;
                    call.push((w, 0));
                } else if on[w] {
                    low[v] = low[v].min(idx[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(u, _)) = call.last() {
                low[u] = low[u].min(low[v]);
            }
            if low[v] == idx[v] {
                let mut size = 0;
                loop {
                    let w = stack.pop().expect("component member");
                    on[w] = false;
                    size += 1;
                    if w == v {
                        break;
                    }
                }
                if size > 1 {
                    return Some(v);
                }
            }
        }
    }
    None
}

/// Breadth-first path along non-completing edges from `from` back to itself.
fn cycle_through(edges: &[Vec<(usize, Move)>], from: usize) -> Vec<Move> {
    let mut prev: HashMap<usize, (usize, Move)> = HashMap::new();
    let mut queue = std::collections::VecDeque::from([from]);
    while let Some(v) = queue.pop_front() {
        for &(w, mv) in &edges[v] {
            if w == from {
                let mut path = vec![mv];
                let mut cur = v;
                while cur != from {
                    let (p, m) = prev[&cur];
                    path.push(m);
                    cur = p;
                }
                path.reverse();
                return path;
            }
            if let std::collections::hash_map::Entry::Vacant(e) = prev.entry(w) {
                e.insert((v, mv));
                queue.push_back(w);
            }
        }
    }
    Vec::new()
}

/// Checks lock-freedom over all schedules; exceeding the node budget is
/// inconclusive.
pub fn check_lockfree(m: &Machine, budget: &Budget) -> LockFreeResult {
    let Some(g) = explore(m, budget) else {
        return LockFreeResult { outcome: Outcome::Inconclusive, nodes: budget.max_nodes, stem: Vec::new(), cycle: Vec::new() };
    };
    let nodes = g.edges.len();
    match cyclic_node(&g.edges) {
        None => LockFreeResult { outcome: Outcome::Pass, nodes, stem: Vec::new(), cycle: Vec::new() },
        Some(v) => {
            let mut stem = Vec::new();
            let mut cur = v;
            while let Some((p, mv)) = g.parent[cur] {
                stem.push(mv);
                cur = p;
            }
            stem.reverse();
            let cycle = cycle_through(&g.edges, v);
            LockFreeResult { outcome: Outcome::Fail, nodes, stem, cycle }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machines::{programs, AlgorithmId};

    #[test]
    fn livelock_machine_is_not_lock_free() {
        let m = Machine::load(AlgorithmId::Livelock, 2, programs(&["run()", "run()"])).unwrap();
        let r = check_lockfree(&m, &Budget::default());
        assert_eq!(r.outcome, Outcome::Fail);
        assert!(!r.cycle.is_empty());
        let mut x = m.clone();
        for mv in r.stem.iter().chain(&r.cycle) {
            assert!(x.step_with(mv.pid, mv.coin, None).unwrap().responded.is_none() || r.stem.contains(mv));
        }
    }

    #[test]
    fn looping_register_is_lock_free() {
        let m = Machine::load(AlgorithmId::SlAba, 2, programs(&["DWrite(1); DRead()", "DRead(); DWrite(2)"])).unwrap();
        assert_eq!(check_lockfree(&m, &Budget::default()).outcome, Outcome::Pass);
    }
}
