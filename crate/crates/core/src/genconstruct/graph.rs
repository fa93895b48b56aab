//! Node graphs, precedence graphs and linearization graphs.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::genconstruct::{GenError, SimpleType};
use crate::value::{Invocation, Pid, Value};

/// A published operation record: its invocation, the response it computed
/// and the node pointers it saw in `root`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Node {
    pub id: u64,
    pub owner: Pid,
    pub inv: Invocation,
    pub resp: Value,
    pub preceding: Vec<Option<u64>>,
}

/// Reads a `root` view: one optional node pointer per process.
pub fn view_pointers(view: &Value) -> Vec<Option<u64>> {
    view.as_vector()
        .expect("root holds a vector")
        .iter()
        .map(|v| v.as_int().map(|i| i as u64))
        .collect()
}

/// Nodes reachable from a view, with an edge `(a, b)` when `b` points at `a`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NodeGraph {
    pub nodes: BTreeSet<u64>,
    pub edges: BTreeSet<(u64, u64)>,
}

/// Breadth-first search from the view over `preceding` pointers.
pub fn nodegraph(view: &[Option<u64>], arena: &BTreeMap<u64, Node>) -> Result<NodeGraph, GenError> {
    let mut g = NodeGraph::default();
    let mut queue: VecDeque<u64> = view.iter().flatten().copied().collect();
    while let Some(id) = queue.pop_front() {
        if !g.nodes.insert(id) {
            continue;
        }
        let node = arena.get(&id).ok_or(GenError::Dangling(id))?;
        for &prev in node.preceding.iter().flatten() {
            g.edges.insert((prev, id));
            queue.push_back(prev);
        }
    }
    Ok(g)
}

/// An operation vertex of a precedence or linearization graph.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GraphOp {
    pub pid: Pid,
    pub inv: Invocation,
    pub resp: Value,
}

/// Operations keyed by operation id, with directed edges between ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GenGraph {
    pub ops: BTreeMap<u64, GraphOp>,
    pub edges: BTreeSet<(u64, u64)>,
}

impl GenGraph {
    /// Whether a path of length at least one leads from `from` to `to`.
    pub fn has_path(&self, from: u64, to: u64) -> bool {
        let mut seen = BTreeSet::new();
        let mut stack = vec![from];
        while let Some(u) = stack.pop() {
            for &(_, v) in self.edges.range((u, 0)..=(u, u64::MAX)) {
                if v == to {
                    return true;
                }
                if seen.insert(v) {
                    stack.push(v);
                }
            }
        }
        false
    }

    pub fn is_acyclic(&self) -> bool {
        topological_order(self).len() == self.ops.len()
    }
}

/// Topological order that always takes the smallest available id. Returns
/// fewer ids than vertices when the graph has a cycle.
pub fn topological_order(g: &GenGraph) -> Vec<u64> {
    let mut indegree: BTreeMap<u64, usize> = g.ops.keys().map(|&k| (k, 0)).collect();
    for &(_, b) in &g.edges {
        *indegree.get_mut(&b).expect("edge endpoint is a vertex") += 1;
    }
    let mut ready: BTreeSet<u64> = indegree.iter().filter(|(_, &d)| d == 0).map(|(&k, _)| k).collect();
    let mut out = Vec::with_capacity(g.ops.len());
    while let Some(u) = ready.pop_first() {
        out.push(u);
        for &(_, v) in g.edges.range((u, 0)..=(u, u64::MAX)) {
            let d = indegree.get_mut(&v).expect("edge endpoint is a vertex");
            *d -= 1;
            if *d == 0 {
                ready.insert(v);
            }
        }
    }
    out
}

/// The precedence graph of a view: the node graph with every node replaced
/// by its operation, numbered `id[p]·n + (p − 1)` where `id[p]` counts the
/// nodes of `p` in topological order starting at `1`.
pub fn precgraph(view: &[Option<u64>], arena: &BTreeMap<u64, Node>, n: usize) -> Result<GenGraph, GenError> {
    let ng = nodegraph(view, arena)?;
    let plain = GenGraph {
        ops: ng
            .nodes
            .iter()
            .map(|&id| {
                let node = &arena[&id];
                (id, GraphOp { pid: node.owner, inv: node.inv.clone(), resp: node.resp.clone() })
            })
            .collect(),
        edges: ng.edges.clone(),
    };
    let mut counter = vec![1u64; n + 1];
    let mut opid: BTreeMap<u64, u64> = BTreeMap::new();
    for node in topological_order(&plain) {
        let p = arena[&node].owner;
        opid.insert(node, counter[p] * n as u64 + (p as u64 - 1));
        counter[p] += 1;
    }
    Ok(GenGraph {
        ops: plain.ops.into_iter().map(|(id, op)| (opid[&id], op)).collect(),
        edges: plain.edges.iter().map(|(a, b)| (opid[a], opid[b])).collect(),
    })
}

/// Adds dominance edges to a precedence graph. Vertices are visited in the
/// smallest-id topological order; for every pair `i < j` in that order an
/// edge from the dominated to the dominating operation is added unless it
/// would close a cycle.
pub fn lingraph(g: &GenGraph, ty: &SimpleType) -> GenGraph {
    let order = topological_order(g);
    let mut l = g.clone();
    for (i, &a) in order.iter().enumerate() {
        for &b in &order[i + 1..] {
            let (oa, ob) = (&l.ops[&a], &l.ops[&b]);
            if oa.pid == ob.pid {
                continue;
            }
            if ty.dominates(&oa.inv, oa.pid, &ob.inv, ob.pid) {
                if !l.has_path(a, b) {
                    l.edges.insert((b, a));
                }
            } else if ty.dominates(&ob.inv, ob.pid, &oa.inv, oa.pid) && !l.has_path(b, a) {
                l.edges.insert((a, b));
            }
        }
    }
    l
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genconstruct::bundled_type;

    fn node(id: u64, owner: Pid, inv: &str, preceding: Vec<Option<u64>>) -> Node {
        Node { id, owner, inv: inv.parse().unwrap(), resp: Value::Unit, preceding }
    }

    #[test]
    fn empty_view_gives_empty_graph() {
        let g = precgraph(&[None, None], &BTreeMap::new(), 2).unwrap();
        assert!(g.ops.is_empty() && g.edges.is_empty());
    }

    #[test]
    fn operation_ids_follow_process_counters() {
        let n = 4;
        let mut arena = BTreeMap::new();
        arena.insert(100, node(100, 3, "inc()", vec![None; 4]));
        arena.insert(200, node(200, 3, "inc()", vec![None, None, Some(100), None]));
        let g = precgraph(&[None, None, Some(200), None], &arena, n).unwrap();
        assert_eq!(g.ops.keys().copied().collect::<Vec<_>>(), vec![6, 10]);
        assert!(g.edges.contains(&(6, 10)));
    }

    #[test]
    fn dangling_pointer_is_reported() {
        assert_eq!(precgraph(&[Some(7)], &BTreeMap::new(), 1), Err(GenError::Dangling(7)));
    }

    #[test]
    fn dominance_edge_points_at_the_dominating_operation() {
        let ty = bundled_type("counter").unwrap();
        let mut g = GenGraph::default();
        g.ops.insert(2, GraphOp { pid: 1, inv: "read()".parse().unwrap(), resp: Value::Int(0) });
        g.ops.insert(3, GraphOp { pid: 2, inv: "inc()".parse().unwrap(), resp: Value::Unit });
        let l = lingraph(&g, &ty);
        assert_eq!(l.edges.iter().copied().collect::<Vec<_>>(), vec![(2, 3)]);
    }

    #[test]
    fn dominance_edge_closing_a_cycle_is_skipped() {
        let ty = bundled_type("counter").unwrap();
        let mut g = GenGraph::default();
        g.ops.insert(3, GraphOp { pid: 2, inv: "inc()".parse().unwrap(), resp: Value::Unit });
        g.ops.insert(4, GraphOp { pid: 1, inv: "read()".parse().unwrap(), resp: Value::Int(1) });
        g.edges.insert((3, 4));
        let l = lingraph(&g, &ty);
        assert_eq!(l.edges, g.edges);
    }

    #[test]
    fn commuting_operations_get_no_edges() {
        let ty = bundled_type("counter").unwrap();
        let mut g = GenGraph::default();
        g.ops.insert(2, GraphOp { pid: 1, inv: "inc()".parse().unwrap(), resp: Value::Unit });
        g.ops.insert(3, GraphOp { pid: 2, inv: "inc()".parse().unwrap(), resp: Value::Unit });
        assert_eq!(lingraph(&g, &ty), g);
    }
}
