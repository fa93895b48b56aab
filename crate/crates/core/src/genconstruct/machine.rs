//! The `execute` step machine over a snapshot `root`.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::genconstruct::graph::{lingraph, precgraph, topological_order, view_pointers, Node};
use crate::genconstruct::SimpleType;
use crate::machines::{AtomicObj, Cx, Ids, LoadOptions, MachineError, Obj, SlSnapImpl, SlVariant, SubMode};
use crate::seqspec::SnapshotSpec;
use crate::transcript::Line;
use crate::value::{Ignored, Invocation, ObjId, OpId, Pid, Value};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Pc {
    Idle,
    Scan { inv: Invocation },
    Update { node: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Frame {
    pc: Pc,
    sub: Option<Ignored<OpId>>,
}

/// Universal construction instance.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GenImpl {
    pub id: ObjId,
    n: usize,
    ty: Ignored<Arc<SimpleType>>,
    root: Obj,
    nodes: BTreeMap<u64, Node>,
    written: Vec<u64>,
    frames: Vec<Frame>,
}

impl GenImpl {
    pub fn new(id: ObjId, ids: &mut Ids, n: usize, ty: Arc<SimpleType>, opts: &LoadOptions) -> Self {
        let root = match opts.root_mode {
            SubMode::Atomic => Obj::Atomic(AtomicObj::new(ids.take(), Arc::new(SnapshotSpec::new(n)), n)),
            SubMode::Nested => Obj::SlSnap(Box::new(SlSnapImpl::new(ids.take(), ids, n, SlVariant::Plain, opts))),
        };
        GenImpl {
            id,
            n,
            ty: Ignored(ty),
            root,
            nodes: BTreeMap::new(),
            written: vec![0; n],
            frames: vec![Frame { pc: Pc::Idle, sub: None }; n],
        }
    }

    pub fn simple_type(&self) -> &Arc<SimpleType> {
        &self.ty
    }

    /// Every node allocated so far.
    pub fn nodes(&self) -> &BTreeMap<u64, Node> {
        &self.nodes
    }

    /// The node prepared by `pid`'s open operation once its scan is done.
    pub fn prepared(&self, pid: Pid) -> Option<&Node> {
        match self.frames[pid - 1].pc {
            Pc::Update { node } => self.nodes.get(&node),
            _ => None,
        }
    }

    pub fn invoke(&mut self, pid: Pid, inv: &Invocation) -> Result<(), MachineError> {
        let i = pid.checked_sub(1).filter(|&i| i < self.n).ok_or(MachineError::BadProcess { pid, n: self.n })?;
        if !self.ty.invocations.contains(inv) {
            return Err(MachineError::BadInvocation { alg: format!("gen:{}", self.ty.name), inv: inv.to_string() });
        }
        self.frames[i].pc = Pc::Scan { inv: inv.clone() };
        Ok(())
    }

    pub fn next_line(&self, pid: Pid) -> Option<Line> {
        match self.frames[pid - 1].pc {
            Pc::Idle => None,
            Pc::Scan { .. } => Some(Line::GenScan),
            Pc::Update { .. } => Some(Line::GenUpdate),
        }
    }

    /// Response of `inv` by `pid` after the operations visible in `view`.
    fn respond(&self, pid: Pid, inv: &Invocation, view: &[Option<u64>]) -> Value {
        let g = precgraph(view, &self.nodes, self.n).expect("published nodes are never dangling");
        let l = lingraph(&g, &self.ty);
        let order = topological_order(&l);
        let spec = &self.ty.base;
        let mut state = spec.initial();
        for id in order {
            let op = &l.ops[&id];
            let (next, r) = spec.apply(&state, op.pid, &op.inv).expect("published invocations are valid");
            debug_assert_eq!(r, op.resp, "replayed order disagrees with a recorded response");
            state = next;
        }
        spec.apply(&state, pid, inv).expect("validated invocation").1
    }

    pub fn step(&mut self, pid: Pid, cx: &mut Cx) -> Option<Value> {
        let i = pid - 1;
        match self.frames[i].pc.clone() {
            Pc::Idle => None,
            Pc::Scan { inv } => {
                let view = cx.call(pid, &mut self.root, "root", &mut self.frames[i].sub, Line::GenScan, &Invocation::nullary("scan"))?;
                let view = view_pointers(&view);
                let resp = self.respond(pid, &inv, &view);
                self.written[i] += 1;
                let id = self.written[i] * self.n as u64 + i as u64;
                self.nodes.insert(id, Node { id, owner: pid, inv, resp, preceding: view });
                self.frames[i].pc = Pc::Update { node: id };
                None
            }
            Pc::Update { node } => {
                let arg = Invocation::unary("update", Value::Int(node as i64));
                cx.call(pid, &mut self.root, "root", &mut self.frames[i].sub, Line::GenUpdate, &arg)?;
                self.frames[i].pc = Pc::Idle;
                Some(self.nodes[&node].resp.clone())
            }
        }
    }
}
