//! Linearization points and the induced order for the construction.
//!
//! An operation `ex` takes effect at
//! `min({time(ex^slupdate)} ∪ {pt(ex') : ex' dominates ex, time(ex^scan) < pt(ex')})`:
//! either when it publishes its node, or earlier, together with a dominating
//! operation that takes effect after `ex` has scanned.

use std::collections::BTreeMap;

use crate::genconstruct::SimpleType;
use crate::machines::{Machine, MachineError};
use crate::seqspec::{SeqOp, SequentialHistory};
use crate::transcript::{Line, Transcript, TOP};
use crate::value::{Invocation, OpId, Pid, Value};

/// A top-level operation of the construction with its key times.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenOp {
    pub op: OpId,
    pub pid: Pid,
    pub inv: Invocation,
    pub resp: Option<Value>,
    /// Time of the `root.scan` response.
    pub scan: Option<usize>,
    /// Time of the `root.update` response.
    pub update: Option<usize>,
    /// Linearization point; `None` is `∞`.
    pub pt: Option<usize>,
}

/// Linearization points of every top-level operation in `t`.
pub fn gen_pt(t: &Transcript, ty: &SimpleType) -> Vec<GenOp> {
    let h = t.interpreted_history();
    let mut ops: Vec<GenOp> = h
        .ops()
        .iter()
        .filter(|o| o.obj == TOP)
        .map(|o| {
            let update = t.line_time(o.id, Line::GenUpdate);
            GenOp {
                op: o.id,
                pid: o.pid,
                inv: o.inv.clone(),
                resp: o.resp.clone(),
                scan: t.line_time(o.id, Line::GenScan),
                update,
                pt: update,
            }
        })
        .collect();
    // Points only move earlier and each move adopts an existing point, so
    // the iteration reaches the fixpoint after finitely many rounds.
    loop {
        let mut changed = false;
        for i in 0..ops.len() {
            let Some(scan) = ops[i].scan else { continue };
            for j in 0..ops.len() {
                if ops[j].pid == ops[i].pid || !ty.dominates(&ops[j].inv, ops[j].pid, &ops[i].inv, ops[i].pid) {
                    continue;
                }
                if let Some(p) = ops[j].pt {
                    if scan < p && ops[i].pt.is_none_or(|cur| p < cur) {
                        ops[i].pt = Some(p);
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return ops;
        }
    }
}

/// Orders operations that share a point: an operation goes first when it
/// dominates none of the others left, lowest process first.
pub fn order_group<'a>(ty: &SimpleType, group: &mut Vec<&'a GenOp>) -> Vec<&'a GenOp> {
    let mut out = Vec::with_capacity(group.len());
    group.sort_by_key(|o| o.pid);
    while !group.is_empty() {
        let k = (0..group.len())
            .find(|&a| {
                !(0..group.len()).any(|b| b != a && ty.dominates(&group[a].inv, group[a].pid, &group[b].inv, group[b].pid))
            })
            .unwrap_or(0);
        out.push(group.remove(k));
    }
    out
}

/// The sequential history induced by the linearization points. Pending
/// operations that already took effect receive the response determined by
/// the order itself.
pub fn gen_order(t: &Transcript, ty: &SimpleType) -> SequentialHistory {
    let ops = gen_pt(t, ty);
    let mut groups: BTreeMap<usize, Vec<&GenOp>> = BTreeMap::new();
    for o in ops.iter().filter(|o| o.pt.is_some()) {
        groups.entry(o.pt.expect("filtered")).or_default().push(o);
    }
    let spec = &ty.base;
    let mut state = spec.initial();
    let mut out = Vec::new();
    for (_, mut group) in groups {
        for o in order_group(ty, &mut group) {
            let resp = match spec.apply(&state, o.pid, &o.inv) {
                Ok((next, r)) => {
                    state = next;
                    o.resp.clone().unwrap_or(r)
                }
                Err(_) => o.resp.clone().unwrap_or(Value::Bot),
            };
            out.push(SeqOp { id: o.op, pid: o.pid, inv: o.inv.clone(), resp });
        }
    }
    SequentialHistory::new(out)
}

/// Appends, for each pending operation that already took effect, the solo
/// completion of its process. `m` must be the machine reached by `t`.
pub fn fill(m: &Machine, t: &Transcript, ty: &SimpleType) -> Result<Transcript, MachineError> {
    let mut m = m.clone();
    let mut out = t.clone();
    let mut pending: Vec<&GenOp> = Vec::new();
    let ops = gen_pt(t, ty);
    for o in &ops {
        if o.pt.is_some() && o.resp.is_none() {
            pending.push(o);
        }
    }
    pending.sort_by_key(|o| o.pid);
    for o in pending {
        m.run_solo_op(o.pid, Some(&mut out.events), 1 << 12)?;
    }
    Ok(out)
}
