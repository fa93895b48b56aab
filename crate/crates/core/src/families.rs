//! Hand-built transcript families that separate linearizability from strong
//! linearizability: a shared prefix and two continuations that force
//! incompatible linearizations of it.

use crate::machines::{AlgorithmId, Machine, MachineError, Obj};
use crate::scheduler::{tree_of, Move, TranscriptTree};
use crate::transcript::Line;
use crate::value::{Pid, Value};

/// A prefix `S` with two continuations `T1` and `T2`.
#[derive(Clone, Debug)]
pub struct Family {
    pub machine: Machine,
    pub prefix: Vec<Move>,
    pub first: Vec<Move>,
    pub second: Vec<Move>,
}

impl Family {
    /// The tree holding `S∘T1` and `S∘T2`.
    pub fn tree(&self) -> Result<TranscriptTree, MachineError> {
        let a: Vec<Move> = self.prefix.iter().chain(&self.first).copied().collect();
        let b: Vec<Move> = self.prefix.iter().chain(&self.second).copied().collect();
        tree_of(&self.machine, &[a, b])
    }
}

/// Steps `pid` until it executes a step on `line`; returns the moves taken.
fn through_line(m: &mut Machine, pid: Pid, line: Line) -> Result<Vec<Move>, MachineError> {
    let mut out = Vec::new();
    loop {
        let info = m.step_with(pid, None, None)?;
        out.push(Move { pid, coin: None });
        if info.line == Some(line) {
            return Ok(out);
        }
    }
}

/// Steps `pid` until its current operation responds.
fn to_completion(m: &mut Machine, pid: Pid) -> Result<Vec<Move>, MachineError> {
    let mut out = Vec::new();
    loop {
        let info = m.step_with(pid, None, None)?;
        out.push(Move { pid, coin: None });
        if info.responded.is_some() {
            return Ok(out);
        }
    }
}

fn seq_of_x(m: &Machine) -> Option<Value> {
    match m.object() {
        Obj::Aba(a) => a.x().as_tuple().and_then(|t| t.get(2).cloned()),
        _ => None,
    }
}

/// The linearizable ABA-detecting register on two processes. Process 1
/// runs two `DRead`s; process 2 runs `DWrite(1)` repeatedly. With `i < j`
/// the first pair of writes choosing the same sequence number:
/// `S = dw_1..dw_i ∘ (dr_1 through its announcement read) ∘ dw_{i+1}`,
/// `T1 = dw_{i+2}..dw_j ∘ (rest of dr_1) ∘ dr_2`,
/// `T2 = (rest of dr_1) ∘ dr_2`.
pub fn linaba_family() -> Result<Family, MachineError> {
    let n = 2;
    let (reader, writer) = (1, 2);
    let writes = 2 * n + 4;
    let progs = vec![
        crate::machines::parse_program("DRead(); DRead()")?,
        crate::machines::parse_program(&vec!["DWrite(1)"; writes].join("; "))?,
    ];
    let machine = Machine::load(AlgorithmId::LinAba, n, progs)?;

    // The writer's choices do not depend on the reader until the reader
    // announces, so a solo run of the writer predicts them.
    let mut solo = machine.clone();
    let mut seqs = Vec::new();
    for _ in 0..writes {
        to_completion(&mut solo, writer)?;
        seqs.push(seq_of_x(&solo));
    }
    let (i, j) = (0..writes)
        .flat_map(|a| (a + 1..writes).map(move |b| (a, b)))
        .find(|&(a, b)| seqs[a] == seqs[b])
        .map(|(a, b)| (a + 1, b + 1))
        .ok_or_else(|| MachineError::Config("no repeated sequence number".into()))?;

    let mut m = machine.clone();
    let mut prefix = Vec::new();
    for _ in 0..i {
        prefix.extend(to_completion(&mut m, writer)?);
    }
    prefix.extend(through_line(&mut m, reader, Line::LinAnnRead)?);
    prefix.extend(to_completion(&mut m, writer)?);

    let mut a = m.clone();
    let mut first = Vec::new();
    for _ in i + 1..j {
        first.extend(to_completion(&mut a, writer)?);
    }
    first.extend(to_completion(&mut a, reader)?);
    first.extend(to_completion(&mut a, reader)?);

    let mut b = m;
    let mut second = to_completion(&mut b, reader)?;
    second.extend(to_completion(&mut b, reader)?);
    Ok(Family { machine, prefix, first, second })
}

/// A snapshot built from a plain register in place of the ABA-detecting
/// register, on three processes: process 1 runs `update(1); update(2)`,
/// processes 2 and 3 each run one `scan()`.
/// `S = up_1 ∘ (sc_3 through its S.scan) ∘ (sc_2 through its S.scan) ∘ up_2
/// ∘ (sc_3 through its second R read)`,
/// `T1 = (sc_3 through its helping write) ∘ (sc_2 to completion)`,
/// `T2 = (sc_2 to completion)`.
pub fn noaba_family(alg: AlgorithmId) -> Result<Family, MachineError> {
    let (q, p, r) = (1, 2, 3);
    let progs = vec![
        crate::machines::parse_program("update(1); update(2)")?,
        crate::machines::parse_program("scan()")?,
        crate::machines::parse_program("scan()")?,
    ];
    let machine = Machine::load(alg, 3, progs)?;
    let mut m = machine.clone();
    let mut prefix = to_completion(&mut m, q)?;
    prefix.extend(through_line(&mut m, r, Line::SlsScan)?);
    prefix.extend(through_line(&mut m, p, Line::SlsScan)?);
    prefix.extend(to_completion(&mut m, q)?);
    prefix.extend(through_line(&mut m, r, Line::DRead2)?);

    let mut a = m.clone();
    let mut first = through_line(&mut a, r, Line::SlsDWrite)?;
    first.extend(to_completion(&mut a, p)?);

    let mut b = m;
    let second = to_completion(&mut b, p)?;
    Ok(Family { machine, prefix, first, second })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checkers::{check_strong_linearizable, Outcome};

    #[test]
    fn linaba_family_second_read_reports_a_write() {
        let f = linaba_family().unwrap();
        let tree = f.tree().unwrap();
        let leaf = tree.leaves().last().unwrap();
        let h = crate::checkers::lin::top_history(&tree.transcript(leaf));
        let reads: Vec<_> = h.ops().iter().filter(|o| o.inv.is("DRead")).collect();
        assert_eq!(reads[1].resp, Some(Value::pair(Value::Int(1), Value::Bool(true))));
    }

    #[test]
    fn linaba_family_has_no_strong_linearization() {
        let f = linaba_family().unwrap();
        let tree = f.tree().unwrap();
        let spec = f.machine.spec().clone();
        let r = check_strong_linearizable(&tree, &spec);
        assert_eq!(r.outcome, Outcome::Fail);
        assert!(r.counterexample.is_some());
    }

    #[test]
    fn noaba_family_separates_but_the_aba_version_does_not() {
        let f = noaba_family(AlgorithmId::NoAbaSnapshot).unwrap();
        let r = check_strong_linearizable(&f.tree().unwrap(), f.machine.spec());
        assert_eq!(r.outcome, Outcome::Fail);
        let g = noaba_family(AlgorithmId::SlSnapshot).unwrap();
        let r = check_strong_linearizable(&g.tree().unwrap(), g.machine.spec());
        assert_eq!(r.outcome, Outcome::Pass);
    }
}
