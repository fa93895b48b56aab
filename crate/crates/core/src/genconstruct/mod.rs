//! The universal construction for simple types.
//!
//! A type is simple when every ordered pair of invocations either commutes
//! or one of the two overwrites the other. Each operation scans a snapshot
//! `root` of per-process node pointers, rebuilds the precedence graph of
//! all operations it can see, orders it by adding dominance edges, replays
//! the order to obtain its response, and publishes a node pointing at the
//! view it saw.

pub mod graph;
pub mod machine;
pub mod order;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::seqspec::{states_equivalent, CounterSpec, MaxRegSpec, RegisterSpec, SpecRef, TableSpec};
use crate::value::{Invocation, Pid, Value};

pub use graph::{lingraph, nodegraph, precgraph, topological_order, GenGraph, GraphOp, Node, NodeGraph};
pub use machine::GenImpl;
pub use order::{fill, gen_order, gen_pt, GenOp};

/// Errors of the construction and its type declarations.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GenError {
    #[error("node {0} is referenced but was never written")]
    Dangling(u64),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("relation between {0} and {1} is not declared")]
    Missing(Invocation, Invocation),
}

/// Classification of an ordered pair `(a, b)` of invocations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relation {
    /// `a ∘ b` and `b ∘ a` are equivalent from every reachable state.
    Commute,
    /// `a` overwrites `b` (`b ∘ a ≡ a`) but not the other way round.
    FirstOverwritesSecond,
    /// `b` overwrites `a` but not the other way round.
    SecondOverwritesFirst,
    /// Each overwrites the other.
    Mutual,
}

impl Relation {
    /// The classification of the pair `(b, a)`.
    pub fn flipped(self) -> Relation {
        match self {
            Relation::FirstOverwritesSecond => Relation::SecondOverwritesFirst,
            Relation::SecondOverwritesFirst => Relation::FirstOverwritesSecond,
            r => r,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Commute => "commute",
            Relation::FirstOverwritesSecond => "overwrites",
            Relation::SecondOverwritesFirst => "overwritten",
            Relation::Mutual => "mutual",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "commute" => Ok(Relation::Commute),
            "overwrites" => Ok(Relation::FirstOverwritesSecond),
            "overwritten" => Ok(Relation::SecondOverwritesFirst),
            "mutual" => Ok(Relation::Mutual),
            _ => Err(format!("unknown relation `{s}`")),
        }
    }
}

/// A sequential type together with its declared pairwise relations.
#[derive(Clone, Debug)]
pub struct SimpleType {
    pub name: String,
    pub base: SpecRef,
    pub invocations: Vec<Invocation>,
    relation: BTreeMap<(Invocation, Invocation), Relation>,
}

impl SimpleType {
    /// Builds a type from declarations of unordered pairs; the mirrored
    /// entries are derived. Fails when a pair is left unclassified.
    pub fn new(
        name: &str,
        base: SpecRef,
        invocations: Vec<Invocation>,
        declared: impl IntoIterator<Item = ((Invocation, Invocation), Relation)>,
    ) -> Result<SimpleType, GenError> {
        let mut relation = BTreeMap::new();
        for ((a, b), r) in declared {
            relation.insert((b.clone(), a.clone()), r.flipped());
            relation.insert((a, b), r);
        }
        for a in &invocations {
            for b in &invocations {
                if !relation.contains_key(&(a.clone(), b.clone())) {
                    return Err(GenError::Missing(a.clone(), b.clone()));
                }
            }
        }
        Ok(SimpleType { name: name.to_string(), base, invocations, relation })
    }

    /// Declared classification of `(a, b)`.
    pub fn relation(&self, a: &Invocation, b: &Invocation) -> Relation {
        *self
            .relation
            .get(&(a.clone(), b.clone()))
            .unwrap_or_else(|| panic!("invocations {a} and {b} are not declared by type {}", self.name))
    }

    /// Whether `a` overwrites `b`.
    pub fn overwrites(&self, a: &Invocation, b: &Invocation) -> bool {
        matches!(self.relation(a, b), Relation::FirstOverwritesSecond | Relation::Mutual)
    }

    /// Whether invocation `a` by process `pa` dominates invocation `b` by `pb`.
    pub fn dominates(&self, a: &Invocation, pa: Pid, b: &Invocation, pb: Pid) -> bool {
        debug_assert!(pa != pb, "operations of one process are never compared");
        match self.relation(a, b) {
            Relation::FirstOverwritesSecond => true,
            Relation::Mutual => pa > pb,
            _ => false,
        }
    }

    /// Declared relations as a sorted list of ordered pairs.
    pub fn declared(&self) -> impl Iterator<Item = (&Invocation, &Invocation, Relation)> {
        self.relation.iter().map(|((a, b), r)| (a, b, *r))
    }

    /// Parses a type declaration file.
    ///
    /// ```text
    /// name toggle
    /// initial 0
    /// invocations set(0); set(1); get()
    /// delta 0 set(1) -> 1 ok
    /// rel set(0) set(1) mutual
    /// ```
    pub fn parse(text: &str) -> Result<SimpleType, GenError> {
        let mut name = None;
        let mut initial = None;
        let mut invocations: Vec<Invocation> = Vec::new();
        let mut table = BTreeMap::new();
        let mut rels = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| GenError::Syntax { line: i + 1, msg };
            let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            let value = |s: &str| s.parse::<Value>().map_err(|e| err(e.to_string()));
            let inv = |s: &str| s.parse::<Invocation>().map_err(|e| err(e.to_string()));
            match key {
                "name" => name = Some(rest.to_string()),
                "initial" => initial = Some(value(rest)?),
                "invocations" => {
                    for part in rest.split(';').map(str::trim).filter(|s| !s.is_empty()) {
                        invocations.push(inv(part)?);
                    }
                }
                "delta" => {
                    let (lhs, rhs) = rest.split_once("->").ok_or_else(|| err("expected `->`".into()))?;
                    let l: Vec<&str> = lhs.split_whitespace().collect();
                    let r: Vec<&str> = rhs.split_whitespace().collect();
                    if l.len() != 2 || r.len() != 2 {
                        return Err(err("expected `delta <state> <inv> -> <next> <response>`".into()));
                    }
                    table.insert((value(l[0])?, inv(l[1])?), (value(r[0])?, value(r[1])?));
                }
                "rel" => {
                    let p: Vec<&str> = rest.split_whitespace().collect();
                    if p.len() != 3 {
                        return Err(err("expected `rel <inv> <inv> <relation>`".into()));
                    }
                    rels.push(((inv(p[0])?, inv(p[1])?), p[2].parse::<Relation>().map_err(err)?));
                }
                _ => return Err(err(format!("unknown directive `{key}`"))),
            }
        }
        let name = name.ok_or(GenError::Syntax { line: 0, msg: "missing `name`".into() })?;
        let initial = initial.ok_or(GenError::Syntax { line: 0, msg: "missing `initial`".into() })?;
        let base = TableSpec { name: name.clone(), initial, invocations: invocations.clone(), table };
        SimpleType::new(&name, Arc::new(base), invocations, rels)
    }
}

/// Names of the bundled simple types.
pub const BUNDLED: &[&str] = &["counter", "maxreg", "sticky"];

/// Processes supported by the bundled types' base specifications.
const BUNDLED_PROCESSES: usize = 8;

/// A bundled simple type by name.
pub fn bundled_type(name: &str) -> Option<SimpleType> {
    let inc = Invocation::nullary("inc");
    let read = Invocation::nullary("read");
    match name {
        "counter" => SimpleType::new(
            "counter",
            Arc::new(CounterSpec { n: BUNDLED_PROCESSES }),
            vec![inc.clone(), read.clone()],
            [
                ((inc.clone(), inc.clone()), Relation::Commute),
                ((inc, read.clone()), Relation::FirstOverwritesSecond),
                ((read.clone(), read), Relation::Commute),
            ],
        )
        .ok(),
        "maxreg" => {
            let bound = 3;
            let mread = Invocation::nullary("maxRead");
            let write = |x: i64| Invocation::unary("maxWrite", Value::Int(x));
            let mut invs: Vec<Invocation> = (1..=bound).map(write).collect();
            invs.push(mread.clone());
            let mut rels = vec![((mread.clone(), mread.clone()), Relation::Commute)];
            for x in 1..=bound {
                rels.push(((write(x), mread.clone()), Relation::FirstOverwritesSecond));
                for y in x..=bound {
                    let r = if x == y { Relation::Mutual } else { Relation::SecondOverwritesFirst };
                    rels.push(((write(x), write(y)), r));
                }
            }
            SimpleType::new("maxreg", Arc::new(MaxRegSpec::bounded(bound)), invs, rels).ok()
        }
        "sticky" => {
            let domain: Vec<Value> = (1..=2).map(Value::Int).collect();
            let get = Invocation::nullary("read");
            let write = |x: &Value| Invocation::unary("write", x.clone());
            let mut invs: Vec<Invocation> = domain.iter().map(write).collect();
            invs.push(get.clone());
            let mut rels = vec![((get.clone(), get.clone()), Relation::Commute)];
            for x in &domain {
                rels.push(((write(x), get.clone()), Relation::FirstOverwritesSecond));
                for y in &domain {
                    rels.push(((write(x), write(y)), Relation::Mutual));
                }
            }
            let base = RegisterSpec { initial: Value::Bot, domain: domain.clone() };
            SimpleType::new("sticky", Arc::new(base), invs, rels).ok()
        }
        _ => None,
    }
}

/// A declared relation contradicted by some reachable state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationViolation {
    pub first: Invocation,
    pub second: Invocation,
    pub declared: Relation,
    /// Invocations leading from the initial state to the witness state.
    pub prefix: Vec<Invocation>,
    pub reason: String,
}

impl fmt::Display for RelationViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix: Vec<String> = self.prefix.iter().map(|i| i.to_string()).collect();
        write!(
            f,
            "{} {} declared {} but after [{}]: {}",
            self.first,
            self.second,
            self.declared,
            prefix.join("; "),
            self.reason
        )
    }
}

/// Outcome of applying `seq` from `state` (process 1 issues everything).
fn run(ty: &SimpleType, state: &Value, seq: &[&Invocation]) -> Option<(Value, Vec<Value>)> {
    let mut s = state.clone();
    let mut out = Vec::new();
    for inv in seq {
        let (next, r) = ty.base.apply(&s, 1, inv).ok()?;
        s = next;
        out.push(r);
    }
    Some((s, out))
}

/// `b` overwrites `a` from `state`: `a ∘ b` and `b` lead to equivalent
/// states and `b` answers the same.
fn overwrites_at(ty: &SimpleType, state: &Value, b: &Invocation, a: &Invocation, depth: usize) -> bool {
    match (run(ty, state, &[a, b]), run(ty, state, &[b])) {
        (Some((s1, r1)), Some((s2, r2))) => r1[1] == r2[0] && states_equivalent(&*ty.base, &s1, &s2, depth),
        _ => false,
    }
}

fn commute_at(ty: &SimpleType, state: &Value, a: &Invocation, b: &Invocation, depth: usize) -> bool {
    match (run(ty, state, &[a, b]), run(ty, state, &[b, a])) {
        (Some((s1, r1)), Some((s2, r2))) => {
            r1[0] == r2[1] && r1[1] == r2[0] && states_equivalent(&*ty.base, &s1, &s2, depth)
        }
        _ => false,
    }
}

/// A pair of invocations and whether they must commute (`true`) or the
/// first must overwrite the second (`false`).
type Claim<'a> = (&'a Invocation, &'a Invocation, bool);

/// Checks every declared relation against the definitions on all states
/// reachable by at most `bound` operations. A one-way overwrite must hold
/// everywhere and fail in the other direction somewhere; the other
/// classifications must hold everywhere.
pub fn verify_relation(ty: &SimpleType, bound: usize) -> Result<(), Box<RelationViolation>> {
    let depth = bound.max(1);
    let mut states: Vec<(Value, Vec<Invocation>)> = vec![(ty.base.initial(), Vec::new())];
    let mut seen: BTreeSet<Value> = [ty.base.initial()].into_iter().collect();
    let mut frontier = states.clone();
    for _ in 0..bound {
        let mut next = Vec::new();
        for (s, path) in &frontier {
            for inv in &ty.invocations {
                if let Ok((s2, _)) = ty.base.apply(s, 1, inv) {
                    if seen.insert(s2.clone()) {
                        let mut p = path.clone();
                        p.push(inv.clone());
                        next.push((s2, p));
                    }
                }
            }
        }
        states.extend(next.iter().cloned());
        frontier = next;
    }
    for a in &ty.invocations {
        for b in &ty.invocations {
            let declared = ty.relation(a, b);
            let violation = |prefix: &[Invocation], reason: &str| RelationViolation {
                first: a.clone(),
                second: b.clone(),
                declared,
                prefix: prefix.to_vec(),
                reason: reason.to_string(),
            };
            let (must_hold, must_fail_somewhere): (Vec<Claim>, Option<(&Invocation, &Invocation)>) =
                match declared {
                    Relation::Commute => (vec![(a, b, true)], None),
                    Relation::FirstOverwritesSecond => (vec![(a, b, false)], Some((b, a))),
                    Relation::SecondOverwritesFirst => (vec![(b, a, false)], Some((a, b))),
                    Relation::Mutual => (vec![(a, b, false), (b, a, false)], None),
                };
            for (s, path) in &states {
                for &(x, y, commute) in &must_hold {
                    let ok = if commute { commute_at(ty, s, x, y, depth) } else { overwrites_at(ty, s, x, y, depth) };
                    if !ok {
                        let what = if commute {
                            format!("{x} and {y} do not commute")
                        } else {
                            format!("{x} does not overwrite {y}")
                        };
                        return Err(Box::new(violation(path, &what)));
                    }
                }
            }
            if let Some((x, y)) = must_fail_somewhere {
                if states.iter().all(|(s, _)| overwrites_at(ty, s, x, y, depth)) {
                    return Err(Box::new(violation(&[], &format!("{x} also overwrites {y} on every reachable state"))));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inv(s: &str) -> Invocation {
        s.parse().unwrap()
    }

    #[test]
    fn bundled_types_pass_verification() {
        for name in BUNDLED {
            let ty = bundled_type(name).unwrap();
            verify_relation(&ty, 4).unwrap_or_else(|v| panic!("{name}: {v}"));
        }
    }

    #[test]
    fn dominance_clauses() {
        let ty = bundled_type("counter").unwrap();
        assert!(ty.dominates(&inv("inc()"), 1, &inv("read()"), 2));
        assert!(!ty.dominates(&inv("read()"), 2, &inv("inc()"), 1));
        assert!(!ty.dominates(&inv("inc()"), 2, &inv("inc()"), 1));
        let mr = bundled_type("maxreg").unwrap();
        assert!(mr.dominates(&inv("maxWrite(2)"), 3, &inv("maxWrite(2)"), 1));
        assert!(!mr.dominates(&inv("maxWrite(2)"), 1, &inv("maxWrite(2)"), 3));
        assert!(mr.dominates(&inv("maxWrite(3)"), 1, &inv("maxWrite(1)"), 2));
    }

    #[test]
    fn misdeclared_max_register_is_flagged() {
        let good = bundled_type("maxreg").unwrap();
        let mut rels: Vec<_> = good.declared().map(|(a, b, r)| ((a.clone(), b.clone()), r)).collect();
        for ((a, b), r) in rels.iter_mut() {
            if *a == inv("maxWrite(3)") && *b == inv("maxWrite(2)") {
                *r = Relation::Mutual;
            }
            if *a == inv("maxWrite(2)") && *b == inv("maxWrite(3)") {
                *r = Relation::Mutual;
            }
        }
        let bad = SimpleType::new("bad", good.base.clone(), good.invocations.clone(), rels).unwrap();
        let v = verify_relation(&bad, 3).unwrap_err();
        assert_eq!(v.declared, Relation::Mutual);
    }

    #[test]
    fn undeclared_pairs_are_rejected() {
        let err = SimpleType::new("c", Arc::new(CounterSpec { n: 2 }), vec![inv("inc()"), inv("read()")], []).unwrap_err();
        assert!(matches!(err, GenError::Missing(..)));
    }

    #[test]
    fn empty_type_passes_vacuously() {
        let ty = SimpleType::new("empty", Arc::new(CounterSpec { n: 2 }), vec![], []).unwrap();
        assert!(verify_relation(&ty, 3).is_ok());
    }

    #[test]
    fn parses_type_files() {
        let text = "name toggle\ninitial 0\ninvocations set(0); set(1); get()\n\
            delta 0 set(0) -> 0 ok\ndelta 1 set(0) -> 0 ok\ndelta 0 set(1) -> 1 ok\ndelta 1 set(1) -> 1 ok\n\
            delta 0 get() -> 0 0\ndelta 1 get() -> 1 1\n\
            rel set(0) set(0) mutual\nrel set(1) set(1) mutual\nrel set(0) set(1) mutual\n\
            rel set(0) get() overwrites\nrel set(1) get() overwrites\nrel get() get() commute\n";
        let ty = SimpleType::parse(text).unwrap();
        assert_eq!(ty.invocations.len(), 3);
        verify_relation(&ty, 3).unwrap();
        assert!(SimpleType::parse("name x\ninitial 0\nbogus 1").is_err());
    }
}
