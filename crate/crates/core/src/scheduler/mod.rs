//! Driving machines: exhaustive enumeration, random runs, scripted replays
//! and adaptive adversaries.

pub mod adversary;

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::machines::{Machine, StepInfo};
use crate::transcript::{Event, Transcript};
use crate::value::Pid;

pub use adversary::{policy_from_name, run_adversary, AdversaryFault, AdversaryPolicy, AdversaryStats, CounterAdversary, Scripted, Uniform};

/// Exploration limits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budget {
    /// Longest schedule explored.
    pub max_steps: usize,
    /// Most distinct positions visited before giving up.
    pub max_nodes: usize,
    /// Merge positions whose machine states coincide.
    pub dedup: bool,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { max_steps: 200, max_nodes: 20_000_000, dedup: true }
    }
}

/// One scheduling decision: the process to step and, for coin flips during
/// exhaustive search, the forced outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Move {
    pub pid: Pid,
    pub coin: Option<i64>,
}

impl std::fmt::Display for Move {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.coin {
            Some(c) => write!(f, "{}:{c}", self.pid),
            None => write!(f, "{}", self.pid),
        }
    }
}

/// A successor of a machine state.
#[derive(Clone, Debug)]
pub struct Successor {
    pub mv: Move,
    pub machine: Machine,
    pub info: StepInfo,
    pub events: Vec<Event>,
}

/// Every one-step successor, in ascending process order; a coin flip yields
/// one successor per outcome.
pub fn successors(m: &Machine, with_events: bool) -> Vec<Successor> {
    let mut out = Vec::new();
    for pid in m.enabled_pids() {
        let coins: &[Option<i64>] = if m.next_is_flip(pid) { &[Some(0), Some(1)] } else { &[None] };
        for &coin in coins {
            let mut next = m.clone();
            let mut events = Vec::new();
            let info = next
                .step_with(pid, coin, if with_events { Some(&mut events) } else { None })
                .expect("enabled process can step");
            out.push(Successor { mv: Move { pid, coin }, machine: next, info, events });
        }
    }
    out
}

/// Why a tree node has no children.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeStatus {
    /// Has children.
    Internal,
    /// Every program has finished.
    Complete,
    /// The step budget ran out here.
    Truncated,
    /// The machine state was already expanded at the referenced node.
    Duplicate(usize),
    /// No chosen schedule continues past this node.
    Stopped,
}

/// A node of a transcript tree: the transcript obtained by one more step
/// than its parent.
#[derive(Clone, Debug)]
pub struct TreeNode {
    pub parent: Option<usize>,
    pub mv: Option<Move>,
    pub depth: usize,
    pub info: Option<StepInfo>,
    /// Events appended by the step leading here.
    pub events: Vec<Event>,
    pub machine: Machine,
    pub fingerprint: u128,
    pub children: Vec<usize>,
    pub status: NodeStatus,
}

/// A prefix-closed set of transcripts, one node per schedule prefix.
#[derive(Clone, Debug)]
pub struct TranscriptTree {
    pub nodes: Vec<TreeNode>,
    /// Set when `max_nodes` stopped the enumeration early.
    pub exhausted: bool,
}

/// Enumerates all schedules of `m` within `budget`. With deduplication, a
/// node whose machine state was met before is marked as a duplicate and not
/// expanded again.
pub fn enumerate(m: &Machine, budget: &Budget) -> TranscriptTree {
    let root = TreeNode {
        parent: None,
        mv: None,
        depth: 0,
        info: None,
        events: Vec::new(),
        fingerprint: m.fingerprint(),
        machine: m.clone(),
        children: Vec::new(),
        status: NodeStatus::Internal,
    };
    let mut tree = TranscriptTree { nodes: vec![root], exhausted: false };
    let mut seen: HashMap<u128, usize> = HashMap::new();
    let mut stack = vec![0usize];
    while let Some(i) = stack.pop() {
        let fp = tree.nodes[i].fingerprint;
        if budget.dedup {
            if let Some(&first) = seen.get(&fp) {
                tree.nodes[i].status = NodeStatus::Duplicate(first);
                continue;
            }
            seen.insert(fp, i);
        }
        if tree.nodes[i].machine.is_done() {
            tree.nodes[i].status = NodeStatus::Complete;
            continue;
        }
        if tree.nodes[i].depth >= budget.max_steps {
            tree.nodes[i].status = NodeStatus::Truncated;
            continue;
        }
        if tree.nodes.len() >= budget.max_nodes {
            tree.nodes[i].status = NodeStatus::Truncated;
            tree.exhausted = true;
            continue;
        }
        let depth = tree.nodes[i].depth;
        let succ = successors(&tree.nodes[i].machine, true);
        let mut kids = Vec::with_capacity(succ.len());
        for s in succ {
            let id = tree.nodes.len();
            tree.nodes.push(TreeNode {
                parent: Some(i),
                mv: Some(s.mv),
                depth: depth + 1,
                info: Some(s.info),
                events: s.events,
                fingerprint: s.machine.fingerprint(),
                machine: s.machine,
                children: Vec::new(),
                status: NodeStatus::Internal,
            });
            kids.push(id);
        }
        tree.nodes[i].children = kids.clone();
        stack.extend(kids.into_iter().rev());
    }
    tree
}

/// The prefix tree of a set of schedules of `m`, without deduplication.
pub fn tree_of(m: &Machine, schedules: &[Vec<Move>]) -> Result<TranscriptTree, crate::machines::MachineError> {
    let mut tree = TranscriptTree { nodes: vec![leaf(None, None, 0, None, Vec::new(), m.clone())], exhausted: false };
    for sched in schedules {
        let mut i = 0;
        for &mv in sched {
            if let Some(&c) = tree.nodes[i].children.iter().find(|&&c| tree.nodes[c].mv == Some(mv)) {
                i = c;
                continue;
            }
            let mut next = tree.nodes[i].machine.clone();
            let mut events = Vec::new();
            let info = next.step_with(mv.pid, mv.coin, Some(&mut events))?;
            let id = tree.nodes.len();
            let depth = tree.nodes[i].depth + 1;
            tree.nodes.push(leaf(Some(i), Some(mv), depth, Some(info), events, next));
            tree.nodes[i].children.push(id);
            tree.nodes[i].status = NodeStatus::Internal;
            i = id;
        }
    }
    Ok(tree)
}

fn leaf(parent: Option<usize>, mv: Option<Move>, depth: usize, info: Option<StepInfo>, events: Vec<Event>, machine: Machine) -> TreeNode {
    let status = if machine.is_done() { NodeStatus::Complete } else { NodeStatus::Stopped };
    TreeNode { parent, mv, depth, info, events, fingerprint: machine.fingerprint(), machine, children: Vec::new(), status }
}

impl TranscriptTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Schedule leading to node `i`.
    pub fn schedule(&self, mut i: usize) -> Vec<Move> {
        let mut out = Vec::new();
        while let Some(p) = self.nodes[i].parent {
            out.push(self.nodes[i].mv.expect("non-root node has a move"));
            i = p;
        }
        out.reverse();
        out
    }

    /// Transcript of node `i`.
    pub fn transcript(&self, i: usize) -> Transcript {
        let mut chain = Vec::new();
        let mut cur = Some(i);
        while let Some(k) = cur {
            chain.push(k);
            cur = self.nodes[k].parent;
        }
        let mut t = Transcript::new(self.nodes[0].machine.n);
        for &k in chain.iter().rev() {
            t.events.extend(self.nodes[k].events.iter().cloned());
        }
        t
    }

    /// Nodes without children.
    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].children.is_empty())
    }

    /// Leaves where every program finished.
    pub fn complete_leaves(&self) -> impl Iterator<Item = usize> + '_ {
        self.leaves().filter(|&i| self.nodes[i].status == NodeStatus::Complete)
    }

    /// Whether some leaf was cut by the step or node budget.
    pub fn truncated(&self) -> bool {
        self.exhausted || self.nodes.iter().any(|n| n.status == NodeStatus::Truncated)
    }
}

/// Outcome of a single scheduled run.
#[derive(Clone, Debug)]
pub struct Run {
    pub transcript: Transcript,
    pub schedule: Vec<Move>,
    pub machine: Machine,
    /// Set when the step budget ended the run before every program finished.
    pub truncated: bool,
}

/// Runs `m` choosing uniformly among enabled processes with a seeded
/// generator; coin flips use the machine's own seeded coin.
pub fn run_random(m: &Machine, seed: u64, budget: &Budget) -> Run {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = m.clone();
    let mut t = Transcript::new(m.n);
    let mut schedule = Vec::new();
    while !m.is_done() && schedule.len() < budget.max_steps {
        let en = m.enabled_pids();
        let pid = *en.choose(&mut rng).expect("some process is enabled");
        m.step(pid, Some(&mut t.events)).expect("enabled process can step");
        schedule.push(Move { pid, coin: None });
    }
    let truncated = !m.is_done();
    Run { transcript: t, schedule, machine: m, truncated }
}

/// Replays a fixed schedule.
pub fn run_scripted(m: &Machine, schedule: &[Pid]) -> Result<Run, crate::machines::MachineError> {
    let mut m = m.clone();
    let mut t = Transcript::new(m.n);
    for &pid in schedule {
        m.step(pid, Some(&mut t.events))?;
    }
    Ok(Run {
        transcript: t,
        schedule: schedule.iter().map(|&pid| Move { pid, coin: None }).collect(),
        truncated: false,
        machine: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machines::{programs, AlgorithmId};

    fn atomic_counter(progs: &[&str]) -> Machine {
        Machine::load(AlgorithmId::AtomicCounter, progs.len(), programs(progs)).unwrap()
    }

    #[test]
    fn two_single_steps_give_two_schedules() {
        let m = atomic_counter(&["inc()", "inc()"]);
        let tree = enumerate(&m, &Budget { dedup: false, ..Default::default() });
        assert_eq!(tree.complete_leaves().count(), 2);
    }

    #[test]
    fn interleavings_are_binomial() {
        let m = atomic_counter(&["inc(); inc(); inc()", "read(); read()"]);
        let tree = enumerate(&m, &Budget { dedup: false, ..Default::default() });
        assert_eq!(tree.complete_leaves().count(), 10);
        for i in 1..tree.len() {
            let parent = tree.nodes[i].parent.unwrap();
            assert!(tree.transcript(parent).is_prefix_of(&tree.transcript(i)));
        }
    }

    #[test]
    fn random_runs_are_reproducible() {
        let m = Machine::load(AlgorithmId::SlAba, 2, programs(&["DRead(); DRead()", "DWrite(1); DWrite(2)"])).unwrap();
        let b = Budget::default();
        assert_eq!(run_random(&m, 7, &b).transcript, run_random(&m, 7, &b).transcript);
        let distinct: std::collections::BTreeSet<String> =
            (0..20).map(|s| run_random(&m, s, &b).transcript.to_string()).collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn coin_flips_branch_in_enumeration() {
        let m = Machine::load(AlgorithmId::AtomicCounter, 1, programs(&["flip()"])).unwrap();
        let tree = enumerate(&m, &Budget { dedup: false, ..Default::default() });
        assert_eq!(tree.complete_leaves().count(), 2);
    }

    #[test]
    fn step_budget_marks_truncated_leaves() {
        let m = Machine::load(AlgorithmId::Livelock, 2, programs(&["run()", "run()"])).unwrap();
        let tree = enumerate(&m, &Budget { max_steps: 8, dedup: false, ..Default::default() });
        assert!(tree.truncated());
    }
}
