//! Adaptive adversaries that see the full machine state, including the
//! outcome of every coin flip already performed.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::machines::Machine;
use crate::transcript::{Transcript, TOP};
use crate::value::{Pid, Value};

/// A scheduling policy.
pub trait AdversaryPolicy {
    fn name(&self) -> String;

    /// Prepares for a new trial.
    fn reset(&mut self, seed: u64);

    /// The next process to step, or `None` to end the trial.
    fn choose(&mut self, m: &Machine, t: &Transcript) -> Option<Pid>;

    /// Whether the finished trial reached the policy's goal, if it has one.
    fn judge(&self, _m: &Machine, _t: &Transcript) -> Option<bool> {
        None
    }
}

/// The policy chose a process that cannot step.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("policy {policy} chose process {pid}, which has no step to take")]
pub struct AdversaryFault {
    pub policy: String,
    pub pid: Pid,
}

/// Uniformly random choice among enabled processes.
#[derive(Debug)]
pub struct Uniform {
    rng: ChaCha8Rng,
}

impl Uniform {
    pub fn new() -> Self {
        Uniform { rng: ChaCha8Rng::seed_from_u64(0) }
    }
}

impl Default for Uniform {
    fn default() -> Self {
        Self::new()
    }
}

impl AdversaryPolicy for Uniform {
    fn name(&self) -> String {
        "uniform".into()
    }

    fn reset(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn choose(&mut self, m: &Machine, _t: &Transcript) -> Option<Pid> {
        m.enabled_pids().choose(&mut self.rng).copied()
    }
}

/// A fixed schedule; the trial ends when it runs out.
#[derive(Debug, Clone)]
pub struct Scripted {
    schedule: Vec<Pid>,
    pos: usize,
}

impl Scripted {
    pub fn new(schedule: Vec<Pid>) -> Self {
        Scripted { schedule, pos: 0 }
    }

    /// Parses whitespace-separated process ids (a leading `schedule:` is
    /// accepted).
    pub fn parse(text: &str) -> Result<Self, String> {
        let body = text.trim().trim_start_matches("schedule:");
        body.split_whitespace()
            .map(|t| t.parse::<Pid>().map_err(|_| format!("bad process id `{t}`")))
            .collect::<Result<Vec<_>, _>>()
            .map(Scripted::new)
    }
}

impl AdversaryPolicy for Scripted {
    fn name(&self) -> String {
        "scripted".into()
    }

    fn reset(&mut self, _seed: u64) {
        self.pos = 0;
    }

    fn choose(&mut self, _m: &Machine, _t: &Transcript) -> Option<Pid> {
        let p = self.schedule.get(self.pos).copied();
        self.pos += 1;
        p
    }
}

/// The counter adversary over programs `p: inc(); flip()`, `q: inc()`,
/// `r: read()` (processes 1, 2, 3). It lets `r` take one step, runs `p`
/// through its increment and coin flip, runs `q` only if the coin came up 1,
/// and then lets `r` finish. The goal is `r` returning the coin value.
///
/// The blind variant decides whether to run `q` with its own coin instead
/// of looking at `p`'s.
#[derive(Debug)]
pub struct CounterAdversary {
    blind: bool,
    rng: ChaCha8Rng,
    own_coin: Option<i64>,
}

impl CounterAdversary {
    pub const P: Pid = 1;
    pub const Q: Pid = 2;
    pub const R: Pid = 3;

    pub fn new() -> Self {
        CounterAdversary { blind: false, rng: ChaCha8Rng::seed_from_u64(0), own_coin: None }
    }

    pub fn blind() -> Self {
        CounterAdversary { blind: true, ..CounterAdversary::new() }
    }

    /// Programs of the scenario the policy is written for.
    pub fn programs() -> Vec<Vec<crate::value::Invocation>> {
        crate::machines::programs(&["inc(); flip()", "inc()", "read()"])
    }

    fn read_result(t: &Transcript) -> Option<Value> {
        t.events
            .iter()
            .rev()
            .find(|e| e.obj == TOP && e.pid == Self::R && !e.is_inv())
            .and_then(|e| e.response().cloned())
    }
}

impl Default for CounterAdversary {
    fn default() -> Self {
        Self::new()
    }
}

impl AdversaryPolicy for CounterAdversary {
    fn name(&self) -> String {
        if self.blind { "blind-counter-adversary" } else { "counter-adversary" }.into()
    }

    fn reset(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        self.own_coin = None;
    }

    fn choose(&mut self, m: &Machine, _t: &Transcript) -> Option<Pid> {
        let (p, q, r) = (Self::P, Self::Q, Self::R);
        if m.cursor(r) == 0 && m.active_op(r).is_none() {
            return Some(r);
        }
        if m.enabled(p) {
            return Some(p);
        }
        let coin = if self.blind {
            *self.own_coin.get_or_insert_with(|| self.rng.gen_range(0..2))
        } else {
            m.coins(p).last().copied().unwrap_or(0)
        };
        if coin == 1 && m.enabled(q) {
            return Some(q);
        }
        if m.enabled(r) {
            return Some(r);
        }
        m.enabled_pids().first().copied()
    }

    fn judge(&self, m: &Machine, t: &Transcript) -> Option<bool> {
        let c = *m.coins(Self::P).last()?;
        Some(Self::read_result(t)? == Value::Int(c))
    }
}

/// Builds a policy by name: `uniform`, `counter-adversary`,
/// `blind-counter-adversary` or `scripted:<file>`.
pub fn policy_from_name(name: &str) -> Result<Box<dyn AdversaryPolicy>, String> {
    match name {
        "uniform" => Ok(Box::new(Uniform::new())),
        "counter-adversary" => Ok(Box::new(CounterAdversary::new())),
        "blind-counter-adversary" => Ok(Box::new(CounterAdversary::blind())),
        _ => match name.strip_prefix("scripted:") {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?;
                Ok(Box::new(Scripted::parse(&text)?))
            }
            None => Err(format!("unknown policy `{name}`")),
        },
    }
}

/// Aggregated adversary results.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdversaryStats {
    pub trials: usize,
    /// Trials in which the policy reached its goal.
    pub matches: usize,
    /// Trials the policy could judge.
    pub judged: usize,
    /// Frequency of final top-level responses of each trial, keyed by
    /// `coins|responses`.
    pub outcomes: BTreeMap<String, usize>,
}

impl AdversaryStats {
    pub fn match_rate(&self) -> f64 {
        if self.judged == 0 {
            0.0
        } else {
            self.matches as f64 / self.judged as f64
        }
    }
}

/// Runs `trials` independent trials. Trial `k` reseeds the machine's coin
/// and the policy with `seed + k`.
pub fn run_adversary(
    m: &Machine,
    policy: &mut dyn AdversaryPolicy,
    trials: usize,
    seed: u64,
    max_steps: usize,
) -> Result<AdversaryStats, AdversaryFault> {
    let mut stats = AdversaryStats::default();
    for k in 0..trials {
        let trial_seed = seed.wrapping_add(k as u64);
        let mut mm = m.clone();
        mm.reseed_coin(trial_seed);
        policy.reset(trial_seed);
        let mut t = Transcript::new(mm.n);
        for _ in 0..max_steps {
            let Some(pid) = policy.choose(&mm, &t) else { break };
            if !mm.enabled(pid) {
                return Err(AdversaryFault { policy: policy.name(), pid });
            }
            mm.step(pid, Some(&mut t.events)).expect("enabled process can step");
        }
        stats.trials += 1;
        if let Some(ok) = policy.judge(&mm, &t) {
            stats.judged += 1;
            stats.matches += ok as usize;
        }
        let coins: Vec<String> = (1..=mm.n).map(|p| format!("{:?}", mm.coins(p))).collect();
        let responses: Vec<String> = t
            .events
            .iter()
            .filter(|e| e.obj == TOP && !e.is_inv())
            .map(|e| format!("p{}={}", e.pid, e.response().expect("response event")))
            .collect();
        *stats.outcomes.entry(format!("{}|{}", coins.join(","), responses.join(","))).or_insert(0) += 1;
    }
    Ok(stats)
}
