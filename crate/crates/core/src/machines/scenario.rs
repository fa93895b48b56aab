//! Scenario files.
//!
//! ```text
//! # comment
//! alg=slaba n=2
//! p1: DWrite(1); DWrite(2)
//! p2: DRead()
//! schedule: 1 2 2 1
//! ```
//!
//! The header may also set `bound=<B>`, `s=<atomic|nested>`,
//! `r=<atomic|nested>`, `root=<atomic|nested>` and `coin=<seed>`. The
//! algorithm `gen:<type>` selects the universal construction over a bundled
//! simple type.

use std::sync::Arc;

use crate::genconstruct::{bundled_type, SimpleType};
use crate::machines::{parse_program, AlgorithmId, LoadOptions, Machine, MachineError, SubMode};
use crate::value::{Invocation, Pid};

/// The algorithm a scenario targets.
#[derive(Clone, Debug)]
pub enum Target {
    Builtin(AlgorithmId),
    Gen(Arc<SimpleType>),
}

/// A parsed scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub target: Target,
    pub n: usize,
    pub programs: Vec<Vec<Invocation>>,
    pub schedule: Option<Vec<Pid>>,
    pub options: LoadOptions,
}

fn sub_mode(v: &str) -> Result<SubMode, MachineError> {
    match v {
        "atomic" => Ok(SubMode::Atomic),
        "nested" => Ok(SubMode::Nested),
        _ => Err(MachineError::Config(format!("expected `atomic` or `nested`, found `{v}`"))),
    }
}

/// Resolves an algorithm name, including `gen:<type>`.
pub fn target_from_name(name: &str) -> Result<Target, MachineError> {
    match name.strip_prefix("gen:") {
        Some(ty) => bundled_type(ty)
            .map(|t| Target::Gen(Arc::new(t)))
            .ok_or_else(|| MachineError::UnknownAlgorithm(name.to_string())),
        None => name.parse().map(Target::Builtin),
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, MachineError> {
        let mut target = None;
        let mut n = None;
        let mut options = LoadOptions::default();
        let mut programs: Vec<Vec<Invocation>> = Vec::new();
        let mut schedule = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| MachineError::Config(format!("line {}: {msg}", lineno + 1));
            if let Some(rest) = line.strip_prefix("schedule:") {
                let pids = rest
                    .split_whitespace()
                    .map(|t| t.parse::<Pid>().map_err(|_| err(format!("bad process id `{t}`"))))
                    .collect::<Result<Vec<_>, _>>()?;
                schedule = Some(pids);
            } else if let Some((head, body)) = line.split_once(':').filter(|(h, _)| h.starts_with('p')) {
                let k: usize = head[1..].trim().parse().map_err(|_| err(format!("bad process label `{head}`")))?;
                if k == 0 {
                    return Err(err("processes are numbered from 1".into()));
                }
                if programs.len() < k {
                    programs.resize(k, Vec::new());
                }
                programs[k - 1] = parse_program(body).map_err(|e| err(e.to_string()))?;
            } else {
                for kv in line.split_whitespace() {
                    let (k, v) = kv.split_once('=').ok_or_else(|| err(format!("expected key=value, found `{kv}`")))?;
                    match k {
                        "alg" => target = Some(target_from_name(v)?),
                        "n" => n = Some(v.parse::<usize>().map_err(|_| err(format!("bad process count `{v}`")))?),
                        "bound" => options.maxreg_bound = v.parse().map_err(|_| err(format!("bad bound `{v}`")))?,
                        "s" => options.snapshot_mode = sub_mode(v)?,
                        "r" => options.register_mode = sub_mode(v)?,
                        "root" => options.root_mode = sub_mode(v)?,
                        "coin" => options.coin_seed = v.parse().map_err(|_| err(format!("bad seed `{v}`")))?,
                        _ => return Err(err(format!("unknown header key `{k}`"))),
                    }
                }
            }
        }
        let target = target.ok_or_else(|| MachineError::Config("missing `alg=` header".into()))?;
        let n = n.ok_or_else(|| MachineError::Config("missing `n=` header".into()))?;
        if programs.len() > n {
            return Err(MachineError::Config(format!("program for p{} but n={n}", programs.len())));
        }
        programs.resize(n, Vec::new());
        if let Some(s) = &schedule {
            if let Some(&bad) = s.iter().find(|&&p| p == 0 || p > n) {
                return Err(MachineError::BadProcess { pid: bad, n });
            }
        }
        Ok(Scenario { target, n, programs, schedule, options })
    }

    /// Builds the machine in its initial configuration.
    pub fn load(&self) -> Result<Machine, MachineError> {
        match &self.target {
            Target::Builtin(alg) => Machine::load_with(*alg, self.n, self.programs.clone(), &self.options),
            Target::Gen(ty) => Machine::load_gen(ty.clone(), self.n, self.programs.clone(), &self.options),
        }
    }
}
