//! The `slkit` command-line tool.
//!
//! Exit codes: `0` when the expected verdict is met, `1` when it is not,
//! `2` for usage and input errors, `3` when a verdict is inconclusive.

mod repro;

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checkers::lin::top_history;
use crate::checkers::pt::{induced_linearization, slaba_pt, slss_pt, writers_first};
use crate::checkers::strong::{check_strong_machine, with_big_stack};
use crate::checkers::{check_linearizable, check_lockfree, Outcome, Property, Verdict};
use crate::genconstruct::{verify_relation, SimpleType};
use crate::machines::{target_from_name, AlgorithmId, LoadOptions, Machine, Scenario, Target};
use crate::measure::{dread_workload, snapshot_workload};
use crate::native::{run_stress, StressConfig, StressObject};
use crate::scheduler::{enumerate, policy_from_name, Budget, NodeStatus};
use crate::seqspec::spec_from_id;
use crate::suite;
use crate::transcript::Transcript;

pub const EXIT_OK: i32 = 0;
pub const EXIT_UNMET: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "slkit", version, about = "Simulate, explore and check shared-memory algorithms for (strong) linearizability")]
pub struct Cli {
    /// Seed for every random choice (each subcommand has a fixed default).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel searches.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Number of trials for randomized experiments.
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Write the produced transcript or counterexample to this file.
    #[arg(long = "dump-transcript", global = true)]
    pub dump_transcript: Option<PathBuf>,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Run one schedule of a scenario and check the resulting history.
    Run(RunArgs),
    /// Explore every schedule of a scenario (or of a program suite).
    Explore(ExploreArgs),
    /// Check a recorded transcript for linearizability.
    Check(CheckArgs),
    /// Reproduce a named result.
    Reproduce(ReproArgs),
    /// Measure step complexity on random workloads.
    Bench(BenchArgs),
    /// Stress the native implementations with real threads.
    Stress(StressArgs),
    /// Work with simple-type declarations.
    Gen {
        #[command(subcommand)]
        cmd: GenCmd,
    },
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Scheduling policy used when the scenario has no schedule:
    /// uniform, counter-adversary, blind-counter-adversary or scripted:<file>.
    #[arg(long, default_value = "uniform")]
    pub policy: String,
    #[arg(long, default_value_t = 1000)]
    pub max_steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PropertyArg {
    StrongLin,
    Lin,
    LockFree,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Expect {
    Pass,
    Fail,
}

#[derive(Args, Debug)]
pub struct ExploreArgs {
    /// Algorithm id (overrides the scenario's) or `gen:<type>`.
    #[arg(long)]
    pub alg: Option<String>,
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Simple-type declaration file for the universal construction.
    #[arg(long = "type")]
    pub type_file: Option<PathBuf>,
    /// Processes, for program suites.
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    /// Operations per process, for program suites.
    #[arg(long, default_value_t = 2)]
    pub ops: usize,
    #[arg(long, default_value_t = 200)]
    pub max_steps: usize,
    #[arg(long, default_value_t = 20_000_000)]
    pub max_nodes: usize,
    #[arg(long, value_enum, default_value_t = OnOff::On)]
    pub dedup: OnOff,
    #[arg(long, value_enum, default_value_t = PropertyArg::StrongLin)]
    pub property: PropertyArg,
    /// Check the algorithm's own linearization-point rule instead of
    /// searching for any linearization function.
    #[arg(long)]
    pub rule: bool,
    #[arg(long, value_enum, default_value_t = Expect::Pass)]
    pub expect: Expect,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Slaba,
    Slss,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    /// Specification id: snapshot:<n>, aba, maxreg:<B>, maxreg:unbounded,
    /// counter:<n> or register.
    #[arg(long)]
    pub spec: String,
    #[arg(long)]
    pub transcript: PathBuf,
    /// Processes (defaults to the largest process id in the transcript).
    #[arg(long)]
    pub n: Option<usize>,
    /// Also validate a linearization-point rule.
    #[arg(long, value_enum)]
    pub rule: Option<RuleArg>,
    #[arg(long, value_enum, default_value_t = Expect::Pass)]
    pub expect: Expect,
}

#[derive(Args, Debug)]
pub struct ReproArgs {
    /// linaba-not-sl, noaba-not-sl, slaba-sl, slss-sl, maxreg-sl,
    /// counter-adversary, gen-sl, aba-complexity or slss-complexity.
    pub name: String,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub ops: Option<usize>,
    /// Bundled type for gen-sl (all bundled types when omitted).
    #[arg(long = "type")]
    pub type_name: Option<String>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// slaba, slsnapshot or slsnapshot-seq.
    #[arg(long)]
    pub alg: String,
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    /// DReads (slaba) or scans (snapshots).
    #[arg(long, default_value_t = 100)]
    pub reads: usize,
    /// DWrites (slaba) or updates (snapshots).
    #[arg(long, default_value_t = 100)]
    pub writes: usize,
}

#[derive(Args, Debug)]
pub struct StressArgs {
    #[arg(long)]
    pub obj: StressObject,
    #[arg(long, default_value_t = 4)]
    pub threads: usize,
    /// Operations per thread.
    #[arg(long, default_value_t = 10_000)]
    pub ops: usize,
    /// Check the recorded history window by window.
    #[arg(long)]
    pub check: bool,
    /// Do not yield between shared accesses.
    #[arg(long)]
    pub no_yield: bool,
    /// Also print throughput, step maxima and window counts, which depend on
    /// the thread schedule.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Subcommand, Debug)]
pub enum GenCmd {
    /// Verify the declared commute/overwrite relation of a type file.
    Check {
        #[arg(long = "type")]
        type_file: PathBuf,
        /// Operations used to reach the states on which relations are tested.
        #[arg(long, default_value_t = 3)]
        bound: usize,
    },
}

/// Parses `args` (including the program name) and runs the command, writing
/// the report to `out`. Returns the exit code.
pub fn main_with(args: &[String], out: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = write!(out, "{e}");
            return code;
        }
    };
    if let Some(k) = cli.jobs {
        // The global pool can only be set once per process; later calls keep
        // the first setting.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global();
    }
    let mut report = String::new();
    let code = match dispatch(&cli, &mut report) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(report, "error: {e:#}");
            EXIT_USAGE
        }
    };
    let _ = out.write_all(report.as_bytes());
    code
}

/// Entry point of the binary.
pub fn main() -> i32 {
    let args: Vec<String> = std::env::args().collect();
    main_with(&args, &mut std::io::stdout().lock())
}

fn dispatch(cli: &Cli, out: &mut String) -> Result<i32> {
    match &cli.cmd {
        Cmd::Run(a) => cmd_run(cli, a, out),
        Cmd::Explore(a) => cmd_explore(cli, a, out),
        Cmd::Check(a) => cmd_check(cli, a, out),
        Cmd::Reproduce(a) => repro::run(cli, a, out),
        Cmd::Bench(a) => cmd_bench(cli, a, out),
        Cmd::Stress(a) => cmd_stress(cli, a, out),
        Cmd::Gen { cmd: GenCmd::Check { type_file, bound } } => cmd_gen_check(type_file, *bound, out),
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Writes `text` to the dump file if one was requested; returns its path.
fn dump(cli: &Cli, text: &str) -> Result<Option<String>> {
    match &cli.dump_transcript {
        Some(p) => {
            std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))?;
            Ok(Some(p.display().to_string()))
        }
        None => Ok(None),
    }
}

/// Exit code for an outcome against an expectation.
pub fn exit_for(outcome: Outcome, expect: Expect) -> i32 {
    match (outcome, expect) {
        (Outcome::Inconclusive, _) => EXIT_INCONCLUSIVE,
        (Outcome::Pass, Expect::Pass) | (Outcome::Fail, Expect::Fail) => EXIT_OK,
        _ => EXIT_UNMET,
    }
}

fn cmd_run(cli: &Cli, a: &RunArgs, out: &mut String) -> Result<i32> {
    let sc = Scenario::parse(&read(&a.scenario)?)?;
    let mut m = sc.load()?;
    let mut t = Transcript::new(m.n);
    match &sc.schedule {
        Some(s) => {
            let r = m.run(s);
            t = r.transcript;
            if let Some(e) = r.stopped {
                bail!("schedule stopped after {} steps: {e}", r.executed);
            }
        }
        None => {
            let mut policy = policy_from_name(&a.policy).map_err(|e| anyhow!(e))?;
            let seed = cli.seed.unwrap_or(1);
            m.reseed_coin(seed);
            policy.reset(seed);
            for _ in 0..a.max_steps {
                let Some(pid) = policy.choose(&m, &t) else { break };
                if !m.enabled(pid) {
                    bail!("policy {} chose process {pid}, which has no step to take", policy.name());
                }
                m.step(pid, Some(&mut t.events))?;
            }
        }
    }
    let text = t.to_string();
    let dumped = dump(cli, &text)?;
    if dumped.is_none() {
        out.push_str(&text);
    }
    let h = top_history(&t);
    let (result, nodes) = match check_linearizable(&h, &**m.spec()) {
        Ok(w) => {
            writeln!(out, "linearization: {}", w.order)?;
            (Outcome::Pass, h.ops().len())
        }
        Err(crate::checkers::LinError::NotLinearizable { explored }) => (Outcome::Fail, explored),
        Err(e) => bail!(e),
    };
    writeln!(out, "{}", Verdict { property: Property::Lin, result, nodes, counterexample: None })?;
    Ok(exit_for(result, Expect::Pass))
}

/// The target and load options an explore command works on.
fn explore_target(a: &ExploreArgs) -> Result<(Target, Option<Scenario>)> {
    let scenario = a.scenario.as_deref().map(|p| Scenario::parse(&read(p)?).map_err(anyhow::Error::from)).transpose()?;
    let target = if let Some(path) = &a.type_file {
        Target::Gen(std::sync::Arc::new(SimpleType::parse(&read(path)?)?))
    } else if let Some(alg) = &a.alg {
        target_from_name(alg)?
    } else if let Some(sc) = &scenario {
        sc.target.clone()
    } else {
        bail!("explore needs --alg, --type or --scenario");
    };
    Ok((target, scenario))
}

/// Checks one machine; returns the outcome, node count and a rendered
/// counterexample.
fn check_machine(m: &Machine, property: PropertyArg, rule: Option<&dyn crate::checkers::Tracker>, budget: &Budget) -> (Outcome, usize, Option<String>) {
    match property {
        PropertyArg::StrongLin => {
            let r = check_strong_machine(m, budget, rule);
            let outcome = if r.outcome == Outcome::Pass && r.truncated { Outcome::Inconclusive } else { r.outcome };
            (outcome, r.nodes, r.counterexample.map(|c| c.to_string()))
        }
        PropertyArg::LockFree => {
            let r = check_lockfree(m, budget);
            let text = (r.outcome == Outcome::Fail).then(|| {
                let s = |v: &[crate::scheduler::Move]| v.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(" ");
                format!("# schedule to the cycle: {}\n# cycle without completions: {}\n", s(&r.stem), s(&r.cycle))
            });
            (r.outcome, r.nodes, text)
        }
        PropertyArg::Lin => {
            let tree = enumerate(m, &Budget { dedup: false, ..*budget });
            let mut outcome = if tree.truncated() { Outcome::Inconclusive } else { Outcome::Pass };
            let mut cex = None;
            for leaf in tree.leaves() {
                if tree.nodes[leaf].status == NodeStatus::Truncated {
                    continue;
                }
                let t = tree.transcript(leaf);
                if check_linearizable(&top_history(&t), &**m.spec()).is_err() {
                    outcome = Outcome::Fail;
                    cex = Some(t.to_string());
                    break;
                }
            }
            (outcome, tree.len(), cex)
        }
    }
}

fn cmd_explore(cli: &Cli, a: &ExploreArgs, out: &mut String) -> Result<i32> {
    let (target, scenario) = explore_target(a)?;
    let budget = Budget { max_steps: a.max_steps, max_nodes: a.max_nodes, dedup: a.dedup == OnOff::On };
    let rule = if a.rule {
        Some(suite::rule_for(&target).ok_or_else(|| anyhow!("this algorithm has no linearization-point rule"))?)
    } else {
        None
    };
    let property = match a.property {
        PropertyArg::StrongLin => Property::StrongLin,
        PropertyArg::Lin => Property::Lin,
        PropertyArg::LockFree => Property::LockFree,
    };
    let (outcome, nodes, cex) = match scenario {
        Some(sc) => {
            let opts = sc.options.clone();
            let m = suite::load(&target, sc.programs.clone(), &opts)?;
            let prop = a.property;
            with_big_stack(move || check_machine(&m, prop, rule.as_deref(), &budget))
        }
        None => {
            let sets = suite::program_sets(&suite::alphabet(&target, a.n), a.ops);
            writeln!(out, "suite: {} program sets, n={}, {} operations per process", sets.len(), a.n, a.ops)?;
            let opts = LoadOptions::default();
            let prop = a.property;
            let machines = sets.into_iter().map(|p| suite::load(&target, p, &opts)).collect::<Result<Vec<_>, _>>()?;
            let results = with_big_stack(move || {
                use rayon::prelude::*;
                machines.par_iter().map(|m| (m.programs().to_vec(), check_machine(m, prop, rule.as_deref(), &budget))).collect::<Vec<_>>()
            });
            let mut outcome = Outcome::Pass;
            let mut nodes = 0;
            let mut cex = None;
            for (progs, (o, k, c)) in results {
                nodes += k;
                if o != Outcome::Pass {
                    let shown: Vec<String> = progs.iter().map(|p| p.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")).collect();
                    writeln!(out, "set [{}]: {o}", shown.join(" | "))?;
                }
                match o {
                    Outcome::Fail if outcome != Outcome::Fail => {
                        outcome = Outcome::Fail;
                        cex = c;
                    }
                    Outcome::Inconclusive if outcome == Outcome::Pass => outcome = Outcome::Inconclusive,
                    _ => {}
                }
            }
            (outcome, nodes, cex)
        }
    };
    let path = match &cex {
        Some(text) => {
            let p = dump(cli, text)?;
            if p.is_none() {
                out.push_str(text);
            }
            p
        }
        None => None,
    };
    writeln!(out, "{}", Verdict { property, result: outcome, nodes, counterexample: path })?;
    Ok(exit_for(outcome, a.expect))
}

fn cmd_check(_cli: &Cli, a: &CheckArgs, out: &mut String) -> Result<i32> {
    let text = read(&a.transcript)?;
    let probe = Transcript::parse(usize::MAX, &text)?;
    let n = a.n.unwrap_or_else(|| probe.events.iter().map(|e| e.pid).max().unwrap_or(1));
    let t = Transcript::parse(n, &text)?;
    let spec = spec_from_id(&a.spec)?;
    let h = top_history(&t);
    let (mut result, nodes) = match check_linearizable(&h, &*spec) {
        Ok(w) => {
            writeln!(out, "linearization: {}", w.order)?;
            (Outcome::Pass, h.ops().len())
        }
        Err(crate::checkers::LinError::NotLinearizable { explored }) => (Outcome::Fail, explored),
        Err(e) => bail!(e),
    };
    if let Some(rule) = a.rule {
        let pt = match rule {
            RuleArg::Slaba => slaba_pt(&t)?,
            RuleArg::Slss => slss_pt(&t)?,
        };
        match induced_linearization(&h, &pt, &*spec, writers_first) {
            Ok(l) => writeln!(out, "rule linearization: {l}")?,
            Err(e) => {
                writeln!(out, "rule rejected: {e}")?;
                result = Outcome::Fail;
            }
        }
    }
    writeln!(out, "{}", Verdict { property: Property::Lin, result, nodes, counterexample: None })?;
    Ok(exit_for(result, a.expect))
}

fn cmd_bench(cli: &Cli, a: &BenchArgs, out: &mut String) -> Result<i32> {
    let seed = cli.seed.unwrap_or(1);
    let runs = cli.trials.unwrap_or(1);
    let alg: AlgorithmId = a.alg.parse()?;
    for k in 0..runs as u64 {
        match alg {
            AlgorithmId::SlAba => {
                let r = dread_workload(a.n, a.reads, a.writes, seed + k)?;
                writeln!(
                    out,
                    "alg=slaba n={} reads={} writes={} dread_steps={} bound={} ratio={:.4} max_dwrite_steps={}",
                    r.n,
                    r.reads,
                    r.writes,
                    r.read_steps,
                    r.bound(),
                    r.ratio(),
                    r.max_write_steps
                )?;
            }
            AlgorithmId::SlSnapshot | AlgorithmId::SlSnapshotSeq => {
                let r = snapshot_workload(alg, a.n, a.reads, a.writes, seed + k)?;
                writeln!(
                    out,
                    "alg={alg} n={} scans={} updates={} scan_calls={} bound={} ratio={:.4} updates_exact={}",
                    r.n,
                    r.scans,
                    r.updates,
                    r.scan_calls,
                    r.bound(),
                    r.ratio(),
                    r.updates_exact()
                )?;
            }
            _ => bail!("bench supports slaba, slsnapshot and slsnapshot-seq"),
        }
    }
    Ok(EXIT_OK)
}

fn cmd_stress(cli: &Cli, a: &StressArgs, out: &mut String) -> Result<i32> {
    if a.threads == 0 {
        bail!("at least one thread is required");
    }
    let cfg = StressConfig {
        object: a.obj,
        threads: a.threads,
        ops: a.ops,
        seed: cli.seed.unwrap_or(1),
        check: a.check,
        yields: !a.no_yield,
    };
    let r = run_stress(&cfg);
    let name = match a.obj {
        StressObject::Slaba => "slaba",
        StressObject::Snapshot => "snapshot",
    };
    writeln!(out, "object={name} threads={} ops={}", a.threads, r.records.len())?;
    // Window boundaries and step counts depend on the thread schedule, so
    // they are printed only on request.
    if a.timing {
        match a.obj {
            StressObject::Slaba => writeln!(out, "max_dwrite_steps={} max_dread_steps={}", r.max_steps("DWrite"), r.max_steps("DRead"))?,
            StressObject::Snapshot => writeln!(out, "max_update_steps={} max_scan_steps={}", r.max_steps("update"), r.max_steps("scan"))?,
        }
        writeln!(out, "elapsed_ms={} throughput_ops_per_s={:.0}", r.elapsed.as_millis(), r.throughput())?;
    }
    let Some(c) = r.check else { return Ok(EXIT_OK) };
    if a.timing {
        writeln!(out, "windows={} checked={} overflowed={}", c.windows, c.checked, c.overflowed)?;
    }
    let result = match (c.violation, c.overflowed) {
        (Some(w), _) => {
            writeln!(out, "violation in window {w}")?;
            Outcome::Fail
        }
        (None, 0) => Outcome::Pass,
        _ => Outcome::Inconclusive,
    };
    writeln!(out, "{}", Verdict { property: Property::Lin, result, nodes: r.records.len(), counterexample: None })?;
    Ok(exit_for(result, Expect::Pass))
}

fn cmd_gen_check(path: &Path, bound: usize, out: &mut String) -> Result<i32> {
    let ty = SimpleType::parse(&read(path)?)?;
    match verify_relation(&ty, bound) {
        Ok(()) => {
            writeln!(out, "type={} invocations={} relation=consistent", ty.name, ty.invocations.len())?;
            Ok(EXIT_OK)
        }
        Err(v) => {
            writeln!(out, "type={} relation=violated", ty.name)?;
            writeln!(out, "{v}")?;
            Ok(EXIT_UNMET)
        }
    }
}
