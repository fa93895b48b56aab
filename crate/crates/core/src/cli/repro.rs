//! Named reproductions of the headline results.

use std::fmt::Write as _;

use anyhow::{bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{dump, exit_for, Cli, Expect, ReproArgs, EXIT_OK, EXIT_UNMET};
use crate::checkers::strong::with_big_stack;
use crate::checkers::{check_strong_linearizable, Outcome, Property, Verdict};
use crate::families::{linaba_family, noaba_family, Family};
use crate::genconstruct::BUNDLED;
use crate::machines::{parse_program, target_from_name, AlgorithmId, LoadOptions, Machine};
use crate::measure::{dread_workload, max_dwrite_steps, max_equal_sum_scans, snapshot_workload};
use crate::scheduler::{run_adversary, Budget, CounterAdversary};
use crate::suite::{run_suite, Mode, SuiteReport};

/// Largest constant accepted for the `DRead` step bound.
pub const DREAD_CONSTANT: f64 = 16.0;
/// Largest constant accepted for the scan-side call bound.
pub const SCAN_CONSTANT: f64 = 32.0;

pub(super) fn run(cli: &Cli, a: &ReproArgs, out: &mut String) -> Result<i32> {
    let n = a.n.unwrap_or(2);
    let ops = a.ops.unwrap_or(2);
    match a.name.as_str() {
        "linaba-not-sl" => family(cli, "linaba", linaba_family()?, Expect::Fail, out),
        "noaba-not-sl" => {
            let first = family(cli, "noaba-snapshot", noaba_family(AlgorithmId::NoAbaSnapshot)?, Expect::Fail, out)?;
            let second = family(cli, "slsnapshot", noaba_family(AlgorithmId::SlSnapshot)?, Expect::Pass, out)?;
            Ok(first.max(second))
        }
        "slaba-sl" => suites(&["slaba"], n, ops, true, out),
        "slss-sl" => suites(&["slsnapshot"], n, ops, true, out),
        "maxreg-sl" => suites(&["maxreg"], n, ops, false, out),
        "gen-sl" => {
            let names: Vec<String> = match &a.type_name {
                Some(t) => vec![format!("gen:{t}")],
                None => BUNDLED.iter().map(|t| format!("gen:{t}")).collect(),
            };
            let names: Vec<&str> = names.iter().map(String::as_str).collect();
            suites(&names, n, ops, true, out)
        }
        "counter-adversary" => counter_adversary(cli, out),
        "aba-complexity" => aba_complexity(cli, out),
        "slss-complexity" => slss_complexity(cli, out),
        other => bail!("unknown reproduction `{other}`"),
    }
}

fn family(cli: &Cli, name: &str, f: Family, expect: Expect, out: &mut String) -> Result<i32> {
    let tree = f.tree()?;
    let spec = f.machine.spec().clone();
    let r = with_big_stack(move || check_strong_linearizable(&tree, &spec));
    writeln!(out, "family alg={name} prefix={} first={} second={}", f.prefix.len(), f.first.len(), f.second.len())?;
    let path = match &r.counterexample {
        Some(c) => {
            let text = c.to_string();
            let p = dump(cli, &text)?;
            if p.is_none() {
                out.push_str(&text);
            }
            p
        }
        None => None,
    };
    writeln!(out, "{}", Verdict { property: Property::StrongLin, result: r.outcome, nodes: r.nodes, counterexample: path })?;
    Ok(exit_for(r.outcome, expect))
}

fn report_suite(out: &mut String, name: &str, n: usize, ops: usize, mode: &str, r: &SuiteReport) -> Result<i32> {
    writeln!(
        out,
        "suite alg={name} n={n} ops={ops} mode={mode} sets={} pass={} fail={} inconclusive={}",
        r.sets.len(),
        r.count(Outcome::Pass),
        r.count(Outcome::Fail),
        r.count(Outcome::Inconclusive)
    )?;
    writeln!(out, "{}", Verdict { property: Property::StrongLin, result: r.outcome(), nodes: r.nodes(), counterexample: None })?;
    Ok(exit_for(r.outcome(), Expect::Pass))
}

/// Exhaustive suites in search mode, plus rule mode when the algorithm
/// defines its own linearization points.
fn suites(names: &[&str], n: usize, ops: usize, with_rule: bool, out: &mut String) -> Result<i32> {
    let mut code = EXIT_OK;
    for &name in names {
        let target = target_from_name(name)?;
        let modes: &[(Mode, &str)] = if with_rule { &[(Mode::Search, "search"), (Mode::Rule, "rule")] } else { &[(Mode::Search, "search")] };
        for &(mode, label) in modes {
            let t = target.clone();
            let r = with_big_stack(move || run_suite(&t, n, ops, mode, &Budget::default(), &LoadOptions::default()))?;
            code = code.max(report_suite(out, name, n, ops, label, &r)?);
        }
    }
    Ok(code)
}

fn counter_adversary(cli: &Cli, out: &mut String) -> Result<i32> {
    let trials = cli.trials.unwrap_or(1000);
    let seed = cli.seed.unwrap_or(1);
    let mut ok = true;
    for (alg, lo, hi) in [(AlgorithmId::LinCounter, 1.0, 1.0), (AlgorithmId::AtomicCounter, 0.45, 0.55)] {
        let m = Machine::load(alg, 3, CounterAdversary::programs())?;
        let stats = run_adversary(&m, &mut CounterAdversary::new(), trials, seed, 100)?;
        let rate = stats.match_rate();
        let pass = (lo..=hi).contains(&rate);
        ok &= pass;
        writeln!(out, "alg={alg} trials={} judged={} matches={} rate={rate:.4} expected=[{lo},{hi}] result={}", stats.trials, stats.judged, stats.matches, if pass { "pass" } else { "fail" })?;
    }
    Ok(if ok { EXIT_OK } else { EXIT_UNMET })
}

fn aba_complexity(cli: &Cli, out: &mut String) -> Result<i32> {
    let seed = cli.seed.unwrap_or(1);
    let runs = cli.trials.unwrap_or(3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0f64;
    let mut worst_write = 0;
    for n in [2, 4, 8] {
        for _ in 0..runs {
            let (r, w) = (rng.gen_range(10..=500), rng.gen_range(10..=500));
            let run = dread_workload(n, r, w, rng.gen())?;
            worst = worst.max(run.ratio());
            worst_write = worst_write.max(run.max_write_steps);
            writeln!(out, "n={n} reads={r} writes={w} dread_steps={} bound={} ratio={:.4} max_dwrite_steps={}", run.read_steps, run.bound(), run.ratio(), run.max_write_steps)?;
        }
    }
    let budget = Budget::default();
    let m = Machine::load(AlgorithmId::SlAba, 2, vec![parse_program("DWrite(1); DWrite(2)")?, parse_program("DRead(); DWrite(3)")?])?;
    let exhaustive = max_dwrite_steps(&m, &budget).unwrap_or(u64::MAX);
    writeln!(out, "exhaustive n=2 max_dwrite_steps={exhaustive}")?;
    let pass = worst <= DREAD_CONSTANT && worst_write <= 2 && exhaustive <= 2;
    writeln!(out, "fitted_constant={worst:.4} limit={DREAD_CONSTANT} max_dwrite_steps={} result={}", worst_write.max(exhaustive), if pass { "pass" } else { "fail" })?;
    Ok(if pass { EXIT_OK } else { EXIT_UNMET })
}

fn slss_complexity(cli: &Cli, out: &mut String) -> Result<i32> {
    let seed = cli.seed.unwrap_or(1);
    let runs = cli.trials.unwrap_or(3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0f64;
    let mut exact = true;
    for n in [2, 3, 4] {
        for _ in 0..runs {
            let (s, u) = (rng.gen_range(10..=200), rng.gen_range(10..=200));
            let run = snapshot_workload(AlgorithmId::SlSnapshot, n, s, u, rng.gen())?;
            worst = worst.max(run.ratio());
            exact &= run.updates_exact();
            writeln!(out, "n={n} scans={s} updates={u} scan_calls={} bound={} ratio={:.4} updates_exact={}", run.scan_calls, run.bound(), run.ratio(), run.updates_exact())?;
        }
    }
    let n = 2;
    let m = Machine::load(AlgorithmId::SlSnapshotSeq, n, vec![parse_program("scan(); scan()")?, parse_program("update(1); update(2); update(3)")?])?;
    let equal = max_equal_sum_scans(&m, &Budget::default()).unwrap_or(u64::MAX);
    let limit = (2 * n * n + 1) as u64;
    writeln!(out, "exhaustive n={n} max_equal_sum_scans={equal} limit={limit}")?;
    let pass = worst <= SCAN_CONSTANT && exact && equal <= limit;
    writeln!(out, "fitted_constant={worst:.4} limit={SCAN_CONSTANT} updates_exact={exact} result={}", if pass { "pass" } else { "fail" })?;
    Ok(if pass { EXIT_OK } else { EXIT_UNMET })
}
