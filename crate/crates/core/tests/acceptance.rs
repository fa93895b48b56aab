//! Acceptance run: one line per criterion.
//!
//! Runs without the libtest harness so every line is printed. Pass criterion
//! numbers as arguments to run a subset.

mod common;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slkit::checkers::pt::{slaba_pt, slss_pt, PtAssignment, PtError};
use slkit::checkers::strong::with_big_stack;
use slkit::checkers::{check_linearizable, check_lockfree, check_strong_linearizable, Outcome};
use slkit::cli::main_with;
use slkit::families::{linaba_family, noaba_family};
use slkit::machines::{target_from_name, AlgorithmId, LoadOptions, Machine, Target};
use slkit::measure::{dread_workload, max_dwrite_steps, max_equal_sum_scans, snapshot_workload};
use slkit::native::{run_stress, StressConfig, StressObject};
use slkit::scheduler::{enumerate, run_adversary, run_random, Budget, CounterAdversary, NodeStatus};
use slkit::suite::{self, alphabet, program_sets, run_suite, Mode};
use slkit::transcript::Transcript;

type Check = fn() -> Result<String, String>;
type PointRule = fn(&Transcript) -> Result<PtAssignment, PtError>;

const STRONG_TARGETS: &[&str] = &["slaba", "slsnapshot", "maxreg", "gen:counter", "gen:maxreg", "gen:sticky"];

fn cli(args: &[&str]) -> (i32, String) {
    let argv: Vec<String> = std::iter::once("slkit").chain(args.iter().copied()).map(String::from).collect();
    let mut out = Vec::new();
    let code = main_with(&argv, &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let e = start.elapsed();
    ensure(e <= limit, || format!("took {e:.1?}, limit {limit:?}"))
}

fn criterion_1() -> Result<String, String> {
    let start = Instant::now();
    let (code, out) = cli(&["reproduce", "linaba-not-sl"]);
    ensure(code == 0 && out.contains("verdict=strong-lin result=fail"), || format!("exit {code}\n{out}"))?;
    let f = linaba_family().map_err(|e| e.to_string())?;
    let r = check_strong_linearizable(&f.tree().unwrap(), f.machine.spec());
    ensure(r.outcome == Outcome::Fail && r.counterexample.is_some(), || format!("outcome {}", r.outcome))?;
    within(start, Duration::from_secs(60))?;
    Ok(format!("counterexample found at n=2 ({} positions)", r.nodes))
}

fn criterion_2() -> Result<String, String> {
    let start = Instant::now();
    let (code, out) = cli(&["reproduce", "noaba-not-sl"]);
    ensure(code == 0, || format!("exit {code}\n{out}"))?;
    let no = noaba_family(AlgorithmId::NoAbaSnapshot).unwrap();
    let r = check_strong_linearizable(&no.tree().unwrap(), no.machine.spec());
    ensure(r.outcome == Outcome::Fail && r.counterexample.is_some(), || "no counterexample for the snapshot without ABA detection".into())?;
    let sl = noaba_family(AlgorithmId::SlSnapshot).unwrap();
    let w = check_strong_linearizable(&sl.tree().unwrap(), sl.machine.spec());
    ensure(w.outcome == Outcome::Pass, || "no witness for the same shape on the strongly linearizable snapshot".into())?;
    within(start, Duration::from_secs(60))?;
    Ok("counterexample without ABA detection, witness with it".into())
}

fn suite_all(mode: Mode, targets: &[&str]) -> Result<(usize, usize), String> {
    let mut sets = 0;
    let mut nodes = 0;
    for &name in targets {
        for n in [2, 3] {
            let t = target_from_name(name).unwrap();
            let r = with_big_stack(move || run_suite(&t, n, 2, mode, &Budget::default(), &LoadOptions::default())).map_err(|e| e.to_string())?;
            let bad: Vec<_> = r.sets.iter().filter(|s| s.outcome != Outcome::Pass || s.truncated).collect();
            ensure(bad.is_empty(), || format!("{name} n={n}: {} of {} program sets did not pass, first {:?}", bad.len(), r.sets.len(), bad[0].programs))?;
            sets += r.sets.len();
            nodes += r.nodes();
        }
    }
    Ok((sets, nodes))
}

fn criterion_3() -> Result<String, String> {
    let start = Instant::now();
    let (sets, nodes) = suite_all(Mode::Search, STRONG_TARGETS)?;
    within(start, Duration::from_secs(30 * 60))?;
    Ok(format!("{sets} program sets over n=2,3 with 2 ops per process all strongly linearizable ({nodes} positions)"))
}

/// Random complete transcripts of the criterion-3 program sets.
fn sampled_transcripts(name: &str, n: usize, per_set: usize, seed: u64) -> Vec<(Machine, Transcript)> {
    let target = target_from_name(name).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for progs in program_sets(&alphabet(&target, n), 2) {
        let m = suite::load(&target, progs, &LoadOptions::default()).unwrap();
        for _ in 0..per_set {
            let run = run_random(&m, rng.gen(), &Budget::default());
            out.push((m.clone(), run.transcript));
        }
    }
    out
}

/// Every transcript of every tree with one operation per process.
fn full_tree_transcripts(name: &str, n: usize) -> Vec<(Machine, Transcript)> {
    let target = target_from_name(name).unwrap();
    let mut out = Vec::new();
    for progs in program_sets(&alphabet(&target, n), 1) {
        let m = suite::load(&target, progs, &LoadOptions::default()).unwrap();
        let tree = enumerate(&m, &Budget { dedup: false, ..Budget::default() });
        assert!(!tree.truncated());
        for leaf in tree.leaves().filter(|&l| tree.nodes[l].status != NodeStatus::Truncated) {
            out.push((m.clone(), tree.transcript(leaf)));
        }
    }
    out
}

fn criterion_4() -> Result<String, String> {
    // Exact over every transcript of the criterion-3 trees: the rule
    // trackers assign exactly the points of slaba_pt and slss_pt.
    let (sets, _) = suite_all(Mode::Rule, &["slaba", "slsnapshot"])?;
    // Direct evaluation of the point functions on every prefix.
    let rules: [(&str, PointRule); 2] = [("slaba", slaba_pt), ("slsnapshot", slss_pt)];
    let mut checked = 0;
    for (name, rule) in rules {
        let mut all = full_tree_transcripts(name, 2);
        all.extend(sampled_transcripts(name, 2, 20, 41));
        all.extend(sampled_transcripts(name, 3, 5, 43));
        for (m, t) in &all {
            common::rule_holds_on_every_prefix(t, &**m.spec(), rule).map_err(|e| format!("{name}: {e}"))?;
        }
        checked += all.len();
    }
    Ok(format!("rule game passes on {sets} program sets; point functions valid and prefix-preserving on {checked} explicit transcripts"))
}

fn criterion_5() -> Result<String, String> {
    let mut worst = 0;
    let mut runs = 0;
    for n in [2, 3] {
        let target = Target::Builtin(AlgorithmId::SlAba);
        for progs in program_sets(&alphabet(&target, n), 2) {
            if !progs.iter().flatten().any(|i| i.is("DWrite")) {
                continue;
            }
            let m = suite::load(&target, progs, &LoadOptions::default()).unwrap();
            let k = max_dwrite_steps(&m, &Budget::default()).ok_or("node budget exhausted")?;
            worst = worst.max(k);
            runs += 1;
        }
    }
    let mut native = 0;
    for seed in 0..4 {
        let r = run_stress(&StressConfig { object: StressObject::Slaba, threads: 4, ops: 10_000, seed, check: false, yields: true });
        native = native.max(r.max_steps("DWrite"));
    }
    ensure(worst <= 2 && native <= 2, || format!("enumerated max {worst}, native max {native}"))?;
    Ok(format!("max DWrite shared steps {worst} over {runs} enumerated program sets, {native} in native runs"))
}

fn criterion_6() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut c = 0f64;
    let mut runs = 0;
    for n in [2, 4, 8] {
        for _ in 0..8 {
            let (r, w) = (rng.gen_range(10..=500), rng.gen_range(10..=500));
            let run = dread_workload(n, r, w, rng.gen()).map_err(|e| e.to_string())?;
            ensure(run.max_write_steps <= 2, || format!("DWrite took {} steps", run.max_write_steps))?;
            c = c.max(run.ratio());
            runs += 1;
        }
    }
    ensure(c <= 16.0, || format!("fitted C = {c:.3}"))?;
    Ok(format!("fitted C = {c:.3} over {runs} workloads"))
}

fn criterion_7() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut c = 0f64;
    let mut runs = 0;
    for n in [2, 3, 4] {
        for _ in 0..8 {
            let (s, u) = (rng.gen_range(10..=200), rng.gen_range(10..=200));
            let run = snapshot_workload(AlgorithmId::SlSnapshot, n, s, u, rng.gen()).map_err(|e| e.to_string())?;
            ensure(run.updates_exact(), || format!("an update deviated from one call of each kind: {:?}", run.update_calls))?;
            c = c.max(run.ratio());
            runs += 1;
        }
    }
    ensure(c <= 32.0, || format!("fitted C = {c:.3}"))?;
    Ok(format!("updates exact, fitted C = {c:.3} over {runs} workloads"))
}

fn criterion_8() -> Result<String, String> {
    let target = Target::Builtin(AlgorithmId::SlSnapshotSeq);
    let mut machines = Vec::new();
    for len in [2, 3] {
        for progs in program_sets(&alphabet(&target, 2), len) {
            if progs.iter().flatten().any(|i| i.is("scan")) {
                machines.push(suite::load(&target, progs, &LoadOptions::default()).unwrap());
            }
        }
    }
    // Three-process searches carry per-scan sum counters and grow quickly,
    // so a fixed selection with concurrent updaters is enumerated.
    for progs in [
        ["scan(); scan()", "update(1); update(1)", "update(1); update(1)"],
        ["scan()", "update(1); update(1)", "update(1); scan()"],
        ["scan()", "update(1); scan()", "update(1); update(1)"],
    ] {
        machines.push(Machine::load(AlgorithmId::SlSnapshotSeq, 3, slkit::machines::programs(&progs)).unwrap());
    }
    let mut worst = [0u64; 4];
    let mut sets = 0;
    for m in &machines {
        let k = max_equal_sum_scans(m, &Budget::default()).ok_or("node budget exhausted")?;
        let limit = (2 * m.n * m.n + 1) as u64;
        ensure(k <= limit, || format!("n={}: {k} equal-sum scans in one scan, limit {limit}, programs {:?}", m.n, m.programs()))?;
        worst[m.n] = worst[m.n].max(k);
        sets += 1;
    }
    Ok(format!("max {} (n=2, limit 9) and {} (n=3, limit 19) over {sets} program sets", worst[2], worst[3]))
}

fn criterion_9() -> Result<String, String> {
    let start = Instant::now();
    let (code, out) = cli(&["reproduce", "counter-adversary", "--trials", "1000"]);
    ensure(code == 0, || format!("exit {code}\n{out}"))?;
    let lin = run_adversary(&Machine::load(AlgorithmId::LinCounter, 3, CounterAdversary::programs()).unwrap(), &mut CounterAdversary::new(), 1000, 9, 100).unwrap();
    let atomic = run_adversary(&Machine::load(AlgorithmId::AtomicCounter, 3, CounterAdversary::programs()).unwrap(), &mut CounterAdversary::new(), 1000, 9, 100).unwrap();
    ensure(lin.match_rate() == 1.0, || format!("linearizable counter rate {}", lin.match_rate()))?;
    ensure((atomic.match_rate() - 0.5).abs() <= 0.05, || format!("atomic counter rate {}", atomic.match_rate()))?;
    within(start, Duration::from_secs(10))?;
    Ok(format!("rates {:.3} and {:.3} over 1000 trials", lin.match_rate(), atomic.match_rate()))
}

fn criterion_10() -> Result<String, String> {
    let specs = common::builtin_specs();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut yes = 0;
    for k in 0..10_000 {
        let spec = &specs[k % specs.len()];
        let h = common::random_history(&**spec, 6, &mut rng);
        let fast = check_linearizable(&h, &**spec).is_ok();
        let slow = common::brute_force_linearizable(&h, &**spec);
        ensure(fast == slow, || format!("{}: checker says {fast}, oracle says {slow} on\n{}", spec.id(), h.to_transcript()))?;
        yes += usize::from(fast);
    }
    Ok(format!("agreement on 10000 histories ({yes} linearizable)"))
}

fn criterion_11() -> Result<String, String> {
    let mut sets = 0;
    for alg in [AlgorithmId::SlAba, AlgorithmId::SlSnapshot, AlgorithmId::UnboundedMaxReg] {
        let target = Target::Builtin(alg);
        for progs in program_sets(&alphabet(&target, 2), 2) {
            let m = suite::load(&target, progs.clone(), &LoadOptions::default()).unwrap();
            let r = check_lockfree(&m, &Budget::default());
            ensure(r.outcome == Outcome::Pass, || format!("{alg} {progs:?}: {}", r.outcome))?;
            sets += 1;
        }
    }
    let live = Machine::load(AlgorithmId::Livelock, 2, slkit::machines::programs(&["run()", "run()"])).unwrap();
    let r = check_lockfree(&live, &Budget::default());
    ensure(r.outcome == Outcome::Fail, || "the livelock machine was not flagged".into())?;
    Ok(format!("{sets} program sets lock-free, livelock machine rejected"))
}

fn criterion_12() -> Result<String, String> {
    let start = Instant::now();
    let mut windows = 0;
    for object in [StressObject::Slaba, StressObject::Snapshot] {
        for seed in 0..20 {
            let r = run_stress(&StressConfig { object, threads: 4, ops: 10_000, seed, check: true, yields: true });
            let c = r.check.unwrap();
            ensure(c.violation.is_none() && c.overflowed == 0, || format!("{object:?} seed {seed}: {c:?}"))?;
            windows += c.checked;
        }
    }
    within(start, Duration::from_secs(300))?;
    Ok(format!("40 runs of 4x10^4 operations, {windows} windows, zero violations"))
}

fn main() {
    let criteria: [(u32, Check); 12] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
        (12, criterion_12),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {id}: PASS {detail} ({secs:.1}s)"),
            Err(why) => {
                failed += 1;
                println!("criterion {id}: FAIL {why} ({secs:.1}s)");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
