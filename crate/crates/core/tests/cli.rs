use std::path::PathBuf;

use slkit::cli::{main_with, EXIT_INCONCLUSIVE, EXIT_OK, EXIT_UNMET, EXIT_USAGE};

fn data(rel: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(rel).display().to_string()
}

fn cli(args: &[&str]) -> (i32, String) {
    let argv: Vec<String> = std::iter::once("slkit").chain(args.iter().copied()).map(String::from).collect();
    let mut out = Vec::new();
    let code = main_with(&argv, &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn verdict(out: &str) -> &str {
    out.lines().rev().find(|l| l.starts_with("verdict=")).unwrap_or_else(|| panic!("no verdict line in\n{out}"))
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(cli(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(cli(&["explore"]).0, EXIT_USAGE);
    assert_eq!(cli(&["run", "--scenario", "/nonexistent/file.scn"]).0, EXIT_USAGE);
    assert_eq!(cli(&["reproduce", "no-such-result"]).0, EXIT_USAGE);
}

#[test]
fn explore_reports_pass_and_fail_verdicts() {
    let (code, out) = cli(&["explore", "--scenario", &data("scenarios/slaba-two-writers.scn")]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert!(verdict(&out).starts_with("verdict=strong-lin result=pass nodes="));
    assert!(verdict(&out).ends_with("counterexample=-"));

    let (code, out) = cli(&["explore", "--scenario", &data("scenarios/noaba.scn")]);
    assert_eq!(code, EXIT_UNMET, "{out}");
    assert!(verdict(&out).contains("result=fail"));
    let (code, _) = cli(&["explore", "--scenario", &data("scenarios/noaba.scn"), "--expect", "fail"]);
    assert_eq!(code, EXIT_OK);
}

#[test]
fn counterexample_goes_to_the_dump_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cx.txt");
    let p = path.display().to_string();
    let (code, out) = cli(&["--dump-transcript", &p, "explore", "--scenario", &data("scenarios/linaba-three-writes.scn"), "--expect", "fail"]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert!(verdict(&out).ends_with(&format!("counterexample={p}")));
    let dumped = std::fs::read_to_string(&path).unwrap();
    assert!(dumped.contains("# prefix schedule:"));
}

#[test]
fn node_budget_makes_the_verdict_inconclusive() {
    let (code, out) = cli(&["explore", "--scenario", &data("scenarios/slsnapshot.scn"), "--max-nodes", "50"]);
    assert_eq!(code, EXIT_INCONCLUSIVE, "{out}");
    assert!(verdict(&out).contains("result=inconclusive"));
}

#[test]
fn lock_freedom_property() {
    let (code, out) = cli(&["explore", "--scenario", &data("scenarios/livelock.scn"), "--property", "lock-free"]);
    assert_eq!(code, EXIT_UNMET, "{out}");
    assert!(verdict(&out).starts_with("verdict=lock-free result=fail"));
    let (code, _) = cli(&["explore", "--scenario", &data("scenarios/maxreg.scn"), "--property", "lock-free"]);
    assert_eq!(code, EXIT_OK);
}

#[test]
fn dedup_off_agrees_with_dedup_on() {
    let on = cli(&["explore", "--scenario", &data("scenarios/gen-counter.scn")]);
    let off = cli(&["explore", "--scenario", &data("scenarios/gen-counter.scn"), "--dedup", "off"]);
    assert_eq!(on.0, EXIT_OK);
    assert_eq!(off.0, EXIT_OK);
}

#[test]
fn suite_mode_with_rule() {
    let (code, out) = cli(&["explore", "--alg", "slaba", "--n", "2", "--ops", "1", "--rule"]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert!(out.starts_with("suite: 9 program sets"));
}

#[test]
fn run_then_check_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.txt").display().to_string();
    let (code, out) = cli(&["--seed", "5", "--dump-transcript", &path, "run", "--scenario", &data("scenarios/slaba-two-writers.scn")]);
    assert_eq!(code, EXIT_OK, "{out}");
    let (code, out) = cli(&["check", "--spec", "aba", "--transcript", &path, "--rule", "slaba"]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert!(out.contains("rule linearization:"));
    assert!(verdict(&out).starts_with("verdict=lin result=pass"));
}

#[test]
fn check_rejects_a_non_linearizable_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.txt");
    std::fs::write(
        &path,
        "t=1 inv obj=0 op=1 p=1 write(1)\nt=2 rsp obj=0 op=1 p=1 ok\nt=3 inv obj=0 op=2 p=2 read()\nt=4 rsp obj=0 op=2 p=2 2\n",
    )
    .unwrap();
    let (code, out) = cli(&["check", "--spec", "register", "--transcript", &path.display().to_string()]);
    assert_eq!(code, EXIT_UNMET, "{out}");
    assert!(verdict(&out).contains("result=fail"));
}

#[test]
fn reports_are_byte_identical_for_identical_arguments() {
    for args in [
        vec!["run", "--scenario", "SCN", "--policy", "uniform"],
        vec!["reproduce", "counter-adversary", "--trials", "200"],
        vec!["bench", "--alg", "slaba", "--n", "3"],
        vec!["stress", "--obj", "snapshot", "--ops", "300", "--check"],
    ] {
        let scn = data("scenarios/gen-counter.scn");
        let args: Vec<&str> = args.into_iter().map(|a| if a == "SCN" { scn.as_str() } else { a }).collect();
        let mut with_seed = vec!["--seed", "9"];
        with_seed.extend(&args);
        let first = cli(&with_seed);
        let second = cli(&with_seed);
        assert_eq!(first.0, EXIT_OK, "{}", first.1);
        assert_eq!(first, second, "{args:?}");
    }
}

#[test]
fn gen_check_accepts_and_rejects_type_files() {
    let (code, out) = cli(&["gen", "check", "--type", &data("types/toggle.type")]);
    assert_eq!(code, EXIT_OK, "{out}");
    let (code, out) = cli(&["gen", "check", "--type", &data("types/toggle-misdeclared.type")]);
    assert_eq!(code, EXIT_UNMET, "{out}");
    assert!(out.contains("relation=violated"));
}

#[test]
fn explore_a_declared_type() {
    let (code, out) = cli(&["explore", "--type", &data("types/toggle.type"), "--n", "2", "--ops", "1"]);
    assert_eq!(code, EXIT_OK, "{out}");
}

#[test]
fn every_bundled_scenario_parses_and_runs() {
    for entry in std::fs::read_dir(data("scenarios")).unwrap() {
        let path = entry.unwrap().path().display().to_string();
        let (code, out) = cli(&["run", "--scenario", &path]);
        assert_eq!(code, EXIT_OK, "{path}\n{out}");
    }
}
