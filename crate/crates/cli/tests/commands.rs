use std::fs;
use std::path::Path;
use std::process::{Command as Process, Output};

use relay_game_cli::{run, Command, ExperimentSpec};

const BIN: &str = env!("CARGO_BIN_EXE_relay-game");

/// A reduced geometry and network that keeps every command under a second.
const SMALL: &[&str] = &[
    "geo.range_m=30",
    "netsim.area_m=300",
    "netsim.node_count=200",
    "netsim.source_position.y=300",
    "netsim.sink_position.x=300",
    "netsim.source_packet_count=10",
    "lambda=[0, 20]",
];

fn relay_game(out: &Path, args: &[&str]) -> Output {
    let mut cmd = Process::new(BIN);
    cmd.arg(args[0]);
    // Overrides apply in order, so the test's own come last and win.
    for o in SMALL {
        cmd.args(["--override", o]);
    }
    cmd.args(&args[1..]).arg("--out").arg(out).env("RUST_LOG", "error");
    cmd.output().unwrap()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn solve_co_writes_records_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = relay_game(dir.path(), &["solve-co", "--override", "theta=[0, 5]", "--override", "family=CS"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("co.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("theta,family,C1,C2"));
    assert_eq!(lines.len(), 3);
    assert!(lines[1..].iter().all(|l| l.contains(",cs,") && l.contains(",true,")));
    assert!(dir.path().join("co_cs_theta_5.json").exists());

    let m = manifest(dir.path());
    assert_eq!(m["command"], "solve-co");
    assert_eq!(m["status"], "ok");
    assert_eq!(m["resolved"]["solver"]["family"], "cs");
    assert_eq!(m["resolved"]["geo"]["range_m"], 30.0);
    assert_eq!(m["resolved"]["game"]["mean_interarrival_s"], 0.01);
    let leftovers = fs::read_dir(dir.path()).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "tmp"));
    assert_eq!(leftovers.count(), 0);
}

#[test]
fn recorded_non_convergence_is_partial() {
    let dir = tempfile::tempdir().unwrap();
    let out = relay_game(dir.path(), &["onehop-sweep", "--override", "theta=0", "--override", "solver.max_iters=2"]);
    assert_eq!(out.status.code(), Some(2));
    let csv = fs::read_to_string(dir.path().join("onehop.csv")).unwrap();
    assert!(csv.lines().skip(1).any(|l| l.contains(",false,")));
    // The simple policy needs no iteration and still lands in the file.
    assert!(csv.lines().any(|l| l.contains(",simple,") && l.contains(",true,")));
    assert_eq!(manifest(dir.path())["status"], "partial");
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["onehop-sweep", "--override", "theta=[]"][..],
        &["solve-co", "--override", "nu1=2"],
        &["solve-co", "--override", "game.no_such_key=1"],
        &["solve-co", "--override", "family=sideways"],
        &["netsim", "--override", "seeds=[]"],
    ] {
        let out = relay_game(dir.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    }
}

#[test]
fn missing_scenario_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.toml");
    let out = Process::new(BIN).args(["verify", "--scenario"]).arg(&missing).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.toml"));
}

#[test]
fn scenario_files_feed_every_section() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario.toml");
    fs::write(&path, "[geo]\nrange_m = 30.0\ntradeoff_a = 1.0\n[sweep]\nthetas = [10.0]\n[solver]\nvariant = \"delta\"\n").unwrap();
    let mut spec = ExperimentSpec::new(Command::SolvePo, dir.path().join("out"));
    spec.scenario = Some(path.clone());
    let report = run(&spec).unwrap();
    assert!(!report.is_partial());
    let m = manifest(&dir.path().join("out"));
    assert_eq!(m["scenario_path"], path.to_string_lossy().as_ref());
    assert_eq!(m["resolved"]["geo"]["tradeoff_a"], 1.0);
    let po = fs::read_to_string(dir.path().join("out/po.csv")).unwrap();
    assert!(po.lines().nth(1).unwrap().starts_with("10.0,delta,"));
    assert!(fs::read_to_string(dir.path().join("out/po_thresholds.csv")).unwrap().lines().count() > 1);
}

#[test]
fn single_seed_netsim_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = relay_game(d, &["netsim", "--seed", "11", "--override", "lambda=30", "--override", "geo.range_m=80"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["netsim_packets.csv", "netsim_drops.csv", "netsim_aggregate.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let agg = fs::read_to_string(a.join("netsim_aggregate.csv")).unwrap();
    let lines: Vec<&str> = agg.lines().collect();
    assert_eq!(lines[0], "lambda,mean_delay,se_delay,mean_power,se_power");
    // The lone-packet baseline is always simulated.
    assert!(lines[1].starts_with("0.0,") && lines[2].starts_with("30.0,"));
    assert_eq!(manifest(&a)["resolved"]["netsim"]["seeds"], serde_json::json!([11]));
    let packets = fs::read_to_string(a.join("netsim_packets.csv")).unwrap();
    assert_eq!(packets.lines().next().unwrap(), "lambda,seed,packet_id,delay_s,power_mw,hops,contentions");
    assert_eq!(packets.lines().count(), 21);
}

#[test]
fn void_sources_are_reported_as_drops() {
    let dir = tempfile::tempdir().unwrap();
    let out = relay_game(dir.path(), &["netsim", "--seed", "11"]);
    assert_eq!(out.status.code(), Some(0));
    let drops = fs::read_to_string(dir.path().join("netsim_drops.csv")).unwrap();
    assert_eq!(drops.lines().next().unwrap(), "lambda,seed,packet_id,reason");
    assert_eq!(drops.lines().filter(|l| l.ends_with(",void")).count(), 20);
    assert_eq!(fs::read_to_string(dir.path().join("netsim_packets.csv")).unwrap().lines().count(), 1);
}

#[test]
fn cooperative_and_simple_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = relay_game(dir.path(), &["solve-coop", "--override", "theta=0", "--override", "gamma=[0.25, 0.75]"]);
    assert_eq!(out.status.code(), Some(0));
    let coop = fs::read_to_string(dir.path().join("coop.csv")).unwrap();
    assert_eq!(coop.lines().count(), 3);
    let out = relay_game(dir.path(), &["eval-simple", "--override", "theta=0"]);
    assert_eq!(out.status.code(), Some(0));
    let simple = fs::read_to_string(dir.path().join("simple.csv")).unwrap();
    assert!(simple.starts_with("theta,alpha1,alpha2,C1,C2\n"));
    let out = relay_game(dir.path(), &["verify", "--override", "theta=0"]);
    assert_eq!(out.status.code(), Some(0));
    let verify = fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    assert_eq!(verify.lines().filter(|l| l.contains(",true,true,")).count(), 3);
}
