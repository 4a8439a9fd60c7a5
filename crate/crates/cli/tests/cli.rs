use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

use mobile_gossip::harness::{load_graph, run_seed, Campaign, SeedReport};

fn mgossip(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mgossip")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn field(out: &str, key: &str) -> String {
    out.lines()
        .find_map(|l| {
            let mut it = l.split_whitespace();
            (it.next() == Some(key)).then(|| it.next().unwrap_or("").to_string())
        })
        .unwrap_or_else(|| panic!("no {key} in {out}"))
}

const RUN: &[&str] = &[
    "run", "--graph", "ring:6", "--protocol", "dft_kminus1", "--k", "3", "--board", "CW", "--schedule", "sync", "--duplex", "half",
];

fn run_seed_args<'a>(seed: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = RUN.to_vec();
    v.extend(["--seed", seed]);
    v.extend(extra);
    v
}

#[test]
fn run_converges_with_k_minus_one_parked() {
    let o = mgossip(&run_seed_args("0", &[]));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert_eq!(field(&out, "status"), "converged");
    assert_eq!(field(&out, "quiescent"), "2");
    assert_eq!(field(&out, "passed"), "true");
}

#[test]
fn run_report_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let o = mgossip(&run_seed_args("1", &["--report", report.to_str().unwrap()]));
    // A converged cycle is the stop condition, whatever its quality.
    assert_eq!(code(&o), 0);
    let got: SeedReport = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let camp = Campaign::default();
    let expect = run_seed(&camp, &Arc::new(load_graph("ring:6").unwrap()), 1);
    assert_eq!(got, expect);
    assert_eq!(field(&stdout(&o), "quiescent"), got.quiescent.unwrap().to_string());
}

#[test]
fn illegal_combinations() {
    let o = mgossip(&["run", "--protocol", "dft_kminus1", "--board", "NW", "--k", "3"]);
    assert_eq!(code(&o), 3);
    let o = mgossip(&["run", "--protocol", "fw_async_dft", "--board", "CW", "--k", "3"]);
    assert_eq!(code(&o), 3);
    let o = mgossip(&["run", "--protocol", "anon_path_enum", "--board", "CW", "--k", "2"]);
    assert_eq!(code(&o), 3);
    let o = mgossip(&["run", "--protocol", "dft_kminus1", "--board", "CW", "--schedule", "async_random_fair"]);
    assert_eq!(code(&o), 3);
    let o = mgossip(&[
        "run", "--protocol", "dft_kminus1", "--board", "CW", "--schedule", "async_random_fair", "--unsafe-async", "--budget", "50",
    ]);
    assert_ne!(code(&o), 3);
}

#[test]
fn parameter_and_io_errors() {
    assert_eq!(code(&mgossip(&["run", "--graph", "ring:1"])), 4);
    assert_eq!(code(&mgossip(&["run", "--graph", "ring:x"])), 4);
    assert_eq!(code(&mgossip(&["run", "--schedule", "sometimes"])), 4);
    assert_eq!(code(&mgossip(&["run", "--frobnicate"])), 4);
    assert_eq!(code(&mgossip(&["run", "--graph", "/nonexistent/graph.txt"])), 1);
    assert_eq!(code(&mgossip(&["fuzz", "/nonexistent/campaign.toml"])), 1);
    assert_eq!(code(&mgossip(&["--help"])), 0);
}

#[test]
fn truncated_run() {
    let o = mgossip(&run_seed_args("0", &["--budget", "3"]));
    assert_eq!(code(&o), 2);
    let o = mgossip(&[
        "run", "--protocol", "fw_async_dft", "--board", "FW", "--schedule", "async_round_robin", "--graph", "ring:8", "--budget", "1",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn async_run_meets_gossip() {
    let o = mgossip(&[
        "run", "--protocol", "fw_async_dft", "--board", "FW", "--schedule", "async_random_fair", "--graph", "grid:2x3", "--seed", "4",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(field(&stdout(&o), "status"), "met");
}

#[test]
fn trace_schema() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let o = mgossip(&run_seed_args("2", &["--trace", trace.to_str().unwrap()]));
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&trace).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!lines.is_empty());
    for (i, rec) in lines.iter().enumerate() {
        let keys: Vec<&String> = rec.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["acting", "hash", "merges", "moves", "step"]);
        assert_eq!(rec["step"], i as u64 + 1);
        for m in rec["moves"].as_array().unwrap() {
            let mk: Vec<&String> = m.as_object().unwrap().keys().collect();
            assert_eq!(mk, ["accepted", "agent", "from", "to", "via"]);
        }
    }
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("camp.toml");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn fuzz_outputs_and_exit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "graph = \"ring:5\"\nk = 3\nprotocol = \"fw_async_dft\"\nboard = \"FW\"\nschedule = \"async_random_fair\"\nseed_count = 8\n",
    );
    let csv_path = dir.path().join("s.csv");
    let json_path = dir.path().join("r.jsonl");
    let o = mgossip(&[
        "fuzz",
        &cfg,
        "--jobs",
        "2",
        "--summary",
        csv_path.to_str().unwrap(),
        "--reports",
        json_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("seed,status,prefix,period,quiescent,gossip_step,fwd_max,back_max"));
    assert_eq!(lines.count(), 8);
    let reports: Vec<SeedReport> = std::fs::read_to_string(&json_path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(reports.iter().all(|r| r.passed && r.bound_violations == 0));
    assert!(stdout(&o).contains("8/8 seeds passed, 0 move-bound violations"));
}

#[test]
fn fuzz_exit_reflects_failing_seeds() {
    let dir = tempfile::tempdir().unwrap();
    // Seed 1 of this campaign ends in a cycle where every agent keeps
    // moving.
    let cfg = write_config(dir.path(), "graph = \"ring:6\"\nk = 3\nseed_start = 0\nseed_count = 3\n");
    let o = mgossip(&["fuzz", &cfg]);
    assert_eq!(code(&o), 6);
    let o = mgossip(&["fuzz", &cfg, "--seed-start", "2", "--seed-count", "1"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn fuzz_illegal_and_empty() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "board = \"NW\"\n");
    assert_eq!(code(&mgossip(&["fuzz", &cfg])), 3);
    let cfg = write_config(dir.path(), "seed_count = 0\n");
    let csv_path = dir.path().join("s.csv");
    let o = mgossip(&["fuzz", &cfg, "--summary", csv_path.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(csv.lines().count(), 1);
    let cfg = write_config(dir.path(), "k = \"three\"\n");
    assert_eq!(code(&mgossip(&["fuzz", &cfg])), 1);
}

#[test]
fn witnesses() {
    let o = mgossip(&["witness", "symmetry", "--n", "6", "--k", "2", "--board", "CW"]);
    assert_eq!(code(&o), 0);
    assert_eq!(field(&stdout(&o), "meetings"), "0");
    assert_eq!(code(&mgossip(&["witness", "symmetry", "--n", "6", "--k", "4"])), 4);

    let o = mgossip(&["witness", "mirror", "--graph", "ring:4", "--k", "2"]);
    assert_eq!(code(&o), 0);
    assert_eq!(field(&stdout(&o), "cross_tokens_exchanged"), "false");
    // Freezing only the movers lets the parked agents time out and cross.
    let o = mgossip(&["witness", "mirror", "--graph", "ring:4", "--k", "2", "--freeze", "movers"]);
    assert_eq!(code(&o), 6);
    assert_eq!(field(&stdout(&o), "cross_tokens_exchanged"), "true");
    assert_eq!(code(&mgossip(&["witness", "mirror", "--graph", "ring:4", "--k", "4"])), 4);
}

#[test]
fn identical_command_lines_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for tag in ["a", "b"] {
        let t = dir.path().join(format!("t{tag}.jsonl"));
        let r = dir.path().join(format!("r{tag}.json"));
        let o = mgossip(&run_seed_args("5", &["--trace", t.to_str().unwrap(), "--report", r.to_str().unwrap()]));
        outputs.push((std::fs::read(&t).unwrap(), std::fs::read(&r).unwrap(), o.stdout));
    }
    assert_eq!(outputs[0], outputs[1]);

    let cfg = write_config(dir.path(), "graph = \"random:7:3:2\"\nk = 3\nseed_count = 6\n");
    let mut csvs = Vec::new();
    for jobs in ["1", "3"] {
        let s = dir.path().join(format!("s{jobs}.csv"));
        let r = dir.path().join(format!("r{jobs}.jsonl"));
        mgossip(&["fuzz", &cfg, "--jobs", jobs, "--summary", s.to_str().unwrap(), "--reports", r.to_str().unwrap()]);
        csvs.push((std::fs::read(&s).unwrap(), std::fs::read(&r).unwrap()));
    }
    assert_eq!(csvs[0], csvs[1]);
}
