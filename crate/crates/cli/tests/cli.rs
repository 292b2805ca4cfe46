use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn dynorm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynorm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

#[test]
fn aggregate_borda_on_updated_election() {
    let v = json(&dynorm(&[
        "aggregate",
        fixture("election_32_updated.json").to_str().unwrap(),
        "--rule",
        "borda",
    ]));
    assert_eq!(v["scores"]["D"], "3/4");
    assert_eq!(v["scores"]["C"], "0");
    assert_eq!(v["scores"]["B"], "-1/4");
    assert_eq!(v["scores"]["A"], "-1/2");
    assert_eq!(v["rule"], "borda");
}

#[test]
fn aggregate_ranked_pairs_on_70_20_10() {
    let v = json(&dynorm(&[
        "aggregate",
        fixture("election_70_20_10.json").to_str().unwrap(),
        "--rule",
        "ranked-pairs",
    ]));
    assert_eq!(v["ranking"], serde_json::json!([["A"], ["B"], ["C"]]));
    assert!(v["trace"]["locked"].as_array().unwrap().len() >= 2);
}

#[test]
fn aggregate_reports_tally_on_request() {
    let v = json(&dynorm(&[
        "aggregate",
        fixture("election_32_updated.json").to_str().unwrap(),
        "--tally",
        "split-half",
    ]));
    assert_eq!(v["tally"]["convention"], "split-half");
    // C over D strictly in 13/32, D over C in 11/32, plus half of the tied 8/32 each.
    let alts: Vec<String> = serde_json::from_value(v["tally"]["alternatives"].clone()).unwrap();
    let (c, d) = (
        alts.iter().position(|a| a == "C").unwrap(),
        alts.iter().position(|a| a == "D").unwrap(),
    );
    let cd = v["tally"]["support"][c][d].as_str().unwrap().to_string();
    let dc = v["tally"]["support"][d][c].as_str().unwrap().to_string();
    assert_eq!((cd.as_str(), dc.as_str()), ("17/32", "15/32"));
}

#[test]
fn aggregate_elo_uses_k_factor() {
    let a = json(&dynorm(&[
        "aggregate",
        fixture("election_70_20_10.json").to_str().unwrap(),
        "--rule",
        "elo",
    ]));
    let b = json(&dynorm(&[
        "aggregate",
        fixture("election_70_20_10.json").to_str().unwrap(),
        "--rule",
        "elo",
        "--k-factor",
        "64",
    ]));
    assert_eq!(a["trace"]["k_factor"], 32.0);
    assert_eq!(b["trace"]["k_factor"], 64.0);
}

#[test]
fn malformed_profile_exits_2_with_report() {
    let out = dynorm(&[
        "aggregate",
        fixture("malformed_profile.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing-alternative"));
    assert!(out.stdout.is_empty());
}

#[test]
fn unknown_rule_and_criterion_exit_2() {
    assert_eq!(
        dynorm(&["audit", "--rule", "nosuch", "--criterion", "iia"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        dynorm(&["audit", "--rule", "borda", "--criterion", "nosuch"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(dynorm(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn audit_borda_condorcet_loser_holds() {
    let v = json(&dynorm(&[
        "audit",
        "--rule",
        "borda",
        "--criterion",
        "condorcet-loser",
        "--trials",
        "1000",
    ]));
    assert_eq!(v["outcome"], "holds");
    assert_eq!(v["criterion"], "condorcet-loser");
    assert_eq!(v["rule"], "borda");
}

#[test]
fn audit_writes_witness_to_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("verdict.json");
    let out = dynorm(&[
        "--out",
        path.to_str().unwrap(),
        "audit",
        "--rule",
        "plurality",
        "--criterion",
        "condorcet-winner",
        "--trials",
        "500",
        "--seed",
        "1",
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["outcome"], "violated");
    assert!(v["witness"]["profile"]["universe"].is_array());
}

#[test]
fn fit_bt_symmetric_gives_equal_strengths() {
    let v = json(&dynorm(&[
        "fit-bt",
        fixture("bt_symmetric.csv").to_str().unwrap(),
    ]));
    let s: Vec<f64> = v["strengths"]
        .as_object()
        .unwrap()
        .values()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert_eq!(s.len(), 3);
    assert!(s.iter().all(|x| (x - 1.0).abs() < 1e-9));
}

#[test]
fn malformed_csv_lists_line_numbers() {
    let out = dynorm(&[
        "fit-bt",
        fixture("comparisons_malformed.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("lines 3, 4, 5"), "{err}");
}

#[test]
fn dpo_demo_starts_at_ln2_and_improves() {
    let v = json(&dynorm(&[
        "dpo-demo",
        fixture("comparisons_toy.csv").to_str().unwrap(),
        "--beta",
        "0.5",
        "--steps",
        "20",
    ]));
    let series = v["series"].as_array().unwrap();
    assert!((series[0]["loss"].as_f64().unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    assert!(series[20]["loss"].as_f64().unwrap() < series[0]["loss"].as_f64().unwrap());
}

#[test]
fn gate_selects_and_falls_back() {
    let v = json(&dynorm(&[
        "gate",
        fixture("gate_candidates.json").to_str().unwrap(),
        "--threshold",
        "0.5",
    ]));
    assert_eq!(v["selected"], "r2");
    assert_eq!(v["blocked"], serde_json::json!(["r1"]));
    let v = json(&dynorm(&[
        "gate",
        fixture("gate_all_blocked.json").to_str().unwrap(),
        "--threshold",
        "0.5",
        "--fallback",
        "refuse",
    ]));
    assert_eq!(v["selected"], "refuse");
    assert_eq!(v["flag"], "safety-protocol");
}

#[test]
fn gridworld_run_writes_metrics_traces_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (traces, csv) = (dir.path().join("traces.jsonl"), dir.path().join("traj.csv"));
    let out = dynorm(&[
        "gridworld",
        fixture("gridworld_reward_hack.json").to_str().unwrap(),
        "--traces",
        traces.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    let v = json(&out);
    assert_eq!(v["loop_exploit_detected"], true);
    assert_eq!(
        std::fs::read_to_string(&traces).unwrap().lines().count(),
        10
    );
    let csv_text = std::fs::read_to_string(&csv).unwrap();
    assert!(csv_text.starts_with("episode,t,state,action,reward,next_state,done"));
}

#[test]
fn gridworld_sweep_gives_one_record_per_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.json");
    std::fs::write(
        &cfg,
        r#"{"env": "side-effect", "agent": "aup", "sigma": [0.0, 10.0, 100.0], "n_aux": 2, "episodes": 500, "eval_episodes": 2, "seed": 1}"#,
    )
    .unwrap();
    let out = dynorm(&["gridworld", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    let lines: Vec<serde_json::Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let sigmas: Vec<f64> = lines.iter().map(|l| l["sigma"].as_f64().unwrap()).collect();
    assert_eq!(sigmas, vec![0.0, 10.0, 100.0]);
}

#[test]
fn gridworld_invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    for text in [
        r#"{"env": "nowhere", "agent": "vanilla", "episodes": 10}"#,
        r#"{"env": "side-effect", "agent": "aup", "episodes": 10}"#,
        r#"{"env": "side-effect", "agent": "vanilla", "episodes": 10, "discount": 1.5}"#,
    ] {
        std::fs::write(&cfg, text).unwrap();
        assert_eq!(
            dynorm(&["gridworld", cfg.to_str().unwrap()]).status.code(),
            Some(2),
            "{text}"
        );
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let args = [
        "audit",
        "--rule",
        "ranked-pairs",
        "--criterion",
        "participation",
        "--trials",
        "2000",
        "--seed",
        "3",
    ];
    assert_eq!(dynorm(&args).stdout, dynorm(&args).stdout);
    let g = fixture("gridworld_power_mdp.json");
    let args = ["gridworld", g.to_str().unwrap()];
    assert_eq!(dynorm(&args).stdout, dynorm(&args).stdout);
}
