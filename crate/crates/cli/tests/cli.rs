use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use tsslab_cli::config::{parse_config, parse_config_str, ConfigError, Experiment, EXPERIMENTS};

const MODEL: &str = r#"
[model]
space = [[0.0, 1.0]]
k = 200
birth = { kind = "affine", intercept = 2.0, gradient = [1.0] }
death = { kind = "constant", value = 1.0 }
competition = { kind = "constant", value = 1.0 }
mutation_probability = { kind = "constant", value = 0.5 }
mutation_kernel = { kind = "atomic", rows = [{ source = [0.0], targets = [[1.0]], weights = [1.0] }, { source = [1.0], targets = [[0.0]], weights = [1.0] }] }
"#;

fn config(top: &str, experiment: &str) -> String {
    format!("{top}\n{MODEL}\n[experiment]\n{experiment}\n")
}

struct Run {
    out: PathBuf,
    output: Output,
    _dir: TempDir,
}

impl Run {
    fn code(&self) -> i32 {
        self.output.status.code().unwrap()
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&fs::read_to_string(self.out.join(name)).unwrap()).unwrap()
    }

    fn text(&self, name: &str) -> String {
        fs::read_to_string(self.out.join(name)).unwrap()
    }
}

fn tsslab(subcommand: &str, cfg: &str, extra: &[&str]) -> Run {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(&path, cfg).unwrap();
    let out = dir.path().join("out");
    let output = Command::new(env!("CARGO_BIN_EXE_tsslab"))
        .arg(subcommand)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    Run {
        out,
        output,
        _dir: dir,
    }
}

fn semantic_lines(e: ConfigError) -> Vec<(Option<usize>, String)> {
    match e {
        ConfigError::Semantic(ps) => ps.into_iter().map(|p| (p.line, p.message)).collect(),
        other => panic!("expected a semantic error, got {other:?}"),
    }
}

#[test]
fn minimal_constant_config_parses() {
    let cfg = parse_config_str(
        r#"
seed = 3
[model]
space = [[0.0, 1.0]]
k = 100
birth = { kind = "constant", value = 2.0 }
death = { kind = "constant", value = 1.0 }
competition = { kind = "constant", value = 1.0 }
mutation_probability = { kind = "constant", value = 0.1 }
mutation_kernel = { kind = "gaussian-reflected", sigma = [0.05] }
"#,
    )
    .unwrap();
    assert_eq!(cfg.seed, 3);
    assert_eq!(cfg.model.k, 100);
    assert_eq!(cfg.model.u_k(), 0.0);
    assert!(cfg.experiment.is_none());
    assert_eq!(cfg.threads, None);
}

#[test]
fn equal_birth_and_death_is_located() {
    let src = config("seed = 1", "name = \"simulate-ibm\"").replace(
        "birth = { kind = \"affine\", intercept = 2.0, gradient = [1.0] }",
        "birth = { kind = \"constant\", value = 1.0 }",
    );
    let lines = semantic_lines(parse_config_str(&src).unwrap_err());
    assert_eq!(lines.len(), 1, "{lines:?}");
    let (line, msg) = &lines[0];
    assert_eq!(msg, "b-d>0 fails everywhere");
    let expected = src.lines().position(|l| l.starts_with("birth")).unwrap() + 1;
    assert_eq!(*line, Some(expected));
}

#[test]
fn unknown_experiment_is_semantic() {
    let lines =
        semantic_lines(parse_config_str(&config("seed = 1", "name = \"nope\"")).unwrap_err());
    assert!(lines[0].1.contains("unknown experiment `nope`"));
}

#[test]
fn error_kinds_are_distinct() {
    let missing = parse_config(Path::new("/definitely/not/here.toml")).unwrap_err();
    assert_eq!(missing.kind(), "missing-file");
    let syntax = parse_config_str("seed = 1\n[model\n").unwrap_err();
    assert_eq!(syntax.kind(), "syntax");
    match syntax {
        ConfigError::Syntax(p) => assert_eq!(p.line, Some(2)),
        _ => unreachable!(),
    }
    let semantic = parse_config_str(&config(
        "seed = 0",
        "name = \"lv-ode\"\nx = [0.0]\ny = [1.0]",
    ))
    .unwrap_err();
    assert_eq!(semantic.kind(), "semantic");
    let typo = parse_config_str(&config("seed = 1\nsede = 2", "name = \"lv-ode\"")).unwrap_err();
    assert_eq!(typo.kind(), "semantic");
    let outside = parse_config_str(&config(
        "seed = 1",
        "name = \"lv-ode\"\nx = [0.0]\ny = [2.0]",
    ))
    .unwrap_err();
    assert!(outside.to_string().contains("outside the trait space"));
}

#[test]
fn parameterless_experiments_have_defaults() {
    for name in EXPERIMENTS {
        let needs_params = matches!(name, "lv-ode" | "fixation" | "branching-oracle");
        assert_eq!(Experiment::defaults(name).is_none(), needs_params, "{name}");
    }
}

#[test]
fn simulate_ibm_outputs_are_reproducible() {
    let cfg = config(
        "seed = 5\nthreads = 1",
        "name = \"simulate-ibm\"\ninitial = [{ trait = [0.0], count = 200 }]\nhorizon = 5.0\nsnapshots = 11",
    );
    let a = tsslab("simulate-ibm", &cfg, &[]);
    let b = tsslab("simulate-ibm", &cfg, &[]);
    assert_eq!(a.code(), 0, "{}", String::from_utf8_lossy(&a.output.stderr));
    for f in ["events.csv", "snapshots.csv", "report.json"] {
        assert_eq!(a.text(f), b.text(f), "{f}");
    }
    assert_eq!(
        a.json("manifest.json")["config_sha256"],
        b.json("manifest.json")["config_sha256"]
    );
    let events = a.text("events.csv");
    assert!(events.starts_with("time,kind,x1,child_x1\n"));
    assert!(events.lines().count() > 100);
    let snaps = a.text("snapshots.csv");
    assert!(snaps
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("0.0000000000000000e0,0.0000000000000000e0,200,"));
    let manifest = a.json("manifest.json");
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);

    let c = tsslab("simulate-ibm", &cfg, &["--seed", "6"]);
    assert_ne!(a.text("events.csv"), c.text("events.csv"));
    assert_eq!(c.json("manifest.json")["seed"], 6);
}

#[test]
fn unfit_fixation_fails_with_diagnostic() {
    let cfg = config(
        "seed = 1\nreplicates = 10",
        "name = \"fixation\"\nresident = [1.0]\nmutant = [0.0]",
    );
    let r = tsslab("fixation", &cfg, &[]);
    assert_eq!(r.code(), 3);
    let stderr: Value = serde_json::from_slice(&r.output.stderr).unwrap();
    assert_eq!(stderr["error"]["kind"], "precondition");
    assert!(stderr["error"]["message"]
        .as_str()
        .unwrap()
        .contains("not positive"));
    assert_eq!(r.json("error.json"), stderr);
    let manifest = r.json("manifest.json");
    assert_eq!(manifest["status"], "error");
    assert_eq!(manifest["error_kind"], "precondition");
}

#[test]
fn manifest_is_written_when_the_config_is_missing() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o");
    let status = Command::new(env!("CARGO_BIN_EXE_tsslab"))
        .args(["run", "--config"])
        .arg(dir.path().join("absent.toml"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    let m: Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["error_kind"], "missing-file");
    assert!(m["config_sha256"].is_null());
}

#[test]
fn subcommand_must_match_the_experiment() {
    let cfg = config("seed = 1", "name = \"simulate-tss\"");
    let r = tsslab("lv-ode", &cfg, &[]);
    assert_eq!(r.code(), 2);
    // check-assumptions accepts any config.
    let r = tsslab("check-assumptions", &cfg, &[]);
    assert_eq!(r.code(), 0);
    assert_eq!(r.json("report.json")["valid"], true);
}

#[test]
fn simulate_tss_and_lv_ode() {
    let r = tsslab(
        "run",
        &config(
            "seed = 2",
            "name = \"simulate-tss\"\ntrait = [0.0]\nhorizon = 1e6",
        ),
        &[],
    );
    assert_eq!(r.code(), 0);
    let path = r.text("tss_path.csv");
    let mut lines = path.lines();
    assert_eq!(lines.next(), Some("time,x1,equilibrium_mass"));
    assert_eq!(
        lines.next(),
        Some("0.0000000000000000e0,0.0000000000000000e0,1.0000000000000000e0")
    );
    // From 1 nothing fitter is reachable.
    assert_eq!(r.json("report.json")["final_trait"][0], 1.0);
    assert_eq!(r.json("report.json")["absorbed"], true);

    let r = tsslab(
        "lv-ode",
        &config("seed = 2", "name = \"lv-ode\"\nx = [0.0]\ny = [1.0]"),
        &[],
    );
    assert_eq!(r.code(), 0);
    let report = r.json("report.json");
    assert_eq!(report["classification"], "y-fixates");
    let fin = report["final_state"].as_array().unwrap();
    assert!(fin[0].as_f64().unwrap() < 1e-6);
    assert!((fin[1].as_f64().unwrap() - 2.0).abs() < 1e-6);
    assert_eq!(r.text("lv.csv").lines().count(), 10_002);
}

#[test]
fn statistical_subcommands_run() {
    let r = tsslab(
        "equilibrium",
        &config(
            "seed = 1\nreplicates = 4",
            "name = \"equilibrium\"\ntrait = [0.0]\nhorizon = 20.0",
        ),
        &[],
    );
    assert_eq!(r.code(), 0, "{}", String::from_utf8_lossy(&r.output.stderr));
    let reports = r.json("report.json");
    assert_eq!(reports.as_array().unwrap().len(), 2);
    assert_eq!(reports[0]["experiment"], "equilibrium");
    assert_eq!(reports[1]["experiment"], "stationarity");

    let r = tsslab(
        "tss-vs-ibm",
        &config(
            "seed = 1\nreplicates = 20",
            "name = \"tss-vs-ibm\"\ntrait = [0.0]\ntolerance = 0.5",
        )
        .replace(
            "k = 200",
            "k = 200\nmutation_rate = { kind = \"power\", c = 1.0, a = 2.0 }",
        ),
        &[],
    );
    assert_eq!(r.code(), 0, "{}", String::from_utf8_lossy(&r.output.stderr));
    let reports = r.json("report.json");
    assert_eq!(reports[0]["experiment"], "tss-vs-ibm");
    assert_eq!(reports[1]["experiment"], "tss-waiting");

    // Without mutation the comparison is refused.
    let r = tsslab(
        "tss-vs-ibm",
        &config("seed = 1\nreplicates = 5", "name = \"tss-vs-ibm\""),
        &[],
    );
    assert_eq!(r.code(), 3);
}

#[test]
fn branching_oracle_modes() {
    let modes = [
        "mode = \"extinction\"\nbirth = 2.0\ndeath = 1.0",
        "mode = \"martingale\"\nresident = [0.0]\nmutant = [1.0]\ninitial = 3",
        "mode = \"coupling\"\nresident = [0.0]\nmutant = [1.0]\nepsilon = 0.1",
        "mode = \"exactness\"\nx = [0.0]\ny = [1.0]\ninitial = [50, 5]\nhorizon = 2.0",
    ];
    for mode in modes {
        let cfg = config(
            "seed = 4\nreplicates = 50",
            &format!("name = \"branching-oracle\"\n{mode}"),
        );
        let r = tsslab("branching-oracle", &cfg, &[]);
        assert_eq!(
            r.code(),
            0,
            "{mode}: {}",
            String::from_utf8_lossy(&r.output.stderr)
        );
        let report = r.json("report.json");
        assert_eq!(report["status"]["kind"], "completed", "{mode}");
        if mode.contains("coupling") || mode.contains("exactness") {
            assert_eq!(report["pass"], true, "{mode}");
        }
    }
    let bad = config(
        "seed = 4",
        "name = \"branching-oracle\"\nmode = \"extinction\"\nbirth = 2.0",
    );
    assert_eq!(tsslab("branching-oracle", &bad, &[]).code(), 3);
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = config(
        "seed = 9\nreplicates = 200",
        "name = \"fixation\"\nresident = [0.0]\nmutant = [1.0]",
    );
    let one = tsslab("fixation", &cfg, &["--threads", "1"]);
    let two = tsslab("fixation", &cfg, &["--threads", "2"]);
    assert_eq!(one.code(), 0);
    let (a, b) = (one.json("report.json"), two.json("report.json"));
    assert_eq!(a["outcomes"], b["outcomes"]);
    assert_eq!(a["estimate"], b["estimate"]);
    assert_eq!(two.json("manifest.json")["threads"], 2);
}
