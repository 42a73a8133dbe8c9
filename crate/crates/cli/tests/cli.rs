use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 5

[run]
n_list = [64]
trials = 2000
fields = 4
max_attempts = 1000000

[truncation]
k = 40
backward_trials = 20
radii = [1.0]
k_max = 50
grid = 5
"#;

fn branchfield(args: &[&str], config: &str, dir: &Path) -> Output {
    let path = dir.join("config.toml");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_branchfield"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .env_remove("BRANCHFIELD_WORKERS")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn h1_in_two_dimensions_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = branchfield(&["survival"], "[laws]\ndimension = 2\n", dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("H1 requires d >= 3"), "{}", stderr(&o));
}

#[test]
fn h3_below_critical_dimension_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[laws]\nhypothesis = \"H3\"\ndimension = 2\nalpha = 1.0\nfamily = \"beta\"\nbeta = 0.4\n";
    let o = branchfield(&["survival"], cfg, dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("d > alpha/beta"), "{}", stderr(&o));
}

#[test]
fn unknown_key_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let o = branchfield(&["survival"], "[run]\ntrails = 3\n", dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("trails"), "{}", stderr(&o));
}

#[test]
fn lattice_checks_need_h2() {
    let dir = tempfile::tempdir().unwrap();
    let o = branchfield(&["llt"], TINY, dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("hypothesis = \"H2\""), "{}", stderr(&o));
}

#[test]
fn exhausted_rejection_sampler_is_a_resource_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TINY.replace("max_attempts = 1000000", "max_attempts = 1");
    let o = branchfield(&["sample-na"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn estimators_write_json_with_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["survival", "estimate-i", "lower-bound", "sample-na", "build-lambda"] {
        let o = branchfield(&[cmd], TINY, dir.path());
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", stderr(&o));
        let text = std::fs::read_to_string(dir.path().join("out").join(format!("{cmd}.json"))).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["config"]["seed"], 5);
        assert_eq!(v["config"]["geometry"]["center"], serde_json::json!([0.0, 0.0, 0.0]));
        assert!(dir.path().join("out").join(format!("{cmd}.meta.json")).exists());
    }
    let points = std::fs::read_to_string(dir.path().join("out/sample-na_points.csv")).unwrap();
    assert!(points.starts_with("sample,x1,x2,x3\n"));
    let table = std::fs::read_to_string(dir.path().join("out/survival_estimates.csv")).unwrap();
    assert!(table.starts_with("n,estimate,se,lower,upper\n"));
}

#[test]
fn h2_lattice_checks_pass() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[laws]\nhypothesis = \"H2\"\n[run]\nn_list = [8, 16, 32]\n";
    for cmd in ["llt", "heat-kernel"] {
        let o = branchfield(&[cmd], cfg, dir.path());
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", stderr(&o));
    }
    assert!(dir.path().join("out/llt_sup_error.csv").exists());
}

#[test]
fn seed_flag_and_worker_env_are_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.toml");
    std::fs::write(&path, TINY).unwrap();
    let run = |workers: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_branchfield"))
            .args(["survival", "--seed", "11", "--config"])
            .arg(&path)
            .arg("--out")
            .arg(dir.path().join(workers))
            .env("BRANCHFIELD_WORKERS", workers)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(workers).join("survival.json")).unwrap()).unwrap();
        assert_eq!(v["config"]["seed"], 11);
        assert_eq!(v["config"]["workers"], workers.parse::<u64>().unwrap());
        v["results"].clone()
    };
    assert_eq!(run("1"), run("2"));
}
