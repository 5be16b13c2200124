use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const FORWARD: &str = r#"
seed = 11
replicas = 12
theta = 0.3
times = [0.5, 1.0]
g = { variant = "fisher_wright", d = 1.0 }

[system]
model = "M1"
geography = { family = "torus", d = 1, n = 2 }
kernel = { variant = "nearest_neighbour", rate = 0.5 }
seedbank = { provenance = "explicit", K = [1.0], e = [1.0] }
"#;

const DUAL: &str = r#"
seed = 5
d = 1.0
horizon = 5.0
replicas = 10
lineages = [{ site = 0 }, { site = 1 }, { site = 2, mode = { Dormant = 1 } }]
hazard = { horizon = 20.0, replicas = 40 }

[system]
model = "M2"
geography = { family = "torus", d = 1, n = 2 }
kernel = { variant = "nearest_neighbour", rate = 0.5 }
seedbank = { provenance = "polynomial", A = 1.0, alpha = 0.5, B = 1.0, beta = 1.0, depth = { rule = "constant", M = 1 } }
"#;

const CRITERIA: &str = r#"
[[examples]]
example = "euclidean"
d = 1.0
gamma = 0.9

[[integrals]]
return_probability = { kind = "power_law", c = 1.0, a = 0.5 }
criterion = { mode = "finite_rho" }
horizon = 1e4
"#;

const RENEWAL: &str = "seed = 9\ngammas = [0.8]\nhorizon = 10000\nreplicas = 20\n";

const FSS: &str = r#"
[experiment]
geography = { family = "torus", d = 1 }
ladder = [2, 3]
kernel = { variant = "nearest_neighbour", rate = 0.5 }
seedbank = { provenance = "explicit", K = [1.0], e = [1.0] }
model = "M1"
g = { variant = "fisher_wright", d = 1.0 }
theta = 0.5
replicas = 10
times = [0.1, 0.2]
seed = 4

[fg]
thetas = [0.3, 0.6]
window = 5.0
burn_in_factor = 1.0
hazard_horizon = 20.0
hazard_replicas = 30
reference = { replicas = 20, dt = 0.01 }

[trapping]
horizon = 0.5
"#;

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seedbank-lab")).args(args).output().expect("binary runs")
}

fn run(cmd: &str, config: &str, dir: &Path, extra: &[&str]) -> Output {
    let cfg = dir.join(format!("{cmd}.toml"));
    fs::write(&cfg, config).unwrap();
    let out = dir.join(format!("out-{cmd}-{}", extra.join("-")));
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    lab(&args)
}

fn out_dir(dir: &Path, cmd: &str, extra: &[&str]) -> PathBuf {
    dir.join(format!("out-{cmd}-{}", extra.join("-")))
}

/// Sorted `(name, bytes)` of every CSV and JSONL file.
fn data_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "jsonl")))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn every_subcommand_writes_its_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: [(&str, &str, &[&str]); 5] = [
        ("forward", FORWARD, &["trajectories.csv", "summary.jsonl", "theta_hat.svg"]),
        ("dual", DUAL, &["replicas.csv", "events.jsonl", "hazard.csv", "hazard.svg"]),
        ("criteria", CRITERIA, &["verdicts.csv", "verdicts.jsonl"]),
        ("renewal", RENEWAL, &["renewal.csv", "tails.csv", "renewal.jsonl", "tails.svg"]),
        ("fss", FSS, &["paths.csv", "rungs.jsonl", "fg.csv", "fg.svg", "reference.csv", "trapping.csv", "theta_hat.svg"]),
    ];
    for (cmd, cfg, files) in cases {
        let o = run(cmd, cfg, tmp.path(), &[]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        let dir = out_dir(tmp.path(), cmd, &[]);
        for f in files.iter().chain(&["manifest.json", "config.resolved.toml"]) {
            assert!(dir.join(f).exists(), "{cmd} is missing {f}");
        }
        assert_eq!(manifest(&dir)["command"], cmd);
    }
    let csv = fs::read_to_string(out_dir(tmp.path(), "forward", &[]).join("trajectories.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "replica,time,theta_hat,theta_x,diversity,qvar");
    assert_eq!(csv.lines().count(), 1 + 12 * 2);
    let events = fs::read_to_string(out_dir(tmp.path(), "dual", &[]).join("events.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(events.lines().next().unwrap()).unwrap();
    assert!(first.get("replica").is_some() && first.get("type").is_some());
    let verdicts = fs::read_to_string(out_dir(tmp.path(), "criteria", &[]).join("verdicts.csv")).unwrap();
    assert!(verdicts.lines().nth(1).unwrap().contains("clustering"));
    assert!(verdicts.lines().nth(2).unwrap().contains("clustering"));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    for (cmd, cfg) in [("forward", FORWARD), ("dual", DUAL), ("renewal", RENEWAL), ("fss", FSS)] {
        let one = ["--threads", "1"];
        let eight = ["--threads", "8"];
        assert!(run(cmd, cfg, tmp.path(), &one).status.success());
        assert!(run(cmd, cfg, tmp.path(), &eight).status.success());
        let a = out_dir(tmp.path(), cmd, &one);
        let b = out_dir(tmp.path(), cmd, &eight);
        let (fa, fb) = (data_files(&a), data_files(&b));
        assert!(!fa.is_empty());
        assert_eq!(fa, fb, "{cmd}");
        assert_eq!(manifest(&a)["manifest_hash"], manifest(&b)["manifest_hash"]);
        assert_eq!(fs::read(a.join("config.resolved.toml")).unwrap(), fs::read(b.join("config.resolved.toml")).unwrap());
    }
}

#[test]
fn seed_flag_overrides_the_configuration() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run("forward", FORWARD, tmp.path(), &[]).status.success());
    assert!(run("forward", FORWARD, tmp.path(), &["--seed", "12"]).status.success());
    let a = out_dir(tmp.path(), "forward", &[]);
    let b = out_dir(tmp.path(), "forward", &["--seed", "12"]);
    assert_eq!(manifest(&b)["master_seed"], 12);
    assert_ne!(manifest(&a)["manifest_hash"], manifest(&b)["manifest_hash"]);
    assert_ne!(data_files(&a), data_files(&b));
    let resolved = fs::read_to_string(b.join("config.resolved.toml")).unwrap();
    assert!(resolved.contains("seed = 12"));
    // The echoed configuration reproduces the run.
    let c = tmp.path().join("again");
    let o = lab(&["forward", "--config", b.join("config.resolved.toml").to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(data_files(&b), data_files(&c));
    assert_eq!(manifest(&b)["manifest_hash"], manifest(&c)["manifest_hash"]);
}

#[test]
fn configuration_errors_exit_with_two_and_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("forward", &FORWARD.replace("theta = 0.3", "theta = 1.2"), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`theta`"));
    let o = run("forward", &FORWARD.replace("rate = 0.5", "rate = 0.5, speed = 2"), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("speed"));
    let o = run("fss", &FSS.replace("ladder = [2, 3]", "ladder = [3, 2]"), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("experiment.ladder"));
    let o = lab(&["forward", "--config", "/nonexistent/forward.toml", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn budget_refusal_exits_with_three_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = FORWARD.replace("seed = 11", "seed = 11\nbudget = 100.0");
    let o = run("forward", &cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget"));
    let dir = out_dir(tmp.path(), "forward", &[]);
    assert!(!dir.join("trajectories.csv").exists() && !dir.join("manifest.json").exists());
    let cfg = FSS.replace("seed = 4", "seed = 4\nbudget = 100.0");
    assert_eq!(run("fss", &cfg, tmp.path(), &[]).status.code(), Some(3));
}

#[test]
fn format_selection_is_honoured() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = format!("output = {{ formats = [\"csv\"] }}\n{FORWARD}");
    let o = run("forward", &cfg, tmp.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = out_dir(tmp.path(), "forward", &[]);
    assert!(dir.join("trajectories.csv").exists());
    assert!(!dir.join("summary.jsonl").exists() && !dir.join("theta_hat.svg").exists());
}

#[test]
fn csv_floats_have_seventeen_significant_digits() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run("forward", FORWARD, tmp.path(), &[]).status.success());
    let path = out_dir(tmp.path(), "forward", &[]).join("trajectories.csv");
    let mut r = csv::Reader::from_path(&path).unwrap();
    for rec in r.records() {
        let rec = rec.unwrap();
        let field = &rec[2];
        let mantissa = field.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
        assert_eq!(mantissa.len(), 17, "{field}");
        let v: f64 = field.parse().unwrap();
        assert_eq!(format!("{v:.16e}"), field);
    }
}
