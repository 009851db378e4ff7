use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hri_interface::cli::{parse_g, EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_SOLVER, OUT_ENV};
use hri_interface::obschannel::{pnm, synthetic};
use tempfile::TempDir;

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hri-interface"));
    c.env_remove(OUT_ENV);
    c
}

fn run(cmd: &str, config: &Path, out: &Path) -> Output {
    bin()
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Small problem that solves in well under a second.
fn small_problem(extra: &str) -> String {
    format!(
        r#"schema = "hri-interface/1"

[problem]
x_initial = [0.0, 0.0, 0.0]
x_final = [2.0, 1.0, 0.5]
horizon = 4.0
knots = 4
dt = 0.1
seeds = 2
max_evals = 3000
{extra}
[problem.weights]
alpha = 250.0
beta = 10.0
gamma = 5.0
delta = 10.0
effort_metric = [[10.0, 0.0], [0.0, 0.5]]
"#
    )
}

fn write_config(dir: &TempDir, text: &str) -> PathBuf {
    let p = dir.path().join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn negative_weight_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, &small_problem("").replace("alpha = 250.0", "alpha = -1.0"));
    let o = run("optimize", &cfg, &dir.path().join("out"));
    assert_eq!(code(&o), EXIT_CONFIG);
    assert!(stderr(&o).contains("alpha"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, &small_problem("horizn = 3.0\n"));
    let o = run("optimize", &cfg, &dir.path().join("out"));
    assert_eq!(code(&o), EXIT_CONFIG);
    assert!(stderr(&o).contains("horizn"), "{}", stderr(&o));
}

#[test]
fn missing_script_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let text = r#"schema = "hri-interface/1"
[interface]
g = [[0.0, 2.0], [2.0, 0.0]]
[simulate]
script = "nowhere.csv"
"#;
    let o = run("simulate", &write_config(&dir, text), &dir.path().join("out"));
    assert_eq!(code(&o), EXIT_CONFIG);
    assert!(stderr(&o).contains("nowhere.csv"), "{}", stderr(&o));
}

#[test]
fn corrupt_image_header_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("bad.ppm"), b"P6\n4 x\n255\n\0\0\0").unwrap();
    let text = r#"schema = "hri-interface/1"
[channel]
corpus = ["bad.ppm"]
candidates = ["identity"]
budget = [{ start = 0.0, bits = 1000 }]
"#;
    let o = run("channel-eval", &write_config(&dir, text), &dir.path().join("out"));
    assert_eq!(code(&o), EXIT_CONFIG, "{}", stderr(&o));
}

#[test]
fn malformed_axis_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let text = r#"schema = "hri-interface/1"
[interface]
g = [[0.0, 2.0], [2.0, 0.0]]
[props]
samples = 100
symmetry_axes = ["sideways"]
"#;
    let o = run("props", &write_config(&dir, text), &dir.path().join("out"));
    assert_eq!(code(&o), EXIT_CONFIG);
    assert!(stderr(&o).contains("sideways"), "{}", stderr(&o));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, &small_problem(""));
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let o = run("optimize", &cfg, &blocker.join("out"));
    assert_eq!(code(&o), EXIT_IO, "{}", stderr(&o));
}

#[test]
fn stalled_search_reports_solver_diagnostic() {
    let dir = TempDir::new().unwrap();
    let text = small_problem("method = \"gradient-descent\"\n")
        .replace("knots = 4", "knots = 2")
        .replace("max_evals = 3000", "max_evals = 9");
    let out = dir.path().join("out");
    let o = run("optimize", &write_config(&dir, &text), &out);
    assert_eq!(code(&o), EXIT_SOLVER, "{}", stderr(&o));
    assert!(out.join("g.txt").exists(), "best attempt is still written");
}

#[test]
fn output_dir_from_environment() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, &small_problem(""));
    let out = dir.path().join("from-env");
    let o = bin()
        .args(["optimize", "--config"])
        .arg(&cfg)
        .env(OUT_ENV, &out)
        .output()
        .unwrap();
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    assert!(out.join("g.txt").exists());
}

fn last_state_from_trajectory(csv_text: &str) -> [f64; 3] {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = r.headers().unwrap().clone();
    let last = r.records().last().unwrap().unwrap();
    let col = |name: &str| last[headers.iter().position(|h| h == name).unwrap()].parse::<f64>().unwrap();
    [col("x"), col("y"), col("theta")]
}

#[test]
fn replay_follows_the_optimized_trajectory() {
    let dir = TempDir::new().unwrap();
    let opt_out = dir.path().join("opt");
    let text = small_problem("");
    let o = run("optimize", &write_config(&dir, &text), &opt_out);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    let expected = last_state_from_trajectory(&fs::read_to_string(opt_out.join("trajectory.csv")).unwrap());
    let g = parse_g(&fs::read_to_string(opt_out.join("g.txt")).unwrap()).unwrap();
    assert!(g.iter().all(|v| v.is_finite()));

    let replay = format!("{text}\n[simulate]\nreplay = {{ g = \"opt/g.txt\", actions = \"opt/actions.csv\" }}\n");
    let cfg = dir.path().join("replay.toml");
    fs::write(&cfg, replay).unwrap();
    let sim_out = dir.path().join("sim");
    let o = run("simulate", &cfg, &sim_out);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));

    let log = fs::read_to_string(sim_out.join("session.jsonl")).unwrap();
    let last: serde_json::Value = serde_json::from_str(log.lines().last().unwrap()).unwrap();
    let got = [
        last["x"].as_f64().unwrap(),
        last["y"].as_f64().unwrap(),
        last["theta"].as_f64().unwrap(),
    ];
    for (a, b) in got.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-9, "replay ended at {got:?}, optimizer at {expected:?}");
    }
}

#[test]
fn zero_map_loses_completeness() {
    let dir = TempDir::new().unwrap();
    let text = r#"schema = "hri-interface/1"
[interface]
g = [[0.0, 0.0], [0.0, 0.0]]
[props]
samples = 200
[props.completeness]
pairs = 10
horizon = 1.5
grid = { cell = 0.5, headings = 8, x_range = [0.0, 3.0], y_range = [0.0, 3.0] }
"#;
    let out = dir.path().join("out");
    let o = run("props", &write_config(&dir, text), &out);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    let reports: Vec<serde_json::Value> =
        serde_json::from_str(&fs::read_to_string(out.join("props.json")).unwrap()).unwrap();
    let c = reports.iter().find(|r| r["principle"] == "completeness").unwrap();
    assert!(c["statistic"].as_f64().unwrap() < 1.0, "{c}");
    assert_eq!(c["passed"], false);
}

#[test]
fn stationary_goal_costs_nothing() {
    let dir = TempDir::new().unwrap();
    let o = run("optimize", &crate_dir().join("configs/stationary.toml"), dir.path());
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    let cost: toml::Table = fs::read_to_string(dir.path().join("cost.toml")).unwrap().parse().unwrap();
    assert!(cost["total"].as_float().unwrap() < 1e-6, "{cost}");
}

#[test]
fn bundled_corpus_matches_generator() {
    for (i, expected) in synthetic::pool_corpus().iter().enumerate() {
        let path = crate_dir().join(format!("data/pool/pool-{i}.ppm"));
        let bytes = fs::read(&path).unwrap();
        let img = pnm::decode(&bytes).unwrap();
        assert!(img == *expected, "{} differs from the generator", path.display());
        assert!(pnm::encode(&img) == bytes, "{} does not re-encode bit-exactly", path.display());
    }
}

#[test]
fn seed_flag_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, &small_problem(""));
    let outs: Vec<Vec<u8>> = ["3", "3"]
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let out = dir.path().join(format!("o{i}"));
            let o = bin()
                .args(["optimize", "--seed", s, "--config"])
                .arg(&cfg)
                .arg("--out")
                .arg(&out)
                .output()
                .unwrap();
            assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
            fs::read(out.join("actions.csv")).unwrap()
        })
        .collect();
    assert!(outs[0] == outs[1]);
}
