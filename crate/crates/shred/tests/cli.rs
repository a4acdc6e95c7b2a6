use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

fn shred(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shred")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn schema(name: &str) -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name);
    let schema: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn assert_valid(validator: &jsonschema::Validator, doc: &Value) {
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:#?}");
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Independent standard normal predictors `x1..xp` and a Gaussian response
/// `y = Σ beta_k x_k + ε`.
fn gaussian_csv(dir: &Path, n: usize, p: usize, beta: &[(usize, f64)], seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = (1..=p).map(|j| format!("x{j}")).collect::<Vec<_>>().join(",") + ",y\n";
    for _ in 0..n {
        let x: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let noise: f64 = rng.sample(StandardNormal);
        let y = beta.iter().map(|&(j, b)| b * x[j]).sum::<f64>() + noise;
        let row: Vec<String> = x.iter().chain([&y]).map(|v| format!("{v}")).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    let path = dir.join("data.csv");
    fs::write(&path, text).unwrap();
    path
}

fn selected_sets(report: &Value) -> Vec<Vec<String>> {
    report["selected"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["columns"].as_array().unwrap().iter().map(|c| c.as_str().unwrap().to_string()).collect())
        .collect()
}

#[test]
fn select_reports_a_strong_single_signal_as_a_singleton() {
    let dir = tempfile::tempdir().unwrap();
    // Unit noise and a coefficient of 4 on x3: signal-to-noise ratio 16.
    let data = gaussian_csv(dir.path(), 200, 8, &[(2, 4.0)], 11);
    let report = dir.path().join("report.json");
    let out = shred(&[
        "select", "--data", data.to_str().unwrap(), "--response", "y", "--q", "0.05", "--rule", "prds",
        "--output", report.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc = read_json(&report);
    assert_valid(&schema("select_report.schema.json"), &doc);
    let sets = selected_sets(&doc);
    assert!(sets.contains(&vec!["x3".to_string()]), "{sets:?}");
    assert!(sets.iter().all(|s| s.len() == 1 || !s.contains(&"x3".to_string())));
    assert_eq!(doc["rule"], "SHRED_PRDS");
    assert_eq!(doc["rows_used"], 200);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("{x3}"), "{table}");
}

#[test]
fn select_without_output_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let data = gaussian_csv(dir.path(), 80, 4, &[(0, 3.0)], 2);
    let out = shred(&["select", "--data", data.to_str().unwrap(), "--response", "y"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_valid(&schema("select_report.schema.json"), &doc);
}

#[test]
fn select_missing_response_column_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = gaussian_csv(dir.path(), 30, 3, &[], 1);
    let out = shred(&["select", "--data", data.to_str().unwrap(), "--response", "outcome"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("outcome"), "{}", stderr(&out));
}

#[test]
fn select_non_numeric_column_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "a,b,y\n1,2,3\n4,five,6\n7,8,9\n1,3,2\n").unwrap();
    let out = shred(&["select", "--data", path.to_str().unwrap(), "--response", "y"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("`b`"), "{}", stderr(&out));
}

#[test]
fn select_missing_file_exits_2() {
    let out = shred(&["select", "--data", "/nonexistent/shred.csv", "--response", "y"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn select_drops_rows_with_missing_values() {
    let dir = tempfile::tempdir().unwrap();
    let data = gaussian_csv(dir.path(), 60, 3, &[(0, 2.0)], 5);
    let mut text = fs::read_to_string(&data).unwrap();
    text.push_str("1.0,,2.0,3.0\nNA,1,1,1\n");
    fs::write(&data, text).unwrap();
    let report = dir.path().join("r.json");
    let out = shred(&["select", "--data", data.to_str().unwrap(), "--response", "y", "--output", report.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc = read_json(&report);
    assert_eq!(doc["rows_dropped"], 2);
    assert_eq!(doc["rows_used"], 60);
    assert!(stderr(&out).contains("dropped 2"));
}

#[test]
fn select_rank_deficient_design_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut text = String::from("a,b,twice_a,y\n");
    for _ in 0..40 {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        text.push_str(&format!("{a},{b},{},{}\n", 2.0 * a, a + e));
    }
    let path = dir.path().join("collinear.csv");
    fs::write(&path, text).unwrap();
    let out = shred(&["select", "--data", path.to_str().unwrap(), "--response", "y"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("`twice_a`"), "{}", stderr(&out));
}

#[test]
fn select_constant_column_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("const.csv");
    fs::write(&path, "a,c,y\n1,5,1\n2,5,3\n3,5,2\n4,5,5\n5,5,4\n").unwrap();
    let out = shred(&["select", "--data", path.to_str().unwrap(), "--response", "y"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("`c`"), "{}", stderr(&out));
}

#[test]
fn select_invalid_response_for_logistic_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = gaussian_csv(dir.path(), 40, 3, &[(0, 1.0)], 8);
    let out = shred(&["select", "--data", data.to_str().unwrap(), "--response", "y", "--family", "logistic"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn corr_cut_one_matches_bh() {
    let dir = tempfile::tempdir().unwrap();
    let data = gaussian_csv(dir.path(), 150, 12, &[(0, 0.4), (3, 0.3), (5, -0.35), (8, 0.25), (10, 0.2)], 21);
    let run = |extra: &[&str], name: &str| {
        let report = dir.path().join(name);
        let mut args = vec!["select", "--data", data.to_str().unwrap(), "--response", "y", "--output", report.to_str().unwrap()];
        args.extend_from_slice(extra);
        let out = shred(&args);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        read_json(&report)
    };
    let cut = run(&["--rule", "prds", "--corr-cut", "1.0"], "cut.json");
    let bh = run(&["--rule", "bh"], "bh.json");
    assert_eq!(cut["hypotheses"], 12);
    assert_eq!(selected_sets(&cut), selected_sets(&bh));
    assert!(!selected_sets(&bh).is_empty());
    assert_eq!(cut["alpha"], bh["alpha"]);
}

#[test]
fn select_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let data = gaussian_csv(dir.path(), 100, 10, &[(1, 1.0), (2, 1.0)], 4);
    let run = |threads: &str| {
        let out = shred(&["--threads", threads, "select", "--data", data.to_str().unwrap(), "--response", "y", "--rule", "pprds"]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        out.stdout
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn explicit_rule_needs_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let data = gaussian_csv(dir.path(), 40, 3, &[], 1);
    let out = shred(&["select", "--data", data.to_str().unwrap(), "--response", "y", "--rule", "explicit"]);
    assert_eq!(code(&out), 2);
    let out = shred(&[
        "select", "--data", data.to_str().unwrap(), "--response", "y", "--rule", "explicit", "--alpha", "6000",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["alpha"], 6000.0);
    assert_eq!(doc["guaranteed"], false);
}

const MINIMAL_CONFIG: &str = r#"{
  "n": 100, "p": 10, "T": 2, "family": "gaussian", "cov": {"type": "identity"},
  "replicates": 3, "q": 0.05, "seed": 7, "methods": [{"rule": "BH"}]
}"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn simulate_minimal_config_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "c.json", MINIMAL_CONFIG);
    let tsv = dir.path().join("m.tsv");
    let out = shred(&["simulate", config.to_str().unwrap(), "--output", tsv.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(&tsv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2, "{text}");
    assert_eq!(lines[0], "method\trule\tgPower\tSE\tgFDR\tSE\tMSE\tSE");
    assert!(lines[1].starts_with("BH\tPRDS\t"));
    assert!(String::from_utf8(out.stdout).unwrap().contains("3 replicates (0 failed)"));

    let again = dir.path().join("m2.tsv");
    assert_eq!(code(&shred(&["simulate", config.to_str().unwrap(), "--output", again.to_str().unwrap()])), 0);
    assert_eq!(fs::read(&tsv).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn simulate_without_output_prints_tsv() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "c.json", MINIMAL_CONFIG);
    let out = shred(&["simulate", config.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("method\trule"));
}

#[test]
fn simulate_rejects_bad_configs_with_the_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (MINIMAL_CONFIG.replace("0.05", "1.5"), "`q`"),
        (MINIMAL_CONFIG.replace(r#""rule": "BH""#, r#""rule": "BHQ""#), "`methods[0].rule`"),
        (MINIMAL_CONFIG.replace(r#""n": 100"#, r#""n": "many""#), "`n`"),
        (MINIMAL_CONFIG.replace(r#""seed": 7"#, r#""seed": 7, "extra": 1"#), "`extra`"),
        ("{".to_string(), "invalid config"),
    ];
    for (i, (text, needle)) in cases.iter().enumerate() {
        let config = write_config(dir.path(), &format!("bad{i}.json"), text);
        let out = shred(&["simulate", config.to_str().unwrap()]);
        assert_eq!(code(&out), 2, "{text}");
        assert!(stderr(&out).contains(needle), "{} lacks {needle}", stderr(&out));
    }
    let out = shred(&["simulate", "/nonexistent/config.json"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn shipped_scenarios_match_the_config_schema() {
    let validator = schema("scenario_config.schema.json");
    let minimal: Value = serde_json::from_str(MINIMAL_CONFIG).unwrap();
    assert_valid(&validator, &minimal);
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut count = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        assert_valid(&validator, &serde_json::from_str(&text).unwrap());
        shred::simulation::ScenarioConfig::from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        count += 1;
    }
    assert!(count > 0);
    let bad: Value = serde_json::from_str(&MINIMAL_CONFIG.replace("0.05", "1.5")).unwrap();
    assert!(!validator.is_valid(&bad));
}

#[test]
fn verify_defaults_pass() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("v.json");
    let out = shred(&["verify", "--output", report.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc = read_json(&report);
    assert_valid(&schema("verify_report.schema.json"), &doc);
    assert_eq!(doc["trees_checked"], 200);
    assert_eq!(doc["violations"].as_array().unwrap().len(), 0);
}

#[test]
fn verify_injected_nonmonotone_weights_exit_1_with_witness() {
    let out = shred(&["verify", "--trees", "5", "--seed", "3", "--inject-nonmonotone"]);
    assert_eq!(code(&out), 1);
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_valid(&schema("verify_report.schema.json"), &doc);
    let violations = doc["violations"].as_array().unwrap();
    assert!(!violations.is_empty());
    assert!(violations.iter().all(|v| !v["upsets"].as_array().unwrap().is_empty()));
}

#[test]
fn verify_zero_trees_gives_an_empty_report() {
    let out = shred(&["verify", "--trees", "0"]);
    assert_eq!(code(&out), 0);
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_valid(&schema("verify_report.schema.json"), &doc);
    assert_eq!(doc["trees_checked"], 0);
    assert_eq!(doc["violations"].as_array().unwrap().len(), 0);
}

#[test]
fn verify_guard_exits_2() {
    assert_eq!(code(&shred(&["verify", "--leaves-max", "9"])), 2);
    assert_eq!(code(&shred(&["verify", "--leaves-max", "0"])), 2);
}

#[test]
fn verify_is_seed_deterministic() {
    let a = shred(&["--threads", "1", "verify", "--trees", "30", "--seed", "5"]);
    let b = shred(&["--threads", "3", "verify", "--trees", "30", "--seed", "5"]);
    assert_eq!(a.stdout, b.stdout);
    let c = shred(&["verify", "--trees", "30", "--seed", "6"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&shred(&["select"])), 2);
    assert_eq!(code(&shred(&["frobnicate"])), 2);
    assert_eq!(code(&shred(&["select", "--data", "x", "--response", "y", "--linkage", "ward"])), 2);
}
