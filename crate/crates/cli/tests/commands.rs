use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hilfer_lab::special_functions::{gamma, mittag_leffler, MlfParams};

const WORKED: &str = include_str!("../examples/worked.toml");

fn hilfer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hilfer")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(command: &str, text: &str, extra: &[&str]) -> (Output, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), text);
    let out = dir.path().join("out");
    let mut args = vec![command, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    (hilfer(&args), dir)
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let headers = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (headers, rows)
}

#[test]
fn check_certifies_the_worked_problem() {
    let (output, dir) = run("check", WORKED, &[]);
    assert_eq!(output.status.code(), Some(0));
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("theta            1.20360444490"), "{stdout}");
    let (headers, rows) = read_csv(&dir.path().join("out/hypotheses.csv"));
    assert_eq!(headers[0], "theta");
    assert_eq!(rows[0][11], "true");
}

#[test]
fn check_reports_uncertified_hypotheses() {
    // declared L_f scaled by 2 / Theta
    let text = WORKED.replace("r = 0.5\n", "r = 0.5\nlipschitz_f = 0.83\n");
    let (output, _dir) = run("check", &text, &["--debug"]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8(output.stdout).unwrap().contains("variant"));
}

#[test]
fn malformed_configs_exit_one_with_a_diagnostic() {
    let (output, _dir) = run("check", "[problem\nalpha = 0.5", &[]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("line 1"), "{stderr}");

    let (output, _dir) = run("solve", &WORKED.replace("kind = \"identity\"", "kind = \"cubic\""), &[]);
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8(output.stderr).unwrap().contains("problem.psi.kind"));

    let (output, _dir) = run("stability", &WORKED.replace("epsilon = [1e-2, 1e-3]", "epsilon = [0.0]"), &[]);
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8(output.stderr).unwrap().contains("epsilon"));

    assert_eq!(hilfer(&["solve"]).status.code(), Some(1));
    assert_eq!(hilfer(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(hilfer(&["--help"]).status.code(), Some(0));
}

#[test]
fn zero_forcing_keeps_the_weighted_column_constant() {
    let text = WORKED
        .replace("beta = 1.0", "beta = 0.5")
        .replace("kind = \"linear\", params = [0.05, 0.05, 0.05, 0.0]", "kind = \"zero\"")
        .replace("h = { kind = \"linear\", params = [0.1, 0.1] }\n", "");
    let (output, dir) = run("solve", &text, &["--grid", "200"]);
    assert_eq!(output.status.code(), Some(0));
    let (headers, rows) = read_csv(&dir.path().join("out/solution.csv"));
    assert_eq!(headers, ["t", "psi_t", "weighted_u", "u", "residual_iter_count"]);
    let expected = 1.0 / gamma(0.75).unwrap();
    let mut solution_rows = 0;
    for row in &rows {
        let t: f64 = row[0].parse().unwrap();
        if t < 0.0 {
            assert!(row[2].is_empty());
            assert_eq!(row[3].parse::<f64>().unwrap(), 1.0);
        } else {
            solution_rows += 1;
            let w: f64 = row[2].parse().unwrap();
            assert!((w - expected).abs() < 1e-14);
        }
    }
    assert_eq!(solution_rows, 201);
}

#[test]
fn linear_problem_matches_the_closed_form() {
    let text = WORKED
        .replace("beta = 1.0", "beta = 0.5")
        .replace("params = [0.05, 0.05, 0.05, 0.0]", "params = [0.2, 0.0, 0.0, 0.0]")
        .replace("h = { kind = \"linear\", params = [0.1, 0.1] }\n", "");
    let (output, dir) = run("solve", &text, &["--format", "json"]);
    assert_eq!(output.status.code(), Some(0));
    let rows: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/solution.json")).unwrap()).unwrap();
    let params = MlfParams::two(0.5, 0.75);
    let mut checked = 0;
    for row in rows.as_array().unwrap() {
        let t = row["t"].as_f64().unwrap();
        if let Some(w) = row["weighted_u"].as_f64() {
            assert!((w - mittag_leffler(&params, 0.2 * t.sqrt()).unwrap()).abs() < 1e-3);
            checked += 1;
        }
    }
    assert_eq!(checked, 1001);
}

#[test]
fn unconverged_solve_exits_three() {
    let text = WORKED.replace("max_iter = 200", "max_iter = 1");
    let (output, _dir) = run("solve", &text, &["--grid", "100"]);
    assert_eq!(output.status.code(), Some(3));
    assert!(String::from_utf8(output.stdout).unwrap().contains("converged        false"));
}

#[test]
fn stability_rows_follow_config_order() {
    let (output, dir) = run("stability", WORKED, &["--grid", "200"]);
    assert_eq!(output.status.code(), Some(0));
    let (headers, rows) = read_csv(&dir.path().join("out/stability.csv"));
    assert_eq!(&headers[..5], ["shape", "epsilon", "c_theoretical", "c_empirical", "passed"]);
    assert_eq!(rows.len(), 6);
    let shapes: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(shapes, ["constant", "constant", "sine(6)", "sine(6)", "random(44,6)", "random(44,6)"]);
    assert!(rows.iter().all(|r| r[4] == "true"));
    assert!(rows.iter().all(|r| r[5] == rows[0][5]));
    for k in 0..6 {
        let (_, profile) = read_csv(&dir.path().join(format!("out/profile_{k:03}.csv")));
        for row in &profile {
            if row[0].parse::<f64>().unwrap() < 0.0 {
                assert_eq!(row[1].parse::<f64>().unwrap(), 0.0);
            }
        }
    }
}

#[test]
fn seed_flag_changes_random_shapes_only() {
    let (_, a) = run("stability", WORKED, &["--grid", "100"]);
    let (_, b) = run("stability", WORKED, &["--grid", "100", "--seed", "5"]);
    let (_, rows_a) = read_csv(&a.path().join("out/stability.csv"));
    let (_, rows_b) = read_csv(&b.path().join("out/stability.csv"));
    assert_eq!(rows_a[..4], rows_b[..4]);
    assert_ne!(rows_a[4], rows_b[4]);
}

#[test]
fn verify_operators_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let output = hilfer(&["verify-operators", "--psi", "identity", "--grid", "200,400,800", "--out", out]);
    assert_eq!(output.status.code(), Some(0));
    let (_, rows) = read_csv(&dir.path().join("operators.csv"));
    let errors = |identity: &str| -> Vec<f64> {
        rows.iter()
            .filter(|r| r[0] == identity)
            .map(|r| r[3].parse().unwrap())
            .collect()
    };
    for identity in ["power-rule", "semigroup"] {
        let e = errors(identity);
        assert!(e[0] > e[1] && e[1] > e[2], "{identity}: {e:?}");
    }
    assert!(errors("classical").iter().all(|&e| e < 1e-12));
    assert_eq!(hilfer(&["verify-operators", "--grid", "10,x"]).status.code(), Some(1));
    assert_eq!(hilfer(&["verify-operators", "--psi", "cubic", "--grid", "10"]).status.code(), Some(1));
}

#[test]
fn corpus_seeds_parse_without_panicking() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    let mut seen = 0;
    for target in ["config_parse", "config_build"] {
        for entry in std::fs::read_dir(root.join(target)).unwrap() {
            let bytes = std::fs::read(entry.unwrap().path()).unwrap();
            if let Ok(text) = std::str::from_utf8(&bytes) {
                let _ = text.parse::<hilfer_cli::ExperimentConfig>();
            }
            seen += 1;
        }
    }
    for entry in std::fs::read_dir(root.join("grid_list")).unwrap() {
        let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
        let _ = hilfer_cli::parse_grid_list(&text);
        seen += 1;
    }
    assert!(seen > 0);
    let build = |name: &str| std::fs::read_to_string(root.join("config_build").join(name)).unwrap().parse::<hilfer_cli::ExperimentConfig>();
    assert!(build("hilfer_exponential.toml").is_ok());
    assert!(matches!(
        build("delay_out_of_range.toml"),
        Err(hilfer_cli::ConfigError::Invalid { .. })
    ));
}
