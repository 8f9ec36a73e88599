use std::path::Path;
use std::process::{Command, Output};

use twostep::montecarlo::{generate, DgpSpec, Family};
use twostep_cli::data::selection_roles;
use twostep_cli::render::{sig6, MC_CSV_HEADER};
use twostep_cli::{load_csv, Sample};

fn twostep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twostep"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generated_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("sample.csv");
    let o = twostep(&["generate", "--spec", "BN", "--k", "6", "--n", "150", "--seed", "42", "--output", path_str(&file)]);
    assert!(stdout(&o).contains("wrote 150 rows"));
    let spec = DgpSpec::new(Family::BN, 6, 150).unwrap();
    let expected = generate(&spec, 42);
    let loaded = load_csv(&file, &selection_roles(3, 6)).unwrap();
    assert_eq!(loaded.dropped, 0);
    match loaded.sample {
        Sample::Selection(s) => assert_eq!(s, expected),
        _ => panic!("expected a selection sample"),
    }
    let raw = std::fs::read(&file).unwrap();
    assert!(!raw.contains(&b'\r'));
}

#[test]
fn mc_table_csv_schema_and_determinism() {
    let args = [
        "mc-table", "--spec", "AN,BN", "--k", "3", "--n", "100", "--reps", "4", "--seed", "9", "--bandwidth", "0.3",
        "--n-starts", "20", "--format", "csv",
    ];
    let a = stdout(&twostep(&args));
    let b = stdout(&twostep(&args));
    assert_eq!(a, b);
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines[0], MC_CSV_HEADER);
    // 2 specs x 3 arms x 3 metrics.
    assert_eq!(lines.len(), 1 + 18);
    for l in &lines[1..] {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f.len(), 9, "{l}");
        assert!(["mae", "mse", "rmse"].contains(&f[4]));
        assert_eq!(f[5], "");
        assert_eq!((f[7], f[8]), ("4", "9"));
        f[6].parse::<f64>().unwrap();
    }
    assert!(!a.contains('\r'));
}

#[test]
fn text_and_csv_agree_to_six_digits() {
    let base = [
        "mc-coverage", "--n", "100", "--reps", "6", "--seed", "5", "--bandwidth", "0.3", "--n-starts", "20",
    ];
    let csv = stdout(&twostep(&[&base[..], &["--format", "csv"]].concat()));
    let text = stdout(&twostep(&[&base[..], &["--format", "text"]].concat()));
    let levels: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(5).unwrap()).collect();
    assert_eq!(levels, ["0.90", "0.95", "0.99", "0.90", "0.95", "0.99"]);
    let data_row = text.lines().find(|l| l.starts_with("AN")).unwrap();
    let text_values: Vec<&str> = data_row.split_whitespace().skip(3).collect();
    let csv_values: Vec<String> = csv
        .lines()
        .skip(1)
        .map(|l| sig6(l.split(',').nth(6).unwrap().parse().unwrap()))
        .collect();
    assert_eq!(text_values, csv_values);
}

#[test]
fn single_cell_has_one_row_per_metric() {
    let csv = stdout(&twostep(&[
        "mc-table", "--n", "100", "--reps", "2", "--seed", "1", "--arms", "nobc", "--format", "csv",
    ]));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn usage_errors_exit_with_code_two() {
    let o = twostep(&["mc-table", "--spec", "XX", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(["AN", "AT", "BN", "BT"].iter().all(|f| err.contains(f)), "{err}");
    assert_eq!(twostep(&["mc-table"]).status.code(), Some(2));
    assert_eq!(twostep(&["bogus"]).status.code(), Some(2));
}

#[test]
fn config_file_and_echo_reproduce_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# table cell\nspec = AN\nn = 100\nreps = 500\nbandwidth = 0.25\nn-starts = 20\n").unwrap();
    let o = twostep(&["mc-table", "--config", path_str(&cfg), "--reps", "3", "--seed", "2", "--format", "csv"]);
    let first = stdout(&o);
    let echo = String::from_utf8_lossy(&o.stderr).to_string();
    assert!(echo.contains("reps = 3"), "{echo}");
    let body: String = echo.lines().skip(1).map(|l| format!("{l}\n")).collect();
    let replay = dir.path().join("replay.cfg");
    std::fs::write(&replay, body).unwrap();
    let again = stdout(&twostep(&["mc-table", "--config", path_str(&replay)]));
    assert_eq!(first, again);
}

fn write_selection_data(dir: &Path) -> std::path::PathBuf {
    let spec = DgpSpec::new(Family::AN, 3, 400).unwrap();
    let s = generate(&spec, 3);
    let file = dir.join("sel.csv");
    let mut text = String::from("id,wage,educ,exper,tenure,a,b,c,work\n");
    for i in 0..s.len() {
        let y = if i == 7 { String::new() } else { s.y[i].to_string() };
        text.push_str(&format!(
            "{i},{y},{},{},{},{},{},{},{}\n",
            s.z[(i, 0)],
            s.z[(i, 1)],
            s.z[(i, 2)],
            s.x[(i, 0)],
            s.x[(i, 1)],
            s.x[(i, 2)],
            u8::from(s.d[i])
        ));
    }
    std::fs::write(&file, text).unwrap();
    file
}

#[test]
fn estimate_selection_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_selection_data(dir.path());
    let o = twostep(&[
        "estimate-selection", "--input", path_str(&file), "--col", "y=wage", "--col", "z=educ,exper,tenure",
        "--col", "x=a,b,c", "--col", "d=work", "--first-stage", "maxscore,probit", "--format", "csv",
    ]);
    let out = stdout(&o);
    assert!(String::from_utf8_lossy(&o.stderr).contains("dropped 1 row"));
    let lines: Vec<&str> = out.lines().collect();
    // (maxscore, probit, ols) x 3 terms x 3 levels.
    assert_eq!(lines.len(), 1 + 27);
    for l in &lines[1..] {
        let f: Vec<&str> = l.split(',').collect();
        let est: f64 = f[2].parse().unwrap();
        let (lo, hi): (f64, f64) = (f[5].parse().unwrap(), f[6].parse().unwrap());
        assert!(lo <= est && est <= hi);
        if f[0] != "ols" {
            assert!((est - 2.0).abs() < 1.5, "{l}");
        }
    }
    let text = stdout(&twostep(&[
        "estimate-selection", "--input", path_str(&file), "--col", "y=wage", "--col", "z=educ,exper,tenure",
        "--col", "x=a,b,c", "--col", "d=work", "--bandwidth", "0.3",
    ]));
    assert!(text.contains("sample-selection estimator, n = 399"));
    assert!(text.contains("maxscore: theta"));
}

#[test]
fn estimate_matching_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("match.csv");
    let mut text = String::from("y,treated,x1,x2\n");
    for i in 0..600u64 {
        let a = ((i * 7919) % 1000) as f64 / 1000.0;
        let b = ((i * 104_729) % 997) as f64 / 997.0;
        let t = (i * 31 + 7) % 100 < (25.0 + 50.0 * (a + b) / 2.0) as u64;
        let y = (2.0 * (a + b)).sin() + if t { 1.0 } else { 0.0 };
        text.push_str(&format!("{y},{},{a},{b}\n", u8::from(t)));
    }
    std::fs::write(&file, text).unwrap();
    let out = stdout(&twostep(&[
        "estimate-matching", "--input", path_str(&file), "--col", "y=y", "--col", "treatment=treated",
        "--col", "x=x1,x2", "--first-stage", "fixed:1:1", "--format", "csv",
    ]));
    let est: f64 = out.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!((est - 1.0).abs() < 0.1, "{est}");
    let bad = twostep(&[
        "estimate-matching", "--input", path_str(&file), "--col", "y=y", "--col", "treatment=x1", "--col", "x=x2",
    ]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("column `x1`"));
}

#[test]
fn diagnostics_commands_run() {
    let gap = stdout(&twostep(&[
        "theorem1-gap", "--n", "100,200", "--reps", "3", "--seed", "4", "--bandwidth", "0.3", "--n-starts", "20",
        "--format", "csv",
    ]));
    assert_eq!(gap.lines().count(), 1 + 4);
    assert!(gap.lines().nth(1).unwrap().starts_with("AN,3,100,thetahat,median_scaled_gap,,"));
    let bahadur = stdout(&twostep(&["bahadur", "--n", "200", "--reps", "2", "--seed", "4"]));
    assert!(bahadur.contains("mean sup gap"));
}
