use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scorerule"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

// 40 draws of N(0.3, 1.2²), fixed once.
const SAMPLE: &str = "\
0.7111180833\n0.3416393838\n1.1210937\n-0.6706339\n0.5493181\n\
-1.3006514\n1.4022013\n0.1047785\n0.9181049\n-0.2115442\n\
0.2562309\n2.0121117\n-0.9011521\n0.4390512\n0.6021381\n\
-0.1288401\n1.7710332\n0.0511871\n0.8889612\n-0.4501125\n\
0.3370021\n1.1290445\n-1.0050198\n0.6718822\n0.2203145\n\
1.5007318\n-0.3309128\n0.9920013\n0.1470092\n-0.7123340\n\
0.4031875\n1.2559914\n-0.0502218\n0.7739901\n0.5910026\n\
-0.8894105\n1.0313377\n0.2871199\n-0.1601522\n0.6644871\n";

#[test]
fn fit_writes_theta_and_sandwich() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.csv", SAMPLE);
    let o = run(&[
        "fit",
        "--model",
        "location-scale",
        "--rule",
        "tsallis",
        "--gamma",
        "1.5",
        "--data",
        data.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["theta_hat"].as_array().unwrap().len(), 2);
    assert!(v["converged"].as_bool().unwrap());
    for key in ["j", "k", "v"] {
        let m = v[key].as_array().unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].as_array().unwrap().len(), 2);
    }
    assert!(v["theta_hat"][1].as_f64().unwrap() > 0.0);
}

#[test]
fn ratio_vanishes_at_the_fitted_value() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.csv", SAMPLE);
    let fit_json = dir.path().join("fit.json");
    let common = [
        "--model",
        "location-scale",
        "--rule",
        "tsallis",
        "--gamma",
        "1.25",
        "--data",
        data.to_str().unwrap(),
    ];
    let mut args = vec!["fit"];
    args.extend(common);
    args.extend(["--out", fit_json.to_str().unwrap()]);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));

    let theta0 = format!("@{}", fit_json.display());
    let mut args = vec!["test"];
    args.extend(common);
    args.extend([
        "--theta0",
        &theta0,
        "--stat",
        "ratio,ratio_m1,wald",
        "--format",
        "json",
    ]);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let reports = v["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 3);
    for r in reports {
        assert_eq!(r["value"].as_f64().unwrap(), 0.0, "{r}");
        assert_eq!(r["contains"]["0.95"], true);
    }
}

#[test]
fn test_csv_has_header_and_precision() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.csv", SAMPLE);
    let o = run(&[
        "test",
        "--model",
        "location",
        "--rule",
        "log",
        "--data",
        data.to_str().unwrap(),
        "--theta0",
        "0",
        "--levels",
        "0.9,0.95",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(
        lines.next().unwrap(),
        "statistic,value,null_law,p_value,contains_0.9,contains_0.95"
    );
    let names: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        names,
        [
            "wald",
            "score",
            "ratio",
            "ratio_adj",
            "ratio_m1",
            "ratio_inv"
        ]
    );
    let wald: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    assert!(wald[1].chars().filter(|c| c.is_ascii_digit()).count() >= 10);
}

#[test]
fn profile_needs_psi_values() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.csv", SAMPLE);
    let base = [
        "test",
        "--model",
        "location-scale",
        "--rule",
        "log",
        "--data",
        data.to_str().unwrap(),
        "--psi",
        "0",
    ];
    let mut ok = base.to_vec();
    ok.extend(["--theta0", "0.3", "--format", "json"]);
    let o = run(&ok);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["reports"].as_array().unwrap().len(), 5);

    let mut bad = base.to_vec();
    bad.extend(["--theta0", "0.3,1"]);
    let o = run(&bad);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--theta0"));
}

#[test]
fn usage_errors_exit_2_and_name_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.csv", SAMPLE);
    let d = data.to_str().unwrap();
    let cases: [(&[&str], &str); 7] = [
        (
            &["fit", "--model", "location", "--rule", "foo", "--data", d],
            "--rule",
        ),
        (
            &[
                "fit", "--model", "location", "--rule", "tsallis", "--data", d,
            ],
            "--gamma",
        ),
        (
            &[
                "fit", "--model", "location", "--rule", "log", "--gamma", "2", "--data", d,
            ],
            "--gamma",
        ),
        (
            &["fit", "--model", "nope", "--rule", "log", "--data", d],
            "--model",
        ),
        (
            &[
                "fit",
                "--model",
                "location",
                "--rule",
                "log",
                "--data",
                "/no/such/file.csv",
            ],
            "--data",
        ),
        (
            &[
                "fit",
                "--model",
                "regression",
                "--p",
                "3",
                "--rule",
                "log",
                "--data",
                d,
            ],
            "--data",
        ),
        (&["simulate", "--spec", "table9"], "--spec"),
    ];
    for (args, flag) in cases {
        let o = run(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).contains(flag), "{args:?}: {}", stderr(&o));
    }
    let o = run(&["simulate", "--spec", "table2", "--levels", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--levels"));
}

#[test]
fn numeric_failure_exits_1_with_the_error_text() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "c.csv", "2\n2\n2\n2\n2\n");
    let o = run(&[
        "fit",
        "--model",
        "location-scale",
        "--rule",
        "log",
        "--data",
        data.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("data are degenerate"), "{}", stderr(&o));
}

#[test]
fn simulate_matches_golden_table() {
    let o = bin()
        .args([
            "simulate", "--spec", "table2", "--reps", "100", "--seed", "42",
        ])
        .env("SCORERULE_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let golden = include_str!("golden/table2_r100_s42.csv");
    assert_eq!(stdout(&o), golden);
}

#[test]
fn simulate_pretty_has_three_decimals() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "s.json",
        r#"{"name": "mean", "model": {"kind": "location"}, "theta": [0],
            "sample_sizes": [15], "replications": 100, "levels": [0.95],
            "rows": [{"label": "W", "rule": {"name": "log"}, "statistic": "wald"}]}"#,
    );
    let out = dir.path().join("t.txt");
    let o = run(&[
        "simulate",
        "--spec",
        spec.to_str().unwrap(),
        "--format",
        "pretty",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(out).unwrap();
    let row = text.lines().find(|l| l.starts_with('W')).unwrap();
    let cov = row.split_whitespace().last().unwrap();
    assert_eq!(cov.split('.').nth(1).unwrap().len(), 3, "{row}");
}

#[test]
fn robust_check_separates_log_and_tsallis() {
    let o = run(&[
        "robust-check",
        "--model",
        "location",
        "--rule",
        "tsallis",
        "--gamma",
        "1.5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["bounded"], true);
    assert_eq!(v["condition"]["bounded"], true);

    let o = run(&["robust-check", "--model", "location", "--rule", "log"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["bounded"], false);

    let o = run(&["robust-check", "--model", "regression", "--rule", "log"]);
    assert_eq!(o.status.code(), Some(2));
}
