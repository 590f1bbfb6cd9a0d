//! End-to-end runs of the varsel binary on seeded fixtures.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use varsel::data::{Dataset, Family};
use varsel::RngStream;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_varsel"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_dataset_csv(path: &Path, d: &Dataset) {
    let mut w = csv::Writer::from_path(path).unwrap();
    let mut header = vec!["y".to_string()];
    header.extend(d.names.iter().cloned());
    w.write_record(&header).unwrap();
    for i in 0..d.n() {
        let mut row = vec![format!("{:.17e}", d.y[i])];
        for j in 0..d.p() {
            row.push(format!("{:.17e}", d.x[[i, j]]));
        }
        w.write_record(&row).unwrap();
    }
    w.flush().unwrap();
}

/// n=50, p=10 with strong signals on columns x2 and x7 (seed 7).
fn demo_dataset() -> Dataset {
    let mut rng = RngStream::new(7, 0);
    let n = 50;
    let p = 10;
    let x = rng.normal_matrix(n, p);
    let noise = rng.normal_vec(n);
    let y = &x.column(2) * 3.0 + &x.column(7) * (-2.5) + noise;
    Dataset::new(
        y,
        x,
        (0..p).map(|j| format!("x{j}")).collect(),
        Family::Gaussian,
    )
    .unwrap()
}

/// Pure noise, n=60, p=10; seed 12 pre-screened so mBIC selects nothing.
fn noise_dataset() -> Dataset {
    let mut rng = RngStream::new(12, 0);
    let n = 60;
    let p = 10;
    let x = rng.normal_matrix(n, p);
    let y = rng.normal_vec(n);
    Dataset::new(
        y,
        x,
        (0..p).map(|j| format!("x{j}")).collect(),
        Family::Gaussian,
    )
    .unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    data: PathBuf,
    out: PathBuf,
}

fn fixture(d: &Dataset) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let out = dir.path().join("out");
    write_dataset_csv(&data, d);
    Fixture {
        _dir: dir,
        data,
        out,
    }
}

fn selected_names(json_path: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(json_path).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["support"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["name"].as_str().unwrap().to_string())
        .collect()
}

#[test]
fn select_finds_the_two_signals() {
    let f = fixture(&demo_dataset());
    let out = run(&[
        "select",
        "--data",
        f.data.to_str().unwrap(),
        "--response",
        "y",
        "--criterion",
        "mbic2",
        "--out",
        f.out.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let names = selected_names(&f.out.join("selection.json"));
    assert_eq!(names, vec!["x2", "x7"]);
    assert!(f.out.join("coefficients.csv").exists());
}

#[test]
fn aic_selection_contains_mbic2_selection() {
    let f = fixture(&demo_dataset());
    let out_dir2 = f.out.with_extension("aic");
    for (crit, dir) in [("mbic2", &f.out), ("aic", &out_dir2)] {
        let out = run(&[
            "select",
            "--data",
            f.data.to_str().unwrap(),
            "--response",
            "y",
            "--criterion",
            crit,
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert_ok(&out);
    }
    let strict = selected_names(&f.out.join("selection.json"));
    let liberal = selected_names(&out_dir2.join("selection.json"));
    for name in &strict {
        assert!(liberal.contains(name), "{name} missing from aic selection");
    }
}

#[test]
fn mbic_on_pure_noise_selects_nothing() {
    let f = fixture(&noise_dataset());
    let out = run(&[
        "select",
        "--data",
        f.data.to_str().unwrap(),
        "--response",
        "y",
        "--criterion",
        "mbic",
        "--out",
        f.out.to_str().unwrap(),
    ]);
    assert_ok(&out);
    assert!(selected_names(&f.out.join("selection.json")).is_empty());
}

#[test]
fn select_outputs_are_byte_identical_across_runs() {
    let f = fixture(&demo_dataset());
    let dir2 = f.out.with_extension("again");
    for dir in [&f.out, &dir2] {
        let out = run(&[
            "select",
            "--data",
            f.data.to_str().unwrap(),
            "--response",
            "y",
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert_ok(&out);
    }
    let a = std::fs::read(f.out.join("selection.json")).unwrap();
    let b = std::fs::read(dir2.join("selection.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn missing_response_column_exits_2() {
    let f = fixture(&demo_dataset());
    let out = run(&[
        "select",
        "--data",
        f.data.to_str().unwrap(),
        "--response",
        "nope",
        "--out",
        f.out.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_file_exits_2() {
    let out = run(&[
        "select",
        "--data",
        "/definitely/not/here.csv",
        "--response",
        "y",
        "--out",
        "/tmp/varsel-nope",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn slope_fit_and_lambda_roundtrip() {
    let f = fixture(&demo_dataset());
    let lam = f.data.with_file_name("lambda.csv");
    let out = run(&[
        "slope",
        "--data",
        f.data.to_str().unwrap(),
        "--response",
        "y",
        "--rule",
        "bh",
        "--q",
        "0.2",
        "--c",
        "2.0",
        "--lambda-out",
        lam.to_str().unwrap(),
        "--out",
        f.out.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let text = std::fs::read_to_string(f.out.join("fit.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["converged"], true);

    // Re-fit with the exported sequence: identical support.
    let out2_dir = f.out.with_extension("roundtrip");
    let out2 = run(&[
        "slope",
        "--data",
        f.data.to_str().unwrap(),
        "--response",
        "y",
        "--lambda-in",
        lam.to_str().unwrap(),
        "--out",
        out2_dir.to_str().unwrap(),
    ]);
    assert_ok(&out2);
    assert_eq!(
        selected_names(&f.out.join("fit.json")),
        selected_names(&out2_dir.join("fit.json"))
    );
}

#[test]
fn slope_path_reports_sparsity_per_point() {
    let f = fixture(&demo_dataset());
    let out = run(&[
        "slope",
        "--data",
        f.data.to_str().unwrap(),
        "--response",
        "y",
        "--path",
        "4,2,1,0.5",
        "--out",
        f.out.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let text = std::fs::read_to_string(f.out.join("path.csv")).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().next().unwrap().starts_with("scale,nonzero,clusters"));
}

#[test]
fn lasso_cv_then_threshold_reduces_criterion() {
    let f = fixture(&demo_dataset());
    let out = run(&[
        "lasso",
        "--data",
        f.data.to_str().unwrap(),
        "--response",
        "y",
        "--cv",
        "--out",
        f.out.to_str().unwrap(),
    ]);
    assert_ok(&out);
    assert!(f.out.join("cv_table.csv").exists());
    let fit_json = f.out.join("fit.json");
    let cv_names = selected_names(&fit_json);
    assert!(cv_names.contains(&"x2".to_string()));

    let thr_dir = f.out.with_extension("thresholded");
    let out2 = run(&[
        "threshold",
        "--fit",
        fit_json.to_str().unwrap(),
        "--data",
        f.data.to_str().unwrap(),
        "--response",
        "y",
        "--criterion",
        "mbic2",
        "--out",
        thr_dir.to_str().unwrap(),
    ]);
    assert_ok(&out2);
    let reduced = selected_names(&thr_dir.join("selection.json"));
    assert!(reduced.len() <= cv_names.len());
    assert!(reduced.contains(&"x2".to_string()));
    assert!(reduced.contains(&"x7".to_string()));

    // Thresholding its own output is a fixed point.
    let thr2_dir = f.out.with_extension("thresholded2");
    let out3 = run(&[
        "threshold",
        "--fit",
        thr_dir.join("selection.json").to_str().unwrap(),
        "--data",
        f.data.to_str().unwrap(),
        "--response",
        "y",
        "--criterion",
        "mbic2",
        "--out",
        thr2_dir.to_str().unwrap(),
    ]);
    assert_ok(&out3);
    assert_eq!(reduced, selected_names(&thr2_dir.join("selection.json")));
}

#[test]
fn threshold_of_empty_support_is_empty() {
    let f = fixture(&noise_dataset());
    let fit = f.data.with_file_name("empty.json");
    std::fs::write(&fit, r#"{"support": []}"#).unwrap();
    let out = run(&[
        "threshold",
        "--fit",
        fit.to_str().unwrap(),
        "--data",
        f.data.to_str().unwrap(),
        "--response",
        "y",
        "--out",
        f.out.to_str().unwrap(),
    ]);
    assert_ok(&out);
    assert!(selected_names(&f.out.join("selection.json")).is_empty());
}

#[test]
fn knockoff_command_writes_w_and_selection() {
    let d = demo_dataset();
    let f = fixture(&d);
    let sigma = f.data.with_file_name("sigma.csv");
    {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(&sigma)
            .unwrap();
        for i in 0..d.p() {
            let row: Vec<String> = (0..d.p())
                .map(|j| if i == j { "1.0".into() } else { "0.0".into() })
                .collect();
            w.write_record(&row).unwrap();
        }
        w.flush().unwrap();
    }
    let out = run(&[
        "knockoff",
        "--data",
        f.data.to_str().unwrap(),
        "--response",
        "y",
        "--sigma",
        sigma.to_str().unwrap(),
        "--q",
        "0.3",
        "--seed",
        "5",
        "--out",
        f.out.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let w_text = std::fs::read_to_string(f.out.join("w.csv")).unwrap();
    assert_eq!(w_text.lines().count(), d.p() + 1);
    let text = std::fs::read_to_string(f.out.join("knockoff.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["q"], 0.3);
}

#[test]
fn simulate_builtin_writes_tables_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    for out in [&out1, &out2] {
        let res = run(&[
            "simulate",
            "--scenario",
            "scenario1",
            "--n",
            "100",
            "--replicates",
            "4",
            "--seed",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_ok(&res);
    }
    for file in ["aggregate.csv", "records.csv", "long.csv"] {
        let a = std::fs::read(out1.join(file)).unwrap();
        let b = std::fs::read(out2.join(file)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{file} differs between runs");
    }
}

#[test]
fn simulate_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.toml");
    std::fs::write(
        &cfg,
        r#"
name = "tiny"
n = 80
replicates = 2
seed = 4
methods = ["bic", "mbic2"]
p-rule = { constant = 12 }
k-rule = { constant = 2 }
effect = { constant = 1.0 }
design = "identity"
"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let res = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_ok(&res);
    let agg = std::fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 3);
}

#[test]
fn simulate_list_names_builtins() {
    let out = run(&["simulate", "--list"]);
    assert_ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["scenario0", "scenario3", "block", "advanced-strong"] {
        assert!(text.contains(name), "missing {name}");
    }
}
