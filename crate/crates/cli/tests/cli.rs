use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use deco_cli::data::load_csv;
use deco_cli::diag::DiagOutput;
use deco_cli::exit;
use deco_core::datagen::{generate, ModelKind, ModelSpec};

fn deco(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deco"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn gen_is_reproducible_and_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.csv");
    let b = tmp.path().join("b.csv");
    for out in [&a, &b] {
        let o = deco(&["gen", "--model", "i", "--n", "50", "--p", "100", "--seed", "7", "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(tmp.path().join("a.json").exists());

    let (header, rows) = read_rows(&a);
    assert_eq!((rows.len(), header.len()), (50, 101));

    let truth = generate(&ModelSpec::new(ModelKind::Independent, 50, 100, 7)).unwrap();
    let loaded = load_csv(&a, "y").unwrap();
    assert!(loaded.x.max_abs_diff(&truth.x) <= 1e-12);
    for (u, v) in loaded.y.iter().zip(&truth.y) {
        assert!((u - v).abs() <= 1e-12);
    }
}

const TINY: &str = r#"
seed = 3
replications = 3
methods = ["deco2", "deco3", "lasso_full"]
m_values = [1, 2]
[model]
kind = "compound_symmetry"
n = 40
p = 60
holdout = 20
"#;

#[test]
fn fit_is_deterministic_and_aggregates_are_means() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", TINY);
    let (a, b) = (tmp.path().join("a.csv"), tmp.path().join("b.csv"));
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = deco(&["--threads", threads, "fit", "--config", s(&cfg), "--out", s(out), "--quiet"]);
        assert_eq!(o.status.code(), Some(exit::OK), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (header, ra) = read_rows(&a);
    let (_, rb) = read_rows(&b);
    let keep: Vec<usize> = (0..header.len()).filter(|&i| !header[i].ends_with("_ms")).collect();
    let strip = |rows: &[Vec<String>]| -> Vec<Vec<String>> {
        rows.iter().map(|r| keep.iter().map(|&i| r[i].clone()).collect()).collect()
    };
    assert_eq!(strip(&ra), strip(&rb));

    // 5 cells (deco2 and deco3 at two m, lasso_full once) x 3 reps, then 5 means.
    assert_eq!(ra.len(), 5 * 3 + 5);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    for mean_row in ra.iter().filter(|r| r[col("rep")] == "mean") {
        let reps: Vec<&Vec<String>> = ra
            .iter()
            .filter(|r| r[col("rep")] != "mean" && r[0] == mean_row[0] && r[1] == mean_row[1])
            .collect();
        assert_eq!(reps.len(), 3);
        for name in ["mse", "fp", "fn", "sign_consistent", "pred_mse"] {
            let avg = reps.iter().map(|r| r[col(name)].parse::<f64>().unwrap()).sum::<f64>() / 3.0;
            let got: f64 = mean_row[col(name)].parse().unwrap();
            assert!((avg - got).abs() <= 1e-12 * (1.0 + avg.abs()), "{name}: {avg} vs {got}");
        }
    }
}

#[test]
fn single_method_single_rep() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"replications": 1, "methods": ["lasso_full"], "model": {"kind": "independent", "n": 30, "p": 40}}"#,
    );
    let o = deco(&["fit", "--config", s(&cfg), "--quiet"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "{text}");
    assert!(lines[1].starts_with("lasso_full,1,0,"));
    assert!(lines[2].starts_with("lasso_full,1,mean,"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(deco(&["fit", "--config", "/nonexistent.toml"]).status.code(), Some(exit::CONFIG));
    let bad = write(tmp.path(), "bad.toml", "replications = 0\n[model]\nkind = \"i\"\nn = 20\np = 30\n");
    assert_eq!(deco(&["fit", "--config", s(&bad)]).status.code(), Some(exit::CONFIG));
    assert_eq!(deco(&["--threads", "0", "version"]).status.code(), Some(exit::CONFIG));

    // Without a ridge the centered Gram matrix is singular, so every
    // decorrelated replication fails.
    let singular = write(
        tmp.path(),
        "s.toml",
        "methods = [\"deco2\"]\nreplications = 2\n[deco]\nr1 = 0.0\n[model]\nkind = \"i\"\nn = 20\np = 30\n",
    );
    let o = deco(&["fit", "--config", s(&singular), "--quiet"]);
    assert_eq!(o.status.code(), Some(exit::ALL_FAILED));
    assert!(String::from_utf8_lossy(&o.stdout).contains("singular"));

    let partial = write(
        tmp.path(),
        "p.toml",
        "methods = [\"deco2\", \"lasso_full\"]\n[deco]\nr1 = 0.0\n[model]\nkind = \"i\"\nn = 20\np = 30\n",
    );
    assert_eq!(
        deco(&["fit", "--config", s(&partial), "--quiet"]).status.code(),
        Some(exit::PARTIAL)
    );
}

fn diag(dir: &Path, kind: &str, n: usize, p: usize, extra: &[&str]) -> DiagOutput {
    let cfg = write(
        dir,
        &format!("{kind}.toml"),
        &format!("seed = 11\n[model]\nkind = \"{kind}\"\nn = {n}\np = {p}\n"),
    );
    let mut args = vec!["diag", "--config", s(&cfg)];
    args.extend_from_slice(extra);
    let o = deco(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn diag_identity_changes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = diag(tmp.path(), "compound_symmetry", 50, 120, &["--identity"]);
    assert_eq!(out.raw, out.decorrelated);
    assert!(out.raw.noise_corr.is_some());
}

#[test]
fn diag_on_independent_design() {
    let tmp = tempfile::tempdir().unwrap();
    let out = diag(tmp.path(), "independent", 200, 1000, &[]);
    eprintln!("raw {:.3}, decorrelated {:.3}", out.raw.max_offdiag, out.decorrelated.max_offdiag);
    assert!(out.decorrelated.max_offdiag <= 2.0 * out.raw.max_offdiag);
}

#[test]
fn diag_collapses_equicorrelation() {
    let tmp = tempfile::tempdir().unwrap();
    let out = diag(tmp.path(), "compound_symmetry", 200, 1000, &[]);
    eprintln!("raw {:.3}, decorrelated {:.3}", out.raw.max_offdiag, out.decorrelated.max_offdiag);
    assert!(out.decorrelated.max_offdiag < out.raw.max_offdiag / 5.0);
}
