use std::path::Path;
use std::process::{Command, Output};

fn entropot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entropot"))
        .args(args)
        .output()
        .expect("run entropot")
}

fn write(dir: &Path, name: &str, contents: &[u8]) -> String {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path.to_str().unwrap().to_string()
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

const TWO_BY_TWO: &str = r#"{"a":[0.5,0.5],"b":[0.5,0.5],"C":[[0,1],[1,0]],"gamma":1.0,"delta":1e-10}"#;

#[test]
fn solve_prints_plan_and_rounded_cost() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "p.json", TWO_BY_TWO.as_bytes());
    for algo in ["sinkhorn", "sinkhorn-lifted", "greenkhorn", "greenkhorn-lifted"] {
        let v = json(&entropot(&["solve", &input, "--algo", algo]));
        assert_eq!(v["converged"], true, "{algo}");
        let rounded = v["rounded_plan"].as_array().unwrap();
        let row: f64 = rounded[0].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
        assert!((row - 0.5).abs() < 1e-12, "{algo}");
    }
    let v = json(&entropot(&["solve", &input]));
    let diag = 0.5 / (1.0 + (-1f64).exp());
    assert!((v["plan"][0][0].as_f64().unwrap() - diag).abs() < 1e-9);
}

#[test]
fn solve_respects_iteration_cap() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(
        dir.path(),
        "p.json",
        br#"{"a":[0.1,0.3,0.6],"b":[0.5,0.3,0.2],"C":[[0,1,2],[2,0,1],[1,3,0]],"gamma":0.1,"delta":1e-12}"#,
    );
    let v = json(&entropot(&["solve", &input, "--max-iterations", "3"]));
    assert_eq!(v["converged"], false);
    assert_eq!(v["iterations"], 3);
}

#[test]
fn oracle_writes_certified_solution() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "p.json", br#"{"a":[0.2,0.8],"b":[0.6,0.4],"C":[[1,2],[3,1]]}"#);
    let out_path = dir.path().join("oracle.json");
    let out = entropot(&["oracle", &input, "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out_path).unwrap()).unwrap();
    // Row 0 ships 0.2 to column 0, row 1 ships 0.4 to each column.
    assert!((v["cost"].as_f64().unwrap() - (0.2 + 1.2 + 0.4)).abs() < 1e-12);
    assert!(v["min_reduced_cost"].as_f64().unwrap() >= -1e-10);
}

#[test]
fn malformed_inputs_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let garbage = write(dir.path(), "bad.json", b"{not json");
    assert_eq!(entropot(&["oracle", &garbage]).status.code(), Some(3));
    let bad_mass = write(dir.path(), "mass.json", br#"{"a":[0.5,0.6],"b":[0.5,0.5],"C":[[0,1],[1,0]]}"#);
    assert_eq!(entropot(&["oracle", &bad_mass]).status.code(), Some(3));
    assert_eq!(entropot(&["oracle", "/nonexistent/problem.json"]).status.code(), Some(3));
    assert_eq!(entropot(&["bench", "--eps", "abc"]).status.code(), Some(3));
    assert_eq!(entropot(&["bench", "--eps", "0.1", "--algo", "nope"]).status.code(), Some(3));
    assert_eq!(entropot(&["frobnicate"]).status.code(), Some(3));
    let bad_idx = write(dir.path(), "images.idx", &[0, 0, 8, 1, 0, 0, 0, 1]);
    let out = entropot(&["bench", "--dataset", "mnist", "--mnist-path", &bad_idx, "--eps", "0.1", "--trials", "1"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn help_exits_zero() {
    assert!(entropot(&["--help"]).status.success());
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let mut rows = vec![reader.headers().unwrap().iter().map(String::from).collect()];
    rows.extend(reader.records().map(|r| r.unwrap().iter().map(String::from).collect()));
    rows
}

#[test]
fn bench_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = entropot(&[
        "bench", "--algo", "sinkhorn,greenkhorn", "--eps", "0.5,0.2", "--relative-eps", "--trials", "2",
        "--side", "4", "--out", out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["summary.csv", "curves.csv", "scaling.csv", "invariants.json", "curves.svg", "scaling.svg"] {
        assert!(out_dir.join(file).exists(), "{file}");
    }
    let summary = read_csv(&out_dir.join("summary.csv"));
    assert_eq!(
        summary[0],
        [
            "dataset", "algo", "trial", "epsilon", "gamma", "delta", "n", "iterations", "rounded_cost",
            "exact_cost", "gap", "theorem_bound", "invariant_violations"
        ]
    );
    assert_eq!(summary.len() - 1, 2 * 2 * 2);
    for row in &summary[1..] {
        let gap: f64 = row[10].parse().unwrap();
        let eps: f64 = row[3].parse().unwrap();
        assert!(gap <= eps);
        assert_eq!(row[12], "0");
    }
    let invariants: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("invariants.json")).unwrap()).unwrap();
    assert_eq!(invariants["total_violations"], 0);
    assert!(invariants["total_checks"].as_u64().unwrap() > 0);
}

#[test]
fn bench_without_oracle_writes_na() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = entropot(&[
        "bench", "--eps", "0.5", "--relative-eps", "--trials", "1", "--side", "3", "--no-oracle",
        "--no-invariants", "--out", out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read_csv(&out_dir.join("summary.csv"));
    assert_eq!(summary.len(), 2);
    assert_eq!(summary[1][9], "NA");
    assert_eq!(summary[1][10], "NA");
    assert_eq!(summary[1][12], "NA");
}

fn idx_images(count: u32, rows: u32, cols: u32) -> Vec<u8> {
    let mut bytes = Vec::new();
    for word in [0x0803, count, rows, cols] {
        bytes.extend_from_slice(&word.to_be_bytes());
    }
    for k in 0..count * rows * cols {
        bytes.push(((k * 37) % 256) as u8);
    }
    bytes
}

#[test]
fn bench_reads_idx_images() {
    let dir = tempfile::tempdir().unwrap();
    let images = write(dir.path(), "images-idx3-ubyte", &idx_images(6, 8, 8));
    let out_dir = dir.path().join("out");
    let out = entropot(&[
        "bench", "--dataset", "mnist", "--mnist-path", &images, "--side", "4", "--eps", "0.5",
        "--relative-eps", "--trials", "2", "--out", out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read_csv(&out_dir.join("summary.csv"));
    assert_eq!(summary.len(), 3);
    assert!(summary[1..].iter().all(|r| r[0] == "mnist" && r[6] == "16"));
}
