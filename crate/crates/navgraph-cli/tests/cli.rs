//! End-to-end runs of the compiled binary.

use std::path::Path;
use std::process::Command;

use navgraph::vecstore::io::{load_ivecs, load_vectors, VectorFormat};
use navgraph::Metric;

fn navgraph() -> Command {
    Command::new(env!("CARGO_BIN_EXE_navgraph"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawn navgraph");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn generate(dir: &Path, name: &str, law: &str, n: usize, d: usize, seed: u64) -> std::path::PathBuf {
    let path = dir.join(name);
    run_ok(navgraph().args([
        "generate",
        "--law",
        law,
        "--n",
        &n.to_string(),
        "--d",
        &d.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        path.to_str().unwrap(),
    ]));
    path
}

#[test]
fn generate_writes_loadable_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let path = generate(dir.path(), "a.f32", "normal", 1000, 16, 1);
    let set = load_vectors(&path, VectorFormat::RawF32, Metric::L2Squared).unwrap();
    assert_eq!((set.count(), set.dim()), (1000, 16));
}

#[test]
fn bench_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "a.f32", "normal", 1500, 8, 1);
    let queries = generate(dir.path(), "q.f32", "normal", 30, 8, 2);

    // Exact ground truth written as ivecs, exercising the --gt path.
    let set = load_vectors(&data, VectorFormat::RawF32, Metric::L2Squared).unwrap();
    let qs = load_vectors(&queries, VectorFormat::RawF32, Metric::L2Squared).unwrap();
    let gt = navgraph::bench::brute_force_knn(&set, &qs, 10).unwrap();
    let gt_path = dir.path().join("gt.ivecs");
    let mut bytes = Vec::new();
    for row in &gt.ids {
        bytes.extend_from_slice(&(row.len() as i32).to_le_bytes());
        for &id in row {
            bytes.extend_from_slice(&(id as i32).to_le_bytes());
        }
    }
    std::fs::write(&gt_path, bytes).unwrap();

    let csv_path = dir.path().join("rows.csv");
    run_ok(navgraph().args([
        "bench",
        "--data",
        data.to_str().unwrap(),
        "--queries",
        queries.to_str().unwrap(),
        "--gt",
        gt_path.to_str().unwrap(),
        "--m",
        "8",
        "--ef-construction",
        "32",
        "--ef",
        "20,40",
        "--k",
        "10",
        "--out",
        csv_path.to_str().unwrap(),
    ]));

    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "dataset,index_type,ef_search,k,recall,p50_us,p99_us,mean_dist_comps,build_s"
    );
    assert_eq!(lines.len(), 5, "header + 2 index types x 2 ef points");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("rows.json")).unwrap())
            .unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 4);
    assert!(json["config"]["params"]["m"].as_u64() == Some(8));
}

#[test]
fn build_query_and_hubness_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "a.f32", "normal", 2000, 12, 5);
    let queries = generate(dir.path(), "q.f32", "normal", 50, 12, 6);

    let out = dir.path().join("idx");
    run_ok(navgraph().args([
        "build",
        "--data",
        data.to_str().unwrap(),
        "--m",
        "8",
        "--ef-construction",
        "40",
        "--seed",
        "7",
        "--index-type",
        "both",
        "--out",
        out.to_str().unwrap(),
    ]));
    let flat_index = dir.path().join("idx.flat.nvgi");
    let hier_index = dir.path().join("idx.hier.nvgi");
    assert!(flat_index.exists() && hier_index.exists());
    assert!(
        std::fs::metadata(&flat_index).unwrap().len()
            < std::fs::metadata(&hier_index).unwrap().len()
    );

    let results = dir.path().join("results.ivecs");
    run_ok(navgraph().args([
        "query",
        "--index",
        hier_index.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--queries",
        queries.to_str().unwrap(),
        "--k",
        "5",
        "--ef",
        "40",
        "--out",
        results.to_str().unwrap(),
    ]));
    let ids = load_ivecs(&results).unwrap();
    assert_eq!((ids.rows, ids.cols), (50, 5));

    let report_path = dir.path().join("report.json");
    run_ok(navgraph().args([
        "analyze",
        "hubness",
        "--index",
        flat_index.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--queries",
        queries.to_str().unwrap(),
        "--ef",
        "60",
        "--k",
        "10",
        "--percentile",
        "99",
        "--out",
        report_path.to_str().unwrap(),
    ]));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    for key in [
        "access_skewness_log",
        "access_skewness_raw",
        "mann_whitney",
        "welch_t",
        "effect_size",
        "bins",
        "hub_sample",
    ] {
        assert!(report.get(key).is_some(), "report missing {key}");
    }
    assert!(report["mann_whitney"]["p_value"].as_f64().unwrap() >= 0.0);
    assert!(report["bins"]["mean_fraction"].as_array().is_some());
    assert!(dir.path().join("report.json.bins.csv").exists());
}

#[test]
fn json_config_echo_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.f32");
    let stdout = run_ok(navgraph().args([
        "--json-config",
        "generate",
        "--law",
        "uniform",
        "--n",
        "10",
        "--d",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]));
    assert!(stdout.contains("\"law\": \"uniform\""));

    // usage error -> exit 2
    let status = navgraph().args(["generate", "--law"]).output().unwrap();
    assert_eq!(status.status.code(), Some(2));

    // runtime failure (missing file) -> exit 1
    let status = navgraph()
        .args([
            "build",
            "--data",
            dir.path().join("missing.f32").to_str().unwrap(),
            "--out",
            dir.path().join("i.nvgi").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1));
}
