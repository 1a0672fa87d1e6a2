use std::path::Path;
use std::process::{Command, Output};

const LAYERS: &str = "\
# name,N,C,Hi,Wi,Hf,Wf,s,pt,pb,pl,pr
small_s1,1,3,9,10,3,3,1,1,1,1,1
small_s2,2,2,12,11,3,3,2,1,0,1,1
";

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dwconv-bench"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_layers(dir: &Path, text: &str) -> String {
    let path = dir.join("layers.txt");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .skip(2)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn checked_run_writes_one_row_per_layer_pass_and_impl() {
    let dir = tempfile::tempdir().unwrap();
    let layers = write_layers(dir.path(), LAYERS);
    let csv = dir.path().join("out.csv");
    let out = bench(&[
        "--layers",
        &layers,
        "--impl",
        "direct,gemm,naive",
        "--check",
        "--iters",
        "2",
        "--threads",
        "2",
        "--seed",
        "9",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# seed=9"));
    assert_eq!(
        lines.next(),
        Some("name,pass,impl,threads,batch,seconds_median,gflops,speedup_vs_baseline,max_rel_err,tc_f,tc_o,tc_i,tc_total,ai")
    );
    let rows = rows(&text);
    assert_eq!(rows.len(), 2 * 3 * 3);
    for r in &rows {
        assert_eq!(r.len(), 14);
        let err: f64 = r[8].parse().unwrap();
        assert!(err < 1e-4, "{r:?}");
        if r[2] == "gemm" {
            assert_eq!(r[7], "1.000");
        }
    }
    assert_eq!(rows.iter().filter(|r| r[2] == "direct" && r[3] == "2").count(), 6);
    assert!(rows.iter().filter(|r| r[0] == "small_s2").all(|r| r[4] == "2"));
}

#[test]
fn wgrad_gives_three_rows_per_layer() {
    let dir = tempfile::tempdir().unwrap();
    let layers = write_layers(dir.path(), LAYERS);
    let out = bench(&[
        "--op",
        "wgrad",
        "--layers",
        &layers,
        "--impl",
        "direct,gemm,naive",
        "--iters",
        "1",
    ]);
    assert!(out.status.success());
    let rows = rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r[1] == "wgrad" && r[8].is_empty()));
}

#[test]
fn batch_overrides_layer_file() {
    let dir = tempfile::tempdir().unwrap();
    let layers = write_layers(dir.path(), LAYERS);
    let out = bench(&[
        "--op", "fwd", "--layers", &layers, "--impl", "direct", "--batch", "3", "--iters", "1",
    ]);
    assert!(out.status.success());
    assert!(rows(&String::from_utf8(out.stdout).unwrap())
        .iter()
        .all(|r| r[4] == "3"));
}

#[test]
fn traffic_columns_for_direct_forward() {
    let dir = tempfile::tempdir().unwrap();
    let layers = write_layers(dir.path(), "sq,1,2,8,8,3,3,1,1,1,1,1\n");
    let out = bench(&[
        "--op",
        "fwd",
        "--layers",
        &layers,
        "--impl",
        "direct,naive",
        "--traffic",
        "--iters",
        "1",
    ]);
    assert!(out.status.success());
    let rows = rows(&String::from_utf8(out.stdout).unwrap());
    let direct = rows.iter().find(|r| r[2] == "direct").unwrap();
    // 8 tiles of 4x4, each loading a 6x6 window
    assert_eq!(&direct[9..13], ["72", "512", "1152", "1736"]);
    let naive = rows.iter().find(|r| r[2] == "naive").unwrap();
    assert_eq!(naive[11], (4 * 2 * 64 * 9).to_string());
    assert!(String::from_utf8(out.stderr).unwrap().contains("ai_tg"));
}

#[test]
fn unsupported_combinations_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let layers = write_layers(dir.path(), "big_filter,1,2,9,9,5,5,1,2,2,2,2\n");
    let out = bench(&["--op", "fwd", "--layers", &layers, "--check", "--iters", "1"]);
    assert!(out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("skipping big_filter fwd direct"), "{stderr}");
    let rows = rows(&String::from_utf8(out.stdout).unwrap());
    let impls: Vec<_> = rows.iter().map(|r| r[2].as_str()).collect();
    assert_eq!(impls, ["gemm", "naive"]);
}

#[test]
fn malformed_layer_file_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let layers = write_layers(dir.path(), "# header\nok,1,1,5,5,3,3,1,1,1,1,1\nbad,1,1,5\n");
    let out = bench(&["--layers", &layers, "--iters", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("line 3"));
}

#[test]
fn invalid_flags_are_rejected() {
    assert!(!bench(&["--tile", "4x5"]).status.success());
    assert!(!bench(&["--op", "sideways"]).status.success());
    assert!(!bench(&["--iters", "0"]).status.success());
    assert!(!bench(&["--suite", "mobilenet", "--layers", "x.txt"]).status.success());
}
