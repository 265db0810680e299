use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sector_hilbert::cli::{read_state, CERTIFY_HEADER, SELFTEST_HEADER, VERSION_LINE};
use sector_hilbert::construction::certify;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sector-hilbert"))
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_owned).collect()
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["construct", "--m", "0"][..],
        &["construct", "--grid", "48"],
        &["growth", "--m-min", "4", "--m-max", "3"],
        &["growth", "--p", "0.5"],
        &["frobnicate"],
    ] {
        let out = run(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "grid = 64\ncolour = red\n").unwrap();
    let out = run(&["selftest", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.cfg:2:"));

    let out = bin()
        .args(["selftest", "--out"])
        .arg(dir.path())
        .env("SECTOR_HILBERT_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn selftest_writes_passing_suites() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["selftest", "--out"])
        .arg(dir.path())
        .env("SECTOR_HILBERT_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let l = lines(&dir.path().join("selftest.csv"));
    assert_eq!(l[0], VERSION_LINE);
    assert_eq!(l[1], SELFTEST_HEADER);
    assert_eq!(l.len(), 2 + 7);
    assert!(l[2..].iter().all(|r| r.ends_with(",true")));
}

#[test]
fn construct_writes_state_and_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["construct", "--m", "2", "--grid", "128"], dir.path());
    let l = lines(&dir.path().join("certify.csv"));
    assert_eq!(l[0], VERSION_LINE);
    assert_eq!(l[1], CERTIFY_HEADER);
    let all_pass = l[2..].iter().all(|r| r.ends_with(",true"));
    assert_eq!(out.status.code(), Some(if all_pass { 0 } else { 1 }));

    let state = read_state(&dir.path().join("state.txt")).unwrap();
    assert_eq!(state.m, 2);
    assert_eq!(state.nodes.len(), 3);
    let report = certify(&state);
    assert_eq!(report.rows.len(), l.len() - 2);
    for (row, line) in report.rows.iter().zip(&l[2..]) {
        assert!(line.starts_with(&format!("{},{},", row.check, row.node)), "{line}");
    }
}

#[test]
fn failed_construction_leaves_a_failure_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["construct", "--m", "4", "--grid", "64"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let l = lines(&dir.path().join("certify.csv"));
    assert_eq!(l.len(), 3);
    assert!(l[2].starts_with("build,") && l[2].ends_with(",false"));
    assert!(!dir.path().join("state.txt").exists());
}

#[test]
fn growth_is_reproducible_and_flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# small sweep\nm_min = 2\nm_max = 3\ngrid = 128\np = 1,2\n").unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out_dir = dir.path().join(format!("run{k}"));
        let out = run(&["growth", "--config", cfg.to_str().unwrap(), "--grid", "256"], &out_dir);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(fs::read(out_dir.join("growth.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    let l: Vec<&str> = text.lines().collect();
    assert_eq!(l[0], VERSION_LINE);
    assert_eq!(
        l[1],
        "m,N,R,eps,ratio_T,ratio_H_1,ratio_H_2,ratio_over_sqrtlog,level_measure,wall_ms,status"
    );
    assert!(l[2].starts_with("2,4,256,0.02,") && l[2].ends_with(",,ok"));
    assert!(l[3].starts_with("3,8,256,"));
    assert!(l[4].starts_with("# slope"));
}

#[test]
fn growth_records_failed_depths_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["growth", "--m-min", "3", "--m-max", "4", "--grid", "64", "--plot"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let l = lines(&dir.path().join("growth.csv"));
    assert!(l[2].ends_with(",ok"));
    assert_eq!(l[3], "4,16,64,0.02,,,,,,,failed");
    let svg = fs::read_to_string(dir.path().join("growth.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<circle"));
    let png = fs::read(dir.path().join("heatmap.png")).unwrap();
    assert_eq!(&png[1..4], b"PNG");
}
