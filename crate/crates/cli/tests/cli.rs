use std::path::Path;
use std::process::{Command, Output};

fn poolcorr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poolcorr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SWEEP: &str = "\
title = small sweep
k = 50
l = 1
rho_mean = 12%
axis.p_mean = 1%, 5%
axis.p_spread = 10%, 40%
";

#[test]
fn sweep_csv_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "s.spec", SWEEP);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let one = poolcorr(&["--threads", "1", "sweep", "--spec", &spec, "--out", a.to_str().unwrap()]);
    let four = poolcorr(&["--threads", "4", "sweep", "--spec", &spec, "--out", b.to_str().unwrap()]);
    assert!(one.status.success() && four.status.success());
    let csv = std::fs::read_to_string(&a).unwrap();
    assert_eq!(csv, std::fs::read_to_string(&b).unwrap());
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "p_mean\\p_spread,10%,40%");
    assert!(lines[1].starts_with("1%,"));
}

#[test]
fn both_formats_write_two_files() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "s.spec", SWEEP);
    let out = dir.path().join("table");
    let r = poolcorr(&["sweep", "--spec", &spec, "--out", out.to_str().unwrap(), "--format", "both"]);
    assert!(r.status.success());
    let svg = std::fs::read_to_string(out.with_extension("svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.matches("<polyline").count() == 2);
    assert!(out.with_extension("csv").exists());
}

#[test]
fn single_point_sweep_has_one_cell() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "p.spec", "k = 20\np_spread = 20%\n");
    let r = poolcorr(&["sweep", "--spec", &spec]);
    assert!(r.status.success());
    let csv = String::from_utf8(r.stdout).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert_eq!(csv.lines().nth(1).unwrap().split(',').count(), 2);
}

#[test]
fn disallowed_blank_cells_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "b.spec",
        "k = 1000\nl = 1\np_spread = 20%\naxis.p_mean = 0.01%\naxis.n = 2, 1000000000\n",
    );
    let r = poolcorr(&["sweep", "--spec", &spec]);
    assert_eq!(r.status.code(), Some(2));
    let csv = String::from_utf8(r.stdout).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("0.01%,,"));

    let allowed = write(
        dir.path(),
        "a.spec",
        "k = 1000\nl = 1\np_spread = 20%\nallow_blank = out_of_varbound\naxis.p_mean = 0.01%\naxis.n = 2, 1000000000\n",
    );
    assert!(poolcorr(&["sweep", "--spec", &allowed]).status.success());
}

#[test]
fn built_constellation_passes_its_own_diagnosis() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "c.spec",
        "k = 40\nl = 20\np_mean = 2%\np_spread = 30%\nrho_mean = 10%\nrho_spread = 20%\n",
    );
    let file = dir.path().join("c.txt");
    let built = poolcorr(&["constellation", "build", "--spec", &spec, "--out", file.to_str().unwrap()]);
    assert!(built.status.success());
    let r = poolcorr(&["constellation", "diagnose", "--input", file.to_str().unwrap(), "--spec", &spec]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stdout));
    assert!(String::from_utf8(r.stdout).unwrap().contains("pass           true"));
}

#[test]
fn malformed_spec_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "bad.spec", "k = 10\nbogus = 3\n");
    let r = poolcorr(&["eval", "--spec", &spec]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8(r.stderr).unwrap().contains("bogus"));
}
