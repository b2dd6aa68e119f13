use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_chemolab");

const GAUSSIAN: &str = "\
dim = 1
extent = 1.0
cells = 256
m = 0.6
q = 1.2
chi = 0.5
alpha = 1.0
t_end = 0.02
snapshot_interval = 0.005
u0 = gaussian
u0_amplitude = 1.0
u0_width = 0.3
v0 = gaussian
v0_amplitude = 0.5
v0_width = 0.4
u0_noise = 0.01
seed = 7
";

fn chemolab(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, cfg: &str, out: &str) -> PathBuf {
    let cfg = write(dir, &format!("{out}.cfg"), cfg);
    let out = dir.join(out);
    let o = chemolab(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn zero_end_time_writes_one_snapshot_pair() {
    let tmp = TempDir::new().unwrap();
    let out = simulate(tmp.path(), &GAUSSIAN.replace("t_end = 0.02", "t_end = 0"), "run");
    assert!(out.join("u_00000.bin").exists() && out.join("v_00000.bin").exists());
    assert!(!out.join("u_00001.bin").exists());
    let csv = std::fs::read_to_string(out.join("steps.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn exponent_outside_range_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.cfg", &GAUSSIAN.replace("m = 0.6", "m = 1.5"));
    let o = chemolab(&["simulate", "--config", s(&cfg), "--out", s(&tmp.path().join("x"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("m < 1"));
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.cfg", &format!("{GAUSSIAN}colour = blue\n"));
    let o = chemolab(&["simulate", "--config", s(&cfg), "--out", s(&tmp.path().join("x"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}

#[test]
fn missing_config_is_an_io_error() {
    let o = chemolab(&["simulate", "--config", "/nonexistent/run.cfg"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn same_seed_reproduces_step_log() {
    let tmp = TempDir::new().unwrap();
    let a = simulate(tmp.path(), GAUSSIAN, "a");
    let b = simulate(tmp.path(), GAUSSIAN, "b");
    let read = |d: &Path| std::fs::read(d.join("steps.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_eq!(
        std::fs::read(a.join("u_00004.bin")).unwrap(),
        std::fs::read(b.join("u_00004.bin")).unwrap()
    );
}

#[test]
fn seed_flag_changes_the_noise() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "g.cfg", GAUSSIAN);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(chemolab(&["simulate", "--config", s(&cfg), "--out", s(&a)])
        .status
        .success());
    assert!(
        chemolab(&["simulate", "--config", s(&cfg), "--out", s(&b), "--seed", "8"])
            .status
            .success()
    );
    assert_ne!(
        std::fs::read(a.join("u_00000.bin")).unwrap(),
        std::fs::read(b.join("u_00000.bin")).unwrap()
    );
}

#[test]
fn empty_request_list_gives_empty_output() {
    let tmp = TempDir::new().unwrap();
    let run = simulate(tmp.path(), GAUSSIAN, "run");
    let req = write(tmp.path(), "req.txt", "# nothing\n\n");
    let o = chemolab(&["diagnose", s(&run), "--config", s(&req)]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
}

#[test]
fn decay_on_single_snapshot_is_truncated() {
    let tmp = TempDir::new().unwrap();
    let run = simulate(tmp.path(), &GAUSSIAN.replace("t_end = 0.02", "t_end = 0"), "run");
    let req = write(tmp.path(), "req.txt", "decay center=0 radius=0.3 theta=1\n");
    let o = chemolab(&["diagnose", s(&run), "--config", s(&req)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rec: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rec["type"], "decay");
    assert_eq!(rec["report"]["truncated"], true);
    assert_eq!(rec["report"]["passed"], false);
}

#[test]
fn unknown_diagnostic_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let run = simulate(tmp.path(), GAUSSIAN, "run");
    let req = write(tmp.path(), "req.txt", "entropy center=0\n");
    let o = chemolab(&["diagnose", s(&run), "--config", s(&req)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn energy_records_are_byte_identical_on_rerun() {
    let tmp = TempDir::new().unwrap();
    let run = simulate(tmp.path(), GAUSSIAN, "run");
    let req = write(
        tmp.path(),
        "req.txt",
        "energy mode=below k=0.6 center=0 radius=0.05 t_end=0.02 theta=0.5\n\
         energy mode=above k=0.4 center=0 radius=0.05 t_end=0.02 theta=0.5\n",
    );
    let a = chemolab(&["diagnose", s(&run), "--config", s(&req)]);
    let b = chemolab(&["diagnose", s(&run), "--config", s(&req)]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let lines: Vec<serde_json::Value> = a
        .stdout
        .split(|&c| c == b'\n')
        .filter(|l| !l.is_empty())
        .map(|l| serde_json::from_slice(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1]["params"]["mode"], "above");
}

#[test]
fn diagnose_output_is_thread_count_independent() {
    let tmp = TempDir::new().unwrap();
    let run = simulate(tmp.path(), GAUSSIAN, "run");
    let req = write(
        tmp.path(),
        "req.txt",
        "holder center=0 radius=0.4 t_start=0.01 t_end=0.02 pairs=4000\n\
         energy mode=below k=0.6 center=0 radius=0.05 theta=0.5\n\
         lemma mode=below center=0 radius=0.1 theta=1\n",
    );
    let a = chemolab(&[
        "--threads",
        "1",
        "diagnose",
        s(&run),
        "--config",
        s(&req),
        "--seed",
        "3",
    ]);
    let b = chemolab(&[
        "--threads",
        "4",
        "diagnose",
        s(&run),
        "--config",
        s(&req),
        "--seed",
        "3",
    ]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn lemma_sweeps_with_zero_counts_pass() {
    let o = chemolab(&[
        "lemmas",
        "--seed",
        "1",
        "--geometric",
        "0",
        "--isoperimetric",
        "0",
        "--embedding",
        "0",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().all(|l| l.ends_with("PASS")));
}

#[test]
fn lemma_sweeps_are_reproducible() {
    let args = [
        "lemmas",
        "--seed",
        "5",
        "--geometric",
        "20",
        "--isoperimetric",
        "10",
        "--embedding",
        "3",
    ];
    let a = chemolab(&args);
    let b = chemolab(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn convergence_rejects_nonzero_sensitivity() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "c.cfg",
        "dim = 1\nextent = 2\ncells = 32\nm = 0.5\nchi = 0.1\nt_end = 0.01\nu0 = barenblatt\nu0_t_offset = 0.1\n",
    );
    let o = chemolab(&["convergence", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("chi = 0"));
}

#[test]
fn convergence_single_level_has_no_order() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "c.cfg",
        "dim = 1\nextent = 2\ncells = 32\nm = 0.5\nchi = 0\nt_end = 0.01\nu0 = barenblatt\nu0_t_offset = 0.1\n",
    );
    let out = tmp.path().join("conv.csv");
    let o = chemolab(&[
        "convergence",
        "--config",
        s(&cfg),
        "--refinements",
        "1",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "h,l1_error,observed_order");
    assert!(lines[1].ends_with(','));
}
