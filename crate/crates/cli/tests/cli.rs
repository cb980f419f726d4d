use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tapaug(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tapaug"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn small_synth(dir: &Path, name: &str, length: &str) {
    let out = tapaug(
        dir,
        &[
            "synth",
            "-o",
            name,
            "--users",
            "8",
            "--samples",
            "30",
            "--length",
            length,
            "--channels",
            "2",
            "--seed",
            "5",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn synth_defaults_validate() {
    let dir = tempfile::tempdir().unwrap();
    let out = tapaug(dir.path(), &["synth", "-o", "d.csv", "--seed", "1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = tapaug(dir.path(), &["validate", "d.csv", "--reference"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("windows:      20000"), "{text}");
    assert!(text.contains("users:        100"));
    assert!(!text.contains("note:"));
}

#[test]
fn validate_reports_duplicate_key() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("dup.csv"),
        "user_id,event_index,channel,v1,v2\nu1,0,0,1,2\nu1,1,0,3,4\nu1,0,0,5,6\n",
    )
    .unwrap();
    let out = tapaug(dir.path(), &["validate", "dup.csv"]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("(u1, 0)"), "{err}");
    assert!(err.contains(":4:"), "line number missing: {err}");
}

#[test]
fn validate_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("e.csv"),
        "user_id,event_index,e1,e2,e3\nu1,0,1,2,3\nu1,1,4,5,6\n",
    )
    .unwrap();
    let out = tapaug(dir.path(), &["validate", "e.csv"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("dimension:    3"));
    fs::write(dir.path().join("bad.csv"), "user_id,event_index,e1,e2\nu1,0,1\n").unwrap();
    assert_eq!(code(&tapaug(dir.path(), &["validate", "bad.csv"])), 2);
}

#[test]
fn missing_file_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = tapaug(dir.path(), &["validate", "nope.csv"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&tapaug(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&tapaug(dir.path(), &["sweep", "-o", "x"])), 1);
    assert_eq!(code(&tapaug(dir.path(), &["--help"])), 0);
}

#[test]
fn identity_intensity_augment_copies_input() {
    let dir = tempfile::tempdir().unwrap();
    small_synth(dir.path(), "d.csv", "40");
    let out = tapaug(
        dir.path(),
        &[
            "augment",
            "-i",
            "d.csv",
            "-o",
            "a.csv",
            "--method",
            "intensity",
            "--f-i",
            "1.0",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(
        fs::read_to_string(dir.path().join("d.csv")).unwrap(),
        fs::read_to_string(dir.path().join("a.csv")).unwrap()
    );
}

#[test]
fn noise_augment_is_deterministic_given_seed() {
    let dir = tempfile::tempdir().unwrap();
    small_synth(dir.path(), "d.csv", "40");
    let run = |name: &str, seed: &str| {
        let out = tapaug(
            dir.path(),
            &[
                "augment", "-i", "d.csv", "-o", name, "--method", "noise", "--sigma", "0.1", "--seed", seed,
            ],
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        fs::read(dir.path().join(name)).unwrap()
    };
    let a = run("a.csv", "7");
    assert_eq!(a, run("b.csv", "7"));
    assert_ne!(a, run("c.csv", "8"));
    assert_ne!(a, fs::read(dir.path().join("d.csv")).unwrap());
}

#[test]
fn warp_plot_data_pairs_series() {
    let dir = tempfile::tempdir().unwrap();
    small_synth(dir.path(), "d.csv", "150");
    let out = tapaug(
        dir.path(),
        &[
            "augment",
            "-i",
            "d.csv",
            "-o",
            "a.csv",
            "--method",
            "warp-lr",
            "--seed",
            "3",
            "--plot-data",
            "plot.csv",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("plot.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("user_id,event_index,channel,t,original,augmented"));
    let rows: Vec<Vec<&str>> = lines
        .map(|l| l.split(',').collect::<Vec<_>>())
        .filter(|f| f[0] == "u000" && f[1] == "0" && f[2] == "0")
        .collect();
    assert_eq!(rows.len(), 150);
    let ts: Vec<usize> = rows.iter().map(|f| f[3].parse().unwrap()).collect();
    assert_eq!(ts, (0..150).collect::<Vec<_>>());
    // warping pins both endpoints and moves the interior
    assert_eq!(rows[0][4], rows[0][5]);
    assert_eq!(rows[149][4], rows[149][5]);
    assert!(rows.iter().any(|f| f[4] != f[5]));
}

#[test]
fn augment_rejects_bad_specs() {
    let dir = tempfile::tempdir().unwrap();
    small_synth(dir.path(), "d.csv", "40");
    for args in [
        &["--method", "noise"][..],
        &["--method", "noise", "--sigma", "-1"],
        &["--method", "temporal", "--f-t", "0"],
        &["--method", "shear"],
    ] {
        let mut full = vec!["augment", "-i", "d.csv", "-o", "a.csv"];
        full.extend_from_slice(args);
        assert_eq!(code(&tapaug(dir.path(), &full)), 1, "{args:?}");
    }
}

const SMALL_SWEEP: &str = r#"
seed = 1
mode = "exploratory"
[data]
path = "d.csv"
[svm]
c = [1, 10]
[protocol]
train_pos = 5
test_pos = 10
train_neg = 12
test_neg = 12
[[augmentation]]
method = "intensity"
f_i = [0.9, 1.1]
[[combined]]
members = ["intensity", { method = "warp-rl" }]
"#;

#[test]
fn sweep_then_report() {
    let dir = tempfile::tempdir().unwrap();
    small_synth(dir.path(), "d.csv", "40");
    fs::write(dir.path().join("s.toml"), SMALL_SWEEP).unwrap();
    let out = tapaug(
        dir.path(),
        &["sweep", "--config", "s.toml", "--out", "r1", "--threads", "2"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in [
        "table1.csv",
        "table1.txt",
        "table2.csv",
        "table2.txt",
        "grid.csv",
        "per_user.csv",
        "summary.txt",
    ] {
        assert!(dir.path().join("r1").join(f).exists(), "{f}");
    }
    // 1 baseline + 2 values x 2 ratios + 1 combined, times 2 kernels x 2 C
    let grid = fs::read_to_string(dir.path().join("r1/grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 6 * 4);
    let out = tapaug(dir.path(), &["report", "r1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    // a different thread count leaves every file unchanged
    let out = tapaug(
        dir.path(),
        &["sweep", "--config", "s.toml", "--out", "r2", "--threads", "1"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["table1.csv", "grid.csv", "per_user.csv", "summary.txt"] {
        assert_eq!(
            fs::read(dir.path().join("r1").join(f)).unwrap(),
            fs::read(dir.path().join("r2").join(f)).unwrap(),
            "{f}"
        );
    }

    // the seed flag overrides the file
    let out = tapaug(
        dir.path(),
        &["sweep", "--config", "s.toml", "--out", "r3", "--seed", "99"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary = fs::read_to_string(dir.path().join("r3/summary.txt")).unwrap();
    assert!(summary.contains("base seed:       99"), "{summary}");
}

#[test]
fn report_detects_tampered_marker() {
    let dir = tempfile::tempdir().unwrap();
    small_synth(dir.path(), "d.csv", "40");
    fs::write(dir.path().join("s.toml"), SMALL_SWEEP).unwrap();
    assert_eq!(code(&tapaug(dir.path(), &["sweep", "-c", "s.toml", "-o", "r"])), 0);
    let path = dir.path().join("r/table1.csv");
    let text = fs::read_to_string(&path).unwrap();
    let tampered: Vec<String> = text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            if i == 2 {
                let mut fields: Vec<&str> = l.split(',').collect();
                let last = fields.len() - 1;
                fields[last] = if fields[last] == "*" { "" } else { "*" };
                fields.join(",")
            } else {
                l.to_string()
            }
        })
        .collect();
    fs::write(&path, tampered.join("\n") + "\n").unwrap();
    let out = tapaug(dir.path(), &["report", "r"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("inconsistent markers"), "{}", stderr(&out));
}

#[test]
fn sweep_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    small_synth(dir.path(), "d.csv", "40");
    fs::write(
        dir.path().join("empty.toml"),
        "[data]\npath = \"d.csv\"\n[svm]\nc = []\n",
    )
    .unwrap();
    let out = tapaug(dir.path(), &["sweep", "-c", "empty.toml", "-o", "r"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("C grid is empty"), "{}", stderr(&out));
    assert!(!dir.path().join("r").exists());

    // 30 windows per user cannot supply 20 + 100 positives
    fs::write(dir.path().join("ref.toml"), "[data]\npath = \"d.csv\"\n").unwrap();
    let out = tapaug(dir.path(), &["sweep", "-c", "ref.toml", "-o", "r"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("needs ≥ 120"), "{}", stderr(&out));

    let out = tapaug(dir.path(), &["sweep", "-c", "missing.toml", "-o", "r"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn shipped_reference_config_matches_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let out = tapaug(dir.path(), &["reference-config"]);
    assert_eq!(code(&out), 0);
    let shipped = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/reference.toml")).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), shipped);
}
