use std::path::Path;
use std::process::{Command, Output};

fn fsrdcf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsrdcf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(fsrdcf(&[]).status.code(), Some(1));
    assert_eq!(fsrdcf(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(fsrdcf(&["track", "--seq", "x"]).status.code(), Some(1));
    assert_eq!(fsrdcf(&["synth", "--kind", "spiral", "--out", "x"]).status.code(), Some(1));
    assert_eq!(fsrdcf(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_data_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = fsrdcf(&["track", "--seq", path(dir.path()), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let o = fsrdcf(&["eval", "--runs", path(dir.path()), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    assert!(fsrdcf(&["synth", "--kind", "static", "--frames", "3", "--out", path(&seq)]).status.success());
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "scales = 4\n").unwrap();
    let o = fsrdcf(&["track", "--seq", path(&seq), "--config", path(&cfg), "--out", path(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn synth_track_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    let o = fsrdcf(&["synth", "--kind", "translate", "--frames", "12", "--out", path(&seq)]);
    assert!(o.status.success());
    assert!(seq.join("groundtruth_rect.txt").is_file());
    assert!(seq.join("img/0012.png").is_file());

    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "features = \"gray\"\n").unwrap();
    let out = dir.path().join("out");
    let o = fsrdcf(&[
        "track", "--seq", path(&seq), "--config", path(&cfg), "--out", path(&out),
        "--scales", "3", "--gs-sweeps", "2", "--no-window", "--threads", "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("summary.json").is_file());
    assert!(out.join("runs/seq_ope_00.json").is_file());
    let used = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(used.contains("scales = 3") && used.contains("hann_window = false"));
    let csv = std::fs::read_to_string(out.join("curves/seq_ope.csv")).unwrap();
    assert_eq!(csv.lines().count(), 102);

    let re = dir.path().join("re");
    let o = fsrdcf(&["eval", "--runs", path(&out.join("runs")), "--out", path(&re)]);
    assert!(o.status.success());
    assert_eq!(
        std::fs::read(out.join("summary.json")).unwrap(),
        std::fs::read(re.join("summary.json")).unwrap()
    );
}

#[test]
fn tre_protocol_writes_twenty_runs() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    assert!(fsrdcf(&["synth", "--kind", "static", "--frames", "20", "--out", path(&seq)]).status.success());
    let out = dir.path().join("out");
    let o = fsrdcf(&[
        "track", "--seq", path(&seq), "--out", path(&out), "--protocol", "tre", "--features", "gray",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_dir(out.join("runs")).unwrap().count(), 20);
}

#[test]
fn bench_reports_each_grid() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    assert!(fsrdcf(&["synth", "--kind", "translate", "--frames", "4", "--out", path(&seq)]).status.success());
    let json = dir.path().join("bench.json");
    let o = fsrdcf(&[
        "bench", "--seq", path(&seq), "--grid-sizes", "9,15", "--frames", "2", "--out", path(&json),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().count(), 3);
    assert!(std::fs::read_to_string(&json).unwrap().contains("\"linear_ratio\""));
}
