use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qdephase(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdephase")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Data rows as numbers; empty fields become NaN.
fn rows(csv: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let data = lines.map(|l| l.split(',').map(|f| f.parse().unwrap_or(f64::NAN)).collect()).collect();
    (header, data)
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let (header, data) = rows(csv);
    let i = header.iter().position(|h| h == name).unwrap();
    data.iter().map(|r| r[i]).collect()
}

#[test]
fn unconditional_noiseless_ghz_gives_4t2() {
    let o = qdephase(&["unconditional", "--N", "2", "--kappa", "0", "--t-max", "2", "--sample-times", "0,0.5,1,2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = stdout(&o);
    let t = column(&csv, "time");
    let q = column(&csv, "unconditional_qfi");
    assert_eq!(q[0], 0.0);
    for (t, q) in t.iter().zip(&q) {
        assert!((q - 4.0 * t * t).abs() < 1e-9, "{t}: {q}");
    }
    assert_eq!(column(&csv, "ultimate_qfi"), q);
}

#[test]
fn unconditional_decays_after_its_peak() {
    let times: Vec<String> = (0..=40).map(|i| format!("{}", i as f64 * 0.1)).collect();
    let o = qdephase(&["unconditional", "--N", "2", "--kappa", "5", "--t-max", "4", "--sample-times", &times.join(",")]);
    let q = column(&stdout(&o), "unconditional_qfi");
    let peak = q.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert!(peak > 0 && peak < q.len() - 1);
    assert!(q[peak..].windows(2).all(|w| w[1] < w[0]));
    assert!(*q.last().unwrap() < 1e-10);
}

#[test]
fn monitor_start_row_is_zero_and_pd_saturates() {
    let o = qdephase(&["monitor", "--N", "3", "--eta", "1", "--trajectories", "20", "--sample-times", "0,0.5,1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = stdout(&o);
    let (header, data) = rows(&csv);
    for (h, v) in header.iter().zip(&data[0]) {
        if h.ends_with("qfi") || h == "fi_traj" {
            assert_eq!(*v, 0.0, "{h}");
        }
    }
    let eff = column(&csv, "effective_qfi");
    let se = column(&csv, "effective_qfi_stderr");
    let ult = column(&csv, "ultimate_qfi");
    for i in 0..eff.len() {
        assert!((eff[i] - ult[i]).abs() <= 3.0 * se[i] + 1e-9 * ult[i].max(1.0), "row {i}");
    }
}

#[test]
fn monitor_homodyne_matches_the_rescaled_unconditional_qfi() {
    let o = qdephase(&["monitor", "--unravelling", "hd", "--eta", "0.5", "--trajectories", "30", "--sample-times", "0.5,1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = stdout(&o);
    let cond = column(&csv, "mean_conditional_qfi");
    let se = column(&csv, "mean_conditional_qfi_stderr");
    let target = column(&csv, "rescaled_unconditional_qfi");
    for i in 0..cond.len() {
        assert!((cond[i] - target[i]).abs() <= 3.0 * se[i] + 1e-9 * target[i].max(1.0), "row {i}");
    }
}

#[test]
fn output_is_deterministic_and_independent_of_workers() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, workers: &str, m: &str| {
        let path = dir.path().join(name);
        let o = qdephase(&[
            "monitor", "--unravelling", "hd", "--theta", "0.4", "--eta", "0.7", "--trajectories", m, "--seed", "7",
            "--workers", workers, "--out", path.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(path).unwrap()
    };
    assert_eq!(run("a", "1", "1"), run("b", "1", "1"));
    assert_eq!(run("c", "1", "6"), run("d", "3", "6"));
}

#[test]
fn echoed_config_reproduces_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.csv");
    let second = dir.path().join("second.csv");
    let o = qdephase(&["monitor", "--N", "1", "--kappa", "0.3", "--trajectories", "5", "--seed", "3", "--out", first.to_str().unwrap()]);
    assert!(o.status.success());
    let o = qdephase(&["monitor", "--config", first.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());

    let echo = fs::read_to_string(&first).unwrap().lines().find_map(|l| l.strip_prefix("# config: ").map(String::from)).unwrap();
    let json = dir.path().join("config.json");
    fs::write(&json, echo).unwrap();
    let third = dir.path().join("third.csv");
    let o = qdephase(&["monitor", "--config", json.to_str().unwrap(), "--out", third.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(fs::read(&first).unwrap(), fs::read(&third).unwrap());
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn config_errors_exit_with_code_1() {
    let dir = tempfile::tempdir().unwrap();
    let typo = write(dir.path(), "typo.json", "{\n  \"N\": 2,\n  \"kapa\": 1.0\n}\n");
    let o = qdephase(&["unconditional", "--config", &typo]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("kapa") && err.contains("typo.json:3"), "{err}");

    for args in [
        &["unconditional", "--eta", "1.5"][..],
        &["unconditional", "--sample-times", "0.5,2"],
        &["monitor", "--unravelling", "pd", "--theta", "1"],
        &["monitor", "--trajectories", "0"],
        &["monitor", "--no-such-flag"],
    ] {
        assert_eq!(qdephase(args).status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn amplitude_files_are_loaded_and_normalized() {
    let dir = tempfile::tempdir().unwrap();
    // unnormalized |+>: QFI of a single qubit rotated for t is t^2
    write(dir.path(), "plus.txt", "# re im\n1 0\n1 0\n");
    let config = write(dir.path(), "c.json", "{\"N\": 1, \"kappa\": 0, \"initial_state\": \"plus.txt\", \"sample_times\": [1.0]}");
    let o = qdephase(&["unconditional", "--config", &config]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("normalized"));
    assert!((column(&stdout(&o), "unconditional_qfi")[0] - 1.0).abs() < 1e-12);

    let bad = write(dir.path(), "bad.txt", "1 0\n1\n");
    let o = qdephase(&["unconditional", "--N", "1", "--initial-state", &bad]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn describe_columns_lists_the_header() {
    let o = qdephase(&["monitor", "--describe-columns"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in ["fi_traj", "mean_conditional_qfi", "effective_qfi", "ultimate_qfi"] {
        assert!(text.contains(name));
    }
}

#[test]
fn verify_reports_one_line_per_check() {
    let o = qdephase(&["verify"]);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).collect();
    assert_eq!(lines.len(), 12, "{text}");
    let failing: Vec<&str> = lines.iter().filter(|l| l.starts_with("FAIL")).copied().collect();
    // the theta = 0 record carries no information in this model, see README
    assert_eq!(failing.len(), 1, "{text}");
    assert!(failing[0].contains("[4b]"));
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn verify_catches_the_wrong_rescaling() {
    let o = qdephase(&["verify", "--inject-wrong-rescaling"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).lines().any(|l| l.starts_with("FAIL [1]")));
}
