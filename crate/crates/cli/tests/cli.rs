use std::path::Path;
use std::process::{Command, Output};

fn spikelab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spikelab"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value_of(out: &str, name: &str) -> f64 {
    out.lines()
        .find_map(|l| {
            let (k, rest) = l.split_once('=')?;
            (k.trim() == name).then(|| rest.split_whitespace().next().unwrap().parse().unwrap())
        })
        .unwrap_or_else(|| panic!("{name} missing from\n{out}"))
}

#[test]
fn nucleation_threshold_printed() {
    let dir = tempfile::tempdir().unwrap();
    let o = spikelab(
        &["nucleation", "--a", "0.5", "--b", "1", "--c", "1", "--l", "4", "--delta1", "1e-4"],
        dir.path(),
    );
    assert!(o.status.success());
    let d = value_of(&stdout(&o), "D_nuc");
    assert!((d - 1.06).abs() / 1.06 < 0.03, "D_nuc = {d}");
    let summary = std::fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    assert!(summary.starts_with("quantity,value,tolerance,source\nD_nuc,"));
}

#[test]
fn smalleig_threshold_printed() {
    let dir = tempfile::tempdir().unwrap();
    let o = spikelab(&["smalleig", "--c", "1"], dir.path());
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("tau_h                    =         1.166667"), "{out}");
    assert!((value_of(&out, "tau_h") - 7.0 / 6.0).abs() < 1e-6);
}

#[test]
fn malformed_config_exits_one_without_output() {
    let dir = tempfile::tempdir().unwrap();
    for (i, body) in ["a = 0.5\nthis line is broken\n", "a = 0.5\nalpha = 2\n", "b = -1\n"]
        .iter()
        .enumerate()
    {
        let cfg = dir.path().join(format!("bad{i}.cfg"));
        std::fs::write(&cfg, body).unwrap();
        let o = spikelab(
            &["nucleation", "--config", cfg.to_str().unwrap(), "--output-dir", "res"],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(1), "{body}");
        assert!(!dir.path().join("res").exists());
    }
    let o = spikelab(&["nucleation", "--gamma", "1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn flags_override_config_and_run_uses_command_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# drift threshold\ncommand = smalleig\nc = 2\n").unwrap();
    let o = spikelab(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success());
    assert!((value_of(&stdout(&o), "tau_h") - 14.0 / 6.0).abs() < 1e-6);
    let o = spikelab(&["run", "--config", cfg.to_str().unwrap(), "--c", "3"], dir.path());
    assert!((value_of(&stdout(&o), "tau_h") - 3.5).abs() < 1e-6);
}

#[test]
fn manifest_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = spikelab(
        &["simulate", "--t-end", "1", "--dt", "0.01", "--tau", "0.3", "--output-dir", "first"],
        dir.path(),
    );
    assert!(o.status.success());
    let manifest = dir.path().join("first/manifest.txt");
    let text = std::fs::read_to_string(&manifest).unwrap();
    assert!(text.contains("command = simulate\n") && text.contains("tau = 0.3\n"));
    let o = spikelab(
        &["run", "--config", manifest.to_str().unwrap(), "--output-dir", "second"],
        dir.path(),
    );
    assert!(o.status.success());
    for f in ["summary.csv", "track.csv", "snapshots.csv", "events.csv"] {
        let a = std::fs::read(dir.path().join("first").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("second").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn seeded_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec![
            "simulate", "--initial", "homogeneous", "--seed", "7", "--perturbation", "1e-2",
            "--t-end", "0.5", "--dt", "0.01", "--domain", "full", "--n", "801", "--output-dir", out,
        ]
    };
    assert!(spikelab(&args("r1"), dir.path()).status.success());
    assert!(spikelab(&args("r2"), dir.path()).status.success());
    for f in ["summary.csv", "track.csv", "snapshots.csv"] {
        let a = std::fs::read(dir.path().join("r1").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("r2").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn solver_failure_exits_two_with_error_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = spikelab(&["equilibrium", "--a", "0.5", "--dv", "0.5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = std::fs::read_to_string(dir.path().join("out/error.txt")).unwrap();
    assert!(!err.trim().is_empty());
    assert!(dir.path().join("out/manifest.txt").exists());
    assert!(!dir.path().join("out/summary.csv").exists());
}

#[test]
fn help_lists_every_key_with_default() {
    let dir = tempfile::tempdir().unwrap();
    let o = spikelab(&["--help"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    for key in ["--a <VALUE>", "--delta1", "--ramp_rate", "--sweep_values", "--output_dir"] {
        assert!(out.contains(key), "{key}");
    }
    assert!(out.contains("[default: 1e-4]"));
    for cmd in ["equilibrium", "nucleation", "nlep-theta", "nlep-tau", "smalleig", "simulate", "continue", "sweep"] {
        assert!(out.contains(cmd), "{cmd}");
    }
}

#[test]
fn sweep_writes_one_directory_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let o = spikelab(
        &[
            "sweep", "--sweep-command", "smalleig", "--sweep-key", "c", "--sweep-values",
            "0.5,1,2", "--workers", "2",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let root = dir.path().join("out");
    for (i, c) in ["0.5", "1", "2"].iter().enumerate() {
        let sub = root.join(format!("run_{i:03}_c={c}"));
        let m = std::fs::read_to_string(sub.join("manifest.txt")).unwrap();
        assert!(m.contains(&format!("c = {c}\n")));
        assert!(m.contains("command = smalleig\n"));
    }
    let csv = std::fs::read_to_string(root.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.contains(",tau_h,")).count(), 3);
}

#[test]
fn nlep_tau_writes_curve() {
    let dir = tempfile::tempdir().unwrap();
    let o = spikelab(&["nlep-tau", "--c_values", "0.5,1,2"], dir.path());
    assert!(o.status.success());
    let out = stdout(&o);
    assert!((value_of(&out, "tau_lh_over_c") - 6.05).abs() < 0.3);
    assert!(value_of(&out, "fit_r2") > 0.99);
    let csv = std::fs::read_to_string(dir.path().join("out/tau_lh.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}
