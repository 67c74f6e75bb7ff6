use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::tempdir;

fn wealthsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wealthsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn header_command(path: &Path) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    let line = text
        .lines()
        .find_map(|l| l.strip_prefix("# command: "))
        .expect("command line in header");
    line.split_whitespace()
        .skip(1)
        .map(str::to_string)
        .collect()
}

#[test]
fn simulate_writes_one_histogram_per_checkpoint_and_replays() {
    let dir = tempdir().unwrap();
    let run = |out: &Path| {
        wealthsim(&[
            "simulate",
            "--agents",
            "1000",
            "--r",
            "0.75",
            "--t-max",
            "800000",
            "--checkpoints",
            "1e5,2e5,4e5,8e5",
            "--seed",
            "7",
            "--output",
            out.to_str().unwrap(),
        ])
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&a).status.success());
    assert!(run(&b).status.success());
    let mut names: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "hist_t100000.csv",
            "hist_t200000.csv",
            "hist_t400000.csv",
            "hist_t800000.csv"
        ]
    );
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap());
    }

    // Regenerate from the file's own header into a fresh directory.
    let c = dir.path().join("c");
    let mut args = header_command(&a.join("hist_t400000.csv"));
    args.push(format!("--output={}", c.display()));
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    assert!(wealthsim(&args).status.success());
    assert_eq!(
        fs::read(a.join("hist_t400000.csv")).unwrap(),
        fs::read(c.join("hist_t400000.csv")).unwrap()
    );

    let text = fs::read_to_string(a.join("hist_t800000.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "t,k,count");
    let total: u64 = rows[1..]
        .iter()
        .map(|r| r.split(',').nth(2).unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 1000);
    assert!(!text.contains('\r'));
}

#[test]
fn fit_tail_report() {
    let dir = tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(wealthsim(&[
        "simulate", "--agents", "100000", "--r", "0.5", "--t-max", "1e5", "--seed", "3",
        "--output", out
    ])
    .status
    .success());
    let hist = dir.path().join("hist_t100000.csv");
    let o = wealthsim(&[
        "fit",
        "--input",
        hist.to_str().unwrap(),
        "--what",
        "tail",
        "--output",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fit_tail.json")).unwrap())
            .unwrap();
    for key in [
        "estimate",
        "stderr",
        "window",
        "n_points",
        "diagnostics",
        "sweep",
        "config",
        "rng",
        "command",
        "inputs",
    ] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert_eq!(report["sweep"].as_array().unwrap().len(), 3);
    assert_eq!(report["config"]["r"], "0.5");
    let est = report["estimate"].as_f64().unwrap();
    assert!(est > 2.0 && est < 4.0, "{est}");
}

#[test]
fn width_fit_across_files() {
    let dir = tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(wealthsim(&[
        "simulate",
        "--agents",
        "200",
        "--r",
        "0.25",
        "--checkpoints",
        "1e4,1e5,1e6,2e6",
        "--replicas",
        "4",
        "--output",
        out
    ])
    .status
    .success());
    let inputs: Vec<String> = [10_000, 100_000, 1_000_000, 2_000_000]
        .iter()
        .map(|t| {
            dir.path()
                .join(format!("hist_t{t}.csv"))
                .display()
                .to_string()
        })
        .collect();
    let o = wealthsim(&[
        "fit",
        "--what",
        "width",
        "--input",
        &inputs.join(","),
        "--output",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fit_width.json")).unwrap())
            .unwrap();
    let alpha = report["estimate"].as_f64().unwrap();
    assert!((alpha - 0.5).abs() < 0.1, "{alpha}");
    assert_eq!(report["widths"].as_array().unwrap().len(), 4);
}

#[test]
fn figure_panel_and_reference() {
    let dir = tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = wealthsim(&["figure1", "--panel", "top-right", "--output", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let panel = dir.path().join("top-right");
    for name in [
        "hist_t100000.csv",
        "scaled_t800000.csv",
        "distances.csv",
        "reference.csv",
    ] {
        assert!(panel.join(name).exists(), "{name}");
    }
    let scaled = fs::read_to_string(panel.join("scaled_t800000.csv")).unwrap();
    assert!(scaled.contains("# r = 0.75\n") && scaled.contains("# agents = 1000\n"));
    assert!(scaled.contains("\nx,f\n"));

    let o = wealthsim(&[
        "reference",
        "--r",
        "0.25",
        "--agents",
        "1000",
        "--t-max",
        "1e5",
        "--output",
        out,
    ]);
    assert!(o.status.success());
    let text = fs::read_to_string(dir.path().join("reference.csv")).unwrap();
    let peak = text
        .lines()
        .filter(|l| !l.starts_with('#') && *l != "x,f")
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .fold(0.0, f64::max);
    let expected = (1000.0f64 * 0.5 / std::f64::consts::TAU).sqrt();
    assert!((peak - expected).abs() < 1e-6 * expected);
}

#[test]
fn meanfield_mode_writes_expected_counts() {
    let dir = tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = wealthsim(&[
        "meanfield",
        "--agents",
        "100",
        "--r",
        "0",
        "--checkpoints",
        "10,1000",
        "--output",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("meanfield_t1000.csv")).unwrap();
    assert!(text.contains("# leaked_mass = 0\n"));
    let mass: f64 = text
        .lines()
        .filter(|l| !l.starts_with('#') && *l != "t,k,count")
        .map(|l| l.split(',').nth(2).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((mass - 100.0).abs() < 1e-9);
    assert!(dir.path().join("scaled_t1000.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let bad = wealthsim(&["simulate", "--r", "1.5", "--t-max", "10", "--output", out]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("`r`"));
    assert_eq!(
        wealthsim(&["simulate", "--agents", "ten"]).status.code(),
        Some(1)
    );
    assert_eq!(wealthsim(&["explode"]).status.code(), Some(1));
    assert_eq!(wealthsim(&["--help"]).status.code(), Some(0));
    let missing = dir.path().join("missing.csv");
    assert_eq!(
        wealthsim(&["fit", "--input", missing.to_str().unwrap(), "--output", out])
            .status
            .code(),
        Some(2)
    );
    // Output location is a file, so the directory cannot be created.
    let blocker = dir.path().join("blocker");
    fs::write(&blocker, "").unwrap();
    let o = wealthsim(&[
        "simulate",
        "--t-max",
        "10",
        "--output",
        blocker.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempdir().unwrap();
    let conf = dir.path().join("exp.conf");
    fs::write(
        &conf,
        "# small run\nmode = simulate\nagents = 20\nr = 0.6\nt-max = 500\nseed = 11\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = wealthsim(&[
        "--config",
        conf.to_str().unwrap(),
        "--seed",
        "12",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("hist_t500.csv")).unwrap();
    assert!(text.contains("# seed = 12\n") && text.contains("# agents = 20\n"));
}
