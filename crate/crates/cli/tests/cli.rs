//! End-to-end tests of the `covpot` binary: exit codes, file outputs, and
//! agreement with the library on identical inputs.

use std::path::PathBuf;
use std::process::{Command, Output};

use covpot::io;
use covpot::mle::Link;
use covpot::simulation::{run_study_mode, sample_dataset, ExecMode, SimConfig};
use covpot::{Basis, Family};

fn covpot() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_covpot"));
    cmd.env_remove("COVPOT_OUT_DIR");
    cmd
}

fn tmp(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("covpot_cli_{}_{name}", std::process::id()))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

#[test]
fn help_exits_zero_and_documents_flags() {
    let top = run(covpot().arg("--help"));
    assert_eq!(code(&top), 0);
    for sub in ["simulate", "fit", "threshold"] {
        let out = run(covpot().args([sub, "--help"]));
        assert_eq!(code(&out), 0, "{sub} --help failed");
    }
    let sim = stdout(&run(covpot().args(["simulate", "--help"])));
    for flag in [
        "--config",
        "--preset",
        "--family",
        "--n",
        "--r",
        "--seed",
        "--k-grid",
        "--x-eval",
        "--gamma-a",
        "--gamma-b",
        "--basis",
        "--threshold-basis",
        "--shape-link",
        "--scale-link",
        "--exec",
        "--out",
    ] {
        assert!(sim.contains(flag), "simulate --help misses {flag}");
    }
    let fit = stdout(&run(covpot().args(["fit", "--help"])));
    for flag in [
        "--input",
        "--x-col",
        "--y-col",
        "--method",
        "--k",
        "--p",
        "--scale-basis",
        "--x-query",
    ] {
        assert!(fit.contains(flag), "fit --help misses {flag}");
    }
    let thr = stdout(&run(covpot().args(["threshold", "--help"])));
    for flag in ["--input", "--method", "--k", "--p", "--basis", "--out"] {
        assert!(thr.contains(flag), "threshold --help misses {flag}");
    }
}

#[test]
fn simulate_rejects_zero_replications() {
    let out = run(covpot()
        .args(["simulate", "--r", "0", "--out"])
        .arg(tmp("r0.csv")));
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("replication"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = run(covpot().args(["simulate", "--nope"]));
    assert_eq!(code(&out), 2);
}

#[test]
fn simulate_small_study_is_deterministic_and_well_formed() {
    let args = |out: &PathBuf, exec: &str| {
        vec![
            "simulate".into(),
            "--family".into(),
            "pareto".into(),
            "--n".into(),
            "300".into(),
            "--r".into(),
            "25".into(),
            "--seed".into(),
            "11".into(),
            "--k-grid".into(),
            "30,60".into(),
            "--exec".into(),
            exec.into(),
            "--out".into(),
            out.display().to_string(),
        ]
    };
    let (a, b, s) = (tmp("det_a.csv"), tmp("det_b.csv"), tmp("det_s.csv"));
    let first = run(covpot().args(args(&a, "parallel")));
    assert_eq!(
        code(&first),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&first.stderr)
    );
    assert!(stdout(&first).contains("min MAD"));
    assert_eq!(code(&run(covpot().args(args(&b, "parallel")))), 0);
    assert_eq!(code(&run(covpot().args(args(&s, "serial")))), 0);

    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap(), "two runs differ");
    assert_eq!(bytes, std::fs::read(&s).unwrap(), "serial run differs");

    let rows = io::read_metrics(&a).unwrap();
    assert_eq!(rows.len(), 3 * 2 * 3, "3 methods × 2 k × 3 x");
    for p in [&a, &b, &s] {
        std::fs::remove_file(p).ok();
    }
}

#[test]
fn config_file_is_merged_with_flag_overrides() {
    let config = tmp("merge.json");
    std::fs::write(
        &config,
        r#"{"family": "pareto", "n": 300, "r": 4, "k_grid": [30], "x_eval": [0.32], "seed": 9}"#,
    )
    .unwrap();
    let out_path = tmp("merge.csv");
    let out = run(covpot()
        .args(["simulate", "--config"])
        .arg(&config)
        .args(["--r", "2", "--out"])
        .arg(&out_path));
    assert_eq!(
        code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    // The flag override (r=2) plus file values must reproduce the library
    // run bit for bit.
    let reference = SimConfig {
        family: Family::Pareto,
        n: 300,
        replications: 2,
        k_grid: vec![30],
        x_eval: vec![0.32],
        gamma_coeffs: (-0.05, -2.0),
        master_seed: 9,
        basis: Basis::Linear,
        threshold_basis: None,
        shape_link: Link::Log,
        scale_link: Link::Log,
    };
    let rows = run_study_mode(&reference, ExecMode::Parallel).unwrap();
    let expect = tmp("merge_ref.csv");
    io::write_metrics(&rows, &expect).unwrap();
    assert_eq!(
        std::fs::read(&out_path).unwrap(),
        std::fs::read(&expect).unwrap()
    );
    for p in [&config, &out_path, &expect] {
        std::fs::remove_file(p).ok();
    }
}

#[test]
fn fit_pipeline_recovers_tail_index() {
    let data = sample_dataset(Family::Pareto, (-0.05, -2.0), 800, 7, 0);
    let input = tmp("fit_in.csv");
    io::write_csv(&data, &input).unwrap();

    let report_path = tmp("fit_report.json");
    let out = run(covpot()
        .args(["fit", "--input"])
        .arg(&input)
        .args([
            "--method",
            "constant",
            "--k",
            "200",
            "--x-query",
            "0.32",
            "--out",
        ])
        .arg(&report_path));
    assert_eq!(
        code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("converged=true"));

    let report = io::read_fit_report(&report_path).unwrap();
    assert!(report.fit.converged);
    let points = report
        .evaluations
        .expect("converged fit evaluates the query points");
    let at = points.iter().find(|pt| (pt.x - 0.32).abs() < 1e-9).unwrap();
    assert!(
        (at.gamma - 0.5016).abs() < 0.3,
        "γ̂(0.32) = {} too far from 0.5016",
        at.gamma
    );
    for p in [&input, &report_path] {
        std::fs::remove_file(p).ok();
    }
}

#[test]
fn fit_rejects_zero_k() {
    let input = tmp("fit_k0.csv");
    std::fs::write(&input, "x,y\n0.1,1\n0.2,2\n0.3,3\n0.4,4\n").unwrap();
    let out = run(covpot()
        .args(["fit", "--input"])
        .arg(&input)
        .args(["--method", "constant", "--k", "0", "--out"])
        .arg(tmp("fit_k0.json")));
    assert_eq!(code(&out), 2);
    std::fs::remove_file(&input).ok();
}

#[test]
fn fit_requires_exactly_one_of_k_and_p() {
    let input = tmp("fit_kp.csv");
    std::fs::write(&input, "x,y\n0.1,1\n0.2,2\n0.3,3\n0.4,4\n").unwrap();
    let neither = run(covpot()
        .args(["fit", "--input"])
        .arg(&input)
        .args(["--method", "constant", "--out"])
        .arg(tmp("fit_kp.json")));
    assert_eq!(code(&neither), 2);
    let both = run(covpot()
        .args(["fit", "--input"])
        .arg(&input)
        .args(["--method", "constant", "--k", "2", "--p", "0.9", "--out"])
        .arg(tmp("fit_kp.json")));
    assert_eq!(code(&both), 2);
    std::fs::remove_file(&input).ok();
}

fn ladder_csv(name: &str) -> PathBuf {
    let input = tmp(name);
    let xs = [0.23, 0.05, 0.41, 0.14, 0.59, 0.32, 0.77, 0.50, 0.95, 0.68];
    let mut text = String::from("x,y\n");
    for (i, x) in xs.iter().enumerate() {
        text.push_str(&format!("{x},{}\n", i + 1));
    }
    std::fs::write(&input, text).unwrap();
    input
}

#[test]
fn threshold_constant_is_an_order_statistic() {
    let input = ladder_csv("ladder_const.csv");
    let table = tmp("ladder_const_out.csv");
    let out = run(covpot()
        .args(["threshold", "--input"])
        .arg(&input)
        .args(["--method", "constant", "--k", "3", "--out"])
        .arg(&table));
    assert_eq!(
        code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("achieved_k=3"));

    let text = std::fs::read_to_string(&table).unwrap();
    let mut exceeded = 0usize;
    for line in text.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(
            cells[1].parse::<f64>().unwrap(),
            7.0,
            "u must be the 7th value"
        );
        exceeded += cells[2].parse::<usize>().unwrap();
    }
    assert_eq!(exceeded, 3);
    for p in [&input, &table] {
        std::fs::remove_file(p).ok();
    }
}

#[test]
fn threshold_calibrated_methods_agree_on_count() {
    // Continuous data, k well inside the calibration bracket for both rules.
    let data = sample_dataset(Family::Pareto, (-0.05, -2.0), 200, 3, 0);
    let input = tmp("cal_in.csv");
    io::write_csv(&data, &input).unwrap();
    let mut counts = Vec::new();
    for method in ["quantile", "expectile"] {
        let table = tmp(&format!("cal_{method}.csv"));
        let out = run(covpot()
            .args(["threshold", "--input"])
            .arg(&input)
            .args(["--method", method, "--k", "30", "--out"])
            .arg(&table));
        assert_eq!(
            code(&out),
            0,
            "stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let text = std::fs::read_to_string(&table).unwrap();
        let exceeded: usize = text
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
            .sum();
        counts.push(exceeded);
        std::fs::remove_file(&table).ok();
    }
    assert_eq!(counts[0], counts[1], "calibrated counts differ: {counts:?}");
    assert_eq!(counts[0], 30);
    std::fs::remove_file(&input).ok();
}

#[test]
fn out_dir_env_joins_relative_paths() {
    let dir = tmp("outdir");
    std::fs::create_dir_all(&dir).unwrap();
    let input = ladder_csv("ladder_env.csv");
    let out = run(covpot()
        .env("COVPOT_OUT_DIR", &dir)
        .args(["threshold", "--input"])
        .arg(&input)
        .args(["--method", "constant", "--k", "3", "--out", "rel.csv"]));
    assert_eq!(
        code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(
        dir.join("rel.csv").is_file(),
        "output not created under COVPOT_OUT_DIR"
    );
    std::fs::remove_file(&input).ok();
    std::fs::remove_dir_all(&dir).ok();
}
