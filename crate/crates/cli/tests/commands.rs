use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn adstm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adstm"))
        .args(args)
        .env_remove("ADSTM_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn stdout_path(o: &Output) -> PathBuf {
    PathBuf::from(String::from_utf8_lossy(&o.stdout).trim())
}

fn fgrid_count(dir: &Path) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "fgrid"))
        .count()
}

fn summary_value(dir: &Path, key: &str) -> String {
    let text = std::fs::read_to_string(dir.join("summary.txt")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing from summary"))
        .to_string()
}

fn simulate(dir: &Path, extra: &[&str]) {
    let data = dir.to_str().unwrap();
    let mut args = vec!["simulate", "--seed", "7", "--out", data, "--refine", "2"];
    args.extend_from_slice(extra);
    let o = adstm(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_seed_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("d");
    let o = adstm(&["simulate", "--preset", "table1", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--seed"));
    assert!(!out.exists());
}

#[test]
fn table1_preset_writes_thirty_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("data");
    let o = adstm(&["simulate", "--preset", "table1", "--seed", "7", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let manifest = stdout_path(&o);
    assert_eq!(manifest, out.join("manifest"));
    assert_eq!(fgrid_count(&out), 30);
    assert_eq!(fgrid_count(&out.join("truth")), 30);
    let text = std::fs::read_to_string(manifest).unwrap();
    assert!(text.contains("grid=20x20"));
    assert!(text.contains("seed=7"));
    let first = std::fs::read_to_string(out.join("sim_000.fgrid")).unwrap();
    assert!(first.contains("n1: 20") && first.contains("n2: 20"));
}

#[test]
fn single_frame_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), &["--frames", "1"]);
    assert_eq!(fgrid_count(tmp.path()), 1);
}

#[test]
fn unknown_preset_and_bad_source() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_str().unwrap();
    assert_eq!(code(&adstm(&["simulate", "--seed", "1", "--preset", "other", "--out", d])), 2);
    assert_eq!(code(&adstm(&["simulate", "--seed", "1", "--source", "a:0.1", "--out", d])), 2);
}

#[test]
fn fit_reports_state_dimension_for_two_sources() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, &["--frames", "3", "--source", "a:0.1:0:0", "--source", "b:0.2:0.5:0.1"]);
    let out = tmp.path().join("fit");
    let o = adstm(&[
        "fit", "--data", data.to_str().unwrap(), "--seed", "1", "--truncation", "20", "20", "--iters", "1",
        "--burn-in", "0", "--flow", "0.015", "45", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_path(&o), out);
    assert_eq!(summary_value(&out, "state_dim"), "800");
    assert!(String::from_utf8_lossy(&o.stderr).contains("state dimension 800"));
    assert!(summary_value(&out, "sigma2_mean.a").parse::<f64>().is_ok());
    assert!(summary_value(&out, "sigma2_mean.b").parse::<f64>().is_ok());
    assert_eq!(fgrid_count(&out.join("filtered")), 3);
    assert_eq!(fgrid_count(&out.join("bias")), 3);
    let diag = std::fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count(), 4);
    assert!(diag.starts_with("step,time,observed"));
}

#[test]
fn fit_is_reproducible_and_echoes_settings() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, &["--frames", "6"]);
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = adstm(&[
            "fit", "--data", data.to_str().unwrap(), "--seed", "4", "--iters", "6", "--burn-in", "2", "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for rel in ["diagnostics.csv", "manifest.txt", "filtered/filtered_005.fgrid", "bias/bias_003.fgrid"] {
        assert_eq!(std::fs::read(a.join(rel)).unwrap(), std::fs::read(b.join(rel)).unwrap(), "{rel}");
    }
    let strip = |p: &Path| -> String {
        std::fs::read_to_string(p.join("summary.txt"))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("wall_time_secs"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&a), strip(&b));
    let manifest = std::fs::read_to_string(a.join("manifest.txt")).unwrap();
    for line in ["seed=4", "truncation=6 6", "iters=6", "burn_in=2", "model=physics", "flow=estimated", "bounds=none"] {
        assert!(manifest.lines().any(|l| l == line), "{line} not echoed");
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, &["--frames", "4"]);
    let out = tmp.path().join("fit");
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(
        &cfg,
        format!(
            "# small run\ndata = {}\nseed = 5\ntruncation = 4 4\niters = 3\nburn_in = 1\nmodel = physics\n",
            data.display()
        ),
    )
    .unwrap();
    let o = adstm(&["--config", cfg.to_str().unwrap(), "fit", "--iters", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed=5\n"));
    assert!(manifest.contains("iters=4\n"));
    assert_eq!(summary_value(&out, "state_dim"), "32");

    std::fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(code(&adstm(&["--config", cfg.to_str().unwrap(), "fit"])), 2);
}

#[test]
fn data_driven_model_runs_without_bias_half() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, &["--frames", "8"]);
    let out = tmp.path().join("dd");
    let o = adstm(&[
        "fit", "--data", data.to_str().unwrap(), "--seed", "2", "--model", "data-driven", "--iters", "4",
        "--burn-in", "1", "--truncation", "4", "4", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(summary_value(&out, "state_dim"), "16");
    assert!(std::fs::read_to_string(out.join("summary.txt")).unwrap().lines().all(|l| !l.starts_with("flow_mean")));
}

#[test]
fn predict_zero_steps_copies_last_filtered_field() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, &["--frames", "5"]);
    let out = tmp.path().join("pred");
    let o = adstm(&[
        "predict", "--data", data.to_str().unwrap(), "--seed", "3", "--iters", "4", "--burn-in", "1", "--steps",
        "0", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let body = |p: PathBuf| -> Vec<String> {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("source:"))
            .map(str::to_string)
            .collect()
    };
    assert_eq!(
        body(out.join("predicted/predicted_000.fgrid")),
        body(out.join("filtered/filtered_004.fgrid"))
    );
    assert_eq!(fgrid_count(&out.join("predicted")), 1);
    assert!(out.join("predicted/predicted_000.pgm").exists());
}

#[test]
fn predict_writes_each_step() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, &["--frames", "4"]);
    let out = tmp.path().join("pred");
    let o = adstm(&[
        "predict", "--data", data.to_str().unwrap(), "--seed", "3", "--iters", "3", "--burn-in", "1", "--steps",
        "3", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(fgrid_count(&out.join("predicted")), 4);
    assert_eq!(fgrid_count(&out.join("predicted_bias")), 4);
    let csv = std::fs::read_to_string(out.join("forecast.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let last = std::fs::read_to_string(out.join("predicted/predicted_003.fgrid")).unwrap();
    assert!(last.contains("time: 2020-09-27T00:30:00Z"));
}

#[test]
fn eval_writes_table_and_images() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, &["--frames", "8"]);
    let out = tmp.path().join("eval");
    let o = adstm(&[
        "eval", "--data", data.to_str().unwrap(), "--seed", "1", "--iters", "6", "--burn-in", "2", "--horizons",
        "3", "--flow", "0.015", "45", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_path(&o), out.join("mse.csv"));
    let csv = std::fs::read_to_string(out.join("mse.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "model,flow,h6,h7,h8");
    let row: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&row[..2], &["physics", "0.015@45"]);
    for v in &row[2..] {
        let mse: f64 = v.parse().unwrap();
        assert!(mse.is_finite() && mse > 0.0);
    }
    let pgm = std::fs::read(out.join("images/forecast_006.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n20 20\n255\n"));
    assert_eq!(pgm.len(), b"P5\n20 20\n255\n".len() + 400);
    assert!(out.join("images/reference_008.pgm").exists());
}

#[test]
fn flow_command_writes_fields() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, &["--frames", "6"]);
    let out = tmp.path().join("flow");
    let o = adstm(&["flow", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["vx.csv", "vy.csv", "diffusivity.csv", "speed_kmh.csv"] {
        let text = std::fs::read_to_string(out.join(f)).unwrap();
        assert_eq!(text.lines().count(), 20, "{f}");
        assert!(text.lines().all(|l| l.split(',').count() == 20));
    }
    let dir: f64 = summary_value(&out, "mean_direction_deg").parse().unwrap();
    assert!((dir - 45.0).abs() < 10.0, "{dir}");
}

#[test]
fn horizon_without_flow_information_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, &["--frames", "1"]);
    let d = data.to_str().unwrap();
    let o = adstm(&["predict", "--data", d, "--seed", "1", "--iters", "2", "--burn-in", "0", "--steps", "2"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("flow"));
}

#[test]
fn exit_codes_for_bad_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let e = empty.to_str().unwrap();
    assert_eq!(code(&adstm(&["fit", "--data", e, "--seed", "1"])), 5);
    assert_eq!(code(&adstm(&["fit", "--data", "/no/such/dir", "--seed", "1"])), 2);

    let data = tmp.path().join("data");
    simulate(&data, &["--frames", "2"]);
    let d = data.to_str().unwrap();
    assert_eq!(code(&adstm(&["fit", "--data", d, "--seed", "1", "--truncation", "5", "4"])), 2);
    assert_eq!(code(&adstm(&["fit", "--data", d, "--seed", "1", "--model", "lstm"])), 2);
    // Benchmark values exceed 1, so a [0, 1] range rejects them.
    let strict = adstm(&["fit", "--data", d, "--seed", "1", "--bounds", "0,1", "--strict"]);
    assert_eq!(code(&strict), 3);

    std::fs::write(data.join("sim_001.fgrid"), "#FGRID v1\nsource: sim\n").unwrap();
    assert_eq!(code(&adstm(&["fit", "--data", d, "--seed", "1"])), 3);

    let o = Command::new(env!("CARGO_BIN_EXE_adstm"))
        .args(["fit", "--data", d, "--seed", "1"])
        .env("ADSTM_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn downsampling_limits_observed_pixels() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, &["--frames", "3"]);
    let out = tmp.path().join("fit");
    let o = adstm(&[
        "fit", "--data", data.to_str().unwrap(), "--seed", "1", "--iters", "2", "--burn-in", "0", "--downsample",
        "10", "10", "--update", "innovation", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let diag = std::fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    for line in diag.lines().skip(1) {
        assert_eq!(line.split(',').nth(2), Some("100"));
    }
    assert_eq!(summary_value(&out, "observed_total"), "300");
}
