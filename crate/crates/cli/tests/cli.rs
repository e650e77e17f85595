//! End-to-end tests of the `spincool` binary: exit codes, file emission,
//! schema guarantees, determinism, and the subcommand surface.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spincool"))
}

fn fresh_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("spincool-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn sidecar(dir: &Path, stem: &str) -> serde_json::Value {
    let text = fs::read_to_string(dir.join(format!("{stem}.summary.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn minimal_config_fills_defaults_and_gates_dissipation() {
    let dir = fresh_dir("minimal");
    let cfg = write_config(
        &dir,
        "min.json",
        r#"{ "scenario": 1, "M": 3, "schedule": { "n_steps": 40 } }"#,
    );
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));

    let side = sidecar(&dir, "min");
    assert_eq!(side["scenario"], "1");
    assert_eq!(side["M"], 3);
    // Scenario 1: no dissipation, zero detunings, uniform center coupling.
    assert!(side["gating"]["dissipation_free"].as_bool().unwrap());
    let g = side["g_rad_s"].as_array().unwrap();
    assert_eq!(g.len(), 3);
    for v in g {
        assert!((v.as_f64().unwrap() - 176.2443).abs() < 1e-3);
    }
    assert!(side["omega_prime_rad_s"]
        .as_array()
        .unwrap()
        .iter()
        .all(|v| v.as_f64().unwrap() == 0.0));
    // Schedule defaults: 5 us substep, 5 us reset, 95 us window.
    assert_eq!(side["schedule"]["delta_s"].as_f64().unwrap(), 5e-6);
    assert_eq!(side["schedule"]["t_i_s"].as_f64().unwrap(), 5e-6);
    assert_eq!(side["schedule"]["t_int_s"].as_f64().unwrap(), 95e-6);
    assert_eq!(side["rate_convention"], "caption-literal");
    assert_eq!(side["ladder_convention"], "half");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn preset_arrays_are_echoed_verbatim() {
    let dir = fresh_dir("verbatim");
    // The bundled seven-spin benchmark, shortened: arrays must round-trip
    // untouched into the sidecar.
    let cfg = write_config(
        &dir,
        "bench.json",
        r#"{
          "scenario": 4,
          "M": 7,
          "omega_prime_rad_s": [4736.0, 455.0, -6867.0, 1773.0, -1569.0, 703.0, -5204.0],
          "g_rad_s": [193.0, 163.0, 175.0, 225.0, 178.0, 160.0, 268.0],
          "rate_convention": "dephasing-calibrated",
          "ladder_convention": "plain",
          "schedule": { "n_steps": 5 }
        }"#,
    );
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    let side = sidecar(&dir, "bench");
    let g: Vec<f64> = side["g_rad_s"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(g, vec![193.0, 163.0, 175.0, 225.0, 178.0, 160.0, 268.0]);
    let w: Vec<f64> = side["omega_prime_rad_s"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(
        w,
        vec![4736.0, 455.0, -6867.0, 1773.0, -1569.0, 703.0, -5204.0]
    );
    // Scenario 4 enables all four families.
    for key in [
        "dephasing_fq",
        "dephasing_spins",
        "longitudinal_fq",
        "longitudinal_spins",
    ] {
        assert!(side["gating"][key].as_bool().unwrap(), "{key} should be on");
    }
    // CSV header carries one column per spin.
    let csv = fs::read_to_string(dir.join("bench.csv")).unwrap();
    assert!(csv.starts_with(
        "step,time_s,p_up_1,p_up_2,p_up_3,p_up_4,p_up_5,p_up_6,p_up_7,p_up_mean,trace_error,min_eig\n"
    ));
    assert_eq!(csv.lines().count(), 7, "header + 6 rows (steps 0..=5)");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn array_length_mismatch_is_rejected() {
    let dir = fresh_dir("len");
    let cfg = write_config(
        &dir,
        "bad.json",
        r#"{
          "scenario": 4,
          "M": 7,
          "omega_prime_rad_s": [0, 0, 0, 0, 0, 0, 0],
          "g_rad_s": [1.0, 2.0, 3.0, 4.0, 5.0]
        }"#,
    );
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("g_rad_s"), "stderr should name the key: {err}");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn unknown_keys_are_named_in_the_error() {
    let dir = fresh_dir("unknown");
    let cfg = write_config(
        &dir,
        "typo.json",
        r#"{ "scenario": 1, "M": 2, "shedule": { "n_steps": 5 } }"#,
    );
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("shedule"), "stderr should name the key: {err}");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn sampled_runs_are_byte_identical_for_a_seed() {
    let dir = fresh_dir("seeded");
    let cfg = write_config(
        &dir,
        "sampled.json",
        r#"{
          "scenario": 2,
          "M": 4,
          "sampling": { "seed": 11 },
          "schedule": { "n_steps": 20 }
        }"#,
    );
    let out_a = fresh_dir("seeded-a");
    let out_b = fresh_dir("seeded-b");
    for out in [&out_a, &out_b] {
        let run = bin()
            .args(["simulate", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .output()
            .unwrap();
        assert!(run.status.success(), "{}", stderr_of(&run));
    }
    let csv_a = fs::read(out_a.join("sampled.csv")).unwrap();
    let csv_b = fs::read(out_b.join("sampled.csv")).unwrap();
    assert_eq!(csv_a, csv_b, "same config + seed must give identical bytes");

    // A different seed changes the ensemble (and the sidecar says so).
    let run = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--seed", "12", "--out"])
        .arg(&out_b)
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", stderr_of(&run));
    let csv_c = fs::read(out_b.join("sampled.csv")).unwrap();
    assert_ne!(csv_a, csv_c);
    assert_eq!(sidecar(&out_b, "sampled")["seed"], 12);
    // Sampled runs record the drawn positions.
    assert_eq!(
        sidecar(&out_b, "sampled")["positions_m"]
            .as_array()
            .unwrap()
            .len(),
        4
    );
    for d in [dir, out_a, out_b] {
        fs::remove_dir_all(&d).unwrap();
    }
}

#[test]
fn seed_flag_requires_a_sampling_block() {
    let dir = fresh_dir("seedless");
    let cfg = write_config(
        &dir,
        "fixed.json",
        r#"{
          "scenario": 2,
          "M": 2,
          "omega_prime_rad_s": [0, 0],
          "g_rad_s": [175.0, 175.0],
          "schedule": { "n_steps": 5 }
        }"#,
    );
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--seed", "7", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("sampling"));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn scenario_gates_reject_forbidden_rates() {
    let dir = fresh_dir("gates");
    // Scenario 2 must not carry a rates block.
    let cfg = write_config(
        &dir,
        "s2.json",
        r#"{
          "scenario": 2,
          "M": 2,
          "omega_prime_rad_s": [0, 0],
          "g_rad_s": [175.0, 175.0],
          "rates": { "gamma_t_fq": 1000.0 }
        }"#,
    );
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("without dissipation"));

    // Scenario 3 must reject longitudinal rates.
    let cfg = write_config(
        &dir,
        "s3.json",
        r#"{
          "scenario": 3,
          "M": 2,
          "omega_prime_rad_s": [0, 0],
          "g_rad_s": [175.0, 175.0],
          "rates": { "gamma_l_spin": 1.0 }
        }"#,
    );
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("dephasing only"));

    // Scenario 3 with only dephasing given runs, and the sidecar shows
    // zeroed longitudinal rates.
    let cfg = write_config(
        &dir,
        "s3ok.json",
        r#"{
          "scenario": 3,
          "M": 2,
          "omega_prime_rad_s": [0, 0],
          "g_rad_s": [175.0, 175.0],
          "schedule": { "n_steps": 10 }
        }"#,
    );
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    let side = sidecar(&dir, "s3ok");
    assert!(side["gamma_l"]
        .as_array()
        .unwrap()
        .iter()
        .all(|v| v.as_f64().unwrap() == 0.0));
    assert!(side["gating"]["dephasing_fq"].as_bool().unwrap());
    assert!(!side["gating"]["longitudinal_fq"].as_bool().unwrap());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn two_spin_plateau_sits_at_the_dark_floor() {
    let dir = fresh_dir("floor");
    // Two equally coupled spins without dissipation keep one ensemble
    // excitation trapped: the mean excited population saturates at 1/8.
    let cfg = write_config(
        &dir,
        "pair.json",
        r#"{
          "scenario": 1,
          "M": 2,
          "ladder_convention": "plain",
          "schedule": { "n_steps": 3000 }
        }"#,
    );
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    let side = sidecar(&dir, "pair");
    let final_p = side["saturation"]["final_p_up_mean"].as_f64().unwrap();
    assert!(
        (final_p - 0.125).abs() < 0.01,
        "two-spin plateau {final_p:.5} should sit at 1/8"
    );
    assert!(side["saturation"]["saturated_at"].is_u64());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn idealized_scenario_writes_symmetric_rows() {
    let dir = fresh_dir("ideal");
    let cfg = write_config(
        &dir,
        "walk.json",
        r#"{
          "scenario": "idealized",
          "M": 6,
          "idealized_mode": "step1",
          "schedule": { "n_steps": 200 }
        }"#,
    );
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    let side = sidecar(&dir, "walk");
    // Extraction-only floor for six spins: sum_j w_j (1 - j/3) / 2 = 47/192.
    let final_p = side["saturation"]["final_p_up_mean"].as_f64().unwrap();
    assert!(
        (final_p - 47.0 / 192.0).abs() < 1e-9,
        "six-spin extraction floor {final_p:.9} should be 47/192"
    );
    let csv = fs::read_to_string(dir.join("walk.csv")).unwrap();
    let last = csv.lines().last().unwrap();
    let cells: Vec<&str> = last.split(',').collect();
    assert_eq!(cells.len(), 2 + 6 + 3);
    // Permutation symmetry: per-spin columns equal the mean column.
    assert!(cells[2..8].iter().all(|&c| c == cells[8]));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn idealized_subcommand_streams_csv() {
    let out = bin()
        .args([
            "idealized",
            "--m",
            "10",
            "--mode",
            "step1+2",
            "--cycles",
            "60",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "cycle,p_up");
    let values: Vec<f64> = lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 61);
    assert_eq!(values[0], 0.5);
    // Monotone cooling toward zero under extraction + remix.
    assert!(values.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    assert!(*values.last().unwrap() < 0.02);
}

#[test]
fn coupling_and_gibbs_print_documented_values() {
    let out = bin()
        .args(["coupling", "--x", "0", "--y", "0"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "1.76244307e2");

    let out = bin()
        .args(["gibbs", "--field-mT", "1", "--temp-mK", "10"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "4.66425971e-1");

    // Outside the loop: usage error, not a crash.
    let out = bin()
        .args(["coupling", "--x", "4e-6", "--y", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn xcheck_subcommand_emits_passing_json() {
    let out = bin().args(["xcheck", "--m", "2"]).output().unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    let report: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("stdout must be JSON");
    assert_eq!(report["m_spins"], 2);
    assert!(report["passed"].as_bool().unwrap());
    assert!(report["basis"]["passed"].as_bool().unwrap());
}

#[test]
fn sweep_fans_out_and_aggregates_failures() {
    let configs = fresh_dir("sweep-configs");
    let out_dir = fresh_dir("sweep-out");
    write_config(
        &configs,
        "a.json",
        r#"{ "scenario": 1, "M": 2, "schedule": { "n_steps": 10 } }"#,
    );
    write_config(
        &configs,
        "b.json",
        r#"{ "scenario": "idealized", "M": 4, "schedule": { "n_steps": 30 } }"#,
    );
    let out = bin()
        .args(["sweep", "--config-dir"])
        .arg(&configs)
        .args(["--jobs", "2", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    for stem in ["a", "b"] {
        assert!(out_dir.join(format!("{stem}.csv")).exists());
        assert!(out_dir.join(format!("{stem}.summary.json")).exists());
    }

    // A broken config in the directory turns the sweep exit nonzero while
    // the good ones still run.
    write_config(&configs, "c.json", r#"{ "scenario": 9, "M": 2 }"#);
    let out = bin()
        .args(["sweep", "--config-dir"])
        .arg(&configs)
        .args(["--jobs", "2", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("c.json"));
    for d in [configs, out_dir] {
        fs::remove_dir_all(&d).unwrap();
    }
}
