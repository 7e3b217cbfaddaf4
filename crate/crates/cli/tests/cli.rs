use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn mxsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mxsim")).args(args).output().expect("mxsim runs")
}

fn json(args: &[&str]) -> Value {
    let out = mxsim(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/table3")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mxsim-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[test]
fn predict_baseline_64_cube() {
    let v = json(&["predict", "--problem", "64x64x64", "--tile", "8,16,1", "--ew", "8", "--format", "json"]);
    assert_eq!(v["prediction"]["mem_vrf_total"], 53248);
    assert_eq!(round2(v["prediction"]["arithmetic_intensity"].as_f64().unwrap()), 1.23);
}

#[test]
fn predict_single_fma_with_c_loaded() {
    let args = ["predict", "--problem", "1x1x1", "--tile", "1,1,1", "--ew", "8", "--no-strict", "--format", "json"];
    let with_c: Vec<&str> = args.iter().copied().chain(["--opts", "c_zero=0"]).collect();
    let v = json(&with_c);
    assert_eq!(v["prediction"]["mem_vrf_total"], 4);
    assert_eq!(v["prediction"]["arithmetic_intensity"], 0.0625);
    let zero_c = json(&args);
    assert_eq!(zero_c["prediction"]["mem_vrf_total"], 3);
}

#[test]
fn predict_mx_256_cube_f32() {
    let v = json(&[
        "predict",
        "--problem",
        "256x256x256",
        "--tile",
        "8,32,8",
        "--subtile",
        "8,4,8",
        "--bcast",
        "8",
        "--ew",
        "4",
        "--format",
        "json",
    ]);
    assert_eq!(v["prediction"]["mem_vrf_total"], 2686976);
    assert_eq!(round2(v["prediction"]["arithmetic_intensity"].as_f64().unwrap()), 3.12);
    assert_eq!(v["prediction"]["simd_ratio"], 256.0);
}

#[test]
fn predict_csv_columns_follow_config_terms_metrics() {
    let out = mxsim(&["predict", "--problem", "16x16x16", "--tile", "8,16,1", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let pos = |c: &str| header.iter().position(|h| *h == c).unwrap_or_else(|| panic!("missing {c}"));
    assert!(pos("fpus") < pos("mem_vrf_a"));
    assert!(pos("mem_vrf_a") < pos("mem_vrf_b") && pos("mem_vrf_b") < pos("mem_vrf_cd_down"));
    assert!(pos("mem_vrf_cd_down") < pos("mem_vrf_d_up") && pos("vrf_fpu_d_up") < pos("mem_vrf_total"));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn predict_json_is_deterministic() {
    let args = ["predict", "--config", "../../fixtures/table3/dc_mx_64_8x16x4.cfg", "--format", "json"];
    let a = mxsim(&args);
    let b = mxsim(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["name"], "dc_mx_64_8x16x4");
    assert_eq!(v["prediction"]["mem_vrf_total"], 53248);
}

#[test]
fn simulate_mx_16_cube_with_check() {
    let out = mxsim(&[
        "simulate",
        "--kernel",
        "mx",
        "--problem",
        "16x16x16",
        "--tile",
        "8,16,4",
        "--subtile",
        "8,4,4",
        "--bcast",
        "4",
        "--ew",
        "8",
        "--check",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    let m = &r["ledgers"]["mem_vrf"];
    let total: u64 = ["a", "b", "cd_down", "d_up"].iter().map(|t| m[t].as_u64().unwrap()).sum();
    assert_eq!(total, 1024);
    assert_eq!(r["macs"], 4096);
    assert!(String::from_utf8_lossy(&out.stderr).contains("PASS"));
}

#[test]
fn simulate_empty_assembly_counts_nothing() {
    let path = tmp("empty.mxasm");
    std::fs::write(&path, "").unwrap();
    let r = json(&["simulate", "--asm", path.to_str().unwrap()]);
    assert_eq!(r["macs"], 0);
    assert_eq!(r["cycles"], 0);
    assert_eq!(r["insns"]["total"], 0);
    for b in ["mem_vrf", "vrf_buf", "buf_fpu", "srf_fpu", "vrf_fpu"] {
        for t in ["a", "b", "cd_down", "d_up"] {
            assert_eq!(r["ledgers"][b][t], 0, "{b}.{t}");
        }
    }
}

#[test]
fn simulate_baseline_64_cube() {
    let r = json(&["simulate", "--kernel", "baseline", "--problem", "64x64x64", "--tile", "4,32,1", "--ew", "8"]);
    let m = &r["ledgers"]["mem_vrf"];
    let total: u64 = ["a", "b", "cd_down", "d_up"].iter().map(|t| m[t].as_u64().unwrap()).sum();
    assert_eq!(total, 77824);
}

#[test]
fn emitted_assembly_runs_like_the_generated_kernel() {
    let asm = tmp("mx8.mxasm");
    let cfg = ["--problem", "8x8x8", "--tile", "4,8,4", "--subtile", "4,4,4", "--ew", "8"];
    let mut emit = vec!["emit", "-o", asm.to_str().unwrap()];
    emit.extend(cfg);
    assert!(mxsim(&emit).status.success());

    let image = tmp("mx8.bin");
    let mut sim = vec!["simulate", "--dump", image.to_str().unwrap()];
    sim.extend(cfg);
    let generated = json(&sim);

    let from_asm = json(&["simulate", "--asm", asm.to_str().unwrap(), "--init", image.to_str().unwrap(), "--ew", "8"]);
    assert_eq!(from_asm["ledgers"], generated["ledgers"]);
    assert_eq!(from_asm["insns"], generated["insns"]);
    assert_eq!(from_asm["macs"], 512);
}

#[test]
fn simulation_error_exits_2_with_position() {
    let path = tmp("oob.mxasm");
    std::fs::write(&path, ".element f64\nli a0, 4096\nfld ft0, 0(a0)\n").unwrap();
    let out = mxsim(&["simulate", "--asm", path.to_str().unwrap(), "--mem-bytes", "64"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("pc 1"), "{err}");
}

#[test]
fn verify_passes_every_fixture_but_the_oversized_tile_row() {
    let dir = fixtures();
    let out = mxsim(&["verify", "--dir", dir.to_str().unwrap(), "--format", "json"]);
    let rows: Vec<Value> = serde_json::from_slice::<Value>(&out.stdout).unwrap().as_array().unwrap().clone();
    assert_eq!(rows.len(), 24);
    let failed: Vec<&str> = rows.iter().filter(|r| r["passed"] != true).map(|r| r["name"].as_str().unwrap()).collect();
    assert_eq!(failed, ["dc_baseline_16_4x32x1"]);
    assert_eq!(out.status.code(), Some(3));
    for r in rows.iter().filter(|r| r["passed"] == true) {
        assert_eq!(r["verification"]["first_diff"], Value::Null);
        assert_eq!(r["expected_mismatches"].as_array().unwrap().len(), 0);
    }
}

#[test]
fn verify_single_fixture_exits_0() {
    let path = fixtures().join("mc_mx_64_8x8x8.cfg");
    let out = mxsim(&["verify", "--config", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("PASS"));
}

#[test]
fn verify_resident_accumulation_reports_vrf_buf_cd_down() {
    let out = mxsim(&[
        "verify",
        "--problem",
        "16x16x16",
        "--tile",
        "8,4,4",
        "--subtile",
        "8,4,4",
        "--bcast",
        "1",
        "--buffer-resident",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let d = &v[0]["verification"]["first_diff"];
    assert_eq!(d["boundary"], "vrf_buf");
    assert_eq!(d["term"], "cd_down");
    assert_eq!(v[0]["verification"]["bit_exact"], true);
}

#[test]
fn verify_swapped_operands_fails_oracle() {
    let out = mxsim(&[
        "verify",
        "--problem",
        "8x8x8",
        "--tile",
        "4,8,4",
        "--subtile",
        "4,4,4",
        "--swap-operands",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v[0]["verification"]["bit_exact"], false);
    assert_eq!(v[0]["verification"]["first_diff"], Value::Null);
}

#[test]
fn explore_dual_core_energy_ranking() {
    let v = json(&[
        "explore",
        "--problem",
        "64x64x64",
        "--cores",
        "2",
        "--tile-m",
        "4,8",
        "--tile-n",
        "8,16",
        "--tile-k",
        "4",
        "--sub-m",
        "4,8",
        "--sub-n",
        "4",
        "--sub-k",
        "4",
        "--format",
        "json",
    ]);
    let ranked = v.as_array().unwrap();
    assert_eq!(ranked.len(), 4);
    assert_eq!(ranked[0]["tile"], serde_json::json!({"m": 8, "n": 16, "k": 4}));
    assert_eq!(ranked[0]["sub"], serde_json::json!({"m": 8, "n": 4, "k": 4, "bcast": 4}));
}

#[test]
fn explore_transfers_ranking() {
    let v = json(&[
        "explore",
        "--problem",
        "64x64x64",
        "--tile-m",
        "4,8",
        "--tile-n",
        "8,16",
        "--tile-k",
        "4",
        "--sub-m",
        "4,8",
        "--sub-n",
        "4",
        "--sub-k",
        "4",
        "--rank",
        "transfers",
        "--format",
        "json",
    ]);
    let totals: Vec<u64> =
        v.as_array().unwrap().iter().map(|c| c["prediction"]["mem_vrf_total"].as_u64().unwrap()).collect();
    assert_eq!(totals, [53248, 69632, 86016, 102400]);
}

#[test]
fn explore_single_candidate_and_empty_space() {
    let v = json(&[
        "explore",
        "--problem",
        "32x32x32",
        "--tile-m",
        "8",
        "--tile-n",
        "16",
        "--tile-k",
        "4",
        "--sub-m",
        "8",
        "--sub-n",
        "4",
        "--sub-k",
        "4",
        "--format",
        "json",
    ]);
    assert_eq!(v.as_array().unwrap().len(), 1);
    let out = mxsim(&["explore", "--problem", "64x64x64", "--tile-m", "64", "--tile-n", "8", "--tile-k", "4"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no valid configuration"));
}

#[test]
fn bad_flags_exit_1() {
    for args in [
        &["predict", "--problem", "64x64", "--tile", "8,16,1"][..],
        &["predict", "--problem", "64x64x64", "--tile", "8,16,3"],
        &["predict", "--problem", "64x64x64", "--tile", "8,16,1", "--ew", "2"],
        &["predict", "--problem", "64x64x64", "--tile", "8,16,1", "--opts", "bogus=1"],
        &["predict", "--problem", "64x64x64"],
        &["simulate", "--kernel", "mx", "--problem", "16x16x16", "--tile", "8,16,1"],
        &["verify", "--config", "/nonexistent.cfg"],
        &["frobnicate"],
    ] {
        assert_eq!(mxsim(args).status.code(), Some(1), "{args:?}");
    }
    assert_eq!(mxsim(&["--help"]).status.code(), Some(0));
}
