use std::path::Path;
use std::process::Command;

use fsdde_cli::commands::{self, EXAMPLE1, EpsilonChoice};
use fsdde_cli::config::LoadedConfig;
use fsdde_cli::output::{RunManifest, read_moments_csv};

const BIN: &str = env!("CARGO_BIN_EXE_fsdde");

fn run(args: &[&str], dir: &Path) -> (i32, String, String) {
    let out = Command::new(BIN).args(args).current_dir(dir).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into(),
        String::from_utf8_lossy(&out.stderr).into(),
    )
}

fn small(text: &str) -> String {
    text.replace("n_paths = 2000", "n_paths = 40")
}

#[test]
fn mlf_examples() {
    let dir = tempfile::tempdir().unwrap();
    for (a, b, z, want) in [("1", "1", "1", 1f64.exp()), ("2", "1", "-1", 1f64.cos()), ("0.5", "1", "0", 1.0)] {
        let (code, out, _) = run(&["mlf", a, b, z], dir.path());
        assert_eq!(code, 0);
        let v: f64 = out.lines().next().unwrap().split_whitespace().nth(1).unwrap().parse().unwrap();
        assert!((v - want).abs() < 1e-13, "{a} {b} {z}: {v}");
    }
}

#[test]
fn malformed_config_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = EXAMPLE1.replace("seed = 20240101", "seed = \"x\"");
    std::fs::write(dir.path().join("bad.toml"), bad).unwrap();
    let (code, _, err) = run(&["simulate", "bad.toml"], dir.path());
    assert_eq!(code, 2);
    let line = EXAMPLE1.lines().position(|l| l.starts_with("seed")).unwrap() + 1;
    assert!(err.contains(&format!("line {line}")), "{err}");
}

#[test]
fn boundary_lambda_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("b.toml"), EXAMPLE1.replace("lambda = 0.51", "lambda = 0.5")).unwrap();
    let (code, _, err) = run(&["certify", "b.toml"], dir.path());
    assert_eq!(code, 3, "{err}");
}

#[test]
fn moments_csv_round_trips_and_has_zero_history() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = LoadedConfig::parse(&small(EXAMPLE1)).unwrap();
    commands::simulate(&cfg, dir.path()).unwrap();
    let bytes = std::fs::read(dir.path().join("moments.csv")).unwrap();
    assert!(bytes.starts_with(b"t,mean_p_moment,stderr,n_paths\n"));
    let rows = read_moments_csv(&bytes).unwrap();
    assert_eq!(rows.len(), 301);
    assert!(rows.iter().filter(|r| r.t < 0.0).all(|r| r.mean_p_moment == 0.0));
    assert!(rows.iter().all(|r| r.mean_p_moment.is_finite() && r.n_paths == 40));
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).unwrap();
    }
    assert_eq!(w.into_inner().unwrap(), bytes);
    let manifest: RunManifest =
        serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.outputs.len(), 1);
    assert_eq!(manifest.seed, 20240101);
}

#[test]
fn zero_noise_zero_drift_moments_match_deterministic_norms() {
    let text = small(EXAMPLE1)
        .replace("drift = \"cos_delay1\"", "drift = \"zero\"")
        .replace("noise = \"sin_delay2\"", "noise = \"zero\"")
        .replace("history = \"zero\"", "history = \"constant\"\nhistory_value = [1.0, -0.5]");
    let cfg = LoadedConfig::parse(&text).unwrap();
    let ex = cfg.experiment().unwrap();
    let det = fsdde_core::detsolve::picard_solve(&ex.system, &ex.phi, &ex.drift, &ex.grid, Default::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    commands::simulate(&cfg, dir.path()).unwrap();
    let rows = read_moments_csv(&std::fs::read(dir.path().join("moments.csv")).unwrap()).unwrap();
    let hs = ex.grid.history_steps() as isize;
    for (k, r) in rows.iter().enumerate() {
        let v = det.trajectory.vector(k as isize - hs).norm_squared();
        assert!((r.mean_p_moment - v).abs() <= 1e-9 * v.max(1.0), "t = {}", r.t);
        assert!(r.stderr <= 1e-12 * v.max(1.0));
    }
}

#[test]
fn paths_outputs_have_declared_layout() {
    let text = small(EXAMPLE1)
        .replace("paths_csv = false", "paths_csv = true")
        .replace("paths_bin = false", "paths_bin = true");
    let cfg = LoadedConfig::parse(&text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    commands::simulate(&cfg, dir.path()).unwrap();
    let bin = std::fs::read(dir.path().join("paths.bin")).unwrap();
    assert_eq!(&bin[..4], b"FSDP");
    let word = |k: usize| u32::from_le_bytes(bin[4 + 4 * k..8 + 4 * k].try_into().unwrap()) as usize;
    assert_eq!((word(0), word(1), word(2)), (2, 2, 301));
    assert_eq!(bin.len(), 16 + 40 * 301 * 2 * 8);
    let mut r = csv::Reader::from_path(dir.path().join("paths.csv")).unwrap();
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), ["path_id", "t", "y1", "y2"]);
    let recs: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(recs.len(), 40 * 301);
    let y: f64 = recs[400][2].parse().unwrap();
    let off = 16 + 400 * 2 * 8;
    assert_eq!(y, f64::from_le_bytes(bin[off..off + 8].try_into().unwrap()));
}

#[test]
fn certificate_cases() {
    let cfg = LoadedConfig::parse(EXAMPLE1).unwrap();
    let tiny = commands::certificate_report(&cfg, Some(EpsilonChoice::Value(1e-12))).unwrap();
    assert!(!tiny.certificate.verdict);
    assert!(tiny.certificate.lambda_threshold <= 0.0);

    let lipfree = EXAMPLE1
        .replace("drift = \"cos_delay1\"", "drift = \"zero\"")
        .replace("noise = \"sin_delay2\"", "noise = \"zero\"");
    let cfg0 = LoadedConfig::parse(&lipfree).unwrap();
    let r = commands::certificate_report(&cfg0, Some(EpsilonChoice::Value(1.0))).unwrap();
    let c = &r.certificate;
    assert_eq!(c.offset, 0.0);
    assert_eq!(c.growth_exponent, 0.0);
    assert!((c.lambda_threshold * c.m_tilde - 1.0).abs() <= 1e-13);
    assert!(c.verdict);

    let cfg2 = LoadedConfig::parse(commands::EXAMPLE2).unwrap();
    let r2 = commands::certificate_report(&cfg2, None).unwrap();
    assert!(r2.certificate.verdict);
    assert!(r2.text().contains("verdict PASS"));
    assert_eq!(r2.verdict_line(), "FTS: PASS on [-1,10]");
}

#[test]
fn sweep_gamma_halves_k() {
    let cfg = LoadedConfig::parse(EXAMPLE1).unwrap();
    let csv = commands::sweep_gamma(&cfg, &[1.0, 2.0, 4.0]).unwrap();
    let mut r = csv::Reader::from_reader(csv.as_slice());
    let k: Vec<f64> = r.records().map(|x| x.unwrap()[1].parse().unwrap()).collect();
    assert!((k[0] / k[1] - 2.0).abs() < 1e-12 && (k[1] / k[2] - 2.0).abs() < 1e-12);
    assert!(commands::sweep_gamma(&cfg, &[0.0]).is_err());
}

#[test]
fn verify_sweep_and_fault_hook() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = run(&["verify", "--include-boundary"], dir.path());
    assert_eq!(code, 0);
    assert_eq!(out.matches("SKIPPED(boundary)").count(), 27);
    assert_eq!(out.matches(" PASS").count(), 81);
    let (code, _, _) = run(&["verify", "--inject-fault"], dir.path());
    assert_ne!(code, 0);
}
