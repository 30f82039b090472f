use std::path::Path;
use std::process::Command;

fn vss(args: &[&str], dir: &Path) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_vss")).args(args).current_dir(dir).env("VSS_THREADS", "2").output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

#[test]
fn criticals_lists_pitchforks() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "c.cfg", "n=0\nN=1\n[branch]\np_min=1.7\n");
    let (code, out, _) = vss(&["criticals", "--config", &cfg, "--plot", "c.svg"], d.path());
    assert_eq!(code, 0);
    let ps: Vec<f64> = out.trim().trim_start_matches("p_l = ").split(", ").map(|v| v.parse().unwrap()).collect();
    for want in [5.0, 3.0, 7.0 / 3.0, 2.0, 1.8] {
        assert!(ps.iter().any(|p| (p - want).abs() < 1e-12), "{want} missing from {ps:?}");
    }
    assert!(d.path().join("c.svg").exists());
}

#[test]
fn fbp_profile_reports_interface() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "p.cfg", "n=1\np=3\nN=1\n[profile]\ny0_lo=3.5\ny0_hi=5.5\n");
    let (code, out, err) = vss(&["profile", "--config", &cfg, "--out", "o", "--plot", "p.svg"], d.path());
    assert_eq!(code, 0, "{err}");
    let y0: f64 = out.split_whitespace().next().unwrap().trim_start_matches("y0=").parse().unwrap();
    assert!((y0 - 4.455).abs() < 0.05 * 4.455, "y0 = {y0}");
    let csv = std::fs::read_to_string(d.path().join("o/profile.csv")).unwrap();
    assert!(csv.starts_with("y,f,f1,f2,f3\n"));
    let svg = std::fs::read_to_string(d.path().join("p.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 1);
}

#[test]
fn output_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "p.cfg", "n=1\np=3\n[profile]\ny0_lo=3.5\ny0_hi=5.5\n");
    assert_eq!(vss(&["profile", "--config", &cfg, "--out", "a"], d.path()).0, 0);
    assert_eq!(vss(&["profile", "--config", &cfg, "--out", "b"], d.path()).0, 0);
    let a = std::fs::read(d.path().join("a/profile.csv")).unwrap();
    let b = std::fs::read(d.path().join("b/profile.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn orbit_beyond_existence_exits_two() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "o.cfg", "n=2.5\n");
    let (code, _, err) = vss(&["orbit", "--config", &cfg], d.path());
    assert_eq!(code, 2, "{err}");
}

#[test]
fn orbit_csv_has_enough_samples() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "o.cfg", "n=1\n");
    let (code, _, err) = vss(&["orbit", "--config", &cfg, "--out", "o"], d.path());
    assert_eq!(code, 0, "{err}");
    let csv = std::fs::read_to_string(d.path().join("o/orbit.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("s,phi,phi1,phi2"));
    assert!(lines.count() >= 512);
}

#[test]
fn invalid_parameters_exit_three() {
    let d = tempfile::tempdir().unwrap();
    let bad = write(d.path(), "bad.cfg", "n=1\np=0.5\n");
    let (code, _, err) = vss(&["profile", "--config", &bad], d.path());
    assert_eq!(code, 3);
    assert!(err.contains("model.p"));
    let unknown = write(d.path(), "u.cfg", "n=1\np=3\n[orbit]\nwhatever=1\n");
    let (code, _, err) = vss(&["orbit", "--config", &unknown], d.path());
    assert_eq!(code, 3);
    assert!(err.contains("line 4"), "{err}");
    let degenerate = write(d.path(), "d.cfg", "n=1\np=2\n");
    assert_eq!(vss(&["profile", "--config", &degenerate], d.path()).0, 3);
}

#[test]
fn short_evolution_writes_log_and_snapshots() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "e.cfg", "n=1\np=3\n[evolve]\nx_half=20\nt_end=10\nt_sample0=0.1\n");
    let (code, out, err) = vss(&["evolve", "--config", &cfg, "--out", "o", "--plot", "e.svg"], d.path());
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("decay_slope="));
    let log = std::fs::read_to_string(d.path().join("o/run_log.csv")).unwrap();
    assert!(log.starts_with("t,norm_inf,mass,halfwidth\n"));
    let snap = std::fs::read_to_string(d.path().join("o/snapshot_00.csv")).unwrap();
    assert!(snap.starts_with("x,u\n"));
}
