use std::path::Path;
use std::process::{Command, Output};

fn rotctl(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rotctl"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("small.toml");
    std::fs::write(&p, "seed = 3\n\n[corpus]\nn_sessions = 3\nshots_per_session = 2\nval_fraction = 0.34\ntest_fraction = 0.34\n").unwrap();
    p
}

fn manifest_text(root: &Path) -> String {
    let corpus = std::fs::read_dir(root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_string_lossy().starts_with("corpus-"))
        .expect("corpus stage directory");
    std::fs::read_to_string(corpus.join("manifest.json")).unwrap()
}

#[test]
fn gen_data_twice_gives_the_same_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for root in [&a, &b] {
        let o = rotctl(&["gen-data", "--config", cfg.to_str().unwrap()], root);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(manifest_text(&a), manifest_text(&b));
    // a rerun reuses the finished stage
    let o = rotctl(&["gen-data", "--config", cfg.to_str().unwrap()], &a);
    assert!(o.status.success());
}

#[test]
fn benchmark_without_models_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = rotctl(&["benchmark"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unknown_config_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "[dynamics]\nmembrs = 3\n").unwrap();
    let o = rotctl(&["show-config", "--config", p.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dynamics.membrs"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_config_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = rotctl(&["show-config", "--config", "/nonexistent/rotctl.toml"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn show_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = rotctl(&["show-config"], dir.path());
    assert!(o.status.success());
    let p = dir.path().join("echo.toml");
    std::fs::write(&p, &o.stdout).unwrap();
    let again = rotctl(&["show-config", "--config", p.to_str().unwrap()], dir.path());
    assert!(again.status.success(), "{}", String::from_utf8_lossy(&again.stderr));
    assert_eq!(again.stdout, o.stdout);
}
