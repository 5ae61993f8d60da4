//! The `leafwise` binary end to end: files, exit codes, locking, determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_leafwise");

const BUSEMANN: &str = r#"
model.kind = "hyperbolic-leaf"
cocycle.kind = "busemann"
estimator.kind = "spectrum"
run.T = 8
run.dt = 0.0625
run.paths = 128
run.seed = 42
run.checkpoint = 2
run.id = "busemann"
"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn leafwise(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn run(config: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    leafwise(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_summary_convergence_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "b.toml", BUSEMANN);
    let o = run(&cfg, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with("run_id,model,cocycle,estimator,quantity,value,stderr,n_paths,T,dt,seed\n"));
    assert!(summary.contains("busemann,hyperbolic-leaf,busemann,spectrum,chi_1,"));
    let conv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert_eq!(conv.lines().count(), 1 + 4);
    let manifest: toml::Value = toml::from_str(&fs::read_to_string(out.join("manifest.toml")).unwrap()).unwrap();
    assert_eq!(manifest["run_id"].as_str(), Some("busemann"));
    assert_eq!(manifest["config"]["run"]["paths"].as_integer(), Some(128));
    assert!(manifest["warnings"].as_array().unwrap().is_empty());
    assert!(!out.join(".lock").exists());
}

#[test]
fn summary_is_byte_identical_across_workers_and_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let mut seen = Vec::new();
    for (i, w) in [1, 4, 8, 1].iter().enumerate() {
        let text = format!("{BUSEMANN}run.workers = {w}\nrun.output = \"out{i}\"\n");
        let cfg = write(dir.path(), &format!("c{i}.toml"), &text);
        let o = run(&cfg, &[]);
        assert!(o.status.success(), "{}", stderr(&o));
        let out = dir.path().join(format!("out{i}"));
        seen.push((fs::read(out.join("summary.csv")).unwrap(), fs::read(out.join("convergence.csv")).unwrap()));
    }
    assert!(seen.windows(2).all(|p| p[0] == p[1]));
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "b.toml", BUSEMANN);
    assert!(run(&cfg, &[]).status.success());
    let a = fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    assert!(run(&cfg, &["--seed", "7"]).status.success());
    let b = fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    assert_ne!(a, b);
    assert!(b.lines().skip(1).all(|l| l.ends_with(",7")));
}

#[test]
fn validation_errors_exit_two_and_cite_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (BUSEMANN.replace("run.dt = 0.0625", "run.dt = 0.001"), "run.dt"),
        (BUSEMANN.replace("run.T = 8", "run.T = 8.01"), "run.T / run.dt"),
        (BUSEMANN.replace("run.paths = 128", "run.paths = 0"), "run.paths"),
        (format!("{BUSEMANN}run.colour = 1\n"), "colour"),
        (BUSEMANN.replace("cocycle.kind = \"busemann\"", "cocycle.kind = \"one-form\"\ncocycle.terms = [{ potential = { kind = \"log-height\" }, generator = [[nan]] }]"), "cocycle.terms[0].generator"),
    ];
    for (i, (text, field)) in cases.iter().enumerate() {
        let cfg = write(dir.path(), &format!("bad{i}.toml"), text);
        let o = run(&cfg, &[]);
        assert_eq!(o.status.code(), Some(2), "{field}: {}", stderr(&o));
        assert!(stderr(&o).contains(field), "{field}: {}", stderr(&o));
    }
    assert!(!dir.path().join("out/summary.csv").exists());
}

#[test]
fn unsupported_combination_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let text = BUSEMANN.replace("model.kind = \"hyperbolic-leaf\"", "model.kind = \"kronecker-torus\"\nmodel.slope = 0.618");
    let o = run(&write(dir.path(), "t.toml", &text), &[]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn overflowing_generator_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
model.kind = "euclidean-leaf"
model.base = [0.0]
cocycle.kind = "path-ordered"
cocycle.terms = [{ potential = { kind = "coordinate", index = 0 }, generator = [[0.0, 1e300], [-1e300, 0.0]] }]
estimator.kind = "spectrum"
run.T = 1
run.dt = 0.0625
run.paths = 4
run.seed = 1
"#;
    let o = run(&write(dir.path(), "n.toml", text), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn locked_output_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "b.toml", BUSEMANN);
    fs::create_dir_all(dir.path().join("out")).unwrap();
    fs::write(dir.path().join("out/.lock"), "1\n").unwrap();
    let o = run(&cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("locked"));
    assert!(!dir.path().join("out/summary.csv").exists());
}

#[test]
fn injected_faults_reach_stderr_and_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "f.toml", &format!("{BUSEMANN}run.reject_sigmas = 0.5\n"));
    let o = run(&cfg, &[]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("warning: wiener::sample_path"));
    let manifest: toml::Value = toml::from_str(&fs::read_to_string(dir.path().join("out/manifest.toml")).unwrap()).unwrap();
    let warnings = manifest["warnings"].as_array().unwrap();
    assert!(warnings.iter().any(|w| w.as_str().unwrap().contains("wild steps redrawn")));
}

#[test]
fn catalog_lists_every_shipped_id() {
    let o = leafwise(&["catalog"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for id in ["kronecker-torus", "hyperbolic-leaf", "suspension-line", "busemann", "wedge", "ledrappier", "cylinder"] {
        assert!(text.contains(id), "{id}");
    }
}

#[test]
fn templates_run_as_written() {
    let dir = tempfile::tempdir().unwrap();
    let o = leafwise(&["template", "--model", "kronecker-torus", "--cocycle", "holonomy", "--estimator", "bounds"]);
    assert!(o.status.success());
    let cfg = write(dir.path(), "tpl.toml", &String::from_utf8(o.stdout).unwrap());
    let o = run(&cfg, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read_to_string(dir.path().join("out/summary.csv")).unwrap().contains(",bracketed,1,"));
    assert_eq!(leafwise(&["template", "--model", "klein-bottle", "--cocycle", "busemann", "--estimator", "spectrum"]).status.code(), Some(2));
}
