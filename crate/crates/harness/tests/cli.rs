mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{mnist_available, mnist_dir};

fn modeller(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modeller")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

const SMALL: &str = "
trials = 1
[planning]
random_steps = 1500
planned_steps = 400
[continual]
window = 200
readaptation_window = 150
[encapsulation]
training_steps = 1500
";

fn with_config(dir: &Path) -> String {
    let p = dir.join("small.toml");
    std::fs::write(&p, SMALL).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn plan_base_writes_metrics_and_config() {
    let d = tempfile::tempdir().unwrap();
    let cfg = with_config(d.path());
    let out = ok(&modeller(&["plan-base", "--config", &cfg, "--seed", "4", "--out", "run"], d.path()));
    assert!(out.contains("planned.mean"), "{out}");
    for f in ["metrics.json", "episodes.csv", "model_size.csv", "summary.csv", "config.toml"] {
        assert!(d.path().join("run").join(f).exists(), "{f}");
    }
    let written = std::fs::read_to_string(d.path().join("run/config.toml")).unwrap();
    assert!(written.contains("seed = 4"));
}

#[test]
fn random_variant_flag_reports_blocking() {
    let d = tempfile::tempdir().unwrap();
    let cfg = with_config(d.path());
    let out = ok(&modeller(&["plan-base", "--random-variant", "--config", &cfg, "--out", "run"], d.path()));
    assert!(out.contains("onto_blocked.total"), "{out}");
}

#[test]
fn continual_both_schedules() {
    let d = tempfile::tempdir().unwrap();
    let cfg = with_config(d.path());
    let out = ok(&modeller(&["continual", "--config", &cfg, "--out", "v"], d.path()));
    assert!(out.contains("RS-NL.mean") && out.contains("random-SGS.mean"), "{out}");
    let out = ok(&modeller(&["continual", "--readaptation", "--config", &cfg, "--out", "r"], d.path()));
    assert!(out.contains(".ratio"), "{out}");
}

#[test]
fn encapsulate_then_reuse_the_model() {
    let d = tempfile::tempdir().unwrap();
    let cfg = with_config(d.path());
    let out = ok(&modeller(&["encapsulate", "--config", &cfg, "--out", "e"], d.path()));
    assert!(out.starts_with("alternatives\t"), "{out}");
    for f in ["an.json", "an.dot", "ean.json", "ean.dot", "model.json"] {
        assert!(d.path().join("e").join(f).exists(), "{f}");
    }
    let again = ok(&modeller(&["encapsulate", "--config", &cfg, "--model", "e/model.json", "--out", "e2"], d.path()));
    assert_eq!(out, again);
    assert_eq!(
        std::fs::read(d.path().join("e/ean.json")).unwrap(),
        std::fs::read(d.path().join("e2/ean.json")).unwrap()
    );

    ok(&modeller(&["export-model", "--model", "e/model.json", "--out", "x"], d.path()));
    assert_eq!(
        std::fs::read(d.path().join("e/model.json")).unwrap(),
        std::fs::read(d.path().join("x/model.json")).unwrap()
    );
    assert!(d.path().join("x/model.dot").exists());
}

#[test]
fn mnist_saves_models_that_re_export_identically() {
    if !mnist_available() {
        eprintln!("skipped: no MNIST files under {}", mnist_dir().display());
        return;
    }
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("m.toml");
    std::fs::write(
        &p,
        format!(
            "trials = 1\n[mnist]\ndata_dir = {:?}\nn_sample = 2\ntest_size = 3\ncycles = 1\n",
            mnist_dir().to_string_lossy()
        ),
    )
    .unwrap();
    let out = ok(&modeller(&["mnist", "--config", p.to_str().unwrap(), "--save-models", "--out", "m"], d.path()));
    assert!(out.contains("final_accuracy.mean"), "{out}");
    ok(&modeller(&["export-model", "--model", "m/mnr-model-0.json", "--out", "x"], d.path()));
    assert_eq!(
        std::fs::read(d.path().join("m/mnr-model-0.json")).unwrap(),
        std::fs::read(d.path().join("x/mnr-model.json")).unwrap()
    );
}

#[test]
fn bad_input_fails_with_a_message() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("bad.toml"), "trials = 0\n").unwrap();
    let o = modeller(&["plan-base", "--config", "bad.toml"], d.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: "));

    std::fs::write(d.path().join("junk.json"), "{\"kind\":\"nothing\",\"version\":1,\"body\":{}}").unwrap();
    let o = modeller(&["export-model", "--model", "junk.json"], d.path());
    assert!(!o.status.success());

    let o = modeller(&["encapsulate", "--model", "missing.json"], d.path());
    assert!(!o.status.success());
}
