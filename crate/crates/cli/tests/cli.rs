use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qgk(args: &[&str], env_root: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qgk"));
    cmd.args(args).env_remove("QGK_OUTPUT_ROOT");
    if let Some(root) = env_root {
        cmd.env("QGK_OUTPUT_ROOT", root);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn experiment_writes_artifacts_and_eval_reproduces_them() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = qgk(&["experiment", "--out", path(&out), "--n", "60", "--epochs=3", "--seeds", "0..2"], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["resolved-config", "result.json", "seeds.csv", "seed-0/kernel-train.csv", "seed-1/trace.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let resolved = fs::read_to_string(out.join("resolved-config")).unwrap();
    assert!(resolved.contains("n=60\n") && resolved.contains("epochs=3\n"));

    let seeds = fs::read_to_string(out.join("seeds.csv")).unwrap();
    let e = qgk(&["eval", path(&out)], None);
    assert!(e.status.success());
    for (line, row) in seeds.lines().skip(1).zip(stdout(&e).lines().skip(1)) {
        let acc = line.split(',').nth(1).unwrap();
        assert_eq!(row.split(',').nth(1).unwrap(), acc);
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# circles run\ndataset=circles\nn=40\nseeds=0\nepochs=50\n").unwrap();
    let out = dir.path().join("o");
    let o = qgk(&["experiment", "--config", path(&cfg), "--out", path(&out), "--epochs", "2"], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let resolved = fs::read_to_string(out.join("resolved-config")).unwrap();
    assert!(resolved.contains("dataset=circles\n"));
    assert!(resolved.contains("epochs=2\n"));
}

#[test]
fn failures_exit_with_stage_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = qgk(&["experiment", "--out", path(&out), "--bogus", "1"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[config]"));

    let o = qgk(&["experiment", "--out", path(&out), "--eta", "0"], None);
    assert_eq!(o.status.code(), Some(2));

    let missing = dir.path().join("missing.csv");
    let o = qgk(
        &["experiment", "--out", path(&out), "--dataset", "csv", "--csv-path", path(&missing), "--seeds", "4"],
        None,
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[dataset] seed 4"));

    let o = qgk(&["eval", path(dir.path())], None);
    assert_eq!(o.status.code(), Some(7));
}

#[test]
fn output_root_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = qgk(&["breakeven", "--etas", "2..=3"], Some(dir.path()));
    assert!(o.status.success());
    let eff = fs::read_to_string(dir.path().join("breakeven/efficiency.csv")).unwrap();
    assert_eq!(eff.lines().count(), 1 + 2 * 2);
    assert!(dir.path().join("breakeven/benchmarks.csv").exists());
    assert!(stdout(&o).contains("moons,2,2,200,15,1.500e5,6.560e4"));
}

#[test]
fn component_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let common = ["--n", "40", "--epochs", "2", "--seeds", "3"];

    let mut args = vec!["dataset", "--out", path(d), "--dataset", "circles", "--n", "40"];
    assert!(qgk(&args, None).status.success());
    let ds = fs::read_to_string(d.join("dataset.csv")).unwrap();
    assert_eq!(ds.lines().count(), 41);
    assert!(d.join("train.csv").exists() && d.join("test.csv").exists());

    let k = d.join("k");
    args = vec!["kernel", "--out", path(&k)];
    args.extend(common);
    assert!(qgk(&args, None).status.success());
    let t = d.join("t");
    args = vec!["train", "--out", path(&t)];
    args.extend(common);
    assert!(qgk(&args, None).status.success());
    assert_eq!(
        fs::read_to_string(k.join("seed-3/params.txt")).unwrap(),
        fs::read_to_string(t.join("seed-3/params.txt")).unwrap()
    );
    let e = qgk(&["eval", path(&k.join("seed-3")), "--svm-c", "2"], None);
    assert!(e.status.success());
    assert!(stdout(&e).starts_with("run,accuracy\nseed-3,"));

    let m = d.join("m");
    let o = qgk(
        &["metrics", "--out", path(&m), "--etas", "1,2", "--widths", "eta", "--entanglement-samples", "10", "--expressibility-samples", "8"],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(m.join("metrics.csv")).unwrap().lines().count(), 3);
}
