use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
model = "seir"
seed = 3
[params]
tf = 8
[bo]
window_dim = 3
n_init = 4
n_iters = 4
[bo.adam]
max_iters = 20
[rnn]
num_layers = 2
hidden_size = 4
epochs = 2
[settings]
mode = "reference"
model = "seir"
betas = [0.25]
[benchmark]
functions = ["rastrigin", "rosenbrock"]
runs = 2
timing = false
"#;

fn epibo(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epibo"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    dir
}

fn ok(o: &Output) {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_config_exits_with_usage_status() {
    let dir = tempfile::tempdir().unwrap();
    let o = epibo(dir.path(), &["--config", "nope.toml", "simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.toml"));
}

#[test]
fn bad_config_and_flags_exit_2() {
    let dir = setup();
    std::fs::write(dir.path().join("bad.toml"), "[rnn]\nnum_layers = 12\n").unwrap();
    assert_eq!(epibo(dir.path(), &["--config", "bad.toml", "simulate"]).status.code(), Some(2));
    assert_eq!(epibo(dir.path(), &["simulate", "--controls", "half"]).status.code(), Some(2));
    let o = epibo(dir.path(), &["--config", "run.toml", "train", "--dataset", "absent.csv"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_writes_trajectory() {
    let dir = setup();
    ok(&epibo(dir.path(), &["--config", "run.toml", "--out", "o", "simulate", "--controls", "constant:0.5,0.5"]));
    let csv = std::fs::read_to_string(dir.path().join("o/trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 8);
}

#[test]
fn optimize_writes_history_and_controls() {
    let dir = setup();
    ok(&epibo(dir.path(), &["--config", "run.toml", "optimize"]));
    let controls = std::fs::read_to_string(dir.path().join("out/controls.csv")).unwrap();
    assert_eq!(controls.lines().count(), 1 + 3);
    assert!(dir.path().join("out/history.csv").exists());
}

#[test]
fn pipeline_is_reproducible_and_resumable() {
    let dir = setup();
    let run = |out: &str| {
        ok(&epibo(dir.path(), &["--config", "run.toml", "--out", out, "collect"]));
        let ds = format!("{out}/dataset.csv");
        ok(&epibo(dir.path(), &["--config", "run.toml", "--out", out, "train", "--dataset", &ds]));
        let ck = format!("{out}/model.ckpt");
        ok(&epibo(
            dir.path(),
            &["--config", "run.toml", "--out", out, "predict", "--checkpoint", &ck, "--compare", &ds],
        ));
    };
    run("a");
    run("b");
    for f in ["dataset.csv", "model.ckpt", "train_report.csv", "rollout.csv", "comparison.csv", "comparison_summary.csv"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between identical runs");
    }
    let summary = std::fs::read_to_string(dir.path().join("a/comparison_summary.csv")).unwrap();
    for label in ["null", "bo_real", "control1", "control5", "predicted"] {
        assert!(summary.lines().any(|l| l.starts_with(&format!("{label},"))), "{label}");
    }

    let before = std::fs::read(dir.path().join("a/dataset.csv")).unwrap();
    let o = epibo(dir.path(), &["--config", "run.toml", "--out", "a", "collect", "--resume"]);
    ok(&o);
    assert!(String::from_utf8_lossy(&o.stderr).contains("skipping `control1`"));
    assert_eq!(std::fs::read(dir.path().join("a/dataset.csv")).unwrap(), before);
}

#[test]
fn train_grid_writes_one_checkpoint_per_combination() {
    let dir = setup();
    ok(&epibo(dir.path(), &["--config", "run.toml", "collect"]));
    ok(&epibo(
        dir.path(),
        &["--config", "run.toml", "train", "--dataset", "out/dataset.csv", "--layers", "2,3", "--epochs", "1,2"],
    ));
    for (l, e) in [(2, 1), (2, 2), (3, 1), (3, 2)] {
        assert!(dir.path().join(format!("out/model_l{l}_e{e}.ckpt")).exists());
    }
    let report = std::fs::read_to_string(dir.path().join("out/train_report.csv")).unwrap();
    assert_eq!(report.lines().next().unwrap(), "layers,epochs,final_loss,loss_0,loss_1");
    assert_eq!(report.lines().count(), 5);
}

#[test]
fn benchmark_is_byte_identical_without_timing() {
    let dir = setup();
    ok(&epibo(dir.path(), &["--config", "run.toml", "--out", "a", "benchmark"]));
    ok(&epibo(dir.path(), &["--config", "run.toml", "--out", "b", "benchmark"]));
    for f in ["benchmark.csv", "trajectory_rastrigin.csv", "trajectory_rosenbrock.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(f)).unwrap(),
            std::fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = setup();
    let run = |out: &str, workers: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_epibo"))
            .current_dir(dir.path())
            .env("EPIBO_WORKERS", workers)
            .args(["--config", "run.toml", "--out", out, "collect"])
            .output()
            .unwrap();
        ok(&o);
        std::fs::read(dir.path().join(out).join("dataset.csv")).unwrap()
    };
    assert_eq!(run("one", "1"), run("four", "4"));
    let o = Command::new(env!("CARGO_BIN_EXE_epibo"))
        .current_dir(dir.path())
        .env("EPIBO_WORKERS", "zero")
        .args(["--config", "run.toml", "collect"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
