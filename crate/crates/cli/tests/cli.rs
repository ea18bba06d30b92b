use std::path::Path;
use std::process::{Command, Output};

fn bep(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bep"))
        .args(args)
        .current_dir(cwd)
        .env("BEP_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &str = r#"
layers = [48, 32]
seed = 5
validation_fraction = 0.25
[hyper]
epochs = 4
gamma0 = [4]
[data]
source = "prototypes"
n_train = 200
n_test = 80
input_dim = 30
classes = 4
flip_p = 0.2
"#;

#[test]
fn train_then_eval_reproduces_best_validation() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    let o = bep(&["train", "-c", "run.toml", "-o", "out"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    for f in ["metrics.jsonl", "best.ckpt", "final.ckpt", "config.toml"] {
        assert!(dir.path().join("out").join(f).exists(), "missing {f}");
    }
    let metrics = std::fs::read_to_string(dir.path().join("out/metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 5);

    let best = text
        .lines()
        .find(|l| l.starts_with("best validation"))
        .unwrap();
    let score = best.split_whitespace().nth(2).unwrap();
    let e = bep(
        &[
            "eval",
            "out/best.ckpt",
            "-c",
            "run.toml",
            "--split",
            "validation",
        ],
        dir.path(),
    );
    assert!(e.status.success());
    assert!(
        stdout(&e).contains(&format!("({score})")),
        "{} vs {best}",
        stdout(&e)
    );

    // the resolved config reproduces the run
    let again = bep(
        &["train", "-c", "out/config.toml", "-o", "again"],
        dir.path(),
    );
    assert!(again.status.success());
    assert_eq!(
        std::fs::read(dir.path().join("out/final.ckpt")).unwrap(),
        std::fs::read(dir.path().join("again/final.ckpt")).unwrap()
    );
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    let o = bep(
        &[
            "train",
            "-c",
            "run.toml",
            "--epochs",
            "1",
            "--nu",
            "0.1",
            "--set",
            "hyper.r=0.75",
            "-o",
            "o",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let resolved = std::fs::read_to_string(dir.path().join("o/config.toml")).unwrap();
    assert!(resolved.contains("epochs = 1"));
    assert!(resolved.contains("nu = 0.1"));
    assert!(resolved.contains("r = 0.75"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    let bad_key = bep(
        &["train", "-c", "run.toml", "--set", "hyper.gamma=2"],
        dir.path(),
    );
    assert_eq!(bad_key.status.code(), Some(2));
    let bad_value = bep(&["train", "-c", "run.toml", "--nu", "3"], dir.path());
    assert_eq!(bad_value.status.code(), Some(2));
    let missing = bep(
        &[
            "train",
            "--set",
            "data.source=\"features\"",
            "--set",
            "data.train=\"nope.bin\"",
            "--set",
            "data.test=\"nope.bin\"",
        ],
        dir.path(),
    );
    assert_eq!(missing.status.code(), Some(3));
    std::fs::write(dir.path().join("junk.ckpt"), b"not a checkpoint").unwrap();
    let corrupt = bep(&["eval", "junk.ckpt", "-c", "run.toml"], dir.path());
    assert_eq!(corrupt.status.code(), Some(3));
}

#[test]
fn gen_data_feeds_delimited_training() {
    let dir = tempfile::tempdir().unwrap();
    let g = bep(
        &[
            "gen-data",
            "--n-train",
            "150",
            "--n-test",
            "40",
            "--input-dim",
            "20",
            "--classes",
            "3",
            "--flip-p",
            "0.1",
            "-o",
            "data",
        ],
        dir.path(),
    );
    assert!(g.status.success());
    let first = std::fs::read_to_string(dir.path().join("data/train.csv")).unwrap();
    assert_eq!(first.lines().next().unwrap().split(',').count(), 21);
    let cfg = r#"
layers = [32]
[hyper]
epochs = 5
gamma0 = [4]
[encoder.codec]
kind = "binary"
[data]
source = "delimited"
train = "data/train.csv"
test = "data/test.csv"
[data.options]
separator = ","
"#;
    std::fs::write(dir.path().join("d.toml"), cfg).unwrap();
    let t = bep(&["train", "-c", "d.toml"], dir.path());
    assert!(t.status.success(), "{}", String::from_utf8_lossy(&t.stderr));
    let acc: f64 = stdout(&t)
        .lines()
        .find(|l| l.starts_with("final test accuracy"))
        .and_then(|l| l.split_whitespace().last())
        .unwrap()
        .parse()
        .unwrap();
    assert!(acc > 0.8, "accuracy {acc}");
}

#[test]
fn sweep_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    let o = bep(
        &[
            "sweep",
            "-c",
            "run.toml",
            "--epochs",
            "2",
            "--axis",
            "nu=0,0.05",
            "--axis",
            "gamma0=2,4",
            "--seeds",
            "2",
            "--csv",
            "s.csv",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "nu,gamma0,seeds,test_mean,test_std,validation_mean,validation_std"
    );
    assert_eq!(lines.len(), 5);
    assert!(lines[1..].iter().all(|l| l.split(',').nth(2) == Some("2")));
}

#[test]
fn make_frame_writes_a_loadable_frame() {
    let dir = tempfile::tempdir().unwrap();
    let o = bep(
        &[
            "make-frame",
            "--classes",
            "4",
            "--dim",
            "32",
            "--seed",
            "3",
            "-o",
            "p.frame",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let cfg = format!("{SMALL}\n[frame]\nmethod = \"load\"\npath = \"p.frame\"\n");
    std::fs::write(dir.path().join("run.toml"), cfg).unwrap();
    let t = bep(&["train", "-c", "run.toml", "--epochs", "1"], dir.path());
    assert!(t.status.success(), "{}", String::from_utf8_lossy(&t.stderr));
    let wrong = bep(
        &[
            "make-frame",
            "--classes",
            "4",
            "--dim",
            "16",
            "-o",
            "p.frame",
        ],
        dir.path(),
    );
    assert!(wrong.status.success());
    let t = bep(&["train", "-c", "run.toml", "--epochs", "1"], dir.path());
    assert_eq!(t.status.code(), Some(2));
}
