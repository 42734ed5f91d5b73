use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_arelax");

fn arelax(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn graph(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("graphs")
        .join(name)
}

fn data_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("AR_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"));
    dir.join("mnist/t10k-images-idx3-ubyte")
        .exists()
        .then_some(dir)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SYNTH: &[&str] = &[
    "--dataset",
    "synthetic",
    "--arch",
    "8-16-4",
    "--subset",
    "512",
    "--test-subset",
    "128",
];

fn with<'a>(head: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(SYNTH).chain(tail).copied().collect()
}

#[test]
fn help_and_usage_errors() {
    let o = arelax(&["--help"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("gradcheck"));
    assert_eq!(code(&arelax(&["train", "--help"])), 0);
    assert_eq!(code(&arelax(&[])), 1);
    assert_eq!(code(&arelax(&["train", "--no-such-flag"])), 1);
    assert_eq!(code(&arelax(&["train", "--epochs", "many"])), 1);
    let o = arelax(&["train", "--variant", "sideways"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("sideways"));
}

#[test]
fn synthetic_exact_epoch_learns_and_checkpoint_evaluates_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (m, c) = (dir.path().join("m.csv"), dir.path().join("p.arck"));
    let o = arelax(&with(
        &["train"],
        &[
            "--epochs",
            "1",
            "--batch-size",
            "16",
            "--eta-theta",
            "0.1",
            "--metrics-out",
            s(&m),
            "--checkpoint-out",
            s(&c),
        ],
    ));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&m).unwrap();
    let last: Vec<&str> = text.lines().last().unwrap().split(',').collect();
    let train_acc: f64 = last[3].parse().unwrap();
    let test_acc: f64 = last[4].parse().unwrap();
    assert!(train_acc > 0.9, "train accuracy {train_acc}");

    let o = arelax(&with(&["eval"], &["--checkpoint", s(&c)]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let reported: f64 = stdout(&o)
        .trim()
        .strip_prefix("accuracy ")
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(reported, test_acc);
}

#[test]
fn zero_epochs_write_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.csv");
    let o = arelax(&with(
        &["train"],
        &["--epochs", "0", "--metrics-out", s(&m)],
    ));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        std::fs::read_to_string(&m).unwrap(),
        "epoch,minibatch_index,train_loss,train_accuracy,test_accuracy,mean_grad_mse_to_oracle,wall_time_ms\n"
    );
}

fn strip_timing(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
        .collect()
}

#[test]
fn identical_configs_give_identical_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<String> = (0..2)
        .map(|k| {
            let m = dir.path().join(format!("m{k}.csv"));
            let o = arelax(&with(
                &["train"],
                &[
                    "--epochs",
                    "2",
                    "--variant",
                    "learned-feedback",
                    "--sample-gradients",
                    "--seed",
                    "7",
                    "--metrics-out",
                    s(&m),
                ],
            ));
            assert_eq!(code(&o), 0, "{}", stderr(&o));
            std::fs::read_to_string(&m).unwrap()
        })
        .collect();
    assert_eq!(strip_timing(&runs[0]), strip_timing(&runs[1]));
    assert!(runs[0]
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(5)
        .is_some_and(|v| !v.is_empty()));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let m = dir.path().join("m.csv");
    std::fs::write(&cfg, "epochs = 3\nbatch-size = 128\n").unwrap();
    let o = arelax(&with(
        &["train"],
        &["--config", s(&cfg), "--epochs", "1", "--metrics-out", s(&m)],
    ));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // 512 items in batches of 128, one epoch.
    assert_eq!(std::fs::read_to_string(&m).unwrap().lines().count(), 1 + 4);

    std::fs::write(&cfg, "epochs = 3\nwidth = 9\n").unwrap();
    let o = arelax(&with(&["train"], &["--config", s(&cfg)]));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn divergence_exits_3_after_flushing_rows() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.csv");
    let o = arelax(&with(
        &["train"],
        &[
            "--epochs",
            "2",
            "--batch-size",
            "16",
            "--eta-theta",
            "1e150",
            "--metrics-out",
            s(&m),
        ],
    ));
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("diverged"));
    let text = std::fs::read_to_string(&m).unwrap();
    assert!(text.lines().count() >= 2, "{text}");
}

#[test]
fn missing_dataset_is_an_io_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = arelax(&["train", "--dataset", "fashion", "--data-dir", s(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("fashion"), "{}", stderr(&o));
}

#[test]
fn arch_must_fit_the_dataset() {
    let dir = tempfile::tempdir().unwrap();
    if let Some(data) = data_dir() {
        let o = arelax(&[
            "train",
            "--data-dir",
            s(&data),
            "--arch",
            "8-3",
            "--subset",
            "10",
        ]);
        assert_eq!(code(&o), 1);
        assert!(stderr(&o).contains("does not fit"), "{}", stderr(&o));
    }
    let c = dir.path().join("p.arck");
    let o = arelax(&with(
        &["train"],
        &[
            "--epochs",
            "0",
            "--checkpoint-out",
            s(&c),
            "--metrics-out",
            s(&dir.path().join("m.csv")),
        ],
    ));
    assert_eq!(code(&o), 0);
    let o = arelax(&[
        "eval",
        "--dataset",
        "synthetic",
        "--arch",
        "8-12-4",
        "--checkpoint",
        s(&c),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("does not match"), "{}", stderr(&o));
}

#[test]
fn truncated_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("p.arck");
    let o = arelax(&with(
        &["train"],
        &[
            "--epochs",
            "0",
            "--checkpoint-out",
            s(&c),
            "--metrics-out",
            s(&dir.path().join("m.csv")),
        ],
    ));
    assert_eq!(code(&o), 0);
    let bytes = std::fs::read(&c).unwrap();
    std::fs::write(&c, &bytes[..bytes.len() - 5]).unwrap();
    let o = arelax(&with(&["eval"], &["--checkpoint", s(&c)]));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("truncated"), "{}", stderr(&o));
    assert_eq!(code(&arelax(&with(&["eval"], &[]))), 1);
}

#[test]
fn random_checkpoint_is_near_chance_on_mnist() {
    let Some(data) = data_dir() else {
        eprintln!("skipped: MNIST not found (run scripts/fetch_data.sh)");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("p.arck");
    let base = [
        "--data-dir",
        s(&data),
        "--subset",
        "64",
        "--test-subset",
        "2000",
    ];
    let mut args = vec!["train", "--epochs", "0", "--checkpoint-out", s(&c)];
    let m = dir.path().join("m.csv");
    args.extend(["--metrics-out", s(&m)]);
    args.extend(base);
    assert_eq!(code(&arelax(&args)), 0);
    let mut args = vec!["eval", "--checkpoint", s(&c)];
    args.extend(base);
    let o = arelax(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let acc: f64 = stdout(&o)
        .trim()
        .strip_prefix("accuracy ")
        .unwrap()
        .parse()
        .unwrap();
    assert!((acc - 0.1).abs() <= 0.05, "accuracy {acc}");
}

fn gradcheck_csv(path: &Path) -> Vec<(usize, usize, f64)> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("iteration,layer,mse_to_oracle,max_abs_diff")
    );
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (
                f[0].parse().unwrap(),
                f[1].parse().unwrap(),
                f[2].parse().unwrap(),
            )
        })
        .collect()
}

const DEEP: &[&str] = &[
    "--dataset",
    "synthetic",
    "--arch",
    "8-16-16-12-4",
    "--batch-size",
    "8",
];

#[test]
fn gradcheck_exact_converges() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.csv");
    let mut args = vec!["gradcheck", "--relax-iters", "400", "--metrics-out", s(&g)];
    args.extend(DEEP);
    let o = arelax(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = gradcheck_csv(&g);
    assert_eq!(rows.len(), 401 * 3);
    for &(t, _, mse) in rows.iter().filter(|r| r.0 == 400) {
        assert!(mse < 1e-8, "iteration {t}: {mse}");
    }
}

#[test]
fn gradcheck_no_derivative_records_a_gap() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.csv");
    let mut args = vec![
        "gradcheck",
        "--variant",
        "no-derivative",
        "--metrics-out",
        s(&g),
    ];
    args.extend(DEEP);
    let o = arelax(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = gradcheck_csv(&g);
    assert!(rows.iter().filter(|r| r.0 == 100).any(|r| r.2 > 0.0));
}

#[test]
fn gradcheck_eta_grid_writes_one_file_per_step_size() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("grad.csv");
    let mut args = vec![
        "gradcheck",
        "--relax-iters",
        "600",
        "--eta-grid",
        "0.05,0.1,0.3,0.5",
        "--metrics-out",
        s(&g),
    ];
    args.extend(DEEP);
    let o = arelax(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let hits: Vec<usize> = ["0.05", "0.1", "0.3", "0.5"]
        .iter()
        .map(|eta| {
            let rows = gradcheck_csv(&dir.path().join(format!("grad_eta{eta}.csv")));
            let last = rows.iter().map(|r| r.0).max().unwrap();
            (0..=last)
                .find(|&t| rows.iter().filter(|r| r.0 == t).all(|r| r.2 < 1e-6))
                .expect("threshold reached")
        })
        .collect();
    assert!(hits.windows(2).all(|w| w[1] < w[0]), "{hits:?}");
    assert!(!g.exists());
}

#[test]
fn gradcheck_rejects_the_oracle_variant() {
    let mut args = vec!["gradcheck", "--variant", "backprop-oracle"];
    args.extend(DEEP);
    assert_eq!(code(&arelax(&args)), 1);
}

#[test]
fn bundled_graphs_are_convex() {
    for name in ["chain.graph", "diamond.graph"] {
        let o = arelax(&["convexity", "--graph-file", s(&graph(name))]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let text = stdout(&o);
        assert!(
            text.contains("upper triangular under topological order: yes"),
            "{text}"
        );
        assert!(text.contains("unit diagonal: yes"), "{text}");
        assert!(text.contains("all affirmative: yes"), "{text}");
    }
}

#[test]
fn malformed_graph_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.graph");
    std::fs::write(&p, "node 0 3 input\nnode 1 2 output 2 3\nedge 0\n").unwrap();
    let o = arelax(&["convexity", "--graph-file", s(&p)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    assert_eq!(code(&arelax(&["convexity"])), 1);
}
