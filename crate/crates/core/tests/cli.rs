use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"algorithm = "eppo-cor"
env = "slippery-car"
schedule = "decreasing"
n_tasks = 2
steps_per_task = 500
eval_interval = 250
eval_episodes = 2
seed = 3

[train]
horizon = 256
minibatch = 64
epochs = 2
actor_hidden = [16]
critic_hidden = [16]
"#;

fn eppo(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eppo"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn text(out: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    )
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn missing_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = eppo(&["train", "--config", "nowhere/run.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out).contains("nowhere/run.toml"), "{}", text(&out));
}

#[test]
fn bad_keys_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("epochs = 2", "epoch = 2"));
    let out = eppo(&["train", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out).contains("epoch"), "{}", text(&out));

    let cfg = write_config(dir.path(), &TINY.replace("epochs = 2", "gamma = 2.0"));
    let out = eppo(&["train", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out).contains("gamma"), "{}", text(&out));

    let cfg = write_config(dir.path(), &TINY.replace("decreasing", "paralysis:wings"));
    let out = eppo(&["train", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out).contains("paralysis:wings"), "{}", text(&out));
}

#[test]
fn train_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = eppo(
        &["train", "--config", &cfg, "--seed", "7", "--out", "runs"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", text(&out));

    let run_dir = dir
        .path()
        .join("runs/eppo-cor_slippery-car_decreasing_k0.1_seed7");
    let metrics = std::fs::read_to_string(run_dir.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next(),
        Some("seed,global_step,task_index,eval_return_mean,eval_return_se")
    );
    assert!(lines.count() >= 4);
    let manifest = std::fs::read_to_string(run_dir.join("manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 7"), "{manifest}");
    assert!(manifest.contains("status = \"completed\""), "{manifest}");

    let out = eppo(&["report", "runs"], dir.path());
    assert!(out.status.success(), "{}", text(&out));
    let first = std::fs::read(dir.path().join("runs/summary.csv")).unwrap();
    let summary = String::from_utf8(first.clone()).unwrap();
    let rows: Vec<&str> = summary.lines().skip(1).collect();
    assert_eq!(rows.len(), 2, "{summary}");
    assert!(rows[0].starts_with("aulc,eppo-cor,"));
    assert!(rows[1].starts_with("final_return,eppo-cor,"));

    let out = eppo(&["report", "runs"], dir.path());
    assert!(out.status.success());
    assert_eq!(
        std::fs::read(dir.path().join("runs/summary.csv")).unwrap(),
        first
    );
}

#[test]
fn several_algorithms_and_seeds_in_one_call() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = eppo(
        &[
            "train",
            "--config",
            &cfg,
            "--algo",
            "ppo,eppo-ind",
            "--seed",
            "1,2",
            "--parallel",
            "2",
            "--out",
            "runs",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", text(&out));
    let runs = std::fs::read_dir(dir.path().join("runs")).unwrap().count();
    assert_eq!(runs, 4);
}

#[test]
fn report_on_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("empty")).unwrap();
    let out = eppo(&["report", "empty"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_filter_and_fault_injection() {
    let dir = tempfile::tempdir().unwrap();
    let out = eppo(&["verify", "--filter", "gae"], dir.path());
    assert!(out.status.success(), "{}", text(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let checks: Vec<&str> = stdout
        .lines()
        .filter(|l| l.starts_with("PASS") || l.starts_with("FAIL"))
        .collect();
    assert!(!checks.is_empty());
    assert!(checks.iter().all(|l| l.contains("gae/")), "{stdout}");

    let out = eppo(
        &[
            "verify",
            "--filter",
            "evidential/student",
            "--inject-fault",
            "nll-constant",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(
        text(&out).contains("FAIL evidential/student-t-oracle"),
        "{}",
        text(&out)
    );

    let out = eppo(&["verify"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", text(&out));
}

#[test]
fn sweep_writes_selection_table() {
    let dir = tempfile::tempdir().unwrap();
    let body =
        format!("{TINY}\n[sweep]\nseeds = [1001]\ncor_grid = [0.0, 0.5]\nind_grid = [0.1]\n");
    let cfg = write_config(dir.path(), &body);
    let out = eppo(&["sweep", "--config", &cfg, "--out", "sweep"], dir.path());
    assert!(out.status.success(), "{}", text(&out));
    let table = std::fs::read_to_string(dir.path().join("sweep/kappa_selection.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(
        lines.next(),
        Some("experiment,environment,strategy,eppo_cor,eppo_ind")
    );
    let row = lines.next().unwrap();
    assert!(
        row.starts_with("slippery,slippery-car,decreasing,"),
        "{row}"
    );
    assert!(row.ends_with(",0.1"), "{row}");
}

#[test]
fn resume_reruns_recorded_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    assert!(eppo(&["train", "--config", &cfg, "--out", "a"], dir.path())
        .status
        .success());
    let run = "eppo-cor_slippery-car_decreasing_k0.1_seed3";
    let manifest = format!("a/{run}/manifest.toml");
    let before = std::fs::read(dir.path().join(format!("a/{run}/metrics.csv"))).unwrap();
    let out = eppo(&["train", "--resume", &manifest], dir.path());
    assert!(out.status.success(), "{}", text(&out));
    assert_eq!(
        std::fs::read(dir.path().join(format!("a/{run}/metrics.csv"))).unwrap(),
        before
    );
}

#[test]
fn divergence_exits_with_two_and_keeps_partial_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let body = TINY.replace(
        "epochs = 2",
        "epochs = 2\nactor_lr = 1e300\ncritic_lr = 1e300",
    );
    let cfg = write_config(dir.path(), &body);
    let out = eppo(&["train", "--config", &cfg, "--out", "runs"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", text(&out));
    let run_dir = dir
        .path()
        .join("runs/eppo-cor_slippery-car_decreasing_k0.1_seed3");
    let manifest = std::fs::read_to_string(run_dir.join("manifest.toml")).unwrap();
    assert!(manifest.contains("status = \"failed\""), "{manifest}");
    let metrics = std::fs::read_to_string(run_dir.join("metrics.csv")).unwrap();
    assert!(metrics.lines().count() >= 2);

    // failed runs are excluded from the summary but counted
    let out = eppo(&["report", "runs"], dir.path());
    assert!(out.status.success(), "{}", text(&out));
    let summary = std::fs::read_to_string(dir.path().join("runs/summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().ends_with(",1"), "{summary}");
}
