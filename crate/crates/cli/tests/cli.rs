use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn maskattack(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maskattack"))
        .args(args)
        .env("MASKATTACK_OUT", out)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

const SHORT: [&str; 8] = [
    "--override",
    "schedule.pretrain_episodes=500",
    "--override",
    "schedule.outer_iterations=2",
    "--override",
    "schedule.post_mask_episodes=500",
    "--override",
    "schedule.eval_episodes=500",
];

#[test]
fn list_shows_every_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let out = maskattack(&["list"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 18);
    assert!(text.contains("budget-sweep") && text.contains("dea"));
}

#[test]
fn run_writes_table_records_config_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["run", "gridworld", "--seeds", "1,2"];
    args.extend(SHORT);
    let out = maskattack(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let root = dir.path().join("gridworld");
    let csv = fs::read_to_string(root.join("gridworld.csv")).unwrap();
    let conditions: Vec<&str> = csv.lines().filter(|l| l.contains(",mean,")).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(conditions, ["none", "random-0.3", "fixed-up", "adversarial"]);
    assert_eq!(fs::read_dir(root.join("runs")).unwrap().count(), 8);
    assert!(fs::read_to_string(root.join("config.toml")).unwrap().contains("seeds = [1, 2]"));

    let svg = root.join("gridworld.svg");
    let before = fs::read(&svg).unwrap();
    fs::remove_file(&svg).unwrap();
    let out = maskattack(&["plot", root.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(&svg).unwrap(), before);
}

#[test]
fn identical_configs_give_identical_tables() {
    let dir = tempfile::tempdir().unwrap();
    let mut tables = Vec::new();
    for sub in ["a", "b"] {
        let root = dir.path().join(sub);
        let mut args = vec!["run", "kuhn-tabular", "--seeds", "3", "--out", root.to_str().unwrap()];
        args.extend(SHORT);
        assert!(maskattack(&args, dir.path()).status.success());
        tables.push(fs::read(root.join("kuhn-tabular/kuhn-tabular.csv")).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = maskattack(&["run", "no-such-experiment"], dir.path());
    assert!(!unknown.status.success());
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("unknown experiment"));

    let empty = maskattack(&["run", "kuhn-tabular", "--override", "seeds=[]"], dir.path());
    assert!(!empty.status.success());
    assert!(String::from_utf8_lossy(&empty.stderr).contains("seed list is empty"));

    let missing = maskattack(&["plot", dir.path().join("nothing").to_str().unwrap()], dir.path());
    assert!(!missing.status.success());
}
