use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alma-sim"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const SPEC: &str = r#"
name = "small"
algorithms = ["hungarian", "greedy", "alma", "alma_learning"]
sizes = [4, 6]
instances_per_config = 3
runs_per_instance = 3
training_steps = 32
eval_steps = 4

[benchmark]
kind = "assignment"
family = "map"
"#;

#[test]
fn run_is_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("spec.toml"), SPEC).unwrap();
    let mut outputs = Vec::new();
    for (threads, base) in [("1", "a"), ("4", "b"), ("3", "c")] {
        ok(&sim(
            &["run", "--config", "spec.toml", "--seed", "11", "--threads", threads, "--out", base],
            dir.path(),
        ));
        outputs.push(fs::read(dir.path().join(format!("{base}.csv"))).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);

    let csv = String::from_utf8(outputs[0].clone()).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "config_id,family,size,instance,run,algorithm,sw,rel_loss_pct,gini,jain,t_conv,rounds_mean,anomalies"
    );
    // 2 sizes x 3 instances x (1 hungarian + 3 x 3 randomized runs)
    assert_eq!(lines.count(), 2 * 3 * 10);

    ok(&sim(&["run", "--config", "spec.toml", "--seed", "12", "--out", "d"], dir.path()));
    assert_ne!(fs::read(dir.path().join("d.csv")).unwrap(), outputs[0]);
}

#[test]
fn report_reaggregates_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("spec.toml"), SPEC).unwrap();
    ok(&sim(&["run", "--config", "spec.toml", "--out", "r"], dir.path()));
    ok(&sim(&["report", "r.csv", "--out", "agg.json"], dir.path()));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    let again: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("agg.json")).unwrap()).unwrap();
    let original = report["aggregates"].as_array().unwrap();
    let recomputed = again.as_array().unwrap();
    assert_eq!(original.len(), recomputed.len());
    for (a, b) in original.iter().zip(recomputed) {
        assert_eq!(a["algorithm"], b["algorithm"]);
        for metric in ["sw", "gini", "jain"] {
            let x = a[metric]["mean"].as_f64().unwrap();
            let y = b[metric]["mean"].as_f64().unwrap();
            assert!((x - y).abs() < 1e-9, "{metric}: {x} vs {y}");
        }
    }
}

#[test]
fn strict_mode_fails_on_anomalies() {
    let dir = tempfile::tempdir().unwrap();
    // One round is too few for contested resources to settle.
    let spec = r#"
        algorithms = ["alma"]
        sizes = [8]
        instances_per_config = 2
        runs_per_instance = 2
        round_cap = 1
        [benchmark]
        kind = "assignment"
        family = "binary"
        p_one = 1.0
    "#;
    fs::write(dir.path().join("spec.toml"), spec).unwrap();
    ok(&sim(&["run", "--config", "spec.toml", "--out", "lenient"], dir.path()));
    let strict = sim(&["run", "--config", "spec.toml", "--out", "strict", "--strict"], dir.path());
    assert!(!strict.status.success());
    assert!(String::from_utf8_lossy(&strict.stderr).contains("anomalies"));
}

#[test]
fn gen_then_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let out = sim(&["gen", "--family", "noisy_common", "--n", "6", "--count", "2", "--seed", "4", "--out", "inst"], dir.path());
    ok(&out);
    let files: Vec<String> = String::from_utf8(out.stdout).unwrap().lines().map(str::to_owned).collect();
    assert_eq!(files.len(), 2);
    for f in files {
        ok(&sim(&["oracle", &f], dir.path()));
    }
}

#[test]
fn meetings_subcommand_schedules_a_generated_instance() {
    let dir = tempfile::tempdir().unwrap();
    let out = sim(
        &["gen", "--family", "meetings", "--n", "4", "--participants", "6", "--slots", "8", "--seed", "2", "--out", "m"],
        dir.path(),
    );
    ok(&out);
    let file = String::from_utf8(out.stdout).unwrap().trim().to_owned();
    let run = sim(&["meetings", &file, "--training-steps", "32", "--out", "schedules.json"], dir.path());
    ok(&run);
    let stdout = String::from_utf8(run.stdout).unwrap();
    for name in ["alma", "alma_learning", "msrac", "greedy"] {
        assert!(stdout.lines().any(|l| l.starts_with(&format!("{name}\t"))), "{stdout}");
    }
    assert!(dir.path().join("schedules.json").exists());
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = sim(&["run", "--config", "missing.toml"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.toml"));
}
