use std::process::Command;

const CONFIG: &str = "\
# tiny wind run
env=wind
total_steps=300
warmup_steps=120
update_ratio=0.1
eval.interval=60
eval.episodes=10
agent.rl=sac
agent.context_len=3
agent.rnn_hidden=4
agent.mlp_hidden=5
agent.embed_dim=3
agent.batch_size=4
";

fn rmf() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rmf"))
}

#[test]
fn train_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, CONFIG).unwrap();
    let run = dir.path().join("runs/one");
    let st = rmf()
        .args(["train", "--config"])
        .arg(&cfg)
        .args(["--seed", "5", "--out"])
        .arg(&run)
        .arg("--save-replay")
        .env("RUST_LOG", "warn")
        .status()
        .unwrap();
    assert!(st.success());
    for f in ["curve.csv", "diagnostics.csv", "config.json", "tasks.csv", "agent.bin", "replay.bin"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(json["seed"], 5);
    assert_eq!(json["variant"], "sac-lstm-3-oar-separate");

    let out = rmf()
        .args(["report", "--runs"])
        .arg(dir.path().join("runs"))
        .args(["--metric", "final"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("variant,env,seeds,final_performance"));
    assert!(lines.next().unwrap().starts_with("sac-lstm-3-oar-separate,wind,1,"));
}

#[test]
fn bad_inputs_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "env=mars\n").unwrap();
    let out = rmf()
        .args(["train", "--config"])
        .arg(&cfg)
        .args(["--seed", "0", "--out"])
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("mars"));

    let out = rmf().args(["report", "--runs"]).arg(dir.path()).args(["--metric", "median"]).output().unwrap();
    assert!(!out.status.success());
}
