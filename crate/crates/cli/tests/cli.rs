use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_icl-data"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn setup(dir: &Path, tasks: &str) -> PathBuf {
    let corpus = dir.join("corpus.jsonl");
    let out = run(bin()
        .args([
            "synth",
            "--docs",
            "120",
            "--domains",
            "web,books",
            "--output",
        ])
        .arg(&corpus));
    assert!(out.status.success());
    let cfg = dir.join("run.json");
    std::fs::write(
        &cfg,
        format!(r#"{{"global_seed": 3, "corpora": [{{"path": "corpus.jsonl"}}], "tasks": {tasks}, "output_dir": "out"}}"#),
    )
    .unwrap();
    cfg
}

#[test]
fn generate_then_validate_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), r#"{"NSG": 20, "LPP_CLS": 20, "SOP": 20}"#);
    let out = run(bin().arg("generate").arg("--config").arg(&cfg));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let files: Vec<PathBuf> = ["nsg", "lpp_cls", "sop"]
        .iter()
        .map(|t| dir.path().join(format!("out/{t}.jsonl")))
        .collect();
    let out = run(bin().arg("validate").args(&files));
    assert_eq!(out.status.code(), Some(0));

    let out = run(bin().arg("stats").args(&files));
    assert!(out.status.success());
    let stats: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/report.json")).unwrap())
            .unwrap();
    for task in ["NSG", "LPP_CLS", "SOP"] {
        assert_eq!(
            stats["per_task"][task]["instances"],
            report["tasks"][task]["instances"]
        );
        assert_eq!(
            stats["per_task"][task]["examples"],
            report["tasks"][task]["examples"]
        );
    }
}

#[test]
fn seed_flag_beats_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), r#"{"NSG": 50}"#);
    let digest = |extra: &[&str], env: Option<&str>| {
        let mut cmd = bin();
        cmd.arg("generate").arg("--config").arg(&cfg).args(extra);
        cmd.env_remove("ICL_DATA_SEED");
        if let Some(v) = env {
            cmd.env("ICL_DATA_SEED", v);
        }
        assert!(run(&mut cmd).status.success());
        let report: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join("out/report.json")).unwrap())
                .unwrap();
        (
            report["global_seed"].as_u64().unwrap(),
            report["digests"]["nsg.jsonl"].clone(),
        )
    };
    let (s0, d0) = digest(&[], None);
    assert_eq!(s0, 3);
    let (s1, d1) = digest(&[], Some("9"));
    assert_eq!(s1, 9);
    assert_ne!(d0, d1);
    let (s2, d2) = digest(&["--seed", "3"], Some("9"));
    assert_eq!(s2, 3);
    assert_eq!(d0, d2);
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(
        &cfg,
        r#"{"global_seed": 1, "corpora": [{"path": "missing.jsonl"}], "output_dir": "o"}"#,
    )
    .unwrap();
    assert_eq!(
        run(bin().arg("generate").arg("--config").arg(&cfg))
            .status
            .code(),
        Some(2)
    );
    std::fs::write(&cfg, "{not json").unwrap();
    assert_eq!(
        run(bin().arg("generate").arg("--config").arg(&cfg))
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn tampered_output_exits_1_naming_instance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), r#"{"MWP": 5}"#);
    assert!(run(bin().arg("generate").arg("--config").arg(&cfg))
        .status
        .success());
    let path = dir.path().join("out/mwp.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let id = first["instance_id"].as_str().unwrap().to_string();
    let end = first["loss_spans"][0][1].as_u64().unwrap();
    first["loss_spans"][0][1] = (end + 2).into();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, format!("{first}\n")).unwrap();
    let out = run(bin().arg("validate").arg(&bad));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains(&id));
}

fn eval_records(dir: &Path) -> PathBuf {
    let path = dir.join("boolq.jsonl");
    let lines: String = (0..6)
        .map(|i| {
            format!(
                "{{\"task_id\":\"BoolQ\",\"id\":\"q{i}\",\"fields\":{{\"Context\":\"passage {i}\",\"Question\":\"is {i} even\",\"label\":{}}}}}\n",
                i % 2 == 0
            )
        })
        .collect();
    std::fs::write(&path, lines).unwrap();
    path
}

#[test]
fn render_eval_shots() {
    let dir = tempfile::tempdir().unwrap();
    let records = eval_records(dir.path());
    let render = |shots: &str| {
        let out = run(bin()
            .args([
                "render-eval",
                "--task",
                "BoolQ",
                "--shots",
                shots,
                "--records",
            ])
            .arg(&records));
        assert!(out.status.success());
        String::from_utf8(out.stdout).unwrap()
    };
    let two = render("2");
    assert_eq!(two, render("2"));
    let lines: Vec<serde_json::Value> = two
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 12);
    for pair in lines.chunks(2) {
        assert_eq!(pair[0]["record_id"], pair[1]["record_id"]);
        assert_eq!(pair[0]["demo_ids"], pair[1]["demo_ids"]);
        assert_eq!(pair[0]["demo_ids"].as_array().unwrap().len(), 2);
        assert!(!pair[0]["demo_ids"]
            .as_array()
            .unwrap()
            .contains(&pair[0]["record_id"]));
    }
    let zero: Vec<serde_json::Value> = render("0")
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(zero[0]["text"]
        .as_str()
        .unwrap()
        .starts_with("Input: passage"));
}

#[test]
fn render_eval_unknown_task_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let records = eval_records(dir.path());
    let out = run(bin()
        .args(["render-eval", "--task", "WiC", "--records"])
        .arg(&records));
    assert_eq!(out.status.code(), Some(2));
}
