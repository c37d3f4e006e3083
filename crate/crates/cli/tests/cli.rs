use std::fs;
use std::process::Command;

fn swave() -> Command {
    Command::new(env!("CARGO_BIN_EXE_swave"))
}

#[test]
fn gen_writes_csv_sidecar_and_network() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gen.json");
    fs::write(&cfg, r#"{"n": 6, "s": 2.0, "count": 50, "dist": "laplace"}"#).unwrap();
    let out = dir.path().join("data.csv");
    let net = dir.path().join("net.bin");
    let st = swave()
        .args(["gen", "--seed", "3", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .arg("--network")
        .arg(&net)
        .status()
        .unwrap();
    assert!(st.success());
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("x1,x2,x3,x4,x5,x6,y\n"));
    assert_eq!(text.lines().count(), 51);
    let ds = swave_core::io::read_dataset(&out).unwrap();
    assert_eq!(ds.meta.seed, 3);
    let rep = swave_core::io::read_network(&mut fs::File::open(&net).unwrap()).unwrap();
    for i in 0..ds.len() {
        let y = swave_core::hardfam::network_forward(&rep, ds.row(i)).unwrap();
        assert!((y - ds.labels[i]).abs() <= 1e-9);
    }
}

#[test]
fn gen_binary_matches_csv_rows() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.bin");
    for p in [&a, &b] {
        assert!(swave().args(["gen", "--seed", "9", "--out"]).arg(p).status().unwrap().success());
    }
    assert_eq!(swave_core::io::read_rows(&a).unwrap(), swave_core::io::read_rows(&b).unwrap());
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{ not json").unwrap();
    let st = swave().args(["statdim", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(2));
    fs::write(&cfg, r#"{"n_values": []}"#).unwrap();
    let st = swave().args(["statdim", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(2));
    assert_eq!(swave().args(["no-such-command"]).status().unwrap().code(), Some(2));
}

#[test]
fn resource_limit_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sharp.json");
    // A period of 4e-6 needs millions of bumps to cover the input range.
    fs::write(&cfg, r#"{"n": 32, "s": 1e6, "count": 10}"#).unwrap();
    let st = swave().args(["gen", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("x.csv")).status().unwrap();
    assert_eq!(st.code(), Some(3));
}

#[test]
fn grad_check_passes() {
    let out = swave().args(["grad-check", "--seed", "4"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["pass"], true);
}

#[test]
fn sweep_then_phase() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.json");
    fs::write(
        &cfg,
        r#"{"n_list": [8], "s_list": [0.5, 4.0], "train_count": 256, "test_count": 64,
            "depths": [1], "width_factors": [2], "lrs": [0.01], "batch_sizes": [64], "epochs": 2}"#,
    )
    .unwrap();
    let out = dir.path().join("run");
    let st = swave().args(["sweep", "--threads", "1", "--restarts", "2", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert!(st.success());
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let p = swave().args(["phase", "--input"]).arg(out.join("sweep_result.json")).output().unwrap();
    assert!(p.status.success());
    let v: serde_json::Value = serde_json::from_slice(&p.stdout).unwrap();
    assert_eq!(v["cells"].as_array().unwrap().len(), 2);
}

#[test]
fn oracle_demo_small() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("demo.json");
    fs::write(
        &cfg,
        r#"{"runs": [{"name": "d", "n": 8, "s": 1.0, "mode": "decoy"}], "hidden": [3], "t": 20, "steps": 2, "test_count": 20}"#,
    )
    .unwrap();
    let st = swave().args(["oracle-demo", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).status().unwrap();
    assert!(st.success());
    let first = fs::read_to_string(dir.path().join("d.jsonl")).unwrap();
    let line: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    for k in ["query_id", "mode", "t", "p_est", "v", "tolerance"] {
        assert!(line.get(k).is_some(), "missing {k}");
    }
    assert!(dir.path().join("oracle_summary.json").exists());
}
