use std::fs;
use std::process::{Command, Output};

fn dyadlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dyadlab")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

#[test]
fn repeated_seed_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.cfg");
    fs::write(&cfg, "experiment = norms\ndepth = 6\noperator = martingale\nalphas = 0, -0.5, -0.8\n").unwrap();
    let c = cfg.to_str().unwrap();
    let a = dyadlab(&["norms", "--config", c, "--seed", "4"]);
    let b = dyadlab(&["norms", "--config", c, "--seed", "4"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.contains("# config_hash: "));
    assert!(text.lines().any(|l| l == "param,a2,norm,ratio"));
    let c2 = dyadlab(&["norms", "--config", c, "--seed", "5"]);
    assert_ne!(text.as_bytes(), c2.stdout.as_slice());
}

#[test]
fn writes_csv_and_json_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = dyadlab(&["bellman", "--seed", "1", "--set", "samples=500", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("bellman.csv")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("bellman.json")).unwrap()).unwrap();
    assert_eq!(json["csv"].as_str().unwrap(), csv);
    assert_eq!(json["summary"]["passed"], true);
    assert_eq!(json["metadata"]["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn sparse_and_sht_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = dyadlab(&["sparse-dominate", "--seed", "2", "--depth", "8", "--out", d, "--format", "json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("sparse-family.json").exists());
    let cloud = dir.path().join("cloud.csv");
    fs::write(&cloud, "id,x,y\na,0,0\nb,1,0\nc,0,1\nd,1,1\ne,0.5,0.5\n").unwrap();
    let o = dyadlab(&["sht", "--set", &format!("input={}", cloud.display()), "--out", d]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sht.json")).unwrap()).unwrap();
    assert_eq!(rep["summary"]["dimension_identity"], true);
    assert!(dir.path().join("sht-cubes.json").exists());
}

#[test]
fn haar_transforms_a_signal_file() {
    let dir = tempfile::tempdir().unwrap();
    let sig = dir.path().join("sig.csv");
    fs::write(&sig, "cell_index,value\n0,1\n1,3\n2,-2\n3,0\n").unwrap();
    let o = dyadlab(&["haar", "--depth", "2", "--set", &format!("input={}", sig.display())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "generation,index,coefficient");
    assert_eq!(rows.len(), 4);
}

#[test]
fn exit_codes() {
    // configuration errors
    assert_eq!(code(&dyadlab(&["norms", "--set", "operator=hilbert"])), 2);
    assert_eq!(code(&dyadlab(&["bellman", "--seed", "1", "--depth", "21"])), 2);
    assert_eq!(code(&dyadlab(&["carleson"])), 2);
    assert_eq!(code(&dyadlab(&["norms", "--format", "xml", "--set", "operator=sha"])), 2);
    assert_eq!(code(&dyadlab(&["frobnicate"])), 2);
    // I/O errors
    assert_eq!(code(&dyadlab(&["bellman", "--config", "/nonexistent/x.cfg"])), 4);
    assert_eq!(code(&dyadlab(&["haar", "--set", "input=/nonexistent/sig.csv"])), 4);
    // numerical failure: the power iteration cannot converge in one step
    let o = dyadlab(&[
        "norms",
        "--depth",
        "6",
        "--seed",
        "1",
        "--set",
        "operator=sha",
        "--set",
        "alphas=-0.8",
        "--set",
        "max_iter=1",
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}
