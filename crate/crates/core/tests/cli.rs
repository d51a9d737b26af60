use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_medsim"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_exit_codes() {
    assert_eq!(run(&["validate", s(&scenario("desk6.json"))]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"version": 1, "actions": [{"id": "a", "prototype": "juggle"}]}"#).unwrap();
    assert_eq!(run(&["validate", s(&bad)]).status.code(), Some(2));

    let cyc = dir.path().join("cycle.json");
    let q = r#"{"prompt": "?", "options": ["x"], "correct": ["x"]}"#;
    std::fs::write(
        &cyc,
        format!(
            r#"{{"version": 1, "actions": [{{"id": "a", "prototype": "question", "params": {q}}}, {{"id": "b", "prototype": "question", "params": {q}}}],
                "edges": [["a", "b"], ["b", "a"]]}}"#
        ),
    )
    .unwrap();
    let out = run(&["validate", s(&cyc)]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn run_twice_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for i in 0..2 {
        let (r, m, rec) = (dir.path().join(format!("r{i}.json")), dir.path().join(format!("m{i}.csv")), dir.path().join(format!("s{i}.mrec")));
        let out = run(&[
            "run",
            "--scenario",
            s(&scenario("desk6.json")),
            "--clients",
            "3",
            "--seed",
            "11",
            "--physics",
            "in-process",
            "--inject",
            "wrong-angle:mark_site:2",
            "--record",
            s(&rec),
            "--report",
            s(&r),
            "--metrics",
            s(&m),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        files.push([std::fs::read(r).unwrap(), std::fs::read(m).unwrap(), std::fs::read(rec).unwrap()]);
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(&files[0][2][..4], b"MREC");
}

#[test]
fn resume_matches_uninterrupted_report() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    let sc = scenario("desk6.json").to_str().unwrap().to_string();
    let common = ["--scenario", &sc, "--clients", "3", "--seed", "2", "--inject", "wrong-answer:count_check"];
    let (rec, r1, m1, r2, m2) = (p("s.mrec"), p("r.json"), p("m.csv"), p("r2.json"), p("m2.csv"));
    let mut a = vec!["run"];
    a.extend(common);
    a.extend(["--record", &rec, "--report", &r1, "--metrics", &m1]);
    assert!(run(&a).status.success());
    let mut b = vec!["resume", "--recording", &rec, "--at-s", "3"];
    b.extend(common);
    b.extend(["--report", &r2, "--metrics", &m2]);
    let out = run(&b);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(&r1).unwrap(), std::fs::read(&r2).unwrap());

    // replay to a file is byte-identical across invocations
    let (fa, fb) = (p("a.bin"), p("b.bin"));
    for f in [&fa, &fb] {
        assert!(run(&["replay", "--recording", &rec, "--from-s", "1", "--out", f]).status.success());
    }
    assert_eq!(std::fs::read(&fa).unwrap(), std::fs::read(&fb).unwrap());
}

#[test]
fn unreachable_physics_server_exits_4() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().to_string();
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "run",
        "--scenario",
        s(&scenario("linear3.json")),
        "--physics",
        "dissected",
        "--physics-addr",
        &port,
        "--report",
        s(&dir.path().join("r.json")),
        "--metrics",
        s(&dir.path().join("m.csv")),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn dissected_run_against_spawned_server() {
    let mut server = bin().args(["physics-server", "--listen", "127.0.0.1:0", "--duration-s", "30"]).stdout(std::process::Stdio::piped()).spawn().unwrap();
    let mut line = String::new();
    std::io::BufRead::read_line(&mut std::io::BufReader::new(server.stdout.take().unwrap()), &mut line).unwrap();
    let addr = line.trim().rsplit(' ').next().unwrap().to_string();
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "run",
        "--scenario",
        s(&scenario("linear3.json")),
        "--physics",
        "dissected",
        "--physics-addr",
        &addr,
        "--report",
        s(&dir.path().join("r.json")),
        "--metrics",
        s(&dir.path().join("m.csv")),
    ]);
    server.kill().ok();
    server.wait().ok();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn scaffold_and_bench() {
    let out = run(&["scaffold-action", "--prototype", "insert", "--objects", "needle"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["prototype"], "insert");

    let out = run(&["bench", "softbody", "--runs", "3"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 3);

    assert!(!run(&["bench", "teleport"]).status.success());
    let out = run(&["bench", "cut", "--mesh", "/nonexistent.obj", "--runs", "1"]);
    assert_eq!(out.status.code(), Some(2));
}
