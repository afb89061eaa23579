use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn data(rel: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(rel)
        .canonicalize()
        .unwrap()
        .display()
        .to_string()
}

fn map() -> String {
    data("random-32-32-10.map")
}

fn scen() -> String {
    data("scen-random/random-32-32-10-random-1.scen")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mapfboost")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn solve_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    let paths = dir.path().join("paths.txt");
    let p = paths.to_str().unwrap();
    let (m, s) = (map(), scen());
    let o = run(&["solve", "--map", &m, "--scen", &s, "--agents", "30", "--algo", "lacam", "--out", p]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.lines().nth(1).unwrap().starts_with("lacam,h,none,"));
    let o = run(&["validate", "--map", &m, "--scen", &s, "--agents", "30", "--paths", p]);
    assert_eq!(code(&o), 0);

    // Put agent 1 on agent 0's cell at t=1.
    let text = fs::read_to_string(&paths).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[1].split_whitespace().map(String::from).collect();
    cells[2] = cells[1].clone();
    lines[1] = cells.join(" ");
    fs::write(&paths, lines.join("\n")).unwrap();
    let o = run(&["validate", "--map", &m, "--scen", &s, "--agents", "30", "--paths", p]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn failed_solve_exits_one() {
    let (m, s) = (map(), scen());
    let o = run(&["solve", "--map", &m, "--scen", &s, "--agents", "50", "--heuristic", "manhattan", "--max-timesteps", "50"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("reason=max_timesteps"));
}

#[test]
fn usage_errors_exit_two() {
    let (m, s) = (map(), scen());
    assert_eq!(code(&run(&["solve", "--map", &m])), 2);
    assert_eq!(code(&run(&["solve", "--map", &m, "--scen", &s, "--agents", "5", "--order", "bogus"])), 2);
    // The naive shield needs a policy.
    assert_eq!(code(&run(&["solve", "--map", &m, "--scen", &s, "--agents", "5", "--shield", "naive"])), 2);
    assert_eq!(code(&run(&["solve", "--map", "/nonexistent.map", "--scen", &s, "--agents", "5"])), 2);
    assert_eq!(code(&run(&["solve", "--map", &m, "--scen", &s, "--agents", "100000"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
}

#[test]
fn bench_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    fs::write(
        &cfg,
        format!(
            "map = \"{}\"\nscens = [\"{}\"]\nagents = [10, 20]\nseeds = [0, 1]\ntimeout = 10.0\nthreads = 1\nlog_dir = \"logs\"\n\n\
             [[cell]]\nname = \"lacam\"\nalgo = \"lacam\"\n\n\
             [[cell]]\nname = \"shield\"\npolicy = \"softmax:0.5,0\"\norder = \"pi\"\nsample = \"sampled\"\nlog_orderings = true\n",
            map(),
            scen()
        ),
    )
    .unwrap();
    let out = dir.path().join("results.csv");
    let o = run(&["bench", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 8 + 4);
    assert_eq!(rows.iter().filter(|r| r.contains("kind=aggregate")).count(), 4);

    let logs = dir.path().join("logs");
    assert_eq!(fs::read_dir(&logs).unwrap().count(), 4);
    let hist = dir.path().join("hist.csv");
    let o = run(&["stats", "--logs", logs.to_str().unwrap(), "--out", hist.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&hist).unwrap();
    assert!(text.starts_with("mode,at_goal,action,samples,p1,p2,p3,p4,p5"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("max |strict - sampled|"));

    let o = run(&["stats", "--logs", dir.path().join("missing").to_str().unwrap(), "--out", hist.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}
