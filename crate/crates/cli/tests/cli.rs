use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use loop_sentinel::trace::parse_trace;
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_loop-sentinel"));
    c.env_remove("LOOP_SENTINEL_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout_lines(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).expect("json line"))
        .collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    _dir: TempDir,
    corpus: PathBuf,
    model: PathBuf,
    cusum: PathBuf,
}

const SPLIT: [&str; 4] = ["--calibration-cases", "10", "--test-per-class", "10"];

fn fixture() -> Fixture {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("corpus");
    let model = dir.path().join("model.json");
    let cusum = dir.path().join("cusum.json");
    let out = run(&["gen", "--out", p(&corpus), "--cases", "60", "--seed", "7"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut args = vec!["train", "--corpus", p(&corpus), "--out", p(&model), "--seed", "7"];
    args.extend(SPLIT);
    assert_eq!(code(&run(&args)), 0);
    let mut args = vec![
        "calibrate",
        "--corpus",
        p(&corpus),
        "--model",
        p(&model),
        "--out",
        p(&cusum),
        "--seed",
        "7",
    ];
    args.extend(SPLIT);
    assert_eq!(code(&run(&args)), 0);
    Fixture { _dir: dir, corpus, model, cusum }
}

fn case_with(corpus: &Path, loop_type: &str) -> PathBuf {
    let mut dirs: Vec<PathBuf> = fs::read_dir(corpus)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|d| d.join("meta.json").is_file())
        .collect();
    dirs.sort();
    dirs.into_iter()
        .find(|d| {
            let meta: Value = serde_json::from_str(&fs::read_to_string(d.join("meta.json")).unwrap()).unwrap();
            meta["label"]["loop_type"] == loop_type
        })
        .expect("case of the requested type")
}

fn read_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn gen_is_deterministic_per_seed() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    for (out, seed) in [(&a, "3"), (&b, "3"), (&c, "4")] {
        let o = run(&["gen", "--out", p(out), "--cases", "6", "--seed", seed]);
        assert_eq!(code(&o), 0);
    }
    let ta = read_tree(&a);
    assert_eq!(ta.len(), 6 * 3 + 1);
    assert_eq!(ta, read_tree(&b));
    assert_ne!(ta, read_tree(&c));
}

#[test]
fn seed_is_read_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&["gen", "--out", p(&a), "--cases", "4", "--seed", "11"]);
    let o = bin()
        .args(["gen", "--out", p(&b), "--cases", "4"])
        .env("LOOP_SENTINEL_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(read_tree(&a), read_tree(&b));
}

#[test]
fn monitor_alerts_on_a_loop_and_stays_quiet_on_normal() {
    let f = fixture();
    let looped = case_with(&f.corpus, "statement");
    let out = run(&["monitor", "--trace", p(&looped), "--model", p(&f.model), "--cusum", p(&f.cusum)]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    let lines = stdout_lines(&out);
    assert_eq!(lines.iter().filter(|l| l["type"] == "alert").count(), 1);
    assert_eq!(lines.iter().filter(|l| l["type"] == "statement_onset").count(), 1);
    let alert = lines.iter().find(|l| l["type"] == "alert").unwrap();
    let onset = lines.iter().find(|l| l["type"] == "statement_onset").unwrap();
    assert!(alert["sentence"].as_u64() < onset["sentence_index"].as_u64());

    let normal = case_with(&f.corpus, "none");
    let out = run(&["monitor", "--trace", p(&normal), "--model", p(&f.model), "--cusum", p(&f.cusum)]);
    assert_eq!(code(&out), 0);
    let lines = stdout_lines(&out);
    assert!(lines.iter().all(|l| l["type"] == "score"));
    assert!(!lines.is_empty());
}

#[test]
fn stream_output_matches_file_output() {
    let f = fixture();
    let looped = case_with(&f.corpus, "statement");
    let trace = parse_trace(&looped).unwrap();
    let hidden = trace.hidden.as_ref().unwrap();
    let mut input = String::new();
    for (i, t) in trace.tokens.iter().enumerate() {
        let mut v = serde_json::to_value(t).unwrap();
        v["hidden"] = serde_json::to_value(hidden.row(i)).unwrap();
        input.push_str(&v.to_string());
        input.push('\n');
    }

    let mut child = bin()
        .args(["monitor", "--stdin", "--model", p(&f.model), "--cusum", p(&f.cusum)])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    let streamed = child.wait_with_output().unwrap();
    let file = run(&["monitor", "--trace", p(&looped), "--model", p(&f.model), "--cusum", p(&f.cusum)]);
    assert_eq!(code(&streamed), 2);
    assert_eq!(streamed.stdout, file.stdout);
}

#[test]
fn eval_reports_metrics_and_ablation_csv() {
    let f = fixture();
    let csv = f.corpus.parent().unwrap().join("ablation.csv");
    let mut args = vec![
        "eval",
        "--corpus",
        p(&f.corpus),
        "--model",
        p(&f.model),
        "--cusum",
        p(&f.cusum),
        "--ablate",
        "1,5",
        "--csv",
        p(&csv),
        "--seed",
        "7",
    ];
    args.extend(SPLIT);
    let out = run(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = &stdout_lines(&out)[0];
    assert_eq!(v["report"]["n_loop"], 10);
    assert_eq!(v["report"]["n_normal"], 10);
    assert_eq!(v["ablation"].as_array().unwrap().len(), 2);
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "p,edr,fpr,ase,ate");
    assert!(rows[1].starts_with("1,") && rows[2].starts_with("5,"));
}

#[test]
fn graph_and_plot_write_outputs() {
    let f = fixture();
    let looped = case_with(&f.corpus, "statement");
    let graph = f.corpus.parent().unwrap().join("graph.json");
    let out = run(&["graph", "--trace", p(&looped), "--k", "6", "--out", p(&graph), "--centroids"]);
    assert_eq!(code(&out), 0);
    let export: Value = serde_json::from_str(&fs::read_to_string(&graph).unwrap()).unwrap();
    assert!(export["centroids"].is_array());

    for kind in ["scores", "entropy", "attention"] {
        let svg = f.corpus.parent().unwrap().join(format!("{kind}.svg"));
        let out = run(&[
            "plot",
            "--trace",
            p(&looped),
            "--kind",
            kind,
            "--model",
            p(&f.model),
            "--cusum",
            p(&f.cusum),
            "--out",
            p(&svg),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));
    }
}

#[test]
fn exit_codes_follow_the_contract() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&[])), 64);
    assert_eq!(code(&run(&["frobnicate"])), 64);
    assert_eq!(code(&run(&["monitor"])), 64);
    assert_eq!(code(&run(&["monitor", "--trace", "x", "--stdin"])), 64);

    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing");
    assert_eq!(code(&run(&["monitor", "--trace", p(&missing)])), 74);

    let bad = dir.path().join("bad");
    fs::create_dir(&bad).unwrap();
    fs::write(bad.join("meta.json"), "{ not json").unwrap();
    fs::write(bad.join("tokens.jsonl"), "").unwrap();
    assert_eq!(code(&run(&["monitor", "--trace", p(&bad)])), 65);

    let mut child = bin()
        .args(["monitor", "--stdin"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"{\"i\":1,\"id\":0,\"text\":\"a\",\"entropy_nats\":0.1,\"top1_prob\":0.9}\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(code(&out), 65);
    assert!(String::from_utf8_lossy(&out.stderr).contains("out-of-order"));
}
