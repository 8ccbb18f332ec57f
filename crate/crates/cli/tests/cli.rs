use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

use palace_core::{Palace, PalaceAddress};

fn palace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_palace"))
        .args(args)
        .env_remove("PALACE_PATH")
        .output()
        .unwrap()
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON document")
}

fn init(dir: &Path) -> String {
    let p = dir.join("p").display().to_string();
    assert!(palace(&["init", &p]).status.success());
    p
}

#[test]
fn init_then_status_has_zero_counts() {
    let dir = tempfile::tempdir().unwrap();
    let p = init(dir.path());
    let v = json_of(&palace(&["--palace", &p, "--json", "status"]));
    assert_eq!(v["status"]["drawer_count"], 0);
    assert_eq!(v["status"]["wing_count"], 0);
    assert!(v["status"]["protocol_directive"].as_str().unwrap().contains("search before claiming ignorance"));
}

#[test]
fn recall_without_palace_is_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none").display().to_string();
    let out = palace(&["--palace", &missing, "recall", "x"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));
    assert!(out.stdout.is_empty());

    let out = palace(&["recall", "x"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_subcommand_prints_usage() {
    let out = palace(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert!(palace(&["--help"]).status.success());
}

#[test]
fn env_var_supplies_palace() {
    let dir = tempfile::tempdir().unwrap();
    let p = init(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_palace"))
        .args(["--json", "status"])
        .env("PALACE_PATH", &p)
        .output()
        .unwrap();
    assert_eq!(json_of(&out)["status"]["drawer_count"], 0);
}

#[test]
fn remember_recall_verbatim_and_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let p = init(dir.path());
    let text = "Deploy key  lives in vault\t(ünïcode)";
    let v = json_of(&palace(&["--palace", &p, "--json", "remember", text, "--wing", "dev", "--room", "ops"]));
    assert_eq!(v["deduplicated"], false);
    let again = json_of(&palace(&["--palace", &p, "--json", "remember", text, "--wing", "dev", "--room", "ops"]));
    assert_eq!(again["deduplicated"], true);

    let r = json_of(&palace(&["--palace", &p, "--json", "recall", "deploy key", "-k", "1", "--mode", "keyword"]));
    assert_eq!(r["results"][0]["content"], text);

    let lib_dir = tempfile::tempdir().unwrap();
    let lib = Palace::init(lib_dir.path(), None).unwrap();
    let outcome = lib.remember(text, PalaceAddress::new("dev", "ops").unwrap()).unwrap();
    assert_eq!(v["drawer_id"], outcome.drawer_id.as_str());
    let cli_state: Vec<_> = Palace::open(&p).unwrap().drawers().unwrap().into_iter().map(|d| (d.id, d.content)).collect();
    let lib_state: Vec<_> = lib.drawers().unwrap().into_iter().map(|d| (d.id, d.content)).collect();
    assert_eq!(cli_state, lib_state);

    let bad = palace(&["--palace", &p, "remember", "x", "--wing", "Dev", "--room", "ops"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn mine_convo_from_stdin() {
    let dir = tempfile::tempdir().unwrap();
    let p = init(dir.path());
    let export = concat!(
        r#"{"session_id":"s1","role":"user","content":"What is the wifi password?","ts":"2024-01-01T10:00:00Z"}"#, "\n",
        r#"{"session_id":"s1","role":"assistant","content":"It is on the fridge.","ts":"2024-01-01T10:00:05Z"}"#, "\n",
    );
    let mut child = Command::new(env!("CARGO_BIN_EXE_palace"))
        .args(["--palace", &p, "--json", "mine-convo", "-", "--wing", "home"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(export.as_bytes()).unwrap();
    let v = json_of(&child.wait_with_output().unwrap());
    assert_eq!(v["added"], 1);

    let r = json_of(&palace(&["--palace", &p, "--json", "recall", "wifi password", "--wing", "home"]));
    assert_eq!(r["results"][0]["session_id"], "s1");
}

#[test]
fn mine_and_dedup_report() {
    let dir = tempfile::tempdir().unwrap();
    let p = init(dir.path());
    let proj = dir.path().join("proj");
    std::fs::create_dir_all(proj.join("a")).unwrap();
    std::fs::create_dir_all(proj.join("b")).unwrap();
    std::fs::write(proj.join("a/x.md"), "same words here").unwrap();
    std::fs::write(proj.join("b/y.md"), "same words here").unwrap();
    let proj = proj.display().to_string();
    let first = json_of(&palace(&["--palace", &p, "--json", "mine", &proj, "--wing", "code"]));
    assert_eq!(first["files_read"], 2);
    let second = json_of(&palace(&["--palace", &p, "--json", "mine", &proj, "--wing", "code"]));
    assert_eq!(second["added"], 0);
    let report = json_of(&palace(&["--palace", &p, "--json", "dedup-report"]));
    assert!(report["groups"].is_array());
}

#[test]
fn kg_and_diary_commands() {
    let dir = tempfile::tempdir().unwrap();
    let p = init(dir.path());
    let add = json_of(&palace(&[
        "--palace", &p, "--json", "kg", "add", "Max", "works_at", "Acme", "--valid-from", "2020-01-01T00:00:00Z", "--valid-to", "2023-01-01T00:00:00Z",
    ]));
    assert_eq!(add["added"], true);
    let during = json_of(&palace(&["--palace", &p, "--json", "kg", "query", "--subject", "Max", "--at", "2021-06-01T00:00:00Z"]));
    assert_eq!(during["triples"].as_array().unwrap().len(), 1);
    let after = json_of(&palace(&["--palace", &p, "--json", "kg", "query", "--subject", "Max", "--at", "2023-01-01T00:00:00Z"]));
    assert!(after["triples"].as_array().unwrap().is_empty());
    assert_eq!(palace(&["--palace", &p, "kg", "query"]).status.code(), Some(1));
    assert_eq!(palace(&["--palace", &p, "kg", "add", "a", "b", "c", "--valid-from", "yesterday"]).status.code(), Some(1));

    for t in ["first", "second", "third"] {
        json_of(&palace(&["--palace", &p, "--json", "diary", "append", "scout", t, "--session", "s1"]));
    }
    let read = json_of(&palace(&["--palace", &p, "--json", "diary", "read", "scout", "-n", "2"]));
    let texts: Vec<&str> = read["entries"].as_array().unwrap().iter().map(|e| e["text"].as_str().unwrap()).collect();
    assert_eq!(texts, ["second", "third"]);
}

#[test]
fn wakeup_stays_in_budget() {
    let dir = tempfile::tempdir().unwrap();
    let p = init(dir.path());
    for i in 0..30 {
        let text = format!("We decided on item {i} for the Atlas project launch.");
        palace(&["--palace", &p, "remember", &text, "--wing", "work", "--room", "atlas"]);
    }
    let w = json_of(&palace(&["--palace", &p, "--json", "wakeup"]));
    assert!(w["token_estimate"].as_u64().unwrap() <= 900);
    assert!(w["l1_text"].as_str().unwrap().contains("[work/atlas]"));
}

#[test]
fn serve_over_stdio() {
    let dir = tempfile::tempdir().unwrap();
    let p = init(dir.path());
    let mut child = Command::new(env!("CARGO_BIN_EXE_palace"))
        .args(["--palace", &p, "serve"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let input = concat!(
        r#"{"jsonrpc":"2.0","id":1,"method":"initialize","params":{}}"#, "\n",
        r#"{"jsonrpc":"2.0","method":"notifications/initialized"}"#, "\n",
        r#"{"jsonrpc":"2.0","id":2,"method":"tools/list"}"#, "\n",
        "not json\n",
        r#"{"jsonrpc":"2.0","id":3,"method":"tools/call","params":{"name":"recall","arguments":{}}}"#, "\n",
    );
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let lines: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0]["result"]["protocolVersion"], "2024-11-05");
    assert_eq!(lines[1]["result"]["tools"].as_array().unwrap().len(), 10);
    assert_eq!(lines[2]["error"]["code"], -32700);
    assert_eq!(lines[3]["error"]["code"], -32602);
}

#[test]
fn bench_run_is_deterministic() {
    let args = ["--json", "bench", "run", "--seed", "7", "--questions", "6", "--distractors", "14"];
    let a = palace(&args);
    let b = palace(&args);
    let report = json_of(&a);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(report["rows"].as_array().unwrap().len(), 8);
    assert!(report.get("runtime_ms").is_none());

    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("fx.json").display().to_string();
    let gen = json_of(&palace(&["--json", "bench", "generate", "--seed", "7", "--questions", "6", "--distractors", "14", "--out", &fx]));
    assert_eq!(gen["sessions"], 20);
    let from_file = palace(&["--json", "bench", "run", "--fixture-file", &fx]);
    assert_eq!(from_file.stdout, a.stdout);
}

#[test]
fn concurrent_processes_share_one_palace() {
    let dir = tempfile::tempdir().unwrap();
    let p = init(dir.path());
    let writers: Vec<_> = (0..6)
        .map(|i| {
            Command::new(env!("CARGO_BIN_EXE_palace"))
                .args(["--palace", &p, "remember", &format!("parallel note {i}"), "--wing", "w", "--room", "r"])
                .stdout(Stdio::null())
                .spawn()
                .unwrap()
        })
        .collect();
    let readers: Vec<_> = (0..3)
        .map(|_| {
            Command::new(env!("CARGO_BIN_EXE_palace"))
                .args(["--palace", &p, "--json", "recall", "parallel note"])
                .stdout(Stdio::piped())
                .spawn()
                .unwrap()
        })
        .collect();
    for mut w in writers {
        assert!(w.wait().unwrap().success());
    }
    for r in readers {
        json_of(&r.wait_with_output().unwrap());
    }
    let v = json_of(&palace(&["--palace", &p, "--json", "status"]));
    assert_eq!(v["status"]["drawer_count"], 6);
    assert_eq!(Palace::open(&p).unwrap().indexed_count().unwrap(), 6);
}
