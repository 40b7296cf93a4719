mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::process::{Child, Stdio};
use std::time::{Duration, Instant};

use common::{bin, fixture, path_str, run_bin, stderr};

#[test]
fn extract_on_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = run_bin(&["extract", "--out", path_str(&dir.path().join("out")), path_str(&empty)]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("no input records"), "{}", stderr(&out));
}

#[test]
fn staged_commands_match_run() {
    let dir = tempfile::tempdir().unwrap();
    let staged = dir.path().join("staged");
    let s = path_str(&staged);
    let input = fixture("synthetic_1000.mrc");
    assert!(run_bin(&["extract", "--out", s, path_str(&input)]).status.success());
    assert!(run_bin(&["cluster", "--out", s, path_str(&staged.join("pairs.csv"))]).status.success());
    let out = run_bin(&["mine", "--out", s, "--min-support", "0.005", path_str(&staged.join("transactions.jsonl"))]);
    assert!(out.status.success(), "{}", stderr(&out));
    let counters: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(counters["rules"].as_u64().unwrap() > 0);

    let whole = dir.path().join("whole");
    let out = run_bin(&["--workers", "3", "run", "--out", path_str(&whole), "--min-support", "0.005", path_str(&input)]);
    assert!(out.status.success(), "{}", stderr(&out));
    for name in ["pairs.csv", "transactions.jsonl", "rules.csv", "rules.jsonl", "itemsets.jsonl", "predictions.jsonl", "manifest.json"] {
        let read = |dir: &std::path::Path| std::fs::read_to_string(dir.join(name)).unwrap();
        assert_eq!(read(&staged), read(&whole), "{name}");
    }
}

#[test]
fn impossible_support_exits_zero_with_empty_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.jsonl");
    std::fs::write(&t, "{\"items\":[\"a\"]}\n{\"items\":[\"b\"]}\n").unwrap();
    let out = run_bin(&["mine", "--out", path_str(dir.path()), "--min-support", "1", path_str(&t)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(std::fs::read_to_string(dir.path().join("itemsets.jsonl")).unwrap(), "");
    assert_eq!(std::fs::read_to_string(dir.path().join("rules.csv")).unwrap(), "antecedent,consequent,confidence,lift,support\n");
}

#[test]
fn invalid_parameters_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let t = path_str(&fixture("four_transactions.jsonl")).to_string();
    for bad in [["--min-support", "0"], ["--min-support", "1.5"], ["--min-confidence", "0"]] {
        let out = run_bin(&["mine", "--out", path_str(dir.path()), bad[0], bad[1], &t]);
        assert!(!out.status.success(), "{bad:?}");
    }
}

#[test]
fn predict_answers_one_query() {
    let out = run_bin(&["predict", "--rules", path_str(&fixture("reference_rules.csv")), "American Library Association"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let body: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(body["suggestions"][0]["value"], "Chicago");
    assert_eq!(body["suggestions"][0]["confidence"].as_f64(), Some(0.954449986873195));
    assert_eq!(body["suggestions"][0]["lift"].as_f64(), Some(111.876299789079));

    let out = run_bin(&[
        "predict",
        "--rules",
        path_str(&fixture("reference_rules.jsonl")),
        "Chicago",
        "Law Student Division American Bar Association",
    ]);
    let body: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(body["suggestions"][0]["value"], "University of Chicago Press");
}

#[test]
fn serve_rejects_malformed_rules_with_line_number() {
    let out = run_bin(&["serve", "--port", "0", "--rules", path_str(&fixture("malformed_rules.csv"))]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn http_get(port: u16, path: &str) -> std::io::Result<(u16, String)> {
    let mut stream = TcpStream::connect(("127.0.0.1", port))?;
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;
    write!(stream, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n")?;
    let mut response = String::new();
    stream.read_to_string(&mut response)?;
    let status = response.split(' ').nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let body = response.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
    Ok((status, body))
}

#[test]
fn serve_answers_over_http() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let child = bin()
        .args(["serve", "--port", &port.to_string(), "--rules", path_str(&fixture("reference_rules.csv"))])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut server = Server(child);
    let deadline = Instant::now() + Duration::from_secs(20);
    let health = loop {
        match http_get(port, "/healthz") {
            Ok(r) => break r,
            Err(_) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(50)),
            Err(e) => panic!("server did not come up: {e}"),
        }
    };
    assert_eq!(health, (200, "ok".to_string()));
    let (status, body) = http_get(port, "/suggest?items=American%20Library%20Association").unwrap();
    assert_eq!(status, 200);
    assert!(body.contains("\"confidence\":0.954449986873195,\"lift\":111.876299789079"), "{body}");

    let _ = server.0.kill();
    let _ = server.0.wait();
    let mut log = String::new();
    BufReader::new(server.0.stderr.take().unwrap()).lines().map_while(Result::ok).for_each(|l| log.push_str(&l));
    assert!(log.contains("loaded 2 rules with 2 distinct consequents"), "{log}");
}
