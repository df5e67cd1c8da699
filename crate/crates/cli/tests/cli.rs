use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn sessionlens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sessionlens"))
        .args(args)
        .env_remove("SESSIONLENS_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), stderr(&o));
    stdout(&o)
}

fn hit(host: &str, minute: u32, path: &str) -> String {
    format!(
        "{host} - - [01/Feb/2011:{:02}:{:02}:00 +0530] \"GET {path} HTTP/1.1\" 200 512 \"-\" \"Mozilla/5.0\"",
        10 + minute / 60,
        minute % 60
    )
}

fn write_log(dir: &Path, name: &str, lines: &[String]) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

/// 40 lines: eight hosts with five page views each, plus noise on the last host.
fn forty_lines() -> Vec<String> {
    let mut lines = Vec::new();
    for h in 0..8 {
        let host = format!("10.0.0.{h}");
        let pages = ["/index.html", "/dept/cs.html", "/dept/ec.html", "/lib.html", "/news.html"];
        for (i, p) in pages.iter().enumerate() {
            let path = if h == 7 && i == 4 { "/logo.gif" } else { p };
            lines.push(hit(&host, (h * 7 + i * 3) as u32, path));
        }
    }
    lines
}

fn fixture(dir: &Path) -> PathBuf {
    let log = dir.join("fixture.log");
    ok(sessionlens(&["fixture", "--output", log.to_str().unwrap()]));
    log
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn preprocess_prints_five_summary_rows() {
    let dir = TempDir::new().unwrap();
    let lines = forty_lines();
    assert_eq!(lines.len(), 40);
    let log = write_log(dir.path(), "access.log", &lines);
    let out = dir.path().join("out");
    let text = ok(sessionlens(&["preprocess", "--input", s(&log), "--output-dir", s(&out)]));
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 5, "{text}");
    for (label, value) in [
        ("Initial No of Log Entries", 40),
        ("Log Entries after Cleaning", 39),
        ("No. of site URLs accessed", 5),
        ("No of Users Identified", 8),
        ("No. of User Sessions Identified", 8),
    ] {
        assert!(text.lines().any(|l| l.starts_with(label) && l.ends_with(&value.to_string())), "{label} in {text}");
    }
    for f in ["sessions.csv", "vocabulary.csv", "cleaning.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn gzip_input_matches_plain_text() {
    let dir = TempDir::new().unwrap();
    let plain = fixture(dir.path());
    let gz = dir.path().join("fixture.log.gz");
    let mut enc = flate2::write::GzEncoder::new(fs::File::create(&gz).unwrap(), flate2::Compression::default());
    enc.write_all(&fs::read(&plain).unwrap()).unwrap();
    enc.finish().unwrap();

    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let ta = ok(sessionlens(&["preprocess", "--input", s(&plain), "--output-dir", s(&a)]));
    let tb = ok(sessionlens(&["preprocess", "--input", s(&gz), "--output-dir", s(&b)]));
    assert_eq!(ta, tb);
    for f in ["sessions.csv", "vocabulary.csv", "cleaning.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn missing_input_exits_2_naming_the_path() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("no-such.log");
    let o = sessionlens(&["preprocess", "--input", s(&missing), "--output-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(s(&missing)), "{}", stderr(&o));
}

#[test]
fn bad_config_exits_2() {
    let dir = TempDir::new().unwrap();
    let conf = dir.path().join("run.conf");
    fs::write(&conf, "alpha1 = 7\nalpha2 = 6\n").unwrap();
    let log = write_log(dir.path(), "a.log", &forty_lines());
    let o = sessionlens(&["weigh", "--config", s(&conf), "--input", s(&log), "--output-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = sessionlens(&["weigh", "--set", "no_such_key=1", "--input", s(&log)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no_such_key"));
}

#[test]
fn single_page_sessions_vanish_with_exit_3() {
    let dir = TempDir::new().unwrap();
    let lines: Vec<String> = (0..6).map(|h| hit(&format!("10.0.1.{h}"), h, "/index.html")).collect();
    let log = write_log(dir.path(), "a.log", &lines);
    let o = sessionlens(&["weigh", "--input", s(&log), "--output-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("vanished"), "{}", stderr(&o));
}

#[test]
fn too_many_clusters_exits_4() {
    let dir = TempDir::new().unwrap();
    let log = write_log(dir.path(), "a.log", &forty_lines());
    let o = sessionlens(&["cluster", "--input", s(&log), "--output-dir", s(dir.path()), "--k", "9"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("c ≤ m violated"), "{}", stderr(&o));
}

#[test]
fn identical_sessions_fail_every_k_with_exit_4() {
    let dir = TempDir::new().unwrap();
    let mut lines = Vec::new();
    for h in 0..9u32 {
        for (i, p) in ["/a.html", "/b.html", "/c.html"].iter().enumerate() {
            lines.push(hit(&format!("10.0.2.{h}"), h * 5 + i as u32, p));
        }
    }
    let log = write_log(dir.path(), "a.log", &lines);
    let out = dir.path().join("out");
    let o = sessionlens(&["sweep", "--input", s(&log), "--output-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.contains("separation_collapsed")), "{csv}");
}

#[test]
fn fixture_sweep_picks_two_in_both_series() {
    let dir = TempDir::new().unwrap();
    let log = fixture(dir.path());
    assert!(dir.path().join("fixture.log.truth.csv").is_file());
    let out = dir.path().join("out");
    let text = ok(sessionlens(&["sweep", "--input", s(&log), "--output-dir", s(&out)]));
    assert!(text.contains("best_k weighted=2, unweighted=2"), "{text}");
    assert!(text.contains("lower S at optimum: weighted"), "{text}");
    assert_eq!(fs::read_to_string(out.join("sweep_summary.txt")).unwrap(), text);
}

#[test]
fn single_k_sweep_writes_one_row() {
    let dir = TempDir::new().unwrap();
    let log = fixture(dir.path());
    let out = dir.path().join("out");
    ok(sessionlens(&["sweep", "--input", s(&log), "--output-dir", s(&out), "--k-min", "2", "--k-max", "2"]));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2, "{csv}");
    assert!(csv.lines().nth(1).unwrap().starts_with("2,"));
}

#[test]
fn cluster_at_two_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let log = fixture(dir.path());
    let runs: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            ok(sessionlens(&["cluster", "--input", s(&log), "--output-dir", s(&out), "--k", "2"]));
            fs::read(out.join("clusters_k2_weighted.json")).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    let text = String::from_utf8(runs[0].clone()).unwrap();
    let centers = text.split("\"centers\"").nth(1).unwrap().split("\"sessions\"").next().unwrap();
    // two center rows, each opened by `[` on its own line
    assert_eq!(centers.lines().filter(|l| l.trim() == "[").count(), 2, "{centers}");
}

#[test]
fn stages_compose_like_one_invocation() {
    let dir = TempDir::new().unwrap();
    let log = fixture(dir.path());
    let (staged, single) = (dir.path().join("staged"), dir.path().join("single"));
    ok(sessionlens(&["preprocess", "--input", s(&log), "--output-dir", s(&staged)]));
    ok(sessionlens(&["weigh", "--output-dir", s(&staged)]));
    ok(sessionlens(&["sweep", "--output-dir", s(&staged), "--threads", "2"]));
    ok(sessionlens(&["sweep", "--input", s(&log), "--output-dir", s(&single)]));

    let mut names: Vec<String> = fs::read_dir(&single).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    let mut staged_names: Vec<String> = fs::read_dir(&staged).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    staged_names.sort();
    assert_eq!(names, staged_names);
    assert!(names.len() >= 13, "{names:?}");
    for f in &names {
        assert_eq!(fs::read(single.join(f)).unwrap(), fs::read(staged.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn histogram_counts_support_one_urls() {
    let dir = TempDir::new().unwrap();
    let mut lines = Vec::new();
    for h in 0..4u32 {
        for (i, p) in ["/a.html", "/b.html"].iter().enumerate() {
            lines.push(hit(&format!("10.0.3.{h}"), h * 5 + i as u32, p));
        }
    }
    for (h, p) in ["/x.html", "/y.html", "/z.html"].iter().enumerate() {
        lines.push(hit(&format!("10.0.3.{h}"), h as u32 * 5 + 2, p));
    }
    let log = write_log(dir.path(), "a.log", &lines);
    let out = dir.path().join("out");
    ok(sessionlens(&["weigh", "--input", s(&log), "--output-dir", s(&out)]));
    let hist = fs::read_to_string(out.join("weight_histogram.csv")).unwrap();
    assert!(hist.lines().any(|l| l == "url,0,3"), "{hist}");

    let out0 = dir.path().join("out0");
    ok(sessionlens(&["weigh", "--input", s(&log), "--output-dir", s(&out0), "--alpha1", "0"]));
    let hist = fs::read_to_string(out0.join("weight_histogram.csv")).unwrap();
    assert!(!hist.lines().any(|l| l.starts_with("url,0,")), "{hist}");
}

#[test]
fn threads_env_is_validated() {
    let dir = TempDir::new().unwrap();
    let log = write_log(dir.path(), "a.log", &forty_lines());
    let o = Command::new(env!("CARGO_BIN_EXE_sessionlens"))
        .args(["sweep", "--input", s(&log), "--output-dir", s(dir.path())])
        .env("SESSIONLENS_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("threads"));
}

#[test]
fn stage_without_inputs_exits_2() {
    let dir = TempDir::new().unwrap();
    let o = sessionlens(&["sweep", "--output-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}
